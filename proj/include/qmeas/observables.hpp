// Copyright 2026 The qmeas authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "qmeas/linalg.hpp"
#include "qmeas/states.hpp"

namespace qmeas {

class Observable;

/// A finite subset of an observable's spectrum, identified by spectrum
/// indices. Stands in for a Borel set: only the intersection of a Borel set
/// with the (finite) spectrum ever matters.
class OutcomeSet {
 public:
  const std::vector<int>& indices() const { return indices_; }
  std::uint64_t owner_id() const { return owner_id_; }
  int owner_outcome_count() const {
    return static_cast<int>(spectrum_->size());
  }

  std::vector<double> values() const {
    std::vector<double> out;
    out.reserve(indices_.size());
    for (int i : indices_) out.push_back((*spectrum_)[static_cast<std::size_t>(i)]);
    return out;
  }

  bool contains(int index) const {
    return std::binary_search(indices_.begin(), indices_.end(), index);
  }

  bool empty() const { return indices_.empty(); }
  bool is_full() const {
    return indices_.size() == spectrum_->size();
  }

  OutcomeSet complement() const {
    std::vector<int> rest;
    for (int i = 0; i < owner_outcome_count(); ++i) {
      if (!contains(i)) rest.push_back(i);
    }
    return OutcomeSet(owner_id_, spectrum_, std::move(rest));
  }

  OutcomeSet set_union(const OutcomeSet& other) const {
    require_same_owner(other);
    std::vector<int> merged;
    std::set_union(indices_.begin(), indices_.end(), other.indices_.begin(),
                   other.indices_.end(), std::back_inserter(merged));
    return OutcomeSet(owner_id_, spectrum_, std::move(merged));
  }

  OutcomeSet set_intersection(const OutcomeSet& other) const {
    require_same_owner(other);
    std::vector<int> common;
    std::set_intersection(indices_.begin(), indices_.end(),
                          other.indices_.begin(), other.indices_.end(),
                          std::back_inserter(common));
    return OutcomeSet(owner_id_, spectrum_, std::move(common));
  }

 private:
  friend class Observable;

  OutcomeSet(std::uint64_t owner_id,
             std::shared_ptr<const std::vector<double>> spectrum,
             std::vector<int> indices)
      : owner_id_(owner_id),
        spectrum_(std::move(spectrum)),
        indices_(std::move(indices)) {
    std::sort(indices_.begin(), indices_.end());
    indices_.erase(std::unique(indices_.begin(), indices_.end()),
                   indices_.end());
    for (int i : indices_) {
      if (i < 0 || static_cast<std::size_t>(i) >= spectrum_->size()) {
        throw DimensionError("OutcomeSet: spectrum index out of range");
      }
    }
  }

  void require_same_owner(const OutcomeSet& other) const {
    if (owner_id_ != other.owner_id_) {
      throw OwnershipError("OutcomeSet: operands belong to different observables");
    }
  }

  std::uint64_t owner_id_;
  std::shared_ptr<const std::vector<double>> spectrum_;
  std::vector<int> indices_;
};

namespace detail {

/// All subsets of {0..k-1} when 2^k stays small; otherwise the empty set,
/// the singletons, their complements, and the full set. Order is fixed so
/// every caller enumerates deterministically.
inline std::vector<std::vector<int>> index_subsets(int k,
                                                   int max_exhaustive = 10) {
  std::vector<std::vector<int>> out;
  if (k <= max_exhaustive) {
    const std::uint64_t total = 1ull << k;
    out.reserve(total);
    for (std::uint64_t mask = 0; mask < total; ++mask) {
      std::vector<int> subset;
      for (int i = 0; i < k; ++i) {
        if (mask & (1ull << i)) subset.push_back(i);
      }
      out.push_back(std::move(subset));
    }
    return out;
  }
  out.push_back({});
  std::vector<int> full;
  for (int i = 0; i < k; ++i) full.push_back(i);
  for (int i = 0; i < k; ++i) {
    out.push_back({i});
    std::vector<int> co;
    for (int j = 0; j < k; ++j) {
      if (j != i) co.push_back(j);
    }
    out.push_back(std::move(co));
  }
  out.push_back(std::move(full));
  return out;
}

inline std::atomic<std::uint64_t>& observable_id_counter() {
  static std::atomic<std::uint64_t> counter{1};
  return counter;
}

}  // namespace detail

/// A Hermitian operator together with its cached spectral decomposition.
/// Copies share the identity of the original, so outcome sets built from one
/// copy are valid for all of them.
class Observable {
 public:
  explicit Observable(cmat h, const Tolerance& tol = {})
      : op_(std::move(h)), id_(detail::observable_id_counter()++) {
    auto pairs = eig_hermitian(op_, tol);  // validates hermiticity
    auto spectrum = std::make_shared<std::vector<double>>();
    auto projectors = std::make_shared<std::vector<cmat>>();
    spectrum->reserve(pairs.size());
    projectors->reserve(pairs.size());
    for (auto& p : pairs) {
      spectrum->push_back(p.eigenvalue);
      projectors->push_back(std::move(p.projector));
    }
    spectrum_ = std::move(spectrum);
    projectors_ = std::move(projectors);
  }

  int dim() const { return static_cast<int>(op_.rows()); }
  const cmat& op() const { return op_; }
  const std::vector<double>& spectrum() const { return *spectrum_; }
  const std::vector<cmat>& projectors() const { return *projectors_; }
  int n_outcomes() const { return static_cast<int>(spectrum_->size()); }
  std::uint64_t id() const { return id_; }

  OutcomeSet outcome_set(std::vector<int> indices) const {
    return OutcomeSet(id_, spectrum_, std::move(indices));
  }

  OutcomeSet singleton(int index) const { return outcome_set({index}); }

  OutcomeSet empty_set() const { return outcome_set({}); }

  OutcomeSet full_set() const {
    std::vector<int> all(spectrum_->size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    return outcome_set(std::move(all));
  }

  /// Index of the spectrum point nearest to v, required to match within
  /// eig_cluster_tol.
  int index_of_value(double v, const Tolerance& tol = {}) const {
    int best = -1;
    double best_gap = 0.0;
    for (std::size_t i = 0; i < spectrum_->size(); ++i) {
      double gap = std::abs((*spectrum_)[i] - v);
      if (best < 0 || gap < best_gap) {
        best = static_cast<int>(i);
        best_gap = gap;
      }
    }
    if (best < 0 || best_gap > tol.eig_cluster_tol) {
      throw PreconditionError("Observable: value is not in the spectrum");
    }
    return best;
  }

  OutcomeSet set_of_values(const std::vector<double>& values,
                           const Tolerance& tol = {}) const {
    std::vector<int> indices;
    indices.reserve(values.size());
    for (double v : values) indices.push_back(index_of_value(v, tol));
    return outcome_set(std::move(indices));
  }

  std::vector<OutcomeSet> all_outcome_sets(int max_exhaustive = 10) const {
    std::vector<OutcomeSet> out;
    for (auto& idx : detail::index_subsets(n_outcomes(), max_exhaustive)) {
      out.push_back(outcome_set(std::move(idx)));
    }
    return out;
  }

 private:
  cmat op_;
  std::shared_ptr<const std::vector<double>> spectrum_;
  std::shared_ptr<const std::vector<cmat>> projectors_;
  std::uint64_t id_;
};

/// Spectral projection E^A(s) = sum of the projectors of the outcomes in s.
inline cmat spectral_projector(const Observable& a, const OutcomeSet& s) {
  if (s.owner_id() != a.id()) {
    throw OwnershipError("spectral_projector: outcome set belongs to another observable");
  }
  cmat e = cmat::Zero(a.dim(), a.dim());
  for (int i : s.indices()) e += a.projectors()[static_cast<std::size_t>(i)];
  return e;
}

/// Born probability Tr[E^A(s) rho], clamped to [0, 1].
inline double born_probability(const Observable& a, const OutcomeSet& s,
                               const DensityOperator& rho) {
  if (rho.dim() != a.dim()) {
    throw DimensionError("born_probability: state and observable dimensions differ");
  }
  double p = (spectral_projector(a, s) * rho.matrix()).trace().real();
  return std::clamp(p, 0.0, 1.0);
}

/// Both commutation probes: the operator-level commutator norm and the
/// worst pairwise projector commutator norm. The operator-level verdict is
/// authoritative; the projector probe is kept for cross-validation.
struct CommutationProbe {
  double operator_commutator_norm;
  double projector_commutator_norm;
  bool operator_verdict;
  bool projector_verdict;
};

inline CommutationProbe commutation_probe(const Observable& a,
                                          const Observable& b,
                                          const Tolerance& tol = {}) {
  if (a.dim() != b.dim()) {
    throw DimensionError("commutes: observables have different dimensions");
  }
  CommutationProbe probe{};
  probe.operator_commutator_norm = op_norm(a.op() * b.op() - b.op() * a.op());
  probe.projector_commutator_norm = 0.0;
  for (const cmat& p : a.projectors()) {
    for (const cmat& q : b.projectors()) {
      probe.projector_commutator_norm =
          std::max(probe.projector_commutator_norm, op_norm(p * q - q * p));
    }
  }
  probe.operator_verdict = probe.operator_commutator_norm <= tol.eq_tol;
  probe.projector_verdict = probe.projector_commutator_norm <= tol.eq_tol;
  return probe;
}

inline bool commutes(const Observable& a, const Observable& b,
                     const Tolerance& tol = {}) {
  return commutation_probe(a, b, tol).operator_verdict;
}

/// Joint probability Tr[E^A(s) E^B(s2) rho] for commuting observables.
/// Refuses non-commuting pairs instead of returning the complex trace.
inline double joint_probability_commuting(const Observable& a,
                                          const OutcomeSet& s,
                                          const Observable& b,
                                          const OutcomeSet& s2,
                                          const DensityOperator& rho,
                                          const Tolerance& tol = {}) {
  if (a.dim() != rho.dim() || b.dim() != rho.dim()) {
    throw DimensionError("joint_probability_commuting: dimension mismatch");
  }
  if (!commutes(a, b, tol)) {
    throw CommutationError("joint_probability_commuting: observables do not commute");
  }
  return (spectral_projector(a, s) * spectral_projector(b, s2) * rho.matrix())
      .trace()
      .real();
}

/// Common refinement of a commuting pair: an observable C with functions
/// f, g on its spectrum such that f(C) = A and g(C) = B. Measuring C and
/// post-processing through f and g reproduces the joint statistics of the
/// pair.
class JointRefinement {
 public:
  const Observable& c() const { return c_; }
  const std::vector<double>& f() const { return f_; }
  const std::vector<double>& g() const { return g_; }

  cmat f_operator() const { return apply_function(f_); }
  cmat g_operator() const { return apply_function(g_); }

  /// Outcomes of C whose f-value lies in sa and whose g-value lies in sb.
  OutcomeSet joint_outcomes(const OutcomeSet& sa, const OutcomeSet& sb,
                            const Tolerance& tol = {}) const {
    if (sa.owner_id() != a_id_ || sb.owner_id() != b_id_) {
      throw OwnershipError("JointRefinement: outcome sets belong to other observables");
    }
    auto in_values = [&tol](double v, const std::vector<double>& vals) {
      for (double w : vals) {
        if (std::abs(v - w) <= tol.eig_cluster_tol) return true;
      }
      return false;
    };
    const std::vector<double> a_vals = sa.values();
    const std::vector<double> b_vals = sb.values();
    std::vector<int> indices;
    for (int k = 0; k < c_.n_outcomes(); ++k) {
      if (in_values(f_[static_cast<std::size_t>(k)], a_vals) &&
          in_values(g_[static_cast<std::size_t>(k)], b_vals)) {
        indices.push_back(k);
      }
    }
    return c_.outcome_set(std::move(indices));
  }

 private:
  friend JointRefinement joint_refinement(const Observable&, const Observable&,
                                          const Tolerance&);

  JointRefinement(Observable c, std::vector<double> f, std::vector<double> g,
                  std::uint64_t a_id, std::uint64_t b_id)
      : c_(std::move(c)), f_(std::move(f)), g_(std::move(g)),
        a_id_(a_id), b_id_(b_id) {}

  cmat apply_function(const std::vector<double>& values) const {
    cmat out = cmat::Zero(c_.dim(), c_.dim());
    for (int k = 0; k < c_.n_outcomes(); ++k) {
      out += values[static_cast<std::size_t>(k)] *
             c_.projectors()[static_cast<std::size_t>(k)];
    }
    return out;
  }

  Observable c_;
  std::vector<double> f_;
  std::vector<double> g_;
  std::uint64_t a_id_;
  std::uint64_t b_id_;
};

/// Builds the joint refinement of a commuting pair from the nonzero products
/// P^A_i P^B_j (the joint eigenspaces). C's eigenvalues are the enumeration
/// indices of those products in (i, j) order; the actual values carry no
/// meaning, only f and g do.
inline JointRefinement joint_refinement(const Observable& a,
                                        const Observable& b,
                                        const Tolerance& tol = {}) {
  if (a.dim() != b.dim()) {
    throw DimensionError("joint_refinement: observables have different dimensions");
  }
  if (!commutes(a, b, tol)) {
    throw CommutationError("joint_refinement: observables do not commute");
  }
  cmat c_op = cmat::Zero(a.dim(), a.dim());
  std::vector<double> f;
  std::vector<double> g;
  int next_label = 0;
  for (int i = 0; i < a.n_outcomes(); ++i) {
    for (int j = 0; j < b.n_outcomes(); ++j) {
      cmat q = a.projectors()[static_cast<std::size_t>(i)] *
               b.projectors()[static_cast<std::size_t>(j)];
      if (op_norm(q) <= tol.eq_tol) continue;  // empty joint eigenspace
      q = (q + q.adjoint()) / 2.0;
      c_op += static_cast<double>(next_label) * q;
      f.push_back(a.spectrum()[static_cast<std::size_t>(i)]);
      g.push_back(b.spectrum()[static_cast<std::size_t>(j)]);
      ++next_label;
    }
  }
  Observable c(std::move(c_op), tol);
  if (c.n_outcomes() != next_label) {
    throw OperatorError("joint_refinement: refinement projectors are not orthogonal");
  }
  JointRefinement out(std::move(c), std::move(f), std::move(g), a.id(), b.id());
  if (op_norm(out.f_operator() - a.op()) > tol.eq_tol ||
      op_norm(out.g_operator() - b.op()) > tol.eq_tol) {
    throw OperatorError("joint_refinement: reconstruction failed");
  }
  return out;
}

}  // namespace qmeas
