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

#include <stdexcept>
#include <string>

namespace qmeas {

/// Base class for all qmeas errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Matrix/vector dimensions incompatible with the requested operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An operator violates a required structural property (hermiticity,
/// unitarity, positivity, unit trace, ...).
class OperatorError : public Error {
 public:
  using Error::Error;
};

/// An OutcomeSet or OutcomeCorrespondence was used with an object it does
/// not belong to.
class OwnershipError : public Error {
 public:
  using Error::Error;
};

/// A pair of observables required to commute does not.
class CommutationError : public Error {
 public:
  using Error::Error;
};

/// A measuring interaction acts nontrivially on a subsystem it was declared
/// not to touch.
class LocalityError : public Error {
 public:
  using Error::Error;
};

/// A measurement model does not reproduce the Born statistics of its
/// declared observable under the given outcome correspondence.
class MeasurementError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition of an operation is violated.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Scenario file could not be loaded or validated (CLI exit code 2).
class ScenarioError : public Error {
 public:
  using Error::Error;
};

}  // namespace qmeas
