// Copyright 2026 The singval Authors
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

namespace singval {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An ensemble or solver parameter is outside its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// A caller passed an argument that violates an operation's precondition.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Input data is malformed (non-finite entries, wrong shape).
class DataError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Samples from different ensembles were mixed where one ensemble is required.
class ProvenanceError : public Error {
 public:
  using Error::Error;
};

class NormalizationError : public Error {
 public:
  using Error::Error;
};

/// A grid or experiment configuration lies outside the admissible domain.
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

/// A covariance operator fell below its positive-definiteness floor.
class DefinitenessError : public Error {
 public:
  DefinitenessError(const std::string& what, double min_eigenvalue)
      : Error(what), min_eigenvalue_(min_eigenvalue) {}
  double min_eigenvalue() const noexcept { return min_eigenvalue_; }

 private:
  double min_eigenvalue_;
};

/// An iterative solver failed to reach its tolerance.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, double last_defect)
      : Error(what), last_defect_(last_defect) {}
  double last_defect() const noexcept { return last_defect_; }

 private:
  double last_defect_;
};

/// The adaptive SDE integrator could not find an admissible step above dt_min.
class StiffnessError : public Error {
 public:
  StiffnessError(const std::string& what, double time, double dt)
      : Error(what), time_(time), dt_(dt) {}
  double time() const noexcept { return time_; }
  double dt() const noexcept { return dt_; }

 private:
  double time_;
  double dt_;
};

}  // namespace singval
