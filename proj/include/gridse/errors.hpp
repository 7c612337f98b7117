// Copyright 2026 The gridse authors
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

namespace gridse {

/// Malformed input documents (case files, placements, configs).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Structurally valid input that violates a domain invariant
/// (dangling branch endpoint, disconnected network, bad reference).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failures (non-finite loss, failed factorization).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Unobservable measurement system: the gain matrix H^T Sigma^-1 H is
/// singular. Carries the column-rank deficiency of H.
class SingularGainError : public NumericalError {
 public:
  SingularGainError(const std::string& what, int rank_deficiency)
      : NumericalError(what), rank_deficiency_(rank_deficiency) {}

  [[nodiscard]] int rank_deficiency() const { return rank_deficiency_; }

 private:
  int rank_deficiency_;
};

}  // namespace gridse
