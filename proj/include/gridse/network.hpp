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

#include <complex>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace gridse {

/// A network bus. `id` is the internal 0-based index assigned by document
/// order at load time; `name` carries the case file's label.
struct Bus {
  int id = 0;
  std::string name;
};

/// One two-port pi-model branch. All quantities in p.u.; the transformer
/// (tap_ratio, phase_shift) always sits on the `from_bus` side. A plain
/// line is tap_ratio = 1, phase_shift = 0.
struct Branch {
  int from_bus = 0;
  int to_bus = 0;
  double g = 0.0;            ///< series conductance
  double b = 0.0;            ///< series susceptance
  double b_shunt_half = 0.0; ///< half of the total charging susceptance
  double tap_ratio = 1.0;    ///< tap ratio magnitude, > 0
  double phase_shift = 0.0;  ///< phase shift angle [rad]
};

/// Real coefficients of the linear branch-current measurement functions.
/// q..p belong to the from-side current, z_c/e_c to the to-side current.
struct BranchCoefficients {
  double q, w, r, t, u, p;
  double z_c, e_c;
};

/// q = g/tau^2, w = (b + b_s)/tau^2, r = (g/tau) cos(phi),
/// t = (b/tau) sin(phi), u = (b/tau) cos(phi), p = (g/tau) sin(phi),
/// z_c = g, e_c = b + b_s.
[[nodiscard]] BranchCoefficients branch_coefficients(const Branch& branch);

/// Terminal currents (I_from_to, I_to_from) of the unified branch model
/// evaluated at the given terminal voltages.
[[nodiscard]] std::pair<std::complex<double>, std::complex<double>>
branch_currents(const Branch& branch, std::complex<double> v_from,
                std::complex<double> v_to);

/// Immutable bus/branch model of a power network. Validated on
/// construction: contiguous bus indexing, resolvable branch endpoints,
/// positive tap ratios, and a connected branch graph.
class PowerNetwork {
 public:
  PowerNetwork(std::vector<Bus> buses, std::vector<Branch> branches);

  /// Parses the hierarchical case document (see docs/formats.md).
  /// Bus labels are mapped to internal indices by document order.
  static PowerNetwork from_json(const nlohmann::json& doc);
  static PowerNetwork load(const std::filesystem::path& path);

  [[nodiscard]] nlohmann::json to_json() const;
  void save(const std::filesystem::path& path) const;

  [[nodiscard]] int bus_count() const { return static_cast<int>(buses_.size()); }
  [[nodiscard]] int branch_count() const { return static_cast<int>(branches_.size()); }
  [[nodiscard]] const std::vector<Bus>& buses() const { return buses_; }
  [[nodiscard]] const std::vector<Branch>& branches() const { return branches_; }
  [[nodiscard]] const Branch& branch(int index) const;

  /// Branch indices incident to `bus`.
  [[nodiscard]] const std::vector<int>& incident_branches(int bus) const;

  /// Bus indices adjacent to `bus` (deduplicated, sorted).
  [[nodiscard]] const std::vector<int>& adjacent_buses(int bus) const;

  /// FNV-1a hash of the canonical serialization; used by dataset headers
  /// to pin the network a dataset was generated from.
  [[nodiscard]] std::uint64_t content_hash() const;

 private:
  void validate_and_index();

  std::vector<Bus> buses_;
  std::vector<Branch> branches_;
  std::vector<std::vector<int>> incident_;
  std::vector<std::vector<int>> adjacent_;
};

}  // namespace gridse
