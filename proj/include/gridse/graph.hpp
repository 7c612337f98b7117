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

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "gridse/measurement.hpp"
#include "gridse/network.hpp"

namespace gridse {

/// Width of the factor-node input feature vector:
/// [value, variance, covariance, is_voltage, is_current, is_real].
inline constexpr int kFactorFeatureWidth = 6;

/// One factor node: the Re or Im component of a measurement phasor.
struct FactorNode {
  int id = 0;            ///< graph-node id (2n + 2*phasor + component)
  int phasor_index = 0;
  int component = 0;     ///< 0 = Re, 1 = Im
  std::array<double, kFactorFeatureWidth> features{};
};

/// One variable node: a single rectangular state component.
struct VariableNode {
  int id = 0;              ///< graph-node id == state_index
  int state_index = 0;     ///< in [0, 2n)
  std::vector<std::uint8_t> features;  ///< big-endian binary index encoding
};

/// Big-endian binary encoding of `index` as `length` bits.
[[nodiscard]] std::vector<std::uint8_t> binary_encode(int index, int length);

/// Feature length used for variable nodes: ceil(log2(2n)), at least 1.
[[nodiscard]] int variable_feature_width(int bus_count);

/// Heterogeneous augmented factor graph: factor nodes carry measurement
/// features and connect to the variable nodes of their H-row nonzeros;
/// variable nodes are additionally connected to every variable node
/// within the 2-hop neighbourhood of the physical topology, so the
/// variable subgraph stays connected under measurement loss.
class AugmentedFactorGraph {
 public:
  static AugmentedFactorGraph build(const PowerNetwork& net,
                                    const MeasurementSystem& sys);

  [[nodiscard]] const std::vector<FactorNode>& factor_nodes() const {
    return factor_nodes_;
  }
  [[nodiscard]] const std::vector<VariableNode>& variable_nodes() const {
    return variable_nodes_;
  }
  /// (factor id, variable id) pairs, deterministic order.
  [[nodiscard]] const std::vector<std::pair<int, int>>& fv_edges() const {
    return fv_edges_;
  }
  /// Unordered variable pairs (u < v), deterministic order.
  [[nodiscard]] const std::vector<std::pair<int, int>>& vv_edges() const {
    return vv_edges_;
  }

  [[nodiscard]] int variable_count() const {
    return static_cast<int>(variable_nodes_.size());
  }
  [[nodiscard]] int factor_count() const {
    return static_cast<int>(factor_nodes_.size());
  }

  /// Returns a copy with the phasor's two factor nodes and their incident
  /// fv edges removed; vv edges untouched.
  [[nodiscard]] AugmentedFactorGraph remove_phasor(int phasor_index) const;

  /// Copy with several phasors removed (indices into the original
  /// measurement order; unknown indices are an error).
  [[nodiscard]] AugmentedFactorGraph remove_phasors(
      const std::vector<int>& phasor_indices) const;

  /// Overwrites factor features from per-phasor moments (same descriptor
  /// layout as at build time). Used to reuse one structure across
  /// samples that share a placement.
  void set_phasor_features(const std::vector<RectangularMoments>& moments);

  /// BFS ball of radius `k` over the union of fv and vv edges.
  [[nodiscard]] std::set<int> k_hop_neighbourhood(int node_id, int k) const;
  [[nodiscard]] std::set<int> k_hop_neighbourhood(const std::set<int>& seeds,
                                                  int k) const;

  /// True if every variable node reaches every other through vv edges.
  [[nodiscard]] bool variable_subgraph_connected() const;

  /// Stable text dump (nodes then edges) for golden-file comparisons.
  [[nodiscard]] std::string dump() const;

  [[nodiscard]] bool has_node(int node_id) const;

 private:
  std::vector<FactorNode> factor_nodes_;
  std::vector<VariableNode> variable_nodes_;
  std::vector<std::pair<int, int>> fv_edges_;
  std::vector<std::pair<int, int>> vv_edges_;
  /// phasor index -> position span in factor_nodes_, or -1 if removed
  std::vector<int> phasor_first_node_;
};

/// Factor input features for one phasor component.
[[nodiscard]] std::array<double, kFactorFeatureWidth> factor_features(
    const MeasurementDescriptor& desc, const RectangularMoments& moments,
    int component);

}  // namespace gridse
