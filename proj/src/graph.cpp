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

#include "gridse/graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <sstream>

#include "gridse/errors.hpp"

namespace gridse {

std::vector<std::uint8_t> binary_encode(int index, int length) {
  if (length < 1) throw DataError("binary encoding length must be >= 1");
  if (index < 0 || (length < 31 && index >= (1 << length)))
    throw DataError("index " + std::to_string(index) +
                    " out of range for " + std::to_string(length) + " bits");
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(length));
  for (int i = 0; i < length; ++i)
    bits[static_cast<std::size_t>(length - 1 - i)] =
        static_cast<std::uint8_t>((index >> i) & 1);
  return bits;
}

int variable_feature_width(int bus_count) {
  const int states = 2 * bus_count;
  int width = 1;
  while ((1 << width) < states) ++width;
  return width;
}

std::array<double, kFactorFeatureWidth> factor_features(
    const MeasurementDescriptor& desc, const RectangularMoments& moments,
    int component) {
  const bool is_voltage = desc.kind == PhasorKind::BusVoltage;
  const bool real_part = component == 0;
  return {real_part ? moments.re : moments.im,
          real_part ? moments.var_re : moments.var_im,
          moments.cov_re_im,
          is_voltage ? 1.0 : 0.0,
          is_voltage ? 0.0 : 1.0,
          real_part ? 1.0 : 0.0};
}

AugmentedFactorGraph AugmentedFactorGraph::build(const PowerNetwork& net,
                                                 const MeasurementSystem& sys) {
  AugmentedFactorGraph g;
  const int n = net.bus_count();
  const int num_vars = 2 * n;
  const int width = variable_feature_width(n);

  g.variable_nodes_.reserve(static_cast<std::size_t>(num_vars));
  for (int s = 0; s < num_vars; ++s)
    g.variable_nodes_.push_back({s, s, binary_encode(s, width)});

  // H-row nonzero columns (H is column-major; bucket by row once)
  std::vector<std::vector<int>> row_cols(static_cast<std::size_t>(sys.k()));
  for (int col = 0; col < sys.H.outerSize(); ++col)
    for (Eigen::SparseMatrix<double>::InnerIterator it(sys.H, col); it; ++it)
      if (it.value() != 0.0)
        row_cols[static_cast<std::size_t>(it.row())].push_back(
            static_cast<int>(it.col()));
  for (auto& cols : row_cols) std::sort(cols.begin(), cols.end());

  g.phasor_first_node_.assign(static_cast<std::size_t>(sys.phasor_count()), -1);
  for (int p = 0; p < sys.phasor_count(); ++p) {
    g.phasor_first_node_[static_cast<std::size_t>(p)] =
        static_cast<int>(g.factor_nodes_.size());
    for (int component = 0; component < 2; ++component) {
      FactorNode node;
      node.id = num_vars + 2 * p + component;
      node.phasor_index = p;
      node.component = component;
      node.features = factor_features(sys.phasors[static_cast<std::size_t>(p)],
                                      sys.moments[static_cast<std::size_t>(p)],
                                      component);
      g.factor_nodes_.push_back(node);
      for (int col : row_cols[static_cast<std::size_t>(2 * p + component)])
        g.fv_edges_.emplace_back(node.id, col);
    }
  }

  // vv augmentation from the physical topology: the Re/Im pair of every
  // bus, and all four cross pairs of every adjacent bus pair
  std::set<std::pair<int, int>> vv;
  auto add_vv = [&vv](int a, int b) {
    if (a != b) vv.insert({std::min(a, b), std::max(a, b)});
  };
  for (int bus = 0; bus < n; ++bus) add_vv(bus, n + bus);
  for (const Branch& br : net.branches()) {
    const int i = br.from_bus;
    const int j = br.to_bus;
    add_vv(i, j);
    add_vv(i, n + j);
    add_vv(n + i, j);
    add_vv(n + i, n + j);
  }
  g.vv_edges_.assign(vv.begin(), vv.end());
  return g;
}

AugmentedFactorGraph AugmentedFactorGraph::remove_phasor(
    int phasor_index) const {
  return remove_phasors({phasor_index});
}

AugmentedFactorGraph AugmentedFactorGraph::remove_phasors(
    const std::vector<int>& phasor_indices) const {
  std::set<int> to_remove;
  for (int p : phasor_indices) {
    if (p < 0 || p >= static_cast<int>(phasor_first_node_.size()) ||
        phasor_first_node_[static_cast<std::size_t>(p)] < 0)
      throw DataError("unknown phasor index " + std::to_string(p));
    to_remove.insert(p);
  }
  AugmentedFactorGraph g;
  g.variable_nodes_ = variable_nodes_;
  g.vv_edges_ = vv_edges_;
  g.phasor_first_node_ = phasor_first_node_;
  std::set<int> removed_ids;
  for (const FactorNode& node : factor_nodes_) {
    if (to_remove.count(node.phasor_index)) {
      removed_ids.insert(node.id);
      g.phasor_first_node_[static_cast<std::size_t>(node.phasor_index)] = -1;
    } else {
      g.factor_nodes_.push_back(node);
    }
  }
  // re-point surviving phasors at their new positions
  for (std::size_t i = 0; i < g.factor_nodes_.size(); ++i) {
    const FactorNode& node = g.factor_nodes_[i];
    if (node.component == 0)
      g.phasor_first_node_[static_cast<std::size_t>(node.phasor_index)] =
          static_cast<int>(i);
  }
  for (const auto& edge : fv_edges_)
    if (!removed_ids.count(edge.first)) g.fv_edges_.push_back(edge);
  return g;
}

void AugmentedFactorGraph::set_phasor_features(
    const std::vector<RectangularMoments>& moments) {
  for (FactorNode& node : factor_nodes_) {
    if (node.phasor_index >= static_cast<int>(moments.size()))
      throw DataError("moment list shorter than graph phasor indices");
    MeasurementDescriptor desc;
    desc.kind = node.features[3] > 0.5 ? PhasorKind::BusVoltage
                                       : PhasorKind::BranchCurrentFrom;
    node.features = factor_features(
        desc, moments[static_cast<std::size_t>(node.phasor_index)],
        node.component);
  }
}

bool AugmentedFactorGraph::has_node(int node_id) const {
  if (node_id >= 0 && node_id < variable_count()) return true;
  return std::any_of(factor_nodes_.begin(), factor_nodes_.end(),
                     [node_id](const FactorNode& f) { return f.id == node_id; });
}

namespace {

std::map<int, std::vector<int>> build_adjacency(
    const std::vector<std::pair<int, int>>& fv,
    const std::vector<std::pair<int, int>>& vv,
    const std::vector<VariableNode>& vars,
    const std::vector<FactorNode>& factors) {
  std::map<int, std::vector<int>> adj;
  for (const VariableNode& v : vars) adj[v.id];
  for (const FactorNode& f : factors) adj[f.id];
  for (const auto& [f, v] : fv) {
    adj[f].push_back(v);
    adj[v].push_back(f);
  }
  for (const auto& [a, b] : vv) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  return adj;
}

}  // namespace

std::set<int> AugmentedFactorGraph::k_hop_neighbourhood(
    const std::set<int>& seeds, int k) const {
  if (k < 0) throw DataError("neighbourhood radius must be >= 0");
  for (int s : seeds)
    if (!has_node(s)) throw DataError("unknown node id " + std::to_string(s));
  const auto adj =
      build_adjacency(fv_edges_, vv_edges_, variable_nodes_, factor_nodes_);
  std::set<int> visited = seeds;
  std::vector<int> frontier(seeds.begin(), seeds.end());
  for (int depth = 0; depth < k && !frontier.empty(); ++depth) {
    std::vector<int> next;
    for (int u : frontier) {
      const auto it = adj.find(u);
      if (it == adj.end()) continue;
      for (int v : it->second)
        if (visited.insert(v).second) next.push_back(v);
    }
    frontier = std::move(next);
  }
  return visited;
}

std::set<int> AugmentedFactorGraph::k_hop_neighbourhood(int node_id,
                                                        int k) const {
  return k_hop_neighbourhood(std::set<int>{node_id}, k);
}

bool AugmentedFactorGraph::variable_subgraph_connected() const {
  if (variable_nodes_.empty()) return true;
  std::map<int, std::vector<int>> adj;
  for (const VariableNode& v : variable_nodes_) adj[v.id];
  for (const auto& [a, b] : vv_edges_) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::set<int> visited;
  std::queue<int> queue;
  queue.push(variable_nodes_.front().id);
  visited.insert(variable_nodes_.front().id);
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop();
    for (int v : adj[u])
      if (visited.insert(v).second) queue.push(v);
  }
  return visited.size() == variable_nodes_.size();
}

std::string AugmentedFactorGraph::dump() const {
  std::ostringstream out;
  out << "variable_nodes " << variable_nodes_.size() << '\n';
  for (const VariableNode& v : variable_nodes_) {
    out << "v " << v.id << " state " << v.state_index << " bits ";
    for (std::uint8_t bit : v.features) out << static_cast<int>(bit);
    out << '\n';
  }
  out << "factor_nodes " << factor_nodes_.size() << '\n';
  for (const FactorNode& f : factor_nodes_)
    out << "f " << f.id << " phasor " << f.phasor_index << " component "
        << (f.component == 0 ? "re" : "im") << '\n';
  out << "fv_edges " << fv_edges_.size() << '\n';
  for (const auto& [a, b] : fv_edges_) out << "fv " << a << ' ' << b << '\n';
  out << "vv_edges " << vv_edges_.size() << '\n';
  for (const auto& [a, b] : vv_edges_) out << "vv " << a << ' ' << b << '\n';
  return out.str();
}

}  // namespace gridse
