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

#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>

#include "gridse/errors.hpp"
#include "gridse/graph.hpp"
#include "gridse/rng.hpp"
#include "gridse/wls.hpp"

using namespace gridse;

namespace {
const std::filesystem::path kDataDir = GRIDSE_DATA_DIR;

StateVector random_state(int n, Rng& rng) {
  Eigen::VectorXd re(n), im(n);
  for (int i = 0; i < n; ++i) {
    const double mag = rng.uniform(0.95, 1.05);
    const double ang = rng.uniform(-0.35, 0.05);
    re[i] = mag * std::cos(ang);
    im[i] = mag * std::sin(ang);
  }
  return StateVector(re, im);
}

/// Fig-2-style toy system: PMU on bus 0 with one voltage and one current
/// phasor on the single branch.
AugmentedFactorGraph toy_graph(const PowerNetwork& net,
                               MeasurementSystem* sys_out = nullptr) {
  PmuPlacement placement;
  placement.pmus.push_back({0, {0}});
  Rng rng(2);
  const StateVector truth = random_state(2, rng);
  const auto meas = simulate_measurements(net, truth, placement,
                                          NoiseSpec::from_variance(1e-5), 3);
  const MeasurementSystem sys = assemble_system(net, meas);
  if (sys_out != nullptr) *sys_out = sys;
  return AugmentedFactorGraph::build(net, sys);
}

}  // namespace

TEST_CASE("binary_encode examples") {
  CHECK(binary_encode(5, 6) == std::vector<std::uint8_t>{0, 0, 0, 1, 0, 1});
  CHECK(binary_encode(0, 1) == std::vector<std::uint8_t>{0});
  CHECK_THROWS_AS((void)binary_encode(2, 1), DataError);
  CHECK_THROWS_AS((void)binary_encode(-1, 4), DataError);
}

TEST_CASE("variable feature width grows logarithmically") {
  CHECK(variable_feature_width(2) == 2);     // 4 states
  CHECK(variable_feature_width(30) == 6);    // 60 states
  CHECK(variable_feature_width(300) == 10);  // 600 states
}

TEST_CASE("two-bus toy graph matches the golden structure") {
  const PowerNetwork net = PowerNetwork::load(kDataDir / "cases/toy2.json");
  const AugmentedFactorGraph g = toy_graph(net);
  CHECK(g.factor_count() == 4);
  CHECK(g.variable_count() == 4);
  CHECK(g.fv_edges().size() == 10);
  CHECK(g.vv_edges().size() == 6);
  CHECK(g.variable_subgraph_connected());

  // voltage factors touch one variable, current factors four
  std::map<int, int> degree;
  for (const auto& [f, v] : g.fv_edges()) ++degree[f];
  CHECK(degree[4] == 1);  // Re voltage factor
  CHECK(degree[5] == 1);  // Im voltage factor
  CHECK(degree[6] == 4);  // Re current factor
  CHECK(degree[7] == 4);  // Im current factor
}

TEST_CASE("toy graph dump is stable") {
  const PowerNetwork net = PowerNetwork::load(kDataDir / "cases/toy2.json");
  const AugmentedFactorGraph g = toy_graph(net);
  const std::string dump = g.dump();
  const char* expected =
      "variable_nodes 4\n"
      "v 0 state 0 bits 00\n"
      "v 1 state 1 bits 01\n"
      "v 2 state 2 bits 10\n"
      "v 3 state 3 bits 11\n"
      "factor_nodes 4\n"
      "f 4 phasor 0 component re\n"
      "f 5 phasor 0 component im\n"
      "f 6 phasor 1 component re\n"
      "f 7 phasor 1 component im\n"
      "fv_edges 10\n"
      "fv 4 0\n"
      "fv 5 2\n"
      "fv 6 0\n"
      "fv 6 1\n"
      "fv 6 2\n"
      "fv 6 3\n"
      "fv 7 0\n"
      "fv 7 1\n"
      "fv 7 2\n"
      "fv 7 3\n"
      "vv_edges 6\n"
      "vv 0 1\n"
      "vv 0 2\n"
      "vv 0 3\n"
      "vv 1 2\n"
      "vv 1 3\n"
      "vv 2 3\n";
  CHECK(dump == expected);
}

TEST_CASE("IEEE 30 with the reference placement: 100 factors, 60 variables") {
  const PowerNetwork net = PowerNetwork::load(kDataDir / "cases/ieee30.json");
  const PmuPlacement placement =
      PmuPlacement::load(kDataDir / "placements/ieee30_ref.json");
  Rng rng(4);
  const StateVector truth = random_state(30, rng);
  const auto meas = simulate_measurements(net, truth, placement,
                                          NoiseSpec::from_variance(1e-5), 5);
  const AugmentedFactorGraph g =
      AugmentedFactorGraph::build(net, assemble_system(net, meas));
  CHECK(g.factor_count() == 100);
  CHECK(g.variable_count() == 60);
}

TEST_CASE("empty measurement set keeps the vv augmentation") {
  const PowerNetwork net = PowerNetwork::load(kDataDir / "cases/toy2.json");
  const MeasurementSystem sys = assemble_system(net, {});
  const AugmentedFactorGraph g = AugmentedFactorGraph::build(net, sys);
  CHECK(g.factor_count() == 0);
  CHECK(g.vv_edges().size() == 6);
  CHECK(g.variable_subgraph_connected());
}

TEST_CASE("remove_phasor drops both factor nodes and their edges") {
  const PowerNetwork net = PowerNetwork::load(kDataDir / "cases/toy2.json");
  const AugmentedFactorGraph g = toy_graph(net);
  const AugmentedFactorGraph without_current = g.remove_phasor(1);
  CHECK(without_current.factor_count() == 2);
  CHECK(without_current.fv_edges().size() == 2);
  CHECK(without_current.vv_edges().size() == 6);
  CHECK(without_current.variable_subgraph_connected());

  const AugmentedFactorGraph empty = without_current.remove_phasor(0);
  CHECK(empty.factor_count() == 0);
  CHECK(empty.variable_subgraph_connected());

  CHECK_THROWS_AS((void)g.remove_phasor(2), DataError);
  // removing twice is an error: the phasor no longer exists
  CHECK_THROWS_AS((void)without_current.remove_phasor(1), DataError);
}

TEST_CASE("edge set equals the H nonzero pattern on random systems") {
  const PowerNetwork net = PowerNetwork::load(kDataDir / "cases/ieee30.json");
  Rng rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    PmuPlacement placement;
    std::set<int> buses;
    while (buses.size() < 6)
      buses.insert(static_cast<int>(rng.next_u64() % 30));
    for (int b : buses) placement.pmus.push_back({b, net.incident_branches(b)});
    const StateVector truth = random_state(30, rng);
    const auto meas = simulate_measurements(
        net, truth, placement, NoiseSpec::from_variance(1e-4),
        10 + static_cast<std::uint64_t>(trial));
    const MeasurementSystem sys = assemble_system(net, meas);
    const AugmentedFactorGraph g = AugmentedFactorGraph::build(net, sys);

    std::set<std::pair<int, int>> h_pattern;
    for (int col = 0; col < sys.H.outerSize(); ++col)
      for (Eigen::SparseMatrix<double>::InnerIterator it(sys.H, col); it; ++it)
        if (it.value() != 0.0)
          h_pattern.insert(
              {60 + static_cast<int>(it.row()), static_cast<int>(it.col())});
    const std::set<std::pair<int, int>> g_pattern(g.fv_edges().begin(),
                                                  g.fv_edges().end());
    CHECK(g_pattern == h_pattern);
  }
}

TEST_CASE("vv augmentation is exactly the physical 2-hop set") {
  const PowerNetwork net = PowerNetwork::load(kDataDir / "cases/ieee30.json");
  const int n = net.bus_count();
  const MeasurementSystem sys = assemble_system(net, {});
  const AugmentedFactorGraph g = AugmentedFactorGraph::build(net, sys);
  for (const auto& [a, b] : g.vv_edges()) {
    const int bus_a = a % n;
    const int bus_b = b % n;
    if (bus_a == bus_b) continue;  // same-bus Re/Im pair
    const auto& adj = net.adjacent_buses(bus_a);
    CHECK(std::find(adj.begin(), adj.end(), bus_b) != adj.end());
  }
  std::set<std::pair<int, int>> expected;
  for (int bus = 0; bus < n; ++bus) expected.insert({bus, n + bus});
  auto norm = [](int x, int y) {
    return std::make_pair(std::min(x, y), std::max(x, y));
  };
  for (const Branch& br : net.branches()) {
    const int i = br.from_bus, j = br.to_bus;
    expected.insert(norm(i, j));
    expected.insert(norm(i, n + j));
    expected.insert(norm(n + i, j));
    expected.insert(norm(n + i, n + j));
  }
  const std::set<std::pair<int, int>> actual(g.vv_edges().begin(),
                                             g.vv_edges().end());
  CHECK(actual == expected);
}

TEST_CASE("variable subgraph stays connected under any factor loss") {
  const PowerNetwork net = PowerNetwork::load(kDataDir / "cases/ieee30.json");
  const PmuPlacement placement =
      PmuPlacement::load(kDataDir / "placements/ieee30_ref.json");
  Rng rng(7);
  const StateVector truth = random_state(30, rng);
  const auto meas = simulate_measurements(net, truth, placement,
                                          NoiseSpec::from_variance(1e-4), 8);
  const AugmentedFactorGraph g =
      AugmentedFactorGraph::build(net, assemble_system(net, meas));
  std::vector<int> all(50);
  for (int i = 0; i < 50; ++i) all[i] = i;
  for (int trial = 0; trial < 10; ++trial) {
    rng.shuffle(all);
    const int count = static_cast<int>(rng.next_u64() % 51);
    const std::vector<int> subset(all.begin(), all.begin() + count);
    const AugmentedFactorGraph reduced = g.remove_phasors(subset);
    CHECK(reduced.variable_subgraph_connected());
  }
}

TEST_CASE("build is deterministic") {
  const PowerNetwork net = PowerNetwork::load(kDataDir / "cases/ieee30.json");
  const PmuPlacement placement =
      PmuPlacement::load(kDataDir / "placements/ieee30_ref.json");
  Rng rng(9);
  const StateVector truth = random_state(30, rng);
  const auto meas = simulate_measurements(net, truth, placement,
                                          NoiseSpec::from_variance(1e-4), 11);
  const MeasurementSystem sys = assemble_system(net, meas);
  const AugmentedFactorGraph a = AugmentedFactorGraph::build(net, sys);
  const AugmentedFactorGraph b = AugmentedFactorGraph::build(net, sys);
  CHECK(a.dump() == b.dump());
}

TEST_CASE("k-hop neighbourhood radii") {
  const PowerNetwork net = PowerNetwork::load(kDataDir / "cases/toy2.json");
  const AugmentedFactorGraph g = toy_graph(net);

  CHECK(g.k_hop_neighbourhood(0, 0) == std::set<int>{0});

  // K = 1 from Re(V0) (node 0): its voltage factor (4), the two current
  // factors (6, 7), and the three vv neighbours (1, 2, 3)
  CHECK(g.k_hop_neighbourhood(0, 1) == std::set<int>{0, 1, 2, 3, 4, 6, 7});

  std::set<int> everything;
  for (const auto& v : g.variable_nodes()) everything.insert(v.id);
  for (const auto& f : g.factor_nodes()) everything.insert(f.id);
  CHECK(g.k_hop_neighbourhood(0, 8) == everything);

  CHECK_THROWS_AS((void)g.k_hop_neighbourhood(99, 1), DataError);
}

TEST_CASE("factor features carry value, moments, and type flags") {
  const PowerNetwork net = PowerNetwork::load(kDataDir / "cases/toy2.json");
  MeasurementSystem sys;
  const AugmentedFactorGraph g = toy_graph(net, &sys);
  const auto& nodes = g.factor_nodes();
  // voltage Re factor
  CHECK(nodes[0].features[0] == doctest::Approx(sys.moments[0].re));
  CHECK(nodes[0].features[1] == doctest::Approx(sys.moments[0].var_re));
  CHECK(nodes[0].features[2] == doctest::Approx(sys.moments[0].cov_re_im));
  CHECK(nodes[0].features[3] == 1.0);  // is_voltage
  CHECK(nodes[0].features[4] == 0.0);
  CHECK(nodes[0].features[5] == 1.0);  // is_real
  // current Im factor
  CHECK(nodes[3].features[0] == doctest::Approx(sys.moments[1].im));
  CHECK(nodes[3].features[1] == doctest::Approx(sys.moments[1].var_im));
  CHECK(nodes[3].features[3] == 0.0);
  CHECK(nodes[3].features[4] == 1.0);  // is_current
  CHECK(nodes[3].features[5] == 0.0);
}
