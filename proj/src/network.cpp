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

#include "gridse/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "gridse/errors.hpp"

namespace gridse {

using nlohmann::json;

BranchCoefficients branch_coefficients(const Branch& branch) {
  const double tau = branch.tap_ratio;
  const double cos_phi = std::cos(branch.phase_shift);
  const double sin_phi = std::sin(branch.phase_shift);
  BranchCoefficients c{};
  c.q = branch.g / (tau * tau);
  c.w = (branch.b + branch.b_shunt_half) / (tau * tau);
  c.r = branch.g / tau * cos_phi;
  c.t = branch.b / tau * sin_phi;
  c.u = branch.b / tau * cos_phi;
  c.p = branch.g / tau * sin_phi;
  c.z_c = branch.g;
  c.e_c = branch.b + branch.b_shunt_half;
  return c;
}

std::pair<std::complex<double>, std::complex<double>>
branch_currents(const Branch& branch, std::complex<double> v_from,
                std::complex<double> v_to) {
  const std::complex<double> y(branch.g, branch.b);
  const std::complex<double> y_shunt(0.0, branch.b_shunt_half);
  const double tau = branch.tap_ratio;
  // alpha = (1/tau) e^{-j phi}
  const std::complex<double> alpha =
      std::polar(1.0 / tau, -branch.phase_shift);
  const std::complex<double> i_from =
      (y + y_shunt) / (tau * tau) * v_from - std::conj(alpha) * y * v_to;
  const std::complex<double> i_to =
      -alpha * y * v_from + (y + y_shunt) * v_to;
  return {i_from, i_to};
}

PowerNetwork::PowerNetwork(std::vector<Bus> buses, std::vector<Branch> branches)
    : buses_(std::move(buses)), branches_(std::move(branches)) {
  validate_and_index();
}

void PowerNetwork::validate_and_index() {
  const int n = static_cast<int>(buses_.size());
  if (n == 0) throw DataError("network has no buses");
  for (int i = 0; i < n; ++i) {
    if (buses_[i].id != i)
      throw DataError("bus ids must be contiguous 0..n-1 after loading");
  }
  incident_.assign(n, {});
  adjacent_.assign(n, {});
  for (std::size_t e = 0; e < branches_.size(); ++e) {
    const Branch& br = branches_[e];
    if (br.from_bus < 0 || br.from_bus >= n || br.to_bus < 0 || br.to_bus >= n)
      throw DataError("branch " + std::to_string(e) +
                      " references a nonexistent bus");
    if (br.from_bus == br.to_bus)
      throw DataError("branch " + std::to_string(e) + " is a self-loop");
    if (!(br.tap_ratio > 0.0))
      throw DataError("branch " + std::to_string(e) +
                      " has non-positive tap ratio");
    incident_[br.from_bus].push_back(static_cast<int>(e));
    incident_[br.to_bus].push_back(static_cast<int>(e));
    adjacent_[br.from_bus].push_back(br.to_bus);
    adjacent_[br.to_bus].push_back(br.from_bus);
  }
  for (auto& adj : adjacent_) {
    std::sort(adj.begin(), adj.end());
    adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
  }
  // connectivity over the undirected branch graph
  std::vector<char> seen(n, 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int reached = 1;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (int v : adjacent_[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        ++reached;
        stack.push_back(v);
      }
    }
  }
  if (reached != n) throw DataError("network graph is disconnected");
}

const Branch& PowerNetwork::branch(int index) const {
  if (index < 0 || index >= branch_count())
    throw DataError("branch index out of range: " + std::to_string(index));
  return branches_[static_cast<std::size_t>(index)];
}

const std::vector<int>& PowerNetwork::incident_branches(int bus) const {
  if (bus < 0 || bus >= bus_count())
    throw DataError("bus index out of range: " + std::to_string(bus));
  return incident_[static_cast<std::size_t>(bus)];
}

const std::vector<int>& PowerNetwork::adjacent_buses(int bus) const {
  if (bus < 0 || bus >= bus_count())
    throw DataError("bus index out of range: " + std::to_string(bus));
  return adjacent_[static_cast<std::size_t>(bus)];
}

PowerNetwork PowerNetwork::from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("buses") || !doc.contains("branches"))
    throw ConfigError("case document must contain 'buses' and 'branches'");

  std::vector<Bus> buses;
  std::unordered_map<std::int64_t, int> label_to_index;
  for (const auto& jb : doc.at("buses")) {
    if (!jb.contains("id")) throw ConfigError("bus entry missing 'id'");
    const std::int64_t label = jb.at("id").get<std::int64_t>();
    if (label_to_index.count(label))
      throw ConfigError("duplicate bus id " + std::to_string(label));
    const int index = static_cast<int>(buses.size());
    label_to_index[label] = index;
    Bus bus;
    bus.id = index;
    bus.name = jb.value("name", std::to_string(label));
    buses.push_back(std::move(bus));
  }

  std::vector<Branch> branches;
  for (const auto& jr : doc.at("branches")) {
    Branch br;
    const std::int64_t from = jr.at("from").get<std::int64_t>();
    const std::int64_t to = jr.at("to").get<std::int64_t>();
    const auto fit = label_to_index.find(from);
    const auto tit = label_to_index.find(to);
    if (fit == label_to_index.end())
      throw DataError("branch endpoint references unknown bus " +
                      std::to_string(from));
    if (tit == label_to_index.end())
      throw DataError("branch endpoint references unknown bus " +
                      std::to_string(to));
    br.from_bus = fit->second;
    br.to_bus = tit->second;
    br.g = jr.at("g").get<double>();
    br.b = jr.at("b").get<double>();
    br.b_shunt_half = jr.value("b_shunt_half", 0.0);
    br.tap_ratio = jr.value("tap_ratio", 1.0);
    br.phase_shift = jr.value("phase_shift", 0.0);
    branches.push_back(br);
  }
  return PowerNetwork(std::move(buses), std::move(branches));
}

PowerNetwork PowerNetwork::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open case file: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ConfigError("case file " + path.string() + ": " + e.what());
  }
  return from_json(doc);
}

json PowerNetwork::to_json() const {
  json doc;
  doc["buses"] = json::array();
  for (const Bus& bus : buses_)
    doc["buses"].push_back({{"id", bus.id}, {"name", bus.name}});
  doc["branches"] = json::array();
  for (const Branch& br : branches_) {
    doc["branches"].push_back({{"from", br.from_bus},
                               {"to", br.to_bus},
                               {"g", br.g},
                               {"b", br.b},
                               {"b_shunt_half", br.b_shunt_half},
                               {"tap_ratio", br.tap_ratio},
                               {"phase_shift", br.phase_shift}});
  }
  return doc;
}

void PowerNetwork::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write case file: " + path.string());
  out << to_json().dump(2) << '\n';
}

std::uint64_t PowerNetwork::content_hash() const {
  const std::string dump = to_json().dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace gridse
