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

#include "gridse/measurement.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "gridse/errors.hpp"

namespace gridse {

using nlohmann::json;

StateVector::StateVector(Eigen::VectorXd re, Eigen::VectorXd im)
    : v_re(std::move(re)), v_im(std::move(im)) {
  if (v_re.size() != v_im.size())
    throw DataError("state vector halves differ in length");
}

Eigen::VectorXd StateVector::flat() const {
  Eigen::VectorXd x(2 * size());
  x.head(size()) = v_re;
  x.tail(size()) = v_im;
  return x;
}

StateVector StateVector::from_flat(const Eigen::VectorXd& x) {
  if (x.size() % 2 != 0) throw DataError("flat state length must be even");
  const Eigen::Index n = x.size() / 2;
  return StateVector(x.head(n), x.tail(n));
}

RectangularMoments polar_to_rectangular(double magnitude, double angle,
                                        double var_magnitude,
                                        double var_angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  RectangularMoments m;
  m.re = magnitude * c;
  m.im = magnitude * s;
  m.var_re = var_magnitude * c * c + var_angle * magnitude * magnitude * s * s;
  m.var_im = var_magnitude * s * s + var_angle * magnitude * magnitude * c * c;
  m.cov_re_im = s * c * (var_magnitude - magnitude * magnitude * var_angle);
  return m;
}

RectangularMoments polar_to_rectangular(const PhasorMeasurement& m) {
  return polar_to_rectangular(m.magnitude, m.angle, m.var_magnitude,
                              m.var_angle);
}

std::array<RowNonzeros, 2> voltage_measurement_rows(int bus, int n) {
  if (bus < 0 || bus >= n)
    throw DataError("voltage phasor references unknown bus " +
                    std::to_string(bus));
  return {RowNonzeros{{bus, 1.0}}, RowNonzeros{{n + bus, 1.0}}};
}

std::array<RowNonzeros, 2> current_measurement_rows(const Branch& branch,
                                                    BranchSide side, int n) {
  const BranchCoefficients c = branch_coefficients(branch);
  const int i = branch.from_bus;
  const int j = branch.to_bus;
  RowNonzeros re_row, im_row;
  if (side == BranchSide::From) {
    re_row = {{i, c.q}, {n + i, -c.w}, {j, -(c.r - c.t)}, {n + j, c.u + c.p}};
    im_row = {{i, c.w}, {n + i, c.q}, {j, -(c.u + c.p)}, {n + j, -(c.r - c.t)}};
  } else {
    re_row = {{j, c.z_c}, {n + j, -c.e_c}, {i, -(c.r + c.t)}, {n + i, c.u - c.p}};
    im_row = {{j, c.e_c}, {n + j, c.z_c}, {i, -(c.u - c.p)}, {n + i, -(c.r + c.t)}};
  }
  return {re_row, im_row};
}

namespace {

std::array<RowNonzeros, 2> rows_for(const PowerNetwork& net,
                                    const MeasurementDescriptor& d) {
  const int n = net.bus_count();
  switch (d.kind) {
    case PhasorKind::BusVoltage:
      return voltage_measurement_rows(d.element, n);
    case PhasorKind::BranchCurrentFrom:
      return current_measurement_rows(net.branch(d.element), BranchSide::From,
                                      n);
    case PhasorKind::BranchCurrentTo:
      return current_measurement_rows(net.branch(d.element), BranchSide::To, n);
  }
  throw DataError("unknown phasor kind");
}

}  // namespace

MeasurementSystem assemble_system(
    const PowerNetwork& net, const std::vector<MeasurementDescriptor>& descs,
    const std::vector<RectangularMoments>& moments) {
  if (descs.size() != moments.size())
    throw DataError("descriptor/moment count mismatch");
  MeasurementSystem sys;
  sys.n = net.bus_count();
  const int k = 2 * static_cast<int>(descs.size());
  sys.H.resize(k, 2 * sys.n);
  sys.z.resize(k);
  std::vector<Eigen::Triplet<double>> triplets;
  for (std::size_t p = 0; p < descs.size(); ++p) {
    const auto rows = rows_for(net, descs[p]);
    const int r0 = 2 * static_cast<int>(p);
    for (int component = 0; component < 2; ++component) {
      for (const auto& [col, coeff] : rows[component])
        triplets.emplace_back(r0 + component, col, coeff);
    }
    const RectangularMoments& m = moments[p];
    sys.z[r0] = m.re;
    sys.z[r0 + 1] = m.im;
    Eigen::Matrix2d block;
    block << m.var_re, m.cov_re_im, m.cov_re_im, m.var_im;
    sys.sigma_blocks.push_back(block);
  }
  sys.H.setFromTriplets(triplets.begin(), triplets.end());
  sys.phasors = descs;
  sys.moments = moments;
  return sys;
}

MeasurementSystem assemble_system(
    const PowerNetwork& net, const std::vector<PhasorMeasurement>& phasors) {
  std::vector<MeasurementDescriptor> descs;
  std::vector<RectangularMoments> moments;
  descs.reserve(phasors.size());
  moments.reserve(phasors.size());
  for (const PhasorMeasurement& m : phasors) {
    descs.push_back(m.desc);
    moments.push_back(polar_to_rectangular(m));
  }
  return assemble_system(net, descs, moments);
}

int PmuPlacement::phasor_count() const {
  int count = 0;
  for (const PmuSpec& pmu : pmus)
    count += 1 + static_cast<int>(pmu.branches.size());
  return count;
}

std::vector<MeasurementDescriptor> PmuPlacement::descriptors(
    const PowerNetwork& net) const {
  validate(net);
  std::vector<MeasurementDescriptor> descs;
  for (std::size_t p = 0; p < pmus.size(); ++p) {
    const PmuSpec& pmu = pmus[p];
    descs.push_back({PhasorKind::BusVoltage, pmu.bus, static_cast<int>(p)});
    for (int branch : pmu.branches) {
      const bool at_from = net.branch(branch).from_bus == pmu.bus;
      descs.push_back({at_from ? PhasorKind::BranchCurrentFrom
                               : PhasorKind::BranchCurrentTo,
                       branch, static_cast<int>(p)});
    }
  }
  return descs;
}

std::vector<int> PmuPlacement::phasors_of_pmu(int pmu_id) const {
  std::vector<int> indices;
  int cursor = 0;
  for (std::size_t p = 0; p < pmus.size(); ++p) {
    const int span = 1 + static_cast<int>(pmus[p].branches.size());
    if (static_cast<int>(p) == pmu_id) {
      for (int i = 0; i < span; ++i) indices.push_back(cursor + i);
      return indices;
    }
    cursor += span;
  }
  throw DataError("unknown PMU id " + std::to_string(pmu_id));
}

void PmuPlacement::validate(const PowerNetwork& net) const {
  for (const PmuSpec& pmu : pmus) {
    if (pmu.bus < 0 || pmu.bus >= net.bus_count())
      throw DataError("placement references unknown bus " +
                      std::to_string(pmu.bus));
    for (int branch : pmu.branches) {
      const Branch& br = net.branch(branch);
      if (br.from_bus != pmu.bus && br.to_bus != pmu.bus)
        throw DataError("PMU at bus " + std::to_string(pmu.bus) +
                        " lists non-incident branch " + std::to_string(branch));
    }
  }
}

PmuPlacement PmuPlacement::from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("pmus"))
    throw ConfigError("placement document must contain 'pmus'");
  PmuPlacement placement;
  for (const auto& jp : doc.at("pmus")) {
    PmuSpec pmu;
    pmu.bus = jp.at("bus").get<int>();
    for (const auto& jb : jp.at("branches")) pmu.branches.push_back(jb.get<int>());
    placement.pmus.push_back(std::move(pmu));
  }
  return placement;
}

PmuPlacement PmuPlacement::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open placement file: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ConfigError("placement file " + path.string() + ": " + e.what());
  }
  return from_json(doc);
}

json PmuPlacement::to_json() const {
  json doc;
  doc["pmus"] = json::array();
  for (const PmuSpec& pmu : pmus)
    doc["pmus"].push_back({{"bus", pmu.bus}, {"branches", pmu.branches}});
  return doc;
}

void PmuPlacement::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write placement file: " + path.string());
  out << to_json().dump(2) << '\n';
}

std::vector<PolarPhasor> exact_phasors(const PowerNetwork& net,
                                       const StateVector& truth,
                                       const PmuPlacement& placement) {
  placement.validate(net);
  if (truth.size() != net.bus_count())
    throw DataError("truth state size does not match network");
  std::vector<PolarPhasor> result;
  for (std::size_t p = 0; p < placement.pmus.size(); ++p) {
    const PmuSpec& pmu = placement.pmus[p];
    const std::complex<double> v = truth.voltage(pmu.bus);
    result.push_back({{PhasorKind::BusVoltage, pmu.bus, static_cast<int>(p)},
                      std::abs(v),
                      std::arg(v)});
    for (int branch_index : pmu.branches) {
      const Branch& br = net.branch(branch_index);
      const auto [i_from, i_to] = branch_currents(
          br, truth.voltage(br.from_bus), truth.voltage(br.to_bus));
      const bool at_from = br.from_bus == pmu.bus;
      const std::complex<double> current = at_from ? i_from : i_to;
      result.push_back({{at_from ? PhasorKind::BranchCurrentFrom
                                 : PhasorKind::BranchCurrentTo,
                         branch_index, static_cast<int>(p)},
                        std::abs(current),
                        std::arg(current)});
    }
  }
  return result;
}

NoiseSpec NoiseSpec::from_variance(double variance) {
  if (variance < 0.0) throw ConfigError("variance must be nonnegative");
  NoiseSpec spec;
  spec.std_magnitude = std::sqrt(variance);
  spec.std_angle = std::sqrt(variance);
  return spec;
}

std::vector<PhasorMeasurement> simulate_measurements(
    const PowerNetwork& net, const StateVector& truth,
    const PmuPlacement& placement, const NoiseSpec& noise,
    std::uint64_t seed) {
  const std::vector<PolarPhasor> exact = exact_phasors(net, truth, placement);
  Rng rng(seed);
  std::vector<PhasorMeasurement> result;
  result.reserve(exact.size());
  for (const PolarPhasor& truth_phasor : exact) {
    PhasorMeasurement m;
    m.desc = truth_phasor.desc;
    m.magnitude = rng.normal(truth_phasor.magnitude, noise.std_magnitude);
    m.angle = rng.normal(truth_phasor.angle, noise.std_angle);
    m.var_magnitude =
        std::max(noise.std_magnitude * noise.std_magnitude, noise.var_floor);
    m.var_angle =
        std::max(noise.std_angle * noise.std_angle, noise.var_floor);
    result.push_back(m);
  }
  return result;
}

std::vector<PhasorMeasurement> inject_outlier(
    const std::vector<PhasorMeasurement>& measurements,
    const std::vector<PolarPhasor>& exact, int index, double factor,
    std::uint64_t seed) {
  if (index < 0 || index >= static_cast<int>(measurements.size()))
    throw DataError("outlier index out of range: " + std::to_string(index));
  if (measurements.size() != exact.size())
    throw DataError("measurement/exact phasor count mismatch");
  if (!(factor > 0.0)) throw DataError("outlier factor must be positive");
  std::vector<PhasorMeasurement> result = measurements;
  PhasorMeasurement& victim = result[static_cast<std::size_t>(index)];
  const PolarPhasor& truth_phasor = exact[static_cast<std::size_t>(index)];
  Rng rng(seed);
  const double inflated_std_mag =
      std::sqrt(victim.var_magnitude * factor);
  const double inflated_std_ang = std::sqrt(victim.var_angle * factor);
  victim.magnitude = rng.normal(truth_phasor.magnitude, inflated_std_mag);
  victim.angle = rng.normal(truth_phasor.angle, inflated_std_ang);
  // var_magnitude / var_angle intentionally left at their original values
  return result;
}

}  // namespace gridse
