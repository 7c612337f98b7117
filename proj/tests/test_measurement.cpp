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

#include <cmath>
#include <filesystem>
#include <map>

#include "gridse/errors.hpp"
#include "gridse/measurement.hpp"
#include "gridse/rng.hpp"
#include "gridse/wls.hpp"

using namespace gridse;

namespace {
const std::filesystem::path kDataDir = GRIDSE_DATA_DIR;

std::map<int, double> as_map(const RowNonzeros& row) {
  std::map<int, double> m;
  for (const auto& [col, coeff] : row) m[col] += coeff;
  return m;
}

PmuPlacement full_placement(const PowerNetwork& net) {
  PmuPlacement placement;
  for (int bus = 0; bus < net.bus_count(); ++bus)
    placement.pmus.push_back({bus, net.incident_branches(bus)});
  return placement;
}

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

}  // namespace

TEST_CASE("voltage rows select the Re/Im state components") {
  const auto rows2 = voltage_measurement_rows(0, 2);
  CHECK(as_map(rows2[0]) == std::map<int, double>{{0, 1.0}});
  CHECK(as_map(rows2[1]) == std::map<int, double>{{2, 1.0}});

  const auto rows30 = voltage_measurement_rows(29, 30);
  CHECK(as_map(rows30[0]) == std::map<int, double>{{29, 1.0}});
  CHECK(as_map(rows30[1]) == std::map<int, double>{{59, 1.0}});

  CHECK_THROWS_AS((void)voltage_measurement_rows(30, 30), DataError);
}

TEST_CASE("current rows for the reference line") {
  Branch br;
  br.from_bus = 0;
  br.to_bus = 1;
  br.g = 1.0;
  br.b = -2.0;
  br.b_shunt_half = 0.0;
  const auto from_rows = current_measurement_rows(br, BranchSide::From, 2);
  // state columns: Re(V0)=0, Re(V1)=1, Im(V0)=2, Im(V1)=3
  CHECK(as_map(from_rows[0]) ==
        std::map<int, double>{{0, 1.0}, {2, 2.0}, {1, -1.0}, {3, -2.0}});
  const auto to_rows = current_measurement_rows(br, BranchSide::To, 2);
  CHECK(as_map(to_rows[0]) ==
        std::map<int, double>{{1, 1.0}, {3, 2.0}, {0, -1.0}, {2, -2.0}});
}

TEST_CASE("polar_to_rectangular: axis-aligned phasor decouples") {
  const auto m = polar_to_rectangular(1.0, 0.0, 1e-5, 1e-5);
  CHECK(m.var_re == doctest::Approx(1e-5));
  CHECK(m.var_im == doctest::Approx(1e-5));
  CHECK(m.cov_re_im == doctest::Approx(0.0));
}

TEST_CASE("polar_to_rectangular: 45-degree phasor couples equally") {
  const auto m = polar_to_rectangular(1.0, M_PI / 4.0, 2e-5, 0.0);
  CHECK(m.var_re == doctest::Approx(1e-5));
  CHECK(m.var_im == doctest::Approx(1e-5));
  CHECK(m.cov_re_im == doctest::Approx(1e-5));
}

TEST_CASE("polar_to_rectangular covariance blocks stay PSD") {
  Rng rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    const auto m =
        polar_to_rectangular(rng.uniform(0.0, 2.0), rng.uniform(-M_PI, M_PI),
                             rng.uniform(1e-7, 1e-1), rng.uniform(1e-7, 1e-1));
    const double trace = m.var_re + m.var_im;
    const double det = m.var_re * m.var_im - m.cov_re_im * m.cov_re_im;
    CHECK(trace >= -1e-12);
    CHECK(det >= -1e-12 * trace * trace);
  }
}

TEST_CASE("polar_to_rectangular matches Monte-Carlo moments") {
  // sampling oracle at PMU-scale variances (first-order propagation is
  // exact to within the Monte-Carlo band there)
  Rng rng(99);
  const int draws = 200000;
  for (int config = 0; config < 3; ++config) {
    const double mag = rng.uniform(0.5, 1.5);
    const double ang = rng.uniform(-M_PI, M_PI);
    const double vm = rng.uniform(1e-6, 1e-4);
    const double va = rng.uniform(1e-6, 1e-4);
    const auto analytic = polar_to_rectangular(mag, ang, vm, va);

    double sum_re = 0, sum_im = 0, sum_rr = 0, sum_ii = 0, sum_ri = 0;
    Rng sampler(1234 + config);
    for (int d = 0; d < draws; ++d) {
      const double m = sampler.normal(mag, std::sqrt(vm));
      const double a = sampler.normal(ang, std::sqrt(va));
      const double re = m * std::cos(a);
      const double im = m * std::sin(a);
      sum_re += re;
      sum_im += im;
      sum_rr += re * re;
      sum_ii += im * im;
      sum_ri += re * im;
    }
    const double mean_re = sum_re / draws;
    const double mean_im = sum_im / draws;
    const double var_re = sum_rr / draws - mean_re * mean_re;
    const double var_im = sum_ii / draws - mean_im * mean_im;
    const double cov = sum_ri / draws - mean_re * mean_im;

    const double se_re = var_re * std::sqrt(2.0 / draws);
    const double se_im = var_im * std::sqrt(2.0 / draws);
    const double se_cov =
        std::sqrt((var_re * var_im + cov * cov) / draws);
    CHECK(std::abs(var_re - analytic.var_re) <= 4.0 * se_re);
    CHECK(std::abs(var_im - analytic.var_im) <= 4.0 * se_im);
    CHECK(std::abs(cov - analytic.cov_re_im) <= 4.0 * se_cov);
  }
}

TEST_CASE("assemble_system shapes and row sparsity") {
  const PowerNetwork net = PowerNetwork::load(kDataDir / "cases/toy2.json");
  PmuPlacement placement;
  placement.pmus.push_back({0, {0}});  // Fig-2 style: voltage + one current

  Rng rng(3);
  const StateVector truth = random_state(2, rng);
  const auto meas = simulate_measurements(net, truth, placement,
                                          NoiseSpec::from_variance(1e-4), 17);
  const MeasurementSystem sys = assemble_system(net, meas);
  CHECK(sys.k() == 4);
  CHECK(sys.H.rows() == 4);
  CHECK(sys.H.cols() == 4);
  // row nonzero pattern {1,1,4,4}
  std::vector<int> nnz(4, 0);
  for (int col = 0; col < sys.H.outerSize(); ++col)
    for (Eigen::SparseMatrix<double>::InnerIterator it(sys.H, col); it; ++it)
      ++nnz[static_cast<std::size_t>(it.row())];
  CHECK(nnz == std::vector<int>{1, 1, 4, 4});
}

TEST_CASE("assemble_system: empty measurement list is a valid k=0 system") {
  const PowerNetwork net = PowerNetwork::load(kDataDir / "cases/toy2.json");
  const MeasurementSystem sys = assemble_system(net, {});
  CHECK(sys.k() == 0);
  CHECK(sys.phasor_count() == 0);
}

TEST_CASE("assemble_system on IEEE 30 with 50 phasors is 100 x 60") {
  const PowerNetwork net = PowerNetwork::load(kDataDir / "cases/ieee30.json");
  const PmuPlacement placement =
      PmuPlacement::load(kDataDir / "placements/ieee30_ref.json");
  CHECK(placement.phasor_count() == 50);
  Rng rng(8);
  const StateVector truth = random_state(30, rng);
  const auto meas = simulate_measurements(net, truth, placement,
                                          NoiseSpec::from_variance(1e-5), 21);
  const MeasurementSystem sys = assemble_system(net, meas);
  CHECK(sys.H.rows() == 100);
  CHECK(sys.H.cols() == 60);
}

TEST_CASE("linearity oracle: H x equals stacked measurement functions") {
  const PowerNetwork net = PowerNetwork::load(kDataDir / "cases/ieee30.json");
  const PmuPlacement placement = full_placement(net);
  Rng rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    const StateVector truth = random_state(30, rng);
    const auto exact = exact_phasors(net, truth, placement);
    std::vector<PhasorMeasurement> noiseless;
    for (const PolarPhasor& p : exact)
      noiseless.push_back({p.desc, p.magnitude, p.angle, 1e-6, 1e-6});
    const MeasurementSystem sys = assemble_system(net, noiseless);
    const Eigen::VectorXd hx = sys.H * truth.flat();
    CHECK((hx - sys.z).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("simulate_measurements: zero noise is exactly consistent") {
  const PowerNetwork net = PowerNetwork::load(kDataDir / "cases/toy2.json");
  PmuPlacement placement;
  placement.pmus.push_back({0, {0}});
  Rng rng(12);
  const StateVector truth = random_state(2, rng);
  const auto meas =
      simulate_measurements(net, truth, placement, NoiseSpec{}, 5);
  const auto exact = exact_phasors(net, truth, placement);
  for (std::size_t i = 0; i < meas.size(); ++i) {
    CHECK(meas[i].magnitude == doctest::Approx(exact[i].magnitude));
    CHECK(meas[i].angle == doctest::Approx(exact[i].angle));
    CHECK(meas[i].var_magnitude > 0.0);
    CHECK(meas[i].var_angle > 0.0);
  }
}

TEST_CASE("simulate_measurements records the configured variance") {
  const PowerNetwork net = PowerNetwork::load(kDataDir / "cases/toy2.json");
  PmuPlacement placement;
  placement.pmus.push_back({0, {0}});
  Rng rng(13);
  const StateVector truth = random_state(2, rng);
  const auto meas = simulate_measurements(net, truth, placement,
                                          NoiseSpec::from_variance(1e-5), 7);
  for (const auto& m : meas) {
    CHECK(m.var_magnitude == doctest::Approx(1e-5));
    CHECK(m.var_angle == doctest::Approx(1e-5));
  }
}

TEST_CASE("simulate_measurements is deterministic in the seed") {
  const PowerNetwork net = PowerNetwork::load(kDataDir / "cases/ieee30.json");
  const PmuPlacement placement = full_placement(net);
  Rng rng(14);
  const StateVector truth = random_state(30, rng);
  const auto a = simulate_measurements(net, truth, placement,
                                       NoiseSpec::from_variance(1e-3), 123);
  const auto b = simulate_measurements(net, truth, placement,
                                       NoiseSpec::from_variance(1e-3), 123);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].magnitude == b[i].magnitude);
    CHECK(a[i].angle == b[i].angle);
  }
}

TEST_CASE("inject_outlier corrupts the value but not the recorded variance") {
  const PowerNetwork net = PowerNetwork::load(kDataDir / "cases/toy2.json");
  PmuPlacement placement;
  placement.pmus.push_back({0, {0}});
  Rng rng(15);
  const StateVector truth = random_state(2, rng);
  const auto exact = exact_phasors(net, truth, placement);
  const auto meas = simulate_measurements(net, truth, placement,
                                          NoiseSpec::from_variance(1e-5), 9);

  const auto corrupted = inject_outlier(meas, exact, 1, 1600.0, 77);
  CHECK(corrupted[0].magnitude == meas[0].magnitude);
  CHECK(corrupted[1].var_magnitude == meas[1].var_magnitude);
  CHECK(corrupted[1].var_angle == meas[1].var_angle);
  CHECK(corrupted[1].magnitude != meas[1].magnitude);

  CHECK_THROWS_AS((void)inject_outlier(meas, exact, 5, 1600.0, 1), DataError);
  CHECK_THROWS_AS((void)inject_outlier(meas, exact, 0, -1.0, 1), DataError);
}

TEST_CASE("inject_outlier with factor 1 behaves like ordinary noise") {
  const PowerNetwork net = PowerNetwork::load(kDataDir / "cases/toy2.json");
  PmuPlacement placement;
  placement.pmus.push_back({0, {0}});
  Rng rng(16);
  const StateVector truth = random_state(2, rng);
  const auto exact = exact_phasors(net, truth, placement);
  const auto meas = simulate_measurements(net, truth, placement,
                                          NoiseSpec::from_variance(1e-4), 10);
  // empirical spread of the re-sampled value across seeds matches the
  // original standard deviation within a loose factor
  double sum = 0, sum2 = 0;
  const int reps = 4000;
  for (int r = 0; r < reps; ++r) {
    const auto c =
        inject_outlier(meas, exact, 0, 1.0, static_cast<std::uint64_t>(r));
    const double dev = c[0].magnitude - exact[0].magnitude;
    sum += dev;
    sum2 += dev * dev;
  }
  const double var = sum2 / reps - (sum / reps) * (sum / reps);
  CHECK(var == doctest::Approx(1e-4).epsilon(0.15));
}
