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
#include <filesystem>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <nlohmann/json_fwd.hpp>

#include "gridse/network.hpp"
#include "gridse/rng.hpp"

namespace gridse {

/// Rectangular state: flattened order [Re(V_1)..Re(V_n), Im(V_1)..Im(V_n)].
struct StateVector {
  Eigen::VectorXd v_re;
  Eigen::VectorXd v_im;

  StateVector() = default;
  StateVector(Eigen::VectorXd re, Eigen::VectorXd im);

  [[nodiscard]] int size() const { return static_cast<int>(v_re.size()); }
  [[nodiscard]] std::complex<double> voltage(int bus) const {
    return {v_re[bus], v_im[bus]};
  }
  [[nodiscard]] Eigen::VectorXd flat() const;
  static StateVector from_flat(const Eigen::VectorXd& x);
};

enum class PhasorKind : std::uint8_t {
  BusVoltage = 0,
  BranchCurrentFrom = 1,  ///< current phasor measured at the from side
  BranchCurrentTo = 2,    ///< current phasor measured at the to side
};

/// Identifies what one phasor measures. `element` is a bus index for
/// voltage phasors and a branch index for current phasors.
struct MeasurementDescriptor {
  PhasorKind kind = PhasorKind::BusVoltage;
  int element = 0;
  int pmu_id = 0;

  friend bool operator==(const MeasurementDescriptor&,
                         const MeasurementDescriptor&) = default;
};

/// One polar phasor measurement with its polar error variances.
struct PhasorMeasurement {
  MeasurementDescriptor desc;
  double magnitude = 0.0;
  double angle = 0.0;          ///< [rad]
  double var_magnitude = 0.0;  ///< > 0
  double var_angle = 0.0;      ///< > 0
};

/// Noiseless phasor value in polar form (no variances).
struct PolarPhasor {
  MeasurementDescriptor desc;
  double magnitude = 0.0;
  double angle = 0.0;
};

/// First two moments of a phasor in rectangular coordinates.
/// The 2x2 covariance [[var_re, cov],[cov, var_im]] is PSD.
struct RectangularMoments {
  double re = 0.0;
  double im = 0.0;
  double var_re = 0.0;
  double var_im = 0.0;
  double cov_re_im = 0.0;
};

/// First-order propagation of polar moments to rectangular coordinates:
///   re = m cos(a), im = m sin(a),
///   var_re = v_m cos^2 a + v_a m^2 sin^2 a,
///   var_im = v_m sin^2 a + v_a m^2 cos^2 a,
///   cov    = sin a cos a (v_m - m^2 v_a).
[[nodiscard]] RectangularMoments polar_to_rectangular(double magnitude,
                                                      double angle,
                                                      double var_magnitude,
                                                      double var_angle);
[[nodiscard]] RectangularMoments polar_to_rectangular(
    const PhasorMeasurement& m);

/// Nonzeros of one H row: (column, coefficient) pairs.
using RowNonzeros = std::vector<std::pair<int, double>>;

/// H rows (Re, Im) of a bus voltage phasor; each has a single unit entry.
[[nodiscard]] std::array<RowNonzeros, 2> voltage_measurement_rows(int bus,
                                                                  int n);

enum class BranchSide : std::uint8_t { From = 0, To = 1 };

/// H rows (Re, Im) of a branch current phasor; four nonzeros each,
/// from the linear branch-current functions.
[[nodiscard]] std::array<RowNonzeros, 2> current_measurement_rows(
    const Branch& branch, BranchSide side, int n);

/// Assembled linear measurement system z = H x + e with block-diagonal
/// covariance. Each phasor contributes two consecutive rows (Re, Im) and
/// one 2x2 sigma block.
struct MeasurementSystem {
  int n = 0;                                    ///< bus count
  Eigen::SparseMatrix<double> H;                ///< k x 2n
  Eigen::VectorXd z;                            ///< k
  std::vector<Eigen::Matrix2d> sigma_blocks;    ///< one per phasor
  std::vector<MeasurementDescriptor> phasors;   ///< row-pair descriptors
  std::vector<RectangularMoments> moments;      ///< per phasor

  [[nodiscard]] int k() const { return static_cast<int>(z.size()); }
  [[nodiscard]] int phasor_count() const {
    return static_cast<int>(phasors.size());
  }
};

[[nodiscard]] MeasurementSystem assemble_system(
    const PowerNetwork& net, const std::vector<PhasorMeasurement>& phasors);

/// Assembles directly from rectangular moments (the form datasets store).
[[nodiscard]] MeasurementSystem assemble_system(
    const PowerNetwork& net, const std::vector<MeasurementDescriptor>& descs,
    const std::vector<RectangularMoments>& moments);

/// One PMU: the instrumented bus plus the incident branches carrying
/// current phasors.
struct PmuSpec {
  int bus = 0;
  std::vector<int> branches;
};

/// An ordered PMU set. Defines the canonical measurement order: per PMU,
/// first its bus voltage phasor, then one current phasor per listed
/// branch (measured at the PMU's side).
struct PmuPlacement {
  std::vector<PmuSpec> pmus;

  [[nodiscard]] int phasor_count() const;
  [[nodiscard]] std::vector<MeasurementDescriptor> descriptors(
      const PowerNetwork& net) const;
  /// Phasor indices owned by the given PMU.
  [[nodiscard]] std::vector<int> phasors_of_pmu(int pmu_id) const;
  void validate(const PowerNetwork& net) const;

  static PmuPlacement from_json(const nlohmann::json& doc);
  static PmuPlacement load(const std::filesystem::path& path);
  [[nodiscard]] nlohmann::json to_json() const;
  void save(const std::filesystem::path& path) const;
};

/// Noiseless phasors implied by `truth` for every measurement in the
/// placement, in canonical order.
[[nodiscard]] std::vector<PolarPhasor> exact_phasors(
    const PowerNetwork& net, const StateVector& truth,
    const PmuPlacement& placement);

/// Gaussian polar noise model. Recorded variances are the squared
/// std-devs, floored at `var_floor` so noiseless simulations still yield
/// an invertible covariance.
struct NoiseSpec {
  double std_magnitude = 0.0;
  double std_angle = 0.0;
  double var_floor = 1e-12;

  static NoiseSpec from_variance(double variance);
};

/// Perturbs the exact phasors with independent zero-mean Gaussian noise
/// per polar component. Deterministic given `seed`.
[[nodiscard]] std::vector<PhasorMeasurement> simulate_measurements(
    const PowerNetwork& net, const StateVector& truth,
    const PmuPlacement& placement, const NoiseSpec& noise, std::uint64_t seed);

/// Re-samples the phasor at `index` around its true value with the polar
/// variances multiplied by `factor`. The recorded variance fields keep
/// their original values: the estimator is not told about the corruption.
[[nodiscard]] std::vector<PhasorMeasurement> inject_outlier(
    const std::vector<PhasorMeasurement>& measurements,
    const std::vector<PolarPhasor>& exact, int index, double factor,
    std::uint64_t seed);

}  // namespace gridse
