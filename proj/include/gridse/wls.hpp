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

#include "gridse/measurement.hpp"

namespace gridse {

enum class WlsMode : std::uint8_t { Exact = 0, Approximate = 1 };

struct WlsSolution {
  StateVector x;
  double residual_norm = 0.0;       ///< ||z - H x||_2
  double condition_estimate = 0.0;  ///< max|d_i| / min|d_i| of the LDL^T pivots
  WlsMode mode = WlsMode::Exact;
  bool ill_conditioned = false;
};

/// Relative singular-value threshold below which directions count as
/// unobservable. This is the artifact-wide numerical-rank convention.
inline constexpr double kRankTolerance = 1e-8;

/// Condition estimate above which a solution is flagged ill-conditioned.
inline constexpr double kDefaultConditionThreshold = 1e12;

/// Solves the normal equations (H^T Sigma^-1 H) x = H^T Sigma^-1 z with
/// the full 2x2-block covariance inverted blockwise. Throws
/// SingularGainError for unobservable systems.
[[nodiscard]] WlsSolution solve_exact(
    const MeasurementSystem& sys,
    double condition_threshold = kDefaultConditionThreshold);

/// Same solve with every block's re/im cross-covariance forced to zero.
[[nodiscard]] WlsSolution solve_approximate(
    const MeasurementSystem& sys,
    double condition_threshold = kDefaultConditionThreshold);

struct Observability {
  bool observable = false;
  int rank = 0;
  int rank_deficiency = 0;  ///< 2n - rank
};

/// Numerical column rank of H (singular values below kRankTolerance x
/// the largest count as zero) compared against 2n.
[[nodiscard]] Observability observability_check(const MeasurementSystem& sys);

/// Greedy placement heuristic: repeatedly adds the PMU (bus plus all
/// incident branch currents) whose rows maximally raise the numerical
/// rank of H, lowest bus id on ties, until the system is observable.
/// An already-observable warm start is returned unchanged.
[[nodiscard]] PmuPlacement greedy_pmu_placement(
    const PowerNetwork& net, const PmuPlacement* warm_start = nullptr);

}  // namespace gridse
