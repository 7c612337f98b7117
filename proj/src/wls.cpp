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

#include "gridse/wls.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/SVD>
#include <Eigen/SparseCholesky>

#include "gridse/errors.hpp"

namespace gridse {

namespace {

Eigen::Matrix2d invert_block(const Eigen::Matrix2d& sigma) {
  const double det = sigma(0, 0) * sigma(1, 1) - sigma(0, 1) * sigma(1, 0);
  if (!(std::abs(det) > 0.0) || !std::isfinite(det))
    throw NumericalError("singular 2x2 covariance block");
  Eigen::Matrix2d inv;
  inv << sigma(1, 1), -sigma(0, 1), -sigma(1, 0), sigma(0, 0);
  return inv / det;
}

WlsSolution solve_impl(const MeasurementSystem& sys, WlsMode mode,
                       double condition_threshold) {
  const int dim = 2 * sys.n;
  if (sys.k() < dim) {
    const Observability obs = observability_check(sys);
    throw SingularGainError(
        "underdetermined system: k=" + std::to_string(sys.k()) +
            " < 2n=" + std::to_string(dim),
        obs.rank_deficiency);
  }

  // W = Sigma^-1, blockwise closed-form 2x2 inverses
  std::vector<Eigen::Triplet<double>> w_triplets;
  w_triplets.reserve(4 * sys.sigma_blocks.size());
  for (std::size_t p = 0; p < sys.sigma_blocks.size(); ++p) {
    Eigen::Matrix2d block = sys.sigma_blocks[p];
    if (mode == WlsMode::Approximate) {
      block(0, 1) = 0.0;
      block(1, 0) = 0.0;
    }
    const Eigen::Matrix2d inv = invert_block(block);
    const int r0 = 2 * static_cast<int>(p);
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        if (inv(a, b) != 0.0) w_triplets.emplace_back(r0 + a, r0 + b, inv(a, b));
  }
  Eigen::SparseMatrix<double> weights(sys.k(), sys.k());
  weights.setFromTriplets(w_triplets.begin(), w_triplets.end());

  const Eigen::SparseMatrix<double> gain =
      sys.H.transpose() * weights * sys.H;
  const Eigen::VectorXd rhs = sys.H.transpose() * (weights * sys.z);

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  ldlt.compute(gain);

  // LDLT pivots estimate the gain conditioning: cond(G) ~ cond(H)^2, so
  // a suspiciously small pivot is only a hint; the authoritative
  // singularity test is the numerical rank of H itself.
  auto throw_if_unobservable = [&sys](const char* context) {
    const Observability obs = observability_check(sys);
    if (!obs.observable) {
      throw SingularGainError(std::string(context) + " (rank deficiency " +
                                  std::to_string(obs.rank_deficiency) + ")",
                              obs.rank_deficiency);
    }
  };
  if (ldlt.info() != Eigen::Success) {
    throw_if_unobservable("singular gain matrix");
    throw NumericalError("gain factorization failed on an observable system");
  }
  double cond = std::numeric_limits<double>::infinity();
  {
    const Eigen::VectorXd d = ldlt.vectorD();
    const double d_max = d.cwiseAbs().maxCoeff();
    const double d_min = d.cwiseAbs().minCoeff();
    if (!(d_max > 0.0) || !std::isfinite(d_max) || !std::isfinite(d_min) ||
        d_min <= 1e-14 * d_max || d.minCoeff() <= 0.0) {
      throw_if_unobservable("singular gain matrix");
      // observable but numerically extreme; cond stays infinite and the
      // solution is flagged ill-conditioned
    } else {
      cond = d_max / d_min;
    }
  }

  const Eigen::VectorXd x = ldlt.solve(rhs);
  if (!x.allFinite()) {
    throw_if_unobservable("non-finite WLS solution");
    throw NumericalError("non-finite WLS solution on an observable system");
  }

  WlsSolution sol;
  sol.x = StateVector::from_flat(x);
  sol.residual_norm = (sys.z - sys.H * x).norm();
  sol.condition_estimate = cond;
  sol.mode = mode;
  sol.ill_conditioned = cond > condition_threshold;
  return sol;
}

}  // namespace

WlsSolution solve_exact(const MeasurementSystem& sys,
                        double condition_threshold) {
  return solve_impl(sys, WlsMode::Exact, condition_threshold);
}

WlsSolution solve_approximate(const MeasurementSystem& sys,
                              double condition_threshold) {
  return solve_impl(sys, WlsMode::Approximate, condition_threshold);
}

Observability observability_check(const MeasurementSystem& sys) {
  const int dim = 2 * sys.n;
  Observability obs;
  if (sys.k() == 0) {
    obs.rank = 0;
    obs.rank_deficiency = dim;
    return obs;
  }
  const Eigen::MatrixXd dense(sys.H);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(dense);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double cutoff = sv.size() > 0 ? kRankTolerance * sv[0] : 0.0;
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > cutoff) ++rank;
  obs.rank = rank;
  obs.rank_deficiency = dim - rank;
  obs.observable = obs.rank_deficiency == 0;
  return obs;
}

namespace {

/// Rows a PMU at `bus` contributes: voltage pair + a current pair per
/// incident branch, as dense vectors of length 2n.
std::vector<Eigen::VectorXd> pmu_rows(const PowerNetwork& net, int bus) {
  const int n = net.bus_count();
  std::vector<Eigen::VectorXd> rows;
  auto push_rows = [&](const std::array<RowNonzeros, 2>& pair) {
    for (const RowNonzeros& nz : pair) {
      Eigen::VectorXd row = Eigen::VectorXd::Zero(2 * n);
      for (const auto& [col, coeff] : nz) row[col] = coeff;
      rows.push_back(std::move(row));
    }
  };
  push_rows(voltage_measurement_rows(bus, n));
  for (int branch_index : net.incident_branches(bus)) {
    const Branch& br = net.branch(branch_index);
    push_rows(current_measurement_rows(
        br, br.from_bus == bus ? BranchSide::From : BranchSide::To, n));
  }
  return rows;
}

/// Incremental orthonormal row-space basis; counts how many of a row set
/// fall outside the current span before optionally absorbing them.
class SpanTracker {
 public:
  [[nodiscard]] int rank() const { return static_cast<int>(basis_.size()); }

  /// Rank gain if `rows` were added (accounts for dependencies inside
  /// `rows` themselves). Does not modify the basis.
  [[nodiscard]] int gain(const std::vector<Eigen::VectorXd>& rows) const {
    std::vector<Eigen::VectorXd> local;
    int count = 0;
    for (const Eigen::VectorXd& row : rows) {
      Eigen::VectorXd residual = project_out(row);
      for (const Eigen::VectorXd& q : local)
        residual -= q.dot(residual) * q;
      const double norm = residual.norm();
      if (norm > kRankTolerance * std::max(1.0, row.norm())) {
        local.push_back(residual / norm);
        ++count;
      }
    }
    return count;
  }

  void absorb(const std::vector<Eigen::VectorXd>& rows) {
    for (const Eigen::VectorXd& row : rows) {
      Eigen::VectorXd residual = project_out(row);
      const double norm = residual.norm();
      if (norm > kRankTolerance * std::max(1.0, row.norm()))
        basis_.push_back(residual / norm);
    }
  }

 private:
  [[nodiscard]] Eigen::VectorXd project_out(const Eigen::VectorXd& row) const {
    Eigen::VectorXd residual = row;
    // two Gram-Schmidt sweeps for numerical safety
    for (int sweep = 0; sweep < 2; ++sweep)
      for (const Eigen::VectorXd& q : basis_)
        residual -= q.dot(residual) * q;
    return residual;
  }

  std::vector<Eigen::VectorXd> basis_;
};

}  // namespace

PmuPlacement greedy_pmu_placement(const PowerNetwork& net,
                                  const PmuPlacement* warm_start) {
  const int n = net.bus_count();
  const int dim = 2 * n;

  PmuPlacement placement;
  SpanTracker span;
  std::vector<char> used(n, 0);

  if (warm_start != nullptr) {
    warm_start->validate(net);
    placement = *warm_start;
    for (const PmuSpec& pmu : placement.pmus) {
      used[pmu.bus] = 1;
      std::vector<Eigen::VectorXd> rows;
      auto push_rows = [&](const std::array<RowNonzeros, 2>& pair) {
        for (const RowNonzeros& nz : pair) {
          Eigen::VectorXd row = Eigen::VectorXd::Zero(dim);
          for (const auto& [col, coeff] : nz) row[col] = coeff;
          rows.push_back(std::move(row));
        }
      };
      push_rows(voltage_measurement_rows(pmu.bus, n));
      for (int branch_index : pmu.branches) {
        const Branch& br = net.branch(branch_index);
        push_rows(current_measurement_rows(
            br, br.from_bus == pmu.bus ? BranchSide::From : BranchSide::To,
            n));
      }
      span.absorb(rows);
    }
    if (span.rank() == dim) return placement;
  }

  // candidate rows are topology-fixed; compute once
  std::vector<std::vector<Eigen::VectorXd>> candidate_rows(n);
  for (int bus = 0; bus < n; ++bus) candidate_rows[bus] = pmu_rows(net, bus);

  while (span.rank() < dim) {
    int best_bus = -1;
    int best_gain = 0;
    for (int bus = 0; bus < n; ++bus) {
      if (used[bus]) continue;
      const int gain = span.gain(candidate_rows[bus]);
      if (gain > best_gain) {
        best_gain = gain;
        best_bus = bus;
      }
    }
    if (best_bus < 0)
      throw NumericalError("greedy placement stalled before observability");
    used[best_bus] = 1;
    span.absorb(candidate_rows[best_bus]);
    PmuSpec pmu;
    pmu.bus = best_bus;
    pmu.branches = net.incident_branches(best_bus);
    placement.pmus.push_back(std::move(pmu));
  }
  return placement;
}

}  // namespace gridse
