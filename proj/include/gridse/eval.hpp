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

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gridse/dataset.hpp"
#include "gridse/gnn.hpp"

namespace gridse {

/// MSE and per-node mean squared errors of one estimator on one split.
struct MethodMetrics {
  double mse = 0.0;
  Eigen::VectorXd per_node;  ///< 2n, mean over evaluated samples
  int evaluated = 0;
  int failed = 0;            ///< WLS SingularGain failures
  double wall_time_s = 0.0;
};

struct MetricsReport {
  MethodMetrics gnn;
  std::optional<MethodMetrics> exact_wls;
  std::optional<MethodMetrics> approx_wls;
  std::string scenario;

  [[nodiscard]] nlohmann::json to_json() const;
};

/// Runs the GNN (when a model is given) and both WLS modes against the
/// split's labels. Removed phasors are honored: the estimators only see
/// the surviving measurements while labels stay full-system solutions.
[[nodiscard]] MetricsReport evaluate_methods(const Dataset& dataset,
                                             const PowerNetwork& net,
                                             Split split, GnnModel* model,
                                             const std::string& scenario = {});

/// Writes `node_index,pred_re...` style per-node CSV: one row per state
/// index with the mean squared error of each method.
void write_per_node_csv(const std::filesystem::path& path,
                        const MetricsReport& report);

/// Per-sample per-node values of one test sample (plot-ready, Fig-style):
/// bus index, GNN prediction, label, approximate-WLS solution.
void write_sample_trace_csv(const std::filesystem::path& path,
                            const Dataset& dataset, const PowerNetwork& net,
                            Split split, int sample_index, GnnModel& model);

/// Median wall time of one full-graph GNN inference, in seconds.
[[nodiscard]] double time_gnn_inference(GnnModel& model,
                                        const AugmentedFactorGraph& graph,
                                        int repeats);

/// Median wall time of one WLS solve, in seconds.
[[nodiscard]] double time_wls_solve(const MeasurementSystem& sys, WlsMode mode,
                                    int repeats);

}  // namespace gridse
