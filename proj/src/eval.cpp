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

#include "gridse/eval.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "gridse/errors.hpp"

namespace gridse {

using nlohmann::json;

namespace {

json method_json(const MethodMetrics& m) {
  json j;
  j["mse"] = m.mse;
  j["evaluated"] = m.evaluated;
  j["failed"] = m.failed;
  j["wall_time_s"] = m.wall_time_s;
  return j;
}

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

json MetricsReport::to_json() const {
  json j;
  j["scenario"] = scenario;
  j["gnn"] = method_json(gnn);
  if (exact_wls) j["exact_wls"] = method_json(*exact_wls);
  if (approx_wls) j["approx_wls"] = method_json(*approx_wls);
  return j;
}

MetricsReport evaluate_methods(const Dataset& dataset, const PowerNetwork& net,
                               Split split, GnnModel* model,
                               const std::string& scenario) {
  const auto samples = dataset.split(split);
  if (samples.empty()) throw DataError("cannot evaluate an empty split");
  const int dim = static_cast<int>(samples[0].label.size());

  MetricsReport report;
  report.scenario = scenario;

  if (model != nullptr) {
    const PreparedSplit prepared = prepare_split(dataset, net, split);
    Eigen::VectorXd per_node = Eigen::VectorXd::Zero(dim);
    const double t0 = now_seconds();
    for (std::size_t i = 0; i < prepared.samples.size(); ++i) {
      const Eigen::VectorXd pred =
          predict(*model, *prepared.samples[i].graph);
      per_node += (pred - prepared.samples[i].labels).cwiseAbs2();
    }
    report.gnn.wall_time_s = now_seconds() - t0;
    report.gnn.evaluated = static_cast<int>(prepared.samples.size());
    report.gnn.per_node = per_node / static_cast<double>(samples.size());
    report.gnn.mse = report.gnn.per_node.mean();
  }

  auto run_wls = [&](WlsMode mode) {
    MethodMetrics metrics;
    Eigen::VectorXd per_node = Eigen::VectorXd::Zero(dim);
    const double t0 = now_seconds();
    for (const Sample& sample : samples) {
      const MeasurementSystem sys = sample_system(dataset, net, sample);
      try {
        const WlsSolution sol = mode == WlsMode::Exact
                                    ? solve_exact(sys)
                                    : solve_approximate(sys);
        per_node += (sol.x.flat() - sample.label).cwiseAbs2();
        ++metrics.evaluated;
      } catch (const SingularGainError&) {
        ++metrics.failed;
      }
    }
    metrics.wall_time_s = now_seconds() - t0;
    if (metrics.evaluated > 0) {
      metrics.per_node = per_node / static_cast<double>(metrics.evaluated);
      metrics.mse = metrics.per_node.mean();
    } else {
      metrics.per_node = Eigen::VectorXd::Constant(
          dim, std::numeric_limits<double>::quiet_NaN());
      metrics.mse = std::numeric_limits<double>::quiet_NaN();
    }
    return metrics;
  };
  report.exact_wls = run_wls(WlsMode::Exact);
  report.approx_wls = run_wls(WlsMode::Approximate);
  return report;
}

void write_per_node_csv(const std::filesystem::path& path,
                        const MetricsReport& report) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write per-node CSV: " + path.string());
  out << "state_index,gnn_mse,exact_wls_mse,approx_wls_mse\n";
  const Eigen::Index dim = report.gnn.per_node.size();
  for (Eigen::Index i = 0; i < dim; ++i) {
    out << i << ',' << report.gnn.per_node[i] << ',';
    if (report.exact_wls && report.exact_wls->evaluated > 0)
      out << report.exact_wls->per_node[i];
    out << ',';
    if (report.approx_wls && report.approx_wls->evaluated > 0)
      out << report.approx_wls->per_node[i];
    out << '\n';
  }
}

void write_sample_trace_csv(const std::filesystem::path& path,
                            const Dataset& dataset, const PowerNetwork& net,
                            Split split, int sample_index, GnnModel& model) {
  const auto samples = dataset.split(split);
  if (sample_index < 0 || sample_index >= static_cast<int>(samples.size()))
    throw DataError("sample index out of range");
  const Sample& sample = samples[static_cast<std::size_t>(sample_index)];
  const MeasurementSystem sys = sample_system(dataset, net, sample);
  AugmentedFactorGraph graph = AugmentedFactorGraph::build(net, sys);
  const Eigen::VectorXd pred = predict(model, graph);

  Eigen::VectorXd approx = Eigen::VectorXd::Constant(
      sample.label.size(), std::numeric_limits<double>::quiet_NaN());
  try {
    approx = solve_approximate(sys).x.flat();
  } catch (const SingularGainError&) {
    // leave NaN columns; the scenario can be unobservable by design
  }

  const int n = net.bus_count();
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write trace CSV: " + path.string());
  out << "bus,prediction_re,prediction_im,label_re,label_im,approx_re,"
         "approx_im\n";
  for (int bus = 0; bus < n; ++bus) {
    out << bus << ',' << pred[bus] << ',' << pred[n + bus] << ','
        << sample.label[bus] << ',' << sample.label[n + bus] << ','
        << approx[bus] << ',' << approx[n + bus] << '\n';
  }
}

namespace {

template <typename Fn>
double median_time(int repeats, Fn&& fn) {
  std::vector<double> times;
  times.reserve(static_cast<std::size_t>(repeats));
  for (int r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    const auto stop = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double>(stop - start).count());
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

}  // namespace

double time_gnn_inference(GnnModel& model, const AugmentedFactorGraph& graph,
                          int repeats) {
  volatile double sink = 0.0;
  sink = predict(model, graph)[0];  // warmup
  return median_time(repeats, [&] {
    const Eigen::VectorXd pred = predict(model, graph);
    sink = sink + pred[0];
  });
}

double time_wls_solve(const MeasurementSystem& sys, WlsMode mode,
                      int repeats) {
  volatile double sink = 0.0;
  return median_time(repeats, [&] {
    const WlsSolution sol =
        mode == WlsMode::Exact ? solve_exact(sys) : solve_approximate(sys);
    sink = sink + sol.residual_norm;
  });
}

}  // namespace gridse
