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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gridse/gnn.hpp"
#include "gridse/graph.hpp"
#include "gridse/measurement.hpp"
#include "gridse/wls.hpp"

namespace gridse {

/// Random truth-state envelope: per-bus voltage magnitude and angle are
/// drawn uniformly from these ranges.
struct TruthEnvelope {
  double mag_min = 0.95;
  double mag_max = 1.05;
  double ang_min = -0.35;
  double ang_max = 0.05;
};

/// One labeled example. `label` is always the exact-WLS solution of the
/// full measurement set, even when `removed_phasors` hides some features
/// from the estimator.
struct Sample {
  std::uint64_t seed = 0;
  Eigen::VectorXd truth;                      ///< 2n
  Eigen::VectorXd label;                      ///< 2n
  std::vector<RectangularMoments> moments;    ///< per phasor
  int outlier_phasor = -1;                    ///< -1 = clean
  double outlier_factor = 0.0;
  std::vector<int> removed_phasors;           ///< load-time transform
};

struct DatasetSizes {
  int train = 0;
  int val = 0;
  int test = 0;

  [[nodiscard]] int total() const { return train + val + test; }
};

enum class Split : std::uint8_t { Train = 0, Validation = 1, Test = 2 };

/// A generated dataset plus the manifest needed to regenerate it
/// bit-for-bit. Samples are ordered train, validation, test.
struct Dataset {
  std::uint64_t network_hash = 0;
  PmuPlacement placement;
  double variance = 0.0;
  double var_floor = 1e-12;
  std::uint64_t base_seed = 0;
  DatasetSizes sizes;
  TruthEnvelope envelope;
  std::vector<Sample> samples;

  [[nodiscard]] std::span<Sample> split(Split which);
  [[nodiscard]] std::span<const Sample> split(Split which) const;
  [[nodiscard]] nlohmann::json manifest() const;
};

/// Stream-tagged seed derivation so truth, noise, and outlier draws come
/// from independent deterministic streams.
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t seed,
                                        std::uint64_t stream);

[[nodiscard]] StateVector draw_truth_state(int bus_count,
                                           const TruthEnvelope& envelope,
                                           std::uint64_t seed);

/// Per sample: draw a truth state, simulate noisy measurements, label
/// with the exact WLS solution. Fails fast if the placement is not
/// observable. Deterministic from base_seed (sample seeds are
/// base_seed + sample_index).
[[nodiscard]] Dataset generate_dataset(const PowerNetwork& net,
                                       const PmuPlacement& placement,
                                       double variance,
                                       const DatasetSizes& sizes,
                                       std::uint64_t base_seed,
                                       const TruthEnvelope& envelope = {});

struct RemovalSpec {
  std::vector<int> phasors;  ///< explicit phasor indices
  std::vector<int> pmus;     ///< whole PMUs (all their phasors)
};

/// Marks the listed phasors as removed in every sample of the split.
/// Labels are untouched; factor nodes are absent at graph build.
void apply_phasor_removal(Dataset& dataset, Split split,
                          const RemovalSpec& removal);

/// Corrupts the given fraction of the split's samples with one
/// inject_outlier corruption each (labels stay clean). The network is
/// needed to reconstruct the polar measurements from the sample seeds.
void mix_outlier_samples(Dataset& dataset, const PowerNetwork& net,
                         Split split, double fraction, double factor,
                         std::uint64_t seed);

void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
[[nodiscard]] Dataset load_dataset(const std::filesystem::path& path);

/// Graph-form view of a split: per-sample augmented factor graphs (with
/// removal applied) plus labels, ready for training or evaluation.
struct PreparedSplit {
  std::vector<AugmentedFactorGraph> graphs;
  std::vector<GraphSample> samples;
};

[[nodiscard]] PreparedSplit prepare_split(const Dataset& dataset,
                                          const PowerNetwork& net,
                                          Split split);

/// Measurement system of one sample, honoring its removal list.
[[nodiscard]] MeasurementSystem sample_system(const Dataset& dataset,
                                              const PowerNetwork& net,
                                              const Sample& sample);

/// Measurement system of one sample ignoring removals (the full set the
/// label was computed from).
[[nodiscard]] MeasurementSystem sample_full_system(const Dataset& dataset,
                                                   const PowerNetwork& net,
                                                   const Sample& sample);

}  // namespace gridse
