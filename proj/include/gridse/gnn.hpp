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
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridse/graph.hpp"
#include "gridse/tensor.hpp"

namespace gridse {

enum class Activation : std::uint8_t { ReLU = 0, Tanh = 1 };
enum class Normalization : std::uint8_t { MeanBatchNorm = 0, None = 1 };

/// Hidden width of the two-layer attention scorer (architecture
/// constant; the scorer maps concatenated embedding pairs to a scalar).
inline constexpr int kAttentionHiddenWidth = 16;

struct GnnHyperparameters {
  int embedding_size = 64;   ///< s
  int message_size = 64;     ///< u (kept equal to s by default)
  int num_layers = 4;        ///< K rounds of (factor layer, variable layer)
  double learning_rate = 4e-4;
  int batch_size = 32;
  Activation activation = Activation::ReLU;
  Normalization normalization = Normalization::MeanBatchNorm;

  void validate() const;
};

/// Affine map y = x W + b with W: in x out, b: 1 x out.
struct LinearParams {
  Eigen::MatrixXd weight;
  Eigen::MatrixXd bias;
};

/// Two-layer feed-forward map (hidden activation applied between).
struct TwoLayerParams {
  LinearParams first;
  LinearParams second;
};

/// Parameters of one variable-aggregating layer: distinct message
/// functions for factor-to-variable and variable-to-variable edges, one
/// attention scorer over the union neighbourhood, one update map.
struct VariableLayerParams {
  TwoLayerParams message_fv;
  TwoLayerParams message_vv;
  TwoLayerParams attention;
  LinearParams update;
};

/// Parameters of one factor-aggregating layer.
struct FactorLayerParams {
  TwoLayerParams message_vf;
  TwoLayerParams attention;
  LinearParams update;
};

/// A named, disjoint slice of the model's trainable parameters.
struct ParameterGroup {
  std::string name;
  std::vector<Eigen::MatrixXd*> params;
};

/// The full GAT model over augmented factor graphs. Trainable parameter
/// count is independent of the network size except for the variable
/// input transform, whose input width is the binary index encoding
/// length ceil(log2(2n)).
class GnnModel {
 public:
  GnnModel() = default;

  /// Fan-in-scaled uniform init (U[-sqrt(1/fan_in), +sqrt(1/fan_in)]),
  /// zero biases; deterministic in `seed`.
  static GnnModel init(const GnnHyperparameters& hp,
                       int variable_feature_width, std::uint64_t seed);

  [[nodiscard]] const GnnHyperparameters& hyperparameters() const {
    return hp_;
  }
  [[nodiscard]] int variable_feature_width() const {
    return variable_feature_width_;
  }

  /// Disjoint named groups covering every trainable parameter.
  [[nodiscard]] std::vector<ParameterGroup> parameter_groups();
  [[nodiscard]] std::int64_t count_parameters() const;

  void save(const std::filesystem::path& path) const;
  static GnnModel load(const std::filesystem::path& path);

  LinearParams input_factor;
  LinearParams input_variable;
  std::vector<FactorLayerParams> factor_layers;
  std::vector<VariableLayerParams> variable_layers;
  TwoLayerParams prediction;

  /// Running means for mean-only batch normalization at inference, one
  /// per round and node kind.
  std::vector<Eigen::RowVectorXd> running_mean_factor;
  std::vector<Eigen::RowVectorXd> running_mean_variable;

 private:
  GnnHyperparameters hp_;
  int variable_feature_width_ = 1;
};

/// Disjoint union of graphs prepared for batched tensor ops. Directed
/// edge lists refer to row indices of the stacked embedding matrices.
/// The batch must outlive any tape forward built from it.
struct GraphBatch {
  Eigen::MatrixXd factor_features;    ///< F_total x kFactorFeatureWidth
  Eigen::MatrixXd variable_features;  ///< V_total x width
  std::vector<int> vf_src, vf_dst;    ///< variable -> factor
  std::vector<int> fv_src, fv_dst;    ///< factor -> variable
  std::vector<int> vv_src, vv_dst;    ///< variable -> variable (both ways)
  /// destination segments of the variable layer's combined edge list
  /// (fv edges first, then vv edges)
  std::vector<int> combined_dst;
  Eigen::VectorXd labels;             ///< V_total, empty when unlabeled
  int num_graphs = 0;

  [[nodiscard]] int factor_rows() const {
    return static_cast<int>(factor_features.rows());
  }
  [[nodiscard]] int variable_rows() const {
    return static_cast<int>(variable_features.rows());
  }

  static GraphBatch assemble(
      std::span<const AugmentedFactorGraph* const> graphs,
      std::span<const Eigen::VectorXd* const> labels = {});
};

/// Handle to one recorded forward pass.
struct TapeForward {
  ad::Tape::Id predictions = -1;           ///< V_total x 1
  ad::Tape::Id loss = -1;                  ///< 1x1, only when labels present
  std::vector<ad::Tape::Id> param_ids;     ///< registry order
  /// per-round embeddings after each layer (for tests and diagnostics)
  std::vector<ad::Tape::Id> factor_embeddings;
  std::vector<ad::Tape::Id> variable_embeddings;
  /// batch means observed per round (training mode, MeanBatchNorm only)
  std::vector<Eigen::RowVectorXd> batch_mean_factor;
  std::vector<Eigen::RowVectorXd> batch_mean_variable;
};

/// Records the full forward pass (K rounds of factor layer then variable
/// layer, prediction head, optional loss) on the tape. `training`
/// selects batch statistics instead of running means for normalization.
TapeForward gnn_forward(ad::Tape& tape, GnnModel& model,
                        const GraphBatch& batch, bool training);

/// Convenience single-graph inference (running means, no gradients,
/// row-exact products so outputs are exactly node-local).
/// Output is ordered by state index.
[[nodiscard]] Eigen::VectorXd predict(GnnModel& model,
                                      const AugmentedFactorGraph& graph);

/// One message function evaluation on a single (source, destination)
/// embedding pair; two-layer feed-forward over the concatenation.
[[nodiscard]] Eigen::VectorXd eval_message(const TwoLayerParams& params,
                                           const Eigen::VectorXd& h_src,
                                           const Eigen::VectorXd& h_dst,
                                           Activation activation);

/// Attention weights of one destination over its neighbours: feed-forward
/// scores on the concatenated (neighbour, destination) embeddings,
/// softmax-normalized. Throws on an empty neighbour set.
[[nodiscard]] Eigen::VectorXd eval_attention_weights(
    const TwoLayerParams& params, const Eigen::MatrixXd& neighbour_rows,
    const Eigen::VectorXd& h_dst, Activation activation);

/// Mean squared error of Eq.-style loss: sum((pred-label)^2) / count.
[[nodiscard]] double mse_loss(const Eigen::VectorXd& predictions,
                              const Eigen::VectorXd& labels);

/// Adam with bias correction; beta1=0.9, beta2=0.999, eps=1e-8.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(double learning_rate) : lr_(learning_rate) {}

  void step(const std::vector<Eigen::MatrixXd*>& params,
            const std::vector<const Eigen::MatrixXd*>& grads);

 private:
  double lr_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  std::int64_t t_ = 0;
  std::vector<Eigen::MatrixXd> m_, v_;
};

/// One labeled training example: a graph plus its 2n-vector of labels.
struct GraphSample {
  const AugmentedFactorGraph* graph = nullptr;
  Eigen::VectorXd labels;
};

struct TrainOptions {
  int epochs = 200;
  std::uint64_t seed = 0;
  double running_mean_momentum = 0.1;
  bool verbose = false;
};

struct TrainingRun {
  std::vector<double> train_loss;  ///< one entry per completed epoch
  std::vector<double> val_loss;
  int best_epoch = -1;
  double best_val_loss = 0.0;
  GnnModel model;  ///< best-validation checkpoint
};

/// Deterministic minibatch Adam training; retains the best-validation
/// model. Throws NumericalError (with epoch/batch) on non-finite loss.
TrainingRun train_gnn(GnnModel model, std::span<const GraphSample> train_set,
                      std::span<const GraphSample> val_set,
                      const TrainOptions& options);

/// Writes `epoch,train_loss,val_loss` rows.
void write_training_csv(const std::filesystem::path& path,
                        const TrainingRun& run);

}  // namespace gridse
