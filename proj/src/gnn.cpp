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

#include "gridse/gnn.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "gridse/errors.hpp"
#include "gridse/rng.hpp"

namespace gridse {

using ad::Tape;
using nlohmann::json;

void GnnHyperparameters::validate() const {
  if (embedding_size < 1) throw ConfigError("embedding_size must be >= 1");
  if (message_size < 1) throw ConfigError("message_size must be >= 1");
  if (num_layers < 1) throw ConfigError("num_layers must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
}

namespace {

/// Visits every trainable matrix in a fixed, documented order; `fn`
/// receives (group name, matrix). The grouping mirrors the loss
/// function's parameter-set partition.
template <typename Model, typename Fn>
void visit_params(Model& model, Fn&& fn) {
  fn("input_factor", model.input_factor.weight);
  fn("input_factor", model.input_factor.bias);
  fn("input_variable", model.input_variable.weight);
  fn("input_variable", model.input_variable.bias);
  for (std::size_t k = 0; k < model.factor_layers.size(); ++k) {
    const std::string prefix = "layer" + std::to_string(k) + "_";
    auto& fl = model.factor_layers[k];
    auto two = [&fn](const std::string& name, auto& tl) {
      fn(name, tl.first.weight);
      fn(name, tl.first.bias);
      fn(name, tl.second.weight);
      fn(name, tl.second.bias);
    };
    two(prefix + "factor_message_vf", fl.message_vf);
    two(prefix + "factor_attention", fl.attention);
    fn(prefix + "factor_update", fl.update.weight);
    fn(prefix + "factor_update", fl.update.bias);
    auto& vl = model.variable_layers[k];
    two(prefix + "variable_message_fv", vl.message_fv);
    two(prefix + "variable_message_vv", vl.message_vv);
    two(prefix + "variable_attention", vl.attention);
    fn(prefix + "variable_update", vl.update.weight);
    fn(prefix + "variable_update", vl.update.bias);
  }
  fn("prediction", model.prediction.first.weight);
  fn("prediction", model.prediction.first.bias);
  fn("prediction", model.prediction.second.weight);
  fn("prediction", model.prediction.second.bias);
}

LinearParams make_linear(int in, int out, Rng& rng) {
  LinearParams p;
  p.weight.resize(in, out);
  const double bound = std::sqrt(1.0 / static_cast<double>(in));
  for (Eigen::Index c = 0; c < p.weight.cols(); ++c)
    for (Eigen::Index r = 0; r < p.weight.rows(); ++r)
      p.weight(r, c) = rng.uniform(-bound, bound);
  p.bias = Eigen::MatrixXd::Zero(1, out);
  return p;
}

TwoLayerParams make_two_layer(int in, int hidden, int out, Rng& rng) {
  TwoLayerParams p;
  p.first = make_linear(in, hidden, rng);
  p.second = make_linear(hidden, out, rng);
  return p;
}

}  // namespace

GnnModel GnnModel::init(const GnnHyperparameters& hp,
                        int variable_feature_width, std::uint64_t seed) {
  hp.validate();
  if (variable_feature_width < 1)
    throw ConfigError("variable_feature_width must be >= 1");
  GnnModel model;
  model.hp_ = hp;
  model.variable_feature_width_ = variable_feature_width;
  Rng rng(seed);
  const int s = hp.embedding_size;
  const int u = hp.message_size;
  model.input_factor = make_linear(kFactorFeatureWidth, s, rng);
  model.input_variable = make_linear(variable_feature_width, s, rng);
  const int attention_hidden = kAttentionHiddenWidth;
  for (int k = 0; k < hp.num_layers; ++k) {
    FactorLayerParams fl;
    fl.message_vf = make_two_layer(2 * s, u, u, rng);
    fl.attention = make_two_layer(2 * s, attention_hidden, 1, rng);
    fl.update = make_linear(u, s, rng);
    model.factor_layers.push_back(std::move(fl));
    VariableLayerParams vl;
    vl.message_fv = make_two_layer(2 * s, u, u, rng);
    vl.message_vv = make_two_layer(2 * s, u, u, rng);
    vl.attention = make_two_layer(2 * s, attention_hidden, 1, rng);
    vl.update = make_linear(u, s, rng);
    model.variable_layers.push_back(std::move(vl));
    model.running_mean_factor.emplace_back(Eigen::RowVectorXd::Zero(s));
    model.running_mean_variable.emplace_back(Eigen::RowVectorXd::Zero(s));
  }
  model.prediction = make_two_layer(s, s, 1, rng);
  return model;
}

std::vector<ParameterGroup> GnnModel::parameter_groups() {
  std::vector<ParameterGroup> groups;
  visit_params(*this, [&groups](const std::string& name, Eigen::MatrixXd& m) {
    if (groups.empty() || groups.back().name != name)
      groups.push_back({name, {}});
    groups.back().params.push_back(&m);
  });
  return groups;
}

std::int64_t GnnModel::count_parameters() const {
  std::int64_t count = 0;
  visit_params(*this,
               [&count](const std::string&, const Eigen::MatrixXd& m) {
                 count += static_cast<std::int64_t>(m.size());
               });
  return count;
}

namespace {

constexpr char kCheckpointMagic[8] = {'G', 'S', 'E', 'C', 'K', 'P', '0', '1'};

void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  const std::uint32_t rows = static_cast<std::uint32_t>(m.rows());
  const std::uint32_t cols = static_cast<std::uint32_t>(m.cols());
  out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
  out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
  // column-major coefficient order (Eigen's storage)
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
}

Eigen::MatrixXd read_matrix(std::istream& in) {
  std::uint32_t rows = 0, cols = 0;
  in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
  in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
  if (!in) throw DataError("truncated checkpoint");
  Eigen::MatrixXd m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * m.size()));
  if (!in) throw DataError("truncated checkpoint");
  return m;
}

}  // namespace

void GnnModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint: " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  json header;
  header["version"] = 1;
  header["embedding_size"] = hp_.embedding_size;
  header["message_size"] = hp_.message_size;
  header["num_layers"] = hp_.num_layers;
  header["learning_rate"] = hp_.learning_rate;
  header["batch_size"] = hp_.batch_size;
  header["activation"] = hp_.activation == Activation::ReLU ? "relu" : "tanh";
  header["normalization"] =
      hp_.normalization == Normalization::MeanBatchNorm ? "mean" : "none";
  header["variable_feature_width"] = variable_feature_width_;
  const std::string header_text = header.dump();
  const std::uint32_t header_len =
      static_cast<std::uint32_t>(header_text.size());
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_text.data(), static_cast<std::streamsize>(header_len));
  visit_params(*this, [&out](const std::string&, const Eigen::MatrixXd& m) {
    write_matrix(out, m);
  });
  for (const auto& rm : running_mean_factor) write_matrix(out, rm);
  for (const auto& rm : running_mean_variable) write_matrix(out, rm);
  if (!out) throw ConfigError("failed writing checkpoint: " + path.string());
}

GnnModel GnnModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw DataError("not a checkpoint file: " + path.string());
  std::uint32_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw DataError("truncated checkpoint header");
  const json header = json::parse(header_text);
  if (header.at("version").get<int>() != 1)
    throw DataError("unsupported checkpoint version");
  GnnHyperparameters hp;
  hp.embedding_size = header.at("embedding_size").get<int>();
  hp.message_size = header.at("message_size").get<int>();
  hp.num_layers = header.at("num_layers").get<int>();
  hp.learning_rate = header.at("learning_rate").get<double>();
  hp.batch_size = header.at("batch_size").get<int>();
  hp.activation = header.at("activation").get<std::string>() == "tanh"
                      ? Activation::Tanh
                      : Activation::ReLU;
  hp.normalization = header.at("normalization").get<std::string>() == "none"
                         ? Normalization::None
                         : Normalization::MeanBatchNorm;
  GnnModel model =
      init(hp, header.at("variable_feature_width").get<int>(), 0);
  visit_params(model, [&in](const std::string&, Eigen::MatrixXd& m) {
    const Eigen::MatrixXd loaded = read_matrix(in);
    if (loaded.rows() != m.rows() || loaded.cols() != m.cols())
      throw DataError("checkpoint shape mismatch");
    m = loaded;
  });
  for (auto& rm : model.running_mean_factor) rm = read_matrix(in).row(0);
  for (auto& rm : model.running_mean_variable) rm = read_matrix(in).row(0);
  return model;
}

GraphBatch GraphBatch::assemble(
    std::span<const AugmentedFactorGraph* const> graphs,
    std::span<const Eigen::VectorXd* const> labels) {
  if (!labels.empty() && labels.size() != graphs.size())
    throw DataError("label count does not match graph count");
  GraphBatch batch;
  batch.num_graphs = static_cast<int>(graphs.size());
  int total_v = 0, total_f = 0, width = 0;
  for (const AugmentedFactorGraph* g : graphs) {
    total_v += g->variable_count();
    total_f += g->factor_count();
    const int w = g->variable_nodes().empty()
                      ? 0
                      : static_cast<int>(g->variable_nodes()[0].features.size());
    if (width == 0) width = w;
    if (w != width)
      throw DataError("graphs in a batch must share the variable feature width");
  }
  batch.factor_features.resize(total_f, kFactorFeatureWidth);
  batch.variable_features.resize(total_v, width);
  if (!labels.empty()) batch.labels.resize(total_v);

  int offset_v = 0, offset_f = 0;
  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    const AugmentedFactorGraph& g = *graphs[gi];
    std::unordered_map<int, int> factor_row;
    for (std::size_t i = 0; i < g.factor_nodes().size(); ++i) {
      const FactorNode& f = g.factor_nodes()[i];
      factor_row[f.id] = offset_f + static_cast<int>(i);
      for (int c = 0; c < kFactorFeatureWidth; ++c)
        batch.factor_features(offset_f + static_cast<int>(i), c) =
            f.features[static_cast<std::size_t>(c)];
    }
    for (std::size_t i = 0; i < g.variable_nodes().size(); ++i) {
      const VariableNode& v = g.variable_nodes()[i];
      for (int c = 0; c < width; ++c)
        batch.variable_features(offset_v + static_cast<int>(i), c) =
            static_cast<double>(v.features[static_cast<std::size_t>(c)]);
    }
    for (const auto& [fid, vid] : g.fv_edges()) {
      const int fr = factor_row.at(fid);
      const int vr = offset_v + vid;  // variable id == state index
      batch.vf_src.push_back(vr);
      batch.vf_dst.push_back(fr);
      batch.fv_src.push_back(fr);
      batch.fv_dst.push_back(vr);
    }
    for (const auto& [a, b] : g.vv_edges()) {
      batch.vv_src.push_back(offset_v + a);
      batch.vv_dst.push_back(offset_v + b);
      batch.vv_src.push_back(offset_v + b);
      batch.vv_dst.push_back(offset_v + a);
    }
    if (!labels.empty()) {
      const Eigen::VectorXd& y = *labels[gi];
      if (y.size() != g.variable_count())
        throw DataError("label length does not match variable count");
      batch.labels.segment(offset_v, y.size()) = y;
    }
    offset_v += g.variable_count();
    offset_f += g.factor_count();
  }
  batch.combined_dst = batch.fv_dst;
  batch.combined_dst.insert(batch.combined_dst.end(), batch.vv_dst.begin(),
                            batch.vv_dst.end());
  return batch;
}

namespace {

/// Per-tape binding of model parameters to leaf nodes.
struct Binding {
  std::unordered_map<const Eigen::MatrixXd*, Tape::Id> ids;
  std::vector<Tape::Id> ordered;

  Tape::Id of(const Eigen::MatrixXd& m) const { return ids.at(&m); }
};

Binding bind_params(Tape& tape, GnnModel& model) {
  Binding binding;
  visit_params(model, [&](const std::string&, Eigen::MatrixXd& m) {
    const Tape::Id id = tape.input(m);
    binding.ids[&m] = id;
    binding.ordered.push_back(id);
  });
  return binding;
}

Tape::Id apply_activation(Tape& tape, Tape::Id x, Activation activation) {
  return activation == Activation::ReLU ? tape.relu(x) : tape.tanh_act(x);
}

Tape::Id apply_linear(Tape& tape, const Binding& binding, Tape::Id x,
                      const LinearParams& p) {
  return tape.linear(x, binding.of(p.weight), binding.of(p.bias));
}

Tape::Id apply_two_layer(Tape& tape, const Binding& binding, Tape::Id x,
                         const TwoLayerParams& p, Activation activation) {
  const Tape::Id hidden =
      apply_activation(tape, apply_linear(tape, binding, x, p.first), activation);
  return apply_linear(tape, binding, hidden, p.second);
}

/// Edge-wise two-layer map over (source, destination) embedding pairs.
/// The first layer's weight acts on the concatenation, so it is applied
/// as two per-node halves and summed per edge; mathematically identical
/// to concatenating first, but the big product runs over nodes, not
/// edges.
Tape::Id edge_two_layer(Tape& tape, const Binding& binding,
                        Tape::Id src_nodes, const std::vector<int>* src,
                        Tape::Id dst_nodes, const std::vector<int>* dst,
                        const TwoLayerParams& p, Activation activation,
                        int embedding_size) {
  const Tape::Id w1 = binding.of(p.first.weight);
  const Tape::Id src_half = tape.slice_rows(w1, 0, embedding_size);
  const Tape::Id dst_half = tape.slice_rows(w1, embedding_size, embedding_size);
  const Tape::Id a = tape.matmul(src_nodes, src_half);
  const Tape::Id b = tape.matmul(dst_nodes, dst_half);
  const Tape::Id hidden = tape.gather_sum_bias(
      a, src, b, dst, binding.of(p.first.bias));
  return apply_linear(tape, binding,
                      apply_activation(tape, hidden, activation), p.second);
}

/// Update-and-normalize tail shared by both layer kinds. Returns the
/// normalized embedding id and records the batch mean in training mode.
Tape::Id update_and_normalize(Tape& tape, const Binding& binding,
                              Tape::Id aggregate, const LinearParams& update,
                              const GnnHyperparameters& hp, bool training,
                              const Eigen::RowVectorXd& running_mean,
                              Eigen::RowVectorXd* batch_mean_out) {
  Tape::Id h = apply_activation(
      tape, apply_linear(tape, binding, aggregate, update), hp.activation);
  if (hp.normalization == Normalization::None) return h;
  if (training) {
    const Eigen::MatrixXd& v = tape.value(h);
    *batch_mean_out = v.rows() > 0
                          ? Eigen::RowVectorXd(v.colwise().mean())
                          : Eigen::RowVectorXd::Zero(v.cols());
    return tape.subtract_col_mean(h);
  }
  return tape.subtract_const_rows(h, running_mean);
}

}  // namespace

TapeForward gnn_forward(Tape& tape, GnnModel& model, const GraphBatch& batch,
                        bool training) {
  const GnnHyperparameters& hp = model.hyperparameters();
  hp.validate();
  if (batch.variable_features.cols() != model.variable_feature_width())
    throw DataError("batch variable feature width does not match model");

  TapeForward fwd;
  const Binding binding = bind_params(tape, model);
  fwd.param_ids = binding.ordered;
  fwd.batch_mean_factor.resize(static_cast<std::size_t>(hp.num_layers));
  fwd.batch_mean_variable.resize(static_cast<std::size_t>(hp.num_layers));

  const Tape::Id factor_in = tape.input(batch.factor_features);
  const Tape::Id variable_in = tape.input(batch.variable_features);
  Tape::Id hf = apply_linear(tape, binding, factor_in, model.input_factor);
  Tape::Id hv = apply_linear(tape, binding, variable_in, model.input_variable);

  const int num_factors = batch.factor_rows();
  const int num_variables = batch.variable_rows();

  for (int k = 0; k < hp.num_layers; ++k) {
    const int s = hp.embedding_size;
    const FactorLayerParams& fl =
        model.factor_layers[static_cast<std::size_t>(k)];
    // factor-aggregating layer: variable -> factor messages
    {
      const Tape::Id msg =
          edge_two_layer(tape, binding, hv, &batch.vf_src, hf, &batch.vf_dst,
                         fl.message_vf, hp.activation, s);
      const Tape::Id score =
          edge_two_layer(tape, binding, hv, &batch.vf_src, hf, &batch.vf_dst,
                         fl.attention, hp.activation, s);
      const Tape::Id weights =
          tape.segment_softmax(score, &batch.vf_dst, num_factors);
      const Tape::Id aggregate =
          tape.weighted_segment_sum(msg, weights, &batch.vf_dst, num_factors);
      hf = update_and_normalize(
          tape, binding, aggregate, fl.update, hp, training,
          model.running_mean_factor[static_cast<std::size_t>(k)],
          &fwd.batch_mean_factor[static_cast<std::size_t>(k)]);
      fwd.factor_embeddings.push_back(hf);
    }
    // variable-aggregating layer consumes the updated factor embeddings
    {
      const VariableLayerParams& vl =
          model.variable_layers[static_cast<std::size_t>(k)];
      const Tape::Id msg_fv =
          edge_two_layer(tape, binding, hf, &batch.fv_src, hv, &batch.fv_dst,
                         vl.message_fv, hp.activation, s);
      const Tape::Id msg_vv =
          edge_two_layer(tape, binding, hv, &batch.vv_src, hv, &batch.vv_dst,
                         vl.message_vv, hp.activation, s);
      const Tape::Id msg = tape.concat_rows(msg_fv, msg_vv);
      const Tape::Id score_fv =
          edge_two_layer(tape, binding, hf, &batch.fv_src, hv, &batch.fv_dst,
                         vl.attention, hp.activation, s);
      const Tape::Id score_vv =
          edge_two_layer(tape, binding, hv, &batch.vv_src, hv, &batch.vv_dst,
                         vl.attention, hp.activation, s);
      const Tape::Id score = tape.concat_rows(score_fv, score_vv);
      const Tape::Id weights =
          tape.segment_softmax(score, &batch.combined_dst, num_variables);
      const Tape::Id aggregate = tape.weighted_segment_sum(
          msg, weights, &batch.combined_dst, num_variables);
      hv = update_and_normalize(
          tape, binding, aggregate, vl.update, hp, training,
          model.running_mean_variable[static_cast<std::size_t>(k)],
          &fwd.batch_mean_variable[static_cast<std::size_t>(k)]);
      fwd.variable_embeddings.push_back(hv);
    }
  }

  const Tape::Id pred_hidden = apply_activation(
      tape, apply_linear(tape, binding, hv, model.prediction.first),
      hp.activation);
  fwd.predictions = apply_linear(tape, binding, pred_hidden,
                                 model.prediction.second);
  if (batch.labels.size() > 0) {
    fwd.loss = tape.squared_error(fwd.predictions, batch.labels,
                                  1.0 / static_cast<double>(num_variables));
  }
  return fwd;
}

Eigen::VectorXd predict(GnnModel& model, const AugmentedFactorGraph& graph) {
  const AugmentedFactorGraph* graphs[] = {&graph};
  const GraphBatch batch = GraphBatch::assemble(graphs);
  Tape tape(/*row_exact_products=*/true);
  const TapeForward fwd = gnn_forward(tape, model, batch, false);
  return tape.value(fwd.predictions).col(0);
}

Eigen::VectorXd eval_message(const TwoLayerParams& params,
                             const Eigen::VectorXd& h_src,
                             const Eigen::VectorXd& h_dst,
                             Activation activation) {
  if (h_src.size() != h_dst.size())
    throw DataError("message: embedding dimension mismatch");
  if (h_src.size() + h_dst.size() != params.first.weight.rows())
    throw DataError("message: embedding/parameter dimension mismatch");
  Eigen::RowVectorXd pair(h_src.size() + h_dst.size());
  pair << h_src.transpose(), h_dst.transpose();
  Eigen::RowVectorXd hidden = pair * params.first.weight + params.first.bias;
  if (activation == Activation::ReLU)
    hidden = hidden.cwiseMax(0.0);
  else
    hidden = hidden.array().tanh();
  return (hidden * params.second.weight + params.second.bias).transpose();
}

Eigen::VectorXd eval_attention_weights(const TwoLayerParams& params,
                                       const Eigen::MatrixXd& neighbour_rows,
                                       const Eigen::VectorXd& h_dst,
                                       Activation activation) {
  const Eigen::Index deg = neighbour_rows.rows();
  if (deg == 0) throw DataError("attention over an empty neighbour set");
  Eigen::VectorXd scores(deg);
  for (Eigen::Index i = 0; i < deg; ++i) {
    const Eigen::VectorXd score = eval_message(
        params, neighbour_rows.row(i).transpose(), h_dst, activation);
    scores[i] = score[0];
  }
  const double shift = scores.maxCoeff();
  Eigen::VectorXd weights = (scores.array() - shift).exp();
  return weights / weights.sum();
}

double mse_loss(const Eigen::VectorXd& predictions,
                const Eigen::VectorXd& labels) {
  if (predictions.size() != labels.size())
    throw DataError("prediction/label size mismatch");
  if (predictions.size() == 0) return 0.0;
  return (predictions - labels).squaredNorm() /
         static_cast<double>(predictions.size());
}

void AdamOptimizer::step(const std::vector<Eigen::MatrixXd*>& params,
                         const std::vector<const Eigen::MatrixXd*>& grads) {
  if (params.size() != grads.size())
    throw NumericalError("Adam: parameter/gradient count mismatch");
  if (m_.empty()) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Eigen::MatrixXd* p : params) {
      m_.emplace_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
      v_.emplace_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
    }
  }
  ++t_;
  const double bias1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Eigen::MatrixXd& g = *grads[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    const Eigen::MatrixXd m_hat = m_[i] / bias1;
    const Eigen::MatrixXd v_hat = v_[i] / bias2;
    params[i]->array() -=
        lr_ * m_hat.array() / (v_hat.array().sqrt() + eps_);
  }
}

namespace {

double evaluate_set_loss(GnnModel& model, std::span<const GraphSample> samples,
                         int batch_size) {
  if (samples.empty()) return std::numeric_limits<double>::quiet_NaN();
  double error_sum = 0.0;
  std::int64_t count = 0;
  for (std::size_t begin = 0; begin < samples.size();
       begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end =
        std::min(samples.size(), begin + static_cast<std::size_t>(batch_size));
    std::vector<const AugmentedFactorGraph*> graphs;
    std::vector<const Eigen::VectorXd*> labels;
    for (std::size_t i = begin; i < end; ++i) {
      graphs.push_back(samples[i].graph);
      labels.push_back(&samples[i].labels);
    }
    const GraphBatch batch = GraphBatch::assemble(graphs, labels);
    Tape tape;
    const TapeForward fwd = gnn_forward(tape, model, batch, false);
    const Eigen::VectorXd pred = tape.value(fwd.predictions).col(0);
    error_sum += (pred - batch.labels).squaredNorm();
    count += pred.size();
  }
  return error_sum / static_cast<double>(count);
}

}  // namespace

TrainingRun train_gnn(GnnModel model, std::span<const GraphSample> train_set,
                      std::span<const GraphSample> val_set,
                      const TrainOptions& options) {
  if (train_set.empty()) throw DataError("empty training set");
  const GnnHyperparameters& hp = model.hyperparameters();
  hp.validate();

  AdamOptimizer adam(hp.learning_rate);
  Rng rng(options.seed);
  TrainingRun run;
  double best = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<Eigen::MatrixXd*> params;
  for (ParameterGroup& group : model.parameter_groups())
    for (Eigen::MatrixXd* p : group.params) params.push_back(p);

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(hp.batch_size)) {
      const std::size_t end = std::min(
          order.size(), begin + static_cast<std::size_t>(hp.batch_size));
      std::vector<const AugmentedFactorGraph*> graphs;
      std::vector<const Eigen::VectorXd*> labels;
      for (std::size_t i = begin; i < end; ++i) {
        graphs.push_back(train_set[order[i]].graph);
        labels.push_back(&train_set[order[i]].labels);
      }
      const GraphBatch batch = GraphBatch::assemble(graphs, labels);
      Tape tape;
      const TapeForward fwd = gnn_forward(tape, model, batch, true);
      const double loss = tape.value(fwd.loss)(0, 0);
      if (!std::isfinite(loss))
        throw NumericalError("non-finite training loss at epoch " +
                             std::to_string(epoch) + ", batch " +
                             std::to_string(batches));
      tape.backward(fwd.loss);
      std::vector<const Eigen::MatrixXd*> grads;
      grads.reserve(fwd.param_ids.size());
      for (Tape::Id id : fwd.param_ids) grads.push_back(&tape.grad(id));
      adam.step(params, grads);
      if (hp.normalization == Normalization::MeanBatchNorm) {
        const double momentum = options.running_mean_momentum;
        for (int k = 0; k < hp.num_layers; ++k) {
          auto& rmf = model.running_mean_factor[static_cast<std::size_t>(k)];
          auto& rmv = model.running_mean_variable[static_cast<std::size_t>(k)];
          rmf = (1.0 - momentum) * rmf +
                momentum * fwd.batch_mean_factor[static_cast<std::size_t>(k)];
          rmv = (1.0 - momentum) * rmv +
                momentum * fwd.batch_mean_variable[static_cast<std::size_t>(k)];
        }
      }
      loss_sum += loss;
      ++batches;
    }
    run.train_loss.push_back(loss_sum / batches);
    const double val = evaluate_set_loss(model, val_set, hp.batch_size);
    run.val_loss.push_back(val);
    if (options.verbose) {
      std::fprintf(stderr, "epoch %d train %.6e val %.6e\n", epoch,
                   run.train_loss.back(), val);
    }
    if (!val_set.empty() && val < best) {
      best = val;
      run.best_epoch = epoch;
      run.model = model;
    }
  }
  if (val_set.empty() || run.best_epoch < 0) {
    run.best_epoch = options.epochs - 1;
    run.model = std::move(model);
    run.best_val_loss = run.val_loss.empty() ? 0.0 : run.val_loss.back();
  } else {
    run.best_val_loss = best;
  }
  return run;
}

void write_training_csv(const std::filesystem::path& path,
                        const TrainingRun& run) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write training CSV: " + path.string());
  out << "epoch,train_loss,val_loss\n";
  for (std::size_t e = 0; e < run.train_loss.size(); ++e) {
    out << e << ',' << run.train_loss[e] << ',';
    if (e < run.val_loss.size() && std::isfinite(run.val_loss[e]))
      out << run.val_loss[e];
    out << '\n';
  }
}

}  // namespace gridse
