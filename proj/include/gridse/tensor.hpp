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
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace gridse::ad {

/// Reverse-mode autodiff tape over dense double matrices. Ops append
/// nodes; backward() runs the recorded closures in reverse creation
/// order, which is a valid topological order because ops only reference
/// earlier ids.
///
/// Index vectors passed to gather/segment ops are captured by pointer:
/// the caller keeps them alive until backward() has run.
class Tape {
 public:
  using Id = std::int32_t;
  using Matrix = Eigen::MatrixXd;

  /// With `row_exact_products`, matrix products are evaluated row by row
  /// so every output row's floating-point result depends only on its own
  /// input row (never on how many other rows exist). Slower than plain
  /// GEMM; used for inference so per-node outputs are exactly local.
  explicit Tape(bool row_exact_products = false)
      : row_exact_(row_exact_products) {}

  /// Leaf node. Returns its id; gradients accumulate in grad(id).
  Id input(Matrix value);

  [[nodiscard]] const Matrix& value(Id id) const {
    return nodes_[static_cast<std::size_t>(id)].value;
  }
  [[nodiscard]] const Matrix& grad(Id id) const {
    return nodes_[static_cast<std::size_t>(id)].grad;
  }

  /// y = a * b
  Id matmul(Id a, Id b);
  /// y = x * w + ones * b   (w: in x out, b: 1 x out)
  Id linear(Id x, Id w, Id b);
  /// y = act(x * w + ones * b), fused so the pre-activation is never
  /// materialized (both activations' derivatives are functions of the
  /// output alone). act: 0 = relu, 1 = tanh.
  Id linear_act(Id x, Id w, Id b, int act);
  /// act(gather_sum_bias(...)), same fusion.
  Id gather_sum_bias_act(Id a, const std::vector<int>* idx_a, Id b,
                         const std::vector<int>* idx_b, Id bias, int act);
  Id add(Id a, Id b);
  Id concat_cols(Id a, Id b);
  Id concat_rows(Id a, Id b);
  /// out.row(i) = x.row(rows[i])
  Id gather_rows(Id x, const std::vector<int>* rows);
  /// out = m.middleRows(begin, count) as a view-copy
  Id slice_rows(Id m, int begin, int count);
  /// out.row(e) = a.row(idx_a[e]) + b.row(idx_b[e]) + bias; the fused
  /// form of an edge-wise affine map whose weight was applied per node.
  Id gather_sum_bias(Id a, const std::vector<int>* idx_a, Id b,
                     const std::vector<int>* idx_b, Id bias);
  Id relu(Id x);
  Id tanh_act(Id x);
  /// Softmax of a column of scores within each segment; rows with the
  /// same segment id form one softmax. scores: E x 1.
  Id segment_softmax(Id scores, const std::vector<int>* segment, int num_segments);
  /// out.row(seg[e]) += weights(e) * messages.row(e); destinations with
  /// no incoming rows stay zero.
  Id weighted_segment_sum(Id messages, Id weights,
                          const std::vector<int>* segment, int num_segments);
  /// y = x - colwise mean(x) broadcast over rows (differentiable).
  Id subtract_col_mean(Id x);
  /// y = x - ones * mu (mu constant, e.g. a running mean).
  Id subtract_const_rows(Id x, Eigen::RowVectorXd mu);
  /// 1x1 scalar: sum((x - target)^2) * scale.
  Id squared_error(Id x, const Eigen::VectorXd& target, double scale);

  /// Seeds d(root)=1 and accumulates gradients into every node.
  /// `root` must be 1x1.
  void backward(Id root);

  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void(Tape&)> backward;
  };

  Id push(Matrix value, std::function<void(Tape&)> backward_fn);
  [[nodiscard]] Id next_id() const { return static_cast<Id>(nodes_.size()); }
  Matrix& grad_ref(Id id) { return nodes_[static_cast<std::size_t>(id)].grad; }
  [[nodiscard]] Matrix product(const Matrix& a, const Matrix& b) const;

  bool row_exact_ = false;
  std::vector<Node> nodes_;
};

}  // namespace gridse::ad
