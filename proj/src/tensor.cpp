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

#include "gridse/tensor.hpp"

#include <cmath>

#include "gridse/errors.hpp"

namespace gridse::ad {

Tape::Id Tape::push(Matrix value, std::function<void(Tape&)> backward_fn) {
  nodes_.push_back(Node{std::move(value), Matrix(), std::move(backward_fn)});
  return static_cast<Id>(nodes_.size() - 1);
}

Tape::Id Tape::input(Matrix value) { return push(std::move(value), {}); }

Tape::Matrix Tape::product(const Matrix& a, const Matrix& b) const {
  if (!row_exact_) return a * b;
  // row-by-row evaluation: each output row's rounding is a function of
  // its own input row only (vector-matrix products), so removing other
  // rows cannot perturb it
  Matrix out(a.rows(), b.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    out.row(r) = a.row(r).lazyProduct(b);
  return out;
}

Tape::Id Tape::matmul(Id a, Id b) {
  Matrix out = product(value(a), value(b));
  const Id self = next_id();
  return push(std::move(out), [self, a, b](Tape& t) {
    t.grad_ref(a).noalias() += t.grad(self) * t.value(b).transpose();
    t.grad_ref(b).noalias() += t.value(a).transpose() * t.grad(self);
  });
}

Tape::Id Tape::linear(Id x, Id w, Id b) {
  if (value(x).cols() != value(w).rows())
    throw NumericalError("linear: dimension mismatch");
  Matrix out = product(value(x), value(w));
  out.rowwise() += Eigen::RowVectorXd(value(b).row(0));
  const Id self = next_id();
  return push(std::move(out), [self, x, w, b](Tape& t) {
    const Matrix& g = t.grad(self);
    t.grad_ref(x).noalias() += g * t.value(w).transpose();
    t.grad_ref(w).noalias() += t.value(x).transpose() * g;
    t.grad_ref(b).row(0) += g.colwise().sum();
  });
}

Tape::Id Tape::add(Id a, Id b) {
  Matrix out = value(a) + value(b);
  const Id self = next_id();
  return push(std::move(out), [self, a, b](Tape& t) {
    t.grad_ref(a) += t.grad(self);
    t.grad_ref(b) += t.grad(self);
  });
}

Tape::Id Tape::concat_cols(Id a, Id b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  Matrix out(va.rows(), va.cols() + vb.cols());
  out.leftCols(va.cols()) = va;
  out.rightCols(vb.cols()) = vb;
  const Eigen::Index ca = va.cols();
  const Id self = next_id();
  return push(std::move(out), [self, a, b, ca](Tape& t) {
    const Matrix& g = t.grad(self);
    t.grad_ref(a) += g.leftCols(ca);
    t.grad_ref(b) += g.rightCols(g.cols() - ca);
  });
}

Tape::Id Tape::concat_rows(Id a, Id b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  Matrix out(va.rows() + vb.rows(), va.cols());
  out.topRows(va.rows()) = va;
  out.bottomRows(vb.rows()) = vb;
  const Eigen::Index ra = va.rows();
  const Id self = next_id();
  return push(std::move(out), [self, a, b, ra](Tape& t) {
    const Matrix& g = t.grad(self);
    t.grad_ref(a) += g.topRows(ra);
    t.grad_ref(b) += g.bottomRows(g.rows() - ra);
  });
}

Tape::Id Tape::gather_rows(Id x, const std::vector<int>* rows) {
  const Matrix& vx = value(x);
  Matrix out(static_cast<Eigen::Index>(rows->size()), vx.cols());
  for (std::size_t i = 0; i < rows->size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = vx.row((*rows)[i]);
  const Id self = next_id();
  return push(std::move(out), [self, x, rows](Tape& t) {
    const Matrix& g = t.grad(self);
    Matrix& gx = t.grad_ref(x);
    for (std::size_t i = 0; i < rows->size(); ++i)
      gx.row((*rows)[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

Tape::Id Tape::slice_rows(Id m, int begin, int count) {
  Matrix out = value(m).middleRows(begin, count);
  const Id self = next_id();
  return push(std::move(out), [self, m, begin, count](Tape& t) {
    t.grad_ref(m).middleRows(begin, count) += t.grad(self);
  });
}

Tape::Id Tape::gather_sum_bias(Id a, const std::vector<int>* idx_a, Id b,
                               const std::vector<int>* idx_b, Id bias) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  if (idx_a->size() != idx_b->size())
    throw NumericalError("gather_sum_bias: index lists differ in length");
  const Eigen::RowVectorXd bias_row = value(bias).row(0);
  Matrix out(static_cast<Eigen::Index>(idx_a->size()), va.cols());
  for (std::size_t e = 0; e < idx_a->size(); ++e)
    out.row(static_cast<Eigen::Index>(e)) =
        va.row((*idx_a)[e]) + vb.row((*idx_b)[e]) + bias_row;
  const Id self = next_id();
  return push(std::move(out), [self, a, idx_a, b, idx_b, bias](Tape& t) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad_ref(a);
    Matrix& gb = t.grad_ref(b);
    for (std::size_t e = 0; e < idx_a->size(); ++e) {
      const auto i = static_cast<Eigen::Index>(e);
      ga.row((*idx_a)[e]) += g.row(i);
      gb.row((*idx_b)[e]) += g.row(i);
    }
    t.grad_ref(bias).row(0) += g.colwise().sum();
  });
}

Tape::Id Tape::relu(Id x) {
  Matrix out = value(x).cwiseMax(0.0);
  const Id self = next_id();
  return push(std::move(out), [self, x](Tape& t) {
    t.grad_ref(x).array() +=
        t.grad(self).array() * (t.value(self).array() > 0.0).cast<double>();
  });
}

Tape::Id Tape::tanh_act(Id x) {
  Matrix out = value(x).array().tanh();
  const Id self = next_id();
  return push(std::move(out), [self, x](Tape& t) {
    t.grad_ref(x).array() +=
        t.grad(self).array() * (1.0 - t.value(self).array().square());
  });
}

Tape::Id Tape::segment_softmax(Id scores, const std::vector<int>* segment,
                               int num_segments) {
  const Matrix& s = value(scores);
  if (s.cols() != 1) throw NumericalError("segment_softmax expects E x 1");
  const std::size_t count = segment->size();
  // shift by per-segment max, exponentiate, normalize by per-segment sum
  Eigen::VectorXd seg_max =
      Eigen::VectorXd::Constant(num_segments, -std::numeric_limits<double>::infinity());
  for (std::size_t e = 0; e < count; ++e)
    seg_max[(*segment)[e]] =
        std::max(seg_max[(*segment)[e]], s(static_cast<Eigen::Index>(e), 0));
  Matrix out(s.rows(), 1);
  Eigen::VectorXd seg_sum = Eigen::VectorXd::Zero(num_segments);
  for (std::size_t e = 0; e < count; ++e) {
    const double ex =
        std::exp(s(static_cast<Eigen::Index>(e), 0) - seg_max[(*segment)[e]]);
    out(static_cast<Eigen::Index>(e), 0) = ex;
    seg_sum[(*segment)[e]] += ex;
  }
  for (std::size_t e = 0; e < count; ++e)
    out(static_cast<Eigen::Index>(e), 0) /= seg_sum[(*segment)[e]];
  const Id self = next_id();
  return push(std::move(out), [self, scores, segment, num_segments](Tape& t) {
    const Matrix& w = t.value(self);
    const Matrix& g = t.grad(self);
    Eigen::VectorXd seg_dot = Eigen::VectorXd::Zero(num_segments);
    for (std::size_t e = 0; e < segment->size(); ++e)
      seg_dot[(*segment)[e]] += g(static_cast<Eigen::Index>(e), 0) *
                                w(static_cast<Eigen::Index>(e), 0);
    Matrix& gs = t.grad_ref(scores);
    for (std::size_t e = 0; e < segment->size(); ++e) {
      const auto i = static_cast<Eigen::Index>(e);
      gs(i, 0) += w(i, 0) * (g(i, 0) - seg_dot[(*segment)[e]]);
    }
  });
}

Tape::Id Tape::weighted_segment_sum(Id messages, Id weights,
                                    const std::vector<int>* segment,
                                    int num_segments) {
  const Matrix& m = value(messages);
  const Matrix& w = value(weights);
  Matrix out = Matrix::Zero(num_segments, m.cols());
  for (std::size_t e = 0; e < segment->size(); ++e) {
    const auto i = static_cast<Eigen::Index>(e);
    out.row((*segment)[e]) += w(i, 0) * m.row(i);
  }
  const Id self = next_id();
  return push(std::move(out), [self, messages, weights, segment](Tape& t) {
    const Matrix& g = t.grad(self);
    const Matrix& m = t.value(messages);
    const Matrix& w = t.value(weights);
    Matrix& gm = t.grad_ref(messages);
    Matrix& gw = t.grad_ref(weights);
    for (std::size_t e = 0; e < segment->size(); ++e) {
      const auto i = static_cast<Eigen::Index>(e);
      const auto dst = (*segment)[e];
      gm.row(i) += w(i, 0) * g.row(dst);
      gw(i, 0) += m.row(i).dot(g.row(dst));
    }
  });
}

Tape::Id Tape::subtract_col_mean(Id x) {
  const Matrix& vx = value(x);
  const Eigen::RowVectorXd mean =
      vx.rows() > 0 ? Eigen::RowVectorXd(vx.colwise().mean())
                    : Eigen::RowVectorXd::Zero(vx.cols());
  Matrix out = vx;
  out.rowwise() -= mean;
  const Id self = next_id();
  return push(std::move(out), [self, x](Tape& t) {
    const Matrix& g = t.grad(self);
    Matrix& gx = t.grad_ref(x);
    if (g.rows() > 0) {
      const Eigen::RowVectorXd gmean = g.colwise().mean();
      gx += g;
      gx.rowwise() -= gmean;
    }
  });
}

Tape::Id Tape::subtract_const_rows(Id x, Eigen::RowVectorXd mu) {
  Matrix out = value(x);
  out.rowwise() -= mu;
  const Id self = next_id();
  return push(std::move(out), [self, x](Tape& t) {
    t.grad_ref(x) += t.grad(self);
  });
}

Tape::Id Tape::squared_error(Id x, const Eigen::VectorXd& target,
                             double scale) {
  const Matrix& vx = value(x);
  if (vx.cols() != 1 || vx.rows() != target.size())
    throw NumericalError("squared_error: shape mismatch");
  const double loss = (vx.col(0) - target).squaredNorm() * scale;
  Matrix out(1, 1);
  out(0, 0) = loss;
  Eigen::VectorXd diff = vx.col(0) - target;
  const Id self = next_id();
  return push(std::move(out), [self, x, diff = std::move(diff), scale](Tape& t) {
    t.grad_ref(x).col(0) += 2.0 * scale * t.grad(self)(0, 0) * diff;
  });
}

void Tape::backward(Id root) {
  if (value(root).size() != 1)
    throw NumericalError("backward root must be a scalar");
  for (Node& node : nodes_)
    node.grad = Matrix::Zero(node.value.rows(), node.value.cols());
  grad_ref(root)(0, 0) = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& node = nodes_[i];
    if (node.backward) node.backward(*this);
  }
}

}  // namespace gridse::ad
