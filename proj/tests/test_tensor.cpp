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

#include "doctest.h"

#include <cmath>
#include <functional>
#include <vector>

#include "gridse/rng.hpp"
#include "gridse/tensor.hpp"

using namespace gridse;
using ad::Tape;

namespace {

Eigen::MatrixXd random_matrix(int rows, int cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) m(r, c) = rng.uniform(-1.0, 1.0);
  return m;
}

/// Central finite-difference check of d(scalar graph)/d(inputs) for a
/// graph builder that maps leaf matrices to a scalar node.
void check_gradients(
    std::vector<Eigen::MatrixXd> inputs,
    const std::function<Tape::Id(Tape&, const std::vector<Tape::Id>&)>& build,
    double step = 1e-6, double tol = 1e-7) {
  Tape tape;
  std::vector<Tape::Id> ids;
  for (const auto& m : inputs) ids.push_back(tape.input(m));
  const Tape::Id root = build(tape, ids);
  tape.backward(root);

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Eigen::MatrixXd analytic = tape.grad(ids[i]);
    for (Eigen::Index r = 0; r < inputs[i].rows(); ++r) {
      for (Eigen::Index c = 0; c < inputs[i].cols(); ++c) {
        auto eval = [&](double delta) {
          std::vector<Eigen::MatrixXd> shifted = inputs;
          shifted[i](r, c) += delta;
          Tape t2;
          std::vector<Tape::Id> ids2;
          for (const auto& m : shifted) ids2.push_back(t2.input(m));
          return t2.value(build(t2, ids2))(0, 0);
        };
        const double fd = (eval(step) - eval(-step)) / (2.0 * step);
        const double got = analytic(r, c);
        CHECK(std::abs(fd - got) <=
              tol * std::max({1.0, std::abs(fd), std::abs(got)}));
      }
    }
  }
}

}  // namespace

TEST_CASE("matmul forward and gradient") {
  Rng rng(1);
  check_gradients(
      {random_matrix(3, 4, rng), random_matrix(4, 2, rng),
       random_matrix(2, 1, rng)},
      [](Tape& t, const std::vector<Tape::Id>& in) {
        const Tape::Id prod = t.matmul(t.matmul(in[0], in[1]), in[2]);
        // reduce to scalar via squared error against zero
        return t.squared_error(prod, Eigen::VectorXd::Zero(3), 1.0);
      });
}

TEST_CASE("linear layer gradient (weight, bias, input)") {
  Rng rng(2);
  check_gradients(
      {random_matrix(5, 3, rng), random_matrix(3, 2, rng),
       random_matrix(1, 2, rng)},
      [](Tape& t, const std::vector<Tape::Id>& in) {
        const Tape::Id y = t.linear(in[0], in[1], in[2]);
        const Tape::Id flat = t.concat_rows(y, y);  // exercise concat too
        return t.squared_error(t.matmul(flat, t.input(Eigen::MatrixXd::Ones(2, 1))),
                               Eigen::VectorXd::Ones(10), 0.1);
      });
}

TEST_CASE("activations: relu and tanh forward values") {
  Tape tape;
  Eigen::MatrixXd x(1, 4);
  x << -2.0, -0.5, 0.5, 2.0;
  const Tape::Id xi = tape.input(x);
  const Eigen::MatrixXd r = tape.value(tape.relu(xi));
  CHECK(r(0, 0) == 0.0);
  CHECK(r(0, 1) == 0.0);
  CHECK(r(0, 2) == 0.5);
  CHECK(r(0, 3) == 2.0);
  const Eigen::MatrixXd h = tape.value(tape.tanh_act(xi));
  CHECK(h(0, 0) == doctest::Approx(std::tanh(-2.0)));
  CHECK(h(0, 3) == doctest::Approx(std::tanh(2.0)));
}

TEST_CASE("relu gradient masks negative inputs") {
  Tape tape;
  Eigen::MatrixXd x(2, 2);
  x << -1.0, 2.0, 3.0, -4.0;
  const Tape::Id xi = tape.input(x);
  const Tape::Id y = tape.relu(xi);
  const Tape::Id loss = tape.squared_error(
      tape.matmul(y, tape.input(Eigen::MatrixXd::Ones(2, 1))),
      Eigen::VectorXd::Zero(2), 1.0);
  tape.backward(loss);
  const Eigen::MatrixXd g = tape.grad(xi);
  CHECK(g(0, 0) == 0.0);
  CHECK(g(1, 1) == 0.0);
  CHECK(g(0, 1) != 0.0);
  CHECK(g(1, 0) != 0.0);
}

TEST_CASE("tanh gradient matches finite differences") {
  Rng rng(3);
  check_gradients({random_matrix(4, 3, rng)},
                  [](Tape& t, const std::vector<Tape::Id>& in) {
                    const Tape::Id y = t.tanh_act(in[0]);
                    return t.squared_error(
                        t.matmul(y, t.input(Eigen::MatrixXd::Ones(3, 1))),
                        Eigen::VectorXd::Zero(4), 0.25);
                  });
}

TEST_CASE("gather_rows forward and gradient accumulation") {
  Rng rng(4);
  const std::vector<int> rows{2, 0, 2, 1};
  Eigen::MatrixXd x = random_matrix(3, 2, rng);
  Tape tape;
  const Tape::Id xi = tape.input(x);
  const Tape::Id g = tape.gather_rows(xi, &rows);
  CHECK(tape.value(g).row(0) == x.row(2));
  CHECK(tape.value(g).row(1) == x.row(0));

  check_gradients({x}, [&rows](Tape& t, const std::vector<Tape::Id>& in) {
    const Tape::Id gathered = t.gather_rows(in[0], &rows);
    return t.squared_error(
        t.matmul(gathered, t.input(Eigen::MatrixXd::Ones(2, 1))),
        Eigen::VectorXd::Ones(4), 0.5);
  });
}

TEST_CASE("segment_softmax normalizes within segments") {
  const std::vector<int> seg{0, 0, 1, 1, 1};
  Eigen::MatrixXd scores(5, 1);
  scores << 1.0, 2.0, -1.0, 0.0, 1.0;
  Tape tape;
  const Tape::Id w = tape.segment_softmax(tape.input(scores), &seg, 2);
  const Eigen::MatrixXd v = tape.value(w);
  CHECK(v(0, 0) + v(1, 0) == doctest::Approx(1.0));
  CHECK(v(2, 0) + v(3, 0) + v(4, 0) == doctest::Approx(1.0));
  // softmax ordering follows scores
  CHECK(v(1, 0) > v(0, 0));
  CHECK(v(4, 0) > v(3, 0));
  CHECK(v(3, 0) > v(2, 0));
}

TEST_CASE("segment_softmax is shift invariant per segment") {
  const std::vector<int> seg{0, 0, 0, 1, 1};
  Rng rng(5);
  Eigen::MatrixXd scores = random_matrix(5, 1, rng);
  Eigen::MatrixXd shifted = scores;
  for (int e = 0; e < 3; ++e) shifted(e, 0) += 123.0;
  for (int e = 3; e < 5; ++e) shifted(e, 0) -= 7.0;
  Tape tape;
  const Eigen::MatrixXd a =
      tape.value(tape.segment_softmax(tape.input(scores), &seg, 2));
  const Eigen::MatrixXd b =
      tape.value(tape.segment_softmax(tape.input(shifted), &seg, 2));
  CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("segment_softmax gradient") {
  Rng rng(6);
  const std::vector<int> seg{0, 0, 1, 1, 1};
  check_gradients({random_matrix(5, 1, rng), random_matrix(5, 2, rng)},
                  [&seg](Tape& t, const std::vector<Tape::Id>& in) {
                    const Tape::Id w = t.segment_softmax(in[0], &seg, 2);
                    const Tape::Id agg =
                        t.weighted_segment_sum(in[1], w, &seg, 2);
                    return t.squared_error(
                        t.matmul(agg, t.input(Eigen::MatrixXd::Ones(2, 1))),
                        Eigen::VectorXd::Ones(2), 0.5);
                  });
}

TEST_CASE("weighted_segment_sum leaves empty segments at zero") {
  const std::vector<int> seg{2, 2};
  Eigen::MatrixXd msg(2, 3);
  msg << 1, 2, 3, 4, 5, 6;
  Eigen::MatrixXd w(2, 1);
  w << 0.25, 0.75;
  Tape tape;
  const Tape::Id out = tape.weighted_segment_sum(tape.input(msg),
                                                 tape.input(w), &seg, 4);
  const Eigen::MatrixXd v = tape.value(out);
  CHECK(v.rows() == 4);
  CHECK(v.row(0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(v.row(1).cwiseAbs().maxCoeff() == 0.0);
  CHECK(v(2, 0) == doctest::Approx(0.25 * 1 + 0.75 * 4));
  CHECK(v.row(3).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("subtract_col_mean centers columns and back-propagates") {
  Rng rng(7);
  Eigen::MatrixXd x = random_matrix(6, 3, rng);
  Tape tape;
  const Tape::Id y = tape.subtract_col_mean(tape.input(x));
  CHECK(tape.value(y).colwise().mean().cwiseAbs().maxCoeff() <= 1e-12);

  check_gradients({x}, [](Tape& t, const std::vector<Tape::Id>& in) {
    const Tape::Id y2 = t.subtract_col_mean(in[0]);
    return t.squared_error(
        t.matmul(y2, t.input(Eigen::MatrixXd::Ones(3, 1))),
        Eigen::VectorXd::Ones(6), 1.0 / 6.0);
  });
}

TEST_CASE("squared_error value and gradient") {
  Eigen::MatrixXd x(3, 1);
  x << 1.0, 2.0, 3.0;
  Eigen::VectorXd target(3);
  target << 0.0, 2.0, 5.0;
  Tape tape;
  const Tape::Id xi = tape.input(x);
  const Tape::Id loss = tape.squared_error(xi, target, 0.5);
  CHECK(tape.value(loss)(0, 0) == doctest::Approx(0.5 * (1.0 + 0.0 + 4.0)));
  tape.backward(loss);
  CHECK(tape.grad(xi)(0, 0) == doctest::Approx(1.0));
  CHECK(tape.grad(xi)(1, 0) == doctest::Approx(0.0));
  CHECK(tape.grad(xi)(2, 0) == doctest::Approx(-2.0));
}

TEST_CASE("gradient accumulates when a node feeds two consumers") {
  Eigen::MatrixXd x(2, 1);
  x << 1.0, -1.0;
  Tape tape;
  const Tape::Id xi = tape.input(x);
  const Tape::Id sum = tape.add(xi, xi);
  const Tape::Id loss = tape.squared_error(sum, Eigen::VectorXd::Zero(2), 1.0);
  tape.backward(loss);
  // d/dx (2x)^2 = 8x
  CHECK(tape.grad(xi)(0, 0) == doctest::Approx(8.0));
  CHECK(tape.grad(xi)(1, 0) == doctest::Approx(-8.0));
}

TEST_CASE("ops handle zero-row matrices") {
  Tape tape;
  const std::vector<int> no_rows;
  const std::vector<int> no_seg;
  const Tape::Id empty = tape.input(Eigen::MatrixXd(0, 4));
  const Tape::Id w = tape.input(Eigen::MatrixXd::Ones(4, 2));
  const Tape::Id b = tape.input(Eigen::MatrixXd::Zero(1, 2));
  const Tape::Id lin = tape.linear(empty, w, b);
  CHECK(tape.value(lin).rows() == 0);
  const Tape::Id gathered = tape.gather_rows(lin, &no_rows);
  CHECK(tape.value(gathered).rows() == 0);
  const Tape::Id scores = tape.input(Eigen::MatrixXd(0, 1));
  const Tape::Id weights = tape.segment_softmax(scores, &no_seg, 3);
  const Tape::Id agg = tape.weighted_segment_sum(gathered, weights, &no_seg, 3);
  CHECK(tape.value(agg).rows() == 3);
  CHECK(tape.value(agg).cwiseAbs().maxCoeff() == 0.0);
}
