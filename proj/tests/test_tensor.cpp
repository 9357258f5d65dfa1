// Copyright 2026 The mmtdelib Authors.
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


#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "mmt/optim.hpp"
#include "mmt/tensor.hpp"
#include "test_support.hpp"

#include <cmath>
#include <random>

using namespace mmt;
using mmt::testing::gradient_error;
using mmt::testing::probe_loss;
using mmt::testing::random_leaf;
using mmt::testing::random_matrix;

namespace {

Matrix<double> mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix<double> m(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index r = 0;
  for (const auto& row : rows) {
    Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

constexpr double kGradTol = 1e-4;
constexpr int kSeeds = 20;

}  // namespace

TEST_CASE("matmul values and shape errors") {
  const Tensor<double> id(Matrix<double>::Identity(2, 2));
  const Tensor<double> b(mat({{3, 4}, {5, 6}}));
  CHECK(matmul(id, b).value() == b.value());
  CHECK(matmul(Tensor<double>(mat({{1, 2}})), Tensor<double>(mat({{3}, {4}}))).item() == 11.0);
  CHECK(matmul(Tensor<double>::zeros(3, 2), b).value().isZero());

  try {
    matmul(Tensor<double>::zeros(2, 3), Tensor<double>::zeros(2, 3));
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    const std::string what = e.what();
    CHECK(what.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("softmax values and invariants") {
  const auto half = softmax(Tensor<double>(mat({{0, 0}})));
  CHECK(half.value()(0, 0) == doctest::Approx(0.5));
  const auto third = softmax(Tensor<double>(mat({{0, std::log(2.0)}})));
  CHECK(third.value()(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(third.value()(0, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix<double> x = random_matrix(3, 5, rng, 10.0);
    const Matrix<double> y = softmax(Tensor<double>(x)).value();
    CHECK((y.array() >= 0).all());
    for (Index r = 0; r < 3; ++r) CHECK(std::abs(y.row(r).sum() - 1.0) < 1e-6);
    const Matrix<double> shifted = softmax(Tensor<double>((x.array() + 123.0).matrix())).value();
    CHECK((shifted - y).cwiseAbs().maxCoeff() < 1e-6);
    const Matrix<double> cols = softmax(Tensor<double>(x), 0).value();
    for (Index c = 0; c < 5; ++c) CHECK(std::abs(cols.col(c).sum() - 1.0) < 1e-6);
  }
  CHECK_THROWS_AS(softmax(Tensor<double>::zeros(2, 2), 2), ShapeError);
  CHECK_THROWS_AS(softmax(Tensor<double>::zeros(2, 0)), ShapeError);
}

TEST_CASE("masked softmax zeroes disallowed entries exactly") {
  BoolMatrix allowed(2, 3);
  allowed << true, false, true, false, false, false;
  const Tensor<double> x(mat({{1, 50, 2}, {0, 0, 0}}));
  const bool padded[2] = {false, true};
  const auto y = masked_softmax(x, allowed, std::span<const bool>(padded, 2)).value();
  CHECK(y(0, 1) == 0.0);
  CHECK(y(0, 0) + y(0, 2) == doctest::Approx(1.0));
  CHECK(y.row(1).isZero());
  CHECK_THROWS(masked_softmax(x, allowed));
}

TEST_CASE("layer norm cases") {
  const Tensor<double> one(Matrix<double>::Ones(1, 2));
  const Tensor<double> zero(Matrix<double>::Zero(1, 2));
  CHECK(layer_norm(Tensor<double>(mat({{3, 3}})), one, zero).value().isZero());
  const auto unit = layer_norm(Tensor<double>(mat({{1, -1}})), one, zero, 0.0).value();
  CHECK(unit(0, 0) == doctest::Approx(1.0));
  CHECK(unit(0, 1) == doctest::Approx(-1.0));
  const Tensor<double> beta(mat({{0.25, -2}}));
  const auto flat = layer_norm(Tensor<double>(mat({{5, -7}})), Tensor<double>(Matrix<double>::Zero(1, 2)), beta);
  CHECK(flat.value() == beta.value());
  CHECK_THROWS_AS(layer_norm(Tensor<double>(mat({{1, 2, 3}})), one, zero), ShapeError);
}

TEST_CASE("backward on simple forms") {
  std::mt19937_64 rng(11);
  auto a = random_leaf(2, 3, rng);
  auto b = random_leaf(2, 3, rng);
  backward(sum(hadamard(a, b)));
  CHECK(a.grad() == b.value());
  CHECK(b.grad() == a.value());

  auto x = random_leaf(3, 2, rng);
  backward(sum(hadamard(x, x)));
  CHECK((x.grad() - 2.0 * x.value()).cwiseAbs().maxCoeff() < 1e-15);

  CHECK_THROWS_AS(backward(a + b), ShapeError);
}

TEST_CASE("a tensor used twice accumulates both paths") {
  std::mt19937_64 rng(5);
  auto x = random_leaf(2, 2, rng);
  const Tensor<double> w1(random_matrix(2, 2, rng));
  const Tensor<double> w2(random_matrix(2, 2, rng));

  backward(sum(matmul(x, w1)));
  const Matrix<double> g1 = x.grad();
  x.zero_grad();
  backward(sum(matmul(x, w2)));
  const Matrix<double> g2 = x.grad();
  x.zero_grad();
  backward(sum(matmul(x, w1) + matmul(x, w2)));
  CHECK((x.grad() - (g1 + g2)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("gradient checks for every differentiable op") {
  for (int seed = 0; seed < kSeeds; ++seed) {
    CAPTURE(seed);
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed) + 100);
    std::uniform_int_distribution<int> dim(1, 4);
    const Index m = dim(rng), k = dim(rng), n = dim(rng);
    auto a = random_leaf(m, k, rng);
    auto b = random_leaf(k, n, rng);
    auto c = random_leaf(m, k, rng);
    auto row = random_leaf(1, k, rng);
    const Matrix<double> wmk = random_matrix(m, k, rng);
    const Matrix<double> wmn = random_matrix(m, n, rng);
    const Matrix<double> wkm = random_matrix(k, m, rng);
    const Matrix<double> wmm = random_matrix(m, m, rng);

    CHECK(gradient_error({a, b}, [&] { return probe_loss(matmul(a, b), wmn); }) < kGradTol);
    auto bt = random_leaf(n, k, rng);
    CHECK(gradient_error({a, bt}, [&] { return probe_loss(matmul_transposed(a, bt), wmn); }) < kGradTol);
    CHECK(gradient_error({a}, [&] { return probe_loss(transpose(a), wkm); }) < kGradTol);
    CHECK(gradient_error({a, c}, [&] { return probe_loss(a + c, wmk); }) < kGradTol);
    CHECK(gradient_error({a, c}, [&] { return probe_loss(a - c, wmk); }) < kGradTol);
    CHECK(gradient_error({a, c}, [&] { return probe_loss(hadamard(a, c), wmk); }) < kGradTol);
    CHECK(gradient_error({a}, [&] { return probe_loss(scale(a, 1.7), wmk); }) < kGradTol);
    CHECK(gradient_error({a, row}, [&] { return probe_loss(add_row(a, row), wmk); }) < kGradTol);
    CHECK(gradient_error({a}, [&] { return probe_loss(relu(a), wmk); }) < kGradTol);
    CHECK(gradient_error({a}, [&] { return mean(hadamard(a, a)); }) < kGradTol);

    const Matrix<double> wcat = random_matrix(m, 2 * k, rng);
    CHECK(gradient_error({a, c}, [&] { return probe_loss(concat_cols(a, c), wcat); }) < kGradTol);
    if (k > 1) {
      const Matrix<double> wsl = random_matrix(m, k - 1, rng);
      CHECK(gradient_error({a}, [&] { return probe_loss(slice_cols(a, 1, k - 1), wsl); }) < kGradTol);
    }

    auto table = random_leaf(5, k, rng);
    const std::vector<int> ids = {0, 3, 3, 1};
    const Matrix<double> wg = random_matrix(4, k, rng);
    CHECK(gradient_error({table}, [&] { return probe_loss(gather_rows<double>(table, ids), wg); }) <
          kGradTol);

    CHECK(gradient_error({a}, [&] { return probe_loss(softmax(a), wmk); }) < kGradTol);
    CHECK(gradient_error({a}, [&] { return probe_loss(softmax(a, 0), wmk); }) < kGradTol);
    CHECK(gradient_error({a}, [&] { return probe_loss(log_softmax(a), wmk); }) < kGradTol);

    auto scores = random_leaf(m, m, rng);
    BoolMatrix allowed = BoolMatrix::Constant(m, m, false);
    for (Index i = 0; i < m; ++i) allowed.row(i).head(i + 1).setConstant(true);
    CHECK(gradient_error({scores}, [&] { return probe_loss(masked_softmax(scores, allowed), wmm); }) <
          kGradTol);

    auto gamma = random_leaf(1, k + 1, rng);
    auto beta = random_leaf(1, k + 1, rng);
    auto xn = random_leaf(m, k + 1, rng);
    const Matrix<double> wln = random_matrix(m, k + 1, rng);
    CHECK(gradient_error({xn, gamma, beta}, [&] { return probe_loss(layer_norm(xn, gamma, beta), wln); }) <
          kGradTol);

    auto logits = random_leaf(m, n + 1, rng, 3.0);
    std::vector<int> targets;
    for (Index i = 0; i < m; ++i) targets.push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(n + 1)));
    bool pad[4] = {false, m > 1, false, true};
    CHECK(gradient_error({logits}, [&] {
            return cross_entropy<double>(logits, targets, std::span<const bool>(pad, static_cast<std::size_t>(m)));
          }) < kGradTol);
    CHECK(gradient_error({logits}, [&] { return cross_entropy<double>(logits, targets); }) < kGradTol);
  }
}

TEST_CASE("cross entropy on reference cases") {
  const std::vector<int> targets = {2, 0};
  CHECK(cross_entropy<double>(Tensor<double>::zeros(2, 7), targets).item() == doctest::Approx(std::log(7.0)));
  Matrix<double> sure = Matrix<double>::Constant(2, 3, -40.0);
  sure(0, 2) = 40.0;
  sure(1, 0) = 40.0;
  CHECK(cross_entropy<double>(Tensor<double>(sure), targets).item() < 1e-12);

  std::mt19937_64 rng(9);
  Matrix<double> logits = random_matrix(2, 3, rng);
  const double base = cross_entropy<double>(Tensor<double>(logits), targets).item();
  Matrix<double> padded(4, 3);
  padded << logits.row(0), random_matrix(1, 3, rng, 50.0), logits.row(1), random_matrix(1, 3, rng, 50.0);
  const std::vector<int> padded_targets = {2, 1, 0, 2};
  const bool pad[4] = {false, true, false, true};
  CHECK(cross_entropy<double>(Tensor<double>(padded), padded_targets, std::span<const bool>(pad, 4)).item() ==
        doctest::Approx(base).epsilon(1e-14));
  const bool all_pad[2] = {true, true};
  CHECK_THROWS(cross_entropy<double>(Tensor<double>(logits), targets, std::span<const bool>(all_pad, 2)));
}

TEST_CASE("adam update rule") {
  ParameterList<double> params{{"w", Tensor<double>(Matrix<double>::Constant(1, 1, 2.0), true)}};
  AdamState<double> state;
  params[0].tensor.grad() = Matrix<double>::Zero(1, 1);
  adam_step(params, state, 0.1);
  CHECK(params[0].tensor.value()(0, 0) == 2.0);
  CHECK(state.t == 1);

  ParameterList<double> one{{"w", Tensor<double>(Matrix<double>::Zero(1, 1), true)}};
  AdamState<double> fresh;
  one[0].tensor.grad() = Matrix<double>::Ones(1, 1);
  adam_step(one, fresh, 0.1);
  CHECK(one[0].tensor.value()(0, 0) == doctest::Approx(-0.1).epsilon(1e-6));

  ParameterList<double> twins{{"a", Tensor<double>(Matrix<double>::Constant(2, 2, 0.5), true)},
                              {"b", Tensor<double>(Matrix<double>::Constant(2, 2, 0.5), true)}};
  AdamState<double> twin_state;
  std::mt19937_64 rng(1);
  for (int step = 0; step < 5; ++step) {
    const Matrix<double> g = random_matrix(2, 2, rng);
    twins[0].tensor.grad() = g;
    twins[1].tensor.grad() = g;
    adam_step(twins, twin_state, 0.01);
  }
  CHECK(twins[0].tensor.value() == twins[1].tensor.value());
  CHECK(twin_state.t == 5);

  twins[1].tensor.grad()(0, 0) = std::nan("");
  const Matrix<double> before = twins[0].tensor.value();
  try {
    adam_step(twins, twin_state, 0.01);
    FAIL("expected a non-finite gradient error");
  } catch (const NonFiniteGradient& e) {
    CHECK(std::string(e.what()).find("'b'") != std::string::npos);
  }
  CHECK(twins[0].tensor.value() == before);
  CHECK(twin_state.t == 5);
}

TEST_CASE("warmup learning rate schedule") {
  const double peak = lr_schedule(8000, 0.05, 8000, 128);
  CHECK(peak == doctest::Approx(0.05 / std::sqrt(128.0) / std::sqrt(8000.0)).epsilon(1e-12));
  CHECK(peak == doctest::Approx(4.941058844013093e-05).epsilon(1e-9));
  CHECK(lr_schedule(7999, 0.05, 8000, 128) < peak);
  CHECK(lr_schedule(8001, 0.05, 8000, 128) < peak);
  for (std::int64_t s : {1, 10, 500, 8000, 20000}) {
    CHECK(lr_schedule(s, 0.1, 8000, 128) == doctest::Approx(2.0 * lr_schedule(s, 0.05, 8000, 128)));
  }
  for (std::int64_t s = 1; s < 100; ++s) CHECK(lr_schedule(s, 1.0, 100, 64) < lr_schedule(s + 1, 1.0, 100, 64));
  CHECK_THROWS(lr_schedule(0, 0.05, 8000, 128));
}
