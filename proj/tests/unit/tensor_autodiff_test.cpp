// Copyright 2026 The UnTrac-CPP Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS-IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "untrac/autodiff.hpp"
#include "untrac/errors.hpp"
#include "untrac/hvp.hpp"
#include "untrac/model.hpp"
#include "untrac/tensor.hpp"

namespace untrac {
namespace {

using testing::dense_hessian;
using testing::fd_gradient;
using testing::matvec;
using testing::random_examples;
using testing::random_like;
using testing::rel_err;

TEST(Matmul, IdentityLeavesOperandUnchanged) {
  const Tensor i = Tensor::matrix(2, 2, {1, 0, 0, 1});
  const Tensor b = Tensor::matrix(2, 2, {3, 4, 5, 6});
  EXPECT_EQ(matmul(i, b).values(), b.values());
}

TEST(Matmul, RowTimesColumn) {
  const Tensor c = matmul(Tensor::matrix(1, 2, {1, 2}), Tensor::matrix(2, 1, {3, 4}));
  ASSERT_EQ(c.size(), 1u);
  EXPECT_DOUBLE_EQ(c[0], 11.0);
}

TEST(Matmul, MatchesTripleLoop) {
  Rng rng(11);
  std::vector<double> a(20), b(15);
  for (double& x : a) x = rng.normal();
  for (double& x : b) x = rng.normal();
  const Tensor c = matmul(Tensor::matrix(4, 5, a), Tensor::matrix(5, 3, b));
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 5; ++k) s += a[i * 5 + k] * b[k * 3 + j];
      EXPECT_NEAR(c.at(i, j), s, 1e-12);
    }
  }
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(matmul(Tensor::matrix(2, 3, std::vector<double>(6)),
                      Tensor::matrix(2, 3, std::vector<double>(6))),
               DimensionError);
}

TEST(Elementwise, SmallCases) {
  ad::Tape tape;
  const ad::Var a = tape.constant(Tensor({2}, {1, 2}));
  const ad::Var b = tape.constant(Tensor({2}, {3, 4}));
  EXPECT_EQ(ad::add(a, b).value().values(), (std::vector<double>{4, 6}));
  EXPECT_EQ(ad::tanh(tape.constant(Tensor({1}, {0}))).value().values(),
            (std::vector<double>{0}));
  EXPECT_EQ(ad::relu(tape.constant(Tensor({2}, {-1, 2}))).value().values(),
            (std::vector<double>{0, 2}));
}

TEST(Elementwise, DispatcherMatchesDirectOps) {
  ad::Tape tape;
  const ad::Var a = tape.constant(Tensor({3}, {-1.5, 0.25, 2}));
  const ad::Var b = tape.constant(Tensor({3}, {0.5, -2, 3}));
  const std::vector<ad::Var> ab = {a, b};
  const std::vector<ad::Var> only_a = {a};
  EXPECT_EQ(ad::elementwise(ad::Elementwise::kAdd, ab).value().values(),
            ad::add(a, b).value().values());
  EXPECT_EQ(ad::elementwise(ad::Elementwise::kMul, ab).value().values(),
            ad::mul(a, b).value().values());
  EXPECT_EQ(ad::elementwise(ad::Elementwise::kTanh, only_a).value().values(),
            ad::tanh(a).value().values());
  EXPECT_EQ(ad::elementwise(ad::Elementwise::kScale, only_a, 3.0).value().values(),
            ad::scale(a, 3.0).value().values());
}

TEST(Elementwise, MismatchedShapesThrow) {
  ad::Tape tape;
  const ad::Var a = tape.constant(Tensor({2}, {1, 2}));
  const ad::Var b = tape.constant(Tensor({3}, {1, 2, 3}));
  EXPECT_THROW(ad::add(a, b), DimensionError);
}

TEST(SoftmaxCrossEntropy, UniformLogitsGiveLogV) {
  ad::Tape tape;
  const ad::Var logits = tape.constant(Tensor::matrix(1, 4, {0, 0, 0, 0}));
  const std::vector<std::size_t> targets = {2};
  const std::vector<int> mask = {1};
  EXPECT_NEAR(ad::softmax_cross_entropy(logits, targets, mask).value().item(), std::log(4.0),
              1e-12);
}

TEST(SoftmaxCrossEntropy, SaturatedTargetGivesZero) {
  ad::Tape tape;
  const ad::Var logits = tape.constant(Tensor::matrix(1, 3, {0, 1000, 0}));
  const std::vector<std::size_t> targets = {1};
  const std::vector<int> mask = {1};
  EXPECT_NEAR(ad::softmax_cross_entropy(logits, targets, mask).value().item(), 0.0, 1e-12);
}

TEST(SoftmaxCrossEntropy, MatchesExplicitLogSumExp) {
  Rng rng(5);
  std::vector<double> z(15);
  for (double& x : z) x = 3.0 * rng.normal();
  const std::vector<std::size_t> targets = {4, 0, 2};
  const std::vector<int> mask = {1, 0, 1};
  ad::Tape tape;
  const double got =
      ad::softmax_cross_entropy(tape.constant(Tensor::matrix(3, 5, z)), targets, mask)
          .value()
          .item();
  long double total = 0.0L;
  int count = 0;
  for (std::size_t r = 0; r < 3; ++r) {
    if (!mask[r]) continue;
    long double mx = z[r * 5];
    for (std::size_t c = 1; c < 5; ++c) mx = std::max<long double>(mx, z[r * 5 + c]);
    long double s = 0.0L;
    for (std::size_t c = 0; c < 5; ++c) s += std::exp(static_cast<long double>(z[r * 5 + c]) - mx);
    total += mx + std::log(s) - z[r * 5 + targets[r]];
    ++count;
  }
  EXPECT_NEAR(got, static_cast<double>(total / count), 1e-10);
}

TEST(SoftmaxCrossEntropy, AllMaskedOutIsDegenerate) {
  ad::Tape tape;
  const ad::Var logits = tape.constant(Tensor::matrix(2, 3, std::vector<double>(6, 0.0)));
  const std::vector<std::size_t> targets = {0, 1};
  const std::vector<int> mask = {0, 0};
  EXPECT_THROW(ad::softmax_cross_entropy(logits, targets, mask), DegenerateBatchError);
}

TEST(Backward, SumOfParamsHasUnitGradient) {
  const LossFn fn = [](ad::Tape&, std::span<const ad::Var> p) { return ad::sum(p[0]); };
  const ValueAndGrad vg = value_and_grad(fn, ParamVector::flat({0.3, -1.0, 2.0}));
  for (double g : vg.grad.values()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, HalfSquaredNormHasGradientTheta) {
  const LossFn fn = [](ad::Tape&, std::span<const ad::Var> p) {
    return ad::scale(ad::dot(p[0], p[0]), 0.5);
  };
  const ParamVector theta = ParamVector::flat({0.3, -1.0, 2.0, 7.5});
  const ValueAndGrad vg = value_and_grad(fn, theta);
  for (std::size_t i = 0; i < theta.size(); ++i) EXPECT_DOUBLE_EQ(vg.grad[i], theta[i]);
}

TEST(Backward, UnusedInputGetsZeroGradient) {
  ad::Tape tape;
  const ad::Var a = tape.leaf(Tensor({2}, {1, 2}));
  const ad::Var b = tape.leaf(Tensor({2}, {3, 4}));
  const std::vector<ad::Var> wrt = {a, b};
  const auto g = tape.backward(ad::sum(a), wrt);
  EXPECT_EQ(g[1].values(), (std::vector<double>{0, 0}));
}

TEST(Backward, NonScalarLossThrows) {
  ad::Tape tape;
  const ad::Var a = tape.leaf(Tensor({2}, {1, 2}));
  const std::vector<ad::Var> wrt = {a};
  EXPECT_THROW(tape.backward(a, wrt), StateError);
}

TEST(Backward, InvalidVarIsStateError) {
  ad::Tape tape;
  const std::vector<ad::Var> wrt;
  EXPECT_THROW(tape.backward(ad::Var{}, wrt), StateError);
}

TEST(Backward, ModelGradientMatchesFiniteDifferences) {
  const ModelConfig m = testing::small_model(3);
  const ParamVector p = init_params(m);
  const auto batch = random_examples(3, m.vocab_size, 17);
  const LossFn fn = make_loss_fn(m, batch);
  const ValueAndGrad vg = value_and_grad(fn, p);
  const std::vector<double> fd = fd_gradient(fn, p, 1e-5);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double scale = std::max(std::abs(fd[i]), 1e-4);
    EXPECT_LE(std::abs(vg.grad[i] - fd[i]) / scale, 1e-6) << "coordinate " << i;
  }
}

TEST(Backward, ReluGradientMatchesFiniteDifferences) {
  ModelConfig m = testing::small_model(4);
  m.activation = Activation::kRelu;
  const ParamVector p = init_params(m);
  const auto batch = random_examples(2, m.vocab_size, 9);
  const LossFn fn = make_loss_fn(m, batch);
  const ValueAndGrad vg = value_and_grad(fn, p);
  const std::vector<double> fd = fd_gradient(fn, p, 1e-6);
  EXPECT_LE(rel_err(vg.grad.values(), fd), 1e-6);
}

TEST(Hvp, IdentityHessianReturnsV) {
  const LossFn fn = [](ad::Tape&, std::span<const ad::Var> p) {
    return ad::scale(ad::dot(p[0], p[0]), 0.5);
  };
  const ParamVector theta = ParamVector::flat({1.0, -2.0, 0.5});
  const ParamVector v = ParamVector::flat({0.7, 0.1, -3.0});
  for (HvpMethod m : {HvpMethod::kFdOfGrad, HvpMethod::kDoubleBackward}) {
    const ParamVector hv = hvp(fn, theta, v, m);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(hv[i], v[i], 1e-8);
  }
}

TEST(Hvp, QuadraticFormReturnsAv) {
  const std::vector<double> a = {4, 1, -2, 1, 3, 0.5, -2, 0.5, 5};
  const LossFn fn = [a](ad::Tape& tape, std::span<const ad::Var> p) {
    const ad::Var x = ad::reshape(p[0], {3, 1});
    const ad::Var ax = ad::matmul(tape.constant(Tensor::matrix(3, 3, a)), x);
    return ad::scale(ad::sum(ad::mul(x, ax)), 0.5);
  };
  const ParamVector theta = ParamVector::flat({0.2, -0.4, 1.1});
  const ParamVector v = ParamVector::flat({1.0, 2.0, -1.0});
  const std::vector<double> want = matvec(a, v.values());
  for (HvpMethod m : {HvpMethod::kFdOfGrad, HvpMethod::kDoubleBackward}) {
    const ParamVector hv = hvp(fn, theta, v, m);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(hv[i], want[i], 1e-8);
  }
}

TEST(Hvp, ModelMatchesDenseHessian) {
  const ModelConfig m = testing::small_model(1);
  ASSERT_LE(m.param_count(), 500u);
  const ParamVector p = init_params(m);
  const auto batch = random_examples(4, m.vocab_size, 2);
  const LossFn fn = make_loss_fn(m, batch);
  const std::vector<double> h = dense_hessian(fn, p);
  const ParamVector v = random_like(p, 8);
  const std::vector<double> want = matvec(h, v.values());
  for (HvpMethod method : {HvpMethod::kFdOfGrad, HvpMethod::kDoubleBackward}) {
    EXPECT_LE(rel_err(hvp(fn, p, v, method).values(), want), 1e-4) << hvp_method_name(method);
  }
}

TEST(Hvp, IsSymmetricBilinear) {
  const ModelConfig m = testing::small_model(2);
  const ParamVector p = init_params(m);
  const LossFn fn = make_loss_fn(m, random_examples(4, m.vocab_size, 5));
  const ParamVector u = random_like(p, 1);
  const ParamVector v = random_like(p, 2);
  for (HvpMethod method : {HvpMethod::kFdOfGrad, HvpMethod::kDoubleBackward}) {
    const double a = dot(v, hvp(fn, p, u, method));
    const double b = dot(u, hvp(fn, p, v, method));
    EXPECT_LE(std::abs(a - b), 1e-6 * std::max(1.0, std::abs(a)));
  }
}

TEST(Hvp, ZeroVectorGivesZero) {
  const ModelConfig m = testing::tiny_model();
  const ParamVector p = init_params(m);
  const LossFn fn = make_loss_fn(m, random_examples(2, m.vocab_size, 5));
  const ParamVector hv = hvp(fn, p, p.zeros_like());
  for (double x : hv.values()) EXPECT_EQ(x, 0.0);
}

TEST(Hvp, MethodNamesRoundTrip) {
  for (HvpMethod m : {HvpMethod::kFdOfGrad, HvpMethod::kDoubleBackward}) {
    EXPECT_EQ(parse_hvp_method(hvp_method_name(m)), m);
  }
  EXPECT_THROW(parse_hvp_method("newton"), ConfigError);
}

}  // namespace
}  // namespace untrac
