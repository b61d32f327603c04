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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "untrac/errors.hpp"
#include "untrac/json_io.hpp"
#include "untrac/model.hpp"
#include "untrac/vocab.hpp"

namespace untrac {
namespace {

namespace fs = std::filesystem;
using testing::fd_gradient;
using testing::random_examples;

TEST(ModelConfig, ParamCountClosedForm) {
  for (std::size_t layers : {1u, 2u}) {
    ModelConfig m;
    m.vocab_size = 13;
    m.context_window = 5;
    m.embed_dim = 3;
    m.hidden_dim = 7;
    m.n_hidden_layers = layers;
    const std::size_t v = 13, c = 5, e = 3, h = 7;
    const std::size_t want = v * e + c * e * h + h + (layers - 1) * (h * h + h) + h * v + v;
    EXPECT_EQ(m.param_count(), want);
    EXPECT_EQ(m.layout()->total_size(), want);
  }
}

TEST(ModelConfig, ValidateRejectsOutOfRangeFields) {
  ModelConfig m;
  m.vocab_size = 7;
  EXPECT_THROW(m.validate(), ConfigError);
  m = ModelConfig{};
  m.context_window = 3;
  EXPECT_THROW(m.validate(), ConfigError);
  m = ModelConfig{};
  m.n_hidden_layers = 3;
  EXPECT_THROW(m.validate(), ConfigError);
  m = ModelConfig{};
  m.hidden_dim = 0;
  EXPECT_THROW(m.validate(), ConfigError);
  EXPECT_NO_THROW(ModelConfig{}.validate());
}

TEST(ModelConfig, LayoutOrder) {
  const auto layout = testing::small_model().layout();
  std::vector<std::string> names;
  for (const auto& e : layout->entries()) names.push_back(e.name);
  EXPECT_EQ(names, (std::vector<std::string>{"embedding", "hidden0.weight", "hidden0.bias",
                                             "hidden1.weight", "hidden1.bias", "output.weight",
                                             "output.bias"}));
}

TEST(InitParams, DeterministicPerSeed) {
  const ModelConfig m = testing::small_model(5);
  EXPECT_EQ(init_params(m), init_params(m));
}

TEST(InitParams, EmbeddingWithinFanInBound) {
  ModelConfig m;
  m.vocab_size = 16;
  m.embed_dim = 8;
  const ParamVector p = init_params(m);
  const double bound = 1.0 / std::sqrt(16.0);
  for (double x : p.entry("embedding")) {
    EXPECT_GT(x, -bound);
    EXPECT_LT(x, bound);
  }
  for (double x : p.entry("hidden0.bias")) EXPECT_EQ(x, 0.0);
}

TEST(InitParams, DifferentSeedsDifferAlmostEverywhere) {
  ModelConfig a = testing::small_model(1);
  ModelConfig b = testing::small_model(2);
  const ParamVector pa = init_params(a);
  const ParamVector pb = init_params(b);
  std::size_t weights = 0, differ = 0;
  for (std::size_t i = 0; i < pa.layout().entries().size(); ++i) {
    const auto& e = pa.layout().entries()[i];
    if (e.name.find("bias") != std::string::npos) continue;
    for (std::size_t k = 0; k < e.size; ++k) {
      ++weights;
      differ += pa.entry(i)[k] != pb.entry(i)[k];
    }
  }
  EXPECT_GE(static_cast<double>(differ), 0.99 * static_cast<double>(weights));
}

TEST(Loss, SaturatedTargetGivesZero) {
  const ModelConfig m = testing::tiny_model();
  ParamVector p = init_params(m).zeros_like();
  Example ex{{2, 3, 5}, {0, 0, 1}};
  const std::size_t bias = [&] {
    for (std::size_t i = 0; i < p.layout().entries().size(); ++i) {
      if (p.layout().entries()[i].name == "output.bias") return i;
    }
    return std::size_t{0};
  }();
  p.entry(bias)[5] = 1000.0;
  const std::vector<Example> batch = {ex};
  EXPECT_NEAR(loss(p, m, batch), 0.0, 1e-12);
}

TEST(Loss, FreshInitIsNearLogVocab) {
  ModelConfig m;
  m.vocab_size = Vocab::standard().size();
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    m.seed = seed;
    const auto batch = random_examples(16, m.vocab_size, seed + 40, 10, 3);
    const double l = loss(init_params(m), m, batch);
    const double ln_v = std::log(static_cast<double>(m.vocab_size));
    EXPECT_NEAR(l, ln_v, 0.15 * ln_v);
  }
}

TEST(Loss, DuplicatedBatchHasSameLoss) {
  const ModelConfig m = testing::small_model();
  const ParamVector p = init_params(m);
  const auto batch = random_examples(5, m.vocab_size, 3);
  std::vector<Example> twice;
  for (const Example& ex : batch) {
    twice.push_back(ex);
    twice.push_back(ex);
  }
  EXPECT_NEAR(loss(p, m, twice), loss(p, m, batch), 1e-14);
}

TEST(Loss, PermutationInvariant) {
  const ModelConfig m = testing::small_model();
  const ParamVector p = init_params(m);
  auto batch = random_examples(6, m.vocab_size, 4);
  const double a = loss(p, m, batch);
  std::reverse(batch.begin(), batch.end());
  EXPECT_NEAR(loss(p, m, batch), a, 1e-14);
}

TEST(Loss, InvalidExamplesRejected) {
  const ModelConfig m = testing::tiny_model();
  const ParamVector p = init_params(m);
  std::vector<Example> bad = {Example{{1, 2}, {0, 0}}};
  EXPECT_THROW(loss(p, m, bad), Error);
  bad = {Example{{1, 99}, {0, 1}}};
  EXPECT_THROW(loss(p, m, bad), ConfigError);
  bad = {Example{{1, 2}, {1}}};
  EXPECT_THROW(loss(p, m, bad), ConfigError);
  EXPECT_THROW(loss(p, m, std::vector<Example>{}), DegenerateBatchError);
}

TEST(LossGrad, MatchesFiniteDifferences) {
  const ModelConfig m = testing::tiny_model(3);
  const ParamVector p = init_params(m);
  const auto batch = random_examples(3, m.vocab_size, 8);
  const ValueAndGrad vg = loss_grad(p, m, batch);
  EXPECT_DOUBLE_EQ(vg.value, loss(p, m, batch));
  const std::vector<double> fd = fd_gradient(make_loss_fn(m, batch), p, 1e-5);
  for (std::size_t i = 0; i < p.size(); ++i) {
    EXPECT_LE(std::abs(vg.grad[i] - fd[i]) / std::max(std::abs(fd[i]), 1e-4), 1e-6);
  }
}

TEST(LossGrad, MaskedOutTargetsDoNotMatter) {
  const ModelConfig m = testing::tiny_model(2);
  const ParamVector p = init_params(m);
  const Example a{{2, 3, 4, 5, 6, 7, 2}, {0, 0, 0, 1, 0, 0, 0}};
  Example b = a;
  // Targets of the masked-out positions after the only scored one.
  b.tokens[4] = 1;
  b.tokens[5] = 3;
  b.tokens[6] = 6;
  const std::vector<Example> ba = {a}, bb = {b};
  const ValueAndGrad ga = loss_grad(p, m, ba);
  const ValueAndGrad gb = loss_grad(p, m, bb);
  EXPECT_EQ(ga.value, gb.value);
  EXPECT_EQ(ga.grad, gb.grad);
}

TEST(BatchedLossSum, SumsPerBatchMeans) {
  const ModelConfig m = testing::tiny_model();
  const ParamVector p = init_params(m);
  const auto ex = random_examples(5, m.vocab_size, 6);
  const std::span<const Example> all(ex);
  const double want = loss(p, m, all.subspan(0, 2)) + loss(p, m, all.subspan(2, 2)) +
                      loss(p, m, all.subspan(4, 1));
  EXPECT_NEAR(batched_loss_sum(p, m, ex, 2), want, 1e-14);
  EXPECT_NEAR(batched_loss_sum(p, m, ex, 0), loss(p, m, ex), 1e-14);
  const ValueAndGrad vg = batched_loss_sum_grad(p, m, ex, 2);
  EXPECT_NEAR(vg.value, want, 1e-14);
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  const ModelConfig m = testing::small_model(9);
  ParamVector p = init_params(m);
  p[0] = std::nextafter(1.0, 2.0);
  p[1] = -0.0;
  p[2] = 1e-310;
  const fs::path path = testing::scratch_path("untrac_models_test_ckpt.bin");
  save_checkpoint(path, m, p);
  const Checkpoint c = load_checkpoint(path);
  EXPECT_EQ(c.config, m);
  EXPECT_EQ(c.params, p);
  EXPECT_TRUE(std::signbit(c.params[1]));
  fs::remove(path);
}

TEST(Checkpoint, TruncatedFileIsFormatError) {
  const ModelConfig m = testing::tiny_model();
  const fs::path path = testing::scratch_path("untrac_models_test_trunc.bin");
  save_checkpoint(path, m, init_params(m));
  fs::resize_file(path, fs::file_size(path) - 8);
  EXPECT_THROW(load_checkpoint(path), FormatError);
  fs::remove(path);
  EXPECT_THROW(load_checkpoint(path), FormatError);
}

TEST(Layout, JsonRoundTrip) {
  const auto layout = testing::small_model().layout();
  const nlohmann::json j = *layout;
  EXPECT_EQ(j.get<Layout>(), *layout);
}

TEST(ModelConfig, JsonRoundTripAndUnknownKey) {
  ModelConfig m = testing::small_model(4);
  m.activation = Activation::kRelu;
  const nlohmann::json j = m;
  EXPECT_EQ(j.get<ModelConfig>(), m);
  nlohmann::json bad = j;
  bad["hidden"] = 3;
  EXPECT_THROW(bad.get<ModelConfig>(), ConfigError);
}

TEST(F64, LittleEndianRoundTrip) {
  const std::vector<double> v = {1.5, -2.25, 1e300, std::nextafter(0.0, 1.0)};
  std::stringstream ss;
  write_f64_le(ss, v);
  EXPECT_EQ(ss.str().size(), 32u);
  EXPECT_EQ(read_f64_le(ss, 4), v);
}

}  // namespace
}  // namespace untrac
