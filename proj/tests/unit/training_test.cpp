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

#include <filesystem>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "untrac/data.hpp"
#include "untrac/errors.hpp"
#include "untrac/training.hpp"
#include "untrac/vocab.hpp"

namespace untrac {
namespace {

namespace fs = std::filesystem;

ModelConfig standard_model(std::uint64_t seed = 0) {
  ModelConfig m;
  m.vocab_size = Vocab::standard().size();
  m.seed = seed;
  return m;
}

TrainConfig short_run(std::size_t steps = 20) {
  TrainConfig c;
  c.steps = steps;
  c.batch_size = 2;
  c.checkpoint_every = 5;
  c.optimizer.learning_rate = 1e-2;
  return c;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = testing::scratch_path(name);
  fs::remove_all(d);
  return d;
}

TEST(TrainConfig, ZeroStepsRejected) {
  TrainConfig c;
  c.steps = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  const Suite s = build_suite(SuiteKind::kA, 16, 0);
  const ModelConfig m = standard_model();
  EXPECT_THROW(train(init_params(m), m, s.train, c), ConfigError);
}

TEST(Train, OneStepSavesTheFinalCheckpoint) {
  const Suite s = build_suite(SuiteKind::kA, 16, 0);
  const ModelConfig m = standard_model();
  TrainConfig c = short_run(1);
  c.checkpoint_every = 128;
  const TrainResult r = train(init_params(m), m, s.train, c);
  EXPECT_EQ(r.loss_curve.size(), 1u);
  ASSERT_EQ(r.checkpoints.entries.size(), 1u);
  EXPECT_EQ(r.checkpoints.entries[0].step, 1u);
  EXPECT_EQ(r.checkpoints.load(0, m), r.params);
  EXPECT_NE(r.params, init_params(m));
}

TEST(Train, Deterministic) {
  const Suite s = build_suite(SuiteKind::kA, 32, 0);
  const ModelConfig m = standard_model();
  const TrainResult a = train(init_params(m), m, s.train, short_run());
  const TrainResult b = train(init_params(m), m, s.train, short_run());
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.loss_curve, b.loss_curve);
}

TEST(Train, CheckpointsEvery128StepsOnDisk) {
  const Suite s = build_suite(SuiteKind::kA, 64, 0);
  const ModelConfig m = standard_model();
  TrainConfig c;
  c.optimizer.learning_rate = 1e-3;
  const fs::path dir = fresh_dir("untrac_training_ckpts");
  const TrainResult r = train(init_params(m), m, s.train, c, dir);
  std::vector<std::size_t> steps;
  for (const auto& e : r.checkpoints.entries) {
    steps.push_back(e.step);
    EXPECT_TRUE(fs::exists(e.path));
    EXPECT_EQ(e.learning_rate, 1e-3);
  }
  EXPECT_EQ(steps, (std::vector<std::size_t>{128, 256, 384, 512}));
  EXPECT_EQ(load_checkpoint(r.checkpoints.final_path).params, r.params);
  const CheckpointSet manifest = read_checkpoint_manifest(dir / "checkpoints.json");
  ASSERT_EQ(manifest.entries.size(), 4u);
  EXPECT_EQ(manifest.load(3, m), r.params);
  EXPECT_EQ(read_loss_curve(dir / "loss_curve.csv"), r.loss_curve);
  fs::remove_all(dir);
}

TEST(Train, SmokeRunHalvesTheTrainingLoss) {
  const Suite s = build_suite(SuiteKind::kA, 256, 0);
  const ModelConfig m = standard_model();
  TrainConfig c;  // 512 steps, batch 2
  c.optimizer.learning_rate = 1e-2;
  const TrainResult r = train(init_params(m), m, s.train, c);
  const auto& lc = r.loss_curve;
  ASSERT_EQ(lc.size(), 512u);
  const double first = std::accumulate(lc.begin(), lc.begin() + 32, 0.0) / 32.0;
  const double last = std::accumulate(lc.end() - 32, lc.end(), 0.0) / 32.0;
  EXPECT_LT(last, 0.5 * first);
}

TEST(Resume, ReproducesTheUninterruptedRunBitIdentically) {
  const Suite s = build_suite(SuiteKind::kB, 32, 0);
  const ModelConfig m = standard_model(1);
  const TrainConfig c = short_run(20);
  const fs::path dir = fresh_dir("untrac_training_resume");
  const TrainResult full = train(init_params(m), m, s.train, c, dir);
  const TrainResult resumed = resume(m, s.train, c, dir, 10);
  EXPECT_EQ(resumed.params, full.params);
  EXPECT_EQ(resumed.loss_curve, full.loss_curve);
  EXPECT_THROW(resume(m, s.train, c, dir, 7), Error);
  fs::remove_all(dir);
}

TEST(TrainExcluding, ZeroWeightDatasetIsANoOp) {
  const Suite s = build_suite(SuiteKind::kA, 32, 0);
  const ModelConfig m = standard_model();
  TrainConfig c = short_run();
  c.mixture_weights = {1.0, 1.0, 1.0, 0.0};
  const ParamVector init = init_params(m);
  const TrainResult base = train(init, m, s.train, c);
  CounterfactualOptions o;
  o.matched_seed = true;
  const CounterfactualResult cf = train_excluding(init, m, s.train, c, "train4", o);
  EXPECT_EQ(cf.params, base.params);
  EXPECT_EQ(cf.steps, c.steps);
}

TEST(TrainExcluding, RemovingARealDatasetChangesTheModel) {
  const Suite s = build_suite(SuiteKind::kA, 32, 0);
  const ModelConfig m = standard_model();
  const ParamVector init = init_params(m);
  const TrainResult base = train(init, m, s.train, short_run());
  EXPECT_NE(train_excluding(init, m, s.train, short_run(), "train1").params, base.params);
}

TEST(TrainExcluding, FixedStepsAlwaysRunsTSteps) {
  const Suite s = build_imbalanced_suite({0.5, 0.25, 0.15, 0.1}, 200, 0);
  const ModelConfig m = standard_model();
  const ParamVector init = init_params(m);
  for (const Dataset& d : s.train) {
    EXPECT_EQ(train_excluding(init, m, s.train, short_run(17), d.name).steps, 17u);
  }
}

TEST(TrainExcluding, FullRemovalEpochsShrinkWithTheExcludedDataset) {
  const Suite s = build_imbalanced_suite({0.5, 0.25, 0.15, 0.1}, 200, 0);
  const ModelConfig m = standard_model();
  const ParamVector init = init_params(m);
  TrainConfig c = short_run(100);  // 100 * 2 / 200 = 1 epoch
  CounterfactualOptions o;
  o.mode = CounterfactualMode::kFullRemoval;
  // One epoch of batch 2 over the 200 - |Z| remaining examples.
  const std::size_t want[4] = {50, 75, 85, 90};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(train_excluding(init, m, s.train, c, s.train[i].name, o).steps, want[i]);
  }
}

TEST(TrainExcluding, UnknownOrOnlyDatasetRejected) {
  const Suite s = build_suite(SuiteKind::kA, 8, 0);
  const ModelConfig m = standard_model();
  const ParamVector init = init_params(m);
  EXPECT_THROW(train_excluding(init, m, s.train, short_run(), "train9"), ConfigError);
  const std::vector<Dataset> one = {s.train[0]};
  EXPECT_THROW(train_excluding(init, m, one, short_run(), "train1"), ConfigError);
}

TEST(CounterfactualSeed, DependsOnTheExcludedName) {
  EXPECT_NE(counterfactual_seed(0, "train1"), counterfactual_seed(0, "train2"));
  EXPECT_EQ(counterfactual_seed(3, "train1"), counterfactual_seed(3, "train1"));
  EXPECT_EQ(parse_counterfactual_mode(counterfactual_mode_name(CounterfactualMode::kFullRemoval)),
            CounterfactualMode::kFullRemoval);
  EXPECT_THROW(parse_counterfactual_mode("half"), ConfigError);
}

}  // namespace
}  // namespace untrac
