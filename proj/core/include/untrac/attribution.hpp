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

// Unlearning-based attribution.
//
// UnTrac unlearns each training dataset by gradient ascent and reports the
// resulting change of the summed test loss. UnTrac-Inv unlearns the test set
// once and reports the change of every training dataset's summed loss.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "untrac/data.hpp"
#include "untrac/model.hpp"
#include "untrac/optim.hpp"

namespace untrac {

struct UnlearnConfig {
  OptimizerConfig optimizer;    // adam, lr 5e-5; grad_clip must stay unset
  std::size_t batch_size = 1;   // 0 puts the whole dataset in one batch
  std::size_t epochs = 1;
  std::uint64_t seed = 0;
  bool shuffle = true;          // one seeded shuffle per epoch
  std::size_t eval_every = 0;   // evaluation cadence in steps; 0 = per epoch
  // Batch size of the summed evaluation loss; 0 = one batch.
  std::size_t eval_batch_size = 1;

  // UnTrac defaults: batch 1, 1 epoch.
  static UnlearnConfig untrac_defaults();
  // UnTrac-Inv defaults: the whole test set in one batch, 5 epochs.
  static UnlearnConfig untrac_inv_defaults();

  // Throws ConfigError for epochs == 0 or a configured grad_clip.
  void validate() const;
  bool operator==(const UnlearnConfig&) const = default;
};

struct EvalPoint {
  std::size_t step = 0;
  double epoch = 0.0;  // step / steps_per_epoch
  double loss = 0.0;   // summed evaluation loss at this step
  // Accumulated grad . delta since step 0 (first-order runs only).
  double first_order = 0.0;
};

struct UnlearnResult {
  ParamVector params;
  std::vector<std::vector<EvalPoint>> series;  // one per hook
  std::size_t steps = 0;                       // ascent steps actually applied
  std::size_t planned_steps = 0;
  bool diverged = false;
  std::size_t last_valid_step = 0;
};

struct UnlearnOptions {
  // Accumulate grad(hook loss at theta_{i-1}) . (theta_i - theta_{i-1}) per
  // step. Costs one extra gradient per hook per step.
  bool first_order = false;
};

// Ascent on `dataset` for cfg.epochs epochs. Evaluates every hook at step 0
// and on the cadence. Divergence (non-finite loss or gradient) stops the run,
// sets `diverged`, and keeps the series up to the last finite point.
UnlearnResult unlearn(const ParamVector& theta0, const ModelConfig& model,
                      const Dataset& dataset, const UnlearnConfig& cfg,
                      const std::vector<const Dataset*>& hooks,
                      const UnlearnOptions& opts = {});

std::size_t steps_per_epoch(std::size_t n_examples, std::size_t batch_size);

struct InfluenceScore {
  std::string train_dataset;
  std::string test_dataset;
  double value = 0.0;
  // (epoch, cumulative influence), starting at (0, 0).
  std::vector<std::pair<double, double>> trajectory;
  std::string method;
  std::uint64_t seed = 0;
  std::string config_hash;
  bool diverged = false;
  // UnTrac only: unlearning did not raise the dataset's own loss in the
  // first epoch.
  bool self_influence_violation = false;
};

struct AttributionReport {
  std::vector<InfluenceScore> scores;
  std::size_t unlearning_runs = 0;
  std::size_t unlearning_steps = 0;
};

// One unlearning run per training dataset from a fresh copy of theta0, each
// shuffled with seed ^ fnv1a64(name). `parallel` runs may execute at once;
// results do not depend on it.
AttributionReport untrac_influence(const ParamVector& theta0, const ModelConfig& model,
                                   const std::vector<Dataset>& train, const Dataset& test,
                                   const UnlearnConfig& cfg, std::size_t parallel = 1);

// Several test sets from the same unlearning runs; scores are ordered
// train-major (scores[i * tests.size() + t]).
AttributionReport untrac_influence(const ParamVector& theta0, const ModelConfig& model,
                                   const std::vector<Dataset>& train,
                                   const std::vector<const Dataset*>& tests,
                                   const UnlearnConfig& cfg, std::size_t parallel = 1);

// A single unlearning run on the test set, scored on every training dataset.
AttributionReport untrac_inv_influence(const ParamVector& theta0, const ModelConfig& model,
                                       const std::vector<Dataset>& train, const Dataset& test,
                                       const UnlearnConfig& cfg);

// One run per test set; scores ordered train-major as above.
AttributionReport untrac_inv_influence(const ParamVector& theta0, const ModelConfig& model,
                                       const std::vector<Dataset>& train,
                                       const std::vector<const Dataset*>& tests,
                                       const UnlearnConfig& cfg);

enum class FirstOrderVariant { kUntracApprox, kInvApprox };

// Same trajectories as untrac / untrac_inv, scored by the accumulated
// first-order terms instead of loss differences.
AttributionReport first_order_influence(const ParamVector& theta0, const ModelConfig& model,
                                        const std::vector<Dataset>& train,
                                        const Dataset& test, const UnlearnConfig& cfg,
                                        FirstOrderVariant variant, std::size_t parallel = 1);

// Seed of the UnTrac run that unlearns `name`.
std::uint64_t unlearn_seed(std::uint64_t seed, const std::string& name);

}  // namespace untrac
