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

// Leave-dataset-out ground truth: retrain without one dataset and measure
// the change of the summed test loss.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "untrac/data.hpp"
#include "untrac/training.hpp"

namespace untrac {

struct GroundTruthRecord {
  std::string excluded;
  CounterfactualMode mode = CounterfactualMode::kFixedSteps;
  std::filesystem::path checkpoint;  // theta_{-Z}; empty for in-memory runs
  std::vector<std::string> test_names;
  std::vector<double> influence;     // one per test dataset
  std::uint64_t seed = 0;
  std::size_t steps = 0;

  bool operator==(const GroundTruthRecord&) const = default;
};

struct GroundTruthOptions {
  CounterfactualOptions counterfactual;
  std::size_t eval_batch_size = 1;  // 0 = one batch
  std::size_t parallel = 1;
  // When set, theta_{-Z} is saved to <out_dir>/without_<name>.bin.
  std::filesystem::path out_dir;
};

// One counterfactual retraining per training dataset, each starting from
// `init` (the parameters theta0 was trained from). Runs concurrently up to
// opts.parallel; records do not depend on it.
std::vector<GroundTruthRecord> ground_truth(const ParamVector& init, const ParamVector& theta0,
                                            const ModelConfig& model,
                                            const std::vector<Dataset>& train,
                                            const std::vector<const Dataset*>& tests,
                                            const TrainConfig& train_cfg,
                                            const GroundTruthOptions& opts);

// sum_j L(z'_j, theta_{-Z}) - L(z'_j, theta_0) with the batched-sum loss.
double leave_out_influence(const ParamVector& theta_minus, const ParamVector& theta0,
                           const ModelConfig& model, const Dataset& test,
                           std::size_t eval_batch_size);

// Seeded shuffle, then contiguous near-equal splits (sizes differ by at most
// one). Subset i is named "<name>/<i>".
std::vector<Dataset> split_subsets(const Dataset& ds, std::size_t n_subsets,
                                   std::uint64_t seed);

}  // namespace untrac
