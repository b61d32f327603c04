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

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "untrac/data.hpp"
#include "untrac/model.hpp"
#include "untrac/optim.hpp"

namespace untrac {

// How the remaining datasets are weighted once one is excluded.
enum class ExclusionWeighting { kRenormalized, kEqual };

struct TrainConfig {
  std::size_t steps = 512;
  std::size_t batch_size = 2;
  OptimizerConfig optimizer;
  std::size_t checkpoint_every = 128;
  std::uint64_t seed = 0;
  // Mixture weights per training dataset; empty means equal weights.
  std::vector<double> mixture_weights;
  ExclusionWeighting exclusion_weighting = ExclusionWeighting::kRenormalized;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct CheckpointEntry {
  std::size_t step = 0;
  double learning_rate = 0.0;
  std::filesystem::path path;  // empty for in-memory runs
  // Present for in-memory runs; otherwise load from `path`.
  std::optional<ParamVector> params;
};

struct CheckpointSet {
  std::vector<CheckpointEntry> entries;  // strictly increasing steps
  std::filesystem::path final_path;

  // Parameters of entry i, from memory or disk. Throws FormatError naming the
  // entry when the file does not load or does not match `config`.
  ParamVector load(std::size_t i, const ModelConfig& config) const;
};

struct TrainResult {
  ParamVector params;
  CheckpointSet checkpoints;
  std::vector<double> loss_curve;  // loss_curve[s] is the loss of step s + 1
};

// Runs cfg.steps descent steps on batches from the weighted mixture of
// `datasets`. With a non-empty `out_dir`, checkpoints go to
// <out_dir>/ckpt_<step>.bin with a trainer-state sidecar (.state) so the run
// can be resumed bit-identically; otherwise they are kept in memory.
TrainResult train(const ParamVector& init, const ModelConfig& model,
                  const std::vector<Dataset>& datasets, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir = {});

// Continues a run written by train() from the checkpoint at `from_step` up to
// cfg.steps. Earlier loss-curve values are read from <out_dir>/loss_curve.csv.
TrainResult resume(const ModelConfig& model, const std::vector<Dataset>& datasets,
                   const TrainConfig& cfg, const std::filesystem::path& out_dir,
                   std::size_t from_step);

enum class CounterfactualMode { kFullRemoval, kFixedSteps };

std::string_view counterfactual_mode_name(CounterfactualMode m);
CounterfactualMode parse_counterfactual_mode(std::string_view name);

struct CounterfactualOptions {
  CounterfactualMode mode = CounterfactualMode::kFixedSteps;
  // Reuse cfg.seed instead of cfg.seed ^ fnv1a64(excluded).
  bool matched_seed = false;
};

struct CounterfactualResult {
  ParamVector params;
  std::size_t steps = 0;
  std::uint64_t seed = 0;
};

// fixed_steps: cfg.steps steps on the mixture with `excluded` removed.
// full_removal: E = max(1, round(steps * batch_size / N_all)) shuffled epochs
// over every remaining example, so the step count shrinks with the excluded
// dataset. Throws ConfigError for an unknown name or an empty remainder.
CounterfactualResult train_excluding(const ParamVector& init, const ModelConfig& model,
                                     const std::vector<Dataset>& datasets,
                                     const TrainConfig& cfg, const std::string& excluded,
                                     const CounterfactualOptions& opts = {});

// Seed of the counterfactual run that excludes `excluded`.
std::uint64_t counterfactual_seed(std::uint64_t seed, const std::string& excluded);

void write_loss_curve(const std::filesystem::path& path, const std::vector<double>& curve);
std::vector<double> read_loss_curve(const std::filesystem::path& path);

// Structured-text CheckpointSet manifest (JSON).
void write_checkpoint_manifest(const std::filesystem::path& path, const CheckpointSet& set);
CheckpointSet read_checkpoint_manifest(const std::filesystem::path& path);

}  // namespace untrac
