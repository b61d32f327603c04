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

// Experiment orchestration: configuration, the stage pipeline behind the CLI
// (gen-data, train, attribute, ground-truth, evaluate, sweep), and the
// append-only run manifest.
//
// Layout under the output directory:
//   config.json                      effective config and its hash
//   manifest.jsonl                   one record per stage execution
//   seed_<s>/data/                   suite JSONL files, suite.json, pretrain.jsonl
//   seed_<s>/train/                  init.bin, ckpt_*.bin, checkpoints.json, run.json
//   seed_<s>/ground_truth/           records.json, without_<name>.bin
//   scores/<method>_seed<s>.{json,csv}
//   eval/                            table2.csv, table3.csv, report_<method>.json
//   sweep/                           table4.csv, figure4.csv, sweep_long.csv, cells/

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "untrac/attribution.hpp"
#include "untrac/baselines.hpp"
#include "untrac/data.hpp"
#include "untrac/ground_truth.hpp"
#include "untrac/model.hpp"
#include "untrac/optim.hpp"
#include "untrac/stats.hpp"
#include "untrac/training.hpp"

namespace untrac {

inline constexpr std::array<std::string_view, 7> kMethods = {
    "untrac", "untrac-inv", "graddot", "gradcos", "tracin", "hif-lissa", "hif-arnoldi"};

bool is_method(std::string_view name);
// Throws ConfigError listing the valid names.
void check_method(std::string_view name);

// Output root override for relative output directories.
inline constexpr const char* kOutputRootEnv = "UNTRAC_OUTPUT_ROOT";

struct DataConfig {
  SuiteKind suite = SuiteKind::kA;
  std::size_t n_per_dataset = 256;
  // When set, the suite is read from this directory (as written by gen-data)
  // instead of being generated.
  std::filesystem::path dir;
};

// Shared initialization: descent on the suite's relation corpus before
// finetuning. steps == 0 starts finetuning from the random init.
struct PretrainConfig {
  std::size_t steps = 1000;
  std::size_t batch_size = 8;
  std::size_t n_examples = 4096;
  OptimizerConfig optimizer = [] {
    OptimizerConfig o;
    o.learning_rate = 1e-2;
    return o;
  }();
};

struct BaselineConfig {
  std::size_t batch_size = 1;  // gradient aggregation batches
  HifOptions hif;              // method and seed are set per run
};

struct GroundTruthConfig {
  bool enabled = true;
  CounterfactualMode mode = CounterfactualMode::kFixedSteps;
  bool matched_seed = false;
  std::size_t eval_batch_size = 1;
};

struct EvalConfig {
  std::vector<Metric> metrics = {Metric::kPearson, Metric::kSpearman};
  std::size_t n_subsets = 1;
  std::size_t n_runs = 3;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
};

// The two one-dimensional unlearning grids (optimizer at a fixed rate, rate
// at a fixed optimizer) and the per-epoch batch-size trajectories.
struct SweepConfig {
  std::vector<OptimizerFamily> optimizers = {
      OptimizerFamily::kSgd, OptimizerFamily::kSgdMomentum, OptimizerFamily::kRmsprop,
      OptimizerFamily::kAdam, OptimizerFamily::kAdafactor};
  double base_learning_rate = 5e-5;
  std::vector<double> learning_rates = {5e-6, 1e-5, 5e-5, 1e-4, 5e-4};
  OptimizerFamily base_optimizer = OptimizerFamily::kAdam;
  std::vector<std::size_t> batch_sizes = {1, 256};
  std::size_t trajectory_epochs = 5;
  std::vector<std::string> methods = {"untrac", "untrac-inv"};
};

struct ExperimentConfig {
  std::filesystem::path output_dir = "untrac_runs";
  ModelConfig model = [] {
    ModelConfig m;
    m.vocab_size = Vocab::standard().size();
    return m;
  }();
  DataConfig data;
  PretrainConfig pretrain;
  TrainConfig train = [] {
    TrainConfig t;
    t.optimizer.learning_rate = 1e-4;
    return t;
  }();
  UnlearnConfig untrac = UnlearnConfig::untrac_defaults();
  UnlearnConfig untrac_inv = UnlearnConfig::untrac_inv_defaults();
  BaselineConfig baselines;
  std::vector<std::string> methods{kMethods.begin(), kMethods.end()};
  GroundTruthConfig ground_truth;
  EvalConfig eval;
  SweepConfig sweep;

  // Throws ConfigError on inconsistent fields (seed list length != n_runs,
  // unknown methods, vocab size mismatch, missing data dir).
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& c);
// Unknown keys are rejected; omitted keys keep their defaults.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// FNV-1a (hex) of the canonical JSON of `c` without output_dir, eval.seeds and
// eval.n_runs, so runs of different seeds share one hash.
std::string config_hash(const ExperimentConfig& c);

// Relative paths resolve against $UNTRAC_OUTPUT_ROOT when it is set.
std::filesystem::path resolve_output_dir(const std::filesystem::path& p);

struct StageRecord {
  std::string stage;
  std::optional<std::uint64_t> seed;
  std::string method;
  std::string status;  // "completed" or "failed"
  std::string config_hash;
  nlohmann::json artifacts = nlohmann::json::object();
  double wall_clock_s = 0.0;
  std::string error;
};

// Append-only JSON-lines log of stage executions.
class RunManifest {
 public:
  explicit RunManifest(std::filesystem::path path);

  void append(const StageRecord& r);
  bool completed(std::string_view stage, std::optional<std::uint64_t> seed,
                 std::string_view method, std::string_view hash) const;
  const std::vector<StageRecord>& records() const { return records_; }

 private:
  std::filesystem::path path_;
  std::vector<StageRecord> records_;
};

struct RunOptions {
  bool force = false;
  std::size_t parallel = 1;
  std::optional<std::uint64_t> seed;  // restrict per-seed stages to one seed
  std::vector<std::string> methods;   // overrides config.methods when non-empty
  std::ostream* log = nullptr;        // progress lines; null = silent
};

// Correlations of one method across runs, per metric.
struct MethodEvaluation {
  std::string method;
  std::vector<CorrelationReport> reports;  // one per configured metric
};

struct EvaluationResult {
  std::vector<MethodEvaluation> methods;
  // Standardized full-test scores averaged over runs: rows are methods then
  // "ground_truth", columns follow train_names.
  std::vector<std::string> train_names;
  std::vector<std::pair<std::string, std::vector<double>>> table2;
};

struct SweepCell {
  std::string id;
  std::string axis;  // "optimizer", "learning_rate" or "batch_size"
  std::string method;
  UnlearnConfig unlearn;
  std::string status;  // "completed", "skipped" or "failed: <message>"
  // mean / std over runs and subsets, per metric and per evaluated epoch.
  std::vector<double> epochs;
  std::vector<std::vector<double>> mean;  // [metric][epoch]
  std::vector<std::vector<double>> std;
};

class Experiment {
 public:
  explicit Experiment(ExperimentConfig cfg, RunOptions opts = {});

  void gen_data();
  void train();
  void attribute();
  void ground_truth();
  EvaluationResult evaluate();
  std::vector<SweepCell> sweep();
  // Every stage in order; ground truth only when enabled.
  void run_all();

  const ExperimentConfig& config() const { return cfg_; }
  const std::string& hash() const { return hash_; }
  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path seed_dir(std::uint64_t seed) const;
  std::filesystem::path score_path(std::string_view method, std::uint64_t seed) const;
  std::vector<std::uint64_t> seeds() const;

  // Artifacts of completed stages.
  Suite load_suite(std::uint64_t seed) const;
  std::vector<Dataset> test_subsets(const Suite& suite, std::uint64_t seed) const;
  ParamVector load_theta0(std::uint64_t seed) const;
  ParamVector load_init(std::uint64_t seed) const;
  CheckpointSet load_checkpoints(std::uint64_t seed) const;
  std::vector<InfluenceScore> load_scores(std::string_view method, std::uint64_t seed) const;
  std::vector<GroundTruthRecord> load_ground_truth(std::uint64_t seed) const;

  // Scores of `method` for one seed, computed from stored artifacts without
  // writing anything. `unlearn` overrides the method's unlearning config.
  std::vector<InfluenceScore> compute_scores(std::string_view method, std::uint64_t seed,
                                             const std::optional<UnlearnConfig>& unlearn = {}) const;

 private:
  // Returns false when the manifest already records the stage as completed
  // for this config and --force is off.
  template <typename Fn>
  bool run_stage(std::string_view stage, std::optional<std::uint64_t> seed,
                 std::string_view method, Fn&& fn);
  void log(const std::string& line) const;
  std::vector<std::string> methods() const;

  ExperimentConfig cfg_;
  RunOptions opts_;
  std::string hash_;
  std::filesystem::path root_;
  RunManifest manifest_;
};

// Exit code for an exception escaping a stage: 2 usage/config, 3 missing
// dependency, 4 numerical failure, 1 anything else.
int exit_code_for(const std::exception& e);

}  // namespace untrac
