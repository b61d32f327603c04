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

#include "untrac/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "untrac/errors.hpp"
#include "untrac/json_io.hpp"
#include "untrac/rng.hpp"

namespace untrac {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename T>
void get_opt(const json& j, const char* key, T& out, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DependencyError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

std::ofstream open_csv(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

void require_file(const fs::path& path, std::string_view stage) {
  if (!fs::exists(path)) {
    throw DependencyError("missing " + path.string() + "; run the '" + std::string(stage) +
                          "' stage first");
  }
}

std::string csv_number(double v) {
  if (!std::isfinite(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string cell_number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

// Summed test loss deltas are additive over subsets, so full-test scores are
// the per-subset sums.
std::vector<double> full_test_scores(const std::vector<InfluenceScore>& scores,
                                     const std::vector<std::string>& train_names) {
  std::vector<double> out(train_names.size(), 0.0);
  for (const InfluenceScore& s : scores) {
    auto it = std::find(train_names.begin(), train_names.end(), s.train_dataset);
    if (it == train_names.end()) {
      throw FormatError("score refers to unknown training dataset '" + s.train_dataset + "'");
    }
    out[static_cast<std::size_t>(it - train_names.begin())] += s.value;
  }
  return out;
}

// table[subset][train] from scores addressed by (train, test) names.
ScoreTable score_table(const std::vector<InfluenceScore>& scores,
                       const std::vector<std::string>& train_names,
                       const std::vector<std::string>& test_names,
                       std::size_t trajectory_index = static_cast<std::size_t>(-1)) {
  ScoreTable t(test_names.size(), std::vector<double>(train_names.size(), std::nan("")));
  for (const InfluenceScore& s : scores) {
    auto i = std::find(train_names.begin(), train_names.end(), s.train_dataset);
    auto k = std::find(test_names.begin(), test_names.end(), s.test_dataset);
    if (i == train_names.end() || k == test_names.end()) {
      throw FormatError("score (" + s.train_dataset + ", " + s.test_dataset +
                        ") does not match the suite");
    }
    double v = s.value;
    if (trajectory_index != static_cast<std::size_t>(-1)) {
      v = trajectory_index < s.trajectory.size() ? s.trajectory[trajectory_index].second
                                                 : std::nan("");
    }
    t[static_cast<std::size_t>(k - test_names.begin())]
     [static_cast<std::size_t>(i - train_names.begin())] = v;
  }
  for (const auto& row : t) {
    for (double v : row) {
      if (!std::isfinite(v)) {
        throw UndefinedStatisticError("non-finite or missing score; cannot correlate");
      }
    }
  }
  return t;
}

ScoreTable truth_table(const std::vector<GroundTruthRecord>& records,
                       const std::vector<std::string>& train_names,
                       const std::vector<std::string>& test_names) {
  ScoreTable t(test_names.size(), std::vector<double>(train_names.size(), std::nan("")));
  for (const GroundTruthRecord& r : records) {
    auto i = std::find(train_names.begin(), train_names.end(), r.excluded);
    if (i == train_names.end() || r.test_names != test_names) {
      throw FormatError("ground-truth record for '" + r.excluded + "' does not match the suite");
    }
    for (std::size_t k = 0; k < test_names.size(); ++k) {
      t[k][static_cast<std::size_t>(i - train_names.begin())] = r.influence[k];
    }
  }
  return t;
}

std::vector<std::string> names_of(const std::vector<Dataset>& ds) {
  std::vector<std::string> out;
  for (const Dataset& d : ds) out.push_back(d.name);
  return out;
}

std::vector<const Dataset*> pointers(const std::vector<Dataset>& ds) {
  std::vector<const Dataset*> out;
  for (const Dataset& d : ds) out.push_back(&d);
  return out;
}

json hif_to_json(const HifOptions& h) {
  return {{"damping", h.damping},
          {"lissa_iters", h.lissa_iters},
          {"lissa_scale", h.lissa_scale ? json(*h.lissa_scale) : json(nullptr)},
          {"arnoldi_iters", h.arnoldi_iters},
          {"arnoldi_top_k", h.arnoldi_top_k},
          {"arnoldi_restart", h.arnoldi_restart},
          {"hessian_sample_size", h.hessian_sample_size},
          {"normalize_train", h.normalize_train},
          {"hvp", std::string(hvp_method_name(h.hvp))}};
}

void hif_from_json(const json& j, HifOptions& h) {
  const std::string w = "baselines.hif";
  require_keys(j, {"damping", "lissa_iters", "lissa_scale", "arnoldi_iters", "arnoldi_top_k",
                   "arnoldi_restart", "hessian_sample_size", "normalize_train", "hvp"},
               w);
  get_opt(j, "damping", h.damping, w);
  get_opt(j, "lissa_iters", h.lissa_iters, w);
  if (auto it = j.find("lissa_scale"); it != j.end()) {
    if (it->is_null()) {
      h.lissa_scale.reset();
    } else {
      h.lissa_scale = it->get<double>();
    }
  }
  get_opt(j, "arnoldi_iters", h.arnoldi_iters, w);
  get_opt(j, "arnoldi_top_k", h.arnoldi_top_k, w);
  get_opt(j, "arnoldi_restart", h.arnoldi_restart, w);
  get_opt(j, "hessian_sample_size", h.hessian_sample_size, w);
  get_opt(j, "normalize_train", h.normalize_train, w);
  std::string hvp(hvp_method_name(h.hvp));
  get_opt(j, "hvp", hvp, w);
  h.hvp = parse_hvp_method(hvp);
}

json stage_to_json(const StageRecord& r) {
  return {{"stage", r.stage},
          {"seed", r.seed ? json(*r.seed) : json(nullptr)},
          {"method", r.method},
          {"status", r.status},
          {"config_hash", r.config_hash},
          {"artifacts", r.artifacts},
          {"wall_clock_s", r.wall_clock_s},
          {"error", r.error}};
}

StageRecord stage_from_json(const json& j) {
  StageRecord r;
  r.stage = j.at("stage").get<std::string>();
  if (!j.at("seed").is_null()) r.seed = j.at("seed").get<std::uint64_t>();
  r.method = j.at("method").get<std::string>();
  r.status = j.at("status").get<std::string>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.artifacts = j.at("artifacts");
  r.wall_clock_s = j.at("wall_clock_s").get<double>();
  r.error = j.at("error").get<std::string>();
  return r;
}

std::uint64_t pretrain_seed(std::uint64_t seed) { return seed ^ fnv1a64("pretrain"); }
std::uint64_t subset_seed(std::uint64_t seed) { return seed ^ fnv1a64("subsets"); }

void write_scores(const fs::path& json_path, const fs::path& csv_path,
                  const std::vector<InfluenceScore>& scores, std::string_view method,
                  std::uint64_t seed, const std::string& hash) {
  write_json(json_path, {{"config_hash", hash},
                         {"seed", seed},
                         {"method", method},
                         {"scores", scores}});
  std::ofstream csv = open_csv(csv_path);
  csv << "method,train_dataset,test_dataset,epoch,cumulative_influence\n";
  for (const InfluenceScore& s : scores) {
    if (s.trajectory.empty()) {
      csv << method << "," << s.train_dataset << "," << s.test_dataset << ",,"
          << csv_number(s.value) << "\n";
    }
    for (const auto& [epoch, value] : s.trajectory) {
      csv << method << "," << s.train_dataset << "," << s.test_dataset << ","
          << csv_number(epoch) << "," << csv_number(value) << "\n";
    }
  }
}

}  // namespace

bool is_method(std::string_view name) {
  return std::find(kMethods.begin(), kMethods.end(), name) != kMethods.end();
}

void check_method(std::string_view name) {
  if (is_method(name)) return;
  std::string valid;
  for (std::string_view m : kMethods) valid += (valid.empty() ? "" : ", ") + std::string(m);
  throw ConfigError("unknown method '" + std::string(name) + "' (valid: " + valid + ")");
}

void ExperimentConfig::validate() const {
  model.validate();
  if (model.vocab_size != Vocab::standard().size()) {
    throw ConfigError("model.vocab_size must equal the standard vocabulary size (" +
                      std::to_string(Vocab::standard().size()) + ")");
  }
  if (data.n_per_dataset == 0) throw ConfigError("data.n_per_dataset must be >= 1");
  if (!data.dir.empty() && !fs::exists(data.dir / "suite.json")) {
    throw DependencyError("data.dir " + data.dir.string() + " has no suite.json");
  }
  if (pretrain.steps > 0) {
    if (pretrain.batch_size == 0 || pretrain.n_examples == 0) {
      throw ConfigError("pretrain.batch_size and pretrain.n_examples must be >= 1");
    }
    pretrain.optimizer.validate();
  }
  train.validate();
  untrac.validate();
  untrac_inv.validate();
  for (const std::string& m : methods) check_method(m);
  for (const std::string& m : sweep.methods) {
    if (m != "untrac" && m != "untrac-inv") {
      throw ConfigError("sweep.methods may only contain untrac and untrac-inv");
    }
  }
  if (eval.seeds.size() != eval.n_runs) {
    throw ConfigError("eval.seeds has " + std::to_string(eval.seeds.size()) +
                      " entries but eval.n_runs is " + std::to_string(eval.n_runs));
  }
  if (eval.n_runs == 0) throw ConfigError("eval.n_runs must be >= 1");
  if (eval.metrics.empty()) throw ConfigError("eval.metrics must not be empty");
  if (eval.n_subsets == 0 || eval.n_subsets > data.n_per_dataset) {
    throw ConfigError("eval.n_subsets must lie in [1, data.n_per_dataset]");
  }
  if (sweep.trajectory_epochs == 0) throw ConfigError("sweep.trajectory_epochs must be >= 1");
}

json to_json(const ExperimentConfig& c) {
  json metrics = json::array();
  for (Metric m : c.eval.metrics) metrics.push_back(std::string(metric_name(m)));
  json optimizers = json::array();
  for (OptimizerFamily f : c.sweep.optimizers) {
    optimizers.push_back(std::string(optimizer_family_name(f)));
  }
  json train = c.train;
  train.erase("seed");
  json untrac = c.untrac;
  untrac.erase("seed");
  json untrac_inv = c.untrac_inv;
  untrac_inv.erase("seed");
  json model = c.model;
  model.erase("seed");
  return {
      {"output_dir", c.output_dir.string()},
      {"model", model},
      {"data",
       {{"suite", std::string(suite_name(c.data.suite))},
        {"n_per_dataset", c.data.n_per_dataset},
        {"dir", c.data.dir.string()}}},
      {"pretrain",
       {{"steps", c.pretrain.steps},
        {"batch_size", c.pretrain.batch_size},
        {"n_examples", c.pretrain.n_examples},
        {"optimizer", c.pretrain.optimizer}}},
      {"train", train},
      {"unlearn", {{"untrac", untrac}, {"untrac_inv", untrac_inv}}},
      {"baselines", {{"batch_size", c.baselines.batch_size}, {"hif", hif_to_json(c.baselines.hif)}}},
      {"methods", c.methods},
      {"ground_truth",
       {{"enabled", c.ground_truth.enabled},
        {"mode", std::string(counterfactual_mode_name(c.ground_truth.mode))},
        {"matched_seed", c.ground_truth.matched_seed},
        {"eval_batch_size", c.ground_truth.eval_batch_size}}},
      {"eval",
       {{"metrics", metrics},
        {"n_subsets", c.eval.n_subsets},
        {"n_runs", c.eval.n_runs},
        {"seeds", c.eval.seeds}}},
      {"sweep",
       {{"optimizers", optimizers},
        {"base_learning_rate", c.sweep.base_learning_rate},
        {"learning_rates", c.sweep.learning_rates},
        {"base_optimizer", std::string(optimizer_family_name(c.sweep.base_optimizer))},
        {"batch_sizes", c.sweep.batch_sizes},
        {"trajectory_epochs", c.sweep.trajectory_epochs},
        {"methods", c.sweep.methods}}}};
}

ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig c;
  require_keys(j, {"output_dir", "model", "data", "pretrain", "train", "unlearn", "baselines",
                   "methods", "ground_truth", "eval", "sweep"},
               "config");
  std::string out = c.output_dir.string();
  get_opt(j, "output_dir", out, "config");
  c.output_dir = out;
  if (j.contains("model")) {
    json m = j.at("model");
    if (!m.contains("vocab_size")) m["vocab_size"] = c.model.vocab_size;
    from_json(m, c.model);
  }
  if (j.contains("data")) {
    const json& d = j.at("data");
    require_keys(d, {"suite", "n_per_dataset", "dir"}, "data");
    std::string suite(suite_name(c.data.suite));
    get_opt(d, "suite", suite, "data");
    c.data.suite = parse_suite(suite);
    get_opt(d, "n_per_dataset", c.data.n_per_dataset, "data");
    std::string dir;
    get_opt(d, "dir", dir, "data");
    c.data.dir = dir;
  }
  if (j.contains("pretrain")) {
    const json& p = j.at("pretrain");
    require_keys(p, {"steps", "batch_size", "n_examples", "optimizer"}, "pretrain");
    get_opt(p, "steps", c.pretrain.steps, "pretrain");
    get_opt(p, "batch_size", c.pretrain.batch_size, "pretrain");
    get_opt(p, "n_examples", c.pretrain.n_examples, "pretrain");
    if (p.contains("optimizer")) from_json(p.at("optimizer"), c.pretrain.optimizer);
  }
  if (j.contains("train")) from_json(j.at("train"), c.train);
  if (j.contains("unlearn")) {
    const json& u = j.at("unlearn");
    require_keys(u, {"untrac", "untrac_inv"}, "unlearn");
    if (u.contains("untrac")) from_json(u.at("untrac"), c.untrac);
    if (u.contains("untrac_inv")) from_json(u.at("untrac_inv"), c.untrac_inv);
  }
  if (j.contains("baselines")) {
    const json& b = j.at("baselines");
    require_keys(b, {"batch_size", "hif"}, "baselines");
    get_opt(b, "batch_size", c.baselines.batch_size, "baselines");
    if (b.contains("hif")) hif_from_json(b.at("hif"), c.baselines.hif);
  }
  get_opt(j, "methods", c.methods, "config");
  if (j.contains("ground_truth")) {
    const json& g = j.at("ground_truth");
    require_keys(g, {"enabled", "mode", "matched_seed", "eval_batch_size"}, "ground_truth");
    get_opt(g, "enabled", c.ground_truth.enabled, "ground_truth");
    std::string mode(counterfactual_mode_name(c.ground_truth.mode));
    get_opt(g, "mode", mode, "ground_truth");
    c.ground_truth.mode = parse_counterfactual_mode(mode);
    get_opt(g, "matched_seed", c.ground_truth.matched_seed, "ground_truth");
    get_opt(g, "eval_batch_size", c.ground_truth.eval_batch_size, "ground_truth");
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    require_keys(e, {"metrics", "n_subsets", "n_runs", "seeds"}, "eval");
    if (e.contains("metrics")) {
      std::vector<std::string> names;
      get_opt(e, "metrics", names, "eval");
      c.eval.metrics.clear();
      for (const std::string& n : names) c.eval.metrics.push_back(parse_metric(n));
    }
    get_opt(e, "n_subsets", c.eval.n_subsets, "eval");
    get_opt(e, "seeds", c.eval.seeds, "eval");
    c.eval.n_runs = c.eval.seeds.size();
    get_opt(e, "n_runs", c.eval.n_runs, "eval");
    if (e.contains("n_runs") && !e.contains("seeds")) {
      c.eval.seeds.clear();
      for (std::size_t i = 0; i < c.eval.n_runs; ++i) c.eval.seeds.push_back(i);
    }
  }
  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    require_keys(s, {"optimizers", "base_learning_rate", "learning_rates", "base_optimizer",
                     "batch_sizes", "trajectory_epochs", "methods"},
                 "sweep");
    if (s.contains("optimizers")) {
      std::vector<std::string> names;
      get_opt(s, "optimizers", names, "sweep");
      c.sweep.optimizers.clear();
      for (const std::string& n : names) c.sweep.optimizers.push_back(parse_optimizer_family(n));
    }
    get_opt(s, "base_learning_rate", c.sweep.base_learning_rate, "sweep");
    get_opt(s, "learning_rates", c.sweep.learning_rates, "sweep");
    std::string base(optimizer_family_name(c.sweep.base_optimizer));
    get_opt(s, "base_optimizer", base, "sweep");
    c.sweep.base_optimizer = parse_optimizer_family(base);
    get_opt(s, "batch_sizes", c.sweep.batch_sizes, "sweep");
    get_opt(s, "trajectory_epochs", c.sweep.trajectory_epochs, "sweep");
    get_opt(s, "methods", c.sweep.methods, "sweep");
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  if (!fs::exists(path)) throw DependencyError("config file " + path.string() + " not found");
  std::ifstream in(path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return experiment_config_from_json(j);
}

std::string config_hash(const ExperimentConfig& c) {
  json j = to_json(c);
  j.erase("output_dir");
  j["eval"].erase("seeds");
  j["eval"].erase("n_runs");
  return hex64(fnv1a64(j.dump()));
}

fs::path resolve_output_dir(const fs::path& p) {
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv(kOutputRootEnv); root && *root) return fs::path(root) / p;
  return p;
}

RunManifest::RunManifest(fs::path path) : path_(std::move(path)) {
  std::ifstream in(path_);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      records_.push_back(stage_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw FormatError(path_.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

void RunManifest::append(const StageRecord& r) {
  fs::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::app);
  if (!out) throw FormatError("cannot append to " + path_.string());
  out << stage_to_json(r).dump() << "\n";
  records_.push_back(r);
}

bool RunManifest::completed(std::string_view stage, std::optional<std::uint64_t> seed,
                            std::string_view method, std::string_view hash) const {
  return std::any_of(records_.begin(), records_.end(), [&](const StageRecord& r) {
    return r.stage == stage && r.seed == seed && r.method == method && r.config_hash == hash &&
           r.status == "completed";
  });
}

Experiment::Experiment(ExperimentConfig cfg, RunOptions opts)
    : cfg_(std::move(cfg)),
      opts_(std::move(opts)),
      hash_(config_hash(cfg_)),
      root_(resolve_output_dir(cfg_.output_dir)),
      manifest_(root_ / "manifest.jsonl") {
  cfg_.validate();
  for (const std::string& m : opts_.methods) check_method(m);
  if (opts_.parallel == 0) throw ConfigError("--parallel must be >= 1");
  json echo = to_json(cfg_);
  echo["config_hash"] = hash_;
  write_json(root_ / "config.json", echo);
}

fs::path Experiment::seed_dir(std::uint64_t seed) const {
  return root_ / ("seed_" + std::to_string(seed));
}

fs::path Experiment::score_path(std::string_view method, std::uint64_t seed) const {
  return root_ / "scores" / (std::string(method) + "_seed" + std::to_string(seed) + ".json");
}

std::vector<std::uint64_t> Experiment::seeds() const {
  if (opts_.seed) return {*opts_.seed};
  return cfg_.eval.seeds;
}

std::vector<std::string> Experiment::methods() const {
  return opts_.methods.empty() ? cfg_.methods : opts_.methods;
}

void Experiment::log(const std::string& line) const {
  if (opts_.log) *opts_.log << line << std::endl;
}

template <typename Fn>
bool Experiment::run_stage(std::string_view stage, std::optional<std::uint64_t> seed,
                           std::string_view method, Fn&& fn) {
  std::string label(stage);
  if (seed) label += " seed " + std::to_string(*seed);
  if (!method.empty()) label += " " + std::string(method);
  if (!opts_.force && manifest_.completed(stage, seed, method, hash_)) {
    log("[" + label + "] already completed for config " + hash_ + "; skipping (use --force)");
    return false;
  }
  StageRecord r;
  r.stage = stage;
  r.seed = seed;
  r.method = method;
  r.config_hash = hash_;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    r.artifacts = fn();
    r.status = "completed";
  } catch (const std::exception& e) {
    r.status = "failed";
    r.error = e.what();
    r.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest_.append(r);
    throw;
  }
  r.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  manifest_.append(r);
  std::ostringstream msg;
  msg << "[" << label << "] done in " << std::fixed << std::setprecision(1) << r.wall_clock_s
      << " s";
  log(msg.str());
  return true;
}

Suite Experiment::load_suite(std::uint64_t seed) const {
  const fs::path dir = seed_dir(seed) / "data";
  require_file(dir / "suite.json", "gen-data");
  return read_suite(dir);
}

std::vector<Dataset> Experiment::test_subsets(const Suite& suite, std::uint64_t seed) const {
  if (cfg_.eval.n_subsets <= 1) return {suite.test};
  return split_subsets(suite.test, cfg_.eval.n_subsets, subset_seed(seed));
}

ParamVector Experiment::load_theta0(std::uint64_t seed) const {
  const fs::path run = seed_dir(seed) / "train" / "run.json";
  require_file(run, "train");
  const json j = read_json(run);
  if (j.at("config_hash").get<std::string>() != hash_) {
    throw DependencyError(run.string() + " was produced by config " +
                          j.at("config_hash").get<std::string>() + ", not " + hash_ +
                          "; rerun 'train' with --force");
  }
  return load_checkpoint(j.at("final").get<std::string>()).params;
}

ParamVector Experiment::load_init(std::uint64_t seed) const {
  const fs::path p = seed_dir(seed) / "train" / "init.bin";
  require_file(p, "train");
  return load_checkpoint(p).params;
}

CheckpointSet Experiment::load_checkpoints(std::uint64_t seed) const {
  const fs::path p = seed_dir(seed) / "train" / "checkpoints.json";
  require_file(p, "train");
  return read_checkpoint_manifest(p);
}

std::vector<InfluenceScore> Experiment::load_scores(std::string_view method,
                                                    std::uint64_t seed) const {
  const fs::path p = score_path(method, seed);
  require_file(p, "attribute");
  const json j = read_json(p);
  if (j.at("config_hash").get<std::string>() != hash_) {
    throw DependencyError(p.string() + " was produced by config " +
                          j.at("config_hash").get<std::string>() + ", not " + hash_ +
                          "; rerun 'attribute' with --force");
  }
  return j.at("scores").get<std::vector<InfluenceScore>>();
}

std::vector<GroundTruthRecord> Experiment::load_ground_truth(std::uint64_t seed) const {
  const fs::path p = seed_dir(seed) / "ground_truth" / "records.json";
  require_file(p, "ground-truth");
  const json j = read_json(p);
  if (j.at("config_hash").get<std::string>() != hash_) {
    throw DependencyError(p.string() + " was produced by config " +
                          j.at("config_hash").get<std::string>() + ", not " + hash_ +
                          "; rerun 'ground-truth' with --force");
  }
  return j.at("records").get<std::vector<GroundTruthRecord>>();
}

void Experiment::gen_data() {
  for (std::uint64_t seed : seeds()) {
    run_stage("gen-data", seed, "", [&] {
      const Suite suite = cfg_.data.dir.empty()
                              ? build_suite(cfg_.data.suite, cfg_.data.n_per_dataset, seed)
                              : read_suite(cfg_.data.dir);
      const fs::path dir = seed_dir(seed) / "data";
      write_suite(dir, suite, seed);
      json artifacts = {{"dir", dir.string()}};
      if (cfg_.pretrain.steps > 0) {
        const Dataset pre = gen_pretraining(suite.kind, cfg_.pretrain.n_examples, seed);
        write_jsonl(dir / "pretrain.jsonl", pre);
        artifacts["pretrain"] = (dir / "pretrain.jsonl").string();
      }
      return artifacts;
    });
  }
}

void Experiment::train() {
  for (std::uint64_t seed : seeds()) {
    run_stage("train", seed, "", [&] {
      const Suite suite = load_suite(seed);
      const fs::path dir = seed_dir(seed) / "train";
      if (opts_.force && fs::exists(dir)) fs::remove_all(dir);
      fs::create_directories(dir);
      ModelConfig model = cfg_.model;
      model.seed = seed;
      ParamVector init = init_params(model);
      if (cfg_.pretrain.steps > 0) {
        const fs::path corpus = seed_dir(seed) / "data" / "pretrain.jsonl";
        require_file(corpus, "gen-data");
        Dataset pre;
        pre.name = "pretrain";
        pre.examples = read_jsonl(corpus);
        TrainConfig pc;
        pc.steps = cfg_.pretrain.steps;
        pc.batch_size = cfg_.pretrain.batch_size;
        pc.optimizer = cfg_.pretrain.optimizer;
        pc.checkpoint_every = cfg_.pretrain.steps;
        pc.seed = pretrain_seed(seed);
        const TrainResult pr = untrac::train(init, model, {pre}, pc);
        write_loss_curve(dir / "pretrain_loss_curve.csv", pr.loss_curve);
        init = pr.params;
      }
      save_checkpoint(dir / "init.bin", model, init);
      TrainConfig tc = cfg_.train;
      tc.seed = seed;
      const TrainResult r = untrac::train(init, model, suite.train, tc, dir);
      const json run = {{"config_hash", hash_},
                        {"seed", seed},
                        {"init", (dir / "init.bin").string()},
                        {"final", r.checkpoints.final_path.string()},
                        {"checkpoints", (dir / "checkpoints.json").string()},
                        {"loss_curve", (dir / "loss_curve.csv").string()}};
      write_json(dir / "run.json", run);
      return run;
    });
  }
}

std::vector<InfluenceScore> Experiment::compute_scores(
    std::string_view method, std::uint64_t seed,
    const std::optional<UnlearnConfig>& unlearn) const {
  check_method(method);
  const Suite suite = load_suite(seed);
  const std::vector<Dataset> tests = test_subsets(suite, seed);
  const std::vector<const Dataset*> test_ptrs = pointers(tests);
  const ParamVector theta0 = load_theta0(seed);
  ModelConfig model = cfg_.model;
  model.seed = seed;

  std::vector<InfluenceScore> scores;
  if (method == "untrac" || method == "untrac-inv") {
    const bool inv = method == "untrac-inv";
    UnlearnConfig uc = unlearn ? *unlearn : (inv ? cfg_.untrac_inv : cfg_.untrac);
    uc.seed = seed;
    const AttributionReport rep =
        inv ? untrac_inv_influence(theta0, model, suite.train, test_ptrs, uc)
            : untrac_influence(theta0, model, suite.train, test_ptrs, uc, opts_.parallel);
    scores = rep.scores;
  } else if (method == "hif-lissa" || method == "hif-arnoldi") {
    HifOptions h = cfg_.baselines.hif;
    h.method = method == "hif-lissa" ? IhvpMethod::kLissa : IhvpMethod::kArnoldi;
    h.seed = seed;
    h.batch_size = cfg_.baselines.batch_size;
    for (std::size_t i = 0; i < suite.train.size(); ++i) {
      for (const Dataset& t : tests) {
        InfluenceScore s;
        s.train_dataset = suite.train[i].name;
        s.test_dataset = t.name;
        scores.push_back(s);
      }
    }
    for (std::size_t k = 0; k < tests.size(); ++k) {
      const std::vector<double> v = hif(theta0, model, suite.train, tests[k], h);
      for (std::size_t i = 0; i < suite.train.size(); ++i) {
        scores[i * tests.size() + k].value = v[i];
      }
    }
  } else {
    const CheckpointSet cps = method == "tracin" ? load_checkpoints(seed) : CheckpointSet{};
    const std::size_t b = cfg_.baselines.batch_size;
    for (const Dataset& z : suite.train) {
      for (const Dataset& t : tests) {
        InfluenceScore s;
        s.train_dataset = z.name;
        s.test_dataset = t.name;
        if (method == "graddot") {
          s.value = grad_dot(theta0, model, z, t, b);
        } else if (method == "gradcos") {
          s.value = grad_cos(theta0, model, z, t, b);
        } else {
          s.value = tracin(cps, model, z, t, b);
        }
        scores.push_back(s);
      }
    }
  }
  for (InfluenceScore& s : scores) {
    s.method = std::string(method);
    s.config_hash = hash_;
    if (method != "untrac" && method != "untrac-inv") s.seed = seed;
  }
  return scores;
}

void Experiment::attribute() {
  for (std::uint64_t seed : seeds()) {
    for (const std::string& method : methods()) {
      run_stage("attribute", seed, method, [&] {
        const std::vector<InfluenceScore> scores = compute_scores(method, seed);
        const fs::path jp = score_path(method, seed);
        fs::path cp = jp;
        cp.replace_extension(".csv");
        write_scores(jp, cp, scores, method, seed, hash_);
        return json{{"scores", jp.string()}, {"csv", cp.string()}};
      });
    }
  }
}

void Experiment::ground_truth() {
  for (std::uint64_t seed : seeds()) {
    run_stage("ground-truth", seed, "", [&] {
      const Suite suite = load_suite(seed);
      const std::vector<Dataset> tests = test_subsets(suite, seed);
      const ParamVector theta0 = load_theta0(seed);
      const ParamVector init = load_init(seed);
      ModelConfig model = cfg_.model;
      model.seed = seed;
      TrainConfig tc = cfg_.train;
      tc.seed = seed;
      GroundTruthOptions go;
      go.counterfactual.mode = cfg_.ground_truth.mode;
      go.counterfactual.matched_seed = cfg_.ground_truth.matched_seed;
      go.eval_batch_size = cfg_.ground_truth.eval_batch_size;
      go.parallel = opts_.parallel;
      go.out_dir = seed_dir(seed) / "ground_truth";
      const std::vector<GroundTruthRecord> records =
          untrac::ground_truth(init, theta0, model, suite.train, pointers(tests), tc, go);
      const fs::path p = go.out_dir / "records.json";
      write_json(p, {{"config_hash", hash_}, {"seed", seed}, {"records", records}});
      return json{{"records", p.string()}};
    });
  }
}

EvaluationResult Experiment::evaluate() {
  EvaluationResult result;
  auto body = [&] {
    result = EvaluationResult{};
    const std::vector<std::uint64_t> run_seeds = seeds();
    std::vector<ScoreTable> truth;
    std::vector<std::vector<double>> truth_full;
    std::vector<std::string> train_names, test_names;
    for (std::uint64_t seed : run_seeds) {
      const Suite suite = load_suite(seed);
      train_names = names_of(suite.train);
      test_names = names_of(test_subsets(suite, seed));
      const auto records = load_ground_truth(seed);
      truth.push_back(truth_table(records, train_names, test_names));
      std::vector<double> full(train_names.size(), 0.0);
      for (const auto& row : truth.back()) {
        for (std::size_t i = 0; i < row.size(); ++i) full[i] += row[i];
      }
      truth_full.push_back(full);
    }
    result.train_names = train_names;

    auto standardized_mean = [&](const std::vector<std::vector<double>>& per_run) {
      std::vector<double> acc(train_names.size(), 0.0);
      for (const auto& v : per_run) {
        const std::vector<double> z = standardize(v);
        for (std::size_t i = 0; i < z.size(); ++i) acc[i] += z[i];
      }
      for (double& a : acc) a /= static_cast<double>(per_run.size());
      return acc;
    };

    json artifacts = json::object();
    for (const std::string& method : methods()) {
      MethodEvaluation me;
      me.method = method;
      std::vector<ScoreTable> runs;
      std::vector<std::vector<double>> full;
      for (std::uint64_t seed : run_seeds) {
        const auto scores = load_scores(method, seed);
        runs.push_back(score_table(scores, train_names, test_names));
        full.push_back(full_test_scores(scores, train_names));
      }
      json report = {{"config_hash", hash_}, {"method", method}, {"seeds", run_seeds}};
      for (Metric m : cfg_.eval.metrics) {
        me.reports.push_back(subset_correlations(runs, truth, m, method));
        report[std::string(metric_name(m))] = me.reports.back();
      }
      const fs::path rp = root_ / "eval" / ("report_" + method + ".json");
      write_json(rp, report);
      artifacts[method] = rp.string();
      result.table2.emplace_back(method, standardized_mean(full));
      result.methods.push_back(std::move(me));
    }
    result.table2.emplace_back("ground_truth", standardized_mean(truth_full));

    std::ofstream t2 = open_csv(root_ / "eval" / "table2.csv");
    t2 << "method";
    for (const std::string& n : train_names) t2 << "," << n;
    t2 << "\n";
    for (const auto& [name, row] : result.table2) {
      t2 << name;
      for (double v : row) t2 << "," << csv_number(v);
      t2 << "\n";
    }
    std::ofstream t3 = open_csv(root_ / "eval" / "table3.csv");
    t3 << "method,metric,mean,std,n_runs,n_subsets,config_hash\n";
    for (const MethodEvaluation& me : result.methods) {
      for (const CorrelationReport& r : me.reports) {
        t3 << me.method << "," << metric_name(r.metric) << "," << csv_number(r.mean) << ","
           << csv_number(r.std) << "," << r.n_runs << "," << r.n_subsets << "," << hash_ << "\n";
      }
    }
    artifacts["table2"] = (root_ / "eval" / "table2.csv").string();
    artifacts["table3"] = (root_ / "eval" / "table3.csv").string();
    return artifacts;
  };
  // A skipped evaluation is recomputed from the same artifacts; it is cheap
  // and deterministic, and callers need the result.
  if (!run_stage("evaluate", std::nullopt, "", body)) body();
  return result;
}

std::vector<SweepCell> Experiment::sweep() {
  std::vector<SweepCell> cells;
  auto unlearn_for = [&](const std::string& method) {
    return method == "untrac-inv" ? cfg_.untrac_inv : cfg_.untrac;
  };
  auto with_optimizer = [](UnlearnConfig u, OptimizerFamily f, double lr) {
    OptimizerConfig o;
    o.family = f;
    o.learning_rate = lr;
    u.optimizer = o;
    return u;
  };
  for (const std::string& method : cfg_.sweep.methods) {
    for (OptimizerFamily f : cfg_.sweep.optimizers) {
      SweepCell c;
      c.axis = "optimizer";
      c.method = method;
      c.unlearn = with_optimizer(unlearn_for(method), f, cfg_.sweep.base_learning_rate);
      c.id = method + "_opt_" + std::string(optimizer_family_name(f));
      cells.push_back(c);
    }
    for (double lr : cfg_.sweep.learning_rates) {
      SweepCell c;
      c.axis = "learning_rate";
      c.method = method;
      c.unlearn = with_optimizer(unlearn_for(method), cfg_.sweep.base_optimizer, lr);
      c.id = method + "_lr_" + cell_number(lr);
      cells.push_back(c);
    }
    for (std::size_t b : cfg_.sweep.batch_sizes) {
      SweepCell c;
      c.axis = "batch_size";
      c.method = method;
      c.unlearn = unlearn_for(method);
      c.unlearn.batch_size = b;
      c.unlearn.epochs = cfg_.sweep.trajectory_epochs;
      c.unlearn.eval_every = 0;
      c.id = method + "_bs_" + std::to_string(b);
      cells.push_back(c);
    }
  }

  const bool ran = run_stage("sweep", std::nullopt, "", [&] {
    const std::vector<std::uint64_t> run_seeds = seeds();
    std::vector<ScoreTable> truth;
    std::vector<std::string> train_names, test_names;
    for (std::uint64_t seed : run_seeds) {
      const Suite suite = load_suite(seed);
      train_names = names_of(suite.train);
      test_names = names_of(test_subsets(suite, seed));
      truth.push_back(truth_table(load_ground_truth(seed), train_names, test_names));
      load_theta0(seed);
    }

    for (SweepCell& c : cells) {
      try {
        std::vector<std::vector<InfluenceScore>> per_seed;
        for (std::uint64_t seed : run_seeds) {
          per_seed.push_back(compute_scores(c.method, seed, c.unlearn));
        }
        // Evaluated epochs: the final value for the grid cells, every epoch
        // on the trajectory cells.
        std::vector<std::size_t> indices;
        if (c.axis == "batch_size") {
          const auto& traj = per_seed.front().front().trajectory;
          for (std::size_t k = 1; k < traj.size(); ++k) {
            indices.push_back(k);
            c.epochs.push_back(traj[k].first);
          }
        } else {
          indices.push_back(static_cast<std::size_t>(-1));
          c.epochs.push_back(static_cast<double>(c.unlearn.epochs));
        }
        c.mean.assign(cfg_.eval.metrics.size(), {});
        c.std.assign(cfg_.eval.metrics.size(), {});
        for (std::size_t mi = 0; mi < cfg_.eval.metrics.size(); ++mi) {
          for (std::size_t idx : indices) {
            std::vector<ScoreTable> runs;
            for (const auto& scores : per_seed) {
              runs.push_back(score_table(scores, train_names, test_names, idx));
            }
            const CorrelationReport r =
                subset_correlations(runs, truth, cfg_.eval.metrics[mi], c.method);
            c.mean[mi].push_back(r.mean);
            c.std[mi].push_back(r.std);
          }
        }
        c.status = "completed";
        json cell = {{"config_hash", hash_}, {"id", c.id},         {"axis", c.axis},
                     {"method", c.method},   {"unlearn", c.unlearn}, {"seeds", run_seeds},
                     {"epochs", c.epochs},   {"scores", per_seed}};
        write_json(root_ / "sweep" / "cells" / (c.id + ".json"), cell);
      } catch (const std::exception& e) {
        c.status = std::string("failed: ") + e.what();
        log("[sweep] cell " + c.id + " " + c.status);
      }
    }

    std::ofstream t4 = open_csv(root_ / "sweep" / "table4.csv");
    t4 << "axis,method,optimizer,learning_rate,metric,mean,std,status\n";
    std::ofstream f4 = open_csv(root_ / "sweep" / "figure4.csv");
    f4 << "method,batch_size,epoch,metric,mean,std,status\n";
    std::ofstream lg = open_csv(root_ / "sweep" / "sweep_long.csv");
    lg << "cell,axis,method,optimizer,learning_rate,batch_size,epochs,epoch,metric,correlation,"
          "std,status\n";
    for (const SweepCell& c : cells) {
      const std::string opt(optimizer_family_name(c.unlearn.optimizer.family));
      const bool ok = c.status == "completed";
      const std::string status = ok ? "completed" : "failed";
      for (std::size_t mi = 0; mi < cfg_.eval.metrics.size(); ++mi) {
        const std::string metric(metric_name(cfg_.eval.metrics[mi]));
        const std::size_t n_points = ok ? c.epochs.size() : 1;
        for (std::size_t k = 0; k < n_points; ++k) {
          const double mean = ok ? c.mean[mi][k] : std::nan("");
          const double sd = ok ? c.std[mi][k] : std::nan("");
          const double epoch = ok ? c.epochs[k] : std::nan("");
          lg << c.id << "," << c.axis << "," << c.method << "," << opt << ","
             << csv_number(c.unlearn.optimizer.learning_rate) << "," << c.unlearn.batch_size
             << "," << c.unlearn.epochs << "," << csv_number(epoch) << "," << metric << ","
             << csv_number(mean) << "," << csv_number(sd) << "," << status << "\n";
          if (c.axis == "batch_size") {
            f4 << c.method << "," << c.unlearn.batch_size << "," << csv_number(epoch) << ","
               << metric << "," << csv_number(mean) << "," << csv_number(sd) << "," << status
               << "\n";
          } else {
            t4 << c.axis << "," << c.method << "," << opt << ","
               << csv_number(c.unlearn.optimizer.learning_rate) << "," << metric << ","
               << csv_number(mean) << "," << csv_number(sd) << "," << status << "\n";
          }
        }
      }
    }
    std::size_t failed = 0;
    for (const SweepCell& c : cells) failed += c.status != "completed";
    return json{{"table4", (root_ / "sweep" / "table4.csv").string()},
                {"figure4", (root_ / "sweep" / "figure4.csv").string()},
                {"long", (root_ / "sweep" / "sweep_long.csv").string()},
                {"cells", cells.size()},
                {"failed_cells", failed}};
  });
  if (!ran) {
    for (SweepCell& c : cells) c.status = "skipped";
  }
  return cells;
}

void Experiment::run_all() {
  gen_data();
  train();
  attribute();
  if (cfg_.ground_truth.enabled) {
    ground_truth();
    evaluate();
  }
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const DependencyError*>(&e)) return 3;
  if (dynamic_cast<const NumericalError*>(&e)) return 4;
  return 1;
}

}  // namespace untrac
