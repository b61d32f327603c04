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

#include "untrac/training.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "untrac/errors.hpp"

namespace untrac {

namespace {

constexpr std::string_view kStateMagic = "UNTRAC-TRAINER-STATE v1";

std::vector<double> resolve_weights(const TrainConfig& cfg, std::size_t n) {
  if (cfg.mixture_weights.empty()) return std::vector<double>(n, 1.0);
  if (cfg.mixture_weights.size() != n) {
    throw ConfigError("train.mixture_weights has " +
                      std::to_string(cfg.mixture_weights.size()) + " entries for " +
                      std::to_string(n) + " datasets");
  }
  return cfg.mixture_weights;
}

std::vector<const Dataset*> pointers(const std::vector<Dataset>& datasets) {
  std::vector<const Dataset*> out;
  for (const Dataset& d : datasets) out.push_back(&d);
  return out;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::size_t step) {
  std::ostringstream name;
  name << "ckpt_" << std::setw(6) << std::setfill('0') << step << ".bin";
  return dir / name.str();
}

std::filesystem::path state_path(const std::filesystem::path& ckpt) {
  auto p = ckpt;
  p += ".state";
  return p;
}

void write_trainer_state(const std::filesystem::path& path, std::size_t step,
                         const Rng& rng, const OptimizerState& state) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot write trainer state " + path.string());
  nlohmann::json header;
  header["step"] = step;
  header["rng"] = rng.serialize();
  os << kStateMagic << '\n' << header.dump() << '\n';
  write_optimizer_state(os, state);
}

struct TrainerState {
  std::size_t step = 0;
  std::string rng;
  OptimizerState optimizer;
};

TrainerState read_trainer_state(const std::filesystem::path& path,
                                const OptimizerConfig& cfg, const ParamVector& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DependencyError("trainer state not found: " + path.string());
  std::string magic, header_line;
  std::getline(is, magic);
  if (magic != kStateMagic) throw FormatError(path.string() + " is not a trainer state file");
  std::getline(is, header_line);
  const auto header = nlohmann::json::parse(header_line);
  TrainerState ts;
  ts.step = header.at("step").get<std::size_t>();
  ts.rng = header.at("rng").get<std::string>();
  ts.optimizer = read_optimizer_state(is, cfg, params);
  return ts;
}

// Steps from_step + 1 .. cfg.steps. Appends to result.loss_curve and
// result.checkpoints.
void run_steps(ParamVector& params, OptimizerState& state, MixtureSampler& sampler,
               std::size_t from_step, const ModelConfig& model, const TrainConfig& cfg,
               const std::filesystem::path& out_dir, TrainResult& result) {
  for (std::size_t s = from_step + 1; s <= cfg.steps; ++s) {
    const std::vector<Example> batch = sampler.sample_batch(cfg.batch_size);
    ValueAndGrad vg = loss_grad(params, model, batch);
    if (!std::isfinite(vg.value)) {
      throw NumericalError("training loss is not finite at step " + std::to_string(s));
    }
    result.loss_curve.push_back(vg.value);
    apply_step(state, params, vg.grad, Direction::kDescent, cfg.optimizer);

    if (s % cfg.checkpoint_every != 0 && s != cfg.steps) continue;
    CheckpointEntry e;
    e.step = s;
    e.learning_rate = cfg.optimizer.learning_rate;
    if (out_dir.empty()) {
      e.params = params;
    } else {
      e.path = checkpoint_path(out_dir, s);
      save_checkpoint(e.path, model, params);
      write_trainer_state(state_path(e.path), s, sampler.rng(), state);
      write_loss_curve(out_dir / "loss_curve.csv", result.loss_curve);
    }
    result.checkpoints.entries.push_back(std::move(e));
  }
  if (!out_dir.empty()) {
    result.checkpoints.final_path = result.checkpoints.entries.back().path;
    write_checkpoint_manifest(out_dir / "checkpoints.json", result.checkpoints);
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (steps < 1) throw ConfigError("train.steps must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (checkpoint_every < 1) throw ConfigError("train.checkpoint_every must be >= 1");
  optimizer.validate();
}

ParamVector CheckpointSet::load(std::size_t i, const ModelConfig& config) const {
  const CheckpointEntry& e = entries.at(i);
  if (e.params) return *e.params;
  Checkpoint ck;
  try {
    ck = load_checkpoint(e.path);
  } catch (const Error& err) {
    throw FormatError("checkpoint entry " + std::to_string(i) + " (step " +
                      std::to_string(e.step) + ", " + e.path.string() + "): " + err.what());
  }
  if (!(ck.config.layout() && *ck.config.layout() == *config.layout())) {
    throw FormatError("checkpoint entry " + std::to_string(i) + " (" + e.path.string() +
                      ") does not match the model layout");
  }
  return ck.params;
}

TrainResult train(const ParamVector& init, const ModelConfig& model,
                  const std::vector<Dataset>& datasets, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir) {
  cfg.validate();
  if (init.layout() != *model.layout()) {
    throw DimensionError("train: initial parameters do not match the model layout");
  }
  MixtureSampler sampler(pointers(datasets), resolve_weights(cfg, datasets.size()), cfg.seed);
  OptimizerState state = init_optimizer_state(cfg.optimizer, init);
  TrainResult result;
  result.params = init;
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  run_steps(result.params, state, sampler, 0, model, cfg, out_dir, result);
  return result;
}

TrainResult resume(const ModelConfig& model, const std::vector<Dataset>& datasets,
                   const TrainConfig& cfg, const std::filesystem::path& out_dir,
                   std::size_t from_step) {
  cfg.validate();
  if (from_step >= cfg.steps) throw ConfigError("resume: run already finished");
  const auto ckpt = checkpoint_path(out_dir, from_step);
  if (!std::filesystem::exists(ckpt)) {
    throw DependencyError("no checkpoint at step " + std::to_string(from_step) + " (" +
                          ckpt.string() + ")");
  }
  TrainResult result;
  result.params = load_checkpoint(ckpt).params;
  TrainerState ts = read_trainer_state(state_path(ckpt), cfg.optimizer, result.params);
  MixtureSampler sampler(pointers(datasets), resolve_weights(cfg, datasets.size()), cfg.seed);
  sampler.rng().deserialize(ts.rng);

  std::vector<double> curve = read_loss_curve(out_dir / "loss_curve.csv");
  if (curve.size() < from_step) throw FormatError("loss curve shorter than resume step");
  curve.resize(from_step);
  result.loss_curve = std::move(curve);
  for (std::size_t s = cfg.checkpoint_every; s <= from_step; s += cfg.checkpoint_every) {
    CheckpointEntry e;
    e.step = s;
    e.learning_rate = cfg.optimizer.learning_rate;
    e.path = checkpoint_path(out_dir, s);
    result.checkpoints.entries.push_back(std::move(e));
  }
  run_steps(result.params, ts.optimizer, sampler, from_step, model, cfg, out_dir, result);
  return result;
}

std::string_view counterfactual_mode_name(CounterfactualMode m) {
  return m == CounterfactualMode::kFullRemoval ? "full_removal" : "fixed_steps";
}

CounterfactualMode parse_counterfactual_mode(std::string_view name) {
  if (name == "full_removal") return CounterfactualMode::kFullRemoval;
  if (name == "fixed_steps") return CounterfactualMode::kFixedSteps;
  throw ConfigError("unknown ground-truth mode '" + std::string(name) +
                    "' (expected full_removal or fixed_steps)");
}

std::uint64_t counterfactual_seed(std::uint64_t seed, const std::string& excluded) {
  return seed ^ fnv1a64(excluded);
}

CounterfactualResult train_excluding(const ParamVector& init, const ModelConfig& model,
                                     const std::vector<Dataset>& datasets,
                                     const TrainConfig& cfg, const std::string& excluded,
                                     const CounterfactualOptions& opts) {
  cfg.validate();
  std::size_t ex = datasets.size();
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    if (datasets[i].name == excluded) ex = i;
  }
  if (ex == datasets.size()) {
    throw ConfigError("cannot exclude unknown dataset '" + excluded + "'");
  }
  CounterfactualResult out;
  out.seed = opts.matched_seed ? cfg.seed : counterfactual_seed(cfg.seed, excluded);

  if (opts.mode == CounterfactualMode::kFixedSteps) {
    std::vector<double> w = resolve_weights(cfg, datasets.size());
    if (cfg.exclusion_weighting == ExclusionWeighting::kEqual) {
      for (double& x : w) x = 1.0;
    }
    w[ex] = 0.0;
    double total = 0.0;
    for (double x : w) total += x;
    if (!(total > 0.0)) {
      throw ConfigError("excluding '" + excluded + "' leaves an empty mixture");
    }
    TrainConfig c = cfg;
    c.seed = out.seed;
    c.mixture_weights = w;
    c.checkpoint_every = c.steps;
    TrainResult r = train(init, model, datasets, c);
    out.params = std::move(r.params);
    out.steps = r.loss_curve.size();
    return out;
  }

  std::vector<const Example*> pool;
  std::size_t n_all = 0;
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    n_all += datasets[i].size();
    if (i == ex) continue;
    for (const Example& e : datasets[i].examples) pool.push_back(&e);
  }
  if (pool.empty()) throw ConfigError("excluding '" + excluded + "' leaves no examples");
  const double exact_epochs =
      static_cast<double>(cfg.steps * cfg.batch_size) / static_cast<double>(n_all);
  const auto epochs = static_cast<std::size_t>(std::max(1.0, std::round(exact_epochs)));

  Rng rng(out.seed);
  OptimizerState state = init_optimizer_state(cfg.optimizer, init);
  out.params = init;
  std::vector<std::size_t> order(pool.size());
  for (std::size_t e = 0; e < epochs; ++e) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<Example> batch;
      for (std::size_t k = start; k < std::min(order.size(), start + cfg.batch_size); ++k) {
        batch.push_back(*pool[order[k]]);
      }
      ValueAndGrad vg = loss_grad(out.params, model, batch);
      if (!std::isfinite(vg.value)) {
        throw NumericalError("training loss is not finite at step " +
                             std::to_string(out.steps + 1));
      }
      apply_step(state, out.params, vg.grad, Direction::kDescent, cfg.optimizer);
      ++out.steps;
    }
  }
  return out;
}

void write_loss_curve(const std::filesystem::path& path, const std::vector<double>& curve) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FormatError("cannot write " + path.string());
  os << "step,loss\n" << std::setprecision(17);
  for (std::size_t i = 0; i < curve.size(); ++i) os << (i + 1) << ',' << curve[i] << '\n';
}

std::vector<double> read_loss_curve(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DependencyError("loss curve not found: " + path.string());
  std::string line;
  std::getline(is, line);
  std::vector<double> out;
  while (std::getline(is, line)) {
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    out.push_back(std::stod(line.substr(comma + 1)));
  }
  return out;
}

void write_checkpoint_manifest(const std::filesystem::path& path, const CheckpointSet& set) {
  nlohmann::json j;
  for (const CheckpointEntry& e : set.entries) {
    j["entries"].push_back(
        {{"step", e.step}, {"learning_rate", e.learning_rate}, {"path", e.path.string()}});
  }
  j["final"] = set.final_path.string();
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FormatError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

CheckpointSet read_checkpoint_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DependencyError("checkpoint manifest not found: " + path.string());
  CheckpointSet set;
  try {
    const auto j = nlohmann::json::parse(is);
    for (const auto& e : j.at("entries")) {
      CheckpointEntry c;
      c.step = e.at("step").get<std::size_t>();
      c.learning_rate = e.at("learning_rate").get<double>();
      c.path = e.at("path").get<std::string>();
      if (!set.entries.empty() && c.step <= set.entries.back().step) {
        throw FormatError("checkpoint steps are not strictly increasing in " + path.string());
      }
      set.entries.push_back(std::move(c));
    }
    set.final_path = j.at("final").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return set;
}

}  // namespace untrac
