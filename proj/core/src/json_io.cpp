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

#include "untrac/json_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "untrac/errors.hpp"

namespace untrac {

namespace {

template <typename T>
void get_opt(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

}  // namespace

void require_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                  const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    const bool ok = std::any_of(allowed.begin(), allowed.end(),
                                [&](const char* a) { return key == a; });
    if (!ok) throw ConfigError("unknown key '" + where + "." + key + "'");
  }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"vocab_size", c.vocab_size},
       {"context_window", c.context_window},
       {"embed_dim", c.embed_dim},
       {"hidden_dim", c.hidden_dim},
       {"n_hidden_layers", c.n_hidden_layers},
       {"activation", std::string(activation_name(c.activation))},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  const std::string w = "model";
  require_keys(j, {"vocab_size", "context_window", "embed_dim", "hidden_dim",
                   "n_hidden_layers", "activation", "seed"},
               w);
  get_opt(j, "vocab_size", c.vocab_size, w);
  get_opt(j, "context_window", c.context_window, w);
  get_opt(j, "embed_dim", c.embed_dim, w);
  get_opt(j, "hidden_dim", c.hidden_dim, w);
  get_opt(j, "n_hidden_layers", c.n_hidden_layers, w);
  std::string act(activation_name(c.activation));
  get_opt(j, "activation", act, w);
  c.activation = parse_activation(act);
  get_opt(j, "seed", c.seed, w);
}

void to_json(nlohmann::json& j, const Layout& l) {
  j = nlohmann::json::array();
  for (const LayoutEntry& e : l.entries()) {
    j.push_back({{"name", e.name}, {"shape", e.shape}, {"offset", e.offset}});
  }
}

void from_json(const nlohmann::json& j, Layout& l) {
  std::vector<std::pair<std::string, Shape>> t;
  std::size_t expected_offset = 0;
  for (const auto& e : j) {
    const auto shape = e.at("shape").get<Shape>();
    if (e.at("offset").get<std::size_t>() != expected_offset) {
      throw FormatError("layout offsets are not contiguous");
    }
    expected_offset += shape_numel(shape);
    t.emplace_back(e.at("name").get<std::string>(), shape);
  }
  l = Layout(std::move(t));
}

void to_json(nlohmann::json& j, const OptimizerConfig& c) {
  j = {{"family", std::string(optimizer_family_name(c.family))},
       {"learning_rate", c.learning_rate},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"momentum", c.momentum},
       {"dampening", c.dampening},
       {"rmsprop_alpha", c.rmsprop_alpha},
       {"epsilon", c.epsilon}};
  j["grad_clip"] = c.grad_clip ? nlohmann::json(*c.grad_clip) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, OptimizerConfig& c) {
  const std::string w = "optimizer";
  require_keys(j, {"family", "learning_rate", "beta1", "beta2", "momentum", "dampening",
                   "rmsprop_alpha", "epsilon", "grad_clip"},
               w);
  std::string family(optimizer_family_name(c.family));
  get_opt(j, "family", family, w);
  c.family = parse_optimizer_family(family);
  get_opt(j, "learning_rate", c.learning_rate, w);
  get_opt(j, "beta1", c.beta1, w);
  get_opt(j, "beta2", c.beta2, w);
  get_opt(j, "momentum", c.momentum, w);
  get_opt(j, "dampening", c.dampening, w);
  get_opt(j, "rmsprop_alpha", c.rmsprop_alpha, w);
  get_opt(j, "epsilon", c.epsilon, w);
  if (auto it = j.find("grad_clip"); it != j.end()) {
    if (it->is_null()) {
      c.grad_clip.reset();
    } else {
      c.grad_clip = it->get<double>();
    }
  }
  c.validate();
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"steps", c.steps},
       {"batch_size", c.batch_size},
       {"optimizer", c.optimizer},
       {"checkpoint_every", c.checkpoint_every},
       {"seed", c.seed},
       {"mixture_weights", c.mixture_weights},
       {"exclusion_weighting",
        c.exclusion_weighting == ExclusionWeighting::kEqual ? "equal" : "renormalized"}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  const std::string w = "train";
  require_keys(j, {"steps", "batch_size", "optimizer", "checkpoint_every", "seed",
                   "mixture_weights", "exclusion_weighting"},
               w);
  get_opt(j, "steps", c.steps, w);
  get_opt(j, "batch_size", c.batch_size, w);
  if (j.contains("optimizer")) from_json(j.at("optimizer"), c.optimizer);
  get_opt(j, "checkpoint_every", c.checkpoint_every, w);
  get_opt(j, "seed", c.seed, w);
  get_opt(j, "mixture_weights", c.mixture_weights, w);
  std::string ew = c.exclusion_weighting == ExclusionWeighting::kEqual ? "equal" : "renormalized";
  get_opt(j, "exclusion_weighting", ew, w);
  if (ew == "equal") {
    c.exclusion_weighting = ExclusionWeighting::kEqual;
  } else if (ew == "renormalized") {
    c.exclusion_weighting = ExclusionWeighting::kRenormalized;
  } else {
    throw ConfigError("train.exclusion_weighting must be 'renormalized' or 'equal'");
  }
  c.validate();
}

void to_json(nlohmann::json& j, const UnlearnConfig& c) {
  j = {{"optimizer", c.optimizer},
       {"batch_size", c.batch_size},
       {"epochs", c.epochs},
       {"seed", c.seed},
       {"shuffle", c.shuffle},
       {"eval_every", c.eval_every},
       {"eval_batch_size", c.eval_batch_size}};
}

void from_json(const nlohmann::json& j, UnlearnConfig& c) {
  const std::string w = "unlearn";
  require_keys(j, {"optimizer", "batch_size", "epochs", "seed", "shuffle", "eval_every",
                   "eval_batch_size"},
               w);
  if (j.contains("optimizer")) from_json(j.at("optimizer"), c.optimizer);
  get_opt(j, "batch_size", c.batch_size, w);
  get_opt(j, "epochs", c.epochs, w);
  get_opt(j, "seed", c.seed, w);
  get_opt(j, "shuffle", c.shuffle, w);
  get_opt(j, "eval_every", c.eval_every, w);
  get_opt(j, "eval_batch_size", c.eval_batch_size, w);
  c.validate();
}

nlohmann::json finite_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

double number_or_nan(const nlohmann::json& j) {
  return j.is_null() ? std::nan("") : j.get<double>();
}

void to_json(nlohmann::json& j, const InfluenceScore& s) {
  nlohmann::json traj = nlohmann::json::array();
  for (const auto& [epoch, value] : s.trajectory) traj.push_back({epoch, finite_or_null(value)});
  j = {{"train_dataset", s.train_dataset},
       {"test_dataset", s.test_dataset},
       {"value", finite_or_null(s.value)},
       {"trajectory", traj},
       {"method", s.method},
       {"seed", s.seed},
       {"config_hash", s.config_hash},
       {"diverged", s.diverged},
       {"self_influence_violation", s.self_influence_violation}};
}

void from_json(const nlohmann::json& j, InfluenceScore& s) {
  try {
    s.train_dataset = j.at("train_dataset").get<std::string>();
    s.test_dataset = j.at("test_dataset").get<std::string>();
    s.value = number_or_nan(j.at("value"));
    s.trajectory.clear();
    for (const auto& p : j.at("trajectory")) {
      s.trajectory.emplace_back(p.at(0).get<double>(), number_or_nan(p.at(1)));
    }
    s.method = j.at("method").get<std::string>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.config_hash = j.at("config_hash").get<std::string>();
    s.diverged = j.at("diverged").get<bool>();
    s.self_influence_violation = j.at("self_influence_violation").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed influence score: ") + e.what());
  }
}

void to_json(nlohmann::json& j, const GroundTruthRecord& r) {
  j = {{"excluded", r.excluded},
       {"mode", std::string(counterfactual_mode_name(r.mode))},
       {"checkpoint", r.checkpoint.string()},
       {"test_names", r.test_names},
       {"influence", r.influence},
       {"seed", r.seed},
       {"steps", r.steps}};
}

void from_json(const nlohmann::json& j, GroundTruthRecord& r) {
  try {
    r.excluded = j.at("excluded").get<std::string>();
    r.mode = parse_counterfactual_mode(j.at("mode").get<std::string>());
    r.checkpoint = j.at("checkpoint").get<std::string>();
    r.test_names = j.at("test_names").get<std::vector<std::string>>();
    r.influence = j.at("influence").get<std::vector<double>>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.steps = j.at("steps").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed ground-truth record: ") + e.what());
  }
}

void to_json(nlohmann::json& j, const CorrelationReport& r) {
  j = {{"method", r.method},
       {"metric", std::string(metric_name(r.metric))},
       {"values", r.values},
       {"mean", r.mean},
       {"std", r.std},
       {"n_runs", r.n_runs},
       {"n_subsets", r.n_subsets}};
}

}  // namespace untrac
