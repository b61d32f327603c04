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

#include "untrac/attribution.hpp"

#include <cmath>
#include <numeric>

#include "untrac/errors.hpp"
#include "untrac/parallel.hpp"
#include "untrac/rng.hpp"

namespace untrac {

namespace {

InfluenceScore score_from_series(const std::vector<EvalPoint>& s, bool first_order) {
  InfluenceScore sc;
  const double base = s.front().loss;
  for (const EvalPoint& p : s) {
    const double v = first_order ? p.first_order : p.loss - base;
    sc.trajectory.emplace_back(p.epoch, v);
  }
  sc.trajectory.front() = {0.0, 0.0};
  sc.value = sc.trajectory.back().second;
  return sc;
}

// Own-loss increase over the first epoch (or up to divergence).
bool self_influence_positive(const std::vector<EvalPoint>& own) {
  const double base = own.front().loss;
  for (std::size_t i = 1; i < own.size(); ++i) {
    if (own[i].epoch >= 1.0 || i + 1 == own.size()) return own[i].loss > base;
  }
  return false;
}

AttributionReport run_untrac(const ParamVector& theta0, const ModelConfig& model,
                             const std::vector<Dataset>& train,
                             const std::vector<const Dataset*>& tests, const UnlearnConfig& cfg,
                             bool first_order, std::size_t parallel) {
  cfg.validate();
  if (tests.empty()) throw ConfigError("attribution needs at least one test dataset");
  const std::size_t nt = tests.size();
  AttributionReport report;
  report.scores.resize(train.size() * nt);
  std::vector<std::size_t> steps(train.size(), 0);
  parallel_for(train.size(), parallel, [&](std::size_t i) {
    UnlearnConfig c = cfg;
    c.seed = unlearn_seed(cfg.seed, train[i].name);
    UnlearnOptions opts;
    opts.first_order = first_order;
    std::vector<const Dataset*> hooks = tests;
    if (!first_order) hooks.push_back(&train[i]);
    const UnlearnResult r = unlearn(theta0, model, train[i], c, hooks, opts);
    const bool violation = !first_order && !self_influence_positive(r.series[nt]);
    for (std::size_t t = 0; t < nt; ++t) {
      InfluenceScore sc = score_from_series(r.series[t], first_order);
      sc.train_dataset = train[i].name;
      sc.test_dataset = tests[t]->name;
      sc.method = first_order ? "untrac-fo" : "untrac";
      sc.seed = cfg.seed;
      sc.diverged = r.diverged;
      sc.self_influence_violation = violation;
      report.scores[i * nt + t] = std::move(sc);
    }
    steps[i] = r.steps;
  });
  report.unlearning_runs = train.size();
  report.unlearning_steps = std::accumulate(steps.begin(), steps.end(), std::size_t{0});
  return report;
}

AttributionReport run_untrac_inv(const ParamVector& theta0, const ModelConfig& model,
                                 const std::vector<Dataset>& train,
                                 const std::vector<const Dataset*>& tests,
                                 const UnlearnConfig& cfg, bool first_order) {
  cfg.validate();
  if (tests.empty()) throw ConfigError("attribution needs at least one test dataset");
  std::vector<const Dataset*> hooks;
  for (const Dataset& d : train) hooks.push_back(&d);
  UnlearnOptions opts;
  opts.first_order = first_order;
  AttributionReport report;
  report.scores.resize(train.size() * tests.size());
  for (std::size_t t = 0; t < tests.size(); ++t) {
    const UnlearnResult r = unlearn(theta0, model, *tests[t], cfg, hooks, opts);
    for (std::size_t i = 0; i < train.size(); ++i) {
      InfluenceScore sc = score_from_series(r.series[i], first_order);
      sc.train_dataset = train[i].name;
      sc.test_dataset = tests[t]->name;
      sc.method = first_order ? "untrac-inv-fo" : "untrac-inv";
      sc.seed = cfg.seed;
      sc.diverged = r.diverged;
      report.scores[i * tests.size() + t] = std::move(sc);
    }
    ++report.unlearning_runs;
    report.unlearning_steps += r.steps;
  }
  return report;
}

}  // namespace

UnlearnConfig UnlearnConfig::untrac_defaults() { return UnlearnConfig{}; }

UnlearnConfig UnlearnConfig::untrac_inv_defaults() {
  UnlearnConfig c;
  c.batch_size = 0;
  c.epochs = 5;
  return c;
}

void UnlearnConfig::validate() const {
  if (epochs < 1) throw ConfigError("unlearn.epochs must be >= 1");
  if (optimizer.grad_clip) {
    throw ConfigError("gradient clipping must be off during unlearning");
  }
  optimizer.validate();
}

std::size_t steps_per_epoch(std::size_t n_examples, std::size_t batch_size) {
  const std::size_t b = batch_size == 0 ? n_examples : batch_size;
  return (n_examples + b - 1) / b;
}

std::uint64_t unlearn_seed(std::uint64_t seed, const std::string& name) {
  return seed ^ fnv1a64(name);
}

UnlearnResult unlearn(const ParamVector& theta0, const ModelConfig& model,
                      const Dataset& dataset, const UnlearnConfig& cfg,
                      const std::vector<const Dataset*>& hooks,
                      const UnlearnOptions& opts) {
  cfg.validate();
  if (dataset.examples.empty()) {
    throw DegenerateBatchError("cannot unlearn empty dataset '" + dataset.name + "'");
  }
  if (theta0.layout() != *model.layout()) {
    throw DimensionError("unlearn: parameters do not match the model layout");
  }
  const std::size_t n = dataset.size();
  const std::size_t b = cfg.batch_size == 0 ? n : cfg.batch_size;
  const std::size_t spe = steps_per_epoch(n, b);

  std::vector<LossFn> eval_fns;
  for (const Dataset* h : hooks) {
    eval_fns.push_back(make_batched_sum_loss_fn(model, h->examples, cfg.eval_batch_size));
  }

  UnlearnResult r;
  r.params = theta0;
  r.planned_steps = cfg.epochs * spe;
  r.series.resize(hooks.size());
  std::vector<double> fo(hooks.size(), 0.0);

  auto evaluate = [&](std::size_t step) {
    std::vector<EvalPoint> pts(hooks.size());
    for (std::size_t h = 0; h < hooks.size(); ++h) {
      double loss;
      try {
        loss = loss_value(eval_fns[h], r.params);
      } catch (const NumericalError&) {
        return false;
      }
      if (!std::isfinite(loss) || !std::isfinite(fo[h])) return false;
      pts[h] = {step, static_cast<double>(step) / static_cast<double>(spe), loss, fo[h]};
    }
    for (std::size_t h = 0; h < hooks.size(); ++h) r.series[h].push_back(pts[h]);
    r.last_valid_step = step;
    return true;
  };
  if (!evaluate(0)) {
    throw NumericalError("evaluation loss is not finite at the starting parameters");
  }

  OptimizerState state = init_optimizer_state(cfg.optimizer, theta0);
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t e = 0; e < cfg.epochs && !r.diverged; ++e) {
    if (cfg.shuffle) rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += b) {
      std::vector<Example> batch;
      for (std::size_t k = start; k < std::min(n, start + b); ++k) {
        batch.push_back(dataset.examples[order[k]]);
      }
      std::vector<ParamVector> hook_grads;
      ParamVector prev;
      try {
        if (opts.first_order) {
          for (const LossFn& fn : eval_fns) {
            hook_grads.push_back(value_and_grad(fn, r.params).grad);
          }
          prev = r.params;
        }
        const ValueAndGrad vg = loss_grad(r.params, model, batch);
        if (!std::isfinite(vg.value)) throw NumericalError("unlearning loss diverged");
        apply_step(state, r.params, vg.grad, Direction::kAscent, cfg.optimizer);
      } catch (const NumericalError&) {
        r.diverged = true;
        break;
      }
      ++r.steps;
      if (!all_finite(r.params)) {
        r.diverged = true;
        break;
      }
      if (opts.first_order) {
        const ParamVector delta = r.params - prev;
        for (std::size_t h = 0; h < hooks.size(); ++h) fo[h] += dot(hook_grads[h], delta);
      }
      const bool due = cfg.eval_every == 0 ? r.steps % spe == 0 : r.steps % cfg.eval_every == 0;
      if (due || r.steps == r.planned_steps) {
        if (!evaluate(r.steps)) {
          r.diverged = true;
          break;
        }
      }
    }
  }
  return r;
}

AttributionReport untrac_influence(const ParamVector& theta0, const ModelConfig& model,
                                   const std::vector<Dataset>& train, const Dataset& test,
                                   const UnlearnConfig& cfg, std::size_t parallel) {
  return run_untrac(theta0, model, train, {&test}, cfg, false, parallel);
}

AttributionReport untrac_influence(const ParamVector& theta0, const ModelConfig& model,
                                   const std::vector<Dataset>& train,
                                   const std::vector<const Dataset*>& tests,
                                   const UnlearnConfig& cfg, std::size_t parallel) {
  return run_untrac(theta0, model, train, tests, cfg, false, parallel);
}

AttributionReport untrac_inv_influence(const ParamVector& theta0, const ModelConfig& model,
                                       const std::vector<Dataset>& train, const Dataset& test,
                                       const UnlearnConfig& cfg) {
  return run_untrac_inv(theta0, model, train, {&test}, cfg, false);
}

AttributionReport untrac_inv_influence(const ParamVector& theta0, const ModelConfig& model,
                                       const std::vector<Dataset>& train,
                                       const std::vector<const Dataset*>& tests,
                                       const UnlearnConfig& cfg) {
  return run_untrac_inv(theta0, model, train, tests, cfg, false);
}

AttributionReport first_order_influence(const ParamVector& theta0, const ModelConfig& model,
                                        const std::vector<Dataset>& train,
                                        const Dataset& test, const UnlearnConfig& cfg,
                                        FirstOrderVariant variant, std::size_t parallel) {
  if (variant == FirstOrderVariant::kUntracApprox) {
    return run_untrac(theta0, model, train, {&test}, cfg, true, parallel);
  }
  return run_untrac_inv(theta0, model, train, {&test}, cfg, true);
}

}  // namespace untrac
