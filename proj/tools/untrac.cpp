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

// Command-line runner for the attribution pipeline.
//
//   untrac gen-data     --config cfg.json [--seed s] [--force]
//   untrac train        --config cfg.json [--seed s] [--force]
//   untrac attribute    --config cfg.json [--method m]... [--seed s] [--parallel k]
//   untrac ground-truth --config cfg.json [--seed s] [--parallel k]
//   untrac evaluate     --config cfg.json
//   untrac sweep        --config cfg.json
//   untrac run          --config cfg.json      every stage in order
//   untrac print-config [--config cfg.json]    effective config as JSON
//
// Exit codes: 0 success, 1 other failure, 2 usage or config error,
// 3 missing dependency, 4 numerical failure.

#include <cstdint>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "untrac/errors.hpp"
#include "untrac/experiment.hpp"

namespace {

struct Args {
  std::string config;
  std::vector<std::string> methods;
  std::int64_t seed = -1;
  std::size_t parallel = 1;
  bool force = false;
  bool quiet = false;
};

untrac::ExperimentConfig load_config(const Args& a) {
  if (a.config.empty()) {
    untrac::ExperimentConfig c;
    c.validate();
    return c;
  }
  return untrac::load_experiment_config(a.config);
}

untrac::RunOptions run_options(const Args& a) {
  untrac::RunOptions o;
  o.force = a.force;
  o.parallel = a.parallel;
  if (a.seed >= 0) o.seed = static_cast<std::uint64_t>(a.seed);
  o.methods = a.methods;
  o.log = a.quiet ? nullptr : &std::cerr;
  return o;
}

void print_evaluation(const untrac::EvaluationResult& r) {
  std::cout << std::left << std::setw(14) << "method" << std::setw(10) << "metric"
            << std::setw(10) << "mean" << "std\n";
  for (const auto& m : r.methods) {
    for (const auto& rep : m.reports) {
      std::cout << std::left << std::setw(14) << m.method << std::setw(10)
                << untrac::metric_name(rep.metric) << std::setw(10) << std::fixed
                << std::setprecision(3) << rep.mean << rep.std << "\n";
    }
  }
}

void print_sweep(const std::vector<untrac::SweepCell>& cells) {
  for (const auto& c : cells) {
    std::cout << std::left << std::setw(28) << c.id;
    if (c.status != "completed") {
      std::cout << c.status << "\n";
      continue;
    }
    for (std::size_t m = 0; m < c.mean.size(); ++m) {
      std::cout << " " << std::fixed << std::setprecision(3) << c.mean[m].back();
    }
    std::cout << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Training data attribution by unlearning"};
  app.require_subcommand(1);
  Args args;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", args.config, "Experiment config (JSON)");
    sub->add_flag("--quiet", args.quiet, "Suppress progress lines");
  };
  auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", args.seed, "Restrict to one seed")->check(CLI::NonNegativeNumber);
  };
  auto add_force = [&](CLI::App* sub) {
    sub->add_flag("--force", args.force, "Rerun stages already completed for this config");
  };
  auto add_parallel = [&](CLI::App* sub) {
    sub->add_option("--parallel", args.parallel, "Concurrent runs")->check(CLI::PositiveNumber);
  };

  CLI::App* gen = app.add_subcommand("gen-data", "Generate the dataset suite");
  CLI::App* train = app.add_subcommand("train", "Pretrain and finetune the model");
  CLI::App* attribute = app.add_subcommand("attribute", "Compute attribution scores");
  CLI::App* gt = app.add_subcommand("ground-truth", "Leave-dataset-out retraining");
  CLI::App* evaluate = app.add_subcommand("evaluate", "Correlate scores with ground truth");
  CLI::App* sweep = app.add_subcommand("sweep", "Unlearning hyperparameter sweep");
  CLI::App* run = app.add_subcommand("run", "Every stage in order");
  CLI::App* print = app.add_subcommand("print-config", "Print the effective config");

  for (CLI::App* s : {gen, train, attribute, gt, evaluate, sweep, run, print}) add_common(s);
  for (CLI::App* s : {gen, train, attribute, gt, run}) add_seed(s);
  for (CLI::App* s : {gen, train, attribute, gt, evaluate, sweep, run}) add_force(s);
  for (CLI::App* s : {attribute, gt, run}) add_parallel(s);
  for (CLI::App* s : {attribute, run}) {
    s->add_option("--method", args.methods, "Attribution method (repeatable)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const untrac::ExperimentConfig cfg = load_config(args);
    if (print->parsed()) {
      nlohmann::json j = untrac::to_json(cfg);
      j["config_hash"] = untrac::config_hash(cfg);
      std::cout << j.dump(2) << "\n";
      return 0;
    }
    untrac::Experiment exp(cfg, run_options(args));
    if (gen->parsed()) exp.gen_data();
    if (train->parsed()) exp.train();
    if (attribute->parsed()) exp.attribute();
    if (gt->parsed()) exp.ground_truth();
    if (evaluate->parsed()) print_evaluation(exp.evaluate());
    if (sweep->parsed()) print_sweep(exp.sweep());
    if (run->parsed()) exp.run_all();
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return untrac::exit_code_for(e);
  }
}
