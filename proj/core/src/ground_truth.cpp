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

#include "untrac/ground_truth.hpp"

#include <numeric>

#include "untrac/errors.hpp"
#include "untrac/parallel.hpp"
#include "untrac/rng.hpp"

namespace untrac {

double leave_out_influence(const ParamVector& theta_minus, const ParamVector& theta0,
                           const ModelConfig& model, const Dataset& test,
                           std::size_t eval_batch_size) {
  return batched_loss_sum(theta_minus, model, test.examples, eval_batch_size) -
         batched_loss_sum(theta0, model, test.examples, eval_batch_size);
}

std::vector<GroundTruthRecord> ground_truth(const ParamVector& init, const ParamVector& theta0,
                                            const ModelConfig& model,
                                            const std::vector<Dataset>& train,
                                            const std::vector<const Dataset*>& tests,
                                            const TrainConfig& train_cfg,
                                            const GroundTruthOptions& opts) {
  if (tests.empty()) throw ConfigError("ground_truth: no test datasets");
  std::vector<double> base;
  for (const Dataset* t : tests) {
    base.push_back(batched_loss_sum(theta0, model, t->examples, opts.eval_batch_size));
  }
  if (!opts.out_dir.empty()) std::filesystem::create_directories(opts.out_dir);

  std::vector<GroundTruthRecord> records(train.size());
  parallel_for(train.size(), opts.parallel, [&](std::size_t i) {
    const CounterfactualResult cf =
        train_excluding(init, model, train, train_cfg, train[i].name, opts.counterfactual);
    GroundTruthRecord r;
    r.excluded = train[i].name;
    r.mode = opts.counterfactual.mode;
    r.seed = cf.seed;
    r.steps = cf.steps;
    for (std::size_t t = 0; t < tests.size(); ++t) {
      r.test_names.push_back(tests[t]->name);
      r.influence.push_back(
          batched_loss_sum(cf.params, model, tests[t]->examples, opts.eval_batch_size) -
          base[t]);
    }
    if (!opts.out_dir.empty()) {
      r.checkpoint = opts.out_dir / ("without_" + train[i].name + ".bin");
      save_checkpoint(r.checkpoint, model, cf.params);
    }
    records[i] = std::move(r);
  });
  return records;
}

std::vector<Dataset> split_subsets(const Dataset& ds, std::size_t n_subsets,
                                   std::uint64_t seed) {
  if (n_subsets < 1 || n_subsets > ds.size()) {
    throw ConfigError("cannot split " + std::to_string(ds.size()) + " examples into " +
                      std::to_string(n_subsets) + " subsets");
  }
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(idx);
  std::vector<Dataset> out;
  std::size_t start = 0;
  for (std::size_t s = 0; s < n_subsets; ++s) {
    const std::size_t len = ds.size() / n_subsets + (s < ds.size() % n_subsets ? 1 : 0);
    Dataset d;
    d.name = ds.name + "/" + std::to_string(s);
    d.task_id = ds.task_id;
    d.format_id = ds.format_id;
    for (std::size_t k = start; k < start + len; ++k) d.examples.push_back(ds.examples[idx[k]]);
    start += len;
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace untrac
