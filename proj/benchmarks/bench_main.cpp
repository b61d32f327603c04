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

// Microbenchmarks for the kernels on the attribution hot path.

#include <span>
#include <vector>

#include <benchmark/benchmark.h>

#include "untrac/data.hpp"
#include "untrac/hvp.hpp"
#include "untrac/model.hpp"
#include "untrac/optim.hpp"
#include "untrac/rng.hpp"
#include "untrac/tensor.hpp"
#include "untrac/vocab.hpp"

namespace {

using untrac::ModelConfig;

ModelConfig default_model() {
  ModelConfig m;
  m.vocab_size = untrac::Vocab::standard().size();
  return m;
}

const untrac::Suite& suite() {
  static const untrac::Suite s = untrac::build_suite(untrac::SuiteKind::kA, 256, 0);
  return s;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  untrac::Rng rng(7);
  std::vector<double> a(n * n), b(n * n);
  for (double& x : a) x = rng.normal();
  for (double& x : b) x = rng.normal();
  const untrac::Tensor ta = untrac::Tensor::matrix(n, n, a);
  const untrac::Tensor tb = untrac::Tensor::matrix(n, n, b);
  for (auto _ : state) benchmark::DoNotOptimize(untrac::matmul(ta, tb));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(32)->Arg(64)->Arg(128);

void BM_LossGrad(benchmark::State& state) {
  const ModelConfig m = default_model();
  const untrac::ParamVector p = untrac::init_params(m);
  const auto& ex = suite().train[0].examples;
  const auto bs = static_cast<std::size_t>(state.range(0));
  const std::span<const untrac::Example> batch(ex.data(), bs);
  for (auto _ : state) benchmark::DoNotOptimize(untrac::loss_grad(p, m, batch));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(bs));
}
BENCHMARK(BM_LossGrad)->Arg(1)->Arg(8)->Arg(64);

void BM_Hvp(benchmark::State& state) {
  const ModelConfig m = default_model();
  const untrac::ParamVector p = untrac::init_params(m);
  const auto& ex = suite().train[0].examples;
  const untrac::LossFn fn = untrac::make_loss_fn(m, std::span(ex.data(), 8));
  untrac::ParamVector v = p.zeros_like();
  untrac::Rng rng(3);
  for (double& x : v.values()) x = rng.normal();
  const auto method = static_cast<untrac::HvpMethod>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(untrac::hvp(fn, p, v, method));
  state.SetLabel(std::string(untrac::hvp_method_name(method)));
}
BENCHMARK(BM_Hvp)
    ->Arg(static_cast<int>(untrac::HvpMethod::kFdOfGrad))
    ->Arg(static_cast<int>(untrac::HvpMethod::kDoubleBackward));

void BM_OptimizerStep(benchmark::State& state) {
  const ModelConfig m = default_model();
  untrac::ParamVector p = untrac::init_params(m);
  untrac::ParamVector g = p.zeros_like();
  untrac::Rng rng(5);
  for (double& x : g.values()) x = 1e-3 * rng.normal();
  untrac::OptimizerConfig cfg;
  cfg.family = untrac::all_optimizer_families()[static_cast<std::size_t>(state.range(0))];
  untrac::OptimizerState s = untrac::init_optimizer_state(cfg, p);
  for (auto _ : state) {
    untrac::apply_step(s, p, g, untrac::Direction::kAscent, cfg);
    benchmark::ClobberMemory();
  }
  state.SetLabel(std::string(untrac::optimizer_family_name(cfg.family)));
}
BENCHMARK(BM_OptimizerStep)->DenseRange(0, 4);

}  // namespace

BENCHMARK_MAIN();
