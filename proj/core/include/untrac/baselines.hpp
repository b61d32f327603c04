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

// Gradient-based baselines: GradDot, GradCos, TracIn and Hessian-based
// influence functions with LISSA or Arnoldi inverse-Hessian approximations.
//
// Dataset gradients are aggregated as the sum over batches of the per-batch
// mean-loss gradient, i.e. the gradient of batched_loss_sum().

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "untrac/data.hpp"
#include "untrac/hvp.hpp"
#include "untrac/model.hpp"
#include "untrac/training.hpp"

namespace untrac {

struct GradientSummary {
  std::string dataset;
  ParamVector aggregate;
  double norm = 0.0;
  std::vector<ParamVector> per_batch;  // filled only when requested
};

// batch_size 0 = one batch.
GradientSummary summarize_gradients(const ParamVector& theta, const ModelConfig& model,
                                    const Dataset& ds, std::size_t batch_size,
                                    bool keep_per_batch = false);

double grad_dot(const ParamVector& theta, const ModelConfig& model, const Dataset& z,
                const Dataset& z_test, std::size_t batch_size = 1);

// Cosine of the aggregate gradients. Throws UndefinedStatisticError when
// either aggregate is zero.
double grad_cos(const ParamVector& theta, const ModelConfig& model, const Dataset& z,
                const Dataset& z_test, std::size_t batch_size = 1);
double cosine(const ParamVector& a, const ParamVector& b);

// Sum over all batch pairs of per-batch cosines (the pairwise reading).
double grad_cos_pairwise(const ParamVector& theta, const ModelConfig& model,
                         const Dataset& z, const Dataset& z_test, std::size_t batch_size = 1);

// sum_t lr_t * grad_dot(theta_t). Throws FormatError naming an unloadable
// entry.
double tracin(const CheckpointSet& checkpoints, const ModelConfig& model, const Dataset& z,
              const Dataset& z_test, std::size_t batch_size = 1);

using LinearOp = std::function<ParamVector(const ParamVector&)>;

// v -> H v for the mean loss of `sample` at theta.
LinearOp hessian_operator(const ParamVector& theta, const ModelConfig& model,
                          std::vector<Example> sample, HvpMethod method = HvpMethod::kFdOfGrad);

// Non-empty when the model's Hessian is not defined everywhere (relu).
std::string hessian_warning(const ModelConfig& model);

// Deterministic HVP sample: `n` examples drawn uniformly without replacement
// from the union of `datasets` (all of them when n >= the total).
std::vector<Example> hessian_sample(const std::vector<Dataset>& datasets, std::size_t n,
                                    std::uint64_t seed);

// |largest eigenvalue| estimate from `iters` power iterations.
double power_iteration(const LinearOp& h, const ParamVector& like, std::size_t iters,
                       std::uint64_t seed);

struct LissaResult {
  ParamVector x;                    // estimate of (H + damping I)^-1 v
  std::vector<double> iterate_norms;  // |r_k|, k = 0..iters
};

// r_0 = v, r_k = v + (I - (H + damping I) / scale) r_{k-1}; returns
// r_iters / scale. Throws NumericalError when the update |r_k - r_{k-1}|
// exceeds 1e3 |r_1 - r_0|. The iterate itself may legitimately reach
// scale / (lambda_min + damping) times |v|.
LissaResult lissa_ihvp(const LinearOp& h, const ParamVector& v, std::size_t iters,
                       double damping, double scale);

struct LowRankHessian {
  std::vector<double> eigenvalues;         // descending by magnitude
  std::vector<ParamVector> eigenvectors;   // orthonormal
  double damping = 0.0;
  bool truncated = false;                  // Krylov basis broke down early
};

struct ArnoldiOptions {
  std::size_t n_iters = 25;
  std::size_t top_k = 25;
  double damping = 0.01;
  std::uint64_t seed = 0;
  // On breakdown, continue from a fresh random vector orthogonal to the
  // basis instead of stopping. Needed to span the whole space when the
  // operator has repeated eigenvalues.
  bool restart_on_breakdown = false;
};

// Krylov basis from a seeded random start with full re-orthogonalization
// (modified Gram-Schmidt, two passes); the projected matrix Q^T H Q is
// diagonalized and its top_k eigenpairs by |eigenvalue| lifted back.
LowRankHessian arnoldi_eigs(const LinearOp& h, const ParamVector& like,
                            const ArnoldiOptions& opts);

// sum_k (a . v_k)(b . v_k) / (lambda_k + damping)
double low_rank_inverse_form(const LowRankHessian& lr, const ParamVector& a,
                             const ParamVector& b);

enum class IhvpMethod { kLissa, kArnoldi };

struct HifOptions {
  IhvpMethod method = IhvpMethod::kLissa;
  double damping = 0.01;
  std::size_t lissa_iters = 10;
  std::optional<double> lissa_scale;  // default 10 * power_iteration(5)
  std::size_t arnoldi_iters = 25;
  std::size_t arnoldi_top_k = 25;
  bool arnoldi_restart = false;
  std::size_t hessian_sample_size = 256;
  std::uint64_t seed = 0;
  bool normalize_train = true;
  std::size_t batch_size = 1;  // gradient aggregation batches
  HvpMethod hvp = HvpMethod::kFdOfGrad;
};

// HIF scores of every training dataset against `test`. The Hessian is that
// of the mean loss on hessian_sample(train, hessian_sample_size, seed).
std::vector<double> hif(const ParamVector& theta0, const ModelConfig& model,
                        const std::vector<Dataset>& train, const Dataset& test,
                        const HifOptions& opts);

// The same bilinear form with an explicit operator and gradients:
// g . ihvp(g_test), g normalized to unit length when requested.
double hif_with_operator(const LinearOp& h, const ParamVector& g_train,
                         const ParamVector& g_test, const HifOptions& opts);

}  // namespace untrac
