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

#include "untrac/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "untrac/errors.hpp"
#include "untrac/rng.hpp"

namespace untrac {

namespace {

ParamVector random_unit(const ParamVector& like, Rng& rng) {
  ParamVector v = like.zeros_like();
  for (double& x : v.values()) x = rng.normal();
  const double n = norm2(v);
  return (1.0 / n) * v;
}

// Two passes of modified Gram-Schmidt against `basis`.
void orthogonalize(ParamVector& w, const std::vector<ParamVector>& basis) {
  for (int pass = 0; pass < 2; ++pass) {
    for (const ParamVector& q : basis) axpy(-dot(q, w), q, w);
  }
}

std::vector<std::vector<Example>> batches_of(const Dataset& ds, std::size_t batch_size) {
  const std::size_t n = ds.size();
  const std::size_t b = batch_size == 0 ? n : batch_size;
  std::vector<std::vector<Example>> out;
  for (std::size_t s = 0; s < n; s += b) {
    out.emplace_back(ds.examples.begin() + static_cast<std::ptrdiff_t>(s),
                     ds.examples.begin() + static_cast<std::ptrdiff_t>(std::min(n, s + b)));
  }
  return out;
}

ParamVector unit(const ParamVector& g) {
  const double n = norm2(g);
  if (n == 0.0) throw UndefinedStatisticError("cannot normalize a zero gradient");
  return (1.0 / n) * g;
}

}  // namespace

GradientSummary summarize_gradients(const ParamVector& theta, const ModelConfig& model,
                                    const Dataset& ds, std::size_t batch_size,
                                    bool keep_per_batch) {
  if (ds.examples.empty()) {
    throw DegenerateBatchError("gradient of empty dataset '" + ds.name + "'");
  }
  GradientSummary s;
  s.dataset = ds.name;
  if (keep_per_batch) {
    s.aggregate = theta.zeros_like();
    for (const auto& batch : batches_of(ds, batch_size)) {
      s.per_batch.push_back(loss_grad(theta, model, batch).grad);
      axpy(1.0, s.per_batch.back(), s.aggregate);
    }
  } else {
    s.aggregate = batched_loss_sum_grad(theta, model, ds.examples, batch_size).grad;
  }
  s.norm = norm2(s.aggregate);
  return s;
}

double grad_dot(const ParamVector& theta, const ModelConfig& model, const Dataset& z,
                const Dataset& z_test, std::size_t batch_size) {
  return dot(summarize_gradients(theta, model, z, batch_size).aggregate,
             summarize_gradients(theta, model, z_test, batch_size).aggregate);
}

double cosine(const ParamVector& a, const ParamVector& b) {
  const double na = norm2(a), nb = norm2(b);
  if (na == 0.0 || nb == 0.0) {
    throw UndefinedStatisticError("cosine similarity of a zero gradient is undefined");
  }
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

double grad_cos(const ParamVector& theta, const ModelConfig& model, const Dataset& z,
                const Dataset& z_test, std::size_t batch_size) {
  return cosine(summarize_gradients(theta, model, z, batch_size).aggregate,
                summarize_gradients(theta, model, z_test, batch_size).aggregate);
}

double grad_cos_pairwise(const ParamVector& theta, const ModelConfig& model,
                         const Dataset& z, const Dataset& z_test, std::size_t batch_size) {
  const auto a = summarize_gradients(theta, model, z, batch_size, true);
  const auto b = summarize_gradients(theta, model, z_test, batch_size, true);
  double s = 0.0;
  for (const ParamVector& ga : a.per_batch) {
    for (const ParamVector& gb : b.per_batch) s += cosine(ga, gb);
  }
  return s;
}

double tracin(const CheckpointSet& checkpoints, const ModelConfig& model, const Dataset& z,
              const Dataset& z_test, std::size_t batch_size) {
  if (checkpoints.entries.empty()) throw ConfigError("tracin: checkpoint set is empty");
  double total = 0.0;
  for (std::size_t i = 0; i < checkpoints.entries.size(); ++i) {
    const ParamVector theta = checkpoints.load(i, model);
    total += checkpoints.entries[i].learning_rate * grad_dot(theta, model, z, z_test, batch_size);
  }
  return total;
}

LinearOp hessian_operator(const ParamVector& theta, const ModelConfig& model,
                          std::vector<Example> sample, HvpMethod method) {
  auto examples = std::make_shared<const std::vector<Example>>(std::move(sample));
  const LossFn fn = make_loss_fn(model, *examples);
  return [theta, fn, method, examples](const ParamVector& v) {
    return hvp(fn, theta, v, method);
  };
}

std::string hessian_warning(const ModelConfig& model) {
  if (model.activation == Activation::kRelu) {
    return "model uses relu: the loss is not twice differentiable everywhere, so "
           "Hessian-based scores may be unreliable";
  }
  return {};
}

std::vector<Example> hessian_sample(const std::vector<Dataset>& datasets, std::size_t n,
                                    std::uint64_t seed) {
  std::vector<const Example*> all;
  for (const Dataset& d : datasets) {
    for (const Example& e : d.examples) all.push_back(&e);
  }
  if (all.empty()) throw DegenerateBatchError("hessian sample: no training examples");
  std::vector<std::size_t> idx(all.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (n < all.size()) {
    Rng rng(seed);
    rng.shuffle(idx);
    idx.resize(n);
    std::sort(idx.begin(), idx.end());
  }
  std::vector<Example> out;
  for (std::size_t i : idx) out.push_back(*all[i]);
  return out;
}

double power_iteration(const LinearOp& h, const ParamVector& like, std::size_t iters,
                       std::uint64_t seed) {
  Rng rng(seed);
  ParamVector v = random_unit(like, rng);
  double lambda = 0.0;
  for (std::size_t i = 0; i < iters; ++i) {
    ParamVector w = h(v);
    lambda = norm2(w);
    if (lambda == 0.0) return 0.0;
    v = (1.0 / lambda) * w;
  }
  return lambda;
}

LissaResult lissa_ihvp(const LinearOp& h, const ParamVector& v, std::size_t iters,
                       double damping, double scale) {
  if (iters < 1) throw ConfigError("lissa: iters must be >= 1");
  if (!(scale > 0.0)) throw ConfigError("lissa: scale must be > 0");
  if (!(damping >= 0.0)) throw ConfigError("lissa: damping must be >= 0");
  LissaResult res;
  ParamVector r = v;
  res.iterate_norms.push_back(norm2(v));
  // r_k - r_{k-1} = A^{k-1} (r_1 - r_0) with A = I - (H + damping I) / scale,
  // so the update norm never grows while A is a contraction.
  double first_update = 0.0;
  for (std::size_t k = 1; k <= iters; ++k) {
    const ParamVector hr = h(r);
    ParamVector next = v;
    double update = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
      next[i] += r[i] - (hr[i] + damping * r[i]) / scale;
      update += (next[i] - r[i]) * (next[i] - r[i]);
    }
    update = std::sqrt(update);
    if (k == 1) first_update = update;
    r = std::move(next);
    const double rn = norm2(r);
    res.iterate_norms.push_back(rn);
    if (!std::isfinite(rn) || update > 1e3 * std::max(first_update, 1e-300)) {
      throw NumericalError("lissa diverged at iteration " + std::to_string(k) +
                           " (update norm grew over 1000x); increase scale or damping");
    }
  }
  res.x = (1.0 / scale) * r;
  return res;
}

LowRankHessian arnoldi_eigs(const LinearOp& h, const ParamVector& like,
                            const ArnoldiOptions& opts) {
  const std::size_t dim = like.size();
  if (opts.top_k < 1 || opts.n_iters < opts.top_k) {
    throw ConfigError("arnoldi: need 1 <= top_k <= n_iters");
  }
  if (opts.n_iters > dim) {
    throw ConfigError("arnoldi: n_iters (" + std::to_string(opts.n_iters) +
                      ") exceeds the parameter dimension (" + std::to_string(dim) + ")");
  }
  Rng rng(opts.seed);
  LowRankHessian out;
  out.damping = opts.damping;
  std::vector<ParamVector> q = {random_unit(like, rng)};
  std::vector<ParamVector> hq;
  while (hq.size() < opts.n_iters) {
    hq.push_back(h(q.back()));
    if (q.size() == opts.n_iters) break;
    ParamVector w = hq.back();
    orthogonalize(w, q);
    double n = norm2(w);
    if (n < 1e-12) {
      if (!opts.restart_on_breakdown) {
        out.truncated = true;
        break;
      }
      // Fresh direction orthogonal to the current basis.
      for (int attempt = 0; attempt < 10 && n < 1e-12; ++attempt) {
        w = random_unit(like, rng);
        orthogonalize(w, q);
        n = norm2(w);
      }
      if (n < 1e-12) {
        out.truncated = true;
        break;
      }
    }
    q.push_back((1.0 / n) * w);
  }

  const std::size_t m = hq.size();
  Eigen::MatrixXd t(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) t(i, j) = dot(q[i], hq[j]);
  }
  const Eigen::MatrixXd sym = 0.5 * (t + t.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw NumericalError("arnoldi: eigensolver failed");

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(es.eigenvalues()(static_cast<Eigen::Index>(a))) >
           std::abs(es.eigenvalues()(static_cast<Eigen::Index>(b)));
  });
  const std::size_t k = std::min(opts.top_k, m);
  for (std::size_t r = 0; r < k; ++r) {
    const auto col = static_cast<Eigen::Index>(order[r]);
    ParamVector v = like.zeros_like();
    for (std::size_t i = 0; i < m; ++i) {
      axpy(es.eigenvectors()(static_cast<Eigen::Index>(i), col), q[i], v);
    }
    out.eigenvalues.push_back(es.eigenvalues()(col));
    out.eigenvectors.push_back((1.0 / norm2(v)) * v);
  }
  return out;
}

double low_rank_inverse_form(const LowRankHessian& lr, const ParamVector& a,
                             const ParamVector& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < lr.eigenvalues.size(); ++k) {
    s += dot(a, lr.eigenvectors[k]) * dot(b, lr.eigenvectors[k]) /
         (lr.eigenvalues[k] + lr.damping);
  }
  return s;
}

double hif_with_operator(const LinearOp& h, const ParamVector& g_train,
                         const ParamVector& g_test, const HifOptions& opts) {
  const ParamVector g = opts.normalize_train ? unit(g_train) : g_train;
  if (opts.method == IhvpMethod::kLissa) {
    const double scale = opts.lissa_scale ? *opts.lissa_scale
                                          : 10.0 * power_iteration(h, g_test, 5, opts.seed);
    return dot(g, lissa_ihvp(h, g_test, opts.lissa_iters, opts.damping, scale).x);
  }
  ArnoldiOptions ao;
  ao.n_iters = opts.arnoldi_iters;
  ao.top_k = opts.arnoldi_top_k;
  ao.damping = opts.damping;
  ao.seed = opts.seed;
  ao.restart_on_breakdown = opts.arnoldi_restart;
  return low_rank_inverse_form(arnoldi_eigs(h, g_test, ao), g, g_test);
}

std::vector<double> hif(const ParamVector& theta0, const ModelConfig& model,
                        const std::vector<Dataset>& train, const Dataset& test,
                        const HifOptions& opts) {
  const LinearOp h = hessian_operator(
      theta0, model, hessian_sample(train, opts.hessian_sample_size, opts.seed), opts.hvp);
  const ParamVector g_test = summarize_gradients(theta0, model, test, opts.batch_size).aggregate;
  std::vector<ParamVector> g_train;
  for (const Dataset& d : train) {
    const ParamVector g = summarize_gradients(theta0, model, d, opts.batch_size).aggregate;
    g_train.push_back(opts.normalize_train ? unit(g) : g);
  }
  std::vector<double> out;
  if (opts.method == IhvpMethod::kLissa) {
    const double scale = opts.lissa_scale ? *opts.lissa_scale
                                          : 10.0 * power_iteration(h, theta0, 5, opts.seed);
    const ParamVector x = lissa_ihvp(h, g_test, opts.lissa_iters, opts.damping, scale).x;
    for (const ParamVector& g : g_train) out.push_back(dot(g, x));
  } else {
    ArnoldiOptions ao;
    ao.n_iters = opts.arnoldi_iters;
    ao.top_k = opts.arnoldi_top_k;
    ao.damping = opts.damping;
    ao.seed = opts.seed;
    ao.restart_on_breakdown = opts.arnoldi_restart;
    const LowRankHessian lr = arnoldi_eigs(h, theta0, ao);
    for (const ParamVector& g : g_train) out.push_back(low_rank_inverse_form(lr, g, g_test));
  }
  return out;
}

}  // namespace untrac
