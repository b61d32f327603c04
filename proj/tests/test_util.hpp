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

// Helpers shared by the unit and acceptance tests: small model configs,
// random batches, and brute-force derivative oracles that only use loss
// values or exact gradients.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <span>
#include <vector>

#include <unistd.h>

#include "untrac/hvp.hpp"
#include "untrac/model.hpp"
#include "untrac/param_vector.hpp"
#include "untrac/rng.hpp"

namespace untrac::testing {

// Path under the temp directory, unique per process so that test binaries
// run concurrently by ctest do not share files.
inline std::filesystem::path scratch_path(const std::string& name) {
  return std::filesystem::temp_directory_path() /
         (name + "_" + std::to_string(static_cast<long>(::getpid())));
}

// V=8, C=4, E=2, H=3, one hidden layer: 75 parameters.
inline ModelConfig tiny_model(std::uint64_t seed = 0) {
  ModelConfig m;
  m.vocab_size = 8;
  m.context_window = 4;
  m.embed_dim = 2;
  m.hidden_dim = 3;
  m.n_hidden_layers = 1;
  m.seed = seed;
  return m;
}

// V=10, C=4, E=3, H=6, two hidden layers: 220 parameters.
inline ModelConfig small_model(std::uint64_t seed = 0) {
  ModelConfig m;
  m.vocab_size = 10;
  m.context_window = 4;
  m.embed_dim = 3;
  m.hidden_dim = 6;
  m.n_hidden_layers = 2;
  m.seed = seed;
  return m;
}

// Sequences of `len` uniform tokens with the last `answer` positions masked
// in.
inline std::vector<Example> random_examples(std::size_t n, std::size_t vocab, std::uint64_t seed,
                                            std::size_t len = 6, std::size_t answer = 2) {
  Rng rng(seed);
  std::vector<Example> out(n);
  for (Example& ex : out) {
    ex.tokens.resize(len);
    ex.loss_mask.assign(len, 0);
    for (std::size_t t = 0; t < len; ++t) ex.tokens[t] = 1 + rng.below(vocab - 1);
    for (std::size_t t = len - answer; t < len; ++t) ex.loss_mask[t] = 1;
  }
  return out;
}

inline ParamVector random_like(const ParamVector& like, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  ParamVector v = like.zeros_like();
  for (double& x : v.values()) x = scale * rng.normal();
  return v;
}

// Central differences of loss values.
inline std::vector<double> fd_gradient(const LossFn& fn, const ParamVector& p, double h) {
  std::vector<double> g(p.size());
  ParamVector q = p;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double x = q[i];
    q[i] = x + h;
    const double up = loss_value(fn, q);
    q[i] = x - h;
    const double dn = loss_value(fn, q);
    q[i] = x;
    g[i] = (up - dn) / (2.0 * h);
  }
  return g;
}

// Dense Hessian from central differences of exact gradients, symmetrized.
// Row-major n x n.
inline std::vector<double> dense_hessian(const LossFn& fn, const ParamVector& p,
                                         double h = 1e-5) {
  const std::size_t n = p.size();
  std::vector<double> hess(n * n);
  ParamVector q = p;
  for (std::size_t j = 0; j < n; ++j) {
    const double x = q[j];
    q[j] = x + h;
    const ParamVector gu = value_and_grad(fn, q).grad;
    q[j] = x - h;
    const ParamVector gd = value_and_grad(fn, q).grad;
    q[j] = x;
    for (std::size_t i = 0; i < n; ++i) hess[i * n + j] = (gu[i] - gd[i]) / (2.0 * h);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double s = 0.5 * (hess[i * n + j] + hess[j * n + i]);
      hess[i * n + j] = hess[j * n + i] = s;
    }
  }
  return hess;
}

inline std::vector<double> matvec(const std::vector<double>& a, std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<double> y(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) y[i] += a[i * n + j] * x[j];
  }
  return y;
}

// Solves a x = b by Gaussian elimination with partial pivoting (a is n x n,
// row-major, copied).
inline std::vector<double> dense_solve(std::vector<double> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i) {
      if (std::abs(a[i * n + k]) > std::abs(a[piv * n + k])) piv = i;
    }
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a[k * n + j], a[piv * n + j]);
      std::swap(b[k], b[piv]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a[i * n + k] / a[k * n + k];
      for (std::size_t j = k; j < n; ++j) a[i * n + j] -= f * a[k * n + j];
      b[i] -= f * b[k];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= a[i * n + j] * x[j];
    x[i] = s / a[i * n + i];
  }
  return x;
}

inline double rel_err(std::span<const double> got, std::span<const double> want) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    num += (got[i] - want[i]) * (got[i] - want[i]);
    den += want[i] * want[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace untrac::testing
