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

#include "untrac/optim.hpp"

#include <bit>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "untrac/errors.hpp"
#include "untrac/model.hpp"

namespace untrac {

namespace {

// Added to squared gradients before Adafactor's factored statistics.
constexpr double kAdafactorEps = 1e-30;

bool has_factored(const LayoutEntry& e) { return e.shape.size() == 2; }

void check_grad(const ParamVector& grad) {
  const auto& entries = grad.layout().entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    for (double g : grad.entry(i)) {
      if (!std::isfinite(g)) {
        throw NumericalError("non-finite gradient in tensor '" + entries[i].name + "'");
      }
    }
  }
}

// Writes the descent delta (the amount subtracted from params) into `delta`.
void sgd_delta(const OptimizerConfig& cfg, const ParamVector& g, ParamVector& delta) {
  for (std::size_t k = 0; k < g.size(); ++k) delta[k] = cfg.learning_rate * g[k];
}

void momentum_delta(OptimizerState& s, const OptimizerConfig& cfg, const ParamVector& g,
                    ParamVector& delta) {
  ParamVector& buf = s.momentum_buffer;
  for (std::size_t k = 0; k < g.size(); ++k) {
    buf[k] = s.step_count == 1 ? g[k]
                               : cfg.momentum * buf[k] + (1.0 - cfg.dampening) * g[k];
    delta[k] = cfg.learning_rate * buf[k];
  }
}

void rmsprop_delta(OptimizerState& s, const OptimizerConfig& cfg, const ParamVector& g,
                   ParamVector& delta) {
  ParamVector& v = s.second_moment;
  const double a = cfg.rmsprop_alpha;
  for (std::size_t k = 0; k < g.size(); ++k) {
    v[k] = a * v[k] + (1.0 - a) * g[k] * g[k];
    delta[k] = cfg.learning_rate * g[k] / (std::sqrt(v[k]) + cfg.epsilon);
  }
}

void adam_delta(OptimizerState& s, const OptimizerConfig& cfg, const ParamVector& g,
                ParamVector& delta) {
  ParamVector& m = s.first_moment;
  ParamVector& v = s.second_moment;
  const double t = static_cast<double>(s.step_count);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < g.size(); ++k) {
    m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
    v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
    const double mhat = m[k] / bc1;
    const double vhat = v[k] / bc2;
    delta[k] = cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
  }
}

void adafactor_delta(OptimizerState& s, const OptimizerConfig& cfg, const ParamVector& g,
                     ParamVector& delta) {
  const double b2 = cfg.beta2;
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(s.step_count));
  const auto& entries = g.layout().entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const LayoutEntry& e = entries[i];
    const auto gi = g.entry(i);
    auto di = delta.entry(i);
    if (!has_factored(e)) {
      auto v = s.second_moment.entry(i);
      for (std::size_t k = 0; k < gi.size(); ++k) {
        v[k] = b2 * v[k] + (1.0 - b2) * (gi[k] * gi[k] + kAdafactorEps);
        di[k] = cfg.learning_rate * gi[k] / std::sqrt(v[k] / bc2);
      }
      continue;
    }
    const std::size_t rows = e.shape[0], cols = e.shape[1];
    FactoredMoment& f = s.factored[i];
    std::vector<double> row_mean(rows, 0.0), col_mean(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const double sq = gi[r * cols + c] * gi[r * cols + c] + kAdafactorEps;
        row_mean[r] += sq;
        col_mean[c] += sq;
      }
    }
    double row_total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      f.row[r] = b2 * f.row[r] + (1.0 - b2) * row_mean[r] / static_cast<double>(cols);
      row_total += f.row[r];
    }
    for (std::size_t c = 0; c < cols; ++c) {
      f.col[c] = b2 * f.col[c] + (1.0 - b2) * col_mean[c] / static_cast<double>(rows);
    }
    const double row_avg = row_total / static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const double vhat = f.row[r] * f.col[c] / row_avg / bc2;
        di[r * cols + c] = cfg.learning_rate * gi[r * cols + c] / std::sqrt(vhat);
      }
    }
  }
}

void write_u64(std::ostream& os, std::uint64_t v) {
  const double d = std::bit_cast<double>(v);
  write_f64_le(os, std::span<const double>(&d, 1));
}

std::uint64_t read_u64(std::istream& is) {
  return std::bit_cast<std::uint64_t>(read_f64_le(is, 1)[0]);
}

void write_pv(std::ostream& os, const ParamVector& p) {
  write_u64(os, p.size());
  if (p.size() > 0) write_f64_le(os, p.values());
}

ParamVector read_pv(std::istream& is, const ParamVector& like) {
  const std::uint64_t n = read_u64(is);
  if (n == 0) return ParamVector();
  if (n != like.size()) throw FormatError("optimizer state size does not match parameters");
  return ParamVector(like.layout_ptr(), read_f64_le(is, n));
}

}  // namespace

std::string_view optimizer_family_name(OptimizerFamily f) {
  switch (f) {
    case OptimizerFamily::kSgd: return "sgd";
    case OptimizerFamily::kSgdMomentum: return "sgd_momentum";
    case OptimizerFamily::kRmsprop: return "rmsprop";
    case OptimizerFamily::kAdam: return "adam";
    case OptimizerFamily::kAdafactor: return "adafactor";
  }
  return "?";
}

OptimizerFamily parse_optimizer_family(std::string_view name) {
  for (OptimizerFamily f : all_optimizer_families()) {
    if (optimizer_family_name(f) == name) return f;
  }
  throw ConfigError("unknown optimizer family '" + std::string(name) +
                    "' (expected sgd, sgd_momentum, rmsprop, adam or adafactor)");
}

const std::vector<OptimizerFamily>& all_optimizer_families() {
  static const std::vector<OptimizerFamily> kAll = {
      OptimizerFamily::kSgd, OptimizerFamily::kSgdMomentum, OptimizerFamily::kRmsprop,
      OptimizerFamily::kAdam, OptimizerFamily::kAdafactor};
  return kAll;
}

void OptimizerConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("optimizer.learning_rate must be finite and >= 0");
  }
  auto unit = [](double x, const char* name) {
    if (!(x >= 0.0 && x < 1.0)) {
      throw ConfigError(std::string("optimizer.") + name + " must lie in [0, 1)");
    }
  };
  unit(beta1, "beta1");
  unit(beta2, "beta2");
  unit(rmsprop_alpha, "rmsprop_alpha");
  if (!(momentum >= 0.0)) throw ConfigError("optimizer.momentum must be >= 0");
  if (!(dampening >= 0.0 && dampening <= 1.0)) {
    throw ConfigError("optimizer.dampening must lie in [0, 1]");
  }
  if (!(epsilon > 0.0)) throw ConfigError("optimizer.epsilon must be > 0");
  if (grad_clip && !(*grad_clip > 0.0)) {
    throw ConfigError("optimizer.grad_clip must be > 0 when set");
  }
}

OptimizerState init_optimizer_state(const OptimizerConfig& cfg, const ParamVector& params) {
  OptimizerState s;
  switch (cfg.family) {
    case OptimizerFamily::kSgd:
      break;
    case OptimizerFamily::kSgdMomentum:
      s.momentum_buffer = params.zeros_like();
      break;
    case OptimizerFamily::kRmsprop:
      s.second_moment = params.zeros_like();
      break;
    case OptimizerFamily::kAdam:
      s.first_moment = params.zeros_like();
      s.second_moment = params.zeros_like();
      break;
    case OptimizerFamily::kAdafactor: {
      s.second_moment = params.zeros_like();
      for (const LayoutEntry& e : params.layout().entries()) {
        FactoredMoment f;
        if (has_factored(e)) {
          f.row.assign(e.shape[0], 0.0);
          f.col.assign(e.shape[1], 0.0);
        }
        s.factored.push_back(std::move(f));
      }
      break;
    }
  }
  return s;
}

ParamVector clip_global_norm(const ParamVector& grad, double max_norm) {
  if (!(max_norm > 0.0)) throw ConfigError("clip_global_norm: max_norm must be > 0");
  const double n = norm2(grad);
  if (n <= max_norm) return grad;
  return (max_norm / n) * grad;
}

void apply_step(OptimizerState& state, ParamVector& params, const ParamVector& grad,
                Direction direction, const OptimizerConfig& cfg) {
  if (!params.same_layout(grad)) {
    throw DimensionError("optimizer step: gradient layout does not match parameters");
  }
  check_grad(grad);
  const ParamVector g = cfg.grad_clip ? clip_global_norm(grad, *cfg.grad_clip) : grad;

  ++state.step_count;
  ParamVector delta = params.zeros_like();
  switch (cfg.family) {
    case OptimizerFamily::kSgd: sgd_delta(cfg, g, delta); break;
    case OptimizerFamily::kSgdMomentum: momentum_delta(state, cfg, g, delta); break;
    case OptimizerFamily::kRmsprop: rmsprop_delta(state, cfg, g, delta); break;
    case OptimizerFamily::kAdam: adam_delta(state, cfg, g, delta); break;
    case OptimizerFamily::kAdafactor: adafactor_delta(state, cfg, g, delta); break;
  }
  if (direction == Direction::kDescent) {
    for (std::size_t k = 0; k < params.size(); ++k) params[k] -= delta[k];
  } else {
    for (std::size_t k = 0; k < params.size(); ++k) params[k] += delta[k];
  }
}

StepResult step(const OptimizerState& state, const ParamVector& params,
                const ParamVector& grad, Direction direction, const OptimizerConfig& cfg) {
  StepResult r{params, state};
  apply_step(r.state, r.params, grad, direction, cfg);
  return r;
}

std::vector<double> adafactor_second_moment(const OptimizerState& state,
                                            const ParamVector& params, std::size_t i) {
  const LayoutEntry& e = params.layout().entries().at(i);
  if (!has_factored(e)) {
    const auto v = state.second_moment.entry(i);
    return {v.begin(), v.end()};
  }
  const FactoredMoment& f = state.factored.at(i);
  double row_total = 0.0;
  for (double r : f.row) row_total += r;
  const double row_avg = row_total / static_cast<double>(f.row.size());
  std::vector<double> out(f.row.size() * f.col.size());
  for (std::size_t r = 0; r < f.row.size(); ++r) {
    for (std::size_t c = 0; c < f.col.size(); ++c) {
      out[r * f.col.size() + c] = row_avg > 0.0 ? f.row[r] * f.col[c] / row_avg : 0.0;
    }
  }
  return out;
}

void write_optimizer_state(std::ostream& os, const OptimizerState& state) {
  write_u64(os, state.step_count);
  write_pv(os, state.first_moment);
  write_pv(os, state.second_moment);
  write_pv(os, state.momentum_buffer);
  write_u64(os, state.factored.size());
  for (const FactoredMoment& f : state.factored) {
    write_u64(os, f.row.size());
    write_f64_le(os, f.row);
    write_u64(os, f.col.size());
    write_f64_le(os, f.col);
  }
}

OptimizerState read_optimizer_state(std::istream& is, const OptimizerConfig& cfg,
                                    const ParamVector& params) {
  OptimizerState s;
  s.step_count = read_u64(is);
  s.first_moment = read_pv(is, params);
  s.second_moment = read_pv(is, params);
  s.momentum_buffer = read_pv(is, params);
  const std::uint64_t nf = read_u64(is);
  for (std::uint64_t i = 0; i < nf; ++i) {
    FactoredMoment f;
    f.row = read_f64_le(is, read_u64(is));
    f.col = read_f64_le(is, read_u64(is));
    s.factored.push_back(std::move(f));
  }
  const OptimizerState fresh = init_optimizer_state(cfg, params);
  if (s.first_moment.size() != fresh.first_moment.size() ||
      s.second_moment.size() != fresh.second_moment.size() ||
      s.momentum_buffer.size() != fresh.momentum_buffer.size() ||
      s.factored.size() != fresh.factored.size()) {
    throw FormatError("optimizer state does not match the configured optimizer family");
  }
  return s;
}

}  // namespace untrac
