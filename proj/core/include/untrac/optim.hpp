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

// First-order optimizers usable for descent (training) and ascent
// (unlearning). Ascent accumulates moments on the raw gradient exactly as
// descent does and flips the sign of the final delta.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include "untrac/param_vector.hpp"

namespace untrac {

enum class OptimizerFamily { kSgd, kSgdMomentum, kRmsprop, kAdam, kAdafactor };

std::string_view optimizer_family_name(OptimizerFamily f);
OptimizerFamily parse_optimizer_family(std::string_view name);
const std::vector<OptimizerFamily>& all_optimizer_families();

struct OptimizerConfig {
  OptimizerFamily family = OptimizerFamily::kAdam;
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double momentum = 0.9;
  double dampening = 0.9;
  double rmsprop_alpha = 0.99;
  double epsilon = 1e-8;
  std::optional<double> grad_clip;

  // Throws ConfigError on out-of-range fields (lr < 0, betas outside [0, 1),
  // epsilon <= 0, grad_clip <= 0).
  void validate() const;

  bool operator==(const OptimizerConfig&) const = default;
};

enum class Direction { kDescent, kAscent };

// Row and column second-moment factors of one 2-D tensor.
struct FactoredMoment {
  std::vector<double> row;  // one entry per row
  std::vector<double> col;  // one entry per column

  bool operator==(const FactoredMoment&) const = default;
};

struct OptimizerState {
  std::uint64_t step_count = 0;
  ParamVector first_moment;     // adam
  ParamVector second_moment;    // adam, rmsprop, adafactor (1-D tensors only)
  ParamVector momentum_buffer;  // sgd_momentum
  // adafactor: one slot per layout entry, empty for 1-D tensors.
  std::vector<FactoredMoment> factored;

  bool operator==(const OptimizerState&) const = default;
};

// Zero state shaped for `params` and `cfg.family`.
OptimizerState init_optimizer_state(const OptimizerConfig& cfg, const ParamVector& params);

// Scales grad by max_norm / |grad|_2 when |grad|_2 > max_norm.
ParamVector clip_global_norm(const ParamVector& grad, double max_norm);

// In-place update. Throws NumericalError naming the first tensor with a
// non-finite gradient, and DimensionError when shapes disagree.
void apply_step(OptimizerState& state, ParamVector& params, const ParamVector& grad,
                Direction direction, const OptimizerConfig& cfg);

struct StepResult {
  ParamVector params;
  OptimizerState state;
};

// Functional form of apply_step.
StepResult step(const OptimizerState& state, const ParamVector& params,
                const ParamVector& grad, Direction direction, const OptimizerConfig& cfg);

// Adafactor's reconstructed second-moment estimate for layout entry `i`
// (row-major, bias correction not applied). For 1-D tensors this is the
// stored unfactored accumulator.
std::vector<double> adafactor_second_moment(const OptimizerState& state,
                                            const ParamVector& params, std::size_t i);

// Binary round-trip of the state (little-endian f64 payloads).
void write_optimizer_state(std::ostream& os, const OptimizerState& state);
OptimizerState read_optimizer_state(std::istream& is, const OptimizerConfig& cfg,
                                    const ParamVector& params);

}  // namespace untrac
