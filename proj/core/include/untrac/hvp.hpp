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

#pragma once

#include <functional>
#include <span>
#include <string_view>

#include "untrac/autodiff.hpp"
#include "untrac/param_vector.hpp"

namespace untrac {

// Builds a scalar loss on `tape` from one leaf per layout entry (in layout
// order, each shaped like its entry).
using LossFn = std::function<ad::Var(ad::Tape& tape, std::span<const ad::Var> leaves)>;

struct ValueAndGrad {
  double value = 0.0;
  ParamVector grad;
};

double loss_value(const LossFn& fn, const ParamVector& params);
ValueAndGrad value_and_grad(const LossFn& fn, const ParamVector& params);

enum class HvpMethod { kFdOfGrad, kDoubleBackward };

std::string_view hvp_method_name(HvpMethod m);
HvpMethod parse_hvp_method(std::string_view name);

// H v with H the Hessian of `fn` at `params`.
//
// kFdOfGrad: central difference of exact gradients along v/|v|_inf with step
// 1e-4 * (1 + |params|_inf), rescaled by |v|_inf.
// kDoubleBackward: reverse-over-reverse on a recorded backward pass.
ParamVector hvp(const LossFn& fn, const ParamVector& params, const ParamVector& v,
                HvpMethod method = HvpMethod::kFdOfGrad);

}  // namespace untrac
