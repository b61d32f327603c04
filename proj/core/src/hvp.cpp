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

#include "untrac/hvp.hpp"

#include <string>
#include <vector>

#include "untrac/errors.hpp"

namespace untrac {

namespace {

std::vector<ad::Var> make_leaves(ad::Tape& tape, const ParamVector& params) {
  std::vector<ad::Var> leaves;
  leaves.reserve(params.layout().entries().size());
  for (std::size_t i = 0; i < params.layout().entries().size(); ++i) {
    leaves.push_back(tape.leaf(params.entry_tensor(i)));
  }
  return leaves;
}

void scatter_grads(const std::vector<Tensor>& grads, ParamVector& out) {
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto dst = out.entry(i);
    const auto src = grads[i].data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

}  // namespace

double loss_value(const LossFn& fn, const ParamVector& params) {
  ad::Tape tape;
  const auto leaves = make_leaves(tape, params);
  return fn(tape, leaves).value().item();
}

ValueAndGrad value_and_grad(const LossFn& fn, const ParamVector& params) {
  ad::Tape tape;
  const auto leaves = make_leaves(tape, params);
  const ad::Var loss = fn(tape, leaves);
  ValueAndGrad out;
  out.value = loss.value().item();
  out.grad = params.zeros_like();
  scatter_grads(tape.backward(loss, leaves), out.grad);
  return out;
}

std::string_view hvp_method_name(HvpMethod m) {
  return m == HvpMethod::kFdOfGrad ? "fd_of_grad" : "double_backward";
}

HvpMethod parse_hvp_method(std::string_view name) {
  if (name == "fd_of_grad") return HvpMethod::kFdOfGrad;
  if (name == "double_backward") return HvpMethod::kDoubleBackward;
  throw ConfigError("unknown hvp method '" + std::string(name) +
                    "' (expected fd_of_grad or double_backward)");
}

ParamVector hvp(const LossFn& fn, const ParamVector& params, const ParamVector& v,
                HvpMethod method) {
  if (!params.same_layout(v)) throw DimensionError("hvp: v does not match params");
  if (!all_finite(v)) throw NumericalError("hvp: direction vector is not finite");

  ParamVector out = params.zeros_like();
  if (method == HvpMethod::kFdOfGrad) {
    const double vmax = norm_inf(v);
    if (vmax == 0.0) return out;
    const double eps = 1e-4 * (1.0 + norm_inf(params));
    const double step = eps / vmax;
    ParamVector plus = params;
    ParamVector minus = params;
    axpy(step, v, plus);
    axpy(-step, v, minus);
    const ParamVector gp = value_and_grad(fn, plus).grad;
    const ParamVector gm = value_and_grad(fn, minus).grad;
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = (gp[i] - gm[i]) / (2.0 * step);
    }
  } else {
    ad::Tape tape;
    const auto leaves = make_leaves(tape, params);
    const ad::Var loss = fn(tape, leaves);
    const auto grads = tape.backward_graph(loss, leaves);
    ad::Var gv;
    for (std::size_t i = 0; i < grads.size(); ++i) {
      const ad::Var term = ad::dot(grads[i], tape.constant(v.entry_tensor(i)));
      gv = gv.valid() ? ad::add(gv, term) : term;
    }
    scatter_grads(tape.backward(gv, leaves), out);
  }
  if (!all_finite(out)) {
    throw NumericalError("hvp (" + std::string(hvp_method_name(method)) +
                         ") produced a non-finite result");
  }
  return out;
}

}  // namespace untrac
