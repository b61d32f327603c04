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

// Define-by-run reverse-mode automatic differentiation.
//
// A Tape records every operation applied to Vars created from it. Calling
// backward() on a scalar Var walks the record once in reverse topological
// order (the recording order) and returns exact gradients. backward_graph()
// records the backward pass itself onto the tape so the result can be
// differentiated again (used for double-backward Hessian-vector products).
//
// A tape is single-threaded. Build a fresh one per forward pass.

#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "untrac/tensor.hpp"

namespace untrac::ad {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
// owning tape is alive.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr && id_ >= 0; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

enum class Op {
  kLeaf,
  kConstant,
  kMatmul,
  kAdd,
  kMul,
  kScale,
  kTanh,
  kRelu,
  kSum,
  kGatherRows,
  kScatterAddRows,
  kReshape,
  kTranspose,
  kSoftmaxRows,
  kWeightedCrossEntropy,
};

std::string_view op_name(Op op);

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Differentiable input.
  Var leaf(Tensor value);
  // Non-differentiable input.
  Var constant(Tensor value);

  std::size_t size() const { return nodes_.size(); }

  // Gradients of the scalar `loss` with respect to each Var in `wrt`.
  // Inputs that do not influence `loss` get zero tensors.
  std::vector<Tensor> backward(Var loss, std::span<const Var> wrt);

  // As backward(), but the gradient computation is recorded on this tape and
  // the results are differentiable Vars.
  std::vector<Var> backward_graph(Var loss, std::span<const Var> wrt);

 private:
  struct Node {
    Op op = Op::kConstant;
    int a = -1;
    int b = -1;
    bool requires_grad = false;
    double scalar = 0.0;
    Tensor value;
    std::shared_ptr<const std::vector<std::size_t>> indices;
    std::shared_ptr<const std::vector<double>> weights;
    Shape aux_shape;
    Tensor cache;
  };

  Var push(Node node);
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  void check_owned(Var v, std::string_view op) const;
  void check_loss(Var loss) const;

  std::vector<Node> nodes_;

  friend const Tensor& Var::value() const;
  friend Var matmul(Var, Var);
  friend Var add(Var, Var);
  friend Var mul(Var, Var);
  friend Var scale(Var, double);
  friend Var tanh(Var);
  friend Var relu(Var);
  friend Var sum(Var);
  friend Var gather_rows(Var, std::shared_ptr<const std::vector<std::size_t>>);
  friend Var scatter_add_rows(Var, std::shared_ptr<const std::vector<std::size_t>>,
                              std::size_t);
  friend Var reshape(Var, Shape);
  friend Var transpose(Var);
  friend Var softmax_rows(Var);
  friend Var weighted_cross_entropy(Var, std::shared_ptr<const std::vector<std::size_t>>,
                                    std::shared_ptr<const std::vector<double>>);
};

// --- Operations -----------------------------------------------------------
// Elementwise binary ops accept same-shape operands, or a scalar (one
// element) with a tensor. Anything else throws DimensionError.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var tanh(Var a);
Var relu(Var a);
Var sum(Var a);
Var dot(Var a, Var b);

// out[r, :] = table[indices[r], :]
Var gather_rows(Var table, std::shared_ptr<const std::vector<std::size_t>> indices);
Var gather_rows(Var table, std::vector<std::size_t> indices);
// out = zeros(n_rows, cols); out[indices[r], :] += src[r, :]
Var scatter_add_rows(Var src, std::shared_ptr<const std::vector<std::size_t>> indices,
                     std::size_t n_rows);

Var reshape(Var a, Shape shape);
Var transpose(Var a);
Var softmax_rows(Var logits);

// sum_r weights[r] * -log softmax(logits[r, :])[targets[r]]
Var weighted_cross_entropy(Var logits,
                           std::shared_ptr<const std::vector<std::size_t>> targets,
                           std::shared_ptr<const std::vector<double>> weights);

// Mean over rows with mask == 1 of -log softmax(logits)[target].
// Throws DegenerateBatchError when the mask selects nothing.
Var softmax_cross_entropy(Var logits, std::span<const std::size_t> targets,
                          std::span<const int> mask);

enum class Elementwise { kAdd, kMul, kTanh, kRelu, kScale };

// Dispatcher over the elementwise family. Binary ops take two args; unary
// ops take one; kScale uses `factor`.
Var elementwise(Elementwise op, std::span<const Var> args, double factor = 1.0);

}  // namespace untrac::ad
