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

#include "untrac/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "untrac/errors.hpp"

namespace untrac::ad {

namespace {

bool is_scalar_shape(const Tensor& t) { return t.size() == 1; }

// Shape of an elementwise result, or throws.
Shape broadcast_shape(const Tensor& a, const Tensor& b, std::string_view op) {
  if (a.shape() == b.shape()) return a.shape();
  if (is_scalar_shape(a)) return b.shape();
  if (is_scalar_shape(b)) return a.shape();
  throw DimensionError(std::string(op) + ": incompatible shapes " +
                       shape_str(a.shape()) + " and " + shape_str(b.shape()));
}

double elem(const Tensor& t, std::size_t i) {
  return is_scalar_shape(t) ? t[0] : t[i];
}

void check_finite(const Tensor& t, Op op) {
  if (!t.all_finite()) {
    throw NumericalError("non-finite value produced by " +
                         std::string(op_name(op)));
  }
}

// acc += g, reducing to a scalar when acc holds a single element and g does not.
void accumulate(Tensor& acc, const Tensor& g) {
  if (acc.size() == g.size()) {
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
  } else if (acc.size() == 1) {
    double s = 0.0;
    for (double v : g.data()) s += v;
    acc[0] += s;
  } else if (g.size() == 1) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[0];
  } else {
    throw DimensionError("gradient accumulation shape mismatch " +
                         shape_str(acc.shape()) + " vs " + shape_str(g.shape()));
  }
}

Tensor softmax_rows_kernel(const Tensor& x) {
  const std::size_t r = x.rows(), c = x.cols();
  Tensor y({r, c});
  for (std::size_t i = 0; i < r; ++i) {
    double mx = x.at(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, x.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double e = std::exp(x.at(i, j) - mx);
      y.at(i, j) = e;
      z += e;
    }
    for (std::size_t j = 0; j < c; ++j) y.at(i, j) /= z;
  }
  return y;
}

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kConstant: return "constant";
    case Op::kMatmul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kMul: return "mul";
    case Op::kScale: return "scale";
    case Op::kTanh: return "tanh";
    case Op::kRelu: return "relu";
    case Op::kSum: return "sum";
    case Op::kGatherRows: return "gather_rows";
    case Op::kScatterAddRows: return "scatter_add_rows";
    case Op::kReshape: return "reshape";
    case Op::kTranspose: return "transpose";
    case Op::kSoftmaxRows: return "softmax_rows";
    case Op::kWeightedCrossEntropy: return "weighted_cross_entropy";
  }
  return "unknown";
}

const Tensor& Var::value() const {
  if (!valid()) throw StateError("use of an unbound Var");
  return tape_->node(id_).value;
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

void Tape::check_owned(Var v, std::string_view op) const {
  if (v.tape_ != this || v.id_ < 0 ||
      static_cast<std::size_t>(v.id_) >= nodes_.size()) {
    throw StateError(std::string(op) + ": Var does not belong to this tape");
  }
}

void Tape::check_loss(Var loss) const {
  if (nodes_.empty()) throw StateError("backward called before any forward pass");
  check_owned(loss, "backward");
  if (node(loss.id_).value.size() != 1) {
    throw StateError("backward requires a scalar loss, got shape " +
                     shape_str(node(loss.id_).value.shape()));
  }
}

Var Tape::leaf(Tensor value) {
  Node n;
  n.op = Op::kLeaf;
  n.requires_grad = true;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = Op::kConstant;
  n.value = std::move(value);
  return push(std::move(n));
}

// --- forward ops ------------------------------------------------------------

namespace {

Tape& tape_of(Var a, Var b, std::string_view op) {
  if (!a.valid() || !b.valid() || a.tape() != b.tape()) {
    throw StateError(std::string(op) + ": operands must live on the same tape");
  }
  return *a.tape();
}

Tape& tape_of(Var a, std::string_view op) {
  if (!a.valid()) throw StateError(std::string(op) + ": unbound Var");
  return *a.tape();
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tape::Node n;
  n.op = Op::kMatmul;
  n.a = a.id();
  n.b = b.id();
  n.requires_grad = t.node(a.id()).requires_grad || t.node(b.id()).requires_grad;
  n.value = untrac::matmul(av, bv);
  check_finite(n.value, n.op);
  return t.push(std::move(n));
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b, "add");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(broadcast_shape(av, bv, "add"));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = elem(av, i) + elem(bv, i);
  Tape::Node n;
  n.op = Op::kAdd;
  n.a = a.id();
  n.b = b.id();
  n.requires_grad = t.node(a.id()).requires_grad || t.node(b.id()).requires_grad;
  n.value = std::move(out);
  check_finite(n.value, n.op);
  return t.push(std::move(n));
}

Var sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b, "mul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(broadcast_shape(av, bv, "mul"));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = elem(av, i) * elem(bv, i);
  Tape::Node n;
  n.op = Op::kMul;
  n.a = a.id();
  n.b = b.id();
  n.requires_grad = t.node(a.id()).requires_grad || t.node(b.id()).requires_grad;
  n.value = std::move(out);
  check_finite(n.value, n.op);
  return t.push(std::move(n));
}

Var scale(Var a, double c) {
  Tape& t = tape_of(a, "scale");
  Tensor out = a.value();
  for (double& v : out.data()) v *= c;
  Tape::Node n;
  n.op = Op::kScale;
  n.a = a.id();
  n.scalar = c;
  n.requires_grad = t.node(a.id()).requires_grad;
  n.value = std::move(out);
  check_finite(n.value, n.op);
  return t.push(std::move(n));
}

Var tanh(Var a) {
  Tape& t = tape_of(a, "tanh");
  Tensor out = a.value();
  for (double& v : out.data()) v = std::tanh(v);
  Tape::Node n;
  n.op = Op::kTanh;
  n.a = a.id();
  n.requires_grad = t.node(a.id()).requires_grad;
  n.value = std::move(out);
  check_finite(n.value, n.op);
  return t.push(std::move(n));
}

Var relu(Var a) {
  Tape& t = tape_of(a, "relu");
  Tensor out = a.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  Tape::Node n;
  n.op = Op::kRelu;
  n.a = a.id();
  n.requires_grad = t.node(a.id()).requires_grad;
  n.value = std::move(out);
  check_finite(n.value, n.op);
  return t.push(std::move(n));
}

Var sum(Var a) {
  Tape& t = tape_of(a, "sum");
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  Tape::Node n;
  n.op = Op::kSum;
  n.a = a.id();
  n.requires_grad = t.node(a.id()).requires_grad;
  n.value = Tensor::scalar(s);
  check_finite(n.value, n.op);
  return t.push(std::move(n));
}

Var dot(Var a, Var b) { return sum(mul(a, b)); }

Var gather_rows(Var table, std::shared_ptr<const std::vector<std::size_t>> indices) {
  Tape& t = tape_of(table, "gather_rows");
  const Tensor& tv = table.value();
  if (tv.rank() != 2) {
    throw DimensionError("gather_rows: table must be a matrix, got " +
                         shape_str(tv.shape()));
  }
  const std::size_t rows = tv.rows(), cols = tv.cols();
  Tensor out({indices->size(), cols});
  for (std::size_t r = 0; r < indices->size(); ++r) {
    const std::size_t src = (*indices)[r];
    if (src >= rows) {
      throw DimensionError("gather_rows: index " + std::to_string(src) +
                           " out of range for " + std::to_string(rows) + " rows");
    }
    std::copy_n(tv.data().data() + src * cols, cols, out.data().data() + r * cols);
  }
  Tape::Node n;
  n.op = Op::kGatherRows;
  n.a = table.id();
  n.indices = std::move(indices);
  n.aux_shape = tv.shape();
  n.requires_grad = t.node(table.id()).requires_grad;
  n.value = std::move(out);
  return t.push(std::move(n));
}

Var gather_rows(Var table, std::vector<std::size_t> indices) {
  return gather_rows(
      table, std::make_shared<const std::vector<std::size_t>>(std::move(indices)));
}

Var scatter_add_rows(Var src, std::shared_ptr<const std::vector<std::size_t>> indices,
                     std::size_t n_rows) {
  Tape& t = tape_of(src, "scatter_add_rows");
  const Tensor& sv = src.value();
  if (sv.rank() != 2 || sv.rows() != indices->size()) {
    throw DimensionError("scatter_add_rows: source " + shape_str(sv.shape()) +
                         " does not match " + std::to_string(indices->size()) +
                         " indices");
  }
  const std::size_t cols = sv.cols();
  Tensor out({n_rows, cols});
  for (std::size_t r = 0; r < indices->size(); ++r) {
    const std::size_t dst = (*indices)[r];
    if (dst >= n_rows) throw DimensionError("scatter_add_rows: index out of range");
    for (std::size_t c = 0; c < cols; ++c) out.at(dst, c) += sv.at(r, c);
  }
  Tape::Node n;
  n.op = Op::kScatterAddRows;
  n.a = src.id();
  n.indices = std::move(indices);
  n.requires_grad = t.node(src.id()).requires_grad;
  n.value = std::move(out);
  return t.push(std::move(n));
}

Var reshape(Var a, Shape shape) {
  Tape& t = tape_of(a, "reshape");
  Tape::Node n;
  n.op = Op::kReshape;
  n.a = a.id();
  n.aux_shape = a.value().shape();
  n.requires_grad = t.node(a.id()).requires_grad;
  n.value = a.value().reshaped(std::move(shape));
  return t.push(std::move(n));
}

Var transpose(Var a) {
  Tape& t = tape_of(a, "transpose");
  Tape::Node n;
  n.op = Op::kTranspose;
  n.a = a.id();
  n.requires_grad = t.node(a.id()).requires_grad;
  n.value = untrac::transpose(a.value());
  return t.push(std::move(n));
}

Var softmax_rows(Var logits) {
  Tape& t = tape_of(logits, "softmax_rows");
  if (logits.value().rank() != 2) {
    throw DimensionError("softmax_rows: expected matrix, got " +
                         shape_str(logits.value().shape()));
  }
  Tape::Node n;
  n.op = Op::kSoftmaxRows;
  n.a = logits.id();
  n.requires_grad = t.node(logits.id()).requires_grad;
  n.value = softmax_rows_kernel(logits.value());
  check_finite(n.value, n.op);
  return t.push(std::move(n));
}

Var weighted_cross_entropy(Var logits,
                           std::shared_ptr<const std::vector<std::size_t>> targets,
                           std::shared_ptr<const std::vector<double>> weights) {
  Tape& t = tape_of(logits, "weighted_cross_entropy");
  const Tensor& x = logits.value();
  if (x.rank() != 2 || x.rows() != targets->size() ||
      weights->size() != targets->size()) {
    throw DimensionError("weighted_cross_entropy: logits " + shape_str(x.shape()) +
                         " with " + std::to_string(targets->size()) + " targets and " +
                         std::to_string(weights->size()) + " weights");
  }
  const std::size_t r = x.rows(), c = x.cols();
  Tensor probs({r, c});
  double loss = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t tgt = (*targets)[i];
    if (tgt >= c) {
      throw DimensionError("weighted_cross_entropy: target " + std::to_string(tgt) +
                           " outside vocabulary of " + std::to_string(c));
    }
    double mx = x.at(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, x.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double e = std::exp(x.at(i, j) - mx);
      probs.at(i, j) = e;
      z += e;
    }
    for (std::size_t j = 0; j < c; ++j) probs.at(i, j) /= z;
    const double logsumexp = mx + std::log(z);
    loss += (*weights)[i] * (logsumexp - x.at(i, tgt));
  }
  Tape::Node n;
  n.op = Op::kWeightedCrossEntropy;
  n.a = logits.id();
  n.indices = std::move(targets);
  n.weights = std::move(weights);
  n.requires_grad = t.node(logits.id()).requires_grad;
  n.value = Tensor::scalar(loss);
  n.cache = std::move(probs);
  check_finite(n.value, n.op);
  return t.push(std::move(n));
}

Var softmax_cross_entropy(Var logits, std::span<const std::size_t> targets,
                          std::span<const int> mask) {
  if (targets.size() != mask.size()) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(targets.size()) +
                         " targets but mask of length " + std::to_string(mask.size()));
  }
  std::size_t active = 0;
  for (int m : mask) active += (m != 0);
  if (active == 0) {
    throw DegenerateBatchError("softmax_cross_entropy: loss mask selects no position");
  }
  auto w = std::make_shared<std::vector<double>>(mask.size(), 0.0);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    (*w)[i] = mask[i] ? 1.0 / static_cast<double>(active) : 0.0;
  }
  auto tg = std::make_shared<const std::vector<std::size_t>>(targets.begin(),
                                                             targets.end());
  return weighted_cross_entropy(logits, std::move(tg), std::move(w));
}

Var elementwise(Elementwise op, std::span<const Var> args, double factor) {
  const std::size_t need =
      (op == Elementwise::kAdd || op == Elementwise::kMul) ? 2 : 1;
  if (args.size() != need) {
    throw DimensionError("elementwise: expected " + std::to_string(need) +
                         " operands, got " + std::to_string(args.size()));
  }
  switch (op) {
    case Elementwise::kAdd: return add(args[0], args[1]);
    case Elementwise::kMul: return mul(args[0], args[1]);
    case Elementwise::kTanh: return tanh(args[0]);
    case Elementwise::kRelu: return relu(args[0]);
    case Elementwise::kScale: return scale(args[0], factor);
  }
  throw DimensionError("elementwise: unknown op");
}

// --- backward ---------------------------------------------------------------

std::vector<Tensor> Tape::backward(Var loss, std::span<const Var> wrt) {
  check_loss(loss);
  for (const Var& v : wrt) check_owned(v, "backward");

  const std::size_t top = static_cast<std::size_t>(loss.id_);
  std::vector<Tensor> grads(top + 1);
  std::vector<bool> has(top + 1, false);
  grads[top] = Tensor::full(node(loss.id_).value.shape(), 1.0);
  has[top] = true;

  auto grad_for = [&](int id) -> Tensor& {
    const auto i = static_cast<std::size_t>(id);
    if (!has[i]) {
      grads[i] = Tensor(node(id).value.shape());
      has[i] = true;
    }
    return grads[i];
  };

  for (std::size_t idx = top + 1; idx-- > 0;) {
    if (!has[idx]) continue;
    const Node& n = nodes_[idx];
    if (!n.requires_grad) continue;
    const Tensor& g = grads[idx];
    auto needs = [&](int id) { return id >= 0 && node(id).requires_grad; };

    switch (n.op) {
      case Op::kLeaf:
      case Op::kConstant:
        break;
      case Op::kMatmul: {
        const Tensor& av = node(n.a).value;
        const Tensor& bv = node(n.b).value;
        if (needs(n.a)) accumulate(grad_for(n.a), untrac::matmul(g, untrac::transpose(bv)));
        if (needs(n.b)) accumulate(grad_for(n.b), untrac::matmul(untrac::transpose(av), g));
        break;
      }
      case Op::kAdd:
        if (needs(n.a)) accumulate(grad_for(n.a), g);
        if (needs(n.b)) accumulate(grad_for(n.b), g);
        break;
      case Op::kMul: {
        const Tensor& av = node(n.a).value;
        const Tensor& bv = node(n.b).value;
        if (needs(n.a)) {
          Tensor ga(g.shape());
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * elem(bv, i);
          accumulate(grad_for(n.a), ga);
        }
        if (needs(n.b)) {
          Tensor gb(g.shape());
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * elem(av, i);
          accumulate(grad_for(n.b), gb);
        }
        break;
      }
      case Op::kScale: {
        Tensor& ga = grad_for(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.scalar * g[i];
        break;
      }
      case Op::kTanh: {
        Tensor& ga = grad_for(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double y = n.value[i];
          ga[i] += g[i] * (1.0 - y * y);
        }
        break;
      }
      case Op::kRelu: {
        const Tensor& x = node(n.a).value;
        Tensor& ga = grad_for(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (x[i] > 0.0) ga[i] += g[i];
        }
        break;
      }
      case Op::kSum: {
        Tensor& ga = grad_for(n.a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
        break;
      }
      case Op::kGatherRows: {
        Tensor& ga = grad_for(n.a);
        const std::size_t cols = ga.cols();
        for (std::size_t r = 0; r < n.indices->size(); ++r) {
          const std::size_t dst = (*n.indices)[r];
          for (std::size_t c = 0; c < cols; ++c) ga.at(dst, c) += g.at(r, c);
        }
        break;
      }
      case Op::kScatterAddRows: {
        Tensor& ga = grad_for(n.a);
        const std::size_t cols = ga.cols();
        for (std::size_t r = 0; r < n.indices->size(); ++r) {
          const std::size_t src = (*n.indices)[r];
          for (std::size_t c = 0; c < cols; ++c) ga.at(r, c) += g.at(src, c);
        }
        break;
      }
      case Op::kReshape: {
        Tensor& ga = grad_for(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        break;
      }
      case Op::kTranspose:
        accumulate(grad_for(n.a), untrac::transpose(g));
        break;
      case Op::kSoftmaxRows: {
        Tensor& ga = grad_for(n.a);
        const Tensor& y = n.value;
        const std::size_t rows = y.rows(), cols = y.cols();
        for (std::size_t r = 0; r < rows; ++r) {
          double s = 0.0;
          for (std::size_t c = 0; c < cols; ++c) s += g.at(r, c) * y.at(r, c);
          for (std::size_t c = 0; c < cols; ++c) {
            ga.at(r, c) += y.at(r, c) * (g.at(r, c) - s);
          }
        }
        break;
      }
      case Op::kWeightedCrossEntropy: {
        Tensor& ga = grad_for(n.a);
        const Tensor& p = n.cache;
        const std::size_t rows = p.rows(), cols = p.cols();
        const double gs = g[0];
        for (std::size_t r = 0; r < rows; ++r) {
          const double w = (*n.weights)[r] * gs;
          if (w == 0.0) continue;
          for (std::size_t c = 0; c < cols; ++c) ga.at(r, c) += w * p.at(r, c);
          ga.at(r, (*n.indices)[r]) -= w;
        }
        break;
      }
    }
  }

  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (const Var& v : wrt) {
    const auto i = static_cast<std::size_t>(v.id_);
    if (i <= top && has[i]) {
      out.push_back(grads[i]);
    } else {
      out.emplace_back(node(v.id_).value.shape());
    }
  }
  return out;
}

std::vector<Var> Tape::backward_graph(Var loss, std::span<const Var> wrt) {
  check_loss(loss);
  for (const Var& v : wrt) check_owned(v, "backward_graph");

  const std::size_t top = static_cast<std::size_t>(loss.id_);
  std::vector<Var> grads(top + 1);
  grads[top] = constant(Tensor::full(node(loss.id_).value.shape(), 1.0));

  auto accumulate_var = [&](int id, Var g) {
    auto& slot = grads[static_cast<std::size_t>(id)];
    if (!slot.valid()) {
      // Reduce to a scalar when the operand was a broadcast scalar.
      if (node(id).value.size() == 1 && g.value().size() != 1) g = sum(g);
      slot = g;
    } else {
      if (node(id).value.size() == 1 && g.value().size() != 1) g = sum(g);
      slot = add(slot, g);
    }
  };

  for (std::size_t idx = top + 1; idx-- > 0;) {
    if (!grads[idx].valid()) continue;
    // Copy what we need: push() below may reallocate nodes_.
    const Op op = nodes_[idx].op;
    const int a = nodes_[idx].a;
    const int b = nodes_[idx].b;
    if (!nodes_[idx].requires_grad) continue;
    const Var g = grads[idx];
    const Var self(this, static_cast<int>(idx));
    auto needs = [&](int id) { return id >= 0 && node(id).requires_grad; };

    switch (op) {
      case Op::kLeaf:
      case Op::kConstant:
        break;
      case Op::kMatmul:
        if (needs(a)) accumulate_var(a, ad::matmul(g, ad::transpose(Var(this, b))));
        if (needs(b)) accumulate_var(b, ad::matmul(ad::transpose(Var(this, a)), g));
        break;
      case Op::kAdd:
        if (needs(a)) accumulate_var(a, g);
        if (needs(b)) accumulate_var(b, g);
        break;
      case Op::kMul:
        if (needs(a)) accumulate_var(a, ad::mul(g, Var(this, b)));
        if (needs(b)) accumulate_var(b, ad::mul(g, Var(this, a)));
        break;
      case Op::kScale:
        accumulate_var(a, ad::scale(g, nodes_[idx].scalar));
        break;
      case Op::kTanh: {
        const Var one = constant(Tensor::scalar(1.0));
        const Var dy = ad::add(one, ad::scale(ad::mul(self, self), -1.0));
        accumulate_var(a, ad::mul(g, dy));
        break;
      }
      case Op::kRelu: {
        Tensor mask(node(a).value.shape());
        for (std::size_t i = 0; i < mask.size(); ++i) {
          mask[i] = node(a).value[i] > 0.0 ? 1.0 : 0.0;
        }
        accumulate_var(a, ad::mul(g, constant(std::move(mask))));
        break;
      }
      case Op::kSum: {
        const Var ones = constant(Tensor::full(node(a).value.shape(), 1.0));
        accumulate_var(a, ad::mul(g, ones));
        break;
      }
      case Op::kGatherRows: {
        auto ind = nodes_[idx].indices;
        const std::size_t rows = nodes_[idx].aux_shape[0];
        accumulate_var(a, ad::scatter_add_rows(g, ind, rows));
        break;
      }
      case Op::kScatterAddRows: {
        auto ind = nodes_[idx].indices;
        accumulate_var(a, ad::gather_rows(g, ind));
        break;
      }
      case Op::kReshape: {
        Shape s = nodes_[idx].aux_shape;
        accumulate_var(a, ad::reshape(g, std::move(s)));
        break;
      }
      case Op::kTranspose:
        accumulate_var(a, ad::transpose(g));
        break;
      case Op::kSoftmaxRows: {
        // y * (g - rowsum(g * y) 1^T), with row sums as matmuls by ones.
        const std::size_t cols = nodes_[idx].value.cols();
        const Var col_ones = constant(Tensor::full({cols, 1}, 1.0));
        const Var row_ones = constant(Tensor::full({1, cols}, 1.0));
        const Var s = ad::matmul(ad::matmul(ad::mul(g, self), col_ones), row_ones);
        accumulate_var(a, ad::mul(self, ad::sub(g, s)));
        break;
      }
      case Op::kWeightedCrossEntropy: {
        auto targets = nodes_[idx].indices;
        auto weights = nodes_[idx].weights;
        const Shape shp = node(a).value.shape();
        Tensor neg_onehot(shp);
        Tensor wmat(shp);
        for (std::size_t r = 0; r < shp[0]; ++r) {
          neg_onehot.at(r, (*targets)[r]) = -1.0;
          for (std::size_t c = 0; c < shp[1]; ++c) wmat.at(r, c) = (*weights)[r];
        }
        const Var p = ad::softmax_rows(Var(this, a));
        const Var d = ad::mul(ad::add(p, constant(std::move(neg_onehot))),
                              constant(std::move(wmat)));
        accumulate_var(a, ad::mul(g, d));
        break;
      }
    }
  }

  std::vector<Var> out;
  out.reserve(wrt.size());
  for (const Var& v : wrt) {
    const auto i = static_cast<std::size_t>(v.id_);
    if (i <= top && grads[i].valid()) {
      out.push_back(grads[i]);
    } else {
      out.push_back(constant(Tensor(node(v.id_).value.shape())));
    }
  }
  return out;
}

}  // namespace untrac::ad
