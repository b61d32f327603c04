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

#include "untrac/param_vector.hpp"

#include <algorithm>
#include <cmath>

#include "untrac/errors.hpp"

namespace untrac {

Layout::Layout(std::vector<std::pair<std::string, Shape>> tensors) {
  entries_.reserve(tensors.size());
  for (auto& [name, shape] : tensors) {
    LayoutEntry e;
    e.name = std::move(name);
    e.size = shape_numel(shape);
    e.shape = std::move(shape);
    e.offset = total_;
    total_ += e.size;
    entries_.push_back(std::move(e));
  }
}

const LayoutEntry& Layout::find(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e;
  }
  throw ConfigError("layout has no tensor named '" + std::string(name) + "'");
}

ParamVector::ParamVector(std::shared_ptr<const Layout> layout)
    : layout_(std::move(layout)), values_(layout_->total_size(), 0.0) {}

ParamVector::ParamVector(std::shared_ptr<const Layout> layout,
                         std::vector<double> values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  if (values_.size() != layout_->total_size()) {
    throw DimensionError("parameter vector of length " +
                         std::to_string(values_.size()) + " does not match layout size " +
                         std::to_string(layout_->total_size()));
  }
}

ParamVector ParamVector::flat(std::vector<double> values) {
  auto layout = std::make_shared<const Layout>(
      std::vector<std::pair<std::string, Shape>>{{"theta", {values.size()}}});
  return ParamVector(std::move(layout), std::move(values));
}

std::span<const double> ParamVector::entry(std::size_t i) const {
  const auto& e = layout_->entries().at(i);
  return std::span<const double>(values_).subspan(e.offset, e.size);
}

std::span<double> ParamVector::entry(std::size_t i) {
  const auto& e = layout_->entries().at(i);
  return std::span<double>(values_).subspan(e.offset, e.size);
}

std::span<const double> ParamVector::entry(std::string_view name) const {
  const auto& e = layout_->find(name);
  return std::span<const double>(values_).subspan(e.offset, e.size);
}

Tensor ParamVector::entry_tensor(std::size_t i) const {
  const auto& e = layout_->entries().at(i);
  auto s = entry(i);
  return Tensor(e.shape, std::vector<double>(s.begin(), s.end()));
}

bool ParamVector::same_layout(const ParamVector& other) const {
  if (layout_ == other.layout_) return true;
  if (!layout_ || !other.layout_) return false;
  return *layout_ == *other.layout_;
}

namespace {

void require_same(const ParamVector& a, const ParamVector& b, const char* op) {
  if (a.size() != b.size() || !a.same_layout(b)) {
    throw DimensionError(std::string(op) + ": parameter layouts differ (" +
                         std::to_string(a.size()) + " vs " + std::to_string(b.size()) +
                         " values)");
  }
}

}  // namespace

double dot(const ParamVector& a, const ParamVector& b) {
  require_same(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(const ParamVector& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

double norm_inf(const ParamVector& a) {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

bool all_finite(const ParamVector& a) {
  for (double v : a.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void axpy(double alpha, const ParamVector& x, ParamVector& y) {
  require_same(x, y, "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

ParamVector operator+(const ParamVector& a, const ParamVector& b) {
  require_same(a, b, "add");
  ParamVector out = a;
  for (std::size_t i = 0; i < a.size(); ++i) out[i] += b[i];
  return out;
}

ParamVector operator-(const ParamVector& a, const ParamVector& b) {
  require_same(a, b, "sub");
  ParamVector out = a;
  for (std::size_t i = 0; i < a.size(); ++i) out[i] -= b[i];
  return out;
}

ParamVector operator*(double s, const ParamVector& a) {
  ParamVector out = a;
  for (double& v : out.values()) v *= s;
  return out;
}

}  // namespace untrac
