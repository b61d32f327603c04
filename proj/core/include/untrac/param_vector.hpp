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

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "untrac/tensor.hpp"

namespace untrac {

struct LayoutEntry {
  std::string name;
  Shape shape;
  std::size_t offset = 0;
  std::size_t size = 0;

  bool operator==(const LayoutEntry&) const = default;
};

// Ordered manifest of named tensors packed into one flat array. Offsets are
// contiguous and cover [0, total_size()) exactly.
class Layout {
 public:
  Layout() = default;
  explicit Layout(std::vector<std::pair<std::string, Shape>> tensors);

  const std::vector<LayoutEntry>& entries() const { return entries_; }
  std::size_t total_size() const { return total_; }
  const LayoutEntry& find(std::string_view name) const;

  bool operator==(const Layout& other) const { return entries_ == other.entries_; }

 private:
  std::vector<LayoutEntry> entries_;
  std::size_t total_ = 0;
};

// Flat, ordered view of all model parameters (or anything shaped like them:
// gradients, optimizer moments, search directions).
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::shared_ptr<const Layout> layout);
  ParamVector(std::shared_ptr<const Layout> layout, std::vector<double> values);

  // Layout-free vector of the given length (single entry named "theta").
  static ParamVector flat(std::vector<double> values);

  const Layout& layout() const { return *layout_; }
  const std::shared_ptr<const Layout>& layout_ptr() const { return layout_; }
  std::size_t size() const { return values_.size(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<const double> entry(std::size_t i) const;
  std::span<double> entry(std::size_t i);
  std::span<const double> entry(std::string_view name) const;
  Tensor entry_tensor(std::size_t i) const;

  bool same_layout(const ParamVector& other) const;
  bool operator==(const ParamVector& other) const {
    return same_layout(other) && values_ == other.values_;
  }

  ParamVector zeros_like() const { return ParamVector(layout_); }

 private:
  std::shared_ptr<const Layout> layout_;
  std::vector<double> values_;
};

// Vector algebra. All binary operations require matching layouts.
double dot(const ParamVector& a, const ParamVector& b);
double norm2(const ParamVector& a);
double norm_inf(const ParamVector& a);
bool all_finite(const ParamVector& a);
// y += alpha * x
void axpy(double alpha, const ParamVector& x, ParamVector& y);
ParamVector operator+(const ParamVector& a, const ParamVector& b);
ParamVector operator-(const ParamVector& a, const ParamVector& b);
ParamVector operator*(double s, const ParamVector& a);

}  // namespace untrac
