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

#include <stdexcept>
#include <string>

namespace untrac {

// Every error thrown by the library derives from Error. The subclasses map
// onto the CLI exit-code classes (see exit_code_for in experiment.hpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape mismatch in a tensor operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A batch with nothing to average over (empty, or an all-zero loss mask).
class DegenerateBatchError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced where finite values were required, or an iterative
// method diverged.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// API misuse such as backward() on a tape with no recorded forward pass.
class StateError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration or arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or mismatched files (checkpoints, datasets, manifests).
class FormatError : public Error {
 public:
  using Error::Error;
};

// A pipeline stage requires artifacts that do not exist yet.
class DependencyError : public Error {
 public:
  using Error::Error;
};

// A statistic that is undefined for the given input (zero variance, ...).
class UndefinedStatisticError : public Error {
 public:
  using Error::Error;
};

}  // namespace untrac
