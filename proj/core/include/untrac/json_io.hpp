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

// nlohmann::json conversions for the configuration structs. Missing keys
// keep their defaults; unknown keys are rejected so typos surface as
// ConfigError instead of silently running the default.

#pragma once

#include <initializer_list>
#include <string>

#include <nlohmann/json.hpp>

#include "untrac/attribution.hpp"
#include "untrac/ground_truth.hpp"
#include "untrac/model.hpp"
#include "untrac/optim.hpp"
#include "untrac/param_vector.hpp"
#include "untrac/stats.hpp"
#include "untrac/training.hpp"

namespace untrac {

// Throws ConfigError if `j` is not an object or has a key outside `allowed`.
void require_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                  const std::string& where);

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

void to_json(nlohmann::json& j, const Layout& l);
void from_json(const nlohmann::json& j, Layout& l);

void to_json(nlohmann::json& j, const OptimizerConfig& c);
void from_json(const nlohmann::json& j, OptimizerConfig& c);

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

void to_json(nlohmann::json& j, const UnlearnConfig& c);
void from_json(const nlohmann::json& j, UnlearnConfig& c);

// Non-finite values (diverged runs) are written as null and read back as NaN.
void to_json(nlohmann::json& j, const InfluenceScore& s);
void from_json(const nlohmann::json& j, InfluenceScore& s);

void to_json(nlohmann::json& j, const GroundTruthRecord& r);
void from_json(const nlohmann::json& j, GroundTruthRecord& r);

void to_json(nlohmann::json& j, const CorrelationReport& r);

nlohmann::json finite_or_null(double v);
double number_or_nan(const nlohmann::json& j);

}  // namespace untrac
