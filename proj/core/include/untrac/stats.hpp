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
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace untrac {

// Sample Pearson r. Throws UndefinedStatisticError for length < 2, unequal
// lengths, or zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

// 1-based ranks; tied values share their average rank.
std::vector<double> average_ranks(std::span<const double> x);

// Pearson of average ranks.
double spearman(std::span<const double> a, std::span<const double> b);

// (x - mean) / population std. Throws UndefinedStatisticError for length < 2
// or zero variance.
std::vector<double> standardize(std::span<const double> x);

double mean(std::span<const double> x);
// Population standard deviation.
double stddev(std::span<const double> x);

enum class Metric { kPearson, kSpearman };

std::string_view metric_name(Metric m);
Metric parse_metric(std::string_view name);
double correlate(Metric m, std::span<const double> a, std::span<const double> b);

// scores[subset][train_dataset]
using ScoreTable = std::vector<std::vector<double>>;

struct CorrelationReport {
  std::string method;
  Metric metric = Metric::kPearson;
  // values[run][subset]
  std::vector<std::vector<double>> values;
  double mean = 0.0;
  double std = 0.0;  // population, over every (run, subset) value
  std::size_t n_runs = 0;
  std::size_t n_subsets = 0;
};

// Correlation across training datasets for each subset of each run, then
// mean and std over all of them. Throws ConfigError on a shape mismatch.
CorrelationReport subset_correlations(const std::vector<ScoreTable>& method_runs,
                                      const std::vector<ScoreTable>& truth_runs,
                                      Metric metric, const std::string& method = {});

}  // namespace untrac
