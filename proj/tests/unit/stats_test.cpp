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

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "untrac/errors.hpp"
#include "untrac/stats.hpp"

namespace untrac {
namespace {

using V = std::vector<double>;

V random_vector(std::mt19937_64& gen, std::size_t n) {
  std::normal_distribution<double> dist;
  V v(n);
  for (double& x : v) x = dist(gen);
  return v;
}

TEST(Pearson, Examples) {
  EXPECT_NEAR(pearson(V{1, 2, 3}, V{2, 4, 6}), 1.0, 1e-15);
  EXPECT_NEAR(pearson(V{1, 2, 3}, V{6, 4, 2}), -1.0, 1e-15);
  EXPECT_NEAR(pearson(V{1, 2, 3, 4}, V{1, 3, 2, 4}), 0.8, 1e-15);
}

TEST(Pearson, UndefinedInputs) {
  EXPECT_THROW(pearson(V{1}, V{2}), UndefinedStatisticError);
  EXPECT_THROW(pearson(V{1, 2}, V{1, 2, 3}), UndefinedStatisticError);
  EXPECT_THROW(pearson(V{1, 1, 1}, V{1, 2, 3}), UndefinedStatisticError);
}

TEST(Spearman, Examples) {
  EXPECT_NEAR(spearman(V{1, 2, 3}, V{2, 4, 6}), 1.0, 1e-15);
  EXPECT_NEAR(spearman(V{1, 2, 3}, V{30, 20, 10}), -1.0, 1e-15);
  EXPECT_NEAR(spearman(V{1, 2, 3, 4}, V{1, 3, 2, 4}), 0.8, 1e-15);
  EXPECT_NEAR(spearman(V{1, 2, 3, 4}, V{1, 100, 1000, 1e6}), 1.0, 1e-15);
}

TEST(AverageRanks, TiesShareTheirMeanRank) {
  EXPECT_EQ(average_ranks(V{1, 2, 2, 3}), (V{1, 2.5, 2.5, 4}));
  EXPECT_EQ(average_ranks(V{5, 5, 5}), (V{2, 2, 2}));
  EXPECT_EQ(average_ranks(V{3, 1, 2}), (V{3, 1, 2}));
  // Ranks [1, 2.5, 2.5, 4] against [1, 2, 3, 4].
  EXPECT_NEAR(spearman(V{1, 2, 2, 3}, V{1, 2, 3, 4}), 4.5 / std::sqrt(4.5 * 5.0), 1e-15);
}

TEST(Standardize, Example) {
  const V z = standardize(V{10, 20, 30});
  EXPECT_NEAR(z[0], -std::sqrt(1.5), 1e-15);
  EXPECT_NEAR(z[1], 0.0, 1e-15);
  EXPECT_NEAR(z[2], std::sqrt(1.5), 1e-15);
  EXPECT_THROW(standardize(V{2, 2}), UndefinedStatisticError);
  EXPECT_THROW(standardize(V{2}), UndefinedStatisticError);
}

TEST(Moments, PopulationStd) {
  EXPECT_DOUBLE_EQ(mean(V{1, 2, 3, 4}), 2.5);
  EXPECT_DOUBLE_EQ(stddev(V{1, 2, 3, 4}), std::sqrt(1.25));
}

TEST(StatsProperty, StandardizeIsIdempotentAndKeepsTheArgmax) {
  std::mt19937_64 gen(1);
  for (int trial = 0; trial < 100; ++trial) {
    const V x = random_vector(gen, 2 + trial % 7);
    const V z = standardize(x);
    const V zz = standardize(z);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(zz[i], z[i], 1e-12);
    EXPECT_NEAR(mean(z), 0.0, 1e-12);
    EXPECT_NEAR(stddev(z), 1.0, 1e-12);
    EXPECT_EQ(std::max_element(z.begin(), z.end()) - z.begin(),
              std::max_element(x.begin(), x.end()) - x.begin());
  }
}

TEST(StatsProperty, PearsonIsAffineInvariant) {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 3 + trial % 6;
    const V a = random_vector(gen, n);
    const V b = random_vector(gen, n);
    const double s = scale(gen);
    const double shift = scale(gen) - 5.0;
    V b2 = b;
    for (double& x : b2) x = s * x + shift;
    const double r = pearson(a, b);
    EXPECT_NEAR(pearson(a, b2), r, 1e-12);
    for (double& x : b2) x = -x;
    EXPECT_NEAR(pearson(a, b2), -r, 1e-12);
    EXPECT_NEAR(pearson(a, b), pearson(b, a), 1e-15);
    EXPECT_LE(std::abs(r), 1.0 + 1e-15);
  }
}

TEST(StatsProperty, SpearmanIsInvariantToMonotoneTransforms) {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 3 + trial % 6;
    const V a = random_vector(gen, n);
    const V b = random_vector(gen, n);
    V b2 = b;
    for (double& x : b2) x = std::exp(x) + x * x * x;
    EXPECT_NEAR(spearman(a, b2), spearman(a, b), 1e-12);
    EXPECT_NEAR(spearman(a, average_ranks(b)), spearman(a, b), 1e-12);
  }
}

TEST(Metric, NamesRoundTrip) {
  for (Metric m : {Metric::kPearson, Metric::kSpearman}) EXPECT_EQ(parse_metric(metric_name(m)), m);
  EXPECT_THROW(parse_metric("kendall"), ConfigError);
  EXPECT_EQ(correlate(Metric::kSpearman, V{1, 2, 3, 4}, V{1, 3, 2, 4}), spearman(V{1, 2, 3, 4}, V{1, 3, 2, 4}));
}

TEST(SubsetCorrelations, IdenticalAndNegated) {
  const std::vector<ScoreTable> truth = {{{1, 2, 3, 4}, {4, 1, 2, 3}}, {{0, 1, 0.5, 2}, {3, 2, 1, 0}}};
  std::vector<ScoreTable> neg = truth;
  for (ScoreTable& t : neg) {
    for (auto& row : t) {
      for (double& x : row) x = -x;
    }
  }
  for (Metric m : {Metric::kPearson, Metric::kSpearman}) {
    const CorrelationReport same = subset_correlations(truth, truth, m, "x");
    EXPECT_EQ(same.n_runs, 2u);
    EXPECT_EQ(same.n_subsets, 2u);
    EXPECT_NEAR(same.mean, 1.0, 1e-12);
    EXPECT_NEAR(same.std, 0.0, 1e-12);
    EXPECT_EQ(same.method, "x");
    const CorrelationReport opp = subset_correlations(neg, truth, m);
    EXPECT_NEAR(opp.mean, -1.0, 1e-12);
  }
}

TEST(SubsetCorrelations, MeanAndStdOverEveryRunAndSubset) {
  const std::vector<ScoreTable> truth = {{{1, 2, 3, 4}, {1, 2, 3, 4}}, {{1, 2, 3, 4}, {1, 2, 3, 4}}};
  const std::vector<ScoreTable> method = {{{1, 2, 3, 4}, {1, 3, 2, 4}}, {{4, 3, 2, 1}, {1, 3, 2, 4}}};
  const CorrelationReport r = subset_correlations(method, truth, Metric::kSpearman);
  ASSERT_EQ(r.values.size(), 2u);
  EXPECT_NEAR(r.values[0][0], 1.0, 1e-15);
  EXPECT_NEAR(r.values[0][1], 0.8, 1e-15);
  EXPECT_NEAR(r.values[1][0], -1.0, 1e-15);
  const V all = {1.0, 0.8, -1.0, 0.8};
  EXPECT_NEAR(r.mean, mean(all), 1e-15);
  EXPECT_NEAR(r.std, stddev(all), 1e-15);
}

TEST(SubsetCorrelations, ShapeMismatchIsAConfigError) {
  const std::vector<ScoreTable> a = {{{1, 2, 3}}};
  const std::vector<ScoreTable> b = {{{1, 2, 3}, {1, 2, 3}}};
  EXPECT_THROW(subset_correlations(a, b, Metric::kPearson), ConfigError);
  EXPECT_THROW(subset_correlations(a, {}, Metric::kPearson), ConfigError);
  const std::vector<ScoreTable> c = {{{1, 2}}};
  EXPECT_THROW(subset_correlations(a, c, Metric::kPearson), ConfigError);
}

TEST(SubsetCorrelations, ConstantScoresAreUndefined) {
  const std::vector<ScoreTable> a = {{{1, 1, 1}}};
  const std::vector<ScoreTable> b = {{{1, 2, 3}}};
  EXPECT_THROW(subset_correlations(a, b, Metric::kPearson), UndefinedStatisticError);
}

}  // namespace
}  // namespace untrac
