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

#include "untrac/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "untrac/errors.hpp"

namespace untrac {

double mean(std::span<const double> x) {
  if (x.empty()) throw UndefinedStatisticError("mean of an empty list");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double stddev(std::span<const double> x) {
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size()));
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw UndefinedStatisticError("pearson: lengths differ");
  if (a.size() < 2) throw UndefinedStatisticError("pearson: need at least 2 values");
  const double ma = mean(a), mb = mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) {
    throw UndefinedStatisticError("pearson: correlation with a constant vector is undefined");
  }
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
  std::vector<double> r(x.size());
  for (std::size_t s = 0; s < idx.size();) {
    std::size_t e = s;
    while (e + 1 < idx.size() && x[idx[e + 1]] == x[idx[s]]) ++e;
    const double avg = 0.5 * static_cast<double>(s + e) + 1.0;
    for (std::size_t k = s; k <= e; ++k) r[idx[k]] = avg;
    s = e + 1;
  }
  return r;
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw UndefinedStatisticError("spearman: lengths differ");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  return pearson(ra, rb);
}

std::vector<double> standardize(std::span<const double> x) {
  if (x.size() < 2) throw UndefinedStatisticError("standardize: need at least 2 values");
  const double m = mean(x);
  const double s = stddev(x);
  if (s == 0.0) throw UndefinedStatisticError("standardize: zero variance");
  std::vector<double> out;
  out.reserve(x.size());
  for (double v : x) out.push_back((v - m) / s);
  return out;
}

std::string_view metric_name(Metric m) {
  return m == Metric::kPearson ? "pearson" : "spearman";
}

Metric parse_metric(std::string_view name) {
  if (name == "pearson") return Metric::kPearson;
  if (name == "spearman") return Metric::kSpearman;
  throw ConfigError("unknown metric '" + std::string(name) + "' (expected pearson or spearman)");
}

double correlate(Metric m, std::span<const double> a, std::span<const double> b) {
  return m == Metric::kPearson ? pearson(a, b) : spearman(a, b);
}

CorrelationReport subset_correlations(const std::vector<ScoreTable>& method_runs,
                                      const std::vector<ScoreTable>& truth_runs,
                                      Metric metric, const std::string& method) {
  if (method_runs.size() != truth_runs.size() || method_runs.empty()) {
    throw ConfigError("subset_correlations: method and truth cover different runs");
  }
  CorrelationReport rep;
  rep.method = method;
  rep.metric = metric;
  rep.n_runs = method_runs.size();
  rep.n_subsets = method_runs[0].size();
  std::vector<double> all;
  for (std::size_t r = 0; r < method_runs.size(); ++r) {
    const ScoreTable& m = method_runs[r];
    const ScoreTable& t = truth_runs[r];
    if (m.size() != t.size() || m.size() != rep.n_subsets) {
      throw ConfigError("subset_correlations: subset counts differ");
    }
    std::vector<double> row;
    for (std::size_t s = 0; s < m.size(); ++s) {
      if (m[s].size() != t[s].size()) {
        throw ConfigError("subset_correlations: train-dataset counts differ in subset " +
                          std::to_string(s));
      }
      row.push_back(correlate(metric, m[s], t[s]));
      all.push_back(row.back());
    }
    rep.values.push_back(std::move(row));
  }
  rep.mean = mean(all);
  rep.std = stddev(all);
  return rep;
}

}  // namespace untrac
