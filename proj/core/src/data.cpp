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

#include "untrac/data.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "untrac/errors.hpp"

namespace untrac {

namespace {

using Tokens = std::vector<std::size_t>;
using PromptSet = std::set<Tokens>;

Example make_example(const Tokens& prompt, const Tokens& answer) {
  Example ex;
  ex.tokens = prompt;
  ex.tokens.insert(ex.tokens.end(), answer.begin(), answer.end());
  ex.loss_mask.assign(prompt.size(), 0);
  ex.loss_mask.resize(ex.tokens.size(), 1);
  return ex;
}

// Draws n examples from `draw`, skipping prompts in `exclude`.
std::vector<Example> generate(std::size_t n, Rng& rng, const PromptSet& exclude,
                              const std::function<Example(Rng&)>& draw) {
  if (n == 0) throw ConfigError("dataset size must be >= 1");
  std::vector<Example> out;
  out.reserve(n);
  std::size_t attempts = 0;
  while (out.size() < n) {
    Example ex = draw(rng);
    if (++attempts > 1000 * n + 100000) {
      throw ConfigError("generator cannot produce enough examples outside the excluded set");
    }
    if (!exclude.empty() && exclude.count(prompt_of(ex))) continue;
    out.push_back(std::move(ex));
  }
  return out;
}

PromptSet prompts(const Dataset& ds) {
  PromptSet s;
  for (const Example& ex : ds.examples) s.insert(prompt_of(ex));
  return s;
}

std::size_t format_marker(const Vocab& v, NumberFormat f) {
  return v.id(f == NumberFormat::kDigits ? kFormatNumeric : kFormatWords);
}

Tokens render_number(const Vocab& v, NumberFormat f, int n) {
  return f == NumberFormat::kDigits ? digits_of(v, n) : Tokens{v.number_word(n)};
}

Example draw_successor(const Vocab& v, NumberFormat f, const std::vector<int>& inputs,
                       Rng& rng) {
  const int x = inputs[rng.below(inputs.size())];
  Tokens prompt = {v.id(kTaskSuccessor), format_marker(v, f)};
  const Tokens xd = digits_of(v, x);
  prompt.insert(prompt.end(), xd.begin(), xd.end());
  prompt.push_back(v.id(kSep));
  return make_example(prompt, render_number(v, f, x + 1));
}

Example draw_length(const Vocab& v, NumberFormat f, Rng& rng) {
  const int k = 2 + static_cast<int>(rng.below(8));
  Tokens prompt = {v.id(kTaskLength), format_marker(v, f)};
  for (int i = 0; i < k; ++i) prompt.push_back(v.letter(static_cast<int>(rng.below(26))));
  prompt.push_back(v.id(kSep));
  return make_example(prompt, render_number(v, f, k));
}

// [rel, fmt, x digits, SEP] -> x + 1 or x - 1, x uniform in [2, 19].
Example draw_relation(const Vocab& v, std::string_view rel, NumberFormat f, Rng& rng) {
  const int x = 2 + static_cast<int>(rng.below(18));
  Tokens prompt = {v.id(rel), format_marker(v, f)};
  const Tokens xd = digits_of(v, x);
  prompt.insert(prompt.end(), xd.begin(), xd.end());
  prompt.push_back(v.id(kSep));
  return make_example(prompt, render_number(v, f, rel == kRelNext ? x + 1 : x - 1));
}

Tokens symbol_pool(const Vocab& v, Alphabet a) {
  Tokens pool;
  if (a == Alphabet::kLetters) {
    for (int i = 0; i < 26; ++i) pool.push_back(v.letter(i));
  } else {
    for (int d = 0; d < 10; ++d) pool.push_back(v.digit(d));
  }
  return pool;
}

Example draw_removal(const Vocab& v, Alphabet a, Rng& rng) {
  Tokens pool = symbol_pool(v, a);
  rng.shuffle(pool);
  const Tokens shown(pool.begin(), pool.begin() + 5);
  Tokens removed(shown.begin(), shown.begin() + 4);
  rng.shuffle(removed);
  // The remaining symbol is shown[4]; present the five in a fresh order.
  Tokens order = shown;
  rng.shuffle(order);
  Tokens prompt = {v.id(kTaskRemoval)};
  prompt.insert(prompt.end(), order.begin(), order.end());
  prompt.push_back(v.id(kSep));
  prompt.insert(prompt.end(), removed.begin(), removed.end());
  prompt.push_back(v.id(kSep));
  return make_example(prompt, {shown[4]});
}

std::size_t choice_label(const Vocab& v, ChoiceFormat f, int c) {
  return f == ChoiceFormat::kLetterChoice ? v.letter(c) : v.digit(c);
}

Example draw_category(const Vocab& v, ChoiceFormat f, Rng& rng) {
  const auto& symbols = category_symbols();
  const std::size_t sym = symbols[rng.below(symbols.size())];
  Tokens prompt = {v.id(kTaskCategory), sym, v.id(kSep)};
  for (int c = 0; c < 4; ++c) {
    prompt.push_back(choice_label(v, f, c));
    prompt.push_back(v.category(c));
  }
  prompt.push_back(v.id(kSep));
  return make_example(prompt, {choice_label(v, f, category_of(sym))});
}

std::vector<int> all_successor_inputs() {
  std::vector<int> x(19);
  std::iota(x.begin(), x.end(), 0);
  return x;
}

std::vector<int> without(const std::vector<int>& all, const std::vector<int>& drop) {
  std::vector<int> out;
  for (int x : all) {
    if (std::find(drop.begin(), drop.end(), x) == drop.end()) out.push_back(x);
  }
  return out;
}

// Per-dataset generator seed within a suite.
std::uint64_t sub_seed(std::uint64_t seed, std::string_view name) {
  return fnv1a64(name, seed ^ 0x9e3779b97f4a7c15ULL);
}

}  // namespace

Dataset gen_successor(NumberFormat format, std::size_t n, std::uint64_t seed,
                      std::vector<int> inputs) {
  if (inputs.empty()) inputs = all_successor_inputs();
  for (int x : inputs) {
    if (x < 0 || x > 18) throw ConfigError("successor inputs must lie in [0, 18]");
  }
  const Vocab& v = Vocab::standard();
  Rng rng(seed);
  Dataset ds;
  ds.name = format == NumberFormat::kDigits ? "successor_digits" : "successor_words";
  ds.task_id = 'P';
  ds.format_id = format == NumberFormat::kDigits ? 'P' : 'Q';
  ds.examples = generate(n, rng, {}, [&](Rng& r) { return draw_successor(v, format, inputs, r); });
  return ds;
}

Dataset gen_length(NumberFormat format, std::size_t n, std::uint64_t seed) {
  const Vocab& v = Vocab::standard();
  Rng rng(seed);
  Dataset ds;
  ds.name = format == NumberFormat::kDigits ? "length_digits" : "length_words";
  ds.task_id = 'Q';
  ds.format_id = format == NumberFormat::kDigits ? 'P' : 'Q';
  ds.examples = generate(n, rng, {}, [&](Rng& r) { return draw_length(v, format, r); });
  return ds;
}

Dataset gen_removal(Alphabet alphabet, std::size_t n, std::uint64_t seed) {
  const Vocab& v = Vocab::standard();
  Rng rng(seed);
  Dataset ds;
  ds.name = alphabet == Alphabet::kLetters ? "removal_letters" : "removal_digits";
  ds.task_id = 'P';
  ds.format_id = alphabet == Alphabet::kLetters ? 'P' : 'Q';
  ds.examples = generate(n, rng, {}, [&](Rng& r) { return draw_removal(v, alphabet, r); });
  return ds;
}

Dataset gen_category(ChoiceFormat format, std::size_t n, std::uint64_t seed) {
  const Vocab& v = Vocab::standard();
  Rng rng(seed);
  Dataset ds;
  ds.name = format == ChoiceFormat::kLetterChoice ? "category_letter" : "category_number";
  ds.task_id = 'Q';
  ds.format_id = format == ChoiceFormat::kLetterChoice ? 'P' : 'Q';
  ds.examples = generate(n, rng, {}, [&](Rng& r) { return draw_category(v, format, r); });
  return ds;
}

const std::vector<std::size_t>& category_symbols() {
  static const std::vector<std::size_t> kSymbols = [] {
    const Vocab& v = Vocab::standard();
    std::vector<std::size_t> s;
    // Letters a-d double as choice labels, so they are not category symbols.
    for (int i = 4; i < 26; ++i) s.push_back(v.letter(i));
    for (int n = 1; n <= 20; ++n) s.push_back(v.number_word(n));
    return s;
  }();
  return kSymbols;
}

int category_of(std::size_t symbol_token) {
  static const std::vector<int> kTable = [] {
    const auto& symbols = category_symbols();
    std::vector<int> cats(symbols.size());
    // Balanced assignment, then a fixed shuffle.
    for (std::size_t i = 0; i < cats.size(); ++i) cats[i] = static_cast<int>(i % 4);
    Rng rng(0x5eed'ca7e'9011ULL);
    rng.shuffle(cats);
    std::vector<int> table(Vocab::standard().size(), -1);
    for (std::size_t i = 0; i < symbols.size(); ++i) table[symbols[i]] = cats[i];
    return table;
  }();
  if (symbol_token >= kTable.size() || kTable[symbol_token] < 0) {
    throw ConfigError("token " + std::to_string(symbol_token) + " has no category");
  }
  return kTable[symbol_token];
}

std::string_view suite_name(SuiteKind s) { return s == SuiteKind::kA ? "A" : "B"; }

SuiteKind parse_suite(std::string_view name) {
  if (name == "A" || name == "a") return SuiteKind::kA;
  if (name == "B" || name == "b") return SuiteKind::kB;
  throw ConfigError("unknown suite '" + std::string(name) + "' (expected A or B)");
}

const std::vector<int>& suite_a_test_inputs() {
  static const std::vector<int> kInputs = {1, 4, 7, 10, 13, 16};
  return kInputs;
}

Suite build_suite(SuiteKind which, std::size_t n_per_dataset, std::uint64_t seed) {
  Suite s;
  s.kind = which;
  if (which == SuiteKind::kA) {
    const auto& held_out = suite_a_test_inputs();
    s.train.push_back(gen_successor(NumberFormat::kDigits, n_per_dataset,
                                    sub_seed(seed, "train1"),
                                    without(all_successor_inputs(), held_out)));
    s.train.push_back(
        gen_successor(NumberFormat::kWords, n_per_dataset, sub_seed(seed, "train2")));
    s.train.push_back(gen_length(NumberFormat::kDigits, n_per_dataset, sub_seed(seed, "train3")));
    s.train.push_back(gen_length(NumberFormat::kWords, n_per_dataset, sub_seed(seed, "train4")));
    s.test = gen_successor(NumberFormat::kDigits, n_per_dataset, sub_seed(seed, "test"),
                           held_out);
  } else {
    s.train.push_back(gen_removal(Alphabet::kLetters, n_per_dataset, sub_seed(seed, "train1")));
    s.train.push_back(gen_removal(Alphabet::kDigits, n_per_dataset, sub_seed(seed, "train2")));
    s.train.push_back(
        gen_category(ChoiceFormat::kLetterChoice, n_per_dataset, sub_seed(seed, "train3")));
    s.train.push_back(
        gen_category(ChoiceFormat::kNumberChoice, n_per_dataset, sub_seed(seed, "train4")));
    PromptSet exclude;
    for (const Dataset& d : s.train) {
      const PromptSet p = prompts(d);
      exclude.insert(p.begin(), p.end());
    }
    const Vocab& v = Vocab::standard();
    Rng rng(sub_seed(seed, "test"));
    s.test.name = "removal_letters";
    s.test.task_id = 'P';
    s.test.format_id = 'P';
    s.test.examples = generate(n_per_dataset, rng, exclude, [&](Rng& r) {
      return draw_removal(v, Alphabet::kLetters, r);
    });
  }
  for (std::size_t i = 0; i < s.train.size(); ++i) {
    s.train[i].name = "train" + std::to_string(i + 1);
  }
  s.test.name = "test";
  return s;
}

Dataset gen_pretraining(SuiteKind which, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ConfigError("dataset size must be >= 1");
  const Vocab& v = Vocab::standard();
  std::vector<std::function<Example(Rng&)>> draws;
  if (which == SuiteKind::kA) {
    for (NumberFormat f : {NumberFormat::kDigits, NumberFormat::kWords}) {
      draws.push_back([&v, f](Rng& r) { return draw_relation(v, kRelNext, f, r); });
      draws.push_back([&v, f](Rng& r) { return draw_relation(v, kRelPrev, f, r); });
      draws.push_back([&v, f](Rng& r) {
        Example ex = draw_length(v, f, r);
        ex.tokens[0] = v.id(kRelCount);
        return ex;
      });
    }
  } else {
    for (Alphabet a : {Alphabet::kLetters, Alphabet::kDigits}) {
      draws.push_back([&v, a](Rng& r) {
        Example ex = draw_removal(v, a, r);
        ex.tokens[0] = v.id(kRelKeep);
        return ex;
      });
      draws.push_back([&v, a](Rng& r) {
        Example ex = draw_removal(v, a, r);
        ex.tokens[0] = v.id(kRelDrop);
        ex.tokens.back() = ex.tokens[7];
        return ex;
      });
    }
    for (ChoiceFormat f : {ChoiceFormat::kLetterChoice, ChoiceFormat::kNumberChoice}) {
      draws.push_back([&v, f](Rng& r) {
        Example ex = draw_category(v, f, r);
        ex.tokens[0] = v.id(kRelClass);
        return ex;
      });
    }
  }
  Rng rng(sub_seed(seed, "pretrain"));
  Dataset ds;
  ds.name = "pretrain";
  for (std::size_t i = 0; i < n; ++i) ds.examples.push_back(draws[i % draws.size()](rng));
  return ds;
}

Suite build_imbalanced_suite(const std::vector<double>& weights, std::size_t total,
                             std::uint64_t seed) {
  if (weights.empty()) throw ConfigError("imbalanced suite needs at least one weight");
  const auto& held_out = suite_a_test_inputs();
  const std::vector<int> train_inputs = without(all_successor_inputs(), held_out);
  Suite s;
  s.kind = SuiteKind::kA;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const std::string name = "train" + std::to_string(i + 1);
    const auto n = static_cast<std::size_t>(std::max(1.0, std::round(weights[i] * total)));
    Dataset d = gen_successor(NumberFormat::kDigits, n, sub_seed(seed, name), train_inputs);
    d.name = name;
    s.train.push_back(std::move(d));
  }
  s.test = gen_successor(NumberFormat::kDigits, std::max<std::size_t>(1, total / 4),
                         sub_seed(seed, "test"), held_out);
  s.test.name = "test";
  return s;
}

std::vector<std::size_t> prompt_of(const Example& ex) {
  std::size_t t = 0;
  while (t < ex.loss_mask.size() && !ex.loss_mask[t]) ++t;
  return {ex.tokens.begin(), ex.tokens.begin() + static_cast<std::ptrdiff_t>(t)};
}

std::vector<std::size_t> answer_of(const Example& ex) {
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < ex.tokens.size(); ++t) {
    if (ex.loss_mask[t]) out.push_back(ex.tokens[t]);
  }
  return out;
}

bool self_consistent(const Example& ex) {
  const Vocab& v = Vocab::standard();
  const Tokens p = prompt_of(ex);
  const Tokens a = answer_of(ex);
  if (p.size() < 3 || p.back() != v.id(kSep)) return false;
  auto is_digit = [&](std::size_t t) { return t >= v.digit(0) && t <= v.digit(9); };
  auto number_format = [&](std::size_t t, NumberFormat& f) {
    if (t == v.id(kFormatNumeric)) f = NumberFormat::kDigits;
    else if (t == v.id(kFormatWords)) f = NumberFormat::kWords;
    else return false;
    return true;
  };
  const std::size_t task = p[0];
  if (task == v.id(kTaskSuccessor) || task == v.id(kRelNext) || task == v.id(kRelPrev)) {
    NumberFormat f;
    if (!number_format(p[1], f)) return false;
    int x = 0;
    for (std::size_t i = 2; i + 1 < p.size(); ++i) {
      if (!is_digit(p[i])) return false;
      x = 10 * x + static_cast<int>(p[i] - v.digit(0));
    }
    const int y = task == v.id(kRelPrev) ? x - 1 : x + 1;
    if (y < 0 || (f == NumberFormat::kWords && (y < 1 || y > 20))) return false;
    return a == render_number(v, f, y);
  }
  if (task == v.id(kTaskLength) || task == v.id(kRelCount)) {
    NumberFormat f;
    if (!number_format(p[1], f)) return false;
    return a == render_number(v, f, static_cast<int>(p.size()) - 3);
  }
  if (task == v.id(kRelDrop)) {
    return p.size() == 12 && p[6] == v.id(kSep) && a == Tokens{p[7]};
  }
  if (task == v.id(kTaskRemoval) || task == v.id(kRelKeep)) {
    if (p.size() != 12 || p[6] != v.id(kSep)) return false;
    Tokens left(p.begin() + 1, p.begin() + 6);
    for (std::size_t i = 7; i < 11; ++i) {
      auto it = std::find(left.begin(), left.end(), p[i]);
      if (it == left.end()) return false;
      left.erase(it);
    }
    return left.size() == 1 && a == left;
  }
  if (task == v.id(kTaskCategory) || task == v.id(kRelClass)) {
    if (p.size() != 12) return false;
    const ChoiceFormat f =
        p[3] == v.letter(0) ? ChoiceFormat::kLetterChoice : ChoiceFormat::kNumberChoice;
    return a == Tokens{choice_label(v, f, category_of(p[1]))};
  }
  return false;
}

MixtureSampler::MixtureSampler(std::vector<const Dataset*> datasets,
                               std::vector<double> weights, std::uint64_t seed)
    : datasets_(std::move(datasets)), weights_(std::move(weights)), rng_(seed) {
  if (datasets_.empty()) throw ConfigError("mixture has no datasets");
  if (weights_.size() != datasets_.size()) {
    throw ConfigError("mixture weights and datasets differ in length");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    if (!(weights_[i] >= 0.0)) throw ConfigError("mixture weights must be >= 0");
    if (weights_[i] > 0.0 && datasets_[i]->examples.empty()) {
      throw ConfigError("mixture dataset '" + datasets_[i]->name + "' is empty");
    }
    total += weights_[i];
  }
  if (!(total > 0.0)) throw ConfigError("mixture is empty (all weights are zero)");
  double acc = 0.0;
  for (double& w : weights_) {
    w /= total;
    acc += w;
    cumulative_.push_back(acc);
  }
}

std::vector<std::pair<std::size_t, std::size_t>> MixtureSampler::sample_indices(
    std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(batch_size);
  for (std::size_t b = 0; b < batch_size; ++b) {
    const double u = rng_.uniform();
    std::size_t d = 0;
    while (d + 1 < cumulative_.size() && u >= cumulative_[d]) ++d;
    // Rounding can leave u past the last cumulative weight.
    while (weights_[d] == 0.0 && d > 0) --d;
    out.emplace_back(d, rng_.below(datasets_[d]->examples.size()));
  }
  return out;
}

std::vector<Example> MixtureSampler::sample_batch(std::size_t batch_size) {
  std::vector<Example> out;
  for (const auto& [d, i] : sample_indices(batch_size)) {
    out.push_back(datasets_[d]->examples[i]);
  }
  return out;
}

void write_jsonl(const std::filesystem::path& path, const Dataset& ds) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FormatError("cannot write " + path.string());
  for (const Example& ex : ds.examples) {
    nlohmann::json j;
    j["tokens"] = ex.tokens;
    j["loss_mask"] = ex.loss_mask;
    os << j.dump() << '\n';
  }
}

std::vector<Example> read_jsonl(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DependencyError("dataset file not found: " + path.string());
  std::vector<Example> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Example ex;
      ex.tokens = j.at("tokens").get<std::vector<std::size_t>>();
      ex.loss_mask = j.at("loss_mask").get<std::vector<int>>();
      out.push_back(std::move(ex));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_suite(const std::filesystem::path& dir, const Suite& suite, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  nlohmann::json meta;
  meta["suite"] = suite_name(suite.kind);
  meta["seed"] = seed;
  meta["vocab_hash"] = hex64(Vocab::standard().hash());
  meta["vocab_size"] = Vocab::standard().size();
  auto record = [&](const Dataset& d, const char* role) {
    write_jsonl(dir / (d.name + ".jsonl"), d);
    nlohmann::json r;
    r["name"] = d.name;
    r["role"] = role;
    r["task_id"] = std::string(1, d.task_id);
    r["format_id"] = std::string(1, d.format_id);
    r["file"] = d.name + ".jsonl";
    r["n_examples"] = d.size();
    return r;
  };
  meta["datasets"].push_back(record(suite.test, "test"));
  for (const Dataset& d : suite.train) meta["datasets"].push_back(record(d, "train"));
  std::ofstream os(dir / "suite.json", std::ios::trunc);
  os << meta.dump(2) << '\n';
}

Suite read_suite(const std::filesystem::path& dir) {
  const auto meta_path = dir / "suite.json";
  std::ifstream is(meta_path);
  if (!is) throw DependencyError("suite metadata not found: " + meta_path.string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(meta_path.string() + ": " + e.what());
  }
  const std::string want = hex64(Vocab::standard().hash());
  if (meta.at("vocab_hash").get<std::string>() != want) {
    throw FormatError(meta_path.string() + " was generated with a different vocabulary");
  }
  Suite s;
  s.kind = parse_suite(meta.at("suite").get<std::string>());
  const std::size_t vsize = Vocab::standard().size();
  for (const auto& r : meta.at("datasets")) {
    Dataset d;
    d.name = r.at("name").get<std::string>();
    d.task_id = r.at("task_id").get<std::string>().at(0);
    d.format_id = r.at("format_id").get<std::string>().at(0);
    d.examples = read_jsonl(dir / r.at("file").get<std::string>());
    if (d.examples.empty()) throw FormatError("dataset '" + d.name + "' is empty");
    for (const Example& ex : d.examples) validate_example(ex, vsize);
    if (r.at("role").get<std::string>() == "test") {
      s.test = std::move(d);
    } else {
      s.train.push_back(std::move(d));
    }
  }
  return s;
}

}  // namespace untrac
