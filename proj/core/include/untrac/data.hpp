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

// Synthetic task/format datasets and mixture sampling.
//
// Every prompt starts with a task marker; the answer follows the final SEP
// and is the only masked-in span. Suite A pairs a successor task with a
// length task, each answered in numeric or word form. Suite B pairs a
// removal task with a category-lookup task, each answered with a letter or a
// digit.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "untrac/model.hpp"
#include "untrac/rng.hpp"
#include "untrac/vocab.hpp"

namespace untrac {

// 'P' or 'Q'.
using AxisId = char;

struct Dataset {
  std::string name;
  std::vector<Example> examples;
  AxisId task_id = 'P';
  AxisId format_id = 'P';

  std::size_t size() const { return examples.size(); }
};

enum class NumberFormat { kDigits, kWords };
enum class Alphabet { kLetters, kDigits };
enum class ChoiceFormat { kLetterChoice, kNumberChoice };

// Prompt [succ, fmt, x digits, SEP], answer x + 1 as digit tokens or one
// number word. x is drawn uniformly from `inputs` (default 0..18).
Dataset gen_successor(NumberFormat format, std::size_t n, std::uint64_t seed,
                      std::vector<int> inputs = {});

// Prompt [len, fmt, c_1..c_k, SEP] with k uniform in [2, 9] and uniform
// letters, answer k.
Dataset gen_length(NumberFormat format, std::size_t n, std::uint64_t seed);

// Prompt [rem, s_1..s_5, SEP, r_1..r_4, SEP]: five distinct symbols, four of
// them listed for removal in random order; the answer is the fifth.
Dataset gen_removal(Alphabet alphabet, std::size_t n, std::uint64_t seed);

// Prompt [cat, sym, SEP, o_0, CAT0, o_1, CAT1, o_2, CAT2, o_3, CAT3, SEP]
// where o_c is the choice label (a-d or 0-3). The answer is the label of the
// symbol's category in `category_table`.
Dataset gen_category(ChoiceFormat format, std::size_t n, std::uint64_t seed);

// Symbols eligible for the category task and their fixed categories, drawn
// from a constant seed so every suite shares one table.
const std::vector<std::size_t>& category_symbols();
int category_of(std::size_t symbol_token);

enum class SuiteKind { kA, kB };

std::string_view suite_name(SuiteKind s);
SuiteKind parse_suite(std::string_view name);

struct Suite {
  SuiteKind kind = SuiteKind::kA;
  Dataset test;
  std::vector<Dataset> train;  // train1..train4
};

// Suite A: test = successor/digits on held-out inputs; train1..4 =
// successor/digits (P,P), successor/words (P,Q), length/digits (Q,P),
// length/words (Q,Q). Suite B: test = removal/letters; train1..4 =
// removal/letters, removal/digits, category/letter-choice,
// category/number-choice. No test prompt appears in any training dataset.
Suite build_suite(SuiteKind which, std::size_t n_per_dataset, std::uint64_t seed);

// Corpus for the shared initialization, built on relation markers that no
// suite dataset uses. Suite A: next, prev and count over both formats, inputs
// 2..19. Suite B: keep and drop over both alphabets, class over both choice
// formats. Shares no prompt with any suite dataset.
Dataset gen_pretraining(SuiteKind which, std::size_t n, std::uint64_t seed);

// Successor inputs reserved for the suite A test set.
const std::vector<int>& suite_a_test_inputs();

// Four near-identical datasets (successor/digits) of sizes proportional to
// `weights` out of `total` examples, plus a same-task test set.
Suite build_imbalanced_suite(const std::vector<double>& weights, std::size_t total,
                             std::uint64_t seed);

// Prompt tokens of an example (everything before the first masked position).
std::vector<std::size_t> prompt_of(const Example& ex);
std::vector<std::size_t> answer_of(const Example& ex);

// Recomputes the answer from the prompt using the task definition. Returns
// false for prompts that match no task.
bool self_consistent(const Example& ex);

class MixtureSampler {
 public:
  // Weights are normalized to sum to 1; they must be non-negative with a
  // positive total, and every positively weighted dataset must be non-empty.
  MixtureSampler(std::vector<const Dataset*> datasets, std::vector<double> weights,
                 std::uint64_t seed);

  // i.i.d.: dataset by weight, then an example uniformly within it.
  std::vector<Example> sample_batch(std::size_t batch_size);
  // Same draws, reporting (dataset index, example index) pairs.
  std::vector<std::pair<std::size_t, std::size_t>> sample_indices(std::size_t batch_size);

  const std::vector<double>& weights() const { return weights_; }
  Rng& rng() { return rng_; }

 private:
  std::vector<const Dataset*> datasets_;
  std::vector<double> weights_;
  std::vector<double> cumulative_;
  Rng rng_;
};

// JSON-lines dataset file: one {"tokens": [...], "loss_mask": [...]} per line.
void write_jsonl(const std::filesystem::path& path, const Dataset& ds);
std::vector<Example> read_jsonl(const std::filesystem::path& path);

// Writes <dir>/<name>.jsonl for the test set and each training set, plus
// <dir>/suite.json with names, task/format ids, counts and the vocab hash.
void write_suite(const std::filesystem::path& dir, const Suite& suite, std::uint64_t seed);
// Reads a directory written by write_suite, checking the vocab hash and
// example validity.
Suite read_suite(const std::filesystem::path& dir);

}  // namespace untrac
