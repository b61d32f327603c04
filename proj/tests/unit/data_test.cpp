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
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "untrac/data.hpp"
#include "untrac/errors.hpp"
#include "untrac/vocab.hpp"

namespace untrac {
namespace {

namespace fs = std::filesystem;
using Strings = std::vector<std::string>;

const Vocab& vocab() { return Vocab::standard(); }

Strings decode(const std::vector<std::size_t>& ids) { return vocab().decode(ids); }

const Strings kWords = {"one",     "two",     "three",    "four",     "five",
                        "six",     "seven",   "eight",    "nine",     "ten",
                        "eleven",  "twelve",  "thirteen", "fourteen", "fifteen",
                        "sixteen", "seventeen", "eighteen", "nineteen", "twenty"};

Strings render(int n, bool words) {
  if (words) return {kWords.at(static_cast<std::size_t>(n - 1))};
  Strings out;
  for (char c : std::to_string(n)) out.push_back(std::string(1, c));
  return out;
}

// Independent reading of the task definitions on decoded strings.
Strings expected_answer(const Strings& p) {
  const std::string& task = p.front();
  if (task == "<task:succ>" || task == "<rel:next>" || task == "<rel:prev>") {
    std::string digits;
    for (std::size_t i = 2; i + 1 < p.size(); ++i) digits += p[i];
    const int x = std::stoi(digits);
    return render(task == "<rel:prev>" ? x - 1 : x + 1, p[1] == "<fmt:word>");
  }
  if (task == "<task:len>" || task == "<rel:count>") {
    return render(static_cast<int>(p.size()) - 3, p[1] == "<fmt:word>");
  }
  if (task == "<task:rem>" || task == "<rel:keep>") {
    std::multiset<std::string> left(p.begin() + 1, p.begin() + 6);
    for (std::size_t i = 7; i < 11; ++i) left.erase(left.find(p[i]));
    return {*left.begin()};
  }
  if (task == "<rel:drop>") return {p[7]};
  if (task == "<task:cat>" || task == "<rel:class>") {
    const int c = category_of(vocab().id(p[1]));
    // Choice labels sit before each CAT token.
    for (std::size_t i = 3; i + 1 < p.size(); i += 2) {
      if (p[i + 1] == "CAT" + std::to_string(c)) return {p[i]};
    }
  }
  return {"?"};
}

Example make(const Strings& prompt, const Strings& answer) {
  Example ex;
  for (const auto& s : prompt) ex.tokens.push_back(vocab().id(s));
  for (const auto& s : answer) ex.tokens.push_back(vocab().id(s));
  ex.loss_mask.assign(prompt.size(), 0);
  ex.loss_mask.resize(ex.tokens.size(), 1);
  return ex;
}

void expect_all_consistent(const Dataset& ds) {
  ASSERT_FALSE(ds.examples.empty());
  for (const Example& ex : ds.examples) {
    EXPECT_EQ(decode(answer_of(ex)), expected_answer(decode(prompt_of(ex))))
        << ds.name << ": " << ::testing::PrintToString(decode(ex.tokens));
    EXPECT_TRUE(self_consistent(ex));
    EXPECT_NO_THROW(validate_example(ex, vocab().size()));
  }
}

TEST(Vocab, ReservedIdsAndBijection) {
  const Vocab& v = vocab();
  EXPECT_EQ(v.id(kPad), 0u);
  EXPECT_EQ(v.id(kSep), 1u);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(v.id(v.token(i)), i);
  EXPECT_EQ(v.size(), 74u);
  EXPECT_THROW(v.id("<nope>"), ConfigError);
  EXPECT_THROW(Vocab({"<pad>", "<sep>", "x", "x"}), ConfigError);
}

TEST(Vocab, HashDependsOnOrder) {
  EXPECT_NE(Vocab({"<pad>", "<sep>", "a", "b"}).hash(), Vocab({"<pad>", "<sep>", "b", "a"}).hash());
}

TEST(Successor, ZeroInDigitsIsOne) {
  const Dataset ds = gen_successor(NumberFormat::kDigits, 4, 1, {0});
  for (const Example& ex : ds.examples) EXPECT_EQ(decode(answer_of(ex)), Strings{"1"});
}

TEST(Successor, OneInWordsIsTwo) {
  const Dataset ds = gen_successor(NumberFormat::kWords, 4, 1, {1});
  for (const Example& ex : ds.examples) EXPECT_EQ(decode(answer_of(ex)), Strings{"two"});
}

TEST(Successor, EighteenInDigitsIsNineteen) {
  const Dataset ds = gen_successor(NumberFormat::kDigits, 2, 1, {18});
  EXPECT_EQ(decode(answer_of(ds.examples[0])), (Strings{"1", "9"}));
}

TEST(Length, HandBuiltExamples) {
  EXPECT_TRUE(self_consistent(
      make({"<task:len>", "<fmt:num>", "p", "r", "o", "b", "l", "e", "m", "<sep>"}, {"7"})));
  EXPECT_TRUE(self_consistent(
      make({"<task:len>", "<fmt:word>", "a", "l", "i", "g", "n", "<sep>"}, {"five"})));
  EXPECT_TRUE(self_consistent(make({"<task:len>", "<fmt:num>", "q", "q", "<sep>"}, {"2"})));
  EXPECT_TRUE(self_consistent(make({"<task:len>", "<fmt:word>", "x", "z", "<sep>"}, {"two"})));
  EXPECT_FALSE(self_consistent(make({"<task:len>", "<fmt:num>", "x", "z", "<sep>"}, {"3"})));
}

TEST(Removal, HandBuiltExamples) {
  EXPECT_TRUE(self_consistent(make(
      {"<task:rem>", "7", "1", "b", "4", "0", "<sep>", "0", "1", "4", "7", "<sep>"}, {"b"})));
  EXPECT_TRUE(self_consistent(make(
      {"<task:rem>", "2", "7", "5", "1", "6", "<sep>", "6", "7", "5", "2", "<sep>"}, {"1"})));
  EXPECT_FALSE(self_consistent(make(
      {"<task:rem>", "2", "7", "5", "1", "6", "<sep>", "6", "7", "5", "2", "<sep>"}, {"6"})));
}

TEST(Removal, FifthSymbolRemainsWhenFirstFourRemoved) {
  const Dataset ds = gen_removal(Alphabet::kLetters, 50, 3);
  for (const Example& ex : ds.examples) {
    const Strings p = decode(prompt_of(ex));
    std::set<std::string> five(p.begin() + 1, p.begin() + 6);
    EXPECT_EQ(five.size(), 5u);
  }
  expect_all_consistent(ds);
}

TEST(Category, AnswerIsTheLabelOfTheSymbolsCategory) {
  const auto& symbols = category_symbols();
  const auto c0 = std::find_if(symbols.begin(), symbols.end(),
                               [](std::size_t s) { return category_of(s) == 0; });
  const auto c1 = std::find_if(symbols.begin(), symbols.end(),
                               [](std::size_t s) { return category_of(s) == 1; });
  ASSERT_NE(c0, symbols.end());
  ASSERT_NE(c1, symbols.end());
  const std::string s0 = vocab().token(*c0), s1 = vocab().token(*c1);
  EXPECT_TRUE(self_consistent(make({"<task:cat>", s0, "<sep>", "a", "CAT0", "b", "CAT1", "c",
                                    "CAT2", "d", "CAT3", "<sep>"},
                                   {"a"})));
  EXPECT_TRUE(self_consistent(make({"<task:cat>", s1, "<sep>", "0", "CAT0", "1", "CAT1", "2",
                                    "CAT2", "3", "CAT3", "<sep>"},
                                   {"1"})));
}

TEST(Category, TableIsAFunctionAndBalanced) {
  int counts[4] = {0, 0, 0, 0};
  for (std::size_t s : category_symbols()) {
    EXPECT_EQ(category_of(s), category_of(s));
    ++counts[category_of(s)];
  }
  EXPECT_LE(*std::max_element(counts, counts + 4) - *std::min_element(counts, counts + 4), 1);
}

TEST(Generators, EveryExampleIsSelfConsistent) {
  expect_all_consistent(gen_successor(NumberFormat::kDigits, 100, 1));
  expect_all_consistent(gen_successor(NumberFormat::kWords, 100, 2));
  expect_all_consistent(gen_length(NumberFormat::kDigits, 100, 3));
  expect_all_consistent(gen_length(NumberFormat::kWords, 100, 4));
  expect_all_consistent(gen_removal(Alphabet::kDigits, 100, 5));
  expect_all_consistent(gen_category(ChoiceFormat::kLetterChoice, 100, 6));
  expect_all_consistent(gen_category(ChoiceFormat::kNumberChoice, 100, 7));
}

TEST(Generators, SameSeedSameExamples) {
  EXPECT_EQ(gen_length(NumberFormat::kWords, 20, 9).examples,
            gen_length(NumberFormat::kWords, 20, 9).examples);
  EXPECT_NE(gen_length(NumberFormat::kWords, 20, 9).examples,
            gen_length(NumberFormat::kWords, 20, 10).examples);
}

TEST(Generators, LengthRangeAndZeroSize) {
  for (const Example& ex : gen_length(NumberFormat::kDigits, 200, 1).examples) {
    const std::size_t k = prompt_of(ex).size() - 3;
    EXPECT_GE(k, 2u);
    EXPECT_LE(k, 9u);
  }
  EXPECT_THROW(gen_length(NumberFormat::kDigits, 0, 1), ConfigError);
}

class SuiteTest : public ::testing::TestWithParam<SuiteKind> {};

TEST_P(SuiteTest, ShapeIdsAndSizes) {
  const Suite s = build_suite(GetParam(), 256, 0);
  ASSERT_EQ(s.train.size(), 4u);
  EXPECT_EQ(s.test.size(), 256u);
  const char ids[4][2] = {{'P', 'P'}, {'P', 'Q'}, {'Q', 'P'}, {'Q', 'Q'}};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(s.train[i].name, "train" + std::to_string(i + 1));
    EXPECT_EQ(s.train[i].size(), 256u);
    EXPECT_EQ(s.train[i].task_id, ids[i][0]);
    EXPECT_EQ(s.train[i].format_id, ids[i][1]);
    expect_all_consistent(s.train[i]);
  }
  EXPECT_EQ(s.test.task_id, 'P');
  EXPECT_EQ(s.test.format_id, 'P');
  expect_all_consistent(s.test);
}

TEST_P(SuiteTest, NoTestPromptInTraining) {
  const Suite s = build_suite(GetParam(), 256, 1);
  std::set<std::vector<std::size_t>> train_prompts;
  for (const Dataset& d : s.train) {
    for (const Example& ex : d.examples) train_prompts.insert(prompt_of(ex));
  }
  for (const Example& ex : s.test.examples) {
    EXPECT_EQ(train_prompts.count(prompt_of(ex)), 0u);
  }
}

TEST_P(SuiteTest, PretrainingCorpusUsesOnlyRelationMarkers) {
  const Dataset pre = gen_pretraining(GetParam(), 600, 2);
  EXPECT_EQ(pre.size(), 600u);
  expect_all_consistent(pre);
  for (const Example& ex : pre.examples) {
    const std::string marker = vocab().token(ex.tokens[0]);
    EXPECT_EQ(marker.rfind("<rel:", 0), 0u) << marker;
  }
}

INSTANTIATE_TEST_SUITE_P(Suites, SuiteTest, ::testing::Values(SuiteKind::kA, SuiteKind::kB),
                         [](const auto& info) { return std::string(suite_name(info.param)); });

TEST(SuiteA, TestInputsAreHeldOutOfTheDigitsTrainSet) {
  const Suite s = build_suite(SuiteKind::kA, 256, 0);
  const auto& held = suite_a_test_inputs();
  for (const Example& ex : s.train[0].examples) {
    const Strings p = decode(prompt_of(ex));
    std::string digits;
    for (std::size_t i = 2; i + 1 < p.size(); ++i) digits += p[i];
    EXPECT_EQ(std::count(held.begin(), held.end(), std::stoi(digits)), 0);
  }
}

TEST(SuiteNames, RoundTrip) {
  EXPECT_EQ(parse_suite(suite_name(SuiteKind::kA)), SuiteKind::kA);
  EXPECT_EQ(parse_suite(suite_name(SuiteKind::kB)), SuiteKind::kB);
  EXPECT_THROW(parse_suite("C"), ConfigError);
}

TEST(ImbalancedSuite, SizesFollowWeights) {
  const Suite s = build_imbalanced_suite({0.5, 0.25, 0.15, 0.1}, 400, 0);
  ASSERT_EQ(s.train.size(), 4u);
  EXPECT_EQ(s.train[0].size(), 200u);
  EXPECT_EQ(s.train[1].size(), 100u);
  EXPECT_EQ(s.train[2].size(), 60u);
  EXPECT_EQ(s.train[3].size(), 40u);
}

TEST(MixtureSampler, SingleDatasetOnly) {
  const Dataset a = gen_length(NumberFormat::kDigits, 10, 1);
  const Dataset b = gen_length(NumberFormat::kWords, 10, 2);
  MixtureSampler m({&a, &b}, {1.0, 0.0}, 3);
  for (const auto& [d, i] : m.sample_indices(500)) {
    EXPECT_EQ(d, 0u);
    EXPECT_LT(i, 10u);
  }
}

TEST(MixtureSampler, ProportionsFollowWeights) {
  const Dataset a = gen_length(NumberFormat::kDigits, 10, 1);
  const Dataset b = gen_length(NumberFormat::kWords, 10, 2);
  MixtureSampler m({&a, &b}, {3.0, 1.0}, 4);
  EXPECT_DOUBLE_EQ(m.weights()[0], 0.75);
  std::size_t first = 0;
  const std::size_t n = 100000;
  for (const auto& [d, i] : m.sample_indices(n)) first += d == 0;
  EXPECT_NEAR(static_cast<double>(first) / n, 0.75, 0.01);
}

TEST(MixtureSampler, SameSeedSameSequence) {
  const Dataset a = gen_length(NumberFormat::kDigits, 10, 1);
  const Dataset b = gen_length(NumberFormat::kWords, 10, 2);
  MixtureSampler m1({&a, &b}, {0.5, 0.5}, 9), m2({&a, &b}, {0.5, 0.5}, 9);
  EXPECT_EQ(m1.sample_batch(64), m2.sample_batch(64));
}

TEST(MixtureSampler, InvalidWeightsRejected) {
  const Dataset a = gen_length(NumberFormat::kDigits, 10, 1);
  const Dataset empty;
  EXPECT_THROW(MixtureSampler({&a}, {0.0}, 1), ConfigError);
  EXPECT_THROW(MixtureSampler({&a}, {-1.0}, 1), ConfigError);
  EXPECT_THROW(MixtureSampler({&a, &empty}, {1.0, 1.0}, 1), ConfigError);
  EXPECT_THROW(MixtureSampler({&a}, {1.0, 1.0}, 1), ConfigError);
}

TEST(Jsonl, RoundTripAndSuiteDirectory) {
  const fs::path dir = testing::scratch_path("untrac_data_test");
  fs::remove_all(dir);
  const Suite s = build_suite(SuiteKind::kB, 32, 5);
  write_suite(dir, s, 5);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir)) files += e.path().extension() == ".jsonl";
  EXPECT_EQ(files, 5u);
  std::ifstream in(dir / "train3.jsonl");
  EXPECT_EQ(std::count(std::istreambuf_iterator<char>(in), {}, '\n'), 32);
  const Suite r = read_suite(dir);
  EXPECT_EQ(r.kind, s.kind);
  EXPECT_EQ(r.test.examples, s.test.examples);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(r.train[i].examples, s.train[i].examples);
    EXPECT_EQ(r.train[i].task_id, s.train[i].task_id);
  }
  std::ofstream(dir / "train1.jsonl", std::ios::app) << "{\"tokens\": [1, 2]}\n";
  EXPECT_THROW(read_suite(dir), FormatError);
  fs::remove_all(dir);
  EXPECT_THROW(read_suite(dir), Error);
}

}  // namespace
}  // namespace untrac
