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

#include "untrac/vocab.hpp"

#include "untrac/errors.hpp"
#include "untrac/rng.hpp"

namespace untrac {

namespace {

const char* const kNumberWords[] = {
    "one",    "two",     "three",    "four",     "five",    "six",     "seven",
    "eight",  "nine",    "ten",      "eleven",   "twelve",  "thirteen", "fourteen",
    "fifteen", "sixteen", "seventeen", "eighteen", "nineteen", "twenty"};

std::vector<std::string> standard_tokens() {
  std::vector<std::string> t = {std::string(kPad), std::string(kSep)};
  for (int d = 0; d < 10; ++d) t.push_back(std::to_string(d));
  for (const char* w : kNumberWords) t.emplace_back(w);
  for (char c = 'a'; c <= 'z'; ++c) t.emplace_back(1, c);
  for (int c = 0; c < 4; ++c) t.push_back("CAT" + std::to_string(c));
  for (auto m : {kTaskSuccessor, kTaskLength, kTaskRemoval, kTaskCategory, kFormatNumeric,
                 kFormatWords, kRelNext, kRelPrev, kRelCount, kRelKeep, kRelDrop, kRelClass}) {
    t.emplace_back(m);
  }
  return t;
}

}  // namespace

const Vocab& Vocab::standard() {
  static const Vocab v(standard_tokens());
  return v;
}

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < 2 || tokens_[0] != kPad || tokens_[1] != kSep) {
    throw ConfigError("vocabulary must start with the reserved PAD and SEP tokens");
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second) {
      throw ConfigError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

std::size_t Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) throw ConfigError("unknown token '" + std::string(token) + "'");
  return it->second;
}

const std::string& Vocab::token(std::size_t id) const {
  if (id >= tokens_.size()) {
    throw ConfigError("token id " + std::to_string(id) + " outside vocabulary");
  }
  return tokens_[id];
}

bool Vocab::contains(std::string_view token) const {
  return index_.count(std::string(token)) > 0;
}

std::vector<std::size_t> Vocab::encode(const std::vector<std::string>& tokens) const {
  std::vector<std::size_t> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

std::vector<std::string> Vocab::decode(const std::vector<std::size_t>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (std::size_t i : ids) out.push_back(token(i));
  return out;
}

std::uint64_t Vocab::hash() const {
  std::uint64_t h = fnv1a64("");
  for (const auto& t : tokens_) {
    h = fnv1a64(t, h);
    h = fnv1a64(std::string_view("\n", 1), h);
  }
  return h;
}

std::size_t Vocab::digit(int d) const {
  if (d < 0 || d > 9) throw ConfigError("digit out of range");
  return id(std::to_string(d));
}

std::size_t Vocab::number_word(int n) const {
  if (n < 1 || n > 20) throw ConfigError("number word out of range: " + std::to_string(n));
  return id(kNumberWords[n - 1]);
}

std::size_t Vocab::letter(int i) const {
  if (i < 0 || i >= 26) throw ConfigError("letter index out of range");
  return id(std::string(1, static_cast<char>('a' + i)));
}

std::size_t Vocab::category(int c) const {
  if (c < 0 || c > 3) throw ConfigError("category out of range");
  return id("CAT" + std::to_string(c));
}

std::vector<std::size_t> digits_of(const Vocab& v, int n) {
  if (n < 0) throw ConfigError("digits_of: negative number");
  std::vector<std::size_t> out;
  for (char c : std::to_string(n)) out.push_back(v.digit(c - '0'));
  return out;
}

}  // namespace untrac
