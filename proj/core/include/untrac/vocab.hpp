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
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace untrac {

// Token string <-> index bijection. PAD = 0 and SEP = 1 are fixed.
class Vocab {
 public:
  // PAD, SEP, digits 0-9, number words one..twenty, letters a-z,
  // CAT0..CAT3, task markers and output-format markers.
  static const Vocab& standard();

  explicit Vocab(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  std::size_t id(std::string_view token) const;
  const std::string& token(std::size_t id) const;
  bool contains(std::string_view token) const;

  std::vector<std::size_t> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<std::size_t>& ids) const;

  // FNV-1a over the ordered token list.
  std::uint64_t hash() const;

  // Token helpers for the synthetic generators.
  std::size_t digit(int d) const;           // "0".."9"
  std::size_t number_word(int n) const;     // "one".."twenty"
  std::size_t letter(int i) const;          // 'a' + i
  std::size_t category(int c) const;        // "CAT0".."CAT3"

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline constexpr std::string_view kPad = "<pad>";
inline constexpr std::string_view kSep = "<sep>";
inline constexpr std::string_view kTaskSuccessor = "<task:succ>";
inline constexpr std::string_view kTaskLength = "<task:len>";
inline constexpr std::string_view kTaskRemoval = "<task:rem>";
inline constexpr std::string_view kTaskCategory = "<task:cat>";
inline constexpr std::string_view kFormatNumeric = "<fmt:num>";
inline constexpr std::string_view kFormatWords = "<fmt:word>";
// Relation markers of the pretraining corpus.
inline constexpr std::string_view kRelNext = "<rel:next>";
inline constexpr std::string_view kRelPrev = "<rel:prev>";
inline constexpr std::string_view kRelCount = "<rel:count>";
inline constexpr std::string_view kRelKeep = "<rel:keep>";
inline constexpr std::string_view kRelDrop = "<rel:drop>";
inline constexpr std::string_view kRelClass = "<rel:class>";

// Decimal digit tokens of n (n >= 0).
std::vector<std::size_t> digits_of(const Vocab& v, int n);

}  // namespace untrac
