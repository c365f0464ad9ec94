// Copyright 2026 The ISG Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef ISG_TEXT_H_
#define ISG_TEXT_H_

// Text symbols: characters, '@'-prefixed ARPABET phones and the breath token.

#include <map>
#include <string>
#include <vector>

#include "isg/features.h"

namespace isg {

inline constexpr const char* kBreathToken = "<B>";
inline constexpr const char* kBlankToken = "<blank>";

class VocabularyError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Splits text into symbols. "<B>" is the breath token; "{AH0 B}" yields the
// phones "@AH0" and "@B"; every other byte is its own symbol.
std::vector<std::string> tokenize(const std::string& text);
std::string detokenize(const std::vector<std::string>& tokens);

class Vocabulary {
 public:
  // Pad '_', punctuation, '-', A-Z, a-z, 84 ARPABET phones and "<B>".
  static Vocabulary characters();
  // characters() plus "<blank>" for interleaving.
  static Vocabulary with_blank();

  explicit Vocabulary(std::vector<std::string> symbols);

  int size() const { return static_cast<int>(symbols_.size()); }
  const std::vector<std::string>& symbols() const { return symbols_; }
  bool contains(const std::string& s) const { return index_.count(s) != 0; }
  int id(const std::string& symbol) const;  // throws VocabularyError
  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  std::vector<int> encode(const std::string& text) const { return encode(tokenize(text)); }

 private:
  std::vector<std::string> symbols_;
  std::map<std::string, int> index_;
};

// [blank, t1, blank, t2, ..., tn, blank]
std::vector<int> intersperse(const std::vector<int>& ids, int blank);

}  // namespace isg

#endif  // ISG_TEXT_H_
