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

#include "isg/text.h"

#include <sstream>

namespace isg {
namespace {

const char* const kArpabet[] = {
    "AA",  "AA0", "AA1", "AA2", "AE",  "AE0", "AE1", "AE2", "AH",  "AH0", "AH1",
    "AH2", "AO",  "AO0", "AO1", "AO2", "AW",  "AW0", "AW1", "AW2", "AY",  "AY0",
    "AY1", "AY2", "B",   "CH",  "D",   "DH",  "EH",  "EH0", "EH1", "EH2", "ER",
    "ER0", "ER1", "ER2", "EY",  "EY0", "EY1", "EY2", "F",   "G",   "HH",  "IH",
    "IH0", "IH1", "IH2", "IY",  "IY0", "IY1", "IY2", "JH",  "K",   "L",   "M",
    "N",   "NG",  "OW",  "OW0", "OW1", "OW2", "OY",  "OY0", "OY1", "OY2", "P",
    "R",   "S",   "SH",  "T",   "TH",  "UH",  "UH0", "UH1", "UH2", "UW",  "UW0",
    "UW1", "UW2", "V",   "W",   "Y",   "Z",   "ZH"};

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  const std::string breath = kBreathToken;
  for (std::size_t i = 0; i < text.size();) {
    if (text.compare(i, breath.size(), breath) == 0) {
      out.push_back(breath);
      i += breath.size();
    } else if (text[i] == '{') {
      const std::size_t end = text.find('}', i);
      if (end == std::string::npos) throw VocabularyError("unterminated '{' in text");
      std::istringstream phones(text.substr(i + 1, end - i - 1));
      std::string p;
      while (phones >> p) out.push_back("@" + p);
      i = end + 1;
    } else {
      out.emplace_back(1, text[i]);
      ++i;
    }
  }
  return out;
}

std::string detokenize(const std::vector<std::string>& tokens) {
  std::string out;
  bool in_phones = false;
  for (const std::string& t : tokens) {
    const bool phone = t.size() > 1 && t[0] == '@';
    if (phone) {
      out += in_phones ? " " : "{";
      out += t.substr(1);
    } else {
      if (in_phones) out += "}";
      out += t;
    }
    in_phones = phone;
  }
  if (in_phones) out += "}";
  return out;
}

Vocabulary Vocabulary::characters() {
  std::vector<std::string> s = {"_"};
  for (char c : std::string("!'(),.:;? ")) s.emplace_back(1, c);
  s.emplace_back("-");
  for (char c = 'A'; c <= 'Z'; ++c) s.emplace_back(1, c);
  for (char c = 'a'; c <= 'z'; ++c) s.emplace_back(1, c);
  for (const char* p : kArpabet) s.push_back(std::string("@") + p);
  s.emplace_back(kBreathToken);
  return Vocabulary(std::move(s));
}

Vocabulary Vocabulary::with_blank() {
  std::vector<std::string> s = characters().symbols();
  s.emplace_back(kBlankToken);
  return Vocabulary(std::move(s));
}

Vocabulary::Vocabulary(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {
  for (int i = 0; i < size(); ++i) {
    if (!index_.emplace(symbols_[i], i).second) {
      throw ValidationError("duplicate vocabulary symbol '" + symbols_[i] + "'");
    }
  }
}

int Vocabulary::id(const std::string& symbol) const {
  auto it = index_.find(symbol);
  if (it == index_.end()) throw VocabularyError("unknown token '" + symbol + "'");
  return it->second;
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const std::string& t : tokens) ids.push_back(id(t));
  return ids;
}

std::vector<int> intersperse(const std::vector<int>& ids, int blank) {
  std::vector<int> out(2 * ids.size() + 1, blank);
  for (std::size_t i = 0; i < ids.size(); ++i) out[2 * i + 1] = ids[i];
  return out;
}

}  // namespace isg
