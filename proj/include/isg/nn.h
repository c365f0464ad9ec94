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

#ifndef ISG_NN_H_
#define ISG_NN_H_

#include <deque>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "isg/ad.h"

namespace isg::nn {

using ad::Index;
using ad::Matrix;
using ad::Parameter;
using ad::Var;
using Rng = std::mt19937_64;

// Derives an independent stream seed (splitmix64 finalizer).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Owns named parameters in registration order. Addresses are stable.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, Matrix init);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::vector<Parameter*> with_prefix(const std::string& prefix);
  std::vector<Parameter*> trainable();

  // Total element count, optionally restricted to a name prefix.
  std::int64_t count(const std::string& prefix = "") const;
  void zero_grad();
  void set_frozen(const std::string& prefix, bool frozen);

 private:
  std::deque<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

Matrix xavier_uniform(Index rows, Index cols, Rng& rng, double fan_in,
                      double fan_out);
Matrix uniform(Index rows, Index cols, double bound, Rng& rng);

class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, Index in, Index out,
         Rng& rng, bool bias = true);

  Var operator()(const Var& x) const;
  Index in() const { return in_; }
  Index out() const { return out_; }
  Parameter* weight() const { return w_; }
  Parameter* bias() const { return b_; }

 private:
  Parameter* w_ = nullptr;
  Parameter* b_ = nullptr;
  Index in_ = 0;
  Index out_ = 0;
};

// 1-D convolution over the time (row) axis with "same" padding.
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(ParameterStore& store, const std::string& name, Index in, Index out,
         int kernel, Rng& rng, int dilation = 1, bool bias = true);

  Var operator()(const Var& x) const;
  int kernel() const { return kernel_; }
  int dilation() const { return dilation_; }
  Parameter* weight() const { return w_; }
  Parameter* bias() const { return b_; }

 private:
  Parameter* w_ = nullptr;  // (kernel * in) x out
  Parameter* b_ = nullptr;
  int kernel_ = 1;
  int dilation_ = 1;
};

class Embedding {
 public:
  Embedding() = default;
  Embedding(ParameterStore& store, const std::string& name, Index vocab,
            Index dim, Rng& rng);
  Var operator()(const std::vector<int>& ids) const;

 private:
  Parameter* table_ = nullptr;
};

struct LstmState {
  Var h;
  Var c;
};

class LstmCell {
 public:
  LstmCell() = default;
  LstmCell(ParameterStore& store, const std::string& name, Index in,
           Index hidden, Rng& rng);

  LstmState initial_state() const;
  LstmState operator()(const Var& x, const LstmState& state) const;
  Index hidden() const { return hidden_; }
  Parameter* weight() const { return w_; }
  Parameter* bias() const { return b_; }

 private:
  Parameter* w_ = nullptr;
  Parameter* b_ = nullptr;
  Index hidden_ = 0;
};

// Runs an LstmCell over the rows of x, returning T x H hidden outputs.
Var run_lstm(const LstmCell& cell, const Var& x, bool reverse = false);

// Stacked LstmCells; layer k feeds layer k + 1.
class LstmStack {
 public:
  LstmStack() = default;
  LstmStack(ParameterStore& store, const std::string& name, Index in, Index hidden,
            int layers, Rng& rng);

  std::vector<LstmState> initial_state() const;
  // Advances every layer by one step and returns the top hidden output.
  Var step(const Var& x, std::vector<LstmState>& state) const;
  // T x in -> T x hidden.
  Var run(const Var& x) const;
  int layers() const { return static_cast<int>(cells_.size()); }
  Index hidden() const { return cells_.empty() ? 0 : cells_.front().hidden(); }
  const std::vector<LstmCell>& cells() const { return cells_; }

 private:
  std::vector<LstmCell> cells_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, Index dim);
  Var operator()(const Var& x) const;

 private:
  Parameter* gamma_ = nullptr;
  Parameter* beta_ = nullptr;
};

}  // namespace isg::nn

#endif  // ISG_NN_H_
