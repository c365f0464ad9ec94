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

#include "isg/nn.h"

#include <cmath>
#include <stdexcept>

namespace isg::nn {

Parameter& ParameterStore::add(const std::string& name, Matrix init) {
  if (index_.count(name) != 0) {
    throw std::logic_error("duplicate parameter name: " + name);
  }
  index_[name] = params_.size();
  Parameter& p = params_.emplace_back();
  p.name = name;
  p.value = std::move(init);  // grad stays empty until first accumulated
  return p;
}

Parameter* ParameterStore::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

const Parameter* ParameterStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (Parameter& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const Parameter& p : params_) out.push_back(&p);
  return out;
}

std::vector<Parameter*> ParameterStore::with_prefix(const std::string& prefix) {
  std::vector<Parameter*> out;
  for (Parameter& p : params_) {
    if (p.name.rfind(prefix, 0) == 0) out.push_back(&p);
  }
  return out;
}

std::vector<Parameter*> ParameterStore::trainable() {
  std::vector<Parameter*> out;
  for (Parameter& p : params_) {
    if (!p.frozen) out.push_back(&p);
  }
  return out;
}

std::int64_t ParameterStore::count(const std::string& prefix) const {
  std::int64_t n = 0;
  for (const Parameter& p : params_) {
    if (p.name.rfind(prefix, 0) == 0) n += p.size();
  }
  return n;
}

void ParameterStore::zero_grad() {
  for (Parameter& p : params_) {
    if (p.grad.size() != 0) p.grad.setZero();
  }
}

void ParameterStore::set_frozen(const std::string& prefix, bool frozen) {
  for (Parameter* p : with_prefix(prefix)) p->frozen = frozen;
}

Matrix uniform(Index rows, Index cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  }
  return m;
}

Matrix xavier_uniform(Index rows, Index cols, Rng& rng, double fan_in,
                      double fan_out) {
  return uniform(rows, cols, std::sqrt(6.0 / (fan_in + fan_out)), rng);
}

Linear::Linear(ParameterStore& store, const std::string& name, Index in,
               Index out, Rng& rng, bool bias)
    : in_(in), out_(out) {
  w_ = &store.add(name + ".weight", xavier_uniform(in, out, rng, in, out));
  if (bias) b_ = &store.add(name + ".bias", Matrix::Zero(1, out));
}

Var Linear::operator()(const Var& x) const {
  Var y = ad::matmul(x, ad::param(*w_));
  if (b_ != nullptr) y = ad::add(y, ad::param(*b_));
  return y;
}

Conv1d::Conv1d(ParameterStore& store, const std::string& name, Index in,
               Index out, int kernel, Rng& rng, int dilation, bool bias)
    : kernel_(kernel), dilation_(dilation) {
  const double fan_in = static_cast<double>(in) * kernel;
  const double fan_out = static_cast<double>(out) * kernel;
  w_ = &store.add(name + ".weight",
                  xavier_uniform(kernel * in, out, rng, fan_in, fan_out));
  if (bias) b_ = &store.add(name + ".bias", Matrix::Zero(1, out));
}

Var Conv1d::operator()(const Var& x) const {
  Var cols = kernel_ == 1 ? x : ad::im2col(x, kernel_, dilation_);
  Var y = ad::matmul(cols, ad::param(*w_));
  if (b_ != nullptr) y = ad::add(y, ad::param(*b_));
  return y;
}

Embedding::Embedding(ParameterStore& store, const std::string& name,
                     Index vocab, Index dim, Rng& rng) {
  const double bound = std::sqrt(3.0) * std::sqrt(2.0 / (vocab + dim));
  table_ = &store.add(name + ".weight", uniform(vocab, dim, bound, rng));
}

Var Embedding::operator()(const std::vector<int>& ids) const {
  return ad::gather_rows(ad::param(*table_), ids);
}

LstmCell::LstmCell(ParameterStore& store, const std::string& name, Index in,
                   Index hidden, Rng& rng)
    : hidden_(hidden) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  w_ = &store.add(name + ".weight", uniform(in + hidden, 4 * hidden, bound, rng));
  Matrix b = Matrix::Zero(1, 4 * hidden);
  b.block(0, hidden, 1, hidden).setOnes();  // forget gate
  b_ = &store.add(name + ".bias", std::move(b));
}

LstmState LstmCell::initial_state() const {
  return {ad::constant(Matrix::Zero(1, hidden_)),
          ad::constant(Matrix::Zero(1, hidden_))};
}

LstmState LstmCell::operator()(const Var& x, const LstmState& state) const {
  Var hc = ad::lstm_cell(x, state.h, state.c, ad::param(*w_), ad::param(*b_));
  return {ad::slice_cols(hc, 0, hidden_), ad::slice_cols(hc, hidden_, hidden_)};
}

Var run_lstm(const LstmCell& cell, const Var& x, bool reverse) {
  const Index t_len = x.rows();
  if (t_len == 0) return ad::constant(Matrix::Zero(0, cell.hidden()));
  std::vector<Var> outs(static_cast<std::size_t>(t_len));
  LstmState s = cell.initial_state();
  // Bind parameters once so the tape holds a single leaf per sequence.
  Var w = ad::param(*cell.weight());
  Var b = ad::param(*cell.bias());
  const Index hid = cell.hidden();
  for (Index k = 0; k < t_len; ++k) {
    const Index t = reverse ? t_len - 1 - k : k;
    Var hc = ad::lstm_cell(ad::row(x, t), s.h, s.c, w, b);
    s = {ad::slice_cols(hc, 0, hid), ad::slice_cols(hc, hid, hid)};
    outs[static_cast<std::size_t>(t)] = s.h;
  }
  return ad::concat_rows(outs);
}

LstmStack::LstmStack(ParameterStore& store, const std::string& name, Index in,
                     Index hidden, int layers, Rng& rng) {
  for (int k = 0; k < layers; ++k) {
    cells_.emplace_back(store, name + ".layer" + std::to_string(k), k == 0 ? in : hidden,
                        hidden, rng);
  }
}

std::vector<LstmState> LstmStack::initial_state() const {
  std::vector<LstmState> s;
  for (const LstmCell& c : cells_) s.push_back(c.initial_state());
  return s;
}

Var LstmStack::step(const Var& x, std::vector<LstmState>& state) const {
  Var in = x;
  for (std::size_t k = 0; k < cells_.size(); ++k) {
    state[k] = cells_[k](in, state[k]);
    in = state[k].h;
  }
  return in;
}

Var LstmStack::run(const Var& x) const {
  Var y = x;
  for (const LstmCell& c : cells_) y = run_lstm(c, y);
  return y;
}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name,
                     Index dim) {
  gamma_ = &store.add(name + ".gamma", Matrix::Ones(1, dim));
  beta_ = &store.add(name + ".beta", Matrix::Zero(1, dim));
}

Var LayerNorm::operator()(const Var& x) const {
  return ad::add(ad::mul(ad::layer_norm_rows(x), ad::param(*gamma_)),
                 ad::param(*beta_));
}

}  // namespace isg::nn
