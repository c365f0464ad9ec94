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

#ifndef ISG_FLOW_H_
#define ISG_FLOW_H_

// Invertible flow blocks. Every block is written once against a backend:
// AdOps records on the autodiff tape for training, NumOps<S> evaluates in
// plain S precision (float or double) for sampling and round-trip checks.

#include <string>
#include <type_traits>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "isg/ad.h"
#include "isg/features.h"
#include "isg/nn.h"

namespace isg::flow {

using ad::Parameter;
using Index = Eigen::Index;

class AdOps {
 public:
  using T = ad::Var;

  T param(Parameter& p) { return ad::param(p); }
  T constant(const Matrix& m) { return ad::constant(m); }
  Matrix value(const T& a) const { return a.value(); }
  T zero() { return ad::constant_scalar(0.0); }

  T add(const T& a, const T& b) { return ad::add(a, b); }
  T sub(const T& a, const T& b) { return ad::sub(a, b); }
  T mul(const T& a, const T& b) { return ad::mul(a, b); }
  T matmul(const T& a, const T& b) { return ad::matmul(a, b); }
  T scale(const T& a, double s) { return ad::scale(a, s); }
  T exp(const T& a) { return ad::exp(a); }
  T tanh(const T& a) { return ad::tanh(a); }
  T sigmoid(const T& a) { return ad::sigmoid(a); }
  T sum(const T& a) { return ad::sum(a); }
  T slice_cols(const T& a, Index s, Index n) { return ad::slice_cols(a, s, n); }
  T slice_rows(const T& a, Index s, Index n) { return ad::slice_rows(a, s, n); }
  T concat_cols(const std::vector<T>& p) { return ad::concat_cols(p); }
  T concat_rows(const std::vector<T>& p) { return ad::concat_rows(p); }
  T gather_rows(const T& a, const std::vector<int>& i) { return ad::gather_rows(a, i); }
  T im2col(const T& x, int k, int d) { return ad::im2col(x, k, d); }
  T logabsdet(const T& w) { return ad::logabsdet(w); }
  T group_mix(const T& x, const T& w, const std::vector<int>& perm) {
    return ad::group_mix(x, w, perm);
  }
  T lstm(const T& x, const T& h, const T& c, const T& w, const T& b) {
    return ad::lstm_cell(x, h, c, w, b);
  }
};

template <typename S>
class NumOps {
 public:
  using T = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

  explicit NumOps(bool cache_inverse = true) : cache_inverse_(cache_inverse) {}

  const T& param(Parameter& p) {
    if constexpr (std::is_same_v<S, double>) {
      return p.value;
    } else {
      auto it = cast_.find(&p);
      if (it == cast_.end()) it = cast_.emplace(&p, p.value.template cast<S>()).first;
      return it->second;
    }
  }
  // W^-1 of a square parameter, memoized per backend instance when enabled.
  T inverse(Parameter& p) {
    if (cache_inverse_) {
      auto it = inverse_.find(&p);
      if (it != inverse_.end()) return it->second;
    }
    ++inversions_;
    T inv = param(p).partialPivLu().inverse();
    if (cache_inverse_) inverse_.emplace(&p, inv);
    return inv;
  }
  int inversions() const { return inversions_; }

  T constant(const Matrix& m) { return m.template cast<S>(); }
  Matrix value(const T& a) const { return a.template cast<double>(); }
  T zero() { return T::Zero(1, 1); }

  T add(const T& a, const T& b) { return binary(a, b, [](auto x, auto y) { return x + y; }); }
  T sub(const T& a, const T& b) { return binary(a, b, [](auto x, auto y) { return x - y; }); }
  T mul(const T& a, const T& b) { return binary(a, b, [](auto x, auto y) { return x * y; }); }
  T matmul(const T& a, const T& b) { return a * b; }
  T scale(const T& a, double s) { return a * static_cast<S>(s); }
  T exp(const T& a) { return a.array().exp().matrix(); }
  T tanh(const T& a) { return a.array().tanh().matrix(); }
  T sigmoid(const T& a) {
    return (S(1) / (S(1) + (-a.array()).exp())).matrix();
  }
  T sum(const T& a) { return T::Constant(1, 1, a.sum()); }
  T slice_cols(const T& a, Index s, Index n) { return a.middleCols(s, n); }
  T slice_rows(const T& a, Index s, Index n) { return a.middleRows(s, n); }
  T concat_cols(const std::vector<T>& parts) {
    Index cols = 0;
    for (const T& p : parts) cols += p.cols();
    T out(parts.empty() ? 0 : parts[0].rows(), cols);
    Index at = 0;
    for (const T& p : parts) {
      out.middleCols(at, p.cols()) = p;
      at += p.cols();
    }
    return out;
  }
  T concat_rows(const std::vector<T>& parts) {
    Index rows = 0;
    for (const T& p : parts) rows += p.rows();
    T out(rows, parts.empty() ? 0 : parts[0].cols());
    Index at = 0;
    for (const T& p : parts) {
      out.middleRows(at, p.rows()) = p;
      at += p.rows();
    }
    return out;
  }
  T gather_rows(const T& a, const std::vector<int>& idx) {
    T out(static_cast<Index>(idx.size()), a.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = a.row(idx[i]);
    return out;
  }
  T im2col(const T& x, int kernel, int dilation) {
    const Index t_len = x.rows(), ch = x.cols();
    const Index pad = static_cast<Index>(dilation) * (kernel - 1) / 2;
    T v = T::Zero(t_len, kernel * ch);
    for (Index t = 0; t < t_len; ++t) {
      for (int k = 0; k < kernel; ++k) {
        const Index src = t - pad + static_cast<Index>(k) * dilation;
        if (src >= 0 && src < t_len) v.block(t, k * ch, 1, ch) = x.row(src);
      }
    }
    return v;
  }
  T logabsdet(const T& w) {
    Eigen::PartialPivLU<T> lu(w);
    return T::Constant(1, 1, lu.matrixLU().diagonal().array().abs().log().sum());
  }
  T group_mix(const T& x, const T& w, const std::vector<int>& perm) {
    const Index g = w.rows(), groups = x.cols() / g;
    T out(x.rows(), x.cols());
    T block(x.rows(), g);
    for (Index j = 0; j < groups; ++j) {
      for (Index k = 0; k < g; ++k) block.col(k) = x.col(perm[j * g + k]);
      const T mixed = block * w;
      for (Index k = 0; k < g; ++k) out.col(perm[j * g + k]) = mixed.col(k);
    }
    return out;
  }
  T lstm(const T& x, const T& h, const T& c, const T& w, const T& b) {
    const Index hid = h.cols();
    T xh(1, x.cols() + hid);
    xh << x, h;
    const T g = xh * w + b;
    auto sig = [](const auto& v) { return (S(1) / (S(1) + (-v.array()).exp())).matrix(); };
    const T i = sig(g.middleCols(0, hid));
    const T f = sig(g.middleCols(hid, hid));
    const T cc = g.middleCols(2 * hid, hid).array().tanh().matrix();
    const T o = sig(g.middleCols(3 * hid, hid));
    T out(1, 2 * hid);
    const T c2 = (f.array() * c.array() + i.array() * cc.array()).matrix();
    out << (o.array() * c2.array().tanh()).matrix(), c2;
    return out;
  }

 private:
  template <typename F>
  static T binary(const T& a, const T& b, F f) {
    if (a.rows() == b.rows() && a.cols() == b.cols()) return f(a.array(), b.array()).matrix();
    if (b.rows() == 1 && b.cols() == a.cols()) {
      return f(a.array(), b.replicate(a.rows(), 1).array()).matrix();
    }
    if (b.size() == 1) return f(a.array(), T::Constant(a.rows(), a.cols(), b(0, 0)).array()).matrix();
    throw std::invalid_argument("flow backend: incompatible shapes");
  }

  bool cache_inverse_;
  int inversions_ = 0;
  std::unordered_map<const Parameter*, T> cast_;
  std::unordered_map<const Parameter*, T> inverse_;
};

// Per-channel affine normalization y = x * exp(logs) + bias.
class ActNorm {
 public:
  ActNorm(nn::ParameterStore& store, const std::string& name, int channels);

  template <typename Ops>
  std::pair<typename Ops::T, typename Ops::T> forward(Ops& ops, const typename Ops::T& x) const {
    const auto& logs = ops.param(*logs_);
    auto y = ops.add(ops.mul(x, ops.exp(logs)), ops.param(*bias_));
    return {y, ops.scale(ops.sum(logs), static_cast<double>(x.rows()))};
  }
  template <typename Ops>
  typename Ops::T inverse(Ops& ops, const typename Ops::T& y) const {
    const auto& logs = ops.param(*logs_);
    return ops.mul(ops.sub(y, ops.param(*bias_)), ops.exp(ops.scale(logs, -1.0)));
  }

  // Sets the parameters so that x maps to zero mean and unit variance.
  void initialize(const Matrix& x);
  void set_identity();
  Parameter& logs() { return *logs_; }
  Parameter& bias() { return *bias_; }

 private:
  Parameter* logs_;
  Parameter* bias_;
};

// Channel mixing with one shared g x g matrix applied to every group. Group j
// takes g/2 consecutive channels from each half of the frame vector; with
// g == channels this is a full invertible 1x1 convolution.
class InvertibleMix {
 public:
  InvertibleMix(nn::ParameterStore& store, const std::string& name, int channels,
                int group, nn::Rng& rng);

  template <typename Ops>
  std::pair<typename Ops::T, typename Ops::T> forward(Ops& ops, const typename Ops::T& x) const {
    const auto& w = ops.param(*w_);
    const double copies = static_cast<double>(x.rows()) * (channels_ / group_);
    return {ops.group_mix(x, w, perm_), ops.scale(ops.logabsdet(w), copies)};
  }
  template <typename Ops>
  typename Ops::T inverse(Ops& ops, const typename Ops::T& y) const {
    return ops.group_mix(y, ops.inverse(*w_), perm_);
  }

  static std::vector<int> group_layout(int channels, int group);
  void set_identity();
  Parameter& weight() { return *w_; }
  int group() const { return group_; }
  const std::vector<int>& layout() const { return perm_; }

 private:
  Parameter* w_;
  int channels_;
  int group_;
  std::vector<int> perm_;
};

struct WaveNetConfig {
  int hidden = 192;
  int kernel = 5;
  int layers = 4;
  int dilation_rate = 1;
  int cond_dim = 0;
};

void to_json(nlohmann::json& j, const WaveNetConfig& c);
void from_json(const nlohmann::json& j, WaveNetConfig& c);

// Affine coupling: the first half of the channels passes through and drives a
// gated dilated-convolution stack that emits shift and log-scale for the
// second half. The output projection starts at zero, so a fresh coupling is
// the identity.
class WaveNetCoupling {
 public:
  WaveNetCoupling(nn::ParameterStore& store, const std::string& name, int channels,
                  const WaveNetConfig& config, nn::Rng& rng);

  template <typename Ops>
  std::pair<typename Ops::T, typename Ops::T> forward(Ops& ops, const typename Ops::T& x,
                                                      const typename Ops::T* cond) const {
    auto xa = ops.slice_cols(x, 0, half_);
    auto xb = ops.slice_cols(x, half_, channels_ - half_);
    auto [m, logs] = shift_logscale(ops, xa, cond);
    auto yb = ops.add(ops.mul(xb, ops.exp(logs)), m);
    return {ops.concat_cols({xa, yb}), ops.sum(logs)};
  }
  template <typename Ops>
  typename Ops::T inverse(Ops& ops, const typename Ops::T& y, const typename Ops::T* cond) const {
    auto ya = ops.slice_cols(y, 0, half_);
    auto yb = ops.slice_cols(y, half_, channels_ - half_);
    auto [m, logs] = shift_logscale(ops, ya, cond);
    auto xb = ops.mul(ops.sub(yb, m), ops.exp(ops.scale(logs, -1.0)));
    return ops.concat_cols({ya, xb});
  }

  std::vector<Parameter*> output_parameters() { return {end_w_, end_b_}; }

 private:
  template <typename Ops>
  std::pair<typename Ops::T, typename Ops::T> shift_logscale(Ops& ops, const typename Ops::T& xa,
                                                             const typename Ops::T* cond) const {
    using T = typename Ops::T;
    const Index hid = cfg_.hidden;
    T h = ops.add(ops.matmul(xa, ops.param(*start_w_)), ops.param(*start_b_));
    T skip;
    int dilation = 1;
    for (int i = 0; i < cfg_.layers; ++i) {
      const Layer& l = layers_[static_cast<std::size_t>(i)];
      T pre = ops.add(ops.matmul(ops.im2col(h, cfg_.kernel, dilation), ops.param(*l.in_w)),
                      ops.param(*l.in_b));
      if (cond != nullptr && l.cond_w != nullptr) {
        pre = ops.add(pre, ops.matmul(*cond, ops.param(*l.cond_w)));
      }
      T acts = ops.mul(ops.tanh(ops.slice_cols(pre, 0, hid)),
                       ops.sigmoid(ops.slice_cols(pre, hid, hid)));
      T rs = ops.add(ops.matmul(acts, ops.param(*l.rs_w)), ops.param(*l.rs_b));
      T s;
      if (i + 1 < cfg_.layers) {
        h = ops.add(h, ops.slice_cols(rs, 0, hid));
        s = ops.slice_cols(rs, hid, hid);
      } else {
        s = rs;
      }
      skip = i == 0 ? s : ops.add(skip, s);
      dilation *= cfg_.dilation_rate;
    }
    T st = ops.add(ops.matmul(skip, ops.param(*end_w_)), ops.param(*end_b_));
    const Index nb = channels_ - half_;
    return {ops.slice_cols(st, 0, nb), ops.slice_cols(st, nb, nb)};
  }

  struct Layer {
    Parameter* in_w;
    Parameter* in_b;
    Parameter* cond_w = nullptr;
    Parameter* rs_w;
    Parameter* rs_b;
  };

  int channels_;
  int half_;
  WaveNetConfig cfg_;
  Parameter* start_w_;
  Parameter* start_b_;
  std::vector<Layer> layers_;
  Parameter* end_w_;
  Parameter* end_b_;
};

// Frame folding: T x C -> T/s x sC, row i = [x_{si}, x_{si+1}, ...].
template <typename Ops>
typename Ops::T squeeze(Ops& ops, const typename Ops::T& x, int s) {
  if (s == 1) return x;
  const int rows = static_cast<int>(x.rows()) / s;
  std::vector<typename Ops::T> parts;
  for (int p = 0; p < s; ++p) {
    std::vector<int> idx(static_cast<std::size_t>(rows));
    for (int i = 0; i < rows; ++i) idx[static_cast<std::size_t>(i)] = s * i + p;
    parts.push_back(ops.gather_rows(x, idx));
  }
  return ops.concat_cols(parts);
}

template <typename Ops>
typename Ops::T unsqueeze(Ops& ops, const typename Ops::T& z, int s) {
  if (s == 1) return z;
  const Index c = z.cols() / s;
  const int rows = static_cast<int>(z.rows());
  std::vector<typename Ops::T> parts;
  for (int p = 0; p < s; ++p) parts.push_back(ops.slice_cols(z, p * c, c));
  std::vector<int> idx(static_cast<std::size_t>(rows) * s);
  for (int t = 0; t < rows * s; ++t) idx[static_cast<std::size_t>(t)] = (t % s) * rows + t / s;
  return ops.gather_rows(ops.concat_rows(parts), idx);
}

struct FlowDecoderConfig {
  int channels = 220;  // frame channels before squeezing
  int n_blocks = 12;
  int group = 10;
  int squeeze = 2;
  WaveNetConfig wavenet;

  int flow_channels() const { return channels * squeeze; }
  // Throws ValidationError when the squeezed channel count is not divisible
  // by the group size or the group size is odd.
  void validate() const;
};

void to_json(nlohmann::json& j, const FlowDecoderConfig& c);
void from_json(const nlohmann::json& j, FlowDecoderConfig& c);

struct FlowResult {
  Matrix z;
  double logdet = 0.0;
};

// Squeeze, then n_blocks of (actnorm, grouped mixing, coupling), then unsqueeze.
class FlowDecoder {
 public:
  FlowDecoder(nn::ParameterStore& store, const std::string& prefix,
              const FlowDecoderConfig& config, nn::Rng& rng);

  template <typename Ops>
  std::pair<typename Ops::T, typename Ops::T> forward(Ops& ops, const typename Ops::T& x,
                                                      const typename Ops::T* cond = nullptr) const {
    check_frames(x.rows(), x.cols(), false);
    auto h = squeeze(ops, x, cfg_.squeeze);
    auto logdet = ops.zero();
    for (const Block& b : blocks_) {
      auto [h1, l1] = b.norm.forward(ops, h);
      auto [h2, l2] = b.mix.forward(ops, h1);
      auto [h3, l3] = b.coupling.forward(ops, h2, cond);
      h = h3;
      logdet = ops.add(logdet, ops.add(l1, ops.add(l2, l3)));
    }
    return {unsqueeze(ops, h, cfg_.squeeze), logdet};
  }

  template <typename Ops>
  typename Ops::T inverse(Ops& ops, const typename Ops::T& z,
                          const typename Ops::T* cond = nullptr) const {
    if (z.rows() == 0) return z;
    check_frames(z.rows(), z.cols(), true);
    auto h = squeeze(ops, z, cfg_.squeeze);
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) {
      h = it->coupling.inverse(ops, h, cond);
      h = it->mix.inverse(ops, h);
      h = it->norm.inverse(ops, h);
    }
    return unsqueeze(ops, h, cfg_.squeeze);
  }

  FlowResult forward(const Matrix& x) const;
  Matrix inverse(const Matrix& z) const;

  // Data-dependent actnorm initialization from one representative batch.
  void initialize(const Matrix& x);
  // Actnorm to identity, mixing to I; couplings are left as they are.
  void set_identity();
  const FlowDecoderConfig& config() const { return cfg_; }

  struct Block {
    ActNorm norm;
    InvertibleMix mix;
    WaveNetCoupling coupling;
  };
  std::vector<Block>& blocks() { return blocks_; }

 private:
  void check_frames(Index rows, Index cols, bool allow_empty) const;

  FlowDecoderConfig cfg_;
  std::vector<Block> blocks_;
};

}  // namespace isg::flow

#endif  // ISG_FLOW_H_
