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

#include "isg/flow.h"

#include <cmath>
#include <random>
#include <string>

namespace isg::flow {

ActNorm::ActNorm(nn::ParameterStore& store, const std::string& name, int channels) {
  logs_ = &store.add(name + ".logs", Matrix::Zero(1, channels));
  bias_ = &store.add(name + ".bias", Matrix::Zero(1, channels));
}

void ActNorm::initialize(const Matrix& x) {
  if (x.rows() == 0) return;
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::RowVectorXd var =
      (x.rowwise() - mean).array().square().colwise().mean().matrix();
  // Channels that are constant in the batch keep unit scale; the rest are
  // floored at std 0.01 so near-constant channels are not blown up.
  logs_->value =
      (var.array() < 1e-12).select(0.0, -0.5 * var.array().max(1e-4).log()).matrix();
  bias_->value = (-mean.array() * logs_->value.array().exp()).matrix();
}

void ActNorm::set_identity() {
  logs_->value.setZero();
  bias_->value.setZero();
}

std::vector<int> InvertibleMix::group_layout(int channels, int group) {
  std::vector<int> perm(static_cast<std::size_t>(channels));
  if (group == channels) {
    for (int c = 0; c < channels; ++c) perm[static_cast<std::size_t>(c)] = c;
    return perm;
  }
  const int half_group = group / 2;
  const int half = channels / 2;
  for (int j = 0; j < channels / group; ++j) {
    for (int k = 0; k < group; ++k) {
      perm[static_cast<std::size_t>(j * group + k)] =
          (k / half_group) * half + j * half_group + k % half_group;
    }
  }
  return perm;
}

InvertibleMix::InvertibleMix(nn::ParameterStore& store, const std::string& name,
                             int channels, int group, nn::Rng& rng)
    : channels_(channels), group_(group), perm_(group_layout(channels, group)) {
  std::normal_distribution<double> n01;
  Matrix a(group, group);
  for (Index i = 0; i < a.size(); ++i) a.data()[i] = n01(rng);
  Matrix q = Eigen::HouseholderQR<Matrix>(a).householderQ();
  if (q.determinant() < 0) q.col(0) *= -1.0;
  w_ = &store.add(name + ".weight", std::move(q));
}

void InvertibleMix::set_identity() { w_->value.setIdentity(); }

void to_json(nlohmann::json& j, const WaveNetConfig& c) {
  j = {{"hidden", c.hidden}, {"kernel", c.kernel}, {"layers", c.layers},
       {"dilation_rate", c.dilation_rate}, {"cond_dim", c.cond_dim}};
}

void from_json(const nlohmann::json& j, WaveNetConfig& c) {
  c.hidden = j.value("hidden", c.hidden);
  c.kernel = j.value("kernel", c.kernel);
  c.layers = j.value("layers", c.layers);
  c.dilation_rate = j.value("dilation_rate", c.dilation_rate);
  c.cond_dim = j.value("cond_dim", c.cond_dim);
}

WaveNetCoupling::WaveNetCoupling(nn::ParameterStore& store, const std::string& name,
                                 int channels, const WaveNetConfig& config, nn::Rng& rng)
    : channels_(channels), half_(channels / 2), cfg_(config) {
  if (channels < 2 || config.hidden < 1 || config.layers < 1 || config.kernel < 1 ||
      config.kernel % 2 == 0 || config.dilation_rate < 1 || config.cond_dim < 0) {
    throw ValidationError("coupling: invalid configuration");
  }
  const Index hid = config.hidden;
  start_w_ = &store.add(name + ".start.weight", nn::xavier_uniform(half_, hid, rng, half_, hid));
  start_b_ = &store.add(name + ".start.bias", Matrix::Zero(1, hid));
  for (int i = 0; i < config.layers; ++i) {
    const std::string ln = name + ".layer" + std::to_string(i);
    Layer l;
    const Index k = config.kernel;
    l.in_w = &store.add(ln + ".in.weight",
                        nn::xavier_uniform(k * hid, 2 * hid, rng, k * hid, k * 2 * hid));
    l.in_b = &store.add(ln + ".in.bias", Matrix::Zero(1, 2 * hid));
    if (config.cond_dim > 0) {
      l.cond_w = &store.add(ln + ".cond.weight",
                            nn::xavier_uniform(config.cond_dim, 2 * hid, rng,
                                               config.cond_dim, 2 * hid));
    }
    const Index rs = i + 1 < config.layers ? 2 * hid : hid;
    l.rs_w = &store.add(ln + ".res_skip.weight", nn::xavier_uniform(hid, rs, rng, hid, rs));
    l.rs_b = &store.add(ln + ".res_skip.bias", Matrix::Zero(1, rs));
    layers_.push_back(l);
  }
  const Index out = 2 * (channels - half_);
  end_w_ = &store.add(name + ".end.weight", Matrix::Zero(hid, out));
  end_b_ = &store.add(name + ".end.bias", Matrix::Zero(1, out));
}

void FlowDecoderConfig::validate() const {
  if (channels < 1 || n_blocks < 1 || squeeze < 1) {
    throw ValidationError("flow decoder: channels, n_blocks and squeeze must be >= 1");
  }
  if (group < 2 || group % 2 != 0) {
    throw ValidationError("flow decoder: group size must be even, got " + std::to_string(group));
  }
  if (flow_channels() % group != 0) {
    throw ValidationError("flow decoder: " + std::to_string(flow_channels()) +
                          " channels are not divisible by group size " +
                          std::to_string(group));
  }
}

void to_json(nlohmann::json& j, const FlowDecoderConfig& c) {
  j = {{"channels", c.channels}, {"n_blocks", c.n_blocks}, {"group", c.group},
       {"squeeze", c.squeeze}, {"wavenet", c.wavenet}};
}

void from_json(const nlohmann::json& j, FlowDecoderConfig& c) {
  c.channels = j.value("channels", c.channels);
  c.n_blocks = j.value("n_blocks", c.n_blocks);
  c.group = j.value("group", c.group);
  c.squeeze = j.value("squeeze", c.squeeze);
  if (j.contains("wavenet")) c.wavenet = j.at("wavenet").get<WaveNetConfig>();
}

FlowDecoder::FlowDecoder(nn::ParameterStore& store, const std::string& prefix,
                         const FlowDecoderConfig& config, nn::Rng& rng)
    : cfg_(config) {
  cfg_.validate();
  const int c = cfg_.flow_channels();
  blocks_.reserve(static_cast<std::size_t>(cfg_.n_blocks));
  for (int b = 0; b < cfg_.n_blocks; ++b) {
    const std::string name = prefix + ".block" + std::to_string(b);
    blocks_.push_back(Block{ActNorm(store, name + ".actnorm", c),
                            InvertibleMix(store, name + ".mix", c, cfg_.group, rng),
                            WaveNetCoupling(store, name + ".coupling", c, cfg_.wavenet, rng)});
  }
}

void FlowDecoder::check_frames(Index rows, Index cols, bool allow_empty) const {
  if (cols != cfg_.channels) {
    throw ValidationError("flow decoder: expected " + std::to_string(cfg_.channels) +
                          " channels, got " + std::to_string(cols));
  }
  if (rows == 0 && !allow_empty) throw ValidationError("flow decoder: empty input");
  if (rows % cfg_.squeeze != 0) {
    throw ValidationError("flow decoder: frame count " + std::to_string(rows) +
                          " is not a multiple of " + std::to_string(cfg_.squeeze));
  }
}

FlowResult FlowDecoder::forward(const Matrix& x) const {
  NumOps<double> ops;
  auto [z, ld] = forward(ops, x);
  return {z, ld(0, 0)};
}

Matrix FlowDecoder::inverse(const Matrix& z) const {
  NumOps<double> ops;
  return inverse(ops, z);
}

void FlowDecoder::initialize(const Matrix& x) {
  check_frames(x.rows(), x.cols(), false);
  NumOps<double> ops;
  Matrix h = squeeze(ops, x, cfg_.squeeze);
  for (Block& b : blocks_) {
    b.norm.initialize(h);
    h = b.norm.forward(ops, h).first;
    h = b.mix.forward(ops, h).first;
    h = b.coupling.forward(ops, h, nullptr).first;
  }
}

void FlowDecoder::set_identity() {
  for (Block& b : blocks_) {
    b.norm.set_identity();
    b.mix.set_identity();
  }
}

}  // namespace isg::flow
