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

#include "isg/adversarial.h"

#include <cmath>

namespace isg {

using nn::Var;
namespace ad = isg::ad;

DiscriminatorConfig DiscriminatorConfig::toy() {
  DiscriminatorConfig c;
  c.width = 64;
  c.pose_dim = 30;
  return c;
}

void DiscriminatorConfig::validate() const {
  if (n_layers < 1 || width < 1 || n_mels < 1 || pose_dim < 1 || frame_ratio < 1 ||
      d_steps_per_g < 1) {
    throw ValidationError("discriminator: sizes must be >= 1");
  }
  if (!(gan_weight >= 0.0)) throw ValidationError("discriminator: gan_weight must be >= 0");
}

void to_json(nlohmann::json& j, const DiscriminatorConfig& c) {
  j = {{"n_layers", c.n_layers},       {"width", c.width},
       {"gan_weight", c.gan_weight},   {"n_mels", c.n_mels},
       {"pose_dim", c.pose_dim},       {"frame_ratio", c.frame_ratio},
       {"minimax", c.minimax},         {"d_steps_per_g", c.d_steps_per_g}};
}

void from_json(const nlohmann::json& j, DiscriminatorConfig& c) {
  const DiscriminatorConfig d = j.value("preset", std::string("reference")) == "toy"
                                    ? DiscriminatorConfig::toy()
                                    : DiscriminatorConfig::reference();
  c.n_layers = j.value("n_layers", d.n_layers);
  c.width = j.value("width", d.width);
  c.gan_weight = j.value("gan_weight", d.gan_weight);
  c.n_mels = j.value("n_mels", d.n_mels);
  c.pose_dim = j.value("pose_dim", d.pose_dim);
  c.frame_ratio = j.value("frame_ratio", d.frame_ratio);
  c.minimax = j.value("minimax", d.minimax);
  c.d_steps_per_g = j.value("d_steps_per_g", d.d_steps_per_g);
}

Matrix upsample_matrix(Eigen::Index mel_frames, Eigen::Index motion_frames, int ratio) {
  Matrix u = Matrix::Zero(mel_frames, motion_frames);
  for (Eigen::Index t = 0; t < mel_frames; ++t) {
    const double pos = static_cast<double>(t) / ratio;
    const auto k = static_cast<Eigen::Index>(std::floor(pos));
    if (k + 1 >= motion_frames) {
      u(t, motion_frames - 1) = 1.0;
    } else {
      const double a = pos - static_cast<double>(k);
      u(t, k) = 1.0 - a;
      u(t, k + 1) += a;
    }
  }
  return u;
}

Discriminator::Discriminator(nn::ParameterStore& store, const std::string& prefix,
                             const DiscriminatorConfig& config, nn::Rng& rng)
    : config_(config), prefix_(prefix) {
  config_.validate();
  lstm_ = nn::LstmStack(store, prefix + ".lstm", config_.n_mels + config_.pose_dim,
                        config_.width, config_.n_layers, rng);
  head_ = nn::Linear(store, prefix + ".head", config_.width, 1, rng);
  head_.weight()->value.setZero();
}

Var Discriminator::operator()(const Var& mel, const Var& motion) const {
  const Eigen::Index frames = mel.rows();
  const int r = config_.frame_ratio;
  if (frames == 0) throw ValidationError("discriminate: empty mel");
  if (mel.cols() != config_.n_mels || motion.cols() != config_.pose_dim) {
    throw ValidationError("discriminate: channel count mismatch");
  }
  if (motion.rows() != (frames + r - 1) / r) {
    throw ValidationError("discriminate: motion has " + std::to_string(motion.rows()) +
                          " frames, mel needs " + std::to_string((frames + r - 1) / r));
  }
  const Var up = ad::matmul(ad::constant(upsample_matrix(frames, motion.rows(), r)), motion);
  const Var h = lstm_.run(ad::concat_cols({mel, up}));
  return ad::sigmoid(head_(ad::row(h, frames - 1)));
}

GanLosses gan_losses(const Var& d_real, const Var& d_fake, double w, bool minimax) {
  const Var real = ad::clamp(d_real, kGanEps, 1.0 - kGanEps);
  const Var fake = ad::clamp(d_fake, kGanEps, 1.0 - kGanEps);
  const Var one_minus_fake = ad::add_scalar(ad::neg(fake), 1.0);
  GanLosses out;
  out.d_loss = ad::neg(ad::add(ad::log(real), ad::log(one_minus_fake)));
  out.g_loss = minimax ? ad::scale(ad::log(one_minus_fake), w)
                       : ad::scale(ad::log(fake), -w);
  return out;
}

}  // namespace isg
