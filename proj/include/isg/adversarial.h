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

#ifndef ISG_ADVERSARIAL_H_
#define ISG_ADVERSARIAL_H_

// Sequence discriminator over time-aligned mel + motion and the GAN losses.

#include <string>

#include "isg/features.h"
#include "isg/nn.h"
#include "json.hpp"

namespace isg {

struct DiscriminatorConfig {
  int n_layers = 2;
  int width = 1024;
  double gan_weight = 0.05;
  int n_mels = 80;
  int pose_dim = 45;
  int frame_ratio = 4;
  bool minimax = false;  // generator loss w * ln(1 - D) instead of -w * ln D
  int d_steps_per_g = 1;

  static DiscriminatorConfig reference() { return {}; }
  static DiscriminatorConfig toy();  // 2 x 64
  void validate() const;
};

void to_json(nlohmann::json& j, const DiscriminatorConfig& c);
void from_json(const nlohmann::json& j, DiscriminatorConfig& c);

// frames x ceil(frames / ratio) linear interpolation matrix: motion frame k
// sits at mel frame k * ratio, later mel frames hold the last motion frame.
Matrix upsample_matrix(Eigen::Index mel_frames, Eigen::Index motion_frames, int ratio);

class Discriminator {
 public:
  Discriminator(nn::ParameterStore& store, const std::string& prefix,
                const DiscriminatorConfig& config, nn::Rng& init_rng);

  const DiscriminatorConfig& config() const { return config_; }
  const std::string& prefix() const { return prefix_; }

  // Probability (1 x 1) that the pair is real. Motion must have
  // ceil(mel frames / ratio) frames.
  nn::Var operator()(const nn::Var& mel, const nn::Var& motion) const;

 private:
  DiscriminatorConfig config_;
  std::string prefix_;
  nn::LstmStack lstm_;
  nn::Linear head_;
};

struct GanLosses {
  nn::Var d_loss;
  nn::Var g_loss;
};

inline constexpr double kGanEps = 1e-7;

// d_loss = -[ln d_real + ln(1 - d_fake)],
// g_loss = w * -ln d_fake (or w * ln(1 - d_fake) when minimax).
GanLosses gan_losses(const nn::Var& d_real, const nn::Var& d_fake, double gan_weight,
                     bool minimax = false);

}  // namespace isg

#endif  // ISG_ADVERSARIAL_H_
