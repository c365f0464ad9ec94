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

#ifndef ISG_GESTURE_H_
#define ISG_GESTURE_H_

// Autoregressive gesture decoder driven by the speech core's attention
// states (or mel frames), and its teacher-forcing schedule.

#include <string>
#include <vector>

#include "isg/features.h"
#include "isg/nn.h"
#include "json.hpp"

namespace isg {

enum class GestureInput { kAttentionStates, kMelFrames };
enum class InitPose { kMean, kZero };

std::string to_string(GestureInput g);
GestureInput gesture_input_from_string(const std::string& s);  // "attn" | "mel"

struct GestureDecoderConfig {
  int n_layers = 4;
  int width = 512;
  GestureInput input_source = GestureInput::kAttentionStates;
  int frame_ratio = 4;
  InitPose init_pose = InitPose::kMean;
  int pose_dim = 45;
  int input_dim = 1024;  // attention recurrence width or n_mels

  static GestureDecoderConfig reference() { return {}; }
  static GestureDecoderConfig toy();  // 2 x 64
  void validate() const;
};

void to_json(nlohmann::json& j, const GestureDecoderConfig& c);
void from_json(const nlohmann::json& j, GestureDecoderConfig& c);

struct SamplingSchedule {
  double p_start = 1.0;
  int hold_epochs = 5;
  int decay_epochs = 40;
  double p_end = 0.2;

  void validate() const;
};

void to_json(nlohmann::json& j, const SamplingSchedule& s);
void from_json(const nlohmann::json& j, SamplingSchedule& s);

double teacher_forcing_probability(int epoch, const SamplingSchedule& schedule);

// Rows 0, ratio, 2 ratio, ...; ceil(rows / ratio) of them.
Matrix select_frames(const Matrix& states, int ratio);
nn::Var select_frames(const nn::Var& states, int ratio);

struct GestureForward {
  nn::Var poses;                       // frames x pose_dim
  std::vector<bool> fed_ground_truth;  // frames 1.., scheduled mode only
};

class GestureDecoder {
 public:
  GestureDecoder(nn::ParameterStore& store, const std::string& prefix,
                 const GestureDecoderConfig& config, nn::Rng& init_rng);

  const GestureDecoderConfig& config() const { return config_; }
  const std::string& prefix() const { return prefix_; }

  // Frame t sees input row t and the previous pose. Frame 0 sees init_pose.
  // With a target, the previous pose is the ground truth with probability p
  // (independently per frame), otherwise the decoder's own output.
  GestureForward scheduled(const nn::Var& inputs, const Eigen::RowVectorXd& init_pose,
                           const Matrix& target, double p, nn::Rng& rng) const;
  GestureForward free_running(const nn::Var& inputs,
                              const Eigen::RowVectorXd& init_pose) const;

  // Mean pose or zeros following config().init_pose.
  Eigen::RowVectorXd initial_pose(const Eigen::RowVectorXd& mean_pose) const;

 private:
  GestureForward run(const nn::Var& inputs, const Eigen::RowVectorXd& init_pose,
                     const Matrix* target, double p, nn::Rng* rng) const;

  GestureDecoderConfig config_;
  std::string prefix_;
  nn::LstmStack lstm_;
  nn::Linear out_;
};

// Mean squared error over frames x channels. Throws on shape mismatch.
nn::Var gesture_loss(const nn::Var& pred, const Matrix& target);

}  // namespace isg

#endif  // ISG_GESTURE_H_
