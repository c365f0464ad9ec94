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

#include "isg/gesture.h"

#include <algorithm>
#include <random>

namespace isg {

using nn::Var;
namespace ad = isg::ad;

std::string to_string(GestureInput g) {
  return g == GestureInput::kAttentionStates ? "attn" : "mel";
}

GestureInput gesture_input_from_string(const std::string& s) {
  if (s == "attn") return GestureInput::kAttentionStates;
  if (s == "mel") return GestureInput::kMelFrames;
  throw ValidationError("gesture input must be 'attn' or 'mel', got '" + s + "'");
}

GestureDecoderConfig GestureDecoderConfig::toy() {
  GestureDecoderConfig c;
  c.n_layers = 2;
  c.width = 64;
  c.input_dim = 128;
  c.pose_dim = 30;
  return c;
}

void GestureDecoderConfig::validate() const {
  if (n_layers < 1 || width < 1 || pose_dim < 1 || input_dim < 1) {
    throw ValidationError("gesture decoder: layers, widths and dims must be >= 1");
  }
  if (frame_ratio < 1) throw ValidationError("gesture decoder: frame_ratio must be >= 1");
}

void to_json(nlohmann::json& j, const GestureDecoderConfig& c) {
  j = {{"n_layers", c.n_layers},
       {"width", c.width},
       {"input_source", to_string(c.input_source)},
       {"frame_ratio", c.frame_ratio},
       {"init_pose", c.init_pose == InitPose::kMean ? "mean" : "zero"},
       {"pose_dim", c.pose_dim},
       {"input_dim", c.input_dim}};
}

void from_json(const nlohmann::json& j, GestureDecoderConfig& c) {
  const GestureDecoderConfig d = j.value("preset", std::string("reference")) == "toy"
                                     ? GestureDecoderConfig::toy()
                                     : GestureDecoderConfig::reference();
  c.n_layers = j.value("n_layers", d.n_layers);
  c.width = j.value("width", d.width);
  c.input_source = gesture_input_from_string(j.value("input_source", to_string(d.input_source)));
  c.frame_ratio = j.value("frame_ratio", d.frame_ratio);
  const std::string init = j.value("init_pose", std::string("mean"));
  if (init != "mean" && init != "zero") throw ValidationError("init_pose must be mean or zero");
  c.init_pose = init == "mean" ? InitPose::kMean : InitPose::kZero;
  c.pose_dim = j.value("pose_dim", d.pose_dim);
  c.input_dim = j.value("input_dim", d.input_dim);
}

void SamplingSchedule::validate() const {
  if (!(0.0 <= p_end && p_end <= p_start && p_start <= 1.0)) {
    throw ValidationError("sampling schedule needs 0 <= p_end <= p_start <= 1");
  }
  if (hold_epochs < 0 || decay_epochs < 0) {
    throw ValidationError("sampling schedule epochs must be >= 0");
  }
}

void to_json(nlohmann::json& j, const SamplingSchedule& s) {
  j = {{"p_start", s.p_start}, {"hold_epochs", s.hold_epochs},
       {"decay_epochs", s.decay_epochs}, {"p_end", s.p_end}};
}

void from_json(const nlohmann::json& j, SamplingSchedule& s) {
  const SamplingSchedule d;
  s.p_start = j.value("p_start", d.p_start);
  s.hold_epochs = j.value("hold_epochs", d.hold_epochs);
  s.decay_epochs = j.value("decay_epochs", d.decay_epochs);
  s.p_end = j.value("p_end", d.p_end);
}

double teacher_forcing_probability(int epoch, const SamplingSchedule& s) {
  if (epoch < 0) throw ValidationError("epoch must be >= 0");
  if (epoch < s.hold_epochs) return s.p_start;
  if (epoch >= s.hold_epochs + s.decay_epochs) return s.p_end;
  const double frac = static_cast<double>(epoch - s.hold_epochs) / s.decay_epochs;
  return s.p_start - (s.p_start - s.p_end) * frac;
}

Matrix select_frames(const Matrix& states, int ratio) {
  if (ratio < 1) throw ValidationError("select_frames: ratio must be >= 1");
  const Eigen::Index n = (states.rows() + ratio - 1) / ratio;
  Matrix out(n, states.cols());
  for (Eigen::Index i = 0; i < n; ++i) out.row(i) = states.row(i * ratio);
  return out;
}

Var select_frames(const Var& states, int ratio) {
  if (ratio < 1) throw ValidationError("select_frames: ratio must be >= 1");
  if (ratio == 1) return states;
  std::vector<int> idx;
  for (Eigen::Index i = 0; i < states.rows(); i += ratio) idx.push_back(static_cast<int>(i));
  if (idx.empty()) return ad::constant(Matrix::Zero(0, states.cols()));
  return ad::gather_rows(states, idx);
}

GestureDecoder::GestureDecoder(nn::ParameterStore& store, const std::string& prefix,
                               const GestureDecoderConfig& config, nn::Rng& rng)
    : config_(config), prefix_(prefix) {
  config_.validate();
  lstm_ = nn::LstmStack(store, prefix + ".lstm", config_.input_dim + config_.pose_dim,
                        config_.width, config_.n_layers, rng);
  out_ = nn::Linear(store, prefix + ".out", config_.width, config_.pose_dim, rng);
}

Eigen::RowVectorXd GestureDecoder::initial_pose(const Eigen::RowVectorXd& mean_pose) const {
  if (config_.init_pose == InitPose::kZero || mean_pose.size() == 0) {
    return Eigen::RowVectorXd::Zero(config_.pose_dim);
  }
  return mean_pose;
}

GestureForward GestureDecoder::scheduled(const Var& inputs, const Eigen::RowVectorXd& init_pose,
                                         const Matrix& target, double p, nn::Rng& rng) const {
  if (target.rows() != inputs.rows() || target.cols() != config_.pose_dim) {
    throw ValidationError("gesture decoder: target must be " + std::to_string(inputs.rows()) +
                          " x " + std::to_string(config_.pose_dim));
  }
  return run(inputs, init_pose, &target, p, &rng);
}

GestureForward GestureDecoder::free_running(const Var& inputs,
                                            const Eigen::RowVectorXd& init_pose) const {
  return run(inputs, init_pose, nullptr, 0.0, nullptr);
}

GestureForward GestureDecoder::run(const Var& inputs, const Eigen::RowVectorXd& init_pose,
                                   const Matrix* target, double p, nn::Rng* rng) const {
  if (inputs.rows() == 0) throw ValidationError("gesture decoder: empty input sequence");
  if (inputs.cols() != config_.input_dim) {
    throw ValidationError("gesture decoder: input has " + std::to_string(inputs.cols()) +
                          " channels, config expects " + std::to_string(config_.input_dim));
  }
  if (init_pose.size() != config_.pose_dim) {
    throw ValidationError("gesture decoder: init pose has " + std::to_string(init_pose.size()) +
                          " channels, config expects " + std::to_string(config_.pose_dim));
  }
  std::bernoulli_distribution coin(std::clamp(p, 0.0, 1.0));
  GestureForward out;
  std::vector<Var> poses;
  auto state = lstm_.initial_state();
  Var prev = ad::constant(init_pose);
  for (Eigen::Index t = 0; t < inputs.rows(); ++t) {
    if (t > 0) {
      const bool truth = target != nullptr && coin(*rng);
      if (target != nullptr) out.fed_ground_truth.push_back(truth);
      prev = truth ? ad::constant(target->row(t - 1)) : poses.back();
    }
    const Var h = lstm_.step(ad::concat_cols({ad::row(inputs, t), prev}), state);
    poses.push_back(out_(h));
  }
  out.poses = ad::concat_rows(poses);
  return out;
}

Var gesture_loss(const Var& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw ValidationError("gesture_loss: prediction and target shapes differ");
  }
  return ad::mse(pred, ad::constant(target));
}

}  // namespace isg
