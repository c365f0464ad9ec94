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

#ifndef ISG_PIPELINE_H_
#define ISG_PIPELINE_H_

// Two-stage baseline: the speech core renders a mel spectrogram, then an
// audio-conditioned autoregressive flow turns it into motion.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "isg/flow.h"
#include "isg/nn.h"
#include "isg/tacotron.h"
#include "json.hpp"

namespace isg {

struct AudioGestureConfig {
  int n_flow_steps = 16;
  int hidden = 512;  // LSTM width inside every coupling
  int lstm_layers = 2;
  int n_mels = 80;
  int pose_dim = 45;
  int past_poses = 5;
  int context = 10;  // audio frames on each side, at the gesture rate
  int frame_ratio = 4;
  double silence_pad_s = 1.0;
  double silence_value = std::log(1e-5);
  double temperature = 1.0;
  bool cache_inverse = true;
  int iterations = 80000;

  // Normalization statistics, fitted on the training split.
  std::vector<double> pose_mean;  // also the static initial pose
  std::vector<double> pose_std;
  double audio_mean = 0.0;
  double audio_std = 1.0;

  int cond_dim() const { return past_poses * pose_dim + (2 * context + 1) * n_mels; }
  // Shortest mel input (frames at the mel rate).
  int min_mel_frames() const { return (2 * context + 1) * frame_ratio; }
  void validate() const;

  static AudioGestureConfig reference() { return {}; }
  static AudioGestureConfig toy();
};

void to_json(nlohmann::json& j, const AudioGestureConfig& c);
void from_json(const nlohmann::json& j, AudioGestureConfig& c);

// Affine coupling whose shift and log-scale come from an LSTM over time,
// fed with the untouched half of the frame and the conditioning row.
class LstmCoupling {
 public:
  LstmCoupling(nn::ParameterStore& store, const std::string& name, int channels, int cond_dim,
               int hidden, int layers, nn::Rng& rng);

  template <typename Ops>
  struct State {
    std::vector<typename Ops::T> h, c;
  };

  template <typename Ops>
  State<Ops> initial_state(Ops& ops) const {
    State<Ops> s;
    for (std::size_t k = 0; k < cells_.size(); ++k) {
      s.h.push_back(ops.constant(Matrix::Zero(1, hidden_)));
      s.c.push_back(ops.constant(Matrix::Zero(1, hidden_)));
    }
    return s;
  }

  // Whole sequence: x is frames x channels, cond frames x cond_dim.
  template <typename Ops>
  std::pair<typename Ops::T, typename Ops::T> forward(Ops& ops, const typename Ops::T& x,
                                                      const typename Ops::T& cond) const {
    using T = typename Ops::T;
    auto state = initial_state(ops);
    std::vector<T> rows, logdets;
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
      T xt = ops.slice_rows(x, t, 1);
      T xa = ops.slice_cols(xt, 0, half_);
      T xb = ops.slice_cols(xt, half_, channels_ - half_);
      auto [m, logs] = shift_logscale(ops, xa, ops.slice_rows(cond, t, 1), state);
      rows.push_back(ops.concat_cols({xa, ops.add(ops.mul(xb, ops.exp(logs)), m)}));
      logdets.push_back(logs);
    }
    return {ops.concat_rows(rows), ops.sum(ops.concat_rows(logdets))};
  }

  // One frame of the inverse; `state` carries the recurrence forward.
  template <typename Ops>
  typename Ops::T inverse_step(Ops& ops, const typename Ops::T& y, const typename Ops::T& cond,
                               State<Ops>& state) const {
    auto ya = ops.slice_cols(y, 0, half_);
    auto yb = ops.slice_cols(y, half_, channels_ - half_);
    auto [m, logs] = shift_logscale(ops, ya, cond, state);
    return ops.concat_cols({ya, ops.mul(ops.sub(yb, m), ops.exp(ops.scale(logs, -1.0)))});
  }

  std::vector<ad::Parameter*> output_parameters() { return {out_w_, out_b_}; }

 private:
  template <typename Ops>
  std::pair<typename Ops::T, typename Ops::T> shift_logscale(Ops& ops, const typename Ops::T& xa,
                                                             const typename Ops::T& cond,
                                                             State<Ops>& state) const {
    using T = typename Ops::T;
    T in = ops.concat_cols({xa, cond});
    for (std::size_t k = 0; k < cells_.size(); ++k) {
      T hc = ops.lstm(in, state.h[k], state.c[k], ops.param(*cells_[k].weight()),
                      ops.param(*cells_[k].bias()));
      state.h[k] = ops.slice_cols(hc, 0, hidden_);
      state.c[k] = ops.slice_cols(hc, hidden_, hidden_);
      in = state.h[k];
    }
    T st = ops.add(ops.matmul(in, ops.param(*out_w_)), ops.param(*out_b_));
    const Eigen::Index nb = channels_ - half_;
    return {ops.slice_cols(st, 0, nb), ops.slice_cols(st, nb, nb)};
  }

  int channels_;
  int half_;
  Eigen::Index hidden_;
  std::vector<nn::LstmCell> cells_;
  ad::Parameter* out_w_;
  ad::Parameter* out_b_;
};

// Anything that maps a mel spectrogram to motion.
class AudioGestureModel {
 public:
  virtual ~AudioGestureModel() = default;
  virtual MotionSequence generate(const MelSpectrogram& mel, std::uint64_t seed) const = 0;
  virtual std::int64_t parameter_count() const = 0;
};

// Per-frame flow over poses: n_flow_steps of (actnorm, mixing, LSTM coupling),
// conditioned on past poses and a window of downsampled audio.
class AudioGestureFlow : public AudioGestureModel {
 public:
  AudioGestureFlow(nn::ParameterStore& store, const std::string& prefix,
                   const AudioGestureConfig& config, nn::Rng& rng);

  // Block means over frame_ratio mel frames, normalized; rows past the mel
  // are silence. Result has `frames` rows.
  Matrix audio_frames(const Matrix& mel, Eigen::Index frames) const;
  // Conditioning rows for teacher-forced poses (normalized, frames x pose_dim).
  Matrix conditioning(const Matrix& poses, const Matrix& audio) const;
  Eigen::RowVectorXd conditioning_row(const std::vector<Eigen::RowVectorXd>& history,
                                      const Matrix& audio, Eigen::Index t) const;

  Matrix normalize_poses(const Matrix& motion) const;
  Matrix denormalize_poses(const Matrix& poses) const;
  // Fits pose and audio statistics on training pairs.
  void fit_normalization(const std::vector<const Matrix*>& mels,
                         const std::vector<const Matrix*>& motions);

  template <typename Ops>
  std::pair<typename Ops::T, typename Ops::T> forward(Ops& ops, const typename Ops::T& x,
                                                      const typename Ops::T& cond) const {
    auto h = x;
    auto logdet = ops.zero();
    for (const Step& s : steps_) {
      auto [h1, l1] = s.norm.forward(ops, h);
      auto [h2, l2] = s.mix.forward(ops, h1);
      auto [h3, l3] = s.coupling.forward(ops, h2, cond);
      h = h3;
      logdet = ops.add(logdet, ops.add(l1, ops.add(l2, l3)));
    }
    return {h, logdet};
  }

  template <typename Ops>
  struct SamplerState {
    std::vector<typename LstmCoupling::State<Ops>> couplings;
  };

  template <typename Ops>
  SamplerState<Ops> sampler_state(Ops& ops) const {
    SamplerState<Ops> s;
    for (const Step& step : steps_) s.couplings.push_back(step.coupling.initial_state(ops));
    return s;
  }

  // Inverts one latent frame given its conditioning row.
  template <typename Ops>
  typename Ops::T inverse_step(Ops& ops, const typename Ops::T& z, const typename Ops::T& cond,
                               SamplerState<Ops>& state) const {
    auto h = z;
    for (std::size_t k = steps_.size(); k-- > 0;) {
      h = steps_[k].coupling.inverse_step(ops, h, cond, state.couplings[k]);
      h = steps_[k].mix.inverse(ops, h);
      h = steps_[k].norm.inverse(ops, h);
    }
    return h;
  }

  // Frame-by-frame inverse of a whole latent sequence with fixed conditioning.
  template <typename Ops>
  typename Ops::T inverse(Ops& ops, const typename Ops::T& z, const typename Ops::T& cond) const {
    auto state = sampler_state(ops);
    std::vector<typename Ops::T> rows;
    for (Eigen::Index t = 0; t < z.rows(); ++t) {
      rows.push_back(inverse_step(ops, ops.slice_rows(z, t, 1), ops.slice_rows(cond, t, 1), state));
    }
    return ops.concat_rows(rows);
  }

  // Negative log-likelihood per channel of a training pair (mel at the mel
  // rate, motion with ceil(mel frames / frame_ratio) frames).
  ad::Var nll(const Matrix& mel, const Matrix& motion) const;
  double nll_value(const Matrix& mel, const Matrix& motion) const;
  // Data-dependent actnorm initialization from one training pair.
  void initialize(const Matrix& mel, const Matrix& motion);

  MotionSequence generate(const MelSpectrogram& mel, std::uint64_t seed) const override;
  std::int64_t parameter_count() const override;
  // Same count from the configuration alone, without allocating.
  static std::int64_t parameter_count_for(const AudioGestureConfig& config);

  const AudioGestureConfig& config() const { return cfg_; }
  void set_temperature(double t) { cfg_.temperature = t; }
  const std::string& prefix() const { return prefix_; }
  // Inversions performed by the last generate() call.
  int last_inversions() const { return last_inversions_; }

 private:
  struct Step {
    flow::ActNorm norm;
    flow::InvertibleMix mix;
    LstmCoupling coupling;
  };

  Eigen::RowVectorXd mean_pose() const;
  Eigen::RowVectorXd std_pose() const;

  AudioGestureConfig cfg_;
  std::string prefix_;
  const nn::ParameterStore* store_;
  std::vector<Step> steps_;
  mutable int last_inversions_ = 0;
};

struct StageTimings {
  using Clock = std::chrono::steady_clock;
  Clock::time_point speech_start, speech_end, gesture_start, gesture_end;

  double speech_s() const;
  double gesture_s() const;
  double total_s() const;
  bool sequential() const { return gesture_start >= speech_end; }
};

void to_json(nlohmann::json& j, const StageTimings& t);

struct PipelineOutput {
  SpeechOutput speech;
  MotionSequence motion;
  StageTimings timings;
};

// Speech first, then gesture on the post-net mel. Throws ValidationError
// naming the stage whose model is missing.
PipelineOutput pipeline_synthesize(const SpeechCore* speech, const MelConfig& mel_config,
                                   const AudioGestureModel* gesture,
                                   const std::vector<int>& ids, std::uint64_t seed);

}  // namespace isg

#endif  // ISG_PIPELINE_H_
