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

#ifndef ISG_GLOW_H_
#define ISG_GLOW_H_

// Flow-based joint speech and gesture model. A transformer text encoder
// yields a Gaussian prior per token, a flow maps concatenated mel + motion
// frames to latents, and monotonic alignment search ties frames to tokens.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "isg/ad.h"
#include "isg/features.h"
#include "isg/flow.h"
#include "isg/nn.h"

namespace isg {

class AlignmentError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Per-token Gaussian prior over latent frames.
struct TokenPrior {
  Matrix mu;     // tokens x C
  Matrix sigma;  // tokens x C, > 0
  Eigen::VectorXd log_durations;
};

// alignment[t] is the token index of frame t.
using Alignment = std::vector<int>;

bool alignment_is_valid(const Alignment& a, int tokens);
// ln N(z_t; mu_j, sigma_j) summed over channels: frames x tokens.
Matrix frame_log_likelihood(const Matrix& z, const TokenPrior& prior);
// Monotonic surjective alignment maximizing the total log-likelihood. When
// two predecessors tie, the frame goes to the earlier token.
Alignment mas_align(const Matrix& z, const TokenPrior& prior);
Alignment mas_align(const Matrix& log_likelihood);
std::vector<int> durations_from_alignment(const Alignment& a, int tokens);
Alignment alignment_from_durations(const std::vector<int>& durations);
// max(1, round(d * length_scale)) per token.
std::vector<int> duration_frames(const std::vector<double>& durations, double length_scale);

// -(sum_t ln N(z_t; mu_A(t), sigma_A(t)) + logdet) / (frames * channels).
ad::Var nll_loss(const ad::Var& z, const ad::Var& mu, const ad::Var& log_sigma,
                 const ad::Var& logdet, const Alignment& alignment);
double nll_loss(const Matrix& z, const TokenPrior& prior, double logdet,
                const Alignment& alignment);

struct TextEncoderConfig {
  int hidden = 192;
  int filter = 768;
  int heads = 2;
  int layers = 6;
  int kernel = 3;
  double dropout = 0.1;
  bool prenet = true;
};

struct DurationPredictorConfig {
  int filter = 256;
  int kernel = 3;
  double dropout = 0.1;
};

struct GlowIsgConfig {
  int n_symbols = 150;  // character vocabulary plus blank
  int blank_id = 149;
  bool add_blank = true;
  int n_mels = 80;
  int motion_dim = 30;
  int pad_channels = 0;  // noise channels appended so the flow groups fit
  double pad_noise_std = 0.1;
  bool mean_only = false;
  double fps = 60.0;  // joint frame rate of mel and motion
  int sample_rate = 24000;
  TextEncoderConfig encoder;
  DurationPredictorConfig duration;
  flow::FlowDecoderConfig decoder;

  int joint_channels() const { return n_mels + motion_dim + pad_channels; }
  // Smallest padding that makes (channels * squeeze) divisible by group.
  static int padding_for(int channels, int group, int squeeze);
  // Fills pad_channels and decoder.channels from n_mels and motion_dim.
  void resolve_channels();
  void validate() const;

  static GlowIsgConfig reference();
  static GlowIsgConfig toy();
};

void to_json(nlohmann::json& j, const GlowIsgConfig& c);
void from_json(const nlohmann::json& j, GlowIsgConfig& c);

struct GlowLoss {
  ad::Var total;
  ad::Var nll;
  ad::Var duration;
  Alignment alignment;
};

struct GlowSample {
  MelSpectrogram mel;
  MotionSequence motion;
  Alignment alignment;
  Matrix z;
};

class GlowIsg {
 public:
  GlowIsg(nn::ParameterStore& store, const std::string& prefix, const GlowIsgConfig& config,
          nn::Rng& rng);

  struct Encoded {
    ad::Var hidden;
    ad::Var mu;
    ad::Var log_sigma;
    ad::Var log_durations;  // tokens x 1
  };

  // Adds blank tokens when the config asks for them.
  std::vector<int> prepare_ids(const std::vector<int>& ids) const;
  Encoded encode(const std::vector<int>& ids, bool training, nn::Rng& rng) const;
  TokenPrior prior(const std::vector<int>& ids) const;

  // Concatenates mel and motion (equal frame counts), appends seeded noise
  // padding channels and drops a trailing frame to fit the squeeze factor.
  Matrix joint_frames(const Matrix& mel, const Matrix& motion, std::uint64_t seed) const;

  // Training objective on one utterance; ids already prepared.
  GlowLoss loss(const std::vector<int>& ids, const Matrix& joint, bool training,
                nn::Rng& rng) const;

  std::vector<double> predict_durations(const std::vector<int>& ids) const;
  // With `durations` set, they replace the predicted frame counts.
  GlowSample sample(const std::vector<int>& ids, double temperature, double length_scale,
                    std::uint64_t seed, const std::vector<int>* durations = nullptr) const;

  flow::FlowDecoder& decoder() { return *decoder_; }
  const flow::FlowDecoder& decoder() const { return *decoder_; }
  const GlowIsgConfig& config() const { return cfg_; }

 private:
  struct EncoderLayer {
    nn::Linear q, k, v, o;
    nn::LayerNorm norm1;
    nn::Conv1d ffn1, ffn2;
    nn::LayerNorm norm2;
  };

  ad::Var attention(const EncoderLayer& l, const ad::Var& x, bool training, nn::Rng& rng) const;

  GlowIsgConfig cfg_;
  std::unique_ptr<nn::Embedding> embedding_;
  std::vector<nn::Conv1d> prenet_convs_;
  std::vector<nn::LayerNorm> prenet_norms_;
  std::unique_ptr<nn::Linear> prenet_proj_;
  std::vector<EncoderLayer> layers_;
  std::unique_ptr<nn::Linear> proj_m_;
  std::unique_ptr<nn::Linear> proj_s_;
  std::unique_ptr<nn::Conv1d> dp_conv1_, dp_conv2_;
  std::unique_ptr<nn::LayerNorm> dp_norm1_, dp_norm2_;
  std::unique_ptr<nn::Linear> dp_proj_;
  std::unique_ptr<flow::FlowDecoder> decoder_;
};

}  // namespace isg

#endif  // ISG_GLOW_H_
