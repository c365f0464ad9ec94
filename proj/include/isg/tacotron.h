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

#ifndef ISG_TACOTRON_H_
#define ISG_TACOTRON_H_

// Attention-based autoregressive text-to-mel model with a tap on the
// attention recurrence.

#include <string>
#include <vector>

#include "isg/features.h"
#include "isg/nn.h"
#include "json.hpp"

namespace isg {

struct SpeechCoreConfig {
  int n_symbols = 149;
  int n_mels = 80;
  int embedding_dim = 512;
  int encoder_n_convs = 3;
  int encoder_kernel = 5;
  int encoder_dim = 512;  // BiLSTM output, half per direction
  double encoder_dropout = 0.5;

  int attention_rnn_dim = 1024;
  int attention_dim = 128;
  int location_filters = 32;
  int location_kernel = 31;
  double attention_dropout = 0.1;

  int decoder_rnn_dim = 1024;
  double decoder_dropout = 0.1;
  std::vector<int> prenet_dims = {256, 256};
  double prenet_dropout = 0.5;  // applied in training and inference alike

  int postnet_n_convs = 5;
  int postnet_dim = 512;
  int postnet_kernel = 5;
  double postnet_dropout = 0.5;

  int n_frames_per_step = 1;
  int max_decoder_steps = 1000;
  double stop_threshold = 0.5;

  static SpeechCoreConfig reference() { return {}; }
  // Every width divided by 8, 200 decoder steps.
  static SpeechCoreConfig toy();
  void validate() const;
};

void to_json(nlohmann::json& j, const SpeechCoreConfig& c);
void from_json(const nlohmann::json& j, SpeechCoreConfig& c);

// Raw (differentiable) decoder outputs.
struct SpeechForward {
  nn::Var mel_pre;      // frames x n_mels
  nn::Var mel_post;     // frames x n_mels
  nn::Var stop_logits;  // steps x 1
  nn::Var attn_states;  // steps x attention_rnn_dim
  Matrix alignment;     // steps x tokens
  bool truncated = false;
};

struct AttentionStateSequence {
  Matrix states;
  double fps = 0.0;
};

struct SpeechOutput {
  MelSpectrogram mel_pre;
  MelSpectrogram mel_post;
  std::vector<double> stop_logits;
  AttentionStateSequence attn;
  Matrix alignment;
  bool truncated = false;
};

class SpeechCore {
 public:
  SpeechCore(nn::ParameterStore& store, const std::string& prefix,
             const SpeechCoreConfig& config, nn::Rng& init_rng);

  const SpeechCoreConfig& config() const { return config_; }
  const std::string& prefix() const { return prefix_; }

  // tokens x encoder_dim. Throws ValidationError on an empty or
  // out-of-range id list.
  nn::Var encode(const std::vector<int>& ids, bool training, nn::Rng& rng) const;

  // Target frames are padded with their last frame up to a multiple of
  // n_frames_per_step; ceil(T / r) steps are run.
  SpeechForward teacher_forced(const std::vector<int>& ids, const Matrix& target,
                               bool training, nn::Rng& rng) const;
  SpeechForward free_running(const std::vector<int>& ids, bool training,
                             nn::Rng& rng) const;

 private:
  SpeechForward decode(const nn::Var& memory, const Matrix* target, bool training,
                       nn::Rng& rng) const;

  SpeechCoreConfig config_;
  std::string prefix_;
  nn::Embedding embedding_;
  std::vector<nn::Conv1d> encoder_convs_;
  nn::LstmCell encoder_fwd_, encoder_bwd_;
  std::vector<nn::Linear> prenet_;
  nn::LstmCell attention_rnn_;
  nn::Linear query_, memory_, energy_, location_dense_;
  nn::Conv1d location_conv_;
  nn::LstmCell decoder_rnn_;
  nn::Linear projection_, gate_;
  std::vector<nn::Conv1d> postnet_;
};

SpeechOutput to_speech_output(const SpeechForward& f, const MelConfig& mel);

// steps x 1 stop targets: 1 on the last step, 0 elsewhere.
Matrix stop_targets(Eigen::Index frames, int n_frames_per_step);

// MSE(mel_pre) + MSE(mel_post) + BCE(stop). Throws on shape mismatch.
nn::Var tts_loss(const SpeechForward& f, const Matrix& target_mel,
                 const Matrix& target_stops);

// Pads rows with the last row up to a multiple of r.
Matrix pad_to_multiple(const Matrix& m, int r);

}  // namespace isg

#endif  // ISG_TACOTRON_H_
