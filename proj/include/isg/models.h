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

#ifndef ISG_MODELS_H_
#define ISG_MODELS_H_

// The four synthesis systems behind one interface: construction from a
// resolved config, checkpoint I/O and text-to-(speech, motion) synthesis.
//
// Parameter prefixes: speech., gesture., disc., glow., audio_gesture.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "isg/adversarial.h"
#include "isg/checkpoint.h"
#include "isg/corpus.h"
#include "isg/gesture.h"
#include "isg/glow.h"
#include "isg/pipeline.h"
#include "isg/tacotron.h"
#include "isg/text.h"
#include "json.hpp"

namespace isg {

enum class ModelKind { kSpeechOnly, kTacotronIsg, kGlowIsg, kPipeline };

// "speech-only", "tacotron2-isg", "glowtts-isg", "pipeline".
const std::vector<std::string>& model_kind_names();
std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

struct SynthesisOptions {
  std::uint64_t seed = 0;
  std::optional<double> temperature;   // model default when unset
  std::optional<double> length_scale;  // flow model only
  std::optional<GestureInput> gesture_input;
};

struct SynthesisResult {
  MelSpectrogram mel;
  MotionSequence motion;  // empty for speech-only
  std::optional<StageTimings> stages;
  double seconds = 0.0;  // vocoder excluded
  bool truncated = false;
};

class ModelBundle {
 public:
  // `config` holds "preset" ("toy" or "reference") and optional per-section
  // overrides: speech, gesture, discriminator, glow, audio_gesture, mel.
  ModelBundle(ModelKind kind, const nlohmann::json& config, std::uint64_t init_seed);

  // Fully expanded config for `kind`; derived fields (input widths, channel
  // counts) are filled in. Throws ValidationError on inconsistent sections.
  static nlohmann::json resolve_config(ModelKind kind, const nlohmann::json& config);

  static std::unique_ptr<ModelBundle> load(const std::string& path,
                                           std::int64_t* iteration = nullptr);
  void save(const std::string& path, std::int64_t iteration) const;
  // Copies matching tensors and fitted statistics from a checkpoint.
  std::size_t restore_from(const Checkpoint& ckpt);

  ModelKind kind() const { return kind_; }
  nlohmann::json config() const;
  nn::ParameterStore& store() { return store_; }
  const nn::ParameterStore& store() const { return store_; }

  const Vocabulary& vocabulary() const { return vocab_; }
  std::vector<int> encode_text(const std::string& text) const;
  const MelConfig& mel_config() const { return mel_; }
  CorpusConfig corpus_config() const;

  SpeechCore* speech() { return speech_.get(); }
  const SpeechCore* speech() const { return speech_.get(); }
  GestureDecoder* gesture() { return gesture_.get(); }
  const GestureDecoder* gesture() const { return gesture_.get(); }
  Discriminator* discriminator() { return disc_.get(); }
  const Discriminator* discriminator() const { return disc_.get(); }
  GlowIsg* glow() { return glow_.get(); }
  const GlowIsg* glow() const { return glow_.get(); }
  AudioGestureFlow* audio_gesture() { return audio_gesture_.get(); }
  const AudioGestureFlow* audio_gesture() const { return audio_gesture_.get(); }

  bool has_mean_pose() const { return mean_pose_.size() > 0; }
  const Eigen::RowVectorXd& mean_pose() const { return mean_pose_; }
  void set_mean_pose(const Eigen::RowVectorXd& pose) { mean_pose_ = pose; }
  const std::vector<std::string>& joint_names() const { return joint_names_; }
  void set_joint_names(std::vector<std::string> names) { joint_names_ = std::move(names); }

  // Gesture-decoder input rows for the speech core's outputs.
  Matrix gesture_inputs(const Matrix& attn_states, const Matrix& mel) const;
  nn::Var gesture_inputs(const nn::Var& attn_states, const nn::Var& mel) const;
  // Step stride between gesture frames (frame_ratio / n_frames_per_step).
  int gesture_stride() const;

  SynthesisResult synthesize(const std::vector<int>& ids, const SynthesisOptions& options);

  // Trainable tensors used at synthesis time (the discriminator is a
  // training-only component and is not counted).
  std::int64_t parameter_count() const;
  // Per sub-network counts keyed by prefix.
  std::vector<std::pair<std::string, std::int64_t>> parameter_breakdown() const;

  double default_temperature() const { return temperature_; }
  double default_length_scale() const { return length_scale_; }
  int griffin_lim_iters() const { return griffin_lim_iters_; }

 private:
  ModelKind kind_;
  std::string preset_;
  nlohmann::json resolved_;
  nn::ParameterStore store_;
  Vocabulary vocab_;
  MelConfig mel_;
  std::unique_ptr<SpeechCore> speech_;
  std::unique_ptr<GestureDecoder> gesture_;
  std::unique_ptr<Discriminator> disc_;
  std::unique_ptr<GlowIsg> glow_;
  std::unique_ptr<AudioGestureFlow> audio_gesture_;
  Eigen::RowVectorXd mean_pose_;
  std::vector<std::string> joint_names_;
  double temperature_ = 0.7;
  double length_scale_ = 0.9;
  int smooth_window_ = 3;
  double smooth_sigma_ = 1.0;
  int griffin_lim_iters_ = 32;
};

}  // namespace isg

#endif  // ISG_MODELS_H_
