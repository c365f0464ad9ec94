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

#include "isg/models.h"

#include <chrono>

namespace isg {

using nlohmann::json;

const std::vector<std::string>& model_kind_names() {
  static const std::vector<std::string> names = {"speech-only", "tacotron2-isg", "glowtts-isg",
                                                 "pipeline"};
  return names;
}

std::string to_string(ModelKind kind) {
  return model_kind_names()[static_cast<std::size_t>(kind)];
}

ModelKind model_kind_from_string(const std::string& name) {
  const auto& names = model_kind_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<ModelKind>(i);
  }
  std::string valid;
  for (const auto& n : names) valid += (valid.empty() ? "" : ", ") + n;
  throw ValidationError("unknown model '" + name + "'; valid models: " + valid);
}

namespace {

bool uses_speech_core(ModelKind k) { return k != ModelKind::kGlowIsg; }

template <typename T>
json merged(const T& base, const json& config, const char* key) {
  json j = base;
  if (config.contains(key)) {
    if (!config.at(key).is_object()) {
      throw ValidationError(std::string("config section '") + key + "' must be an object");
    }
    j.merge_patch(config.at(key));
  }
  return j;
}

Vocabulary vocabulary_for(ModelKind k) {
  return k == ModelKind::kGlowIsg ? Vocabulary::with_blank() : Vocabulary::characters();
}

}  // namespace

json ModelBundle::resolve_config(ModelKind kind, const json& config) {
  const std::string preset = config.value("preset", std::string("reference"));
  if (preset != "toy" && preset != "reference") {
    throw ValidationError("preset must be 'toy' or 'reference', got '" + preset + "'");
  }
  const bool toy = preset == "toy";
  const Vocabulary vocab = vocabulary_for(kind);
  json out = {{"kind", to_string(kind)}, {"preset", preset}};

  MelConfig mel = merged(kind == ModelKind::kGlowIsg ? MelConfig::flow() : MelConfig::tacotron(),
                         config, "mel")
                      .get<MelConfig>();
  mel.validate();
  out["mel"] = mel;

  if (uses_speech_core(kind)) {
    SpeechCoreConfig s = merged(toy ? SpeechCoreConfig::toy() : SpeechCoreConfig::reference(),
                                config, "speech")
                             .get<SpeechCoreConfig>();
    s.n_mels = mel.n_mels;
    s.n_symbols = std::max(s.n_symbols, vocab.size());
    s.validate();
    out["speech"] = s;

    if (kind == ModelKind::kTacotronIsg) {
      GestureDecoderConfig g =
          merged(toy ? GestureDecoderConfig::toy() : GestureDecoderConfig::reference(), config,
                 "gesture")
              .get<GestureDecoderConfig>();
      g.input_dim = g.input_source == GestureInput::kAttentionStates ? s.attention_rnn_dim
                                                                     : mel.n_mels;
      g.validate();
      if (g.frame_ratio % s.n_frames_per_step != 0) {
        throw ValidationError("gesture frame_ratio must be a multiple of n_frames_per_step");
      }
      out["gesture"] = g;
      DiscriminatorConfig d =
          merged(toy ? DiscriminatorConfig::toy() : DiscriminatorConfig::reference(), config,
                 "discriminator")
              .get<DiscriminatorConfig>();
      d.n_mels = mel.n_mels;
      d.pose_dim = g.pose_dim;
      d.frame_ratio = g.frame_ratio;
      d.validate();
      out["discriminator"] = d;
    }
    if (kind == ModelKind::kPipeline) {
      AudioGestureConfig a =
          merged(toy ? AudioGestureConfig::toy() : AudioGestureConfig::reference(), config,
                 "audio_gesture")
              .get<AudioGestureConfig>();
      a.n_mels = mel.n_mels;
      a.validate();
      out["audio_gesture"] = a;
    }
  } else {
    GlowIsgConfig g =
        merged(toy ? GlowIsgConfig::toy() : GlowIsgConfig::reference(), config, "glow")
            .get<GlowIsgConfig>();
    g.n_mels = mel.n_mels;
    g.n_symbols = vocab.size();
    g.blank_id = vocab.id(kBlankToken);
    g.fps = mel.fps();
    g.sample_rate = mel.sample_rate;
    g.resolve_channels();
    g.validate();
    out["glow"] = g;
  }

  out["temperature"] = config.value("temperature", 0.7);
  out["length_scale"] = config.value("length_scale", 0.9);
  json smoothing = {{"window", 3}, {"sigma", 1.0}};
  if (config.contains("smoothing")) smoothing.merge_patch(config.at("smoothing"));
  out["smoothing"] = smoothing;
  out["griffin_lim_iters"] = config.value("griffin_lim_iters", 32);
  out["mean_pose"] = config.value("mean_pose", std::vector<double>{});
  out["joint_names"] = config.value("joint_names", std::vector<std::string>{});
  return out;
}

ModelBundle::ModelBundle(ModelKind kind, const json& config, std::uint64_t init_seed)
    : kind_(kind), vocab_(vocabulary_for(kind)) {
  resolved_ = resolve_config(kind, config);
  preset_ = resolved_.at("preset").get<std::string>();
  mel_ = resolved_.at("mel").get<MelConfig>();
  temperature_ = resolved_.at("temperature").get<double>();
  length_scale_ = resolved_.at("length_scale").get<double>();
  smooth_window_ = resolved_.at("smoothing").value("window", 3);
  smooth_sigma_ = resolved_.at("smoothing").value("sigma", 1.0);
  griffin_lim_iters_ = resolved_.at("griffin_lim_iters").get<int>();
  const auto pose = resolved_.at("mean_pose").get<std::vector<double>>();
  if (!pose.empty()) mean_pose_ = Eigen::Map<const Eigen::RowVectorXd>(pose.data(), static_cast<Eigen::Index>(pose.size()));
  joint_names_ = resolved_.at("joint_names").get<std::vector<std::string>>();

  nn::Rng rng(init_seed);
  if (resolved_.contains("speech")) {
    speech_ = std::make_unique<SpeechCore>(store_, "speech",
                                           resolved_.at("speech").get<SpeechCoreConfig>(), rng);
  }
  if (resolved_.contains("gesture")) {
    gesture_ = std::make_unique<GestureDecoder>(
        store_, "gesture", resolved_.at("gesture").get<GestureDecoderConfig>(), rng);
    disc_ = std::make_unique<Discriminator>(
        store_, "disc", resolved_.at("discriminator").get<DiscriminatorConfig>(), rng);
  }
  if (resolved_.contains("glow")) {
    glow_ = std::make_unique<GlowIsg>(store_, "glow", resolved_.at("glow").get<GlowIsgConfig>(),
                                      rng);
  }
  if (resolved_.contains("audio_gesture")) {
    audio_gesture_ = std::make_unique<AudioGestureFlow>(
        store_, "audio_gesture", resolved_.at("audio_gesture").get<AudioGestureConfig>(), rng);
  }
  const int want = gesture_ ? gesture_->config().pose_dim
                   : glow_ ? glow_->config().motion_dim
                   : audio_gesture_ ? audio_gesture_->config().pose_dim
                                    : -1;
  if (has_mean_pose() && mean_pose_.size() != want) {
    throw ValidationError("mean_pose has " + std::to_string(mean_pose_.size()) +
                          " entries, model poses have " + std::to_string(want));
  }
}

json ModelBundle::config() const {
  json j = resolved_;
  j["mean_pose"] = std::vector<double>(mean_pose_.data(), mean_pose_.data() + mean_pose_.size());
  j["joint_names"] = joint_names_;
  if (audio_gesture_) j["audio_gesture"] = audio_gesture_->config();
  return j;
}

void ModelBundle::save(const std::string& path, std::int64_t iteration) const {
  save_checkpoint(path, snapshot(store_, to_string(kind_), iteration, config()));
}

std::unique_ptr<ModelBundle> ModelBundle::load(const std::string& path, std::int64_t* iteration) {
  const Checkpoint ckpt = load_checkpoint(path);
  auto bundle = std::make_unique<ModelBundle>(model_kind_from_string(ckpt.model), ckpt.config, 0);
  restore(bundle->store_, ckpt);
  if (iteration != nullptr) *iteration = ckpt.iteration;
  return bundle;
}

std::size_t ModelBundle::restore_from(const Checkpoint& ckpt) {
  const std::size_t n = restore(store_, ckpt);
  const json& c = ckpt.config;
  const auto pose = c.value("mean_pose", std::vector<double>{});
  const int dims = gesture_ ? gesture_->config().pose_dim
                   : glow_ ? glow_->config().motion_dim
                   : audio_gesture_ ? audio_gesture_->config().pose_dim
                                    : 0;
  if (!pose.empty() && static_cast<int>(pose.size()) == dims) {
    mean_pose_ = Eigen::Map<const Eigen::RowVectorXd>(pose.data(), dims);
  }
  const auto names = c.value("joint_names", std::vector<std::string>{});
  if (!names.empty()) joint_names_ = names;
  return n;
}

std::vector<int> ModelBundle::encode_text(const std::string& text) const {
  const std::vector<int> ids = vocab_.encode(text);
  if (ids.empty()) throw ValidationError("empty text");
  return ids;
}

CorpusConfig ModelBundle::corpus_config() const {
  CorpusConfig c;
  c.mel = mel_;
  c.motion_ratio = kind_ == ModelKind::kGlowIsg ? 1
                   : gesture_                   ? gesture_->config().frame_ratio
                   : audio_gesture_             ? audio_gesture_->config().frame_ratio
                                                : 4;
  return c;
}

int ModelBundle::gesture_stride() const {
  if (!gesture_) throw ValidationError("model has no gesture decoder");
  return gesture_->config().frame_ratio / speech_->config().n_frames_per_step;
}

Matrix ModelBundle::gesture_inputs(const Matrix& attn_states, const Matrix& mel) const {
  if (gesture_->config().input_source == GestureInput::kAttentionStates) {
    return select_frames(attn_states, gesture_stride());
  }
  return select_frames(mel, gesture_->config().frame_ratio);
}

nn::Var ModelBundle::gesture_inputs(const nn::Var& attn_states, const nn::Var& mel) const {
  if (gesture_->config().input_source == GestureInput::kAttentionStates) {
    return select_frames(attn_states, gesture_stride());
  }
  return select_frames(mel, gesture_->config().frame_ratio);
}

SynthesisResult ModelBundle::synthesize(const std::vector<int>& ids,
                                        const SynthesisOptions& options) {
  ad::NoGradGuard no_grad;
  const auto start = std::chrono::steady_clock::now();
  SynthesisResult out;
  const int dims = gesture_ ? gesture_->config().pose_dim
                   : glow_ ? glow_->config().motion_dim
                   : audio_gesture_ ? audio_gesture_->config().pose_dim
                                    : 0;
  switch (kind_) {
    case ModelKind::kSpeechOnly:
    case ModelKind::kTacotronIsg: {
      nn::Rng rng(nn::mix_seed(options.seed, 1));
      const SpeechForward f = speech_->free_running(ids, false, rng);
      SpeechOutput s = to_speech_output(f, mel_);
      out.mel = s.mel_post;
      out.truncated = s.truncated;
      if (kind_ == ModelKind::kTacotronIsg) {
        if (options.gesture_input && *options.gesture_input != gesture_->config().input_source) {
          throw ValidationError("model was trained with gesture input '" +
                                to_string(gesture_->config().input_source) + "'");
        }
        const Eigen::RowVectorXd init = gesture_->initial_pose(
            has_mean_pose() ? mean_pose_ : Eigen::RowVectorXd::Zero(dims));
        const Matrix inputs = gesture_inputs(s.attn.states, s.mel_post.values);
        MotionSequence m;
        m.values = gesture_->free_running(ad::constant(inputs), init).poses.value();
        m.fps = mel_.fps() / gesture_->config().frame_ratio;
        out.motion = smooth_window_ > 1 ? gaussian_smooth(m, smooth_window_, 1, smooth_sigma_) : m;
      }
      break;
    }
    case ModelKind::kGlowIsg: {
      const GlowSample g = glow_->sample(glow_->prepare_ids(ids),
                                         options.temperature.value_or(temperature_),
                                         options.length_scale.value_or(length_scale_),
                                         nn::mix_seed(options.seed, 3));
      out.mel = g.mel;
      out.motion = g.motion;
      break;
    }
    case ModelKind::kPipeline: {
      if (options.temperature) audio_gesture_->set_temperature(*options.temperature);
      PipelineOutput p =
          pipeline_synthesize(speech_.get(), mel_, audio_gesture_.get(), ids, options.seed);
      out.mel = p.speech.mel_post;
      out.truncated = p.speech.truncated;
      out.motion = p.motion;
      out.stages = p.timings;
      break;
    }
  }
  if (out.motion.dims() > 0) canonicalize_expmaps(out.motion);
  if (out.motion.dims() > 0 && static_cast<int>(joint_names_.size()) * 3 == out.motion.dims()) {
    out.motion.joint_names = joint_names_;
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::vector<std::pair<std::string, std::int64_t>> ModelBundle::parameter_breakdown() const {
  std::vector<std::pair<std::string, std::int64_t>> out;
  for (const char* p : {"speech", "gesture", "glow", "audio_gesture"}) {
    const std::int64_t n = store_.count(std::string(p) + ".");
    if (n > 0) out.emplace_back(p, n);
  }
  return out;
}

std::int64_t ModelBundle::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& [name, count] : parameter_breakdown()) n += count;
  return n;
}

}  // namespace isg
