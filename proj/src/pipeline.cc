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

#include "isg/pipeline.h"

#include <algorithm>
#include <numbers>
#include <random>

namespace isg {

using Index = Eigen::Index;

AudioGestureConfig AudioGestureConfig::toy() {
  AudioGestureConfig c;
  c.n_flow_steps = 2;
  c.hidden = 32;
  c.lstm_layers = 1;
  c.pose_dim = 30;
  c.past_poses = 2;
  c.context = 3;
  c.iterations = 200;
  return c;
}

void AudioGestureConfig::validate() const {
  if (n_flow_steps < 1) throw ValidationError("audio gesture: n_flow_steps must be >= 1");
  if (hidden < 1 || lstm_layers < 1 || n_mels < 1 || pose_dim < 2 || past_poses < 0 ||
      context < 0 || frame_ratio < 1 || iterations < 1) {
    throw ValidationError("audio gesture: sizes out of range");
  }
  if (silence_pad_s < 0 || temperature < 0 || !(audio_std > 0)) {
    throw ValidationError("audio gesture: silence_pad_s, temperature and audio_std out of range");
  }
  const auto dims = static_cast<std::size_t>(pose_dim);
  if ((!pose_mean.empty() && pose_mean.size() != dims) ||
      (!pose_std.empty() && pose_std.size() != dims)) {
    throw ValidationError("audio gesture: pose statistics must have pose_dim entries");
  }
  for (double s : pose_std) {
    if (!(s > 0)) throw ValidationError("audio gesture: pose_std entries must be positive");
  }
}

void to_json(nlohmann::json& j, const AudioGestureConfig& c) {
  j = {{"n_flow_steps", c.n_flow_steps}, {"hidden", c.hidden},
       {"lstm_layers", c.lstm_layers},   {"n_mels", c.n_mels},
       {"pose_dim", c.pose_dim},         {"past_poses", c.past_poses},
       {"context", c.context},           {"frame_ratio", c.frame_ratio},
       {"silence_pad_s", c.silence_pad_s}, {"silence_value", c.silence_value},
       {"temperature", c.temperature},   {"cache_inverse", c.cache_inverse},
       {"iterations", c.iterations},     {"pose_mean", c.pose_mean},
       {"pose_std", c.pose_std},         {"audio_mean", c.audio_mean},
       {"audio_std", c.audio_std}};
}

void from_json(const nlohmann::json& j, AudioGestureConfig& c) {
  const AudioGestureConfig d = j.value("preset", std::string("reference")) == "toy"
                                   ? AudioGestureConfig::toy()
                                   : AudioGestureConfig::reference();
#define ISG_FIELD(name) c.name = j.value(#name, d.name)
  ISG_FIELD(n_flow_steps);
  ISG_FIELD(hidden);
  ISG_FIELD(lstm_layers);
  ISG_FIELD(n_mels);
  ISG_FIELD(pose_dim);
  ISG_FIELD(past_poses);
  ISG_FIELD(context);
  ISG_FIELD(frame_ratio);
  ISG_FIELD(silence_pad_s);
  ISG_FIELD(silence_value);
  ISG_FIELD(temperature);
  ISG_FIELD(cache_inverse);
  ISG_FIELD(iterations);
  ISG_FIELD(pose_mean);
  ISG_FIELD(pose_std);
  ISG_FIELD(audio_mean);
  ISG_FIELD(audio_std);
#undef ISG_FIELD
}

LstmCoupling::LstmCoupling(nn::ParameterStore& store, const std::string& name, int channels,
                           int cond_dim, int hidden, int layers, nn::Rng& rng)
    : channels_(channels), half_(channels / 2), hidden_(hidden) {
  for (int k = 0; k < layers; ++k) {
    cells_.emplace_back(store, name + ".lstm.layer" + std::to_string(k),
                        k == 0 ? half_ + cond_dim : hidden, hidden, rng);
  }
  const Index out = 2 * (channels - half_);
  out_w_ = &store.add(name + ".out.weight", Matrix::Zero(hidden, out));
  out_b_ = &store.add(name + ".out.bias", Matrix::Zero(1, out));
}

AudioGestureFlow::AudioGestureFlow(nn::ParameterStore& store, const std::string& prefix,
                                   const AudioGestureConfig& config, nn::Rng& rng)
    : cfg_(config), prefix_(prefix), store_(&store) {
  cfg_.validate();
  const int d = cfg_.pose_dim;
  steps_.reserve(static_cast<std::size_t>(cfg_.n_flow_steps));
  for (int k = 0; k < cfg_.n_flow_steps; ++k) {
    const std::string name = prefix + ".step" + std::to_string(k);
    steps_.push_back(Step{flow::ActNorm(store, name + ".actnorm", d),
                          flow::InvertibleMix(store, name + ".mix", d, d, rng),
                          LstmCoupling(store, name + ".coupling", d, cfg_.cond_dim(),
                                       cfg_.hidden, cfg_.lstm_layers, rng)});
  }
}

std::int64_t AudioGestureFlow::parameter_count_for(const AudioGestureConfig& c) {
  const std::int64_t d = c.pose_dim, h = c.hidden, half = d / 2;
  std::int64_t lstm = 0;
  for (int k = 0; k < c.lstm_layers; ++k) {
    const std::int64_t in = k == 0 ? half + c.cond_dim() : h;
    lstm += (in + h) * 4 * h + 4 * h;
  }
  const std::int64_t out = (h + 1) * 2 * (d - half);
  return c.n_flow_steps * (2 * d + d * d + lstm + out);
}

std::int64_t AudioGestureFlow::parameter_count() const { return store_->count(prefix_ + "."); }

Eigen::RowVectorXd AudioGestureFlow::mean_pose() const {
  if (cfg_.pose_mean.empty()) return Eigen::RowVectorXd::Zero(cfg_.pose_dim);
  return Eigen::Map<const Eigen::RowVectorXd>(cfg_.pose_mean.data(), cfg_.pose_dim);
}

Eigen::RowVectorXd AudioGestureFlow::std_pose() const {
  if (cfg_.pose_std.empty()) return Eigen::RowVectorXd::Ones(cfg_.pose_dim);
  return Eigen::Map<const Eigen::RowVectorXd>(cfg_.pose_std.data(), cfg_.pose_dim);
}

Matrix AudioGestureFlow::normalize_poses(const Matrix& motion) const {
  if (motion.cols() != cfg_.pose_dim) {
    throw ValidationError("audio gesture: motion has " + std::to_string(motion.cols()) +
                          " channels, config expects " + std::to_string(cfg_.pose_dim));
  }
  return ((motion.rowwise() - mean_pose()).array().rowwise() / std_pose().array()).matrix();
}

Matrix AudioGestureFlow::denormalize_poses(const Matrix& poses) const {
  return ((poses.array().rowwise() * std_pose().array()).matrix()).rowwise() + mean_pose();
}

void AudioGestureFlow::fit_normalization(const std::vector<const Matrix*>& mels,
                                         const std::vector<const Matrix*>& motions) {
  const int d = cfg_.pose_dim;
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(d), sq = Eigen::RowVectorXd::Zero(d);
  double n = 0;
  for (const Matrix* m : motions) {
    if (m->cols() != d) throw ValidationError("audio gesture: motion channel mismatch");
    sum += m->colwise().sum();
    sq += m->array().square().matrix().colwise().sum();
    n += static_cast<double>(m->rows());
  }
  if (n > 0) {
    const Eigen::RowVectorXd mean = sum / n;
    const Eigen::RowVectorXd var = (sq / n).array() - mean.array().square();
    cfg_.pose_mean.assign(mean.data(), mean.data() + d);
    cfg_.pose_std.resize(static_cast<std::size_t>(d));
    for (int c = 0; c < d; ++c) {
      cfg_.pose_std[static_cast<std::size_t>(c)] = std::max(std::sqrt(std::max(var(c), 0.0)), 1e-3);
    }
  }
  double asum = 0, asq = 0, an = 0;
  for (const Matrix* m : mels) {
    asum += m->sum();
    asq += m->array().square().sum();
    an += static_cast<double>(m->size());
  }
  if (an > 0) {
    cfg_.audio_mean = asum / an;
    cfg_.audio_std = std::max(std::sqrt(std::max(asq / an - cfg_.audio_mean * cfg_.audio_mean, 0.0)),
                              1e-3);
  }
}

Matrix AudioGestureFlow::audio_frames(const Matrix& mel, Index frames) const {
  if (mel.cols() != cfg_.n_mels) {
    throw ValidationError("audio gesture: mel has " + std::to_string(mel.cols()) +
                          " channels, config expects " + std::to_string(cfg_.n_mels));
  }
  const Index r = cfg_.frame_ratio;
  Matrix out = Matrix::Constant(frames, cfg_.n_mels, cfg_.silence_value);
  for (Index k = 0; k < frames; ++k) {
    const Index begin = k * r;
    const Index end = std::min(begin + r, mel.rows());
    if (begin < end) out.row(k) = mel.middleRows(begin, end - begin).colwise().mean();
  }
  return ((out.array() - cfg_.audio_mean) / cfg_.audio_std).matrix();
}

Eigen::RowVectorXd AudioGestureFlow::conditioning_row(
    const std::vector<Eigen::RowVectorXd>& history, const Matrix& audio, Index t) const {
  const Index d = cfg_.pose_dim, m = cfg_.n_mels;
  Eigen::RowVectorXd row(cfg_.cond_dim());
  // The mean pose is zero after normalization.
  for (Index k = 1; k <= cfg_.past_poses; ++k) {
    const Index src = t - k;
    row.segment((k - 1) * d, d) =
        src >= 0 ? history[static_cast<std::size_t>(src)] : Eigen::RowVectorXd::Zero(d);
  }
  const double silence = (cfg_.silence_value - cfg_.audio_mean) / cfg_.audio_std;
  const Index base = cfg_.past_poses * d;
  for (Index j = -cfg_.context; j <= cfg_.context; ++j) {
    const Index src = t + j;
    const Index at = base + (j + cfg_.context) * m;
    if (src >= 0 && src < audio.rows()) {
      row.segment(at, m) = audio.row(src);
    } else {
      row.segment(at, m).setConstant(silence);
    }
  }
  return row;
}

Matrix AudioGestureFlow::conditioning(const Matrix& poses, const Matrix& audio) const {
  std::vector<Eigen::RowVectorXd> history;
  history.reserve(static_cast<std::size_t>(poses.rows()));
  for (Index t = 0; t < poses.rows(); ++t) history.push_back(poses.row(t));
  Matrix cond(poses.rows(), cfg_.cond_dim());
  for (Index t = 0; t < poses.rows(); ++t) cond.row(t) = conditioning_row(history, audio, t);
  return cond;
}

namespace {

void check_pair(const Matrix& mel, const Matrix& motion, int ratio) {
  const Index expect = (mel.rows() + ratio - 1) / ratio;
  if (motion.rows() == 0 || motion.rows() != expect) {
    throw ValidationError("audio gesture: motion has " + std::to_string(motion.rows()) +
                          " frames, expected " + std::to_string(expect));
  }
}

}  // namespace

ad::Var AudioGestureFlow::nll(const Matrix& mel, const Matrix& motion) const {
  check_pair(mel, motion, cfg_.frame_ratio);
  const Matrix x = normalize_poses(motion);
  const Matrix cond = conditioning(x, audio_frames(mel, x.rows()));
  flow::AdOps ops;
  auto [z, logdet] = forward(ops, ops.constant(x), ops.constant(cond));
  const double n = static_cast<double>(x.size());
  ad::Var total = ad::sub(ad::add_scalar(ad::scale(ad::sum(ad::square(z)), 0.5),
                                         0.5 * std::log(2.0 * std::numbers::pi) * n),
                          logdet);
  return ad::scale(total, 1.0 / n);
}

double AudioGestureFlow::nll_value(const Matrix& mel, const Matrix& motion) const {
  check_pair(mel, motion, cfg_.frame_ratio);
  const Matrix x = normalize_poses(motion);
  const Matrix cond = conditioning(x, audio_frames(mel, x.rows()));
  flow::NumOps<double> ops;
  auto [z, logdet] = forward(ops, x, cond);
  const double n = static_cast<double>(x.size());
  return (0.5 * z.squaredNorm() + 0.5 * std::log(2.0 * std::numbers::pi) * n - logdet(0, 0)) / n;
}

void AudioGestureFlow::initialize(const Matrix& mel, const Matrix& motion) {
  check_pair(mel, motion, cfg_.frame_ratio);
  Matrix h = normalize_poses(motion);
  const Matrix cond = conditioning(h, audio_frames(mel, h.rows()));
  flow::NumOps<double> ops(false);
  for (Step& s : steps_) {
    s.norm.initialize(h);
    h = s.norm.forward(ops, h).first;
    h = s.mix.forward(ops, h).first;
    h = s.coupling.forward(ops, h, cond).first;
  }
}

MotionSequence AudioGestureFlow::generate(const MelSpectrogram& mel, std::uint64_t seed) const {
  if (mel.n_mels() != cfg_.n_mels) {
    throw ValidationError("audio gesture: mel has " + std::to_string(mel.n_mels()) +
                          " channels, config expects " + std::to_string(cfg_.n_mels));
  }
  if (mel.frames() < cfg_.min_mel_frames()) {
    throw ValidationError("audio gesture: mel has " + std::to_string(mel.frames()) +
                          " frames, shorter than the context window of " +
                          std::to_string(cfg_.min_mel_frames()));
  }
  const Index r = cfg_.frame_ratio;
  const Index pad = static_cast<Index>(std::llround(cfg_.silence_pad_s * mel.fps));
  Matrix padded = Matrix::Constant(mel.frames() + pad, cfg_.n_mels, cfg_.silence_value);
  padded.topRows(mel.frames()) = mel.values;
  const Index frames = (padded.rows() + r - 1) / r;
  const Index keep = (mel.frames() + r - 1) / r;
  const Matrix audio = audio_frames(padded, frames);

  nn::Rng rng(nn::mix_seed(seed, 0));
  std::normal_distribution<double> n01;
  flow::NumOps<double> ops(cfg_.cache_inverse);
  auto state = sampler_state(ops);
  std::vector<Eigen::RowVectorXd> history;
  history.reserve(static_cast<std::size_t>(frames));
  for (Index t = 0; t < frames; ++t) {
    Matrix z(1, cfg_.pose_dim);
    for (Index c = 0; c < z.cols(); ++c) z(0, c) = cfg_.temperature * n01(rng);
    const Matrix cond = conditioning_row(history, audio, t);
    history.push_back(inverse_step(ops, z, cond, state));
  }
  last_inversions_ = ops.inversions();

  Matrix poses(keep, cfg_.pose_dim);
  for (Index t = 0; t < keep; ++t) poses.row(t) = history[static_cast<std::size_t>(t)];
  MotionSequence out;
  out.values = denormalize_poses(poses);
  out.fps = mel.fps / static_cast<double>(r);
  return out;
}

namespace {

double seconds(StageTimings::Clock::duration d) {
  return std::chrono::duration<double>(d).count();
}

}  // namespace

double StageTimings::speech_s() const { return seconds(speech_end - speech_start); }
double StageTimings::gesture_s() const { return seconds(gesture_end - gesture_start); }
double StageTimings::total_s() const { return seconds(gesture_end - speech_start); }

void to_json(nlohmann::json& j, const StageTimings& t) {
  j = {{"speech_s", t.speech_s()},
       {"gesture_s", t.gesture_s()},
       {"total_s", t.total_s()},
       {"gesture_start_offset_s", seconds(t.gesture_start - t.speech_start)},
       {"speech_end_offset_s", seconds(t.speech_end - t.speech_start)},
       {"sequential", t.sequential()}};
}

PipelineOutput pipeline_synthesize(const SpeechCore* speech, const MelConfig& mel_config,
                                   const AudioGestureModel* gesture,
                                   const std::vector<int>& ids, std::uint64_t seed) {
  if (speech == nullptr) throw ValidationError("pipeline: speech stage model is not loaded");
  if (gesture == nullptr) throw ValidationError("pipeline: gesture stage model is not loaded");
  PipelineOutput out;
  out.timings.speech_start = StageTimings::Clock::now();
  nn::Rng rng(nn::mix_seed(seed, 1));
  out.speech = to_speech_output(speech->free_running(ids, false, rng), mel_config);
  out.timings.speech_end = StageTimings::Clock::now();

  out.timings.gesture_start = StageTimings::Clock::now();
  out.motion = gesture->generate(out.speech.mel_post, nn::mix_seed(seed, 2));
  out.timings.gesture_end = StageTimings::Clock::now();
  return out;
}

}  // namespace isg
