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

#include "isg/corpus.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <random>
#include <set>

#include "isg/audio_io.h"
#include "isg/motion_io.h"
#include "isg/nn.h"
#include "isg/text.h"

namespace fs = std::filesystem;

namespace isg {
namespace {

constexpr double kPi = std::numbers::pi;

using nn::mix_seed;

std::vector<std::string> joined(const BreathGroup& a, const BreathGroup& b) {
  std::vector<std::string> t = a.text;
  t.emplace_back(kBreathToken);
  t.insert(t.end(), b.text.begin(), b.text.end());
  return t;
}

MotionSequence load_motion(const CorpusManifest& m, const ManifestEntry& e,
                           double default_fps) {
  const std::string path = m.resolve(e.motion);
  if (fs::path(path).extension() == ".bvh") return read_bvh(path).motion;
  return read_motion_csv(path, e.motion_fps > 0 ? e.motion_fps : default_fps);
}

std::vector<double> slice_audio(const std::vector<double>& x, int rate, const Span& s) {
  const auto a = static_cast<std::size_t>(std::llround(s.start_s * rate));
  const auto b = std::min(x.size(), static_cast<std::size_t>(std::llround(s.end_s * rate)));
  if (a >= b) return {};
  return {x.begin() + static_cast<std::ptrdiff_t>(a), x.begin() + static_cast<std::ptrdiff_t>(b)};
}

MotionSequence slice_motion(const MotionSequence& m, const Span& s) {
  const Eigen::Index a = std::llround(s.start_s * m.fps);
  const Eigen::Index b = std::min<Eigen::Index>(m.frames(), std::llround(s.end_s * m.fps));
  MotionSequence out;
  out.fps = m.fps;
  out.joint_names = m.joint_names;
  out.values = m.values.middleRows(a, std::max<Eigen::Index>(0, b - a));
  return out;
}

// Per-letter sound: tone frequency, duration and loudness are fixed
// functions of the letter so that text -> audio is learnable.
struct LetterSound {
  double hz;
  double dur;
  double amp;
};

LetterSound letter_sound(int k, double pitch_scale) {
  const std::string& a = synthetic_alphabet();
  const bool vowel = std::string("aeiou").find(a[k]) != std::string::npos;
  return {pitch_scale * (180.0 + 95.0 * k), 0.07 + 0.02 * (k % 3), vowel ? 0.55 : 0.3};
}

constexpr double kSpaceDur = 0.06;
constexpr double kBreathDur = 0.3;
constexpr double kRamp = 0.008;

double token_duration(const std::string& tok, double pitch_scale) {
  if (tok == " ") return kSpaceDur;
  if (tok == kBreathToken) return kBreathDur;
  const auto k = synthetic_alphabet().find(tok);
  if (tok.size() != 1 || k == std::string::npos) {
    throw ValidationError("synthetic corpus cannot render token '" + tok + "'");
  }
  return letter_sound(static_cast<int>(k), pitch_scale).dur;
}

}  // namespace

std::vector<AugmentedSegment> build_breathgroup_bigrams(
    const std::vector<BreathGroup>& groups, double max_dur,
    std::vector<CorpusIssue>* warnings, const std::string& id) {
  if (!(max_dur > 0)) throw ValidationError("max_dur must be > 0");
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (!(groups[i].audio_span.end_s > groups[i].audio_span.start_s)) {
      throw ValidationError("breath group " + std::to_string(i) + " has an empty span");
    }
    if (i > 0 && groups[i].audio_span.start_s < groups[i - 1].audio_span.start_s) {
      throw ValidationError("breath groups are not ordered by start time");
    }
  }
  std::vector<AugmentedSegment> out;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const BreathGroup& g = groups[i];
    if (g.audio_span.duration() <= max_dur) {
      out.push_back({g, static_cast<int>(i), 1});
    } else if (warnings != nullptr) {
      warnings->push_back({id, "breath group " + std::to_string(i) + " (" +
                                   std::to_string(g.audio_span.duration()) +
                                   " s) exceeds max duration; dropped"});
    }
    if (i + 1 < groups.size()) {
      const BreathGroup& h = groups[i + 1];
      BreathGroup pair;
      pair.text = joined(g, h);
      pair.audio_span = {g.audio_span.start_s, h.audio_span.end_s};
      pair.motion_span = {g.motion_span.start_s, h.motion_span.end_s};
      if (pair.audio_span.duration() <= max_dur) {
        out.push_back({std::move(pair), static_cast<int>(i), 2});
      }
    }
  }
  return out;
}

void to_json(nlohmann::json& j, const ManifestEntry& e) {
  j = {{"id", e.id},         {"text", e.text},         {"audio", e.audio},
       {"motion", e.motion}, {"breaths", e.breaths}, {"split", e.split}};
  if (e.motion_fps > 0) j["motion_fps"] = e.motion_fps;
}

void from_json(const nlohmann::json& j, ManifestEntry& e) {
  e.id = j.at("id").get<std::string>();
  e.text = j.at("text").get<std::string>();
  e.audio = j.at("audio").get<std::string>();
  e.motion = j.at("motion").get<std::string>();
  e.breaths = j.value("breaths", std::vector<double>{});
  e.split = j.value("split", std::string("train"));
  e.motion_fps = j.value("motion_fps", 0.0);
}

std::string CorpusManifest::resolve(const std::string& relative) const {
  const fs::path p(relative);
  if (p.is_absolute() || root.empty()) return p.string();
  return (fs::path(root) / p).string();
}

std::vector<const ManifestEntry*> CorpusManifest::split(const std::string& name) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries) {
    if (e.split == name) out.push_back(&e);
  }
  return out;
}

CorpusManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open manifest " + path);
  CorpusManifest m;
  m.root = fs::path(path).parent_path().string();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      m.entries.push_back(nlohmann::json::parse(line).get<ManifestEntry>());
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return m;
}

void write_manifest(const std::string& path, const CorpusManifest& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& e : m.entries) out << nlohmann::json(e).dump() << "\n";
}

std::vector<CorpusIssue> validate_manifest(const CorpusManifest& m) {
  std::vector<CorpusIssue> issues;
  std::set<std::string> ids;
  for (const auto& e : m.entries) {
    if (!ids.insert(e.id).second) issues.push_back({e.id, "duplicate id across splits"});
    if (e.split != "train" && e.split != "val" && e.split != "test") {
      issues.push_back({e.id, "unknown split '" + e.split + "'"});
    }
    for (const auto* f : {&e.audio, &e.motion}) {
      if (!fs::exists(m.resolve(*f))) issues.push_back({e.id, "missing file " + *f});
    }
    if (!std::is_sorted(e.breaths.begin(), e.breaths.end())) {
      issues.push_back({e.id, "breath times not sorted"});
    }
  }
  return issues;
}

void to_json(nlohmann::json& j, const CorpusConfig& c) {
  j = {{"mel", c.mel},
       {"motion_ratio", c.motion_ratio},
       {"max_duration_s", c.max_duration_s},
       {"align_tolerance_s", c.align_tolerance_s},
       {"default_motion_fps", c.default_motion_fps},
       {"splits", c.splits}};
}

void from_json(const nlohmann::json& j, CorpusConfig& c) {
  CorpusConfig d;
  c.mel = j.value("mel", d.mel);
  c.motion_ratio = j.value("motion_ratio", d.motion_ratio);
  c.max_duration_s = j.value("max_duration_s", d.max_duration_s);
  c.align_tolerance_s = j.value("align_tolerance_s", d.align_tolerance_s);
  c.default_motion_fps = j.value("default_motion_fps", d.default_motion_fps);
  c.splits = j.value("splits", d.splits);
}

MotionSequence fit_motion(const MotionSequence& motion, double fps, Eigen::Index frames) {
  MotionSequence r = resample_motion(motion, fps);
  if (r.frames() == frames) return r;
  MotionSequence out;
  out.fps = fps;
  out.joint_names = r.joint_names;
  out.values.resize(frames, r.dims());
  const Eigen::Index keep = std::min(frames, r.frames());
  out.values.topRows(keep) = r.values.topRows(keep);
  for (Eigen::Index f = keep; f < frames; ++f) out.values.row(f) = r.values.row(r.frames() - 1);
  return out;
}

LoadResult load_paired_corpus(const CorpusManifest& manifest, const CorpusConfig& config) {
  config.mel.validate();
  if (config.motion_ratio < 1) throw ValidationError("motion_ratio must be >= 1");
  LoadResult result;
  for (const ManifestEntry& e : manifest.entries) {
    if (!config.splits.empty() &&
        std::find(config.splits.begin(), config.splits.end(), e.split) == config.splits.end()) {
      continue;
    }
    try {
      Waveform w = read_wav(manifest.resolve(e.audio));
      const MotionSequence raw = load_motion(manifest, e, config.default_motion_fps);
      const double audio_dur = w.duration_s();
      const double motion_dur = raw.duration_s();
      if (std::abs(audio_dur - motion_dur) > config.align_tolerance_s + 1.0 / raw.fps) {
        result.errors.push_back({e.id, "audio (" + std::to_string(audio_dur) +
                                           " s) and motion (" + std::to_string(motion_dur) +
                                           " s) durations are misaligned"});
        continue;
      }
      if (audio_dur > config.max_duration_s) {
        result.errors.push_back({e.id, "duration " + std::to_string(audio_dur) +
                                           " s exceeds the maximum"});
        continue;
      }
      if (w.sample_rate != config.mel.sample_rate) {
        w.samples = resample_audio(w.samples, w.sample_rate, config.mel.sample_rate);
        w.sample_rate = config.mel.sample_rate;
      }
      PairedUtterance u;
      u.id = e.id;
      u.split = e.split;
      u.text = tokenize(e.text);
      u.mel = mel_spectrogram(w.samples, config.mel);
      const Eigen::Index frames =
          (u.mel.frames() + config.motion_ratio - 1) / config.motion_ratio;
      u.motion = fit_motion(raw, u.mel.fps / config.motion_ratio, frames);
      u.waveform = std::move(w.samples);
      u.duration_s = audio_dur;
      result.utterances.push_back(std::move(u));
    } catch (const std::exception& ex) {
      result.errors.push_back({e.id, ex.what()});
    }
  }
  return result;
}

CorpusManifest prepare_corpus(const CorpusManifest& manifest, const std::string& out_dir,
                              double max_dur, std::vector<CorpusIssue>* warnings) {
  fs::create_directories(fs::path(out_dir) / "wav");
  fs::create_directories(fs::path(out_dir) / "motion");
  CorpusManifest out;
  out.root = out_dir;
  auto warn = [&](const std::string& id, const std::string& msg) {
    if (warnings != nullptr) warnings->push_back({id, msg});
  };
  for (const ManifestEntry& e : manifest.entries) {
    try {
      const Waveform w = read_wav(manifest.resolve(e.audio));
      const MotionSequence motion = load_motion(manifest, e, 60.0);
      const double dur = w.duration_s();
      std::vector<std::vector<std::string>> texts(1);
      for (const std::string& t : tokenize(e.text)) {
        if (t == kBreathToken) {
          texts.emplace_back();
        } else {
          texts.back().push_back(t);
        }
      }
      if (texts.size() != e.breaths.size() + 1) {
        warn(e.id, "text has " + std::to_string(texts.size() - 1) + " breath tokens but " +
                       std::to_string(e.breaths.size()) + " breath times; skipped");
        continue;
      }
      std::vector<double> edges = {0.0};
      edges.insert(edges.end(), e.breaths.begin(), e.breaths.end());
      edges.push_back(dur);
      std::vector<BreathGroup> groups;
      for (std::size_t g = 0; g < texts.size(); ++g) {
        const Span s{edges[g], edges[g + 1]};
        groups.push_back({texts[g], s, s});
      }
      for (const AugmentedSegment& seg : build_breathgroup_bigrams(groups, max_dur, warnings, e.id)) {
        ManifestEntry n;
        n.id = e.id + "_g" + std::to_string(seg.first) +
               (seg.count == 2 ? "-" + std::to_string(seg.first + 1) : "");
        n.text = detokenize(seg.group.text);
        n.audio = "wav/" + n.id + ".wav";
        n.motion = "motion/" + n.id + ".csv";
        n.split = e.split;
        n.motion_fps = motion.fps;
        if (seg.count == 2) n.breaths = {edges[seg.first + 1] - seg.group.audio_span.start_s};
        write_wav(out.resolve(n.audio), slice_audio(w.samples, w.sample_rate, seg.group.audio_span),
                  w.sample_rate);
        write_motion_csv(out.resolve(n.motion), slice_motion(motion, seg.group.motion_span));
        out.entries.push_back(std::move(n));
      }
    } catch (const std::exception& ex) {
      warn(e.id, ex.what());
    }
  }
  const fs::path skeleton = fs::path(manifest.root) / "skeleton.bvh";
  if (fs::exists(skeleton)) {
    fs::copy_file(skeleton, fs::path(out_dir) / "skeleton.bvh",
                  fs::copy_options::overwrite_existing);
  }
  write_manifest((fs::path(out_dir) / "manifest.jsonl").string(), out);
  return out;
}

void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = {{"sample_rate", c.sample_rate},       {"motion_fps", c.motion_fps},
       {"max_duration_s", c.max_duration_s}, {"min_groups", c.min_groups},
       {"max_groups", c.max_groups},         {"min_words", c.min_words},
       {"max_words", c.max_words},           {"min_letters", c.min_letters},
       {"max_letters", c.max_letters},       {"pitch_scale", c.pitch_scale},
       {"train_fraction", c.train_fraction}, {"val_fraction", c.val_fraction}};
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
  SynthConfig d;
  c.sample_rate = j.value("sample_rate", d.sample_rate);
  c.motion_fps = j.value("motion_fps", d.motion_fps);
  c.max_duration_s = j.value("max_duration_s", d.max_duration_s);
  c.min_groups = j.value("min_groups", d.min_groups);
  c.max_groups = j.value("max_groups", d.max_groups);
  c.min_words = j.value("min_words", d.min_words);
  c.max_words = j.value("max_words", d.max_words);
  c.min_letters = j.value("min_letters", d.min_letters);
  c.max_letters = j.value("max_letters", d.max_letters);
  c.pitch_scale = j.value("pitch_scale", d.pitch_scale);
  c.train_fraction = j.value("train_fraction", d.train_fraction);
  c.val_fraction = j.value("val_fraction", d.val_fraction);
}

const std::string& synthetic_alphabet() {
  static const std::string kAlphabet = "aeioustnrlmdk";
  return kAlphabet;
}

int synthetic_envelope_channel() { return 3 * 7 + 2; }  // LeftShoulder z

SyntheticUtterance render_text(const std::string& text, std::uint64_t seed,
                               const SynthConfig& c) {
  const std::vector<std::string> tokens = tokenize(text);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.003);
  const double prosody_phase = 2 * kPi * u01(rng);
  const double sway_phase = 2 * kPi * u01(rng);
  const double nod_phase = 2 * kPi * u01(rng);

  SyntheticUtterance out;
  out.text = text;
  const double rate = c.sample_rate;
  double t_tok = 0.0;
  double phase = 0.0;
  for (const std::string& tok : tokens) {
    const double dur = token_duration(tok, c.pitch_scale);
    const auto n = static_cast<std::size_t>(std::llround((t_tok + dur) * rate)) -
                   out.waveform.size();
    double hz = 0.0, amp = 0.0;
    if (tok == kBreathToken) {
      out.breaths.push_back(t_tok + dur / 2);
    } else if (tok != " ") {
      const auto s = letter_sound(static_cast<int>(synthetic_alphabet().find(tok)), c.pitch_scale);
      hz = s.hz;
      amp = s.amp;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double local = i / rate;
      const double ramp = std::min({1.0, local / kRamp, (dur - local) / kRamp});
      const double t = (out.waveform.size()) / rate;
      const double env = amp * std::max(0.0, ramp) * (1.0 + 0.2 * std::sin(2 * kPi * 1.5 * t + prosody_phase));
      phase += 2 * kPi * hz / rate;
      out.envelope.push_back(env);
      out.waveform.push_back(env * (0.8 * std::sin(phase) + 0.2 * std::sin(2 * phase)) + noise(rng));
    }
    t_tok += dur;
  }

  const double dur = out.waveform.size() / rate;
  const Eigen::Index frames = std::max<Eigen::Index>(1, std::llround(dur * c.motion_fps));
  std::vector<double> e(static_cast<std::size_t>(frames), 0.0);
  for (Eigen::Index f = 0; f < frames; ++f) {
    const double t = f / c.motion_fps;
    const auto a = static_cast<std::size_t>(std::max(0.0, (t - 0.5 / c.motion_fps) * rate));
    const auto b = std::min(out.envelope.size(),
                            static_cast<std::size_t>((t + 0.5 / c.motion_fps) * rate));
    double s = 0.0;
    for (std::size_t i = a; i < b; ++i) s += out.envelope[i];
    e[f] = b > a ? s / (b - a) : 0.0;
  }
  auto lag = [&](Eigen::Index f, int k) { return e[std::max<Eigen::Index>(0, f - k)]; };
  const Skeleton sk = toy_skeleton();
  out.motion.fps = c.motion_fps;
  out.motion.joint_names = sk.names();
  out.motion.values = Eigen::MatrixXd::Zero(frames, 3 * sk.size());
  for (Eigen::Index f = 0; f < frames; ++f) {
    const double t = f / c.motion_fps;
    auto ch = [&](int joint, int axis) -> double& { return out.motion.values(f, 3 * joint + axis); };
    ch(1, 0) = 0.05 * std::sin(2 * kPi * 0.3 * t + sway_phase);
    ch(1, 2) = 0.1 * e[f];
    ch(2, 0) = 0.15 * lag(f, 5);
    ch(3, 0) = 0.2 * e[f];
    ch(3, 1) = 0.1 * std::sin(2 * kPi * 0.5 * t + nod_phase);
    ch(4, 0) = 0.1 * std::sin(2 * kPi * 0.4 * t + sway_phase);
    ch(4, 2) = 1.2 - 0.7 * lag(f, 3);
    ch(5, 1) = -0.2 - 0.4 * e[f];
    ch(7, 2) = -1.2 + 0.8 * e[f];
    ch(8, 1) = 0.2 + 0.4 * e[f];
  }
  return out;
}

SyntheticUtterance synthesize_utterance(std::uint64_t seed, const SynthConfig& c) {
  std::mt19937_64 rng(seed);
  auto uniform_int = [&](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, std::max(lo, hi))(rng);
  };
  const std::string& alphabet = synthetic_alphabet();
  std::vector<std::vector<std::string>> groups(static_cast<std::size_t>(uniform_int(c.min_groups, c.max_groups)));
  for (auto& g : groups) {
    const int words = uniform_int(c.min_words, c.max_words);
    for (int w = 0; w < words; ++w) {
      std::string word;
      const int letters = uniform_int(c.min_letters, c.max_letters);
      for (int l = 0; l < letters; ++l) {
        word += alphabet[static_cast<std::size_t>(uniform_int(0, static_cast<int>(alphabet.size()) - 1))];
      }
      g.push_back(word);
    }
  }
  auto text_of = [&] {
    std::string t;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      if (g) t += kBreathToken;
      for (std::size_t w = 0; w < groups[g].size(); ++w) t += (w ? " " : "") + groups[g][w];
    }
    return t;
  };
  auto duration_of = [&](const std::string& t) {
    double d = 0.0;
    for (const auto& tok : tokenize(t)) d += token_duration(tok, c.pitch_scale);
    return d;
  };
  std::string text = text_of();
  while (duration_of(text) > c.max_duration_s) {
    auto& last = groups.back();
    if (last.size() > 1) {
      last.pop_back();
    } else if (groups.size() > 1) {
      groups.pop_back();
    } else {
      last.back().pop_back();
    }
    text = text_of();
  }
  return render_text(text, mix_seed(seed, 1), c);
}

CorpusManifest generate_synthetic_corpus(std::uint64_t seed, int n, const SynthConfig& c,
                                         const std::string& out_dir) {
  if (n < 1) throw ValidationError("n_utterances must be >= 1");
  fs::create_directories(fs::path(out_dir) / "wav");
  fs::create_directories(fs::path(out_dir) / "motion");
  CorpusManifest m;
  m.root = out_dir;
  const int n_train = std::max(1, static_cast<int>(std::lround(n * c.train_fraction)));
  const int n_val = static_cast<int>(std::lround(n * c.val_fraction));
  for (int i = 0; i < n; ++i) {
    const SyntheticUtterance u = synthesize_utterance(mix_seed(seed, static_cast<std::uint64_t>(i)), c);
    char id[32];
    std::snprintf(id, sizeof(id), "utt_%04d", i);
    ManifestEntry e;
    e.id = id;
    e.text = u.text;
    e.audio = "wav/" + e.id + ".wav";
    e.motion = "motion/" + e.id + ".csv";
    e.breaths = u.breaths;
    e.split = i < n_train ? "train" : i < n_train + n_val ? "val" : "test";
    e.motion_fps = c.motion_fps;
    write_wav(m.resolve(e.audio), u.waveform, c.sample_rate);
    write_motion_csv(m.resolve(e.motion), u.motion);
    m.entries.push_back(std::move(e));
  }
  MotionSequence rest;
  rest.fps = c.motion_fps;
  rest.values = Eigen::MatrixXd::Zero(1, 3 * toy_skeleton().size());
  write_bvh((fs::path(out_dir) / "skeleton.bvh").string(), toy_skeleton(), rest);
  write_manifest((fs::path(out_dir) / "manifest.jsonl").string(), m);
  return m;
}

}  // namespace isg
