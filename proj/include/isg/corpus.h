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

#ifndef ISG_CORPUS_H_
#define ISG_CORPUS_H_

// Paired text / audio / motion corpora.

#include <cstdint>
#include <string>
#include <vector>

#include "isg/features.h"
#include "json.hpp"

namespace isg {

struct Span {
  double start_s = 0.0;
  double end_s = 0.0;
  double duration() const { return end_s - start_s; }
};

struct BreathGroup {
  std::vector<std::string> text;
  Span audio_span;
  Span motion_span;
};

// A training segment made of `count` (1 or 2) consecutive groups starting at
// group `first`.
struct AugmentedSegment {
  BreathGroup group;
  int first = 0;
  int count = 1;
};

struct CorpusIssue {
  std::string id;
  std::string message;
};

// Every group no longer than max_dur plus every consecutive pair whose
// combined span is no longer than max_dur, ordered by first group, singles
// before pairs. Pair text joins the two groups with the breath token.
// Overlong single groups are dropped and reported through `warnings`.
std::vector<AugmentedSegment> build_breathgroup_bigrams(
    const std::vector<BreathGroup>& groups, double max_dur,
    std::vector<CorpusIssue>* warnings = nullptr, const std::string& id = "");

struct PairedUtterance {
  std::string id;
  std::string split;
  std::vector<std::string> text;
  std::vector<double> waveform;  // at mel.sample_rate
  MelSpectrogram mel;
  MotionSequence motion;
  double duration_s = 0.0;
};

struct ManifestEntry {
  std::string id;
  std::string text;
  std::string audio;   // path relative to the manifest directory
  std::string motion;  // .csv or .bvh
  std::vector<double> breaths;  // breath times (s) separating groups
  std::string split = "train";
  double motion_fps = 0.0;  // CSV frame rate; 0 means the corpus default
};

void to_json(nlohmann::json& j, const ManifestEntry& e);
void from_json(const nlohmann::json& j, ManifestEntry& e);

struct CorpusManifest {
  std::vector<ManifestEntry> entries;
  std::string root;  // directory that entry paths are relative to

  std::string resolve(const std::string& relative) const;
  std::vector<const ManifestEntry*> split(const std::string& name) const;
};

// JSON lines, one entry per line. `root` becomes the file's directory.
CorpusManifest read_manifest(const std::string& path);
void write_manifest(const std::string& path, const CorpusManifest& manifest);
// Unique ids, known split tags, readable files. Returns every problem found.
std::vector<CorpusIssue> validate_manifest(const CorpusManifest& manifest);

struct CorpusConfig {
  MelConfig mel;
  // Motion targets run at mel fps / motion_ratio with exactly
  // ceil(mel frames / motion_ratio) frames.
  int motion_ratio = 4;
  double max_duration_s = 11.0;
  double align_tolerance_s = 0.1;
  double default_motion_fps = 60.0;
  std::vector<std::string> splits;  // empty loads every split
};

void to_json(nlohmann::json& j, const CorpusConfig& c);
void from_json(const nlohmann::json& j, CorpusConfig& c);

struct LoadResult {
  std::vector<PairedUtterance> utterances;
  std::vector<CorpusIssue> errors;
};

LoadResult load_paired_corpus(const CorpusManifest& manifest, const CorpusConfig& config);

// Resamples to `fps` and pads (repeating the last frame) or trims to exactly
// `frames` frames.
MotionSequence fit_motion(const MotionSequence& motion, double fps, Eigen::Index frames);

// Splits every entry into breath groups at its breath times, builds bigrams
// and writes each segment as its own WAV + CSV pair under out_dir. Returns the
// manifest of the written segments (also saved as out_dir/manifest.jsonl).
CorpusManifest prepare_corpus(const CorpusManifest& manifest, const std::string& out_dir,
                              double max_dur, std::vector<CorpusIssue>* warnings = nullptr);

struct SynthConfig {
  int sample_rate = 22050;
  double motion_fps = 60.0;
  double max_duration_s = 11.0;
  int min_groups = 1;
  int max_groups = 3;
  int min_words = 2;
  int max_words = 4;
  int min_letters = 2;
  int max_letters = 5;
  double pitch_scale = 1.0;  // shifts every token tone (a different "voice")
  double train_fraction = 0.8;
  double val_fraction = 0.1;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

struct SyntheticUtterance {
  std::string text;
  std::vector<double> waveform;
  std::vector<double> breaths;
  MotionSequence motion;
  std::vector<double> envelope;  // per-sample amplitude envelope
};

// Letters used by the synthetic generator.
const std::string& synthetic_alphabet();
// Motion channel driven directly by the audio energy envelope.
int synthetic_envelope_channel();

SyntheticUtterance synthesize_utterance(std::uint64_t seed, const SynthConfig& config);
// Renders arbitrary text from the synthetic alphabet (plus ' ' and "<B>").
SyntheticUtterance render_text(const std::string& text, std::uint64_t seed,
                               const SynthConfig& config);

// Writes wav/, motion/, skeleton.bvh and manifest.jsonl under out_dir.
// Identical (seed, n, config) gives byte-identical files.
CorpusManifest generate_synthetic_corpus(std::uint64_t seed, int n_utterances,
                                         const SynthConfig& config,
                                         const std::string& out_dir);

}  // namespace isg

#endif  // ISG_CORPUS_H_
