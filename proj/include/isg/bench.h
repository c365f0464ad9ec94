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

#ifndef ISG_BENCH_H_
#define ISG_BENCH_H_

// Objective comparisons: parameter counts, synthesis timing with Student-t
// confidence intervals, motion statistics and gesture-space plots.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "isg/models.h"
#include "isg/motion_io.h"
#include "json.hpp"

namespace isg::bench {

// Element count of every parameter tensor whose name starts with `prefix`.
std::int64_t count_parameters(const nn::ParameterStore& store, const std::string& prefix = "");

// Two-sided 95% quantile t_{0.975, df}. Tabulated for df <= 120, normal
// approximation above.
double student_t975(int df);

struct Summary {
  int n = 0;
  double mean = 0.0;
  double stddev = 0.0;  // sample (n - 1) standard deviation
  double ci95 = 0.0;    // t_{0.975, n-1} * stddev / sqrt(n)
};

// Throws ValidationError for fewer than two samples.
Summary summarize(const std::vector<double>& samples);

struct RunRecord {
  double seconds = 0.0;
  double utterance_s = 0.0;  // duration of the synthesized speech
  std::optional<StageTimings> stages;
};

struct ModelTiming {
  std::string model;
  std::int64_t parameters = 0;
  std::vector<std::pair<std::string, std::int64_t>> breakdown;
  Summary total;
  std::optional<Summary> speech;   // pipeline stages
  std::optional<Summary> gesture;
  double mean_utterance_s = 0.0;
  std::vector<double> samples;
  bool all_sequential = true;  // gesture start >= speech end on every run
};

// Runs `run(text_index)` once for warm-up and then n_repeats times over every
// text, serially.
ModelTiming time_runs(const std::string& model, std::size_t n_texts, int n_repeats,
                      const std::function<RunRecord(std::size_t)>& run);

ModelTiming time_synthesis(const std::string& name, ModelBundle& model,
                           const std::vector<std::vector<int>>& texts, int n_repeats,
                           std::uint64_t seed);

struct TimingReport {
  std::vector<ModelTiming> models;  // sorted by name

  void add(ModelTiming timing);
  nlohmann::json to_json() const;
  // Table with System / Param. count / Synth. time columns.
  std::string markdown() const;
};

// Formats 28190000 as "28.19M".
std::string format_millions(std::int64_t n);

struct MotionStats {
  Eigen::RowVectorXd range;  // max - min per channel
  double variation = 0.0;    // mean |x_{t+1} - x_t| over frames and channels
};

// Throws ValidationError for fewer than two frames.
MotionStats motion_stats(const MotionSequence& motion);

enum class BodyPart { kRightArm, kLeftArm, kTorso };
std::string to_string(BodyPart p);
BodyPart body_part(const std::string& joint_name);

struct GestureSpacePlot {
  std::vector<std::string> joints;
  std::vector<BodyPart> parts;
  // traces[m](frame, 2 * joint + {0, 1}): frontal (x, y) of each joint.
  std::vector<Matrix> traces;

  void write_csv(const std::string& path) const;
  void write_png(const std::string& path, int width = 480, int height = 480) const;
};

// Forward kinematics from exponential maps projected onto the frontal plane
// (z dropped). Motion joint names, when present, must equal the skeleton's.
GestureSpacePlot gesture_space_plot(const std::vector<MotionSequence>& motions,
                                    const Skeleton& skeleton);

}  // namespace isg::bench

#endif  // ISG_BENCH_H_
