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

#include "isg/bench.h"

#include <png.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace isg::bench {

using nlohmann::json;

std::int64_t count_parameters(const nn::ParameterStore& store, const std::string& prefix) {
  std::int64_t n = 0;
  for (const ad::Parameter* p : store.all()) {
    if (p->name.compare(0, prefix.size(), prefix) == 0) n += p->value.size();
  }
  return n;
}

double student_t975(int df) {
  static constexpr std::array<double, 120> kTable = {
      12.706205, 4.302653, 3.182446, 2.776445, 2.570582, 2.446912,
      2.364624,  2.306004, 2.262157, 2.228139, 2.200985, 2.178813,
      2.160369,  2.144787, 2.131450, 2.119905, 2.109816, 2.100922,
      2.093024,  2.085963, 2.079614, 2.073873, 2.068658, 2.063899,
      2.059539,  2.055529, 2.051831, 2.048407, 2.045230, 2.042272,
      2.039513,  2.036933, 2.034515, 2.032245, 2.030108, 2.028094,
      2.026192,  2.024394, 2.022691, 2.021075, 2.019541, 2.018082,
      2.016692,  2.015368, 2.014103, 2.012896, 2.011741, 2.010635,
      2.009575,  2.008559, 2.007584, 2.006647, 2.005746, 2.004879,
      2.004045,  2.003241, 2.002465, 2.001717, 2.000995, 2.000298,
      1.999624,  1.998972, 1.998341, 1.997730, 1.997138, 1.996564,
      1.996008,  1.995469, 1.994945, 1.994437, 1.993943, 1.993464,
      1.992997,  1.992543, 1.992102, 1.991673, 1.991254, 1.990847,
      1.990450,  1.990063, 1.989686, 1.989319, 1.988960, 1.988610,
      1.988268,  1.987934, 1.987608, 1.987290, 1.986979, 1.986675,
      1.986377,  1.986086, 1.985802, 1.985523, 1.985251, 1.984984,
      1.984723,  1.984467, 1.984217, 1.983972, 1.983731, 1.983495,
      1.983264,  1.983038, 1.982815, 1.982597, 1.982383, 1.982173,
      1.981967,  1.981765, 1.981567, 1.981372, 1.981180, 1.980992,
      1.980808,  1.980626, 1.980448, 1.980272, 1.980100, 1.979930,
  };
  if (df < 1) throw ValidationError("student_t975: df must be >= 1");
  if (df <= static_cast<int>(kTable.size())) return kTable[static_cast<std::size_t>(df - 1)];
  return 1.959964;
}

Summary summarize(const std::vector<double>& samples) {
  if (samples.size() < 2) throw ValidationError("a confidence interval needs at least 2 samples");
  Summary s;
  s.n = static_cast<int>(samples.size());
  for (double x : samples) s.mean += x;
  s.mean /= s.n;
  double ss = 0.0;
  for (double x : samples) ss += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(ss / (s.n - 1));
  s.ci95 = student_t975(s.n - 1) * s.stddev / std::sqrt(static_cast<double>(s.n));
  return s;
}

ModelTiming time_runs(const std::string& model, std::size_t n_texts, int n_repeats,
                      const std::function<RunRecord(std::size_t)>& run) {
  if (n_texts == 0) throw ValidationError("timing needs at least one text");
  if (n_repeats < 1 || n_texts * static_cast<std::size_t>(n_repeats) < 2) {
    throw ValidationError("timing needs at least 2 timed runs");
  }
  ModelTiming t;
  t.model = model;
  run(0);  // warm-up
  std::vector<double> speech, gesture;
  double utt = 0.0;
  for (int r = 0; r < n_repeats; ++r) {
    for (std::size_t i = 0; i < n_texts; ++i) {
      const RunRecord rec = run(i);
      t.samples.push_back(rec.seconds);
      utt += rec.utterance_s;
      if (rec.stages) {
        speech.push_back(rec.stages->speech_s());
        gesture.push_back(rec.stages->gesture_s());
        t.all_sequential = t.all_sequential && rec.stages->sequential();
      }
    }
  }
  t.total = summarize(t.samples);
  t.mean_utterance_s = utt / static_cast<double>(t.samples.size());
  if (!speech.empty()) {
    t.speech = summarize(speech);
    t.gesture = summarize(gesture);
  }
  return t;
}

ModelTiming time_synthesis(const std::string& name, ModelBundle& model,
                           const std::vector<std::vector<int>>& texts, int n_repeats,
                           std::uint64_t seed) {
  std::uint64_t k = 0;
  ModelTiming t = time_runs(name, texts.size(), n_repeats, [&](std::size_t i) {
    SynthesisOptions o;
    o.seed = nn::mix_seed(seed, k++);
    const SynthesisResult r = model.synthesize(texts[i], o);
    RunRecord rec;
    rec.seconds = r.seconds;
    rec.utterance_s = r.mel.duration_s();
    rec.stages = r.stages;
    return rec;
  });
  t.parameters = model.parameter_count();
  t.breakdown = model.parameter_breakdown();
  return t;
}

void TimingReport::add(ModelTiming timing) {
  models.push_back(std::move(timing));
  std::sort(models.begin(), models.end(),
            [](const ModelTiming& a, const ModelTiming& b) { return a.model < b.model; });
}

namespace {

json summary_json(const Summary& s) {
  return {{"n", s.n}, {"mean_s", s.mean}, {"stddev_s", s.stddev}, {"ci95_s", s.ci95}};
}

std::string format_time(const Summary& s) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f ± %.3f s", s.mean, s.ci95);
  return buf;
}

}  // namespace

json TimingReport::to_json() const {
  json out = json::array();
  for (const ModelTiming& m : models) {
    json j = {{"model", m.model},
              {"parameters", m.parameters},
              {"synthesis", summary_json(m.total)},
              {"mean_utterance_s", m.mean_utterance_s},
              {"samples_s", m.samples}};
    json parts = json::object();
    for (const auto& [prefix, n] : m.breakdown) parts[prefix] = n;
    j["parameter_breakdown"] = parts;
    if (m.speech) {
      j["stages"] = {{"speech", summary_json(*m.speech)},
                     {"gesture", summary_json(*m.gesture)},
                     {"all_sequential", m.all_sequential}};
    }
    out.push_back(j);
  }
  return {{"models", out}};
}

std::string format_millions(std::int64_t n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2fM", static_cast<double>(n) / 1e6);
  return buf;
}

std::string TimingReport::markdown() const {
  std::ostringstream os;
  os << "| System | Param. count | Synth. time | Mean utt. dur. |\n";
  os << "|---|---:|---:|---:|\n";
  for (const ModelTiming& m : models) {
    char dur[32];
    std::snprintf(dur, sizeof(dur), "%.2f s", m.mean_utterance_s);
    os << "| " << m.model << " | " << format_millions(m.parameters) << " | "
       << format_time(m.total) << " | " << dur << " |\n";
    if (m.speech) {
      std::int64_t speech_n = 0, gesture_n = 0;
      for (const auto& [prefix, n] : m.breakdown) {
        (prefix == "speech" ? speech_n : gesture_n) += n;
      }
      os << "| &nbsp;&nbsp;TTS | " << format_millions(speech_n) << " | "
         << format_time(*m.speech) << " | |\n";
      os << "| &nbsp;&nbsp;gesture | " << format_millions(gesture_n) << " | "
         << format_time(*m.gesture) << " | |\n";
    }
  }
  return os.str();
}

MotionStats motion_stats(const MotionSequence& motion) {
  if (motion.frames() < 2) {
    throw ValidationError("motion_stats: variation needs at least 2 frames");
  }
  MotionStats s;
  s.range = motion.values.colwise().maxCoeff() - motion.values.colwise().minCoeff();
  const Matrix delta = motion.values.bottomRows(motion.frames() - 1) -
                       motion.values.topRows(motion.frames() - 1);
  s.variation = delta.cwiseAbs().mean();
  return s;
}

std::string to_string(BodyPart p) {
  switch (p) {
    case BodyPart::kRightArm:
      return "right_arm";
    case BodyPart::kLeftArm:
      return "left_arm";
    case BodyPart::kTorso:
      return "torso";
  }
  return "torso";
}

BodyPart body_part(const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  auto arm = [&](const std::string& side) {
    if (lower.rfind(side, 0) != 0) return false;
    for (const char* part : {"shoulder", "arm", "elbow", "wrist", "hand", "finger", "thumb"}) {
      if (lower.find(part) != std::string::npos) return true;
    }
    return false;
  };
  if (arm("right") || arm("r_")) return BodyPart::kRightArm;
  if (arm("left") || arm("l_")) return BodyPart::kLeftArm;
  return BodyPart::kTorso;
}

GestureSpacePlot gesture_space_plot(const std::vector<MotionSequence>& motions,
                                    const Skeleton& skeleton) {
  GestureSpacePlot plot;
  plot.joints = skeleton.names();
  for (const std::string& j : plot.joints) plot.parts.push_back(body_part(j));
  const int n = skeleton.size();
  for (const MotionSequence& m : motions) {
    if (!m.joint_names.empty() && m.joint_names != plot.joints) {
      throw ValidationError("gesture_space_plot: motion joints do not match the skeleton");
    }
    if (m.dims() != 3 * n) {
      throw ValidationError("gesture_space_plot: motion has " + std::to_string(m.dims()) +
                            " channels, skeleton needs " + std::to_string(3 * n));
    }
    Matrix trace(m.frames(), 2 * n);
    for (Eigen::Index t = 0; t < m.frames(); ++t) {
      const Eigen::MatrixXd pos = forward_kinematics(skeleton, m.values.row(t));
      for (int j = 0; j < n; ++j) {
        trace(t, 2 * j) = pos(j, 0);
        trace(t, 2 * j + 1) = pos(j, 1);
      }
    }
    plot.traces.push_back(std::move(trace));
  }
  return plot;
}

void GestureSpacePlot::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "motion,frame,joint,part,x,y\n";
  char buf[64];
  for (std::size_t m = 0; m < traces.size(); ++m) {
    for (Eigen::Index t = 0; t < traces[m].rows(); ++t) {
      for (std::size_t j = 0; j < joints.size(); ++j) {
        std::snprintf(buf, sizeof(buf), "%.6f,%.6f", traces[m](t, 2 * static_cast<Eigen::Index>(j)),
                      traces[m](t, 2 * static_cast<Eigen::Index>(j) + 1));
        out << m << ',' << t << ',' << joints[j] << ',' << to_string(parts[j]) << ',' << buf
            << '\n';
      }
    }
  }
}

void GestureSpacePlot::write_png(const std::string& path, int width, int height) const {
  if (width < 16 || height < 16) throw ValidationError("plot size must be at least 16x16");
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(width) * height * 3, 255);
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const Matrix& tr : traces) {
    for (Eigen::Index c = 0; c < tr.cols(); c += 2) {
      x0 = std::min(x0, tr.col(c).minCoeff());
      x1 = std::max(x1, tr.col(c).maxCoeff());
      y0 = std::min(y0, tr.col(c + 1).minCoeff());
      y1 = std::max(y1, tr.col(c + 1).maxCoeff());
    }
  }
  const double span = std::max({x1 - x0, y1 - y0, 1e-9});
  const double margin = 0.05 * std::min(width, height);
  const double scale = (std::min(width, height) - 2 * margin) / span;
  const double cx = 0.5 * (x0 + x1), cy = 0.5 * (y0 + y1);
  auto pixel = [&](double x, double y, const std::array<std::uint8_t, 3>& color) {
    const long px = std::lround(0.5 * width + (x - cx) * scale);
    const long py = std::lround(0.5 * height - (y - cy) * scale);
    for (long dy = -1; dy <= 1; ++dy) {
      for (long dx = -1; dx <= 1; ++dx) {
        const long u = px + dx, v = py + dy;
        if (u < 0 || v < 0 || u >= width || v >= height) continue;
        std::copy(color.begin(), color.end(), rgb.begin() + 3 * (v * width + u));
      }
    }
  };
  auto color_of = [](BodyPart p) -> std::array<std::uint8_t, 3> {
    switch (p) {
      case BodyPart::kRightArm:
        return {214, 39, 40};
      case BodyPart::kLeftArm:
        return {31, 119, 180};
      case BodyPart::kTorso:
        break;
    }
    return {90, 90, 90};
  };
  for (const Matrix& tr : traces) {
    for (std::size_t j = 0; j < joints.size(); ++j) {
      const auto color = color_of(parts[j]);
      const Eigen::Index c = 2 * static_cast<Eigen::Index>(j);
      for (Eigen::Index t = 0; t < tr.rows(); ++t) {
        pixel(tr(t, c), tr(t, c + 1), color);
        if (t == 0) continue;
        // Line to the previous frame.
        const double steps = std::max(std::abs(tr(t, c) - tr(t - 1, c)),
                                      std::abs(tr(t, c + 1) - tr(t - 1, c + 1))) *
                             scale;
        for (int s = 1; s < steps; ++s) {
          const double a = s / steps;
          pixel(tr(t - 1, c) + a * (tr(t, c) - tr(t - 1, c)),
                tr(t - 1, c + 1) + a * (tr(t, c + 1) - tr(t - 1, c + 1)), color);
        }
      }
    }
  }

  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw std::runtime_error("cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw std::runtime_error("png encoding failed for " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) png_write_row(png, rgb.data() + 3 * y * width);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

}  // namespace isg::bench
