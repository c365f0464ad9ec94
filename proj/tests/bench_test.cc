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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "isg/bench.h"

namespace isg::bench {
namespace {

namespace fs = std::filesystem;

// t_{0.975, df} by bisection on a Simpson-integrated Student-t density.
double t_quantile_oracle(int df) {
  const double nu = df;
  const double c = std::exp(std::lgamma((nu + 1) / 2) - std::lgamma(nu / 2)) /
                   std::sqrt(nu * M_PI);
  auto pdf = [&](double x) { return c * std::pow(1 + x * x / nu, -(nu + 1) / 2); };
  auto mass = [&](double b) {  // integral over [0, b]
    const int n = 20000;
    const double h = b / n;
    double s = pdf(0) + pdf(b);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4 : 2) * pdf(i * h);
    return s * h / 3;
  };
  double lo = 0, hi = 50;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mass(mid) < 0.475 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

MotionSequence motion_of(const Matrix& v) {
  MotionSequence m;
  m.values = v;
  m.fps = 20;
  return m;
}

RunRecord stub_run(double seconds, bool pipeline) {
  RunRecord r;
  r.seconds = seconds;
  r.utterance_s = 2.0;
  if (pipeline) {
    StageTimings t;
    t.speech_start = StageTimings::Clock::now();
    t.speech_end = t.speech_start + std::chrono::milliseconds(10);
    t.gesture_start = t.speech_end + std::chrono::milliseconds(1);
    t.gesture_end = t.gesture_start + std::chrono::milliseconds(20);
    r.stages = t;
    r.seconds = t.total_s();
  }
  return r;
}

TEST_CASE("parameter counting") {
  nn::ParameterStore store;
  nn::Rng rng(1);
  nn::Linear affine(store, "affine", 4, 3, rng);
  CHECK(count_parameters(store) == 15);
  nn::Linear other(store, "other", 2, 5, rng, false);
  CHECK(count_parameters(store) == 25);
  CHECK(count_parameters(store, "affine.") == 15);
  CHECK(format_millions(28190000) == "28.19M");

  ModelBundle pipeline(ModelKind::kPipeline, {{"preset", "toy"}}, 2);
  const auto total = count_parameters(pipeline.store());
  CHECK(total == count_parameters(pipeline.store(), "speech.") +
                     count_parameters(pipeline.store(), "audio_gesture."));
  CHECK(pipeline.parameter_count() == total);
}

TEST_CASE("student t quantiles") {
  for (int df : {1, 2, 3, 7, 30, 119, 120}) {
    CHECK(student_t975(df) == doctest::Approx(t_quantile_oracle(df)).epsilon(2e-6));
  }
  CHECK(student_t975(1000) == doctest::Approx(1.959964));
  CHECK_THROWS_AS(student_t975(0), ValidationError);

  const Summary s = summarize({1.0, 2.0, 3.0});
  CHECK(s.mean == doctest::Approx(2.0));
  CHECK(s.ci95 == doctest::Approx(t_quantile_oracle(2) / std::sqrt(3.0)).epsilon(1e-6));
  CHECK(std::abs(s.ci95 - 2.484) < 1e-3);
  CHECK(summarize({0.5, 0.5, 0.5, 0.5}).ci95 == 0.0);
  CHECK_THROWS_AS(summarize({1.0}), ValidationError);
}

TEST_CASE("timing runs") {
  int calls = 0;
  const ModelTiming flat = time_runs("stub", 2, 3, [&](std::size_t) {
    ++calls;
    return stub_run(0.25, false);
  });
  CHECK(calls == 7);  // warm-up excluded from the 6 samples
  CHECK(flat.total.n == 6);
  CHECK(flat.total.ci95 == 0.0);
  CHECK(flat.mean_utterance_s == 2.0);
  CHECK_FALSE(flat.speech.has_value());

  const ModelTiming pipe = time_runs("pipe", 1, 3, [&](std::size_t) { return stub_run(0, true); });
  REQUIRE(pipe.speech.has_value());
  CHECK(pipe.all_sequential);
  CHECK(pipe.total.mean >= pipe.speech->mean);
  CHECK(pipe.total.mean >= pipe.speech->mean + pipe.gesture->mean);
  CHECK_THROWS_AS(time_runs("x", 1, 1, [&](std::size_t) { return stub_run(1, false); }),
                  ValidationError);

  TimingReport a, b;
  a.add(flat);
  a.add(pipe);
  b.add(pipe);
  b.add(flat);
  CHECK(a.to_json() == b.to_json());
  CHECK(a.markdown() == b.markdown());
  CHECK(a.markdown().find("TTS") != std::string::npos);
}

TEST_CASE("synthesis timing on a model") {
  ModelBundle m(ModelKind::kPipeline, {{"preset", "toy"}}, 2);
  m.set_mean_pose(Eigen::RowVectorXd::Zero(30));
  const ModelTiming t = time_synthesis("pipeline", m, {m.encode_text("ab ba")}, 2, 1);
  CHECK(t.total.n == 2);
  CHECK(t.all_sequential);
  CHECK(t.total.mean >= t.speech->mean);
  CHECK(t.parameters == m.parameter_count());
}

TEST_CASE("motion statistics") {
  const MotionStats flat = motion_stats(motion_of(Matrix::Constant(5, 3, 0.7)));
  CHECK(flat.range.isZero());
  CHECK(flat.variation == 0.0);

  Matrix ramp(11, 1);
  for (int t = 0; t < 11; ++t) ramp(t, 0) = t / 10.0;
  const MotionStats r = motion_stats(motion_of(ramp));
  CHECK(r.range(0) == doctest::Approx(1.0));
  CHECK(r.variation == doctest::Approx(0.1));
  CHECK_THROWS_AS(motion_stats(motion_of(Matrix::Zero(1, 3))), ValidationError);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0, 1);
  for (int k = 0; k < 100; ++k) {
    Matrix v(5 + k % 30, 6);
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = g(rng);
    const MotionSequence m = motion_of(v);
    CHECK(motion_stats(gaussian_smooth(m, 3, 1.0)).variation <= motion_stats(m).variation + 1e-12);
  }
}

TEST_CASE("gesture space plot") {
  const Skeleton sk = toy_skeleton();
  const int n = sk.size();
  // Rest pose: accumulated offsets.
  const GestureSpacePlot rest = gesture_space_plot({motion_of(Matrix::Zero(3, 3 * n))}, sk);
  std::vector<Eigen::Vector3d> world(n);
  for (int j = 0; j < n; ++j) {
    const int p = sk.joints[j].parent;
    world[j] = (p < 0 ? Eigen::Vector3d::Zero() : world[p]) + sk.joints[j].offset;
    for (int t = 0; t < 3; ++t) {
      CHECK(rest.traces[0](t, 2 * j) == doctest::Approx(world[j].x()));
      CHECK(rest.traces[0](t, 2 * j + 1) == doctest::Approx(world[j].y()));
    }
  }
  CHECK(rest.parts[sk.index_of("RightElbow")] == BodyPart::kRightArm);
  CHECK(rest.parts[sk.index_of("LeftWrist")] == BodyPart::kLeftArm);
  CHECK(rest.parts[sk.index_of("Head")] == BodyPart::kTorso);

  // Constant non-trivial pose: every frame maps to the same point.
  Matrix pose = Matrix::Constant(4, 3 * n, 0.2);
  const GestureSpacePlot still = gesture_space_plot({motion_of(pose)}, sk);
  for (int t = 1; t < 4; ++t) CHECK(still.traces[0].row(t).isApprox(still.traces[0].row(0)));

  // Shoulder sweep about the frontal normal: the elbow traces an arc around
  // the shoulder with the upper-arm length as radius.
  const int shoulder = sk.index_of("RightShoulder");
  const int elbow = sk.index_of("RightElbow");
  Matrix sweep = Matrix::Zero(25, 3 * n);
  for (int t = 0; t < 25; ++t) sweep(t, 3 * shoulder + 2) = -1.2 + 0.1 * t;
  const GestureSpacePlot arc = gesture_space_plot({motion_of(sweep)}, sk);
  const double radius = sk.joints[elbow].offset.norm();
  for (int t = 0; t < 25; ++t) {
    const double dx = arc.traces[0](t, 2 * elbow) - arc.traces[0](t, 2 * shoulder);
    const double dy = arc.traces[0](t, 2 * elbow + 1) - arc.traces[0](t, 2 * shoulder + 1);
    CHECK(std::abs(std::hypot(dx, dy) - radius) < 1e-6);
  }

  MotionSequence wrong = motion_of(Matrix::Zero(2, 3 * n));
  wrong.joint_names = sk.names();
  wrong.joint_names[3] = "Skull";
  CHECK_THROWS_AS(gesture_space_plot({wrong}, sk), ValidationError);
  CHECK_THROWS_AS(gesture_space_plot({motion_of(Matrix::Zero(2, 6))}, sk), ValidationError);

  const fs::path dir = fs::temp_directory_path() / "isg_bench_test";
  fs::create_directories(dir);
  arc.write_csv((dir / "arc.csv").string());
  arc.write_png((dir / "arc.png").string(), 64, 64);
  std::ifstream png(dir / "arc.png", std::ios::binary);
  char sig[8] = {};
  png.read(sig, 8);
  CHECK(std::string(sig + 1, 3) == "PNG");
  std::ifstream csv(dir / "arc.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "motion,frame,joint,part,x,y");
  int rows = 0;
  for (std::string line; std::getline(csv, line);) ++rows;
  CHECK(rows == 25 * n);
}

}  // namespace
}  // namespace isg::bench
