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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.
//
//   acceptance [--only N[,N...]] [--work DIR] [--keep]

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.h"
#include "isg/adversarial.h"
#include "isg/bench.h"
#include "isg/features.h"
#include "isg/flow.h"
#include "isg/gesture.h"
#include "isg/glow.h"
#include "isg/motion_io.h"
#include "isg/pipeline.h"
#include "isg/tacotron.h"
#include "isg/trainer.h"
#include "json.hpp"
#include "oracles.h"

namespace {

namespace fs = std::filesystem;
using isg::Matrix;
using nlohmann::json;

fs::path g_work;

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path dir(const std::string& name) {
  const fs::path p = g_work / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& gen) {
  std::normal_distribution<double> n01;
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n01(gen);
  return m;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

isg::flow::FlowDecoderConfig toy_flow() {
  isg::flow::FlowDecoderConfig c;
  c.channels = 8;
  c.n_blocks = 3;
  c.group = 4;
  c.squeeze = 2;
  c.wavenet = {8, 3, 2, 1, 0};
  return c;
}

Outcome flow_invertibility() {
  std::mt19937_64 gen(101);
  double err64 = 0, err32 = 0;
  for (int draw = 0; draw < 100; ++draw) {
    isg::flow::FlowDecoderConfig c = toy_flow();
    Eigen::Index frames = 10;
    if (draw % 2) {
      c = isg::flow::FlowDecoderConfig{};
      c.channels = 125;  // 250 flow channels in groups of 10
      frames = 6;
    }
    isg::nn::ParameterStore store;
    isg::nn::Rng rng(draw);
    isg::flow::FlowDecoder f(store, "f", c, rng);
    isg::testing::randomize_flow(store, "f", gen);
    const Matrix x = random_matrix(frames, c.channels, gen);
    err64 = std::max(err64, (f.inverse(f.forward(x).z) - x).cwiseAbs().maxCoeff());
    isg::flow::NumOps<float> ops;
    const Eigen::MatrixXf xf = x.cast<float>();
    const Eigen::MatrixXf back = f.inverse(ops, f.forward(ops, xf).first);
    err32 = std::max(err32, static_cast<double>((back - xf).cwiseAbs().maxCoeff()));
  }
  return {err64 < 1e-8 && err32 < 1e-4, "max err 64-bit " + fmt(err64) + ", 32-bit " + fmt(err32)};
}

Outcome logdet_exactness() {
  isg::flow::FlowDecoderConfig c = toy_flow();
  c.channels = 4;
  c.n_blocks = 2;
  c.wavenet = {6, 3, 2, 1, 0};
  std::mt19937_64 gen(202);
  double worst = 0;
  for (int draw = 0; draw < 20; ++draw) {
    isg::nn::ParameterStore store;
    isg::nn::Rng rng(500 + draw);
    isg::flow::FlowDecoder f(store, "f", c, rng);
    isg::testing::randomize_flow(store, "f", gen);
    const Matrix x = random_matrix(2, 4, gen);  // 8 dimensions
    const double numeric = isg::testing::numeric_logabsdet(
        [&](const Matrix& v) { return f.forward(v).z; }, x);
    worst = std::max(worst, std::abs(f.forward(x).logdet - numeric));
  }
  return {worst < 1e-3, "max |logdet - numeric| " + fmt(worst)};
}

Outcome alignment_oracle() {
  std::mt19937_64 gen(303);
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> s(0.5, 1.5);
  std::uniform_int_distribution<int> pick(0, 3);
  int agree = 0, total = 0, ties = 0;
  for (int k = 0; k < 500; ++k) {
    const int tokens = 1 + k % 4;
    const int frames = tokens + static_cast<int>(gen() % (9 - tokens));
    const int channels = 1 + k % 3;
    isg::TokenPrior p;
    p.mu = Matrix(tokens, channels);
    p.sigma = Matrix(tokens, channels);
    Matrix z(frames, channels);
    const bool tie = k % 5 == 0;
    for (Eigen::Index i = 0; i < p.mu.size(); ++i) {
      // Tie instances reuse a handful of values so that several alignments
      // share the best score.
      p.mu.data()[i] = tie ? 0.5 * pick(gen) : n01(gen);
      p.sigma.data()[i] = tie ? 1.0 : s(gen);
    }
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = tie ? 0.5 * pick(gen) : n01(gen);
    ties += tie;
    const isg::Alignment a = isg::mas_align(z, p);
    const auto want = isg::testing::brute_force_alignment(isg::frame_log_likelihood(z, p));
    agree += isg::alignment_is_valid(a, tokens) && a == want;
    ++total;
  }
  return {agree == total, std::to_string(agree) + "/" + std::to_string(total) + " agree (" +
                              std::to_string(ties) + " tie-prone instances)"};
}

Outcome schedule_exactness() {
  const isg::SamplingSchedule s;
  bool ok = true;
  for (int e = 0; e <= 4; ++e) ok &= isg::teacher_forcing_probability(e, s) == 1.0;
  for (int e = 45; e <= 2000; ++e) ok &= isg::teacher_forcing_probability(e, s) == 0.2;
  ok &= isg::teacher_forcing_probability(25, s) == 0.6;
  return {ok, "p(25) = " + fmt(isg::teacher_forcing_probability(25, s))};
}

Outcome frame_matching() {
  isg::ModelBundle m(isg::ModelKind::kTacotronIsg,
                     {{"preset", "toy"}, {"speech", {{"n_frames_per_step", 1}}}}, 1);
  const int width = m.speech()->config().attention_rnn_dim;
  const int n_mels = m.speech()->config().n_mels;
  int bad = 0;
  for (int steps = 1; steps <= 1000; ++steps) {
    const int want = (steps + 3) / 4;
    bad += isg::select_frames(Matrix::Zero(steps, 2), 4).rows() != want;
    bad += m.gesture_inputs(Matrix::Zero(steps, width), Matrix::Zero(steps, n_mels)).rows() != want;
  }
  return {bad == 0 && m.gesture_stride() == 4,
          std::to_string(bad) + " mismatches over 1..1000 steps"};
}

// Short single-group utterances for the training criteria.
std::string small_corpus(const std::string& name, std::uint64_t seed, int n, double pitch,
                         double val_fraction) {
  isg::SynthConfig c;
  c.max_groups = 1;
  c.min_words = 1;
  c.max_words = 2;
  c.max_letters = 3;
  c.pitch_scale = pitch;
  c.train_fraction = 1.0 - val_fraction;
  c.val_fraction = val_fraction;
  const fs::path d = dir(name);
  isg::generate_synthetic_corpus(seed, n, c, d.string());
  return (d / "manifest.jsonl").string();
}

json toy_model() { return {{"preset", "toy"}, {"speech", {{"n_frames_per_step", 2}}}}; }

isg::StageSpec toy_stage(const std::string& name, isg::Regime r, int iterations,
                         const std::string& corpus) {
  isg::StageSpec s;
  s.name = name;
  s.corpus = corpus;
  s.regime = r;
  s.iterations = iterations;
  s.seed = 7;
  s.model_config = toy_model();
  s.optimizer.lr = 2e-3;
  s.eval_interval = iterations;
  s.checkpoint_interval = iterations;
  s.max_eval_utterances = 2;
  if (r == isg::Regime::kIsgSt) s.freeze_set = {"speech"};
  return s;
}

std::vector<std::uint8_t> params_of(const std::string& ckpt, const std::string& prefix) {
  return isg::serialize_parameters(isg::ModelBundle::load(ckpt)->store(), prefix);
}

Outcome freeze_contract() {
  const std::string corpus = small_corpus("c6_corpus", 61, 6, 1.0, 0.34);
  const std::string pre =
      isg::run_stage(toy_stage("pre", isg::Regime::kSpeechOnly, 2, corpus), "",
                     dir("c6_pre").string())
          .checkpoint;
  const auto st = isg::run_stage(toy_stage("st", isg::Regime::kIsgSt, 1, corpus), pre,
                                 dir("c6_st").string());
  const auto ct = isg::run_stage(toy_stage("ct", isg::Regime::kIsgCt, 1, corpus), pre,
                                 dir("c6_ct").string());
  const auto before = params_of(pre, "speech.");
  const bool st_same = params_of(st.checkpoint, "speech.") == before;
  const bool ct_moved = params_of(ct.checkpoint, "speech.") != before;
  const bool st_trained = params_of(st.checkpoint, "gesture.") != params_of(pre, "gesture.");
  return {st_same && ct_moved && st_trained,
          std::string("isg_st speech core ") + (st_same ? "byte-identical" : "CHANGED") +
              ", isg_ct speech core " + (ct_moved ? "changed" : "UNCHANGED")};
}

isg::SpeechCoreConfig tiny_speech() {
  isg::SpeechCoreConfig c;
  c.n_symbols = 6;
  c.n_mels = 3;
  c.embedding_dim = 4;
  c.encoder_n_convs = 1;
  c.encoder_kernel = 3;
  c.encoder_dim = 4;
  c.attention_rnn_dim = 4;
  c.attention_dim = 3;
  c.location_filters = 2;
  c.location_kernel = 3;
  c.decoder_rnn_dim = 4;
  c.prenet_dims = {4};
  c.postnet_n_convs = 2;
  c.postnet_dim = 3;
  c.postnet_kernel = 3;
  c.max_decoder_steps = 12;
  return c;
}

Outcome gradient_checks() {
  std::string detail;
  bool ok = true;
  {
    isg::nn::ParameterStore store;
    isg::nn::Rng rng(71);
    isg::SpeechCore core(store, "speech", tiny_speech(), rng);
    const std::vector<int> ids = {1, 4, 2, 5};
    const Matrix target = Matrix::Random(6, 3);
    const Matrix stops = isg::stop_targets(6, 1);
    auto loss = [&] {
      isg::nn::Rng r(11);
      return isg::tts_loss(core.teacher_forced(ids, target, true, r), target, stops);
    };
    const auto res = isg::testing::gradcheck(loss, store.all(), 1e-5, 1000);
    ok &= store.count() <= 1000 && res.checked == store.count() && res.max_rel_error < 1e-4;
    detail += "tts_loss " + std::to_string(store.count()) + " params rel err " +
              fmt(res.max_rel_error);
    isg::ad::Tape::current().clear();
  }
  {
    isg::GestureDecoderConfig c;
    c.n_layers = 2;
    c.width = 5;
    c.pose_dim = 3;
    c.input_dim = 4;
    isg::nn::ParameterStore store;
    isg::nn::Rng rng(72);
    isg::GestureDecoder dec(store, "gesture", c, rng);
    const Matrix in = Matrix::Random(7, 4);
    const Matrix target = Matrix::Random(7, 3);
    const Eigen::RowVectorXd init = Eigen::RowVectorXd::Constant(3, 0.1);
    auto loss = [&] {
      isg::nn::Rng r(5);
      return isg::gesture_loss(dec.scheduled(isg::ad::constant(in), init, target, 0.5, r).poses,
                               target);
    };
    const auto res = isg::testing::gradcheck(loss, store.all(), 1e-5, 1000);
    ok &= store.count() <= 1000 && res.checked == store.count() && res.max_rel_error < 1e-4;
    detail += "; gesture_loss " + std::to_string(store.count()) + " params rel err " +
              fmt(res.max_rel_error);
    isg::ad::Tape::current().clear();
  }
  return {ok, detail};
}

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

// Speech validation MSE of a checkpoint on the target corpus, averaged over
// a few dropout seeds shared by every variant.
double speech_val_mse(const std::string& ckpt, const std::string& corpus) {
  auto bundle = isg::ModelBundle::load(ckpt);
  isg::CorpusConfig cc = bundle->corpus_config();
  cc.splits = {"val"};
  const auto loaded = isg::load_paired_corpus(isg::read_manifest(corpus), cc);
  double sum = 0;
  const int n_seeds = 4;
  for (int s = 0; s < n_seeds; ++s) {
    sum += isg::evaluate(*bundle, isg::Regime::kSpeechOnly, loaded.utterances, 9000 + s)
               .at("speech_mse")
               .get<double>();
  }
  return sum / n_seeds;
}

Outcome transfer_learning() {
  const int pretrain_iters = 600, budget = 300, isg_iters = 100;
  const std::string pre_corpus = small_corpus("c8_pre_corpus", 801, 80, 1.3, 0.05);
  const std::string target = small_corpus("c8_target_corpus", 802, 30, 1.0, 0.3);
  isg::StageSpec pre = toy_stage("pretrain", isg::Regime::kSpeechOnly, pretrain_iters, pre_corpus);
  pre.eval_interval = pretrain_iters;
  const std::string pretrained = isg::run_stage(pre, "", dir("c8_pretrain").string()).checkpoint;

  isg::optim::AdamConfig opt;
  opt.lr = 2e-3;
  std::vector<double> a, b, c;
  std::string per_seed;
  for (std::uint64_t seed : {1, 2, 3}) {
    const isg::TransferComparison cmp =
        isg::build_transfer_comparison(pretrained, target, budget, isg_iters, seed, toy_model(), opt);
    if (!isg::validate_comparison({cmp.scratch, cmp.speech_only, cmp.isg_finetune}, target).empty()) {
      return {false, "variants spend different budgets"};
    }
    const std::string tag = "c8_seed" + std::to_string(seed);
    auto final_of = [&](const isg::TrainPlan& p) {
      isg::run_plan(p, dir(tag + "_" + p.name).string());
      return speech_val_mse((g_work / (tag + "_" + p.name) / "final.isgc").string(), target);
    };
    a.push_back(final_of(cmp.scratch));
    b.push_back(final_of(cmp.speech_only));
    c.push_back(final_of(cmp.isg_finetune));
    per_seed += " [" + fmt(a.back()) + " " + fmt(b.back()) + " " + fmt(c.back()) + "]";
  }
  const double ma = median3(a), mb = median3(b), mc = median3(c);
  return {mc <= mb && mb < ma, "median val MSE scratch " + fmt(ma) + ", speech-only " + fmt(mb) +
                                   ", isg fine-tune " + fmt(mc) + "; per seed (a b c)" + per_seed};
}

Outcome parameter_accounting() {
  bool ok = true;
  std::string detail;
  for (auto [in, out, bias] : std::vector<std::tuple<int, int, bool>>{
           {4, 3, true}, {2, 5, false}, {1, 1, true}, {80, 512, true}}) {
    isg::nn::ParameterStore store;
    isg::nn::Rng rng(1);
    isg::nn::Linear layer(store, "l", in, out, rng, bias);
    ok &= isg::bench::count_parameters(store) == in * out + (bias ? out : 0);
  }
  isg::ModelBundle speech(isg::ModelKind::kSpeechOnly, {{"preset", "reference"}}, 0);
  const double n = static_cast<double>(speech.parameter_count());
  const double rel = std::abs(n - 28.19e6) / 28.19e6;
  ok &= rel < 0.05;
  detail = "speech core " + isg::bench::format_millions(speech.parameter_count()) + " (" +
           fmt(100 * rel) + "% off 28.19M)";

  isg::ModelBundle pipe(isg::ModelKind::kPipeline, {{"preset", "reference"}}, 0);
  isg::nn::ParameterStore gesture_store;
  isg::nn::Rng rng(0);
  const json resolved = isg::ModelBundle::resolve_config(isg::ModelKind::kPipeline,
                                                         {{"preset", "reference"}});
  isg::AudioGestureFlow standalone(gesture_store, "audio_gesture",
                                   resolved.at("audio_gesture").get<isg::AudioGestureConfig>(), rng);
  const std::int64_t sum = speech.parameter_count() + gesture_store.count();
  ok &= pipe.parameter_count() == sum;
  detail += "; pipeline " + std::to_string(pipe.parameter_count()) + " = " +
            std::to_string(speech.parameter_count()) + " + " + std::to_string(gesture_store.count());
  return {ok, detail};
}

Outcome timing_mechanics() {
  const isg::bench::Summary s = isg::bench::summarize({1.0, 2.0, 3.0});
  bool ok = std::abs(s.mean - 2.0) < 1e-12 && std::abs(s.ci95 - 2.484) < 1e-3;
  // An untrained stop gate may end decoding at once; run to the step cap.
  isg::ModelBundle m(isg::ModelKind::kPipeline,
                     {{"preset", "toy"}, {"speech", {{"stop_threshold", 1.1}, {"max_decoder_steps", 120}}}},
                     3);
  m.set_mean_pose(Eigen::RowVectorXd::Zero(30));
  const auto t = isg::bench::time_synthesis(
      "pipeline", m, {m.encode_text("ab ba"), m.encode_text("kin dol mas")}, 3, 1);
  ok &= t.all_sequential && t.total.n == 6;
  return {ok, "half-width " + fmt(s.ci95) + ", " + std::to_string(t.total.n) +
                  " pipeline runs, sequential " + (t.all_sequential ? "on all" : "VIOLATED")};
}

Outcome smoothing_oracle() {
  // Impulse in the interior; edge frames renormalize and are not the kernel.
  isg::MotionSequence impulse;
  impulse.fps = 20;
  impulse.values = Matrix::Zero(11, 1);
  impulse.values(5, 0) = 1.0;
  const Matrix k = isg::gaussian_smooth(impulse, 3, 1.0).values;
  const std::vector<double> want = {0.274, 0.452, 0.274};
  double err = std::abs(k.sum() - 1.0);
  for (int i = 0; i < 3; ++i) err = std::max(err, std::abs(k(4 + i, 0) - want[i]));
  std::mt19937_64 gen(1111);
  int violations = 0;
  for (int n = 0; n < 100; ++n) {
    isg::MotionSequence m;
    m.fps = 20;
    m.values = random_matrix(4 + n % 40, 1 + n % 9, gen);
    const double before = isg::bench::motion_stats(m).variation;
    const double after = isg::bench::motion_stats(isg::gaussian_smooth(m, 3, 1.0)).variation;
    violations += after > before + 1e-12;
  }
  return {err < 1e-3 && violations == 0,
          "kernel err " + fmt(err) + ", " + std::to_string(violations) + "/100 variation increases"};
}

Outcome gan_arithmetic() {
  const auto l = isg::gan_losses(isg::ad::constant_scalar(0.5), isg::ad::constant_scalar(0.5), 0.05);
  const double d_err = std::abs(l.d_loss.item() - 2 * std::log(2.0));
  isg::ad::Tape::current().clear();

  const std::string corpus = small_corpus("c12_corpus", 121, 6, 1.0, 0.34);
  const std::string pre =
      isg::run_stage(toy_stage("pre", isg::Regime::kSpeechOnly, 2, corpus), "",
                     dir("c12_pre").string())
          .checkpoint;
  isg::StageSpec with_gan = toy_stage("st", isg::Regime::kIsgSt, 1, corpus);
  with_gan.model_config["discriminator"] = {{"gan_weight", 0.0}};
  isg::StageSpec without = with_gan;
  without.adversarial = false;
  const auto a = isg::run_stage(with_gan, pre, dir("c12_gan0").string());
  const auto b = isg::run_stage(without, pre, dir("c12_mse").string());
  const bool same = params_of(a.checkpoint, "gesture.") == params_of(b.checkpoint, "gesture.") &&
                    params_of(a.checkpoint, "speech.") == params_of(b.checkpoint, "speech.");
  const bool moved = params_of(a.checkpoint, "gesture.") != params_of(pre, "gesture.");
  return {d_err < 1e-6 && same && moved,
          "|d_loss - 2 ln 2| " + fmt(d_err) + ", gan_weight 0 vs MSE-only " +
              (same ? "identical" : "DIFFERENT")};
}

#ifndef ISG_CLI
#define ISG_CLI "isg"
#endif
#ifndef ISG_SOURCE_DIR
#define ISG_SOURCE_DIR "."
#endif

int run_cli(const fs::path& cwd, const std::string& args, const fs::path& log) {
  const std::string cmd = "cd '" + cwd.string() + "' && ISG_DATA_DIR='" + cwd.string() + "' '" +
                          ISG_CLI "' " + args + " >> '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Finite values and joint rotation angles within [0, pi].
bool motion_ok(const fs::path& csv, std::string* why) {
  const isg::MotionSequence m = isg::read_motion_csv(csv.string(), 20);
  if (m.values.rows() == 0 || m.values.cols() % 3) {
    *why = csv.filename().string() + ": empty or misshaped";
    return false;
  }
  if (!m.values.allFinite()) {
    *why = csv.filename().string() + ": non-finite value";
    return false;
  }
  for (Eigen::Index t = 0; t < m.values.rows(); ++t) {
    for (Eigen::Index j = 0; j < m.values.cols(); j += 3) {
      if (m.values.row(t).segment(j, 3).norm() > M_PI + 1e-9) {
        *why = csv.filename().string() + ": expmap magnitude above pi";
        return false;
      }
    }
  }
  return true;
}

Outcome end_to_end_smoke() {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path w = dir("c13_smoke");
  const fs::path log = w / "log.txt";
  std::vector<std::string> failed;
  auto step = [&](const std::string& args) {
    const int code = run_cli(w, args, log);
    if (code != 0) failed.push_back(args.substr(0, args.find(' ')) + " (" + std::to_string(code) + ")");
    return code == 0;
  };
  if (!step("synthgen --out corpus --n 50 --seed 13") ||
      !step("prepare --manifest corpus/manifest.jsonl --out prepared")) {
    return {false, "failed: " + failed.front()};
  }
  const fs::path plans = fs::path(ISG_SOURCE_DIR) / "tools" / "plans";
  struct Model {
    const char* plan;
    const char* synth_name;
  };
  const std::vector<Model> models = {{"toy_speech_only", "speech-only"},
                                     {"toy_tacotron2_isg_ct", "tacotron2-isg-ct"},
                                     {"toy_tacotron2_isg_st", "tacotron2-isg-st"},
                                     {"toy_glowtts_isg", "glowtts-isg"},
                                     {"toy_pipeline", "pipeline"}};
  for (const Model& m : models) {
    step("train --plan '" + (plans / (std::string(m.plan) + ".json")).string() + "' --out runs/" +
         m.plan);
  }

  // Held-out texts: the first three test-split utterances of the raw corpus.
  std::vector<std::string> texts;
  const isg::CorpusManifest raw = isg::read_manifest((w / "corpus" / "manifest.jsonl").string());
  for (const isg::ManifestEntry* e : raw.split("test")) {
    if (texts.size() < 3) texts.push_back(e->text);
  }
  if (texts.size() < 3) return {false, "corpus has fewer than 3 test utterances"};
  std::ofstream(w / "held_out.txt") << texts[0] << "\n" << texts[1] << "\n" << texts[2] << "\n";

  std::string invalid;
  int checked = 0;
  for (const Model& m : models) {
    const std::string out = std::string("synth/") + m.synth_name;
    if (!step(std::string("synth --model ") + m.synth_name + " --checkpoint runs/" + m.plan +
              "/final.isgc --text-file held_out.txt --seed 3 --out " + out)) {
      continue;
    }
    if (std::string(m.synth_name) == "speech-only") continue;
    for (int i = 0; i < 3; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "utt_%03d_motion.csv", i);
      std::string why;
      if (!fs::is_regular_file(w / out / name)) {
        invalid = out + "/" + name + " missing";
      } else if (!motion_ok(w / out / name, &why)) {
        invalid = out + "/" + why;
      }
      ++checked;
    }
  }
  step("bench params --preset reference --out bench/params");
  step("bench timing --checkpoint ct=runs/toy_tacotron2_isg_ct/final.isgc "
       "--checkpoint glow=runs/toy_glowtts_isg/final.isgc "
       "--checkpoint pipeline=runs/toy_pipeline/final.isgc --text-file held_out.txt "
       "--repeats 2 --out bench/timing");
  step("bench plot --motion synth/tacotron2-isg-ct/utt_000_motion.csv "
       "--motion synth/pipeline/utt_000_motion.csv --out bench/plot");
  step("bench stats --motion synth/tacotron2-isg-ct/utt_000_motion.csv --out bench/stats");

  const double minutes =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
  std::string detail = std::to_string(checked) + " motions checked, " + fmt(minutes) + " min";
  if (!failed.empty()) detail += "; failed: " + failed.front() + " (see " + log.string() + ")";
  if (!invalid.empty()) detail += "; invalid motion " + invalid;
  return {failed.empty() && invalid.empty() && checked == 12 && minutes < 60, detail};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  bool keep = false;
  g_work = fs::temp_directory_path() / "isg_acceptance";
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    } else if (a == "--work" && i + 1 < argc) {
      g_work = argv[++i];
    } else if (a == "--keep") {
      keep = true;
    } else {
      std::fprintf(stderr, "usage: acceptance [--only N[,N...]] [--work DIR] [--keep]\n");
      return 2;
    }
  }
  fs::create_directories(g_work);

  const std::vector<Criterion> criteria = {
      {1, "flow invertibility", flow_invertibility},
      {2, "log-det exactness", logdet_exactness},
      {3, "alignment oracle", alignment_oracle},
      {4, "schedule exactness", schedule_exactness},
      {5, "frame matching", frame_matching},
      {6, "freeze contract", freeze_contract},
      {7, "gradient checks", gradient_checks},
      {8, "transfer-learning direction", transfer_learning},
      {9, "parameter accounting", parameter_accounting},
      {10, "timing mechanics", timing_mechanics},
      {11, "smoothing oracle", smoothing_oracle},
      {12, "GAN arithmetic", gan_arithmetic},
      {13, "end-to-end smoke", end_to_end_smoke},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    isg::ad::Tape::current().clear();
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !o.pass;
    std::printf("%s %2d %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), s);
    std::fflush(stdout);
  }
  if (!keep) fs::remove_all(g_work);
  return failures == 0 ? 0 : 1;
}
