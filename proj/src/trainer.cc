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

#include "isg/trainer.h"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "isg/checkpoint.h"

namespace isg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string>& regime_names() {
  static const std::vector<std::string> names = {"speech_only", "isg_ct",  "isg_st",
                                                 "isg_scratch", "flow",    "pipeline_gesture"};
  return names;
}

bool is_isg(Regime r) {
  return r == Regime::kIsgCt || r == Regime::kIsgSt || r == Regime::kIsgScratch;
}

bool trains_speech(Regime r) { return r == Regime::kSpeechOnly || is_isg(r); }

std::string join(const std::vector<std::string>& v, const std::string& sep) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : sep) + s;
  return out;
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& what) {
  if (!j.is_object()) throw ValidationError(what + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (allowed.count(key) == 0) throw ValidationError("unknown key '" + key + "' in " + what);
  }
}

template <typename T>
T get_field(const json& j, const char* key, const T& fallback, const std::string& what) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError("bad value for '" + std::string(key) + "' in " + what);
  }
}

std::string prefix_of(const std::string& p) {
  return !p.empty() && p.back() == '.' ? p : p + ".";
}

}  // namespace

std::string to_string(Regime r) { return regime_names()[static_cast<std::size_t>(r)]; }

Regime regime_from_string(const std::string& s) {
  const auto& names = regime_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == s) return static_cast<Regime>(i);
  }
  throw ValidationError("unknown regime '" + s + "'; valid regimes: " + join(names, ", "));
}

void to_json(json& j, const StageSpec& s) {
  const auto& o = s.optimizer;
  j = {{"name", s.name},
       {"model", s.model},
       {"corpus", s.corpus},
       {"regime", to_string(s.regime)},
       {"iterations", s.iterations},
       {"freeze_set", s.freeze_set},
       {"seed", s.seed},
       {"optimizer",
        {{"lr", o.lr},
         {"beta1", o.beta1},
         {"beta2", o.beta2},
         {"eps", o.eps},
         {"weight_decay", o.weight_decay},
         {"clip_norm", o.clip_norm}}},
       {"batch_size", s.batch_size},
       {"eval_interval", s.eval_interval},
       {"checkpoint_interval", s.checkpoint_interval},
       {"keep_last", s.keep_last},
       {"max_eval_utterances", s.max_eval_utterances},
       {"init_checkpoint", s.init_checkpoint},
       {"model_config", s.model_config},
       {"schedule", s.schedule},
       {"adversarial", s.adversarial}};
}

void from_json(const json& j, StageSpec& s) {
  const std::string what = "stage '" + j.value("name", std::string()) + "'";
  check_keys(j,
             {"name", "model", "corpus", "regime", "iterations", "freeze_set", "seed", "optimizer",
              "batch_size", "eval_interval", "checkpoint_interval", "keep_last",
              "max_eval_utterances", "init_checkpoint", "model_config", "schedule", "adversarial"},
             what);
  const StageSpec d;
  s.regime = regime_from_string(get_field<std::string>(j, "regime", "", what));
  s.name = get_field<std::string>(j, "name", to_string(s.regime), what);
  s.model = get_field(j, "model", d.model, what);
  s.corpus = get_field(j, "corpus", d.corpus, what);
  s.iterations = get_field(j, "iterations", d.iterations, what);
  s.freeze_set = get_field(j, "freeze_set", d.freeze_set, what);
  s.seed = get_field(j, "seed", d.seed, what);
  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    const std::string ow = "optimizer of " + what;
    check_keys(o, {"lr", "beta1", "beta2", "eps", "weight_decay", "clip_norm"}, ow);
    s.optimizer.lr = get_field(o, "lr", d.optimizer.lr, ow);
    s.optimizer.beta1 = get_field(o, "beta1", d.optimizer.beta1, ow);
    s.optimizer.beta2 = get_field(o, "beta2", d.optimizer.beta2, ow);
    s.optimizer.eps = get_field(o, "eps", d.optimizer.eps, ow);
    s.optimizer.weight_decay = get_field(o, "weight_decay", d.optimizer.weight_decay, ow);
    s.optimizer.clip_norm = get_field(o, "clip_norm", d.optimizer.clip_norm, ow);
  }
  s.batch_size = get_field(j, "batch_size", d.batch_size, what);
  s.eval_interval = get_field(j, "eval_interval", d.eval_interval, what);
  s.checkpoint_interval = get_field(j, "checkpoint_interval", d.checkpoint_interval, what);
  s.keep_last = get_field(j, "keep_last", d.keep_last, what);
  s.max_eval_utterances = get_field(j, "max_eval_utterances", d.max_eval_utterances, what);
  s.init_checkpoint = get_field(j, "init_checkpoint", d.init_checkpoint, what);
  s.model_config = get_field(j, "model_config", json::object(), what);
  if (j.contains("schedule")) {
    check_keys(j.at("schedule"), {"p_start", "hold_epochs", "decay_epochs", "p_end"},
               "schedule of " + what);
    s.schedule = j.at("schedule").get<SamplingSchedule>();
  }
  s.adversarial = get_field(j, "adversarial", d.adversarial, what);
}

void to_json(json& j, const TrainPlan& p) { j = {{"name", p.name}, {"stages", p.stages}}; }

void from_json(const json& j, TrainPlan& p) {
  check_keys(j, {"name", "stages"}, "plan");
  p.name = get_field<std::string>(j, "name", "plan", "plan");
  p.stages.clear();
  if (j.contains("stages")) {
    if (!j.at("stages").is_array()) throw ValidationError("plan 'stages' must be a list");
    for (const json& s : j.at("stages")) p.stages.push_back(s.get<StageSpec>());
  }
}

TrainPlan read_plan(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read plan file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("plan file " + path + " is not valid JSON: " + e.what());
  }
  return j.get<TrainPlan>();
}

PlanError::PlanError(std::vector<std::string> errors)
    : ValidationError("invalid plan: " + join(errors, "; ")), errors_(std::move(errors)) {}

std::vector<std::string> validate_plan(const TrainPlan& plan, bool check_files) {
  std::vector<std::string> errors;
  if (plan.stages.empty()) {
    errors.push_back("no stages");
    return errors;
  }
  std::set<std::string> names;
  bool speech_trained = false;
  for (std::size_t i = 0; i < plan.stages.size(); ++i) {
    const StageSpec& s = plan.stages[i];
    const std::string at = "stage " + std::to_string(i) + " '" + s.name + "' (" +
                           to_string(s.regime) + ")";
    auto err = [&](const std::string& m) { errors.push_back(at + ": " + m); };
    if (!names.insert(s.name).second) err("duplicate stage name");
    if (s.iterations <= 0) err("iterations must be > 0");
    if (s.batch_size < 1 || s.eval_interval < 1 || s.checkpoint_interval < 1 || s.keep_last < 1 ||
        s.max_eval_utterances < 1) {
      err("batch_size, eval_interval, checkpoint_interval, keep_last and max_eval_utterances "
          "must be >= 1");
    }
    if (!(s.optimizer.lr > 0)) err("optimizer lr must be > 0");
    try {
      s.schedule.validate();
    } catch (const ValidationError& e) {
      err(e.what());
    }

    bool model_ok = true;
    ModelKind kind = ModelKind::kTacotronIsg;
    try {
      kind = model_kind_from_string(s.model);
    } catch (const ValidationError& e) {
      err(e.what());
      model_ok = false;
    }
    if (model_ok) {
      bool fits = false;
      switch (s.regime) {
        case Regime::kSpeechOnly:
          fits = kind != ModelKind::kGlowIsg;
          break;
        case Regime::kIsgCt:
        case Regime::kIsgSt:
        case Regime::kIsgScratch:
          fits = kind == ModelKind::kTacotronIsg;
          break;
        case Regime::kFlow:
          fits = kind == ModelKind::kGlowIsg;
          break;
        case Regime::kPipelineGesture:
          fits = kind == ModelKind::kPipeline;
          break;
      }
      if (!fits) err("regime does not apply to model '" + s.model + "'");
      try {
        ModelBundle::resolve_config(kind, s.model_config);
      } catch (const std::exception& e) {
        err(std::string("model_config: ") + e.what());
      }
    }

    const bool st = s.regime == Regime::kIsgSt;
    if (st && s.freeze_set.empty()) err("isg_st needs a nonempty freeze_set");
    if (!st && !s.freeze_set.empty()) err("freeze_set is only allowed for isg_st");
    if (st && !s.freeze_set.empty() &&
        std::find(s.freeze_set.begin(), s.freeze_set.end(), "speech") == s.freeze_set.end() &&
        std::find(s.freeze_set.begin(), s.freeze_set.end(), "speech.") == s.freeze_set.end()) {
      err("isg_st must freeze the speech core (freeze_set needs \"speech\")");
    }

    if (s.corpus.empty()) {
      err("corpus is not set");
    } else if (check_files && !fs::is_regular_file(s.corpus)) {
      err("corpus manifest not found: " + s.corpus);
    }
    if (!s.init_checkpoint.empty()) {
      if (s.regime == Regime::kIsgScratch) err("isg_scratch starts from random init; remove init_checkpoint");
      if (check_files && !fs::is_regular_file(s.init_checkpoint)) {
        err("init_checkpoint not found: " + s.init_checkpoint);
      }
      speech_trained = true;
    }
    if ((s.regime == Regime::kIsgCt || st) && !speech_trained) {
      err("needs a trained speech core; add an earlier speech_only stage or set init_checkpoint");
    }
    if (trains_speech(s.regime)) speech_trained = true;
  }
  return errors;
}

// ---------------------------------------------------------------------------
// Stage execution.

namespace {

struct Example {
  const PairedUtterance* utt;
  std::vector<int> ids;
};

std::vector<std::string> section_names() {
  return {"preset", "mel", "speech", "gesture", "discriminator", "glow", "audio_gesture"};
}

double mse_value(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.size() == 0) {
    throw ValidationError("mse: shape mismatch");
  }
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

// Sum of named loss terms over an interval.
class Meter {
 public:
  void add(const std::string& k, double v) {
    sums_[k] += v;
    counts_[k] += 1;
  }
  json mean_and_reset() {
    json j = json::object();
    for (const auto& [k, v] : sums_) j[k] = v / counts_[k];
    sums_.clear();
    counts_.clear();
    return j;
  }

 private:
  std::map<std::string, double> sums_;
  std::map<std::string, int> counts_;
};

ad::Var mean_of(const std::vector<ad::Var>& terms) {
  ad::Var total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = ad::add(total, terms[i]);
  return ad::scale(total, 1.0 / static_cast<double>(terms.size()));
}

std::vector<ad::Parameter*> params_for(ModelBundle& b, Regime r) {
  std::vector<std::string> prefixes;
  switch (r) {
    case Regime::kSpeechOnly:
      prefixes = {"speech."};
      break;
    case Regime::kIsgCt:
    case Regime::kIsgScratch:
      prefixes = {"speech.", "gesture."};
      break;
    case Regime::kIsgSt:
      prefixes = {"gesture."};
      break;
    case Regime::kFlow:
      prefixes = {"glow."};
      break;
    case Regime::kPipelineGesture:
      prefixes = {"audio_gesture."};
      break;
  }
  std::vector<ad::Parameter*> out;
  for (const auto& p : prefixes) {
    for (ad::Parameter* q : b.store().with_prefix(p)) {
      if (!q->frozen) out.push_back(q);
    }
  }
  return out;
}

Eigen::RowVectorXd init_pose(const ModelBundle& b) {
  const int d = b.gesture()->config().pose_dim;
  return b.gesture()->initial_pose(b.has_mean_pose() ? b.mean_pose()
                                                     : Eigen::RowVectorXd::Zero(d));
}

}  // namespace

json evaluate(ModelBundle& bundle, Regime regime, const std::vector<PairedUtterance>& utterances,
              std::uint64_t seed) {
  ad::NoGradGuard no_grad;
  nn::Rng rng(seed);
  json out = json::object();
  if (utterances.empty()) return out;
  double speech = 0, gesture = 0, nll = 0, dur = 0;
  const double n = static_cast<double>(utterances.size());
  for (const PairedUtterance& u : utterances) {
    std::vector<int> ids = bundle.vocabulary().encode(u.text);
    if (trains_speech(regime)) {
      const SpeechCore& s = *bundle.speech();
      const SpeechForward f = s.teacher_forced(ids, u.mel.values, false, rng);
      speech += mse_value(f.mel_post.value(),
                          pad_to_multiple(u.mel.values, s.config().n_frames_per_step));
      if (is_isg(regime)) {
        const ad::Var inputs = bundle.gesture_inputs(f.attn_states, f.mel_post);
        const GestureForward g =
            bundle.gesture()->scheduled(inputs, init_pose(bundle), u.motion.values, 1.0, rng);
        gesture += mse_value(g.poses.value(), u.motion.values);
      }
    } else if (regime == Regime::kFlow) {
      const GlowIsg& g = *bundle.glow();
      ids = g.prepare_ids(ids);
      const Matrix joint = g.joint_frames(u.mel.values, u.motion.values, seed);
      const GlowLoss l = g.loss(ids, joint, false, rng);
      nll += l.nll.item();
      dur += l.duration.item();
    } else {
      nll += bundle.audio_gesture()->nll_value(u.mel.values, u.motion.values);
    }
    ad::Tape::current().clear();
  }
  if (trains_speech(regime)) out["speech_mse"] = speech / n;
  if (is_isg(regime)) out["gesture_mse"] = gesture / n;
  if (regime == Regime::kFlow) {
    out["nll"] = nll / n;
    out["duration"] = dur / n;
  }
  if (regime == Regime::kPipelineGesture) out["nll"] = nll / n;
  return out;
}

StageResult run_stage(const StageSpec& stage, const std::string& checkpoint_in,
                      const std::string& out_dir) {
  const auto t_start = std::chrono::steady_clock::now();
  fs::create_directories(out_dir);
  const ModelKind kind = model_kind_from_string(stage.model);
  const Regime regime = stage.regime;

  json cfg = stage.model_config;
  const bool has_in = !checkpoint_in.empty() && regime != Regime::kIsgScratch;
  Checkpoint ckpt_in;
  if (has_in) {
    ckpt_in = load_checkpoint(checkpoint_in);
    for (const std::string& sec : section_names()) {
      if (!ckpt_in.config.contains(sec)) continue;
      json merged = ckpt_in.config.at(sec);
      if (stage.model_config.contains(sec)) merged.merge_patch(stage.model_config.at(sec));
      cfg[sec] = merged;
    }
  }
  if ((regime == Regime::kIsgCt || regime == Regime::kIsgSt) && !has_in) {
    throw ValidationError("stage '" + stage.name + "': " + to_string(regime) +
                          " needs a speech checkpoint");
  }
  ModelBundle bundle(kind, cfg, nn::mix_seed(stage.seed, 0));
  if (has_in) bundle.restore_from(ckpt_in);

  // Data.
  const CorpusManifest manifest = read_manifest(stage.corpus);
  const LoadResult loaded = load_paired_corpus(manifest, bundle.corpus_config());
  std::vector<Example> train;
  std::vector<PairedUtterance> val;
  for (const PairedUtterance& u : loaded.utterances) {
    std::vector<int> ids = bundle.vocabulary().encode(u.text);
    if (ids.empty()) continue;
    if (kind == ModelKind::kGlowIsg) {
      ids = bundle.glow()->prepare_ids(ids);
      const Eigen::Index frames = u.mel.frames() - u.mel.frames() % 2;
      if (frames < static_cast<Eigen::Index>(ids.size())) continue;
    }
    if (regime == Regime::kPipelineGesture &&
        u.mel.frames() < bundle.audio_gesture()->config().min_mel_frames()) {
      continue;
    }
    if (u.split == "train") {
      train.push_back({&u, std::move(ids)});
    } else if (u.split == "val" &&
               static_cast<int>(val.size()) < stage.max_eval_utterances) {
      val.push_back(u);
    }
  }
  if (train.empty()) {
    throw ValidationError("stage '" + stage.name + "': no usable training utterances in " +
                          stage.corpus);
  }
  std::string eval_split = "val";
  if (val.empty()) {
    eval_split = "train";
    for (std::size_t i = 0; i < train.size() && static_cast<int>(i) < stage.max_eval_utterances; ++i) {
      val.push_back(*train[i].utt);
    }
  }

  // Statistics the gesture models need.
  const bool needs_poses = is_isg(regime) || regime == Regime::kPipelineGesture;
  if (bundle.joint_names().empty() && !train.front().utt->motion.joint_names.empty()) {
    bundle.set_joint_names(train.front().utt->motion.joint_names);
  }
  if (needs_poses && !bundle.has_mean_pose()) {
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(train.front().utt->motion.dims());
    double rows = 0;
    for (const Example& e : train) {
      sum += e.utt->motion.values.colwise().sum();
      rows += static_cast<double>(e.utt->motion.frames());
    }
    bundle.set_mean_pose(sum / rows);
  }
  if (regime == Regime::kPipelineGesture && bundle.audio_gesture()->config().pose_mean.empty()) {
    std::vector<const Matrix*> mels, motions;
    for (const Example& e : train) {
      mels.push_back(&e.utt->mel.values);
      motions.push_back(&e.utt->motion.values);
    }
    bundle.audio_gesture()->fit_normalization(mels, motions);
    bundle.audio_gesture()->initialize(train.front().utt->mel.values,
                                       train.front().utt->motion.values);
  }
  if (regime == Regime::kFlow && !has_in) {
    const PairedUtterance& u = *train.front().utt;
    bundle.glow()->decoder().initialize(
        bundle.glow()->joint_frames(u.mel.values, u.motion.values, stage.seed));
  }

  // Optimizers and freezing.
  for (const std::string& p : stage.freeze_set) bundle.store().set_frozen(prefix_of(p), true);
  optim::Adam opt(params_for(bundle, regime), stage.optimizer);
  std::unique_ptr<optim::Adam> disc_opt;
  const bool adversarial = regime == Regime::kIsgSt && stage.adversarial;
  if (adversarial) {
    disc_opt = std::make_unique<optim::Adam>(bundle.store().with_prefix("disc."), stage.optimizer);
  }

  nn::Rng order_rng(nn::mix_seed(stage.seed, 1));
  nn::Rng train_rng(nn::mix_seed(stage.seed, 2));
  const std::uint64_t eval_seed = nn::mix_seed(stage.seed, 3);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  int epoch = -1;
  auto next_example = [&]() -> const Example& {
    if (cursor == order.size()) {
      std::shuffle(order.begin(), order.end(), order_rng);
      cursor = 0;
      ++epoch;
    }
    return train[order[cursor++]];
  };

  StageResult result;
  result.metrics_path = (fs::path(out_dir) / "metrics.jsonl").string();
  std::ofstream metrics_file(result.metrics_path, std::ios::trunc);
  Meter meter;
  auto log = [&](int it) {
    json line = {{"stage", stage.name},
                 {"regime", to_string(regime)},
                 {"iteration", it},
                 {"epoch", std::max(epoch, 0)},
                 {"train", meter.mean_and_reset()},
                 {"val", evaluate(bundle, regime, val, eval_seed)},
                 {"eval_split", eval_split}};
    line["wall_time"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    metrics_file << line.dump() << '\n';
    metrics_file.flush();
    result.metrics.push_back(line);
  };
  std::deque<std::string> kept;
  auto save = [&](int it) {
    char name[32];
    std::snprintf(name, sizeof(name), "ckpt-%06d.isgc", it);
    const std::string path = (fs::path(out_dir) / name).string();
    bundle.save(path, it);
    kept.push_back(path);
    while (static_cast<int>(kept.size()) > stage.keep_last) {
      fs::remove(kept.front());
      kept.pop_front();
    }
    result.checkpoint = path;
  };

  {
    json snap = {{"stage", stage}, {"checkpoint_in", checkpoint_in}, {"model", bundle.config()}};
    std::ofstream(fs::path(out_dir) / "stage.json") << snap.dump(2) << '\n';
  }
  log(0);

  const double gan_weight =
      bundle.discriminator() ? bundle.discriminator()->config().gan_weight : 0.0;
  const bool minimax = bundle.discriminator() && bundle.discriminator()->config().minimax;
  for (int it = 1; it <= stage.iterations; ++it) {
    ad::Tape::current().clear();
    bundle.store().zero_grad();
    std::vector<ad::Var> terms;
    std::vector<std::pair<const Example*, Matrix>> generated;
    for (int b = 0; b < stage.batch_size; ++b) {
      const Example& ex = next_example();
      const PairedUtterance& u = *ex.utt;
      switch (regime) {
        case Regime::kSpeechOnly:
        case Regime::kIsgCt:
        case Regime::kIsgScratch:
        case Regime::kIsgSt: {
          const SpeechCore& s = *bundle.speech();
          const bool speech_training = regime != Regime::kIsgSt;
          const SpeechForward f = s.teacher_forced(ex.ids, u.mel.values, speech_training, train_rng);
          ad::Var total;
          if (speech_training) {
            const ad::Var tts = tts_loss(f, u.mel.values,
                                         stop_targets(u.mel.frames(), s.config().n_frames_per_step));
            meter.add("tts", tts.item());
            meter.add("speech_mse",
                      mse_value(f.mel_post.value(),
                                pad_to_multiple(u.mel.values, s.config().n_frames_per_step)));
            total = tts;
          }
          if (is_isg(regime)) {
            ad::Var inputs = bundle.gesture_inputs(f.attn_states, f.mel_post);
            if (!speech_training) inputs = ad::stop_gradient(inputs);
            const double p = teacher_forcing_probability(std::max(epoch, 0), stage.schedule);
            const GestureForward g = bundle.gesture()->scheduled(inputs, init_pose(bundle),
                                                                 u.motion.values, p, train_rng);
            const ad::Var gl = gesture_loss(g.poses, u.motion.values);
            meter.add("gesture_mse", gl.item());
            total = total.defined() ? ad::add(total, gl) : gl;
            if (adversarial) {
              const Discriminator& d = *bundle.discriminator();
              const ad::Var mel = ad::constant(u.mel.values);
              const GanLosses gan = gan_losses(d(mel, ad::constant(u.motion.values)),
                                               d(mel, g.poses), gan_weight, minimax);
              meter.add("g_adv", gan.g_loss.item());
              total = ad::add(total, gan.g_loss);
              generated.emplace_back(&ex, g.poses.value());
            }
          }
          terms.push_back(total);
          break;
        }
        case Regime::kFlow: {
          const GlowIsg& g = *bundle.glow();
          const Matrix joint = g.joint_frames(u.mel.values, u.motion.values,
                                              nn::mix_seed(stage.seed, 1000 + static_cast<std::uint64_t>(it)));
          const GlowLoss l = g.loss(ex.ids, joint, true, train_rng);
          meter.add("nll", l.nll.item());
          meter.add("duration", l.duration.item());
          terms.push_back(l.total);
          break;
        }
        case Regime::kPipelineGesture: {
          const ad::Var l = bundle.audio_gesture()->nll(u.mel.values, u.motion.values);
          meter.add("nll", l.item());
          terms.push_back(l);
          break;
        }
      }
    }
    const ad::Var loss = mean_of(terms);
    meter.add("loss", loss.item());
    ad::backward(loss);
    meter.add("grad_norm", opt.step());

    if (adversarial) {
      const Discriminator& d = *bundle.discriminator();
      for (int k = 0; k < d.config().d_steps_per_g; ++k) {
        ad::Tape::current().clear();
        bundle.store().zero_grad();
        std::vector<ad::Var> d_terms;
        for (const auto& [ex, poses] : generated) {
          const ad::Var mel = ad::constant(ex->utt->mel.values);
          d_terms.push_back(gan_losses(d(mel, ad::constant(ex->utt->motion.values)),
                                       d(mel, ad::constant(poses)), gan_weight, minimax)
                                .d_loss);
        }
        const ad::Var dl = mean_of(d_terms);
        meter.add("d_loss", dl.item());
        ad::backward(dl);
        disc_opt->step();
      }
    }
    ad::Tape::current().clear();

    if (it % stage.eval_interval == 0 || it == stage.iterations) log(it);
    if (it % stage.checkpoint_interval == 0 || it == stage.iterations) save(it);
  }
  for (const std::string& p : stage.freeze_set) bundle.store().set_frozen(prefix_of(p), false);
  result.kept_checkpoints.assign(kept.begin(), kept.end());
  return result;
}

std::vector<StageResult> run_plan(const TrainPlan& plan, const std::string& out_dir) {
  const std::vector<std::string> errors = validate_plan(plan);
  if (!errors.empty()) throw PlanError(errors);
  fs::create_directories(out_dir);
  std::vector<StageResult> results;
  std::string previous;
  for (std::size_t i = 0; i < plan.stages.size(); ++i) {
    const StageSpec& s = plan.stages[i];
    char dir[16];
    std::snprintf(dir, sizeof(dir), "%02zu_", i);
    const std::string in = s.init_checkpoint.empty() ? previous : s.init_checkpoint;
    results.push_back(run_stage(s, in, (fs::path(out_dir) / (dir + s.name)).string()));
    previous = results.back().checkpoint;
  }
  fs::copy_file(previous, fs::path(out_dir) / "final.isgc", fs::copy_options::overwrite_existing);
  return results;
}

int iterations_on(const TrainPlan& plan, const std::string& corpus) {
  int n = 0;
  for (const StageSpec& s : plan.stages) {
    if (s.corpus == corpus) n += s.iterations;
  }
  return n;
}

TransferComparison build_transfer_comparison(const std::string& pretrained_checkpoint,
                                             const std::string& target_corpus, int budget,
                                             int isg_iterations, std::uint64_t seed,
                                             const json& model_config,
                                             const optim::AdamConfig& optimizer) {
  if (budget < 2 || isg_iterations < 1 || isg_iterations >= budget) {
    throw ValidationError("transfer comparison needs 1 <= isg_iterations < budget");
  }
  auto stage = [&](const std::string& name, Regime r, int iters) {
    StageSpec s;
    s.name = name;
    s.model = "tacotron2-isg";
    s.corpus = target_corpus;
    s.regime = r;
    s.iterations = iters;
    s.seed = seed;
    s.optimizer = optimizer;
    s.model_config = model_config;
    s.eval_interval = std::max(1, budget / 4);
    s.checkpoint_interval = budget;
    return s;
  };
  TransferComparison c;
  c.scratch.name = "isg_scratch";
  c.scratch.stages = {stage("isg_scratch", Regime::kIsgScratch, budget)};

  c.speech_only.name = "speech_only";
  c.speech_only.stages = {stage("speech_finetune", Regime::kSpeechOnly, budget)};
  c.speech_only.stages[0].init_checkpoint = pretrained_checkpoint;

  c.isg_finetune.name = "isg_finetune";
  c.isg_finetune.stages = {stage("speech_finetune", Regime::kSpeechOnly, budget - isg_iterations),
                           stage("isg_finetune", Regime::kIsgCt, isg_iterations)};
  c.isg_finetune.stages[0].init_checkpoint = pretrained_checkpoint;
  c.isg_finetune.stages[1].seed = nn::mix_seed(seed, 1);
  return c;
}

std::vector<std::string> validate_comparison(const std::vector<TrainPlan>& plans,
                                             const std::string& target_corpus) {
  std::vector<std::string> errors;
  if (plans.empty()) return errors;
  const int want = iterations_on(plans.front(), target_corpus);
  for (const TrainPlan& p : plans) {
    const int got = iterations_on(p, target_corpus);
    if (got != want) {
      errors.push_back("plan '" + p.name + "' trains " + std::to_string(got) +
                       " iterations on the target corpus, '" + plans.front().name + "' trains " +
                       std::to_string(want));
    }
  }
  return errors;
}

}  // namespace isg
