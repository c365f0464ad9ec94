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

// isg: data preparation, training, synthesis and benchmarks.
//
// Exit codes: 0 success, 1 validation error, 2 runtime error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "isg/audio_io.h"
#include "isg/bench.h"
#include "isg/trainer.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace isg {
namespace {

std::string data_dir() {
  const char* d = std::getenv("ISG_DATA_DIR");
  return d ? d : "";
}

// Relative paths are tried against the working directory, then `roots`.
std::string locate(const std::string& path, const std::vector<std::string>& roots) {
  if (path.empty() || fs::path(path).is_absolute() || fs::exists(path)) return path;
  for (const std::string& r : roots) {
    if (!r.empty() && fs::exists(fs::path(r) / path)) return (fs::path(r) / path).string();
  }
  return path;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void snapshot(const std::string& out_dir, const std::vector<std::string>& argv,
              const json& resolved) {
  fs::create_directories(out_dir);
  write_json(fs::path(out_dir) / "resolved_config.json", {{"argv", argv}, {"resolved", resolved}});
}

// Synthesis model names map to checkpoint kinds; the two Tacotron2-ISG
// variants differ only in how their checkpoint was trained.
const std::map<std::string, ModelKind>& synth_models() {
  static const std::map<std::string, ModelKind> m = {
      {"tacotron2-isg-ct", ModelKind::kTacotronIsg}, {"tacotron2-isg-st", ModelKind::kTacotronIsg},
      {"glowtts-isg", ModelKind::kGlowIsg},          {"pipeline", ModelKind::kPipeline},
      {"speech-only", ModelKind::kSpeechOnly}};
  return m;
}

std::string synth_model_list() {
  std::string s;
  for (const auto& [name, kind] : synth_models()) s += (s.empty() ? "" : ", ") + name;
  return s;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read text file " + path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) out.push_back(line);
  }
  if (out.empty()) throw ValidationError("text file " + path + " has no lines");
  return out;
}

// `name=path` pairs.
std::vector<std::pair<std::string, std::string>> parse_pairs(const std::vector<std::string>& items) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const std::string& s : items) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == s.size()) {
      throw ValidationError("expected NAME=CHECKPOINT, got '" + s + "'");
    }
    out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  return out;
}

Skeleton skeleton_for(const std::string& bvh, Eigen::Index dims) {
  if (!bvh.empty()) return read_bvh(bvh).skeleton;
  Skeleton s = toy_skeleton();
  if (3 * s.size() != dims) {
    throw ValidationError("motion has " + std::to_string(dims) +
                          " channels; pass --skeleton with a matching BVH file");
  }
  return s;
}

// ---------------------------------------------------------------------------

struct SynthgenArgs {
  std::string out;
  int n = 50;
  std::uint64_t seed = 0;
  std::string config;
  double pitch_scale = 1.0;
};

void run_synthgen(const SynthgenArgs& a, const std::vector<std::string>& argv) {
  SynthConfig c;
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw ValidationError("cannot read " + a.config);
    c = json::parse(in).get<SynthConfig>();
  }
  c.pitch_scale = a.pitch_scale;
  if (a.n < 1) throw ValidationError("--n must be >= 1");
  snapshot(a.out, argv, {{"seed", a.seed}, {"n", a.n}, {"synth", c}});
  const CorpusManifest m = generate_synthetic_corpus(a.seed, a.n, c, a.out);
  std::cout << "wrote " << m.entries.size() << " utterances to " << a.out << "\n";
}

struct PrepareArgs {
  std::string manifest;
  std::string out;
  double max_duration = 11.0;
};

void run_prepare(const PrepareArgs& a, const std::vector<std::string>& argv) {
  std::string path = a.manifest;
  if (path.empty()) {
    if (data_dir().empty()) throw ValidationError("--manifest is required when ISG_DATA_DIR is unset");
    path = (fs::path(data_dir()) / "manifest.jsonl").string();
  }
  path = locate(path, {data_dir()});
  if (!fs::is_regular_file(path)) throw ValidationError("manifest not found: " + path);
  const CorpusManifest in = read_manifest(path);
  const auto issues = validate_manifest(in);
  if (!issues.empty()) {
    for (const auto& i : issues) std::cerr << "error: " << i.message << "\n";
    throw ValidationError("manifest has " + std::to_string(issues.size()) + " problem(s)");
  }
  snapshot(a.out, argv, {{"manifest", path}, {"max_duration_s", a.max_duration}});
  std::vector<CorpusIssue> warnings;
  const CorpusManifest out = prepare_corpus(in, a.out, a.max_duration, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w.message << "\n";
  std::cout << "wrote " << out.entries.size() << " segments to " << a.out << "\n";
}

struct TrainArgs {
  std::string plan;
  std::string out;
};

void run_train(const TrainArgs& a, const std::vector<std::string>& argv) {
  TrainPlan plan = read_plan(a.plan);
  const std::vector<std::string> roots = {fs::path(a.plan).parent_path().string(), data_dir()};
  for (StageSpec& s : plan.stages) {
    s.corpus = locate(s.corpus, roots);
    s.init_checkpoint = locate(s.init_checkpoint, roots);
  }
  const auto errors = validate_plan(plan);
  if (!errors.empty()) {
    for (const auto& e : errors) std::cerr << "error: " << e << "\n";
    throw PlanError(errors);
  }
  snapshot(a.out, argv, {{"plan", plan}});
  const auto results = run_plan(plan, a.out);
  for (std::size_t i = 0; i < results.size(); ++i) {
    const json& last = results[i].metrics.back();
    std::cout << plan.stages[i].name << ": " << last.at("val").dump() << "\n";
  }
  std::cout << "final checkpoint " << (fs::path(a.out) / "final.isgc").string() << "\n";
}

struct SynthArgs {
  std::string model;
  std::string checkpoint;
  std::string text;
  std::string text_file;
  std::string out;
  std::string skeleton;
  std::uint64_t seed = 0;
  std::optional<double> temperature;
  std::optional<double> length_scale;
  std::string gesture_input;
  int griffin_lim_iters = -1;
};

void run_synth(const SynthArgs& a, const std::vector<std::string>& argv) {
  const auto it = synth_models().find(a.model);
  if (it == synth_models().end()) {
    throw ValidationError("unknown model '" + a.model + "'; valid models: " + synth_model_list());
  }
  if (a.text.empty() == a.text_file.empty()) {
    throw ValidationError("give exactly one of --text and --text-file");
  }
  std::string ckpt = a.checkpoint;
  if (ckpt.empty()) {
    ckpt = (fs::path(data_dir()) / "models" / (a.model + ".isgc")).string();
  }
  ckpt = locate(ckpt, {data_dir()});
  if (!fs::is_regular_file(ckpt)) throw ValidationError("checkpoint not found: " + ckpt);
  std::int64_t iteration = 0;
  const auto bundle = ModelBundle::load(ckpt, &iteration);
  if (bundle->kind() != it->second) {
    throw ValidationError("checkpoint " + ckpt + " holds a " + to_string(bundle->kind()) +
                          " model, not " + a.model);
  }
  SynthesisOptions opts;
  opts.seed = a.seed;
  opts.temperature = a.temperature;
  opts.length_scale = a.length_scale;
  if (!a.gesture_input.empty()) {
    opts.gesture_input = a.gesture_input == "attn" ? GestureInput::kAttentionStates
                                                   : GestureInput::kMelFrames;
  }
  const std::vector<std::string> texts =
      a.text.empty() ? read_lines(a.text_file) : std::vector<std::string>{a.text};
  const int gl_iters = a.griffin_lim_iters > 0 ? a.griffin_lim_iters : bundle->griffin_lim_iters();

  json resolved = {{"model", a.model},
                   {"checkpoint", ckpt},
                   {"checkpoint_iteration", iteration},
                   {"seed", a.seed},
                   {"temperature", opts.temperature.value_or(bundle->default_temperature())},
                   {"length_scale", opts.length_scale.value_or(bundle->default_length_scale())},
                   {"griffin_lim_iters", gl_iters},
                   {"texts", texts},
                   {"model_config", bundle->config()}};
  if (!a.gesture_input.empty()) resolved["gesture_input"] = a.gesture_input;
  snapshot(a.out, argv, resolved);

  json manifest = json::array();
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const std::vector<int> ids = bundle->encode_text(texts[i]);
    SynthesisOptions o = opts;
    o.seed = nn::mix_seed(a.seed, i);
    SynthesisResult r = bundle->synthesize(ids, o);
    char base[32];
    std::snprintf(base, sizeof(base), "utt_%03zu", i);
    const fs::path stem = fs::path(a.out) / base;
    json entry = {{"index", i},
                  {"text", texts[i]},
                  {"seed", o.seed},
                  {"synthesis_s", r.seconds},
                  {"truncated", r.truncated},
                  {"mel_frames", r.mel.frames()},
                  {"mel_fps", r.mel.fps},
                  {"duration_s", r.mel.duration_s()}};
    if (r.stages) entry["stages"] = *r.stages;
    write_mel(stem.string() + "_mel", r.mel);
    entry["mel"] = stem.filename().string() + "_mel.bin";
    const auto wave = griffin_lim(r.mel, bundle->mel_config(), gl_iters, o.seed);
    write_wav(stem.string() + ".wav", wave, bundle->mel_config().sample_rate);
    entry["wav"] = stem.filename().string() + ".wav";
    if (r.motion.frames() > 0) {
      const Skeleton sk = skeleton_for(locate(a.skeleton, {data_dir()}), r.motion.dims());
      if (r.motion.joint_names.empty()) r.motion.joint_names = sk.names();
      write_motion_csv(stem.string() + "_motion.csv", r.motion);
      write_bvh(stem.string() + ".bvh", sk, r.motion);
      entry["motion_csv"] = stem.filename().string() + "_motion.csv";
      entry["bvh"] = stem.filename().string() + ".bvh";
      entry["motion_frames"] = r.motion.frames();
      entry["motion_fps"] = r.motion.fps;
      entry["motion_valid"] = motion_is_valid(r.motion);
    }
    manifest.push_back(entry);
    std::cout << stem.string() << ": " << r.mel.duration_s() << " s speech, " << r.motion.frames()
              << " motion frames, " << r.seconds << " s\n";
  }
  write_json(fs::path(a.out) / "manifest.json", {{"model", a.model}, {"utterances", manifest}});
}

struct BenchArgs {
  std::string out;
  std::string preset = "reference";
  std::vector<std::string> checkpoints;  // NAME=PATH
  std::string text;
  std::string text_file;
  int repeats = 3;
  std::uint64_t seed = 0;
  std::vector<std::string> motions;
  std::string skeleton;
  double fps = 20.0;
};

std::vector<std::pair<std::string, std::unique_ptr<ModelBundle>>> load_models(const BenchArgs& a) {
  std::vector<std::pair<std::string, std::unique_ptr<ModelBundle>>> out;
  for (const auto& [name, path] : parse_pairs(a.checkpoints)) {
    const std::string p = locate(path, {data_dir()});
    if (!fs::is_regular_file(p)) throw ValidationError("checkpoint not found: " + p);
    out.emplace_back(name, ModelBundle::load(p));
  }
  return out;
}

void run_bench_params(const BenchArgs& a, const std::vector<std::string>& argv) {
  auto models = load_models(a);
  if (models.empty()) {
    for (ModelKind k : {ModelKind::kSpeechOnly, ModelKind::kTacotronIsg, ModelKind::kGlowIsg,
                        ModelKind::kPipeline}) {
      models.emplace_back(to_string(k),
                          std::make_unique<ModelBundle>(k, json{{"preset", a.preset}}, 0));
    }
  }
  json rows = json::array();
  std::string md = "| System | Param. count |\n|---|---:|\n";
  for (const auto& [name, m] : models) {
    json parts = json::object();
    for (const auto& [prefix, n] : m->parameter_breakdown()) parts[prefix] = n;
    rows.push_back({{"model", name},
                    {"kind", to_string(m->kind())},
                    {"parameters", m->parameter_count()},
                    {"breakdown", parts}});
    md += "| " + name + " | " + bench::format_millions(m->parameter_count()) + " |\n";
    if (m->kind() == ModelKind::kPipeline) {
      for (const auto& [prefix, n] : m->parameter_breakdown()) {
        md += "| &nbsp;&nbsp;" + prefix + " | " + bench::format_millions(n) + " |\n";
      }
    }
  }
  snapshot(a.out, argv, {{"preset", a.preset}, {"checkpoints", a.checkpoints}});
  write_json(fs::path(a.out) / "params.json", {{"models", rows}});
  std::ofstream(fs::path(a.out) / "params.md") << md;
  std::cout << md;
}

void run_bench_timing(const BenchArgs& a, const std::vector<std::string>& argv) {
  auto models = load_models(a);
  if (models.empty()) throw ValidationError("bench timing needs --checkpoint NAME=PATH");
  if (a.text.empty() == a.text_file.empty()) {
    throw ValidationError("give exactly one of --text and --text-file");
  }
  const std::vector<std::string> texts =
      a.text.empty() ? read_lines(a.text_file) : std::vector<std::string>{a.text};
  snapshot(a.out, argv, {{"checkpoints", a.checkpoints}, {"texts", texts}, {"repeats", a.repeats},
                         {"seed", a.seed}});
  bench::TimingReport report;
  for (auto& [name, m] : models) {
    std::vector<std::vector<int>> ids;
    for (const auto& t : texts) ids.push_back(m->encode_text(t));
    report.add(bench::time_synthesis(name, *m, ids, a.repeats, a.seed));
  }
  write_json(fs::path(a.out) / "timing.json", report.to_json());
  const std::string md = report.markdown();
  std::ofstream(fs::path(a.out) / "timing.md") << md;
  std::cout << md;
  for (const auto& m : report.models) {
    if (!m.all_sequential) throw std::runtime_error(m.model + ": pipeline stages overlapped");
  }
}

std::vector<MotionSequence> read_motions(const BenchArgs& a) {
  if (a.motions.empty()) throw ValidationError("give at least one --motion file");
  std::vector<MotionSequence> out;
  for (const std::string& path : a.motions) {
    const std::string p = locate(path, {data_dir()});
    if (!fs::is_regular_file(p)) throw ValidationError("motion file not found: " + p);
    if (fs::path(p).extension() == ".bvh") {
      out.push_back(read_bvh(p).motion);
    } else {
      out.push_back(read_motion_csv(p, a.fps));
    }
  }
  return out;
}

void run_bench_plot(const BenchArgs& a, const std::vector<std::string>& argv) {
  const auto motions = read_motions(a);
  const Skeleton sk = skeleton_for(locate(a.skeleton, {data_dir()}), motions.front().dims());
  snapshot(a.out, argv, {{"motions", a.motions}, {"skeleton", a.skeleton}});
  const bench::GestureSpacePlot plot = bench::gesture_space_plot(motions, sk);
  plot.write_csv((fs::path(a.out) / "gesture_space.csv").string());
  plot.write_png((fs::path(a.out) / "gesture_space.png").string());
  std::cout << "wrote " << (fs::path(a.out) / "gesture_space.png").string() << "\n";
}

void run_bench_stats(const BenchArgs& a, const std::vector<std::string>& argv) {
  const auto motions = read_motions(a);
  snapshot(a.out, argv, {{"motions", a.motions}, {"fps", a.fps}});
  json rows = json::array();
  double dur = 0;
  for (std::size_t i = 0; i < motions.size(); ++i) {
    const bench::MotionStats s = bench::motion_stats(motions[i]);
    std::vector<double> range(s.range.data(), s.range.data() + s.range.size());
    rows.push_back({{"file", a.motions[i]},
                    {"frames", motions[i].frames()},
                    {"duration_s", motions[i].duration_s()},
                    {"variation", s.variation},
                    {"mean_range", s.range.mean()},
                    {"range", range}});
    dur += motions[i].duration_s();
    std::cout << a.motions[i] << ": variation " << s.variation << ", mean range " << s.range.mean()
              << "\n";
  }
  write_json(fs::path(a.out) / "stats.json",
             {{"motions", rows}, {"mean_duration_s", dur / static_cast<double>(motions.size())}});
}

int run(int argc, char** argv);

// `isg replay SNAPSHOT [--out DIR]` reruns the command recorded in a
// resolved_config.json, optionally into another directory.
int replay(const std::vector<std::string>& args) {
  if (args.size() != 2 && !(args.size() == 4 && args[2] == "--out")) {
    std::cerr << "usage: isg replay SNAPSHOT [--out DIR]\n";
    return 1;
  }
  std::vector<std::string> argv;
  try {
    std::ifstream in(args[1]);
    if (!in) throw ValidationError("cannot read " + args[1]);
    argv = json::parse(in).at("argv").get<std::vector<std::string>>();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  if (args.size() == 4) {
    for (std::size_t i = 0; i + 1 < argv.size(); ++i) {
      if (argv[i] == "--out") argv[i + 1] = args[3];
    }
  }
  std::vector<std::string> storage = {"isg"};
  storage.insert(storage.end(), argv.begin(), argv.end());
  std::vector<char*> ptrs;
  for (std::string& s : storage) ptrs.push_back(s.data());
  return run(static_cast<int>(ptrs.size()), ptrs.data());
}

int run(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  if (!args.empty() && args[0] == "replay") return replay(args);
  CLI::App app{"Integrated speech and gesture synthesis"};
  app.require_subcommand(1);

  SynthgenArgs sg;
  auto* synthgen = app.add_subcommand("synthgen", "Generate a synthetic paired corpus");
  synthgen->add_option("--out", sg.out, "Output directory")->required();
  synthgen->add_option("--n", sg.n, "Number of utterances");
  synthgen->add_option("--seed", sg.seed);
  synthgen->add_option("--config", sg.config, "Synthesis config JSON");
  synthgen->add_option("--pitch-scale", sg.pitch_scale, "Tone shift (a different voice)");

  PrepareArgs pr;
  auto* prepare = app.add_subcommand("prepare", "Split into breath groups and add bigrams");
  prepare->add_option("--manifest", pr.manifest, "Input manifest (default $ISG_DATA_DIR/manifest.jsonl)");
  prepare->add_option("--out", pr.out, "Output directory")->required();
  prepare->add_option("--max-duration", pr.max_duration, "Segment cap in seconds");

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Run a training plan");
  train->add_option("--plan", tr.plan, "Plan JSON")->required();
  train->add_option("--out", tr.out, "Output directory")->required();

  SynthArgs sy;
  auto* synth = app.add_subcommand("synth", "Synthesize speech and motion from text");
  synth->add_option("--model", sy.model, "One of " + synth_model_list())->required();
  synth->add_option("--checkpoint", sy.checkpoint,
                    "Checkpoint (default $ISG_DATA_DIR/models/<model>.isgc)");
  synth->add_option("--text", sy.text);
  synth->add_option("--text-file", sy.text_file, "One utterance per line");
  synth->add_option("--out", sy.out, "Output directory")->required();
  synth->add_option("--seed", sy.seed);
  synth->add_option("--temperature", sy.temperature);
  synth->add_option("--length-scale", sy.length_scale);
  synth->add_option("--gesture-input", sy.gesture_input)
      ->check(CLI::IsMember({"attn", "mel"}));
  synth->add_option("--skeleton", sy.skeleton, "BVH file for the output skeleton");
  synth->add_option("--griffin-lim-iters", sy.griffin_lim_iters);

  BenchArgs be;
  auto* bench_cmd = app.add_subcommand("bench", "Benchmarks");
  bench_cmd->require_subcommand(1);
  auto* params = bench_cmd->add_subcommand("params", "Parameter counts");
  auto* timing = bench_cmd->add_subcommand("timing", "Synthesis time with 95% CIs");
  auto* plot = bench_cmd->add_subcommand("plot", "Gesture-space plot");
  auto* stats = bench_cmd->add_subcommand("stats", "Motion range and variation");
  for (auto* c : {params, timing, plot, stats}) {
    c->add_option("--out", be.out, "Output directory")->required();
  }
  params->add_option("--preset", be.preset)->check(CLI::IsMember({"toy", "reference"}));
  for (auto* c : {params, timing}) {
    c->add_option("--checkpoint", be.checkpoints, "NAME=PATH, repeatable");
  }
  timing->add_option("--text", be.text);
  timing->add_option("--text-file", be.text_file);
  timing->add_option("--repeats", be.repeats)->check(CLI::PositiveNumber);
  timing->add_option("--seed", be.seed);
  for (auto* c : {plot, stats}) {
    c->add_option("--motion", be.motions, "Motion CSV or BVH, repeatable")->required();
    c->add_option("--fps", be.fps, "CSV frame rate");
  }
  plot->add_option("--skeleton", be.skeleton, "BVH file with the skeleton");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*synthgen) run_synthgen(sg, args);
    if (*prepare) run_prepare(pr, args);
    if (*train) run_train(tr, args);
    if (*synth) run_synth(sy, args);
    if (*params) run_bench_params(be, args);
    if (*timing) run_bench_timing(be, args);
    if (*plot) run_bench_plot(be, args);
    if (*stats) run_bench_stats(be, args);
  } catch (const PlanError& e) {
    std::cerr << "invalid plan (" << e.errors().size() << " error(s))\n";
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace
}  // namespace isg

int main(int argc, char** argv) { return isg::run(argc, argv); }
