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

#ifndef ISG_TRAINER_H_
#define ISG_TRAINER_H_

// Staged training plans: speech-only pretraining and transfer, co-training
// (CT), separate training with a frozen speech core and GAN loss (ST),
// from-scratch ISG, the flow model and the pipeline's gesture flow.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "isg/models.h"
#include "isg/optim.h"
#include "json.hpp"

namespace isg {

enum class Regime { kSpeechOnly, kIsgCt, kIsgSt, kIsgScratch, kFlow, kPipelineGesture };

std::string to_string(Regime r);
Regime regime_from_string(const std::string& s);

struct StageSpec {
  std::string name;
  std::string model = "tacotron2-isg";
  std::string corpus;  // manifest path
  Regime regime = Regime::kSpeechOnly;
  int iterations = 0;
  std::vector<std::string> freeze_set;  // parameter prefixes, e.g. "speech"
  std::uint64_t seed = 0;
  optim::AdamConfig optimizer;
  int batch_size = 1;
  int eval_interval = 50;
  int checkpoint_interval = 100;
  int keep_last = 3;
  int max_eval_utterances = 8;
  std::string init_checkpoint;  // external starting point
  nlohmann::json model_config = nlohmann::json::object();
  SamplingSchedule schedule;
  bool adversarial = true;  // isg_st: false drops the GAN terms entirely
};

struct TrainPlan {
  std::string name = "plan";
  std::vector<StageSpec> stages;
};

void to_json(nlohmann::json& j, const StageSpec& s);
void from_json(const nlohmann::json& j, StageSpec& s);
void to_json(nlohmann::json& j, const TrainPlan& p);
// Unknown keys and malformed values throw ValidationError.
void from_json(const nlohmann::json& j, TrainPlan& p);
TrainPlan read_plan(const std::string& path);

class PlanError : public ValidationError {
 public:
  explicit PlanError(std::vector<std::string> errors);
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  std::vector<std::string> errors_;
};

// Every violation found, empty when the plan is valid. With check_files the
// corpus manifests and external checkpoints must exist.
std::vector<std::string> validate_plan(const TrainPlan& plan, bool check_files = true);

struct StageResult {
  std::string checkpoint;  // final checkpoint
  std::vector<std::string> kept_checkpoints;
  std::vector<nlohmann::json> metrics;
  std::string metrics_path;
};

// Trains one stage, starting from `checkpoint_in` when it is non-empty.
// Writes checkpoints and metrics.jsonl under `out_dir`.
StageResult run_stage(const StageSpec& stage, const std::string& checkpoint_in,
                      const std::string& out_dir);
// Validates, then runs every stage in order, each starting from the previous
// stage's checkpoint (or its own init_checkpoint). Stage i writes to
// out_dir/<index>_<name>.
std::vector<StageResult> run_plan(const TrainPlan& plan, const std::string& out_dir);

// Validation metrics of `bundle` on `utterances` for the losses `regime`
// trains. Keys: speech_mse, gesture_mse, nll, duration.
nlohmann::json evaluate(ModelBundle& bundle, Regime regime,
                        const std::vector<PairedUtterance>& utterances, std::uint64_t seed);

// The three speech-training variants compared for transfer learning:
// (a) ISG from scratch, (b) speech-only, (c) ISG fine-tuning after
// speech-only training. A shared speech-only pretraining checkpoint on
// another corpus plays the role of the external pretrained model; every
// variant then trains `budget` iterations on the target corpus.
struct TransferComparison {
  TrainPlan scratch;
  TrainPlan speech_only;
  TrainPlan isg_finetune;
};

TransferComparison build_transfer_comparison(const std::string& pretrained_checkpoint,
                                             const std::string& target_corpus, int budget,
                                             int isg_iterations, std::uint64_t seed,
                                             const nlohmann::json& model_config,
                                             const optim::AdamConfig& optimizer);
// Errors when the plans' iteration totals on `target_corpus` differ.
std::vector<std::string> validate_comparison(const std::vector<TrainPlan>& plans,
                                             const std::string& target_corpus);

// Iteration total over the stages that train on `corpus`.
int iterations_on(const TrainPlan& plan, const std::string& corpus);

}  // namespace isg

#endif  // ISG_TRAINER_H_
