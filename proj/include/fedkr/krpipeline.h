// Copyright 2026 The FedKR Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FEDKR_KRPIPELINE_H_
#define FEDKR_KRPIPELINE_H_

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fedkr/audit.h"
#include "fedkr/classifier.h"
#include "fedkr/contribution.h"
#include "fedkr/dataset.h"
#include "fedkr/generator.h"
#include "fedkr/hpo.h"

namespace fedkr::kr {

// A member's private shards plus the artifacts of its pipeline run. Holds no
// data belonging to any other member. Shard reads are reported to the audit
// hook when one is attached.
class MemberContext {
 public:
  MemberContext(std::string member_id, LabeledDataset train, LabeledDataset val,
                LabeledDataset test, AccessAudit* audit = nullptr);

  const std::string& member_id() const { return member_id_; }
  const LabeledDataset& train() const;
  const LabeledDataset& val() const;
  const LabeledDataset& test() const;

  std::optional<ClassifierModel> teacher;
  std::vector<GeneratorCheckpoint> checkpoints;
  std::optional<GeneratorCheckpoint> selected;
  // Probe CAS of each checkpoint, in checkpoint order.
  std::vector<double> checkpoint_cas;
  // Value of every sigma trial, in trial order.
  std::vector<double> sigma_trials;

  const std::optional<double>& chosen_sigma() const { return chosen_sigma_; }
  // Throws ValidationError outside [kSigmaLow, kSigmaHigh].
  void set_chosen_sigma(double sigma);

 private:
  std::string member_id_;
  LabeledDataset train_;
  LabeledDataset val_;
  LabeledDataset test_;
  AccessAudit* audit_;
  std::optional<double> chosen_sigma_;
};

struct PipelineOptions {
  // Teacher settings; epochs is the full training budget.
  TrainConfig classifier;
  // Student epochs while selecting checkpoints and tuning sigma.
  int tuning_epochs = 50;
  int generator_epochs = 20;
  int n_components = 3;
  int sigma_trials = 50;
  double probe_sigma = 1.0;
  hpo::StudyOptions study{.pruner = hpo::HyperbandConfig{5, 50, 3}};
};

// Fits the teacher on the member's train shard with one-hot targets and stores
// it in the context.
ClassifierModel TrainTeacher(MemberContext& ctx, const TrainConfig& cfg);

// Classification Accuracy Score: accuracy on real_eval of a classifier trained
// only on synth.
double Cas(const SoftDataset& synth, const LabeledDataset& real_eval,
           const TrainConfig& cfg);

// CAS with intermediate evaluations at every pruning rung of the trial's
// study; stops early when the trial is pruned and returns the last value.
double CasWithReports(const SoftDataset& synth, const LabeledDataset& real_eval,
                      const TrainConfig& cfg, hpo::TrialContext& trial);

// Soft labels are the teacher's class probabilities; the generator's
// conditioning labels are dropped.
SoftDataset GkdLabel(const ClassifierModel& teacher, const LabeledDataset& raw);

// Scores every checkpoint in ctx by the CAS of a |train|-sized probe sampled
// at probe_sigma and labelled by the teacher, measured on ctx.val. Returns the
// best one, preferring the later epoch on ties, and records it in ctx.
GeneratorCheckpoint SelectCheckpoint(MemberContext& ctx,
                                     const ClassifierModel& teacher,
                                     const TrainConfig& student_cfg,
                                     double probe_sigma = 1.0);

using SigmaEvaluator = std::function<double(double sigma, hpo::TrialContext&)>;

// Runs `trials` suggestions over Continuous(kSigmaLow, kSigmaHigh) and returns
// the best sigma. The study is written to *study_out when given.
double TuneSigmaWith(const SigmaEvaluator& evaluate, int trials,
                     const hpo::StudyOptions& options, const RngStream& rng,
                     hpo::Study* study_out = nullptr);

// Sigma tuning against the member's validation shard: each trial samples a
// probe at sigma, GKD-labels it and reports the student's CAS at Hyperband
// rungs. Stores the chosen sigma in ctx.
double TuneSigma(MemberContext& ctx, const GeneratorModel& generator,
                 const ClassifierModel& teacher, const PipelineOptions& options,
                 const RngStream& rng);

// Samples kSynthMultiplier * |train| points at the chosen sigma from the
// selected checkpoint and GKD-labels them.
Contribution ProduceContribution(const MemberContext& ctx, const RngStream& rng);

// Teacher, generator checkpoints, checkpoint selection, sigma tuning and the
// final contribution, in that order.
Contribution RunKnowledgeRecycling(MemberContext& ctx,
                                   const PipelineOptions& options,
                                   const RngStream& member_rng);

// Mixture size usable for this shard: n_components capped by the smallest
// non-zero class count.
int EffectiveComponents(const LabeledDataset& train, int n_components);

}  // namespace fedkr::kr

#endif  // FEDKR_KRPIPELINE_H_
