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

#include "fedkr/krpipeline.h"

#include <algorithm>
#include <set>

#include "fedkr/error.h"

namespace fedkr::kr {

MemberContext::MemberContext(std::string member_id, LabeledDataset train,
                             LabeledDataset val, LabeledDataset test,
                             AccessAudit* audit)
    : member_id_(std::move(member_id)),
      train_(std::move(train)),
      val_(std::move(val)),
      test_(std::move(test)),
      audit_(audit) {}

const LabeledDataset& MemberContext::train() const {
  if (audit_ != nullptr) audit_->RecordAccess(member_id_);
  return train_;
}

const LabeledDataset& MemberContext::val() const {
  if (audit_ != nullptr) audit_->RecordAccess(member_id_);
  return val_;
}

const LabeledDataset& MemberContext::test() const {
  if (audit_ != nullptr) audit_->RecordAccess(member_id_);
  return test_;
}

void MemberContext::set_chosen_sigma(double sigma) {
  if (!(sigma >= kSigmaLow && sigma <= kSigmaHigh)) {
    throw ValidationError("sigma " + std::to_string(sigma) +
                          " outside [0.5, 2.5]");
  }
  chosen_sigma_ = sigma;
}

ClassifierModel TrainTeacher(MemberContext& ctx, const TrainConfig& cfg) {
  const LabeledDataset& train = ctx.train();
  if (train.empty()) {
    throw ValidationError("member " + ctx.member_id() + " has an empty train shard");
  }
  ctx.teacher = FitClassifier(SoftDataset::OneHot(train), cfg);
  return *ctx.teacher;
}

double Cas(const SoftDataset& synth, const LabeledDataset& real_eval,
           const TrainConfig& cfg) {
  if (synth.empty() || real_eval.empty()) {
    throw ValidationError("CAS needs non-empty synthetic and real data");
  }
  if (synth.feature_dim() != real_eval.feature_dim() ||
      synth.n_classes() != real_eval.n_classes()) {
    throw ValidationError("CAS: synthetic and real data dimensions differ");
  }
  return Accuracy(FitClassifier(synth, cfg), real_eval);
}

double CasWithReports(const SoftDataset& synth, const LabeledDataset& real_eval,
                      const TrainConfig& cfg, hpo::TrialContext& trial) {
  if (synth.empty() || real_eval.empty()) {
    throw ValidationError("CAS needs non-empty synthetic and real data");
  }
  std::set<int> steps{cfg.epochs};
  const int bracket = trial.study().BracketOf(trial.trial_id());
  for (const auto& rung : trial.study().schedule()) {
    if (rung.bracket == bracket && rung.resource < cfg.epochs) steps.insert(rung.resource);
  }
  ClassifierTrainer trainer(
      ClassifierModel::Initialize(synth.feature_dim(), cfg.hidden_dim,
                                  synth.n_classes(), cfg.rng.Child("init")),
      cfg);
  double value = 0.0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    trainer.RunEpoch(synth);
    if (!steps.contains(epoch)) continue;
    value = Accuracy(trainer.model(), real_eval);
    if (trial.Report(epoch, value)) break;
  }
  return value;
}

SoftDataset GkdLabel(const ClassifierModel& teacher, const LabeledDataset& raw) {
  if (raw.feature_dim() != teacher.input_dim()) {
    throw ValidationError("GKD: feature_dim does not match the teacher");
  }
  if (raw.empty()) return SoftDataset::Empty(raw.feature_dim(), teacher.n_classes());
  return SoftDataset(raw.features(), teacher.PredictProba(raw.features()));
}

GeneratorCheckpoint SelectCheckpoint(MemberContext& ctx,
                                     const ClassifierModel& teacher,
                                     const TrainConfig& student_cfg,
                                     double probe_sigma) {
  if (ctx.checkpoints.empty()) {
    throw ValidationError("member " + ctx.member_id() + " has no generator checkpoints");
  }
  const std::size_t probe_size = ctx.train().size();
  const LabeledDataset& val = ctx.val();
  // The same probe stream for every checkpoint keeps the comparison paired.
  const RngStream probe_rng = student_cfg.rng.Child("checkpoint-probe");
  ctx.checkpoint_cas.clear();
  std::size_t best = 0;
  for (std::size_t i = 0; i < ctx.checkpoints.size(); ++i) {
    LabeledDataset probe =
        SampleGenerator(ctx.checkpoints[i].model, probe_size, probe_sigma, probe_rng);
    double score = Cas(GkdLabel(teacher, probe), val, student_cfg);
    ctx.checkpoint_cas.push_back(score);
    if (score >= ctx.checkpoint_cas[best]) best = i;
  }
  ctx.selected = ctx.checkpoints[best];
  return *ctx.selected;
}

double TuneSigmaWith(const SigmaEvaluator& evaluate, int trials,
                     const hpo::StudyOptions& options, const RngStream& rng,
                     hpo::Study* study_out) {
  hpo::ParamSpace space;
  space.AddContinuous("sigma", kSigmaLow, kSigmaHigh);
  hpo::Study study(std::move(space), options, rng);
  const auto& best = hpo::Optimize(
      study, trials,
      [&](const hpo::Params& p, hpo::TrialContext& trial) { return evaluate(p[0], trial); });
  double sigma = best.params[0];
  if (study_out != nullptr) *study_out = std::move(study);
  return sigma;
}

double TuneSigma(MemberContext& ctx, const GeneratorModel& generator,
                 const ClassifierModel& teacher, const PipelineOptions& options,
                 const RngStream& rng) {
  TrainConfig student = options.classifier;
  student.epochs = options.tuning_epochs;
  student.rng = rng.Child("student");
  const std::size_t probe_size = ctx.train().size();
  const LabeledDataset& val = ctx.val();
  const RngStream probe_rng = rng.Child("probe");
  ctx.sigma_trials.clear();
  auto evaluate = [&](double sigma, hpo::TrialContext& trial) {
    LabeledDataset probe = SampleGenerator(generator, probe_size, sigma, probe_rng);
    double cas = CasWithReports(GkdLabel(teacher, probe), val, student, trial);
    ctx.sigma_trials.push_back(cas);
    return cas;
  };
  double sigma = TuneSigmaWith(evaluate, options.sigma_trials, options.study,
                               rng.Child("study"));
  ctx.set_chosen_sigma(sigma);
  return sigma;
}

Contribution ProduceContribution(const MemberContext& ctx, const RngStream& rng) {
  if (!ctx.teacher || !ctx.selected || !ctx.chosen_sigma()) {
    throw ValidationError("member " + ctx.member_id() +
                          " needs a teacher, a checkpoint and a sigma first");
  }
  const std::size_t real_size = ctx.train().size();
  LabeledDataset raw = SampleGenerator(ctx.selected->model, kSynthMultiplier * real_size,
                                       *ctx.chosen_sigma(), rng);
  Contribution out{ctx.member_id(), GkdLabel(*ctx.teacher, raw), real_size,
                   *ctx.chosen_sigma(), ctx.selected->epoch_index};
  out.Validate();
  return out;
}

int EffectiveComponents(const LabeledDataset& train, int n_components) {
  std::size_t smallest = static_cast<std::size_t>(n_components);
  for (std::size_t count : train.ClassCounts()) {
    if (count > 0) smallest = std::min(smallest, count);
  }
  return static_cast<int>(std::max<std::size_t>(smallest, 1));
}

Contribution RunKnowledgeRecycling(MemberContext& ctx,
                                   const PipelineOptions& options,
                                   const RngStream& member_rng) {
  TrainConfig teacher_cfg = options.classifier;
  teacher_cfg.rng = member_rng.Child("teacher");
  ClassifierModel teacher = TrainTeacher(ctx, teacher_cfg);

  const LabeledDataset& train = ctx.train();
  ctx.checkpoints = FitGenerator(train, EffectiveComponents(train, options.n_components),
                                 options.generator_epochs, member_rng.Child("generator"));

  TrainConfig student_cfg = options.classifier;
  student_cfg.epochs = options.tuning_epochs;
  student_cfg.rng = member_rng.Child("selection");
  GeneratorCheckpoint chosen =
      SelectCheckpoint(ctx, teacher, student_cfg, options.probe_sigma);

  TuneSigma(ctx, chosen.model, teacher, options, member_rng.Child("sigma"));
  return ProduceContribution(ctx, member_rng.Child("synth"));
}

}  // namespace fedkr::kr
