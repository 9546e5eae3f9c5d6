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

#ifndef FEDKR_FEDERATION_H_
#define FEDKR_FEDERATION_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fedkr/audit.h"
#include "fedkr/classifier.h"
#include "fedkr/dda.h"
#include "fedkr/hpo.h"
#include "fedkr/krpipeline.h"
#include "fedkr/repository.h"
#include "fedkr/task.h"

namespace fedkr::fed {

struct Budgets {
  int sigma_trials = 50;
  int dda_trials = 50;
  int epochs = 100;
};

struct FedAvgSchedule {
  int rounds = 20;
  int local_epochs = 5;
};

struct ExperimentConfig {
  TaskSpec task;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  Budgets budgets;
  FedAvgSchedule fedavg;

  // Classifier shared by every method.
  int hidden_dim = 64;
  int batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.0;
  LrSchedule lr_schedule = LrSchedule::kCosine;

  // Knowledge-recycling and aggregation search.
  int tuning_epochs = 50;
  int generator_epochs = 20;
  int n_components = 3;
  double probe_sigma = 1.0;
  bool pruning = true;
  int pruner_min_resource = 5;
  int pruner_reduction_factor = 3;
  dda::FractionBase fraction_base = dda::FractionBase::kPoolSize;
  dda::RegenerationMode regeneration_mode = dda::RegenerationMode::kPartition;

  // Repository task ids are "<task_prefix>-s<seed>".
  std::string task_prefix = "desk";
  // Members run concurrently on this many threads; 0 uses every core.
  int threads = 0;

  // Throws ValidationError, naming the field.
  void Validate() const;

  TrainConfig Classifier(const RngStream& rng) const;
  kr::PipelineOptions Pipeline() const;
  dda::DdaOptions Dda() const;
  std::string TaskId(std::uint64_t seed) const;
};

// One member's private shards.
struct Member {
  std::string id;
  LabeledDataset train;
  LabeledDataset val;
  LabeledDataset test;
};

// "m00", "m01", ... (zero-padded so lexical and numeric order agree).
std::string MemberId(int index, int n_members);

// The seed's task, split across members and then into train/val/test with
// exactly the configured per-member sizes.
std::vector<Member> BuildFederation(const TaskSpec& task, std::uint64_t seed);

struct MemberOutcome {
  std::string member_id;
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t test_size = 0;
};

// FedKR diagnostics of one member.
struct CasTrace {
  std::string member_id;
  std::vector<double> checkpoint_cas;  // per generator epoch
  std::vector<double> sigma_trials;    // value of every sigma trial
  std::vector<double> dda_trials;      // value of every aggregation trial
  int checkpoint_epoch = 0;
  double sigma = 0.0;
  std::string plan;
  int dda_trial_count = 0;
  std::size_t pool_size = 0;
};

struct Improvement {
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
};

struct MethodReport {
  std::string method;
  std::uint64_t seed = 0;
  std::vector<MemberOutcome> members;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation over members
  double pooled = 0.0;  // correct / test rows over all members
  std::vector<CasTrace> cas;
  // Against the Ordinary report of the same seed, member by member.
  std::optional<Improvement> improvement;
  // The model evaluated for each member.
  std::vector<ClassifierModel> models;
  // Classifier epochs behind each evaluated model.
  int epochs = 0;
};

// Fills mean, stddev and pooled from the member outcomes.
void Summarize(MethodReport& report);

// Per-member differences report - baseline; members are matched by id.
Improvement ImprovementOver(const MethodReport& report, const MethodReport& baseline);

MethodReport RunOrdinary(const ExperimentConfig& cfg, std::uint64_t seed);
MethodReport RunCentralised(const ExperimentConfig& cfg, std::uint64_t seed);
MethodReport RunFedAvg(const ExperimentConfig& cfg, std::uint64_t seed);

// A member's context over its own shards of the seed's federation.
kr::MemberContext MakeContext(const ExperimentConfig& cfg, std::uint64_t seed, std::size_t index,
                              AccessAudit* audit = nullptr);

struct ContributeResult {
  Contribution contribution;
  repo::UploadReceipt receipt;
};

// Knowledge recycling for member `index` followed by the upload.
ContributeResult Contribute(const ExperimentConfig& cfg, std::uint64_t seed, std::size_t index,
                            kr::MemberContext& ctx, repo::RepositoryClient& client);

struct StudentResult {
  ClassifierModel model;
  MemberOutcome outcome;
  dda::AggregationPlan plan;
  double plan_value = 0.0;
  std::vector<double> dda_trials;
};

// Downloads every listed pool of the task, searches an aggregation plan on
// the member's validation shard and trains the final student.
StudentResult TrainStudent(const ExperimentConfig& cfg, std::uint64_t seed, std::size_t index,
                           kr::MemberContext& ctx, repo::RepositoryClient& client,
                           const repo::MembershipToken& token);

using ClientFactory = std::function<std::unique_ptr<repo::RepositoryClient>()>;

struct FedKrRun {
  MethodReport report;
  std::vector<Contribution> contributions;
};

// Every member runs knowledge recycling and uploads; then each downloads all
// pools, searches an aggregation plan and trains its final student. Each
// member gets its own client from `clients`. When `audit` is given every
// private-shard read is attributed to the member acting at the time.
FedKrRun RunFedKr(const ExperimentConfig& cfg, std::uint64_t seed, const ClientFactory& clients,
                  AccessAudit* audit = nullptr);

// RunFedKr against a private in-memory repository.
MethodReport RunFedKr(const ExperimentConfig& cfg, std::uint64_t seed);

// Loss-threshold membership inference: samples are scored by their negative
// cross-entropy and the AUC of members against nonmembers is returned. The
// larger set is subsampled to the size of the smaller one using `rng`.
double MiaProbe(const ClassifierModel& model, const LabeledDataset& members,
                const LabeledDataset& nonmembers, const RngStream& rng);

// Mann-Whitney AUC of positives over negatives; ties count one half.
double Auc(std::span<const double> positives, std::span<const double> negatives);

struct MiaRecord {
  std::string member_id;
  double ordinary_auc = 0.0;
  double fedkr_auc = 0.0;
};

// Attacks each member's Ordinary model and FedKR student with its own train
// shard as members and test shard as nonmembers.
std::vector<MiaRecord> MiaComparison(const ExperimentConfig& cfg, std::uint64_t seed,
                                     const MethodReport& ordinary, const MethodReport& fedkr);

// Runs `fn(i)` for i in [0, n) on up to `threads` threads (0 = every core).
// The first exception, by index, is rethrown after all workers stop.
void ParallelFor(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace fedkr::fed

#endif  // FEDKR_FEDERATION_H_
