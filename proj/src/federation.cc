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

#include "fedkr/federation.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <thread>

#include <spdlog/spdlog.h>

#include "fedkr/error.h"

namespace fedkr::fed {
namespace {

RngStream TrainStream(std::uint64_t seed, std::size_t member) {
  return RngStream(seed, "train").Child("member", static_cast<long long>(member));
}

RngStream FedKrStream(std::uint64_t seed, std::size_t member) {
  return RngStream(seed, "fedkr").Child("member", static_cast<long long>(member));
}

MemberOutcome Evaluate(const std::string& id, const ClassifierModel& model,
                       const LabeledDataset& test) {
  Matrix p = model.PredictProba(test.features());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (ArgMax(p.row(static_cast<Eigen::Index>(i))) == test.labels()[i]) ++hits;
  }
  return MemberOutcome{id, static_cast<double>(hits) / static_cast<double>(test.size()), hits,
                       test.size()};
}

// Re-raises the in-flight exception with `prefix` prepended, keeping its type.
[[noreturn]] void RethrowWith(const std::string& prefix) {
  try {
    throw;
  } catch (const ValidationError& e) {
    throw ValidationError(prefix + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(prefix + e.what());
  } catch (const IntegrityError& e) {
    throw IntegrityError(prefix + e.what());
  } catch (const AccessDenied& e) {
    throw AccessDenied(prefix + e.what());
  } catch (const NotFound& e) {
    throw NotFound(prefix + e.what());
  } catch (const NetworkError& e) {
    throw NetworkError(prefix + e.what());
  } catch (const std::exception& e) {
    throw Error(prefix + e.what());
  }
}

template <typename T>
std::vector<T> Unwrap(std::vector<std::optional<T>>& slots) {
  std::vector<T> out;
  out.reserve(slots.size());
  for (auto& slot : slots) out.push_back(std::move(*slot));
  return out;
}

MethodReport Finish(std::string method, std::uint64_t seed, int epochs,
                    std::vector<MemberOutcome> outcomes, std::vector<ClassifierModel> models) {
  MethodReport report;
  report.method = std::move(method);
  report.seed = seed;
  report.epochs = epochs;
  report.members = std::move(outcomes);
  report.models = std::move(models);
  Summarize(report);
  return report;
}

}  // namespace

void ExperimentConfig::Validate() const {
  task.Validate();
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ValidationError(what);
  };
  require(!seeds.empty(), "seeds: at least one seed is required");
  require(budgets.sigma_trials >= 1, "budgets.sigma_trials must be >= 1");
  require(budgets.dda_trials >= 1, "budgets.dda_trials must be >= 1");
  require(budgets.epochs >= 1, "budgets.epochs must be >= 1");
  require(fedavg.rounds >= 1 && fedavg.local_epochs >= 1,
          "fedavg.rounds and fedavg.local_epochs must be >= 1");
  require(fedavg.rounds * fedavg.local_epochs == budgets.epochs,
          "fedavg.rounds x fedavg.local_epochs (" +
              std::to_string(fedavg.rounds * fedavg.local_epochs) + ") must equal budgets.epochs (" +
              std::to_string(budgets.epochs) + ")");
  require(hidden_dim >= 1, "hidden_dim must be >= 1");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(learning_rate > 0.0, "learning_rate must be > 0");
  require(momentum >= 0.0 && momentum < 1.0, "momentum must lie in [0, 1)");
  require(tuning_epochs >= 1, "tuning_epochs must be >= 1");
  require(generator_epochs >= 1, "generator_epochs must be >= 1");
  require(n_components >= 1, "n_components must be >= 1");
  require(probe_sigma >= kSigmaLow && probe_sigma <= kSigmaHigh,
          "probe_sigma must lie in [0.5, 2.5]");
  require(threads >= 0, "threads must be >= 0");
  if (pruning) {
    hpo::HyperbandConfig{pruner_min_resource, tuning_epochs, pruner_reduction_factor}.Validate();
  }
  require(!task_prefix.empty(), "task_prefix must not be empty");
  for (char c : task_prefix) {
    require(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.',
            "task_prefix may only hold letters, digits, '-', '_' and '.'");
  }
}

TrainConfig ExperimentConfig::Classifier(const RngStream& rng) const {
  TrainConfig out;
  out.epochs = budgets.epochs;
  out.batch_size = batch_size;
  out.learning_rate = learning_rate;
  out.momentum = momentum;
  out.lr_schedule = lr_schedule;
  out.hidden_dim = hidden_dim;
  out.rng = rng;
  return out;
}

namespace {
hpo::StudyOptions MakeStudy(const ExperimentConfig& cfg) {
  hpo::StudyOptions study;
  if (cfg.pruning) {
    study.pruner =
        hpo::HyperbandConfig{cfg.pruner_min_resource, cfg.tuning_epochs, cfg.pruner_reduction_factor};
  } else {
    study.pruner.reset();
  }
  return study;
}
}  // namespace

kr::PipelineOptions ExperimentConfig::Pipeline() const {
  kr::PipelineOptions out;
  out.classifier = Classifier({});
  out.tuning_epochs = tuning_epochs;
  out.generator_epochs = generator_epochs;
  out.n_components = n_components;
  out.sigma_trials = budgets.sigma_trials;
  out.probe_sigma = probe_sigma;
  out.study = MakeStudy(*this);
  return out;
}

dda::DdaOptions ExperimentConfig::Dda() const {
  dda::DdaOptions out;
  out.budget = budgets.dda_trials;
  out.tuning_epochs = tuning_epochs;
  out.fraction_base = fraction_base;
  out.regeneration_mode = regeneration_mode;
  out.study = MakeStudy(*this);
  return out;
}

std::string ExperimentConfig::TaskId(std::uint64_t seed) const {
  return task_prefix + "-s" + std::to_string(seed);
}

std::string MemberId(int index, int n_members) {
  const int width = std::max(2, static_cast<int>(std::to_string(std::max(n_members - 1, 0)).size()));
  std::string digits = std::to_string(index);
  return "m" + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(digits.size()))), '0') +
         digits;
}

std::vector<Member> BuildFederation(const TaskSpec& task, std::uint64_t seed) {
  task.Validate();
  const RngStream root(seed, "federation");
  LabeledDataset data = MakeTask(task, root.Child("task"));
  std::vector<LabeledDataset> shards = SplitFederation(data, task.n_members, root.Child("split"));
  const auto& sizes = task.samples_per_member;
  const double total = sizes.total();
  const std::array<double, 3> ratios{sizes.train / total, sizes.val / total, sizes.test / total};
  std::vector<Member> out;
  out.reserve(shards.size());
  for (std::size_t i = 0; i < shards.size(); ++i) {
    TvtSplit split = SplitTvt(shards[i], ratios, root.Child("member", static_cast<long long>(i)));
    out.push_back(Member{MemberId(static_cast<int>(i), task.n_members), std::move(split.train),
                         std::move(split.val), std::move(split.test)});
  }
  return out;
}

void Summarize(MethodReport& report) {
  const auto n = report.members.size();
  if (n == 0) throw ValidationError("report has no members");
  double sum = 0.0;
  std::size_t correct = 0;
  std::size_t rows = 0;
  for (const auto& m : report.members) {
    sum += m.accuracy;
    correct += m.correct;
    rows += m.test_size;
  }
  report.mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (const auto& m : report.members) ss += (m.accuracy - report.mean) * (m.accuracy - report.mean);
  report.stddev = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
  report.pooled = rows > 0 ? static_cast<double>(correct) / static_cast<double>(rows) : 0.0;
}

Improvement ImprovementOver(const MethodReport& report, const MethodReport& baseline) {
  std::vector<double> diffs;
  for (const auto& m : report.members) {
    auto it = std::find_if(baseline.members.begin(), baseline.members.end(),
                           [&](const MemberOutcome& b) { return b.member_id == m.member_id; });
    if (it == baseline.members.end()) {
      throw ValidationError("member " + m.member_id + " missing from the " + baseline.method +
                            " report");
    }
    diffs.push_back(m.accuracy - it->accuracy);
  }
  if (diffs.empty()) throw ValidationError("no members to compare");
  Improvement out;
  out.min = *std::min_element(diffs.begin(), diffs.end());
  out.max = *std::max_element(diffs.begin(), diffs.end());
  out.mean = std::accumulate(diffs.begin(), diffs.end(), 0.0) / static_cast<double>(diffs.size());
  // Rounding can nudge the mean past an extreme when all diffs are equal.
  out.mean = std::clamp(out.mean, out.min, out.max);
  return out;
}

void ParallelFor(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads)
                                    : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, n);
  std::vector<std::exception_ptr> errors(n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
        break;
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n && !failed; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
            failed = true;
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

MethodReport RunOrdinary(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.Validate();
  const auto members = BuildFederation(cfg.task, seed);
  std::vector<std::optional<MemberOutcome>> outcomes(members.size());
  std::vector<std::optional<ClassifierModel>> models(members.size());
  ParallelFor(members.size(), cfg.threads, [&](std::size_t i) {
    const Member& m = members[i];
    try {
      ClassifierModel model =
          FitClassifier(SoftDataset::OneHot(m.train), cfg.Classifier(TrainStream(seed, i)));
      outcomes[i] = Evaluate(m.id, model, m.test);
      models[i] = std::move(model);
    } catch (...) {
      RethrowWith("ordinary, member " + m.id + ": ");
    }
  });
  return Finish("ordinary", seed, cfg.budgets.epochs, Unwrap(outcomes), Unwrap(models));
}

MethodReport RunCentralised(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.Validate();
  const auto members = BuildFederation(cfg.task, seed);
  std::vector<LabeledDataset> trains;
  for (const auto& m : members) trains.push_back(m.train);
  LabeledDataset all = Concat(std::span<const LabeledDataset>(trains));
  ClassifierModel model = FitClassifier(SoftDataset::OneHot(all),
                                        cfg.Classifier(RngStream(seed, "train").Child("centralised")));
  std::vector<MemberOutcome> outcomes;
  for (const auto& m : members) outcomes.push_back(Evaluate(m.id, model, m.test));
  std::vector<ClassifierModel> models(members.size(), model);
  return Finish("centralised", seed, cfg.budgets.epochs, std::move(outcomes), std::move(models));
}

MethodReport RunFedAvg(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.Validate();
  const auto members = BuildFederation(cfg.task, seed);
  const auto n = members.size();
  std::vector<SoftDataset> data;
  std::vector<double> weights;
  for (const auto& m : members) {
    data.push_back(SoftDataset::OneHot(m.train));
    weights.push_back(static_cast<double>(m.train.size()));
  }
  // Same initial parameters as member 0's Ordinary run.
  const TrainConfig first = cfg.Classifier(TrainStream(seed, 0));
  ClassifierModel global = ClassifierModel::Initialize(
      cfg.task.feature_dim, cfg.hidden_dim, cfg.task.n_classes, first.rng.Child("init"));
  std::vector<ClassifierTrainer> trainers;
  for (std::size_t i = 0; i < n; ++i) trainers.emplace_back(global, cfg.Classifier(TrainStream(seed, i)));

  std::vector<std::optional<ClassifierModel>> locals(n);
  for (int round = 0; round < cfg.fedavg.rounds; ++round) {
    ParallelFor(n, cfg.threads, [&](std::size_t i) {
      try {
        trainers[i].SetModel(global);
        for (int e = 0; e < cfg.fedavg.local_epochs; ++e) trainers[i].RunEpoch(data[i]);
        locals[i] = trainers[i].model();
      } catch (...) {
        RethrowWith("fedavg round " + std::to_string(round) + ", member " + members[i].id + ": ");
      }
    });
    std::vector<ClassifierModel> round_models;
    for (auto& l : locals) round_models.push_back(std::move(*l));
    global = FedAvgCombine(round_models, weights);
  }
  std::vector<MemberOutcome> outcomes;
  for (const auto& m : members) outcomes.push_back(Evaluate(m.id, global, m.test));
  std::vector<ClassifierModel> models(n, global);
  return Finish("fedavg", seed, cfg.budgets.epochs, std::move(outcomes), std::move(models));
}

kr::MemberContext MakeContext(const ExperimentConfig& cfg, std::uint64_t seed, std::size_t index,
                              AccessAudit* audit) {
  auto members = BuildFederation(cfg.task, seed);
  if (index >= members.size()) {
    throw ValidationError("member index " + std::to_string(index) + " out of range (" +
                          std::to_string(members.size()) + " members)");
  }
  Member& m = members[index];
  return kr::MemberContext(m.id, std::move(m.train), std::move(m.val), std::move(m.test), audit);
}

ContributeResult Contribute(const ExperimentConfig& cfg, std::uint64_t seed, std::size_t index,
                            kr::MemberContext& ctx, repo::RepositoryClient& client) {
  Contribution c = kr::RunKnowledgeRecycling(ctx, cfg.Pipeline(), FedKrStream(seed, index));
  repo::UploadReceipt receipt = client.Upload(cfg.TaskId(seed), c);
  spdlog::debug("{}: contributed {} rows, sigma {:.3f}", ctx.member_id(), c.synth.size(), c.sigma);
  return ContributeResult{std::move(c), std::move(receipt)};
}

StudentResult TrainStudent(const ExperimentConfig& cfg, std::uint64_t seed, std::size_t index,
                           kr::MemberContext& ctx, repo::RepositoryClient& client,
                           const repo::MembershipToken& token) {
  const std::string task_id = cfg.TaskId(seed);
  const dda::DdaOptions options = cfg.Dda();
  dda::PoolSet pools;
  for (const auto& manifest : client.List(task_id, token)) {
    pools.insert_or_assign(manifest.member_id,
                           dda::Pool{client.Download(task_id, token, manifest.contribution_id),
                                     manifest.real_size});
  }
  if (!pools.contains(ctx.member_id())) {
    throw NotFound("own contribution is not listed in task " + task_id);
  }
  const RngStream rng = FedKrStream(seed, index);
  const TrainConfig student = cfg.Classifier(rng.Child("student"));
  dda::PlanSearch search = dda::OptimizePlan(pools, ctx.val(), student, options, rng.Child("dda"));
  ClassifierModel model = dda::TrainFinal(search.plan, pools, student, options);
  MemberOutcome outcome = Evaluate(ctx.member_id(), model, ctx.test());
  std::vector<double> trials;
  for (const auto& trial : search.study.trials()) {
    trials.push_back(trial.Value().value_or(std::numeric_limits<double>::quiet_NaN()));
  }
  spdlog::debug("{}: plan {} val {:.4f} test {:.4f}", ctx.member_id(), search.plan.ToString(),
                search.value, outcome.accuracy);
  return StudentResult{std::move(model), std::move(outcome), std::move(search.plan), search.value,
                       std::move(trials)};
}

FedKrRun RunFedKr(const ExperimentConfig& cfg, std::uint64_t seed, const ClientFactory& clients,
                  AccessAudit* audit) {
  cfg.Validate();
  std::vector<kr::MemberContext> contexts;
  {
    auto members = BuildFederation(cfg.task, seed);
    for (auto& m : members) {
      contexts.emplace_back(m.id, std::move(m.train), std::move(m.val), std::move(m.test), audit);
    }
  }
  const auto n = contexts.size();

  std::vector<std::optional<ContributeResult>> contributed(n);
  ParallelFor(n, cfg.threads, [&](std::size_t i) {
    kr::MemberContext& ctx = contexts[i];
    ActingAs acting(ctx.member_id());
    try {
      auto client = clients();
      contributed[i] = Contribute(cfg, seed, i, ctx, *client);
    } catch (...) {
      RethrowWith("fedkr contribution, member " + ctx.member_id() + ": ");
    }
  });

  std::vector<std::optional<StudentResult>> students(n);
  ParallelFor(n, cfg.threads, [&](std::size_t i) {
    kr::MemberContext& ctx = contexts[i];
    ActingAs acting(ctx.member_id());
    try {
      auto client = clients();
      students[i] = TrainStudent(cfg, seed, i, ctx, *client, contributed[i]->receipt.token);
    } catch (...) {
      RethrowWith("fedkr aggregation, member " + ctx.member_id() + ": ");
    }
  });

  FedKrRun run;
  std::vector<MemberOutcome> outcomes;
  std::vector<ClassifierModel> models;
  for (std::size_t i = 0; i < n; ++i) {
    StudentResult& s = *students[i];
    const Contribution& c = contributed[i]->contribution;
    CasTrace t;
    t.member_id = contexts[i].member_id();
    t.checkpoint_cas = contexts[i].checkpoint_cas;
    t.sigma_trials = contexts[i].sigma_trials;
    t.dda_trials = s.dda_trials;
    t.dda_trial_count = static_cast<int>(s.dda_trials.size());
    t.checkpoint_epoch = c.checkpoint_epoch;
    t.sigma = c.sigma;
    t.plan = s.plan.ToString();
    t.pool_size = c.synth.size();
    run.report.cas.push_back(std::move(t));
    outcomes.push_back(s.outcome);
    models.push_back(std::move(s.model));
    run.contributions.push_back(std::move(contributed[i]->contribution));
  }
  auto traces = std::move(run.report.cas);
  run.report = Finish("fedkr", seed, cfg.budgets.epochs, std::move(outcomes), std::move(models));
  run.report.cas = std::move(traces);
  return run;
}

MethodReport RunFedKr(const ExperimentConfig& cfg, std::uint64_t seed) {
  repo::RepositoryStore store;
  return RunFedKr(cfg, seed, [&] { return std::make_unique<repo::InProcessClient>(store); })
      .report;
}

double Auc(std::span<const double> positives, std::span<const double> negatives) {
  if (positives.empty() || negatives.empty()) {
    throw ValidationError("AUC needs at least one sample on each side");
  }
  struct Scored {
    double score;
    bool positive;
  };
  std::vector<Scored> all;
  for (double s : positives) all.push_back({s, true});
  for (double s : negatives) all.push_back({s, false});
  for (const auto& s : all) {
    if (std::isnan(s.score)) throw NumericalError("AUC score is NaN");
  }
  std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) { return a.score < b.score; });
  // Mid-ranks for ties.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (all[k].positive) rank_sum += mid;
    }
    i = j;
  }
  const auto np = static_cast<double>(positives.size());
  const auto nn = static_cast<double>(negatives.size());
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double MiaProbe(const ClassifierModel& model, const LabeledDataset& members,
                const LabeledDataset& nonmembers, const RngStream& rng) {
  if (members.empty() || nonmembers.empty()) {
    throw ValidationError("membership inference needs members and nonmembers");
  }
  const std::size_t n = std::min(members.size(), nonmembers.size());
  auto scores = [&](const LabeledDataset& data, const char* label) {
    std::vector<double> loss = SampleLosses(model, data);
    if (loss.size() > n) {
      std::vector<std::size_t> keep = rng.Child(label).Engine().Permutation(loss.size());
      keep.resize(n);
      std::vector<double> sub;
      for (std::size_t k : keep) sub.push_back(loss[k]);
      loss = std::move(sub);
    }
    for (double& l : loss) l = -l;
    return loss;
  };
  std::vector<double> in = scores(members, "members");
  std::vector<double> out = scores(nonmembers, "nonmembers");
  return Auc(in, out);
}

std::vector<MiaRecord> MiaComparison(const ExperimentConfig& cfg, std::uint64_t seed,
                                     const MethodReport& ordinary, const MethodReport& fedkr) {
  const auto members = BuildFederation(cfg.task, seed);
  if (ordinary.models.size() != members.size() || fedkr.models.size() != members.size()) {
    throw ValidationError("membership inference needs one model per member");
  }
  std::vector<MiaRecord> out;
  for (std::size_t i = 0; i < members.size(); ++i) {
    const RngStream rng = RngStream(seed, "mia").Child("member", static_cast<long long>(i));
    out.push_back(MiaRecord{members[i].id,
                            MiaProbe(ordinary.models[i], members[i].train, members[i].test, rng),
                            MiaProbe(fedkr.models[i], members[i].train, members[i].test, rng)});
  }
  return out;
}

}  // namespace fedkr::fed
