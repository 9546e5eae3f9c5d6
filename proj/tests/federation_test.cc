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

#include <algorithm>
#include <atomic>
#include <cmath>
#include <set>
#include <stdexcept>

#include <gtest/gtest.h>

#include "fedkr/error.h"
#include "fedkr/federation.h"

namespace fedkr::fed {
namespace {

ExperimentConfig Tiny(int members = 3, int train = 30) {
  ExperimentConfig cfg;
  cfg.task.n_members = members;
  cfg.task.samples_per_member = {train, 10, 10};
  cfg.seeds = {7};
  cfg.budgets = {4, 4, 20};
  cfg.fedavg = {4, 5};
  cfg.generator_epochs = 3;
  cfg.tuning_epochs = 10;
  cfg.threads = 1;
  return cfg;
}

TEST(Config, ValidateNamesTheField) {
  auto cfg = Tiny();
  EXPECT_NO_THROW(cfg.Validate());
  cfg.fedavg = {3, 5};
  try {
    cfg.Validate();
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("fedavg.rounds"), std::string::npos);
  }
  cfg = Tiny();
  cfg.seeds.clear();
  EXPECT_THROW(cfg.Validate(), ValidationError);
  cfg = Tiny();
  cfg.task_prefix = "a b";
  EXPECT_THROW(cfg.Validate(), ValidationError);
  EXPECT_EQ(Tiny().TaskId(3), "desk-s3");
}

TEST(Federation, MemberIdsAndShardSizes) {
  EXPECT_EQ(MemberId(0, 3), "m00");
  EXPECT_EQ(MemberId(7, 120), "m007");
  auto cfg = Tiny(4, 25);
  auto members = BuildFederation(cfg.task, 3);
  ASSERT_EQ(members.size(), 4u);
  for (const auto& m : members) {
    EXPECT_EQ(m.train.size(), 25u);
    EXPECT_EQ(m.val.size(), 10u);
    EXPECT_EQ(m.test.size(), 10u);
  }
  auto again = BuildFederation(cfg.task, 3);
  EXPECT_EQ(members[2].train.features(), again[2].train.features());
  EXPECT_NE(members[2].train.features(), BuildFederation(cfg.task, 4)[2].train.features());
}

TEST(Summary, RecomputedStatisticsMatch) {
  MethodReport r;
  const std::vector<std::pair<std::size_t, std::size_t>> counts{{7, 10}, {9, 10}, {3, 5}, {40, 50}};
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const auto [c, n] = counts[i];
    r.members.push_back({MemberId(static_cast<int>(i), 4), double(c) / double(n), c, n});
  }
  Summarize(r);
  // 0.7, 0.9, 0.6, 0.8: mean 0.75, sample variance 0.05/3.
  EXPECT_NEAR(r.mean, 0.75, 1e-12);
  EXPECT_NEAR(r.stddev, std::sqrt(0.05 / 3), 1e-12);
  EXPECT_NEAR(r.pooled, 59.0 / 75.0, 1e-12);

  MethodReport single;
  single.members.push_back({"m00", 0.5, 5, 10});
  Summarize(single);
  EXPECT_EQ(single.stddev, 0.0);
  MethodReport empty;
  EXPECT_THROW(Summarize(empty), ValidationError);
}

TEST(Summary, ImprovementBounds) {
  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    MethodReport a, b;
    const int n = 1 + static_cast<int>(rng.Below(8));
    const double same = rng.Uniform(-0.3, 0.3);
    for (int i = 0; i < n; ++i) {
      const double base = rng.Uniform(0.2, 0.8);
      // Every fifth case has identical differences, where rounding matters.
      const double diff = t % 5 == 0 ? same : rng.Uniform(-0.2, 0.2);
      a.members.push_back({MemberId(i, n), base + diff, 0, 0});
      b.members.insert(b.members.begin(), {MemberId(i, n), base, 0, 0});
    }
    auto imp = ImprovementOver(a, b);
    EXPECT_LE(imp.min, imp.mean);
    EXPECT_LE(imp.mean, imp.max);
  }
  MethodReport a, b;
  a.members.push_back({"m00", 0.5, 0, 0});
  b.members.push_back({"m01", 0.5, 0, 0});
  EXPECT_THROW(ImprovementOver(a, b), ValidationError);
}

TEST(ParallelFor, CoversEveryIndexAndRethrowsFirstError) {
  for (int threads : {1, 3, 8}) {
    std::vector<std::atomic<int>> hits(50);
    ParallelFor(50, threads, [&](std::size_t i) { ++hits[i]; });
    for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  }
  try {
    ParallelFor(10, 1, [](std::size_t i) {
      if (i == 3 || i == 6) throw std::runtime_error("at " + std::to_string(i));
    });
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "at 3");
  }
  ParallelFor(0, 4, [](std::size_t) { FAIL(); });
}

TEST(Baselines, FedAvgWithOneMemberEqualsOrdinary) {
  auto cfg = Tiny(1, 40);
  auto ord = RunOrdinary(cfg, 7);
  auto avg = RunFedAvg(cfg, 7);
  ASSERT_EQ(ord.models.size(), 1u);
  EXPECT_TRUE(ord.models[0] == avg.models[0]);
  EXPECT_EQ(ord.members[0].accuracy, avg.members[0].accuracy);
}

TEST(Baselines, SingleRoundFedAvgIsWeightedAverageOfLocalRuns) {
  auto cfg = Tiny(3, 30);
  cfg.fedavg = {1, 20};
  auto avg = RunFedAvg(cfg, 7);
  auto ord = RunOrdinary(cfg, 7);
  // Equal shard sizes: the round average of the Ordinary models, provided
  // every member starts from member 0's initialisation.
  auto members = BuildFederation(cfg.task, 7);
  const TrainConfig first = cfg.Classifier(RngStream(7, "train").Child("member", 0));
  const auto global = ClassifierModel::Initialize(cfg.task.feature_dim, cfg.hidden_dim,
                                                  cfg.task.n_classes, first.rng.Child("init"));
  std::vector<ClassifierModel> locals;
  for (std::size_t i = 0; i < members.size(); ++i) {
    ClassifierTrainer t(global, cfg.Classifier(RngStream(7, "train").Child("member", static_cast<long long>(i))));
    for (int e = 0; e < 20; ++e) t.RunEpoch(SoftDataset::OneHot(members[i].train));
    locals.push_back(t.model());
  }
  EXPECT_TRUE(locals[0] == ord.models[0]);
  const std::vector<double> weights{30, 30, 30};
  EXPECT_TRUE(FedAvgCombine(locals, weights) == avg.models[0]);
  for (const auto& m : avg.models) EXPECT_TRUE(m == avg.models[0]);
}

TEST(Baselines, CentralisedSharesOneModel) {
  auto cfg = Tiny(3, 30);
  auto r = RunCentralised(cfg, 7);
  ASSERT_EQ(r.models.size(), 3u);
  EXPECT_TRUE(r.models[1] == r.models[0]);
  EXPECT_EQ(r.epochs, 20);
}

TEST(FedKr, DeterministicAcrossRunsAndThreads) {
  auto cfg = Tiny();
  auto a = RunFedKr(cfg, 7);
  cfg.threads = 3;
  auto b = RunFedKr(cfg, 7);
  ASSERT_EQ(a.members.size(), b.members.size());
  for (std::size_t i = 0; i < a.members.size(); ++i) {
    EXPECT_EQ(a.members[i].accuracy, b.members[i].accuracy);
    EXPECT_TRUE(a.models[i] == b.models[i]);
    EXPECT_EQ(a.cas[i].plan, b.cas[i].plan);
    EXPECT_EQ(a.cas[i].sigma_trials, b.cas[i].sigma_trials);
  }
}

TEST(FedKr, PoolsBudgetsAndIsolation) {
  auto cfg = Tiny(3, 30);
  cfg.budgets.dda_trials = 50;
  AccessAudit audit;
  repo::RepositoryStore store;
  auto run = RunFedKr(cfg, 7, [&] { return std::make_unique<repo::InProcessClient>(store); }, &audit);
  EXPECT_TRUE(audit.violations().empty());
  EXPECT_GT(audit.access_count(), 0u);
  ASSERT_EQ(run.contributions.size(), 3u);
  for (const auto& c : run.contributions) {
    EXPECT_EQ(c.synth.size(), 5 * c.real_size);
    EXPECT_EQ(c.real_size, 30u);
  }
  for (const auto& t : run.report.cas) {
    EXPECT_EQ(t.dda_trial_count, 50);
    EXPECT_EQ(t.sigma_trials.size(), 4u);
    EXPECT_EQ(t.checkpoint_cas.size(), 3u);
    EXPECT_EQ(t.pool_size, 150u);
  }
  EXPECT_EQ(store.Health().contributions, 3u);
}

TEST(Audit, CrossMemberReadIsRecorded) {
  AccessAudit audit;
  auto cfg = Tiny();
  auto ctx = MakeContext(cfg, 7, 1, &audit);
  {
    ActingAs acting("m00");
    (void)ctx.train();
  }
  {
    ActingAs acting("m01");
    (void)ctx.val();
  }
  (void)ctx.test();  // outside any member
  auto v = audit.violations();
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].actor, "m00");
  EXPECT_EQ(v[0].owner, "m01");
  EXPECT_THROW(MakeContext(cfg, 7, 3), ValidationError);
}

TEST(Mia, AucExamplesAndTies) {
  const std::vector<double> pos{3, 4}, neg{1, 2};
  EXPECT_EQ(Auc(pos, neg), 1.0);
  EXPECT_EQ(Auc(neg, pos), 0.0);
  const std::vector<double> tie{1, 1};
  EXPECT_EQ(Auc(tie, tie), 0.5);
  // 2 > 1 wins, 2 vs 2 half, 1 vs 1 half, 1 < 2 loses: (1 + .5 + .5 + 0) / 4.
  const std::vector<double> a{1, 2}, b{1, 2};
  EXPECT_EQ(Auc(a, b), 0.5);
  const std::vector<double> c{2}, d{1, 2, 3};
  EXPECT_DOUBLE_EQ(Auc(c, d), 0.5);
  EXPECT_THROW(Auc({}, neg), ValidationError);
  const std::vector<double> nan{std::nan("")};
  EXPECT_THROW(Auc(nan, neg), NumericalError);
}

double BruteAuc(const std::vector<double>& p, const std::vector<double>& n) {
  double s = 0;
  for (double x : p)
    for (double y : n) s += x > y ? 1.0 : x == y ? 0.5 : 0.0;
  return s / double(p.size() * n.size());
}

TEST(Mia, AucMatchesPairCountAndIgnoresMonotoneTransforms) {
  Rng rng(9);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> p(1 + rng.Below(30)), n(1 + rng.Below(30));
    // Coarse values so ties are common.
    for (double& x : p) x = std::round((0.3 + rng.Normal()) * 2) / 2;
    for (double& x : n) x = std::round(rng.Normal() * 2) / 2;
    const double auc = Auc(p, n);
    EXPECT_NEAR(auc, BruteAuc(p, n), 1e-12);
    auto tp = p, tn = n;
    for (double& x : tp) x = std::exp(x) * 3 + 1;
    for (double& x : tn) x = std::exp(x) * 3 + 1;
    EXPECT_NEAR(Auc(tp, tn), auc, 1e-12);
  }
}

TEST(Mia, NullModelGivesHalf) {
  // The model never saw either set, which come from the same distribution.
  ExperimentConfig cfg = Tiny(3, 400);
  cfg.task.samples_per_member = {400, 10, 400};
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto members = BuildFederation(cfg.task, seed);
    auto model = FitClassifier(SoftDataset::OneHot(members[0].train),
                               cfg.Classifier(RngStream(seed, "null")));
    const double auc = MiaProbe(model, members[1].train, members[1].test, RngStream(seed, "mia"));
    EXPECT_NEAR(auc, 0.5, 0.07) << "seed " << seed;
  }
}

TEST(Mia, OverfitModelIsExposed) {
  ExperimentConfig cfg = Tiny(1, 20);
  cfg.task.samples_per_member = {20, 10, 200};
  cfg.task.noise_scale = 3.0;
  cfg.hidden_dim = 128;
  cfg.budgets.epochs = 400;
  cfg.learning_rate = 0.1;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto m = BuildFederation(cfg.task, seed)[0];
    auto model = FitClassifier(SoftDataset::OneHot(m.train), cfg.Classifier(RngStream(seed, "fit")));
    EXPECT_GE(MiaProbe(model, m.train, m.test, RngStream(seed, "mia")), 0.7) << "seed " << seed;
  }
}

TEST(Mia, SubsamplingIsDeterministic) {
  ExperimentConfig cfg = Tiny(1, 50);
  cfg.task.samples_per_member = {50, 10, 120};
  auto m = BuildFederation(cfg.task, 2)[0];
  auto model = FitClassifier(SoftDataset::OneHot(m.train), cfg.Classifier(RngStream(2, "fit")));
  const double a = MiaProbe(model, m.train, m.test, RngStream(2, "mia"));
  EXPECT_EQ(a, MiaProbe(model, m.train, m.test, RngStream(2, "mia")));
  EXPECT_THROW(MiaProbe(model, LabeledDataset::Empty(m.train.feature_dim(), 4), m.test, RngStream(2, "mia")),
               ValidationError);
}

}  // namespace
}  // namespace fedkr::fed
