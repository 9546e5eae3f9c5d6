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

#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "fedkr/dda.h"
#include "fedkr/error.h"
#include "fedkr/task.h"

namespace fedkr::dda {
namespace {

// Pool rows carry a unique id in feature 0 so draws can be traced.
Pool IdPool(int n, double offset, std::size_t real_size = 0) {
  Matrix x(n, 2);
  Matrix y = Matrix::Zero(n, 2);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = offset + i;
    x(i, 1) = 0.0;
    y(i, i % 2) = 1.0;
  }
  return Pool{SoftDataset(x, y), real_size ? real_size : static_cast<std::size_t>(n / 5)};
}

std::multiset<double> Ids(const SoftDataset& d) {
  std::multiset<double> out;
  for (Eigen::Index i = 0; i < d.features().rows(); ++i) out.insert(d.features()(i, 0));
  return out;
}

TEST(Grid, RegenerationChoicesAreDivisors) {
  EXPECT_EQ(RegenerationChoices(100), (std::vector<int>{1, 2, 4, 5, 10, 20, 25, 50, 100}));
  EXPECT_EQ(RegenerationChoices(1), (std::vector<int>{1}));
  EXPECT_EQ(SearchSpaceCardinality(3, 100), 216u * 9u);
  EXPECT_EQ(SearchSpaceCardinality(20, 100), 3656158440062976ULL * 9ULL);
}

TEST(Aggregate, FullFractionsTakeEveryRowOnce) {
  PoolSet pools{{"a", IdPool(50, 0)}, {"b", IdPool(30, 1000)}, {"c", IdPool(20, 2000)}};
  AggregationPlan plan{{{"a", 1.0}, {"b", 1.0}, {"c", 1.0}}, 1};
  auto agg = BuildAggregate(plan, pools, RngStream(1, "agg"));
  std::multiset<double> expected;
  for (const auto& [id, p] : pools) {
    auto ids = Ids(p.data);
    expected.insert(ids.begin(), ids.end());
  }
  EXPECT_EQ(Ids(agg), expected);
}

TEST(Aggregate, FractionArithmeticAndDeterminism) {
  PoolSet pools{{"a", IdPool(500, 0)}, {"b", IdPool(500, 1000)}, {"c", IdPool(500, 2000)}};
  AggregationPlan plan{{{"a", 0.0}, {"b", 0.2}, {"c", 0.0}}, 1};
  auto agg = BuildAggregate(plan, pools, RngStream(2, "agg"));
  EXPECT_EQ(agg.size(), 100u);
  for (double id : Ids(agg)) EXPECT_TRUE(id >= 1000 && id < 1500);
  auto again = BuildAggregate(plan, pools, RngStream(2, "agg"));
  EXPECT_EQ(agg.features(), again.features());
  EXPECT_EQ(agg.soft_labels(), again.soft_labels());

  // Fractions of the real set: 0.2 of 100 real rows is 20 pool rows.
  EXPECT_EQ(DrawCount(0.2, pools.at("a"), FractionBase::kRealSize), 20u);
  EXPECT_EQ(BuildAggregate(plan, pools, RngStream(2, "agg"), FractionBase::kRealSize).size(), 20u);

  AggregationPlan zero{{{"a", 0.0}}, 1};
  EXPECT_THROW(BuildAggregate(zero, pools, RngStream(2, "agg")), ValidationError);
  AggregationPlan unknown{{{"z", 0.4}}, 1};
  EXPECT_THROW(BuildAggregate(unknown, pools, RngStream(2, "agg")), ValidationError);
}

TEST(Partition, SizesAndSchedule) {
  EXPECT_EQ(PartSizes(1002, 4), (std::vector<std::size_t>{251, 251, 250, 250}));
  EXPECT_EQ(PartSizes(7, 1), (std::vector<std::size_t>{7}));
  auto every = EpochParts(100, 100);
  for (int e = 0; e < 100; ++e) EXPECT_EQ(every[e], (std::vector<int>{e}));
  // Full budget: every part is used for epochs / r consecutive epochs.
  for (int r : RegenerationChoices(100)) {
    auto parts = EpochParts(100, r);
    ASSERT_EQ(parts.size(), 100u);
    std::vector<int> uses(r);
    for (const auto& ids : parts) {
      ASSERT_EQ(ids.size(), 1u);
      uses[ids[0]]++;
    }
    for (int u : uses) EXPECT_EQ(u, 100 / r);
  }
  // Compressed tuning run with more parts than epochs: all parts still seen.
  auto squeezed = EpochParts(50, 100);
  std::set<int> seen;
  for (const auto& ids : squeezed) seen.insert(ids.begin(), ids.end());
  EXPECT_EQ(seen.size(), 100u);
}

TaskSpec Spec() {
  TaskSpec spec;
  spec.feature_dim = 4;
  spec.n_classes = 3;
  spec.n_clusters_per_class = 1;
  spec.class_separation = 4.0;
  spec.noise_scale = 1.0;
  spec.n_members = 1;
  spec.samples_per_member = {300, 100, 100};
  return spec;
}

Pool CleanPool(std::uint64_t seed) {
  auto data = MakeTask(Spec(), RngStream(seed, "pool"));
  std::vector<std::size_t> rows(300);
  std::iota(rows.begin(), rows.end(), 0);
  return Pool{SoftDataset::OneHot(data.Subset(rows)), 60};
}

Pool NoisePool(std::uint64_t seed) {
  auto data = MakeTask(Spec(), RngStream(seed, "pool"));
  Rng rng(seed);
  std::vector<int> labels(300);
  for (int& l : labels) l = static_cast<int>(rng.Below(3));
  Matrix x = data.features().topRows(300);
  return Pool{SoftDataset::OneHot(LabeledDataset(x, labels, 3)), 60};
}

LabeledDataset Val(std::uint64_t seed) {
  auto data = MakeTask(Spec(), RngStream(seed, "val"));
  std::vector<std::size_t> rows(100);
  std::iota(rows.begin(), rows.end(), 0);
  return data.Subset(rows);
}

TEST(Training, SingleRegenerationIsPlainFit) {
  PoolSet pools{{"a", CleanPool(1)}, {"b", CleanPool(2)}};
  AggregationPlan plan{{{"a", 0.6}, {"b", 0.4}}, 1};
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.rng = RngStream(3, "student");
  auto via_plan = TrainWithRegeneration(plan, pools, Val(3), cfg);
  auto direct = FitClassifier(BuildAggregate(plan, pools, cfg.rng.Child("aggregate")), cfg);
  EXPECT_TRUE(via_plan.model == direct);
  EXPECT_EQ(via_plan.cas, Accuracy(direct, Val(3)));
  EXPECT_TRUE(TrainFinal(plan, pools, cfg) == direct);
}

TEST(Training, RegenerationRespectsBudget) {
  PoolSet pools{{"a", CleanPool(1)}, {"b", CleanPool(2)}};
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.rng = RngStream(4, "student");
  for (auto mode : {RegenerationMode::kPartition, RegenerationMode::kRedraw}) {
    DdaOptions options;
    options.regeneration_mode = mode;
    for (int r : RegenerationChoices(20)) {
      AggregationPlan plan{{{"a", 1.0}, {"b", 0.2}}, r};
      auto a = TrainFinal(plan, pools, cfg, options);
      EXPECT_TRUE(a == TrainFinal(plan, pools, cfg, options));
      EXPECT_EQ(a.input_dim(), 4);
      EXPECT_EQ(a.n_classes(), 3);
    }
    AggregationPlan bad{{{"a", 1.0}}, 3};
    EXPECT_THROW(TrainFinal(bad, pools, cfg, options), ValidationError);
  }
  AggregationPlan off_grid{{{"a", 0.3}}, 1};
  EXPECT_THROW(TrainFinal(off_grid, pools, cfg), ValidationError);
}

// A deterministic stub over 3 members: prefers a at 0.8, b at 0.6, c off and
// a moderate regeneration count, with an interaction between a and b.
double Stub(const AggregationPlan& p) {
  const double a = p.fractions.at("a"), b = p.fractions.at("b"), c = p.fractions.at("c");
  const double r = p.regenerations;
  return 0.9 - 0.12 * (a - 0.8) * (a - 0.8) - 0.1 * (b - 0.6) * (b - 0.6) - 0.08 * c * c -
         0.05 * std::abs(std::log(r) - std::log(4.0)) / std::log(100.0) + 0.03 * a * b;
}

double GridOptimum(int epochs) {
  double best = -std::numeric_limits<double>::infinity();
  for (double a : kFractionGrid)
    for (double b : kFractionGrid)
      for (double c : kFractionGrid)
        for (int r : RegenerationChoices(epochs)) {
          AggregationPlan p{{{"a", a}, {"b", b}, {"c", c}}, r};
          if (p.AllZero()) continue;
          best = std::max(best, Stub(p));
        }
  return best;
}

TEST(PlanSearch, StubbedGridOracle) {
  const double optimum = GridOptimum(100);
  int hits = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    DdaOptions options;
    int calls = 0;
    auto search = OptimizePlanWith(
        {"a", "b", "c"}, 100,
        [&](const AggregationPlan& p, hpo::TrialContext&) {
          ++calls;
          return Stub(p);
        },
        options, RngStream(seed, "dda"));
    EXPECT_EQ(search.study.trials().size(), 50u);
    EXPECT_LE(calls, 50);
    EXPECT_EQ(search.value, Stub(search.plan));
    if (search.value >= optimum * 0.98) ++hits;
  }
  EXPECT_GE(hits, 18);
}

TEST(PlanSearch, AllZeroPlansScoreZero) {
  int calls = 0;
  DdaOptions options;
  options.budget = 30;
  auto search = OptimizePlanWith(
      {"only"}, 4,
      [&](const AggregationPlan& p, hpo::TrialContext&) {
        ++calls;
        EXPECT_FALSE(p.AllZero());
        return 1.0;
      },
      options, RngStream(1, "dda"));
  int zero_trials = 0;
  for (const auto& t : search.study.trials())
    if (t.params[0] == 0.0) {
      ++zero_trials;
      EXPECT_EQ(*t.Value(), 0.0);
    }
  EXPECT_EQ(calls + zero_trials, 30);
  EXPECT_FALSE(search.plan.AllZero());
}

// Pools whose feature 0 holds the true class: the clean pools label every row
// correctly, the noise pool draws labels uniformly at random.
Pool LabelledPool(int n, bool noisy, std::uint64_t seed) {
  Rng rng(seed);
  Matrix x(n, 2);
  Matrix y = Matrix::Zero(n, 3);
  for (int i = 0; i < n; ++i) {
    const int truth = i % 3;
    x(i, 0) = truth;
    x(i, 1) = rng.Normal();
    y(i, noisy ? static_cast<int>(rng.Below(3)) : truth) = 1.0;
  }
  return Pool{SoftDataset(x, y), static_cast<std::size_t>(n / 5)};
}

// Label purity of the aggregate plus a small bonus for more rows, so the grid
// optimum takes both clean pools in full and none of the noise.
double Purity(const AggregationPlan& plan, const PoolSet& pools) {
  auto agg = BuildAggregate(plan, pools, RngStream(0, "purity"));
  double agree = 0;
  for (Eigen::Index i = 0; i < agg.soft_labels().rows(); ++i)
    agree += ArgMax(agg.soft_labels().row(i)) == static_cast<int>(agg.features()(i, 0));
  std::size_t total = 0;
  for (const auto& [id, p] : pools) total += p.data.size();
  return agree / agg.size() - 0.05 * (1.0 - static_cast<double>(agg.size()) / total);
}

TEST(PlanSearch, NoisyPoolIsExcluded) {
  int excluded = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    PoolSet pools{{"clean1", LabelledPool(300, false, 100 + seed)},
                  {"clean2", LabelledPool(300, false, 200 + seed)},
                  {"noise", LabelledPool(300, true, 300 + seed)}};
    // Grid oracle: the best plan gives the noise pool nothing.
    double best = -1;
    double best_noise = -1;
    for (double a : kFractionGrid)
      for (double b : kFractionGrid)
        for (double c : kFractionGrid) {
          AggregationPlan p{{{"clean1", a}, {"clean2", b}, {"noise", c}}, 1};
          if (p.AllZero()) continue;
          const double v = Purity(p, pools);
          if (v > best) {
            best = v;
            best_noise = c;
          }
        }
    ASSERT_EQ(best_noise, 0.0);

    DdaOptions options;
    auto search = OptimizePlanWith(
        {"clean1", "clean2", "noise"}, 100,
        [&](const AggregationPlan& p, hpo::TrialContext&) { return Purity(p, pools); }, options,
        RngStream(seed, "dda"));
    EXPECT_EQ(search.study.trials().size(), 50u);
    if (search.plan.fractions.at("noise") <= 0.2) ++excluded;
  }
  EXPECT_GE(excluded, 16);
}

}  // namespace
}  // namespace fedkr::dda
