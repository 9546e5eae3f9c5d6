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
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "fedkr/classifier.h"
#include "fedkr/dataset.h"
#include "fedkr/error.h"
#include "fedkr/rng.h"
#include "fedkr/task.h"

namespace fedkr {
namespace {

LabeledDataset Rows(int n, int dim, int n_classes) {
  Matrix x(n, dim);
  std::vector<int> y(n);
  for (int i = 0; i < n; ++i) {
    for (int d = 0; d < dim; ++d) x(i, d) = i * 10 + d;
    y[i] = i % n_classes;
  }
  return LabeledDataset(x, y, n_classes);
}

TEST(Rng, StreamsAreReproducibleAndIndependent) {
  RngStream a(42, "member/7/generator");
  Rng r1 = a.Engine(), r2 = a.Engine();
  for (int i = 0; i < 100; ++i) EXPECT_EQ(r1.NextU64(), r2.NextU64());
  EXPECT_NE(RngStream(42, "x").DerivedSeed(), RngStream(43, "x").DerivedSeed());
  EXPECT_NE(RngStream(42, "x").DerivedSeed(), RngStream(42, "y").DerivedSeed());
  EXPECT_EQ(RngStream(1, "a").Child("b", 3).label(), RngStream(1, "a").Child("b").Child("3").label());
}

TEST(Rng, StableHashIsPinned) {
  // Values from an independent script (FNV-1a of the label, splitmix64
  // finalizer over splitmix64(seed) ^ hash).
  EXPECT_EQ(StableHash(1, "federation"), 0xfabc762fe5a81c79ULL);
  EXPECT_EQ(StableHash(42, "member/7/generator"), 0x57143517e5d6aa2eULL);
  EXPECT_EQ(StableHash(0, ""), 0x5b21f68ffa77f14cULL);
}

TEST(Rng, NormalMomentsAndBelowRange) {
  Rng rng(5);
  const int n = 200000;
  double s = 0, ss = 0;
  for (int i = 0; i < n; ++i) {
    double z = rng.Normal();
    s += z;
    ss += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(ss / n, 1.0, 0.02);
  std::vector<int> counts(7);
  for (int i = 0; i < 70000; ++i) counts[rng.Below(7)]++;
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
}

TEST(Rng, PermutationIsAPermutation) {
  Rng rng(3);
  auto p = rng.Permutation(50);
  std::vector<std::size_t> sorted = p;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
}

TEST(Dataset, RejectsBadLabels) {
  Matrix x(2, 1);
  x << 1, 2;
  EXPECT_THROW(LabeledDataset(x, {0, 2}, 2), ValidationError);
  EXPECT_THROW(LabeledDataset(x, {0}, 2), ValidationError);
  EXPECT_NO_THROW(LabeledDataset(x, {0, 1}, 2));
}

TEST(Dataset, SoftRowsMustSumToOne) {
  Matrix x = Matrix::Zero(2, 1);
  Matrix y(2, 2);
  y << 0.5, 0.5, 0.7, 0.4;
  EXPECT_THROW(SoftDataset(x, y), ValidationError);
  y(1, 1) = 0.3;
  EXPECT_NO_THROW(SoftDataset(x, y));
  y(1, 0) = -0.1;
  y(1, 1) = 1.1;
  EXPECT_THROW(SoftDataset(x, y), ValidationError);
}

TEST(Dataset, ArgMaxAndHarden) {
  Eigen::RowVectorXd r(3);
  r << 0.1, 0.7, 0.2;
  EXPECT_EQ(ArgMax(r), 1);
  Eigen::RowVectorXd tie(2);
  tie << 0.5, 0.5;
  EXPECT_EQ(ArgMax(tie), 0);

  Matrix y(2, 3);
  y << 0.1, 0.7, 0.2, 0.4, 0.2, 0.4;
  SoftDataset soft(Matrix::Zero(2, 2), y);
  auto hard = Harden(soft);
  EXPECT_EQ(hard.labels(), (std::vector<int>{1, 0}));
}

TEST(Dataset, OneHotRoundTrip) {
  auto data = Rows(9, 2, 3);
  auto soft = SoftDataset::OneHot(data);
  EXPECT_EQ(Harden(soft).labels(), data.labels());
  EXPECT_EQ(soft.features(), data.features());
}

TEST(Dataset, Concat) {
  auto a = Rows(5, 2, 2), b = Rows(3, 2, 2);
  std::vector<LabeledDataset> both{a, b};
  auto c = Concat(std::span<const LabeledDataset>(both));
  ASSERT_EQ(c.size(), 8u);
  EXPECT_EQ(Matrix(c.features().topRows(5)), a.features());
  std::vector<LabeledDataset> one{a};
  auto same = Concat(std::span<const LabeledDataset>(one));
  EXPECT_EQ(same.features(), a.features());
  EXPECT_EQ(same.labels(), a.labels());
  std::vector<LabeledDataset> none;
  EXPECT_THROW(Concat(std::span<const LabeledDataset>(none)), ValidationError);
  std::vector<LabeledDataset> mismatch{a, Rows(2, 3, 2)};
  EXPECT_THROW(Concat(std::span<const LabeledDataset>(mismatch)), ValidationError);
}

TEST(Task, SeparableTaskIsLearnable) {
  TaskSpec spec;
  spec.feature_dim = 2;
  spec.n_classes = 2;
  spec.n_clusters_per_class = 1;
  spec.class_separation = 10.0;
  spec.noise_scale = 0.1;
  spec.n_members = 1;
  spec.samples_per_member = {60, 20, 20};
  auto data = MakeTask(spec, RngStream(1, "task"));
  ASSERT_EQ(data.size(), 100u);
  TrainConfig cfg;
  cfg.rng = RngStream(1, "fit");
  auto model = FitClassifier(SoftDataset::OneHot(data), cfg);
  EXPECT_GE(Accuracy(model, data), 0.99);
}

TEST(Task, OverwhelmingNoiseGivesChanceAccuracy) {
  TaskSpec spec;
  spec.noise_scale = 1e4;
  spec.n_members = 1;
  spec.samples_per_member = {400, 100, 400};
  auto data = MakeTask(spec, RngStream(2, "task"));
  auto split = SplitTvt(data, {0.45, 0.1, 0.45}, RngStream(2, "split"));
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.rng = RngStream(2, "fit");
  auto model = FitClassifier(SoftDataset::OneHot(split.train), cfg);
  EXPECT_NEAR(Accuracy(model, split.test), 0.25, 0.1);
}

TEST(Task, BalancedAndDeterministic) {
  TaskSpec spec;
  spec.n_members = 3;
  auto a = MakeTask(spec, RngStream(9, "task"));
  auto b = MakeTask(spec, RngStream(9, "task"));
  EXPECT_EQ(a.features(), b.features());
  EXPECT_EQ(a.labels(), b.labels());
  ASSERT_EQ(a.size(), static_cast<std::size_t>(spec.total_samples()));
  auto counts = a.ClassCounts();
  auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  EXPECT_LE(*hi - *lo, 1u);
}

TEST(Task, CentroidsAtLeastSeparationApart) {
  TaskSpec spec;
  spec.feature_dim = 3;
  spec.n_classes = 2;
  spec.n_clusters_per_class = 2;
  spec.noise_scale = 1e-6;
  spec.n_members = 1;
  spec.samples_per_member = {200, 50, 50};
  auto data = MakeTask(spec, RngStream(4, "task"));
  // With negligible noise every row sits on a centroid.
  std::vector<Eigen::RowVectorXd> centroids;
  for (Eigen::Index i = 0; i < data.features().rows(); ++i) {
    Eigen::RowVectorXd row = data.features().row(i);
    bool seen = false;
    for (const auto& c : centroids) seen |= (c - row).norm() < 1e-3;
    if (!seen) centroids.push_back(row);
  }
  EXPECT_EQ(centroids.size(), 4u);
  for (std::size_t i = 0; i < centroids.size(); ++i)
    for (std::size_t j = i + 1; j < centroids.size(); ++j)
      EXPECT_GE((centroids[i] - centroids[j]).norm(), spec.class_separation - 1e-3);
}

TEST(Task, SplitFederationSizes) {
  auto data = Rows(2000, 1, 2);
  auto shards = SplitFederation(data, 20, RngStream(1, "split"));
  ASSERT_EQ(shards.size(), 20u);
  std::set<double> seen;
  for (const auto& s : shards) {
    EXPECT_EQ(s.size(), 100u);
    for (Eigen::Index i = 0; i < s.features().rows(); ++i) seen.insert(s.features()(i, 0));
  }
  EXPECT_EQ(seen.size(), 2000u);  // disjoint and exhaustive

  auto odd = SplitFederation(Rows(101, 1, 2), 2, RngStream(1, "split"));
  EXPECT_EQ(odd[0].size(), 51u);
  EXPECT_EQ(odd[1].size(), 50u);

  auto whole = SplitFederation(data, 1, RngStream(1, "split"));
  ASSERT_EQ(whole.size(), 1u);
  std::vector<double> a(data.features().data(), data.features().data() + 2000);
  std::vector<double> b(whole[0].features().data(), whole[0].features().data() + 2000);
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  EXPECT_EQ(a, b);
}

// Largest-remainder oracle written independently of the library.
std::array<std::size_t, 3> LargestRemainder(std::size_t n, std::array<double, 3> r) {
  std::array<std::size_t, 3> out{};
  std::array<double, 3> frac{};
  std::size_t used = 0;
  for (int i = 0; i < 3; ++i) {
    double exact = n * r[i];
    out[i] = static_cast<std::size_t>(std::floor(exact));
    frac[i] = exact - out[i];
    used += out[i];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; k < n - used; ++k) out[order[k]]++;
  return out;
}

TEST(Task, TvtSizes) {
  EXPECT_EQ(TvtSizes(100, {0.6, 0.2, 0.2}), (std::array<std::size_t, 3>{60, 20, 20}));
  EXPECT_EQ(TvtSizes(10, {0.5, 0.25, 0.25}), (std::array<std::size_t, 3>{5, 3, 2}));
  for (std::size_t n = 3; n < 80; ++n) {
    EXPECT_EQ(TvtSizes(n, {0.6, 0.2, 0.2}), LargestRemainder(n, {0.6, 0.2, 0.2})) << n;
    EXPECT_EQ(TvtSizes(n, {0.7, 0.15, 0.15}), LargestRemainder(n, {0.7, 0.15, 0.15})) << n;
  }
  EXPECT_THROW(TvtSizes(10, {0.5, 0.5, 0.5}), ValidationError);
}

TEST(Task, SplitTvtPartitions) {
  auto data = Rows(50, 1, 5);
  auto s = SplitTvt(data, {0.6, 0.2, 0.2}, RngStream(3, "tvt"));
  EXPECT_EQ(s.train.size(), 30u);
  EXPECT_EQ(s.val.size(), 10u);
  EXPECT_EQ(s.test.size(), 10u);
  std::set<double> all;
  for (const auto* part : {&s.train, &s.val, &s.test})
    for (Eigen::Index i = 0; i < part->features().rows(); ++i) all.insert(part->features()(i, 0));
  EXPECT_EQ(all.size(), 50u);
  EXPECT_THROW(SplitTvt(Rows(2, 1, 2), {0.6, 0.2, 0.2}, RngStream(3, "tvt")), ValidationError);
}

TEST(Task, ValidateRejectsNonPositive) {
  TaskSpec spec;
  spec.class_separation = 0;
  EXPECT_THROW(spec.Validate(), ValidationError);
  spec = TaskSpec{};
  spec.samples_per_member.val = 0;
  EXPECT_THROW(spec.Validate(), ValidationError);
}

}  // namespace
}  // namespace fedkr
