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
#include <numeric>

#include <gtest/gtest.h>

#include "fedkr/classifier.h"
#include "fedkr/error.h"
#include "fedkr/generator.h"
#include "fedkr/task.h"

namespace fedkr {
namespace {

LabeledDataset Separable(std::uint64_t seed, int per_member = 100) {
  TaskSpec spec;
  spec.feature_dim = 2;
  spec.n_classes = 2;
  spec.n_clusters_per_class = 1;
  spec.class_separation = 10.0;
  spec.noise_scale = 0.1;
  spec.n_members = 1;
  spec.samples_per_member = {per_member, 1, 1};
  return MakeTask(spec, RngStream(seed, "task"));
}

SoftDataset RandomSoft(int n, int dim, int classes, std::uint64_t seed) {
  Rng rng(seed);
  Matrix x(n, dim), y(n, classes);
  for (int i = 0; i < n; ++i) {
    for (int d = 0; d < dim; ++d) x(i, d) = rng.Normal();
    double s = 0;
    for (int c = 0; c < classes; ++c) s += y(i, c) = rng.Uniform(0.05, 1.0);
    y.row(i) /= s;
  }
  return SoftDataset(x, y);
}

TEST(Classifier, AnalyticGradientMatchesFiniteDifferences) {
  auto data = RandomSoft(17, 5, 3, 11);
  auto model = ClassifierModel::Initialize(5, 7, 3, RngStream(2, "init"));
  Gradients g;
  SoftCrossEntropy(model, data.features(), data.soft_labels(), &g);
  std::vector<double> analytic;
  for (const auto* m : {&g.w1}) analytic.insert(analytic.end(), m->data(), m->data() + m->size());
  analytic.insert(analytic.end(), g.b1.data(), g.b1.data() + g.b1.size());
  analytic.insert(analytic.end(), g.w2.data(), g.w2.data() + g.w2.size());
  analytic.insert(analytic.end(), g.b2.data(), g.b2.data() + g.b2.size());

  auto params = model.Flatten();
  ASSERT_EQ(params.size(), analytic.size());
  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto plus = params, minus = params;
    plus[i] += h;
    minus[i] -= h;
    ClassifierModel mp = model, mm = model;
    mp.Unflatten(plus);
    mm.Unflatten(minus);
    const double numeric = (SoftCrossEntropy(mp, data.features(), data.soft_labels()) -
                            SoftCrossEntropy(mm, data.features(), data.soft_labels())) /
                           (2 * h);
    const double scale = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-6});
    worst = std::max(worst, std::abs(numeric - analytic[i]) / scale);
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Classifier, SoftmaxProperties) {
  Matrix logits(3, 4);
  logits << 1, 2, 3, 4, -1000, 0, 1000, 5, 0, 0, 0, 0;
  Matrix p = Softmax(logits);
  EXPECT_TRUE(p.allFinite());
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-12);
  EXPECT_TRUE((p.row(0).array() > 0).all() && (p.row(0).array() < 1).all());
  Matrix shifted = Softmax((logits.array() + 123.0).matrix());
  EXPECT_LT((shifted - p).cwiseAbs().maxCoeff(), 1e-12);

  auto zero = ClassifierModel::Zeros(3, 5, 4);
  Matrix x = Matrix::Random(6, 3);
  Matrix u = zero.PredictProba(x);
  for (Eigen::Index i = 0; i < u.size(); ++i) EXPECT_EQ(u.data()[i], 0.25);
  EXPECT_THROW(zero.PredictProba(Matrix::Zero(2, 4)), ValidationError);
}

TEST(Classifier, LearnsSeparableTask) {
  auto data = Separable(1);
  TrainConfig cfg;
  cfg.rng = RngStream(1, "fit");
  auto model = FitClassifier(SoftDataset::OneHot(data), cfg);
  EXPECT_GE(Accuracy(model, data), 0.99);
}

TEST(Classifier, UniformTargetsGiveUniformPredictions) {
  auto data = Separable(2);
  Matrix uniform = Matrix::Constant(static_cast<Eigen::Index>(data.size()), 2, 0.5);
  TrainConfig cfg;
  cfg.rng = RngStream(2, "fit");
  auto model = FitClassifier(SoftDataset(data.features(), uniform), cfg);
  Eigen::RowVectorXd mean = model.PredictProba(data.features()).colwise().mean();
  EXPECT_NEAR(mean(0), 0.5, 0.05);
  EXPECT_NEAR(mean(1), 0.5, 0.05);
}

TEST(Classifier, TrainingIsBitReproducible) {
  auto data = SoftDataset::OneHot(Separable(3));
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.rng = RngStream(3, "fit");
  EXPECT_TRUE(FitClassifier(data, cfg) == FitClassifier(data, cfg));
  TrainConfig other = cfg;
  other.rng = RngStream(4, "fit");
  EXPECT_FALSE(FitClassifier(data, cfg) == FitClassifier(data, other));
}

TEST(Classifier, SplitRunsFollowOneSchedule) {
  auto data = SoftDataset::OneHot(Separable(5));
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.rng = RngStream(5, "fit");
  ClassifierTrainer whole(ClassifierModel::Initialize(2, 64, 2, cfg.rng.Child("init")), cfg);
  ClassifierTrainer split(ClassifierModel::Initialize(2, 64, 2, cfg.rng.Child("init")), cfg);
  for (int e = 0; e < 6; ++e) whole.RunEpoch(data);
  for (int e = 0; e < 3; ++e) split.RunEpoch(data);
  split.SetModel(ClassifierModel(split.model()));
  for (int e = 0; e < 3; ++e) split.RunEpoch(data);
  EXPECT_TRUE(whole.model() == split.model());
  EXPECT_EQ(whole.epochs_done(), 6);
  EXPECT_DOUBLE_EQ(whole.LearningRate(0), 0.05);
  EXPECT_NEAR(whole.LearningRate(3), 0.025, 1e-15);
  EXPECT_THROW(split.SetModel(ClassifierModel::Zeros(2, 3, 2)), ValidationError);
}

TEST(Classifier, AccuracyExamples) {
  // Balanced 4-class labels; a zero model predicts class 0 everywhere.
  Matrix x = Matrix::Random(40, 3);
  std::vector<int> y(40);
  for (int i = 0; i < 40; ++i) y[i] = (i * 7) % 4;
  LabeledDataset data(x, y, 4);
  EXPECT_EQ(Accuracy(ClassifierModel::Zeros(3, 2, 4), data), 0.25);

  auto sep = Separable(6);
  TrainConfig cfg;
  cfg.rng = RngStream(6, "fit");
  auto model = FitClassifier(SoftDataset::OneHot(sep), cfg);
  std::vector<int> predicted;
  Matrix p = model.PredictProba(sep.features());
  for (Eigen::Index i = 0; i < p.rows(); ++i) predicted.push_back(ArgMax(p.row(i)));
  EXPECT_EQ(Accuracy(model, LabeledDataset(sep.features(), predicted, 2)), 1.0);
  EXPECT_THROW(Accuracy(model, LabeledDataset::Empty(2, 2)), ValidationError);
}

TEST(Classifier, FedAvgCombine) {
  auto a = ClassifierModel::Initialize(3, 4, 2, RngStream(1, "a"));
  auto b = ClassifierModel::Initialize(3, 4, 2, RngStream(1, "b"));
  std::vector<ClassifierModel> same{a, a, a};
  std::vector<double> w3{1, 2, 3};
  auto idem = FedAvgCombine(same, w3);
  auto pa = a.Flatten(), pi = idem.Flatten();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_NEAR(pi[i], pa[i], 1e-15);

  std::vector<ClassifierModel> two{a, b};
  std::vector<double> first{1, 0};
  EXPECT_TRUE(FedAvgCombine(two, first) == a);

  std::vector<double> n1{30, 70}, n2{60, 140};
  EXPECT_TRUE(FedAvgCombine(two, n1) == FedAvgCombine(two, n2));

  std::vector<double> equal{5, 5};
  auto mean = FedAvgCombine(two, equal).Flatten();
  auto pb = b.Flatten();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_NEAR(mean[i], 0.5 * (pa[i] + pb[i]), 1e-15);

  std::vector<ClassifierModel> mismatch{a, ClassifierModel::Zeros(3, 5, 2)};
  EXPECT_THROW(FedAvgCombine(mismatch, equal), ValidationError);
}

TEST(Classifier, SerializationRoundTrip) {
  auto m = ClassifierModel::Initialize(16, 64, 4, RngStream(8, "init"));
  auto bytes = SerializeModel(m);
  EXPECT_EQ(bytes.size(), 4 + 5 * 4 + m.parameter_count() * 8);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "FKRC");
  EXPECT_TRUE(DeserializeModel(bytes) == m);
  bytes.pop_back();
  EXPECT_THROW(DeserializeModel(bytes), ValidationError);
}

LabeledDataset GaussianClasses(const std::vector<Eigen::VectorXd>& means, double sd, int per_class,
                               std::uint64_t seed) {
  Rng rng(seed);
  const int dim = static_cast<int>(means[0].size());
  const int n = per_class * static_cast<int>(means.size());
  Matrix x(n, dim);
  std::vector<int> y(n);
  for (int i = 0; i < n; ++i) {
    y[i] = i % static_cast<int>(means.size());
    for (int d = 0; d < dim; ++d) x(i, d) = means[y[i]](d) + sd * rng.Normal();
  }
  return LabeledDataset(x, y, static_cast<int>(means.size()));
}

TEST(Generator, RecoversKnownMean) {
  Eigen::VectorXd m0(3), m1(3);
  m0 << 1, -2, 0.5;
  m1 << -3, 0, 4;
  const int n = 400;
  const double sd = 0.7;
  auto data = GaussianClasses({m0, m1}, sd, n, 21);
  auto cps = FitGenerator(data, 1, 10, RngStream(1, "gen"));
  ASSERT_EQ(cps.size(), 10u);
  const auto& model = cps.back().model;
  const double tol = 3 * sd / std::sqrt(n);
  for (int d = 0; d < 3; ++d) {
    EXPECT_NEAR(model.components(0)[0].mean(d), m0(d), tol);
    EXPECT_NEAR(model.components(1)[0].mean(d), m1(d), tol);
  }
}

TEST(Generator, EmLogLikelihoodIsMonotone) {
  TaskSpec spec;
  spec.n_members = 1;
  spec.samples_per_member = {300, 1, 1};
  for (std::uint64_t seed : {1, 2, 3}) {
    auto data = MakeTask(spec, RngStream(seed, "task"));
    auto cps = FitGenerator(data, 3, 25, RngStream(seed, "gen"));
    for (int c = 0; c < data.n_classes(); ++c) {
      double prev = -std::numeric_limits<double>::infinity();
      for (const auto& cp : cps) {
        const double ll = ClassLogLikelihood(cp.model, data, c);
        EXPECT_GE(ll, prev - 1e-8) << "seed " << seed << " class " << c << " epoch " << cp.epoch_index;
        prev = ll;
      }
    }
  }
}

TEST(Generator, CheckpointsAndDeterminism) {
  auto data = Separable(3, 60);
  auto one = FitGenerator(data, 2, 1, RngStream(1, "gen"));
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].epoch_index, 1);
  auto a = FitGenerator(data, 2, 5, RngStream(1, "gen"));
  auto b = FitGenerator(data, 2, 5, RngStream(1, "gen"));
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].epoch_index, static_cast<int>(i) + 1);
    EXPECT_TRUE(a[i].model == b[i].model);
  }
  for (int c = 0; c < 2; ++c) {
    double w = 0;
    for (const auto& comp : a.back().model.components(c)) {
      w += comp.weight;
      EXPECT_TRUE((comp.stddev.array() >= kStddevFloor).all());
    }
    EXPECT_NEAR(w, 1.0, 1e-9);
  }
}

TEST(Generator, Preconditions) {
  Matrix x(3, 1);
  x << 0, 1, 2;
  LabeledDataset few(x, {0, 0, 1}, 2);
  EXPECT_THROW(FitGenerator(few, 2, 3, RngStream(1, "g")), ValidationError);
  x(0, 0) = std::nan("");
  LabeledDataset bad(x, {0, 1, 1}, 2);
  EXPECT_THROW(FitGenerator(bad, 1, 3, RngStream(1, "g")), ValidationError);
  EXPECT_THROW(FitGenerator(LabeledDataset::Empty(1, 2), 1, 3, RngStream(1, "g")), ValidationError);
}

GeneratorModel Fixed(const std::vector<double>& prior) {
  std::vector<std::vector<GaussianComponent>> comps;
  for (std::size_t c = 0; c < prior.size(); ++c) {
    GaussianComponent g;
    g.mean = Eigen::VectorXd::Constant(2, static_cast<double>(c));
    g.stddev = Eigen::VectorXd::Constant(2, 1.5);
    comps.push_back({g});
  }
  return GeneratorModel(comps, Eigen::Map<const Eigen::VectorXd>(prior.data(), prior.size()));
}

TEST(Generator, SampleClassFrequenciesFollowPrior) {
  auto g = Fixed({0.1, 0.3, 0.6});
  const std::size_t n = 20000;
  auto s = SampleGenerator(g, n, 1.0, RngStream(4, "sample"));
  ASSERT_EQ(s.size(), n);
  auto counts = s.ClassCounts();
  for (int c = 0; c < 3; ++c) {
    const double p = g.class_prior()(c);
    EXPECT_NEAR(counts[c] / double(n), p, 3 * std::sqrt(p * (1 - p) / n));
  }
  EXPECT_EQ(SampleGenerator(g, 0, 1.0, RngStream(4, "sample")).size(), 0u);
}

TEST(Generator, SigmaScalesVariance) {
  auto g = Fixed({0.5, 0.5});
  auto var = [&](double sigma) {
    auto s = SampleGenerator(g, 40000, sigma, RngStream(5, "sample"));
    double total = 0;
    int count = 0;
    for (Eigen::Index i = 0; i < s.features().rows(); ++i) {
      const double mu = s.labels()[i];
      for (int d = 0; d < 2; ++d) {
        total += (s.features()(i, d) - mu) * (s.features()(i, d) - mu);
        ++count;
      }
    }
    return total / count;
  };
  const double ratio = var(2.0) / var(1.0);
  EXPECT_NEAR(ratio, 4.0, 0.4);
}

}  // namespace
}  // namespace fedkr
