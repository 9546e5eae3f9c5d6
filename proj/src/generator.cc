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

#include "fedkr/generator.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "fedkr/error.h"

namespace fedkr {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

double ComponentLogDensity(const GaussianComponent& comp,
                           const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  double acc = 0.0;
  for (Eigen::Index d = 0; d < x.size(); ++d) {
    double z = (x(d) - comp.mean(d)) / comp.stddev(d);
    acc -= 0.5 * z * z + std::log(comp.stddev(d)) + kHalfLog2Pi;
  }
  return acc;
}

double LogSumExp(const std::vector<double>& v) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double x : v) hi = std::max(hi, x);
  if (!std::isfinite(hi)) return hi;
  double s = 0.0;
  for (double x : v) s += std::exp(x - hi);
  return hi + std::log(s);
}

// Class data is small (tens to hundreds of rows), so plain loops suffice.
class ClassMixtureFit {
 public:
  ClassMixtureFit(Matrix x, int k) : x_(std::move(x)), k_(k) {}

  void Initialize(Rng& rng) {
    const Eigen::Index n = x_.rows();
    const Eigen::Index dim = x_.cols();
    Vector mean = x_.colwise().mean().transpose();
    Vector stddev(dim);
    for (Eigen::Index d = 0; d < dim; ++d) {
      double var = (x_.col(d).array() - mean(d)).square().mean();
      stddev(d) = std::max(std::sqrt(var), kStddevFloor);
    }

    // k-means++ seeding of the component means.
    std::vector<Eigen::Index> centers;
    centers.push_back(static_cast<Eigen::Index>(rng.Below(static_cast<std::size_t>(n))));
    std::vector<double> dist2(static_cast<std::size_t>(n),
                              std::numeric_limits<double>::infinity());
    while (static_cast<int>(centers.size()) < k_) {
      const auto last = x_.row(centers.back());
      double total = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        double d2 = (x_.row(i) - last).squaredNorm();
        dist2[static_cast<std::size_t>(i)] =
            std::min(dist2[static_cast<std::size_t>(i)], d2);
        total += dist2[static_cast<std::size_t>(i)];
      }
      Eigen::Index next;
      if (total > 0.0) {
        next = static_cast<Eigen::Index>(rng.Categorical(dist2));
      } else {
        next = static_cast<Eigen::Index>(rng.Below(static_cast<std::size_t>(n)));
      }
      centers.push_back(next);
    }

    comps_.clear();
    for (Eigen::Index c : centers) {
      comps_.push_back(GaussianComponent{1.0 / k_, x_.row(c).transpose(), stddev});
    }
  }

  // One EM pass: responsibilities under the current parameters, then the
  // closed-form maximization with the stddev floor applied.
  void Step() {
    const Eigen::Index n = x_.rows();
    const Eigen::Index dim = x_.cols();
    Matrix resp(n, k_);
    std::vector<double> logs(static_cast<std::size_t>(k_));
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int k = 0; k < k_; ++k) {
        const auto& comp = comps_[static_cast<std::size_t>(k)];
        logs[static_cast<std::size_t>(k)] =
            comp.weight > 0.0
                ? std::log(comp.weight) + ComponentLogDensity(comp, x_.row(i))
                : -std::numeric_limits<double>::infinity();
      }
      double norm = LogSumExp(logs);
      for (int k = 0; k < k_; ++k) {
        resp(i, k) = std::exp(logs[static_cast<std::size_t>(k)] - norm);
      }
    }
    for (int k = 0; k < k_; ++k) {
      auto& comp = comps_[static_cast<std::size_t>(k)];
      double nk = resp.col(k).sum();
      comp.weight = nk / static_cast<double>(n);
      if (nk <= 1e-300) continue;  // keep the previous location
      Vector mean = (x_.transpose() * resp.col(k)) / nk;
      Vector stddev(dim);
      for (Eigen::Index d = 0; d < dim; ++d) {
        double var =
            (resp.col(k).array() * (x_.col(d).array() - mean(d)).square()).sum() /
            nk;
        stddev(d) = std::max(std::sqrt(var), kStddevFloor);
      }
      comp.mean = std::move(mean);
      comp.stddev = std::move(stddev);
    }
    double total = 0.0;
    for (const auto& comp : comps_) total += comp.weight;
    for (auto& comp : comps_) comp.weight /= total;
  }

  const std::vector<GaussianComponent>& components() const { return comps_; }

 private:
  Matrix x_;
  int k_;
  std::vector<GaussianComponent> comps_;
};

}  // namespace

GeneratorModel::GeneratorModel(
    std::vector<std::vector<GaussianComponent>> components, Vector class_prior)
    : components_(std::move(components)), class_prior_(std::move(class_prior)) {
  if (components_.empty()) throw ValidationError("generator has no classes");
  if (class_prior_.size() != static_cast<Eigen::Index>(components_.size())) {
    throw ValidationError("class_prior length != number of classes");
  }
  if ((class_prior_.array() < 0.0).any() ||
      std::abs(class_prior_.sum() - 1.0) > 1e-9) {
    throw ValidationError("class_prior must be a probability vector");
  }
  feature_dim_ = static_cast<int>(components_.front().front().mean.size());
  for (const auto& comps : components_) {
    if (comps.empty()) throw ValidationError("class without components");
    double total = 0.0;
    for (const auto& comp : comps) {
      if (comp.mean.size() != feature_dim_ || comp.stddev.size() != feature_dim_) {
        throw ValidationError("component dimension mismatch");
      }
      if (!(comp.stddev.array() > 0.0).all() || !comp.mean.allFinite()) {
        throw ValidationError("component stddev must be positive");
      }
      if (comp.weight < 0.0) throw ValidationError("negative mixture weight");
      total += comp.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw ValidationError("mixture weights must sum to 1");
    }
  }
}

double GeneratorModel::ClassLogDensity(
    int label, const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  const auto& comps = components(label);
  std::vector<double> logs;
  logs.reserve(comps.size());
  for (const auto& comp : comps) {
    logs.push_back(comp.weight > 0.0
                       ? std::log(comp.weight) + ComponentLogDensity(comp, x)
                       : -std::numeric_limits<double>::infinity());
  }
  return LogSumExp(logs);
}

bool operator==(const GeneratorModel& a, const GeneratorModel& b) {
  if (a.components_.size() != b.components_.size() ||
      a.class_prior_ != b.class_prior_) {
    return false;
  }
  for (std::size_t c = 0; c < a.components_.size(); ++c) {
    const auto& ca = a.components_[c];
    const auto& cb = b.components_[c];
    if (ca.size() != cb.size()) return false;
    for (std::size_t k = 0; k < ca.size(); ++k) {
      if (ca[k].weight != cb[k].weight || ca[k].mean != cb[k].mean ||
          ca[k].stddev != cb[k].stddev) {
        return false;
      }
    }
  }
  return true;
}

std::vector<GeneratorCheckpoint> FitGenerator(const LabeledDataset& data,
                                              int n_components, int epochs,
                                              const RngStream& rng) {
  if (data.empty()) throw ValidationError("generator needs training data");
  if (n_components < 1) throw ValidationError("n_components must be >= 1");
  if (epochs < 1) throw ValidationError("generator epochs must be >= 1");
  if (!data.features().allFinite()) {
    throw ValidationError("non-finite feature in generator training data");
  }
  const int classes = data.n_classes();
  const auto counts = data.ClassCounts();
  for (int c = 0; c < classes; ++c) {
    std::size_t count = counts[static_cast<std::size_t>(c)];
    if (count > 0 && count < static_cast<std::size_t>(n_components)) {
      throw ValidationError("class " + std::to_string(c) + " has " +
                            std::to_string(count) + " samples, fewer than " +
                            std::to_string(n_components) + " components");
    }
  }

  Vector prior(classes);
  for (int c = 0; c < classes; ++c) {
    prior(c) = static_cast<double>(counts[static_cast<std::size_t>(c)]) /
               static_cast<double>(data.size());
  }

  // Placeholder for absent classes: one component at the global moments.
  GaussianComponent placeholder;
  placeholder.mean = data.features().colwise().mean().transpose();
  placeholder.stddev = Vector::Constant(data.feature_dim(), 1.0);

  std::vector<ClassMixtureFit> fits;
  std::vector<bool> present(static_cast<std::size_t>(classes));
  for (int c = 0; c < classes; ++c) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (data.labels()[i] == c) rows.push_back(i);
    }
    present[static_cast<std::size_t>(c)] = !rows.empty();
    Matrix x = rows.empty() ? Matrix(0, data.feature_dim())
                            : data.Subset(rows).features();
    fits.emplace_back(std::move(x), n_components);
    if (!rows.empty()) {
      Rng init_rng = rng.Child("class", c).Engine();
      fits.back().Initialize(init_rng);
    }
  }

  std::vector<GeneratorCheckpoint> checkpoints;
  checkpoints.reserve(static_cast<std::size_t>(epochs));
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    std::vector<std::vector<GaussianComponent>> snapshot;
    for (int c = 0; c < classes; ++c) {
      if (present[static_cast<std::size_t>(c)]) {
        fits[static_cast<std::size_t>(c)].Step();
        snapshot.push_back(fits[static_cast<std::size_t>(c)].components());
      } else {
        snapshot.push_back({placeholder});
      }
    }
    checkpoints.push_back(
        GeneratorCheckpoint{epoch, GeneratorModel(std::move(snapshot), prior)});
  }
  return checkpoints;
}

LabeledDataset SampleGenerator(const GeneratorModel& model, std::size_t n,
                               double sigma, const RngStream& rng) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw ValidationError("generation sigma must be positive");
  }
  const int dim = model.feature_dim();
  std::vector<double> prior(model.class_prior().data(),
                            model.class_prior().data() + model.n_classes());
  std::vector<std::vector<double>> weights(static_cast<std::size_t>(model.n_classes()));
  for (int c = 0; c < model.n_classes(); ++c) {
    for (const auto& comp : model.components(c)) {
      weights[static_cast<std::size_t>(c)].push_back(comp.weight);
    }
  }

  Rng engine = rng.Engine();
  Matrix x(static_cast<Eigen::Index>(n), dim);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto c = static_cast<int>(engine.Categorical(prior));
    const auto& comp =
        model.components(c)[engine.Categorical(weights[static_cast<std::size_t>(c)])];
    for (int d = 0; d < dim; ++d) {
      x(static_cast<Eigen::Index>(i), d) =
          comp.mean(d) + sigma * comp.stddev(d) * engine.Normal();
    }
    labels[i] = c;
  }
  return LabeledDataset(std::move(x), std::move(labels), model.n_classes());
}

double ClassLogLikelihood(const GeneratorModel& model,
                          const LabeledDataset& data, int label) {
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels()[i] != label) continue;
    total += model.ClassLogDensity(label,
                                   data.features().row(static_cast<Eigen::Index>(i)));
  }
  return total;
}

}  // namespace fedkr
