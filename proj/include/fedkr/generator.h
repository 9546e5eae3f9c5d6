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

#ifndef FEDKR_GENERATOR_H_
#define FEDKR_GENERATOR_H_

#include <vector>

#include "fedkr/dataset.h"
#include "fedkr/rng.h"

namespace fedkr {

// Lower bound applied to every component standard deviation.
inline constexpr double kStddevFloor = 1e-3;

struct GaussianComponent {
  double weight = 1.0;
  Vector mean;
  Vector stddev;  // diagonal
};

// Class-conditional mixture of diagonal Gaussians.
//
// A class that was absent from the training data keeps a prior of zero and a
// single placeholder component; it is never sampled.
class GeneratorModel {
 public:
  GeneratorModel(std::vector<std::vector<GaussianComponent>> components,
                 Vector class_prior);

  int n_classes() const { return static_cast<int>(components_.size()); }
  int feature_dim() const { return feature_dim_; }
  const std::vector<GaussianComponent>& components(int label) const {
    return components_[static_cast<std::size_t>(label)];
  }
  const Vector& class_prior() const { return class_prior_; }

  // log p(x | class) under the class mixture.
  double ClassLogDensity(int label, const Eigen::Ref<const Eigen::RowVectorXd>& x) const;

  friend bool operator==(const GeneratorModel& a, const GeneratorModel& b);

 private:
  std::vector<std::vector<GaussianComponent>> components_;
  Vector class_prior_;
  int feature_dim_ = 0;
};

struct GeneratorCheckpoint {
  int epoch_index = 0;
  GeneratorModel model;
};

// Per-class EM for a diagonal Gaussian mixture, seeded with k-means++.
//
// Emits one checkpoint after each of `epochs` EM passes (epoch_index 1..N).
// class_prior is the empirical class frequency. Throws ValidationError when a
// class present in the data has fewer than n_components samples or when a
// feature is not finite.
std::vector<GeneratorCheckpoint> FitGenerator(const LabeledDataset& data,
                                              int n_components, int epochs,
                                              const RngStream& rng);

// Draws class ~ prior, component ~ weights, x = mean + sigma * stddev * eps.
LabeledDataset SampleGenerator(const GeneratorModel& model, std::size_t n,
                               double sigma, const RngStream& rng);

// Sum of log p(x | class) over the rows of `data` labelled `label`.
double ClassLogLikelihood(const GeneratorModel& model,
                          const LabeledDataset& data, int label);

}  // namespace fedkr

#endif  // FEDKR_GENERATOR_H_
