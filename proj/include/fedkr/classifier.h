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

#ifndef FEDKR_CLASSIFIER_H_
#define FEDKR_CLASSIFIER_H_

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fedkr/dataset.h"
#include "fedkr/rng.h"

namespace fedkr {

enum class Activation : std::uint32_t { kTanh = 1 };
enum class LrSchedule { kConstant, kCosine };

// Two affine layers with a tanh hidden layer and a softmax output.
class ClassifierModel {
 public:
  // Glorot-uniform weights and zero biases drawn from `rng`.
  static ClassifierModel Initialize(int input_dim, int hidden_dim,
                                    int n_classes, const RngStream& rng);
  static ClassifierModel Zeros(int input_dim, int hidden_dim, int n_classes);

  int input_dim() const { return static_cast<int>(w1_.cols()); }
  int hidden_dim() const { return static_cast<int>(w1_.rows()); }
  int n_classes() const { return static_cast<int>(w2_.rows()); }
  Activation activation() const { return Activation::kTanh; }

  Matrix Logits(const Matrix& features) const;
  // Row-wise softmax of Logits(); throws ValidationError on a width mismatch.
  Matrix PredictProba(const Matrix& features) const;

  // Parameters in serialization order: w1 (row-major), b1, w2 (row-major), b2.
  std::vector<double> Flatten() const;
  void Unflatten(std::span<const double> params);
  std::size_t parameter_count() const;

  bool SameArchitecture(const ClassifierModel& other) const;
  bool AllFinite() const;

  friend bool operator==(const ClassifierModel& a, const ClassifierModel& b);

  Matrix& w1() { return w1_; }
  Vector& b1() { return b1_; }
  Matrix& w2() { return w2_; }
  Vector& b2() { return b2_; }
  const Matrix& w1() const { return w1_; }
  const Vector& b1() const { return b1_; }
  const Matrix& w2() const { return w2_; }
  const Vector& b2() const { return b2_; }

 private:
  ClassifierModel(int input_dim, int hidden_dim, int n_classes);

  Matrix w1_;  // hidden x input
  Vector b1_;
  Matrix w2_;  // classes x hidden
  Vector b2_;
};

// Row-wise softmax, stabilized by subtracting the row maximum.
Matrix Softmax(const Matrix& logits);

struct TrainConfig {
  int epochs = 100;
  int batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.0;
  LrSchedule lr_schedule = LrSchedule::kCosine;
  int hidden_dim = 64;
  RngStream rng;

  void Validate() const;
};

struct Gradients {
  Matrix w1;
  Vector b1;
  Matrix w2;
  Vector b2;
};

// Mean cross-entropy between softmax(model) and the soft targets, with its
// analytic gradient when `grad` is non-null.
double SoftCrossEntropy(const ClassifierModel& model, const Matrix& features,
                        const Matrix& targets, Gradients* grad = nullptr);

// Stateful mini-batch SGD over a fixed total epoch budget.
//
// The learning-rate schedule and the per-epoch shuffle depend only on the
// global epoch index, so a run split into several RunEpoch calls on different
// data behaves like one schedule.
class ClassifierTrainer {
 public:
  ClassifierTrainer(ClassifierModel initial, TrainConfig cfg);

  // One pass over `data`. Throws NumericalError if the loss is not finite.
  void RunEpoch(const SoftDataset& data);

  int epochs_done() const { return epoch_; }
  double last_loss() const { return last_loss_; }
  double LearningRate(int epoch) const;
  const ClassifierModel& model() const { return model_; }
  ClassifierModel TakeModel() { return std::move(model_); }
  // Swaps in new parameters; the epoch counter, and with it the schedule and
  // shuffling streams, carries on.
  void SetModel(ClassifierModel model);

 private:
  ClassifierModel model_;
  TrainConfig cfg_;
  Gradients velocity_;
  int epoch_ = 0;
  double last_loss_ = 0.0;
};

// Initializes from cfg.rng.Child("init") and trains for cfg.epochs.
ClassifierModel FitClassifier(const SoftDataset& data, const TrainConfig& cfg);

Matrix PredictProba(const ClassifierModel& model, const Matrix& features);

// Fraction of rows whose argmax prediction (lowest index on ties) equals the
// label. Throws on empty data.
double Accuracy(const ClassifierModel& model, const LabeledDataset& data);

// Per-sample cross-entropy of the hard labels.
std::vector<double> SampleLosses(const ClassifierModel& model,
                                 const LabeledDataset& data);

// Parameter-wise weighted mean; weights are normalized to sum to one.
ClassifierModel FedAvgCombine(std::span<const ClassifierModel> models,
                              std::span<const double> weights);

// Versioned little-endian binary layout:
//   "FKRC" | u32 format_version | u32 input_dim | u32 hidden_dim |
//   u32 n_classes | u32 activation | f64 params[...] in Flatten() order.
inline constexpr std::uint32_t kModelFormatVersion = 1;
std::vector<std::uint8_t> SerializeModel(const ClassifierModel& model);
ClassifierModel DeserializeModel(std::span<const std::uint8_t> bytes);

}  // namespace fedkr

#endif  // FEDKR_CLASSIFIER_H_
