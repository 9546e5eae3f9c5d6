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

#include "fedkr/classifier.h"

#include <bit>
#include <cmath>
#include <cstring>
#include <numbers>
#include <string>

#include "fedkr/error.h"

namespace fedkr {
namespace {

void CheckWidth(const ClassifierModel& model, const Matrix& features) {
  if (features.cols() != model.input_dim()) {
    throw ValidationError("feature width " + std::to_string(features.cols()) +
                          " != classifier input_dim " +
                          std::to_string(model.input_dim()));
  }
}

struct Forward {
  Matrix hidden;  // tanh activations
  Matrix logits;
};

// tanh through the vectorized exp; libm's scalar tanh dominated training time.
void TanhInPlace(Matrix& m) {
  auto a = m.array();
  a = 1.0 - 2.0 / ((2.0 * a).exp() + 1.0);
}

// Products are written as row axpy loops over contiguous rows, which the
// compiler vectorizes; Eigen's generic kernels are slow at these shapes.
Forward RunForward(const ClassifierModel& model, const Matrix& x) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d_in = model.input_dim();
  const Eigen::Index d_h = model.hidden_dim();
  const Eigen::Index d_out = model.n_classes();
  const Matrix w1t = model.w1().transpose();
  const Matrix w2t = model.w2().transpose();
  Forward f;
  f.hidden.resize(n, d_h);
  f.logits.resize(n, d_out);
  for (Eigen::Index i = 0; i < n; ++i) {
    double* h = f.hidden.row(i).data();
    const double* b1 = model.b1().data();
    for (Eigen::Index j = 0; j < d_h; ++j) h[j] = b1[j];
    for (Eigen::Index d = 0; d < d_in; ++d) {
      const double xd = x(i, d);
      const double* w = w1t.row(d).data();
      for (Eigen::Index j = 0; j < d_h; ++j) h[j] += xd * w[j];
    }
  }
  TanhInPlace(f.hidden);
  for (Eigen::Index i = 0; i < n; ++i) {
    double* o = f.logits.row(i).data();
    const double* h = f.hidden.row(i).data();
    for (Eigen::Index c = 0; c < d_out; ++c) o[c] = model.b2()(c);
    for (Eigen::Index j = 0; j < d_h; ++j) {
      const double hj = h[j];
      const double* w = w2t.row(j).data();
      for (Eigen::Index c = 0; c < d_out; ++c) o[c] += hj * w[c];
    }
  }
  return f;
}

Matrix LogSoftmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    double hi = logits.row(i).maxCoeff();
    double lse = hi + std::log((logits.row(i).array() - hi).exp().sum());
    out.row(i) = logits.row(i).array() - lse;
  }
  return out;
}

Gradients ZeroGradients(const ClassifierModel& m) {
  return Gradients{Matrix::Zero(m.w1().rows(), m.w1().cols()),
                   Vector::Zero(m.b1().size()),
                   Matrix::Zero(m.w2().rows(), m.w2().cols()),
                   Vector::Zero(m.b2().size())};
}

void PutU32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void PutF64(std::vector<std::uint8_t>& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

std::uint32_t GetU32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  return v;
}

double GetF64(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[at + i]) << (8 * i);
  return std::bit_cast<double>(v);
}

}  // namespace

ClassifierModel::ClassifierModel(int input_dim, int hidden_dim, int n_classes)
    : w1_(Matrix::Zero(hidden_dim, input_dim)),
      b1_(Vector::Zero(hidden_dim)),
      w2_(Matrix::Zero(n_classes, hidden_dim)),
      b2_(Vector::Zero(n_classes)) {}

ClassifierModel ClassifierModel::Zeros(int input_dim, int hidden_dim,
                                       int n_classes) {
  if (input_dim <= 0 || hidden_dim <= 0 || n_classes <= 0) {
    throw ValidationError("classifier dimensions must be positive");
  }
  return ClassifierModel(input_dim, hidden_dim, n_classes);
}

ClassifierModel ClassifierModel::Initialize(int input_dim, int hidden_dim,
                                            int n_classes,
                                            const RngStream& rng) {
  ClassifierModel m = Zeros(input_dim, hidden_dim, n_classes);
  Rng engine = rng.Engine();
  const double a1 = std::sqrt(6.0 / (input_dim + hidden_dim));
  for (Eigen::Index i = 0; i < m.w1_.size(); ++i) m.w1_.data()[i] = engine.Uniform(-a1, a1);
  const double a2 = std::sqrt(6.0 / (hidden_dim + n_classes));
  for (Eigen::Index i = 0; i < m.w2_.size(); ++i) m.w2_.data()[i] = engine.Uniform(-a2, a2);
  return m;
}

Matrix ClassifierModel::Logits(const Matrix& features) const {
  CheckWidth(*this, features);
  return RunForward(*this, features).logits;
}

Matrix ClassifierModel::PredictProba(const Matrix& features) const {
  return Softmax(Logits(features));
}

std::size_t ClassifierModel::parameter_count() const {
  return static_cast<std::size_t>(w1_.size() + b1_.size() + w2_.size() + b2_.size());
}

std::vector<double> ClassifierModel::Flatten() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  out.insert(out.end(), w1_.data(), w1_.data() + w1_.size());
  out.insert(out.end(), b1_.data(), b1_.data() + b1_.size());
  out.insert(out.end(), w2_.data(), w2_.data() + w2_.size());
  out.insert(out.end(), b2_.data(), b2_.data() + b2_.size());
  return out;
}

void ClassifierModel::Unflatten(std::span<const double> params) {
  if (params.size() != parameter_count()) {
    throw ValidationError("parameter vector has the wrong length");
  }
  const double* p = params.data();
  std::memcpy(w1_.data(), p, sizeof(double) * w1_.size());
  p += w1_.size();
  std::memcpy(b1_.data(), p, sizeof(double) * b1_.size());
  p += b1_.size();
  std::memcpy(w2_.data(), p, sizeof(double) * w2_.size());
  p += w2_.size();
  std::memcpy(b2_.data(), p, sizeof(double) * b2_.size());
}

bool ClassifierModel::SameArchitecture(const ClassifierModel& other) const {
  return input_dim() == other.input_dim() && hidden_dim() == other.hidden_dim() &&
         n_classes() == other.n_classes();
}

bool ClassifierModel::AllFinite() const {
  return w1_.allFinite() && b1_.allFinite() && w2_.allFinite() && b2_.allFinite();
}

bool operator==(const ClassifierModel& a, const ClassifierModel& b) {
  return a.SameArchitecture(b) && a.w1_ == b.w1_ && a.b1_ == b.b1_ &&
         a.w2_ == b.w2_ && a.b2_ == b.b2_;
}

Matrix Softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    double hi = logits.row(i).maxCoeff();
    auto e = (logits.row(i).array() - hi).exp();
    out.row(i) = e / e.sum();
  }
  return out;
}

void TrainConfig::Validate() const {
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ValidationError("momentum must lie in [0, 1)");
  }
  if (hidden_dim < 1) throw ValidationError("hidden_dim must be >= 1");
}

double SoftCrossEntropy(const ClassifierModel& model, const Matrix& features,
                        const Matrix& targets, Gradients* grad) {
  CheckWidth(model, features);
  const auto n = static_cast<double>(features.rows());
  Forward f = RunForward(model, features);
  Matrix log_p = LogSoftmax(f.logits);
  double loss = -(targets.array() * log_p.array()).sum() / n;
  if (grad != nullptr) {
    // d loss / d logits = (p - t) / n for targets whose rows sum to one.
    Matrix d_logits = (log_p.array().exp() - targets.array()) / n;
    const Eigen::Index rows = features.rows();
    const Eigen::Index d_in = model.input_dim();
    const Eigen::Index d_h = model.hidden_dim();
    const Eigen::Index d_out = model.n_classes();
    grad->w2.setZero(d_out, d_h);
    grad->w1.setZero(d_h, d_in);
    Matrix d_pre(rows, d_h);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const double* h = f.hidden.row(i).data();
      double* dp = d_pre.row(i).data();
      for (Eigen::Index j = 0; j < d_h; ++j) dp[j] = 0.0;
      for (Eigen::Index c = 0; c < d_out; ++c) {
        const double g = d_logits(i, c);
        double* gw2 = grad->w2.row(c).data();
        const double* w2 = model.w2().row(c).data();
        for (Eigen::Index j = 0; j < d_h; ++j) {
          gw2[j] += g * h[j];
          dp[j] += g * w2[j];
        }
      }
      for (Eigen::Index j = 0; j < d_h; ++j) dp[j] *= 1.0 - h[j] * h[j];
      const double* xi = features.row(i).data();
      for (Eigen::Index j = 0; j < d_h; ++j) {
        const double g = dp[j];
        double* gw1 = grad->w1.row(j).data();
        for (Eigen::Index d = 0; d < d_in; ++d) gw1[d] += g * xi[d];
      }
    }
    grad->b2 = d_logits.colwise().sum().transpose();
    grad->b1 = d_pre.colwise().sum().transpose();
  }
  return loss;
}

ClassifierTrainer::ClassifierTrainer(ClassifierModel initial, TrainConfig cfg)
    : model_(std::move(initial)), cfg_(std::move(cfg)) {
  cfg_.Validate();
  velocity_ = ZeroGradients(model_);
}

double ClassifierTrainer::LearningRate(int epoch) const {
  if (cfg_.lr_schedule == LrSchedule::kConstant) return cfg_.learning_rate;
  return 0.5 * cfg_.learning_rate *
         (1.0 + std::cos(std::numbers::pi * epoch / cfg_.epochs));
}

void ClassifierTrainer::RunEpoch(const SoftDataset& data) {
  if (data.empty()) throw ValidationError("cannot train on an empty dataset");
  if (data.feature_dim() != model_.input_dim() ||
      data.n_classes() != model_.n_classes()) {
    throw ValidationError("training data does not match classifier dimensions");
  }
  Rng engine = cfg_.rng.Child("epoch", epoch_).Engine();
  std::vector<std::size_t> order = engine.Permutation(data.size());
  const double lr = LearningRate(epoch_);
  const double mu = cfg_.momentum;
  const auto batch = static_cast<std::size_t>(cfg_.batch_size);

  Gradients g;
  Matrix xb, yb;
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < order.size(); start += batch) {
    const std::size_t len = std::min(batch, order.size() - start);
    xb.resize(static_cast<Eigen::Index>(len), data.feature_dim());
    yb.resize(static_cast<Eigen::Index>(len), data.n_classes());
    for (std::size_t i = 0; i < len; ++i) {
      auto src = static_cast<Eigen::Index>(order[start + i]);
      xb.row(static_cast<Eigen::Index>(i)) = data.features().row(src);
      yb.row(static_cast<Eigen::Index>(i)) = data.soft_labels().row(src);
    }
    double loss = SoftCrossEntropy(model_, xb, yb, &g);
    loss_sum += loss * static_cast<double>(len);
    velocity_.w1 = mu * velocity_.w1 - lr * g.w1;
    velocity_.b1 = mu * velocity_.b1 - lr * g.b1;
    velocity_.w2 = mu * velocity_.w2 - lr * g.w2;
    velocity_.b2 = mu * velocity_.b2 - lr * g.b2;
    model_.w1() += velocity_.w1;
    model_.b1() += velocity_.b1;
    model_.w2() += velocity_.w2;
    model_.b2() += velocity_.b2;
  }
  last_loss_ = loss_sum / static_cast<double>(order.size());
  if (!std::isfinite(last_loss_) || !model_.AllFinite()) {
    throw NumericalError("training diverged (non-finite loss) at epoch " +
                         std::to_string(epoch_));
  }
  ++epoch_;
}

void ClassifierTrainer::SetModel(ClassifierModel model) {
  if (!model.SameArchitecture(model_)) {
    throw ValidationError("replacement model has a different architecture");
  }
  model_ = std::move(model);
}

ClassifierModel FitClassifier(const SoftDataset& data, const TrainConfig& cfg) {
  cfg.Validate();
  if (data.empty()) throw ValidationError("cannot train on an empty dataset");
  ClassifierTrainer trainer(
      ClassifierModel::Initialize(data.feature_dim(), cfg.hidden_dim,
                                  data.n_classes(), cfg.rng.Child("init")),
      cfg);
  for (int e = 0; e < cfg.epochs; ++e) trainer.RunEpoch(data);
  return trainer.TakeModel();
}

Matrix PredictProba(const ClassifierModel& model, const Matrix& features) {
  return model.PredictProba(features);
}

double Accuracy(const ClassifierModel& model, const LabeledDataset& data) {
  if (data.empty()) throw ValidationError("accuracy of an empty dataset");
  if (data.n_classes() != model.n_classes()) {
    throw ValidationError("dataset n_classes != classifier n_classes");
  }
  Matrix p = model.PredictProba(data.features());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (ArgMax(p.row(static_cast<Eigen::Index>(i))) == data.labels()[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

std::vector<double> SampleLosses(const ClassifierModel& model,
                                 const LabeledDataset& data) {
  CheckWidth(model, data.features());
  Matrix log_p = LogSoftmax(RunForward(model, data.features()).logits);
  std::vector<double> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    out[i] = -log_p(static_cast<Eigen::Index>(i), data.labels()[i]);
  }
  return out;
}

ClassifierModel FedAvgCombine(std::span<const ClassifierModel> models,
                              std::span<const double> weights) {
  if (models.empty()) throw ValidationError("fedavg needs at least one model");
  if (models.size() != weights.size()) {
    throw ValidationError("fedavg: one weight per model required");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw ValidationError("fedavg weights must be non-negative");
    }
    total += w;
  }
  if (!(total > 0.0)) throw ValidationError("fedavg weights sum to zero");
  ClassifierModel out = ClassifierModel::Zeros(
      models[0].input_dim(), models[0].hidden_dim(), models[0].n_classes());
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (!models[i].SameArchitecture(models[0])) {
      throw ValidationError("fedavg: architecture mismatch");
    }
    if (weights[i] == 0.0) continue;
    const double w = weights[i] / total;
    out.w1() += w * models[i].w1();
    out.b1() += w * models[i].b1();
    out.w2() += w * models[i].w2();
    out.b2() += w * models[i].b2();
  }
  return out;
}

std::vector<std::uint8_t> SerializeModel(const ClassifierModel& model) {
  std::vector<std::uint8_t> out{'F', 'K', 'R', 'C'};
  PutU32(out, kModelFormatVersion);
  PutU32(out, static_cast<std::uint32_t>(model.input_dim()));
  PutU32(out, static_cast<std::uint32_t>(model.hidden_dim()));
  PutU32(out, static_cast<std::uint32_t>(model.n_classes()));
  PutU32(out, static_cast<std::uint32_t>(model.activation()));
  for (double v : model.Flatten()) PutF64(out, v);
  return out;
}

ClassifierModel DeserializeModel(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kHeader = 24;
  if (bytes.size() < kHeader || std::memcmp(bytes.data(), "FKRC", 4) != 0) {
    throw ValidationError("not a serialized classifier");
  }
  if (GetU32(bytes, 4) != kModelFormatVersion) {
    throw ValidationError("unsupported classifier format version " +
                          std::to_string(GetU32(bytes, 4)));
  }
  const auto input = GetU32(bytes, 8);
  const auto hidden = GetU32(bytes, 12);
  const auto classes = GetU32(bytes, 16);
  if (GetU32(bytes, 20) != static_cast<std::uint32_t>(Activation::kTanh)) {
    throw ValidationError("unknown activation tag");
  }
  ClassifierModel model = ClassifierModel::Zeros(
      static_cast<int>(input), static_cast<int>(hidden), static_cast<int>(classes));
  const std::size_t count = model.parameter_count();
  if (bytes.size() != kHeader + 8 * count) {
    throw ValidationError("serialized classifier has the wrong length");
  }
  std::vector<double> params(count);
  for (std::size_t i = 0; i < count; ++i) params[i] = GetF64(bytes, kHeader + 8 * i);
  model.Unflatten(params);
  return model;
}

}  // namespace fedkr
