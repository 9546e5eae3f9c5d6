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

#include "fedkr/dataset.h"

#include <cmath>
#include <limits>
#include <string>

#include "fedkr/error.h"

namespace fedkr {

LabeledDataset::LabeledDataset(Matrix features, std::vector<int> labels,
                               int n_classes)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      n_classes_(n_classes) {
  if (n_classes_ <= 0) throw ValidationError("n_classes must be positive");
  if (static_cast<std::size_t>(features_.rows()) != labels_.size()) {
    throw ValidationError("feature rows (" + std::to_string(features_.rows()) +
                          ") != label count (" +
                          std::to_string(labels_.size()) + ")");
  }
  for (int label : labels_) {
    if (label < 0 || label >= n_classes_) {
      throw ValidationError("label " + std::to_string(label) +
                            " outside [0, " + std::to_string(n_classes_) + ")");
    }
  }
}

LabeledDataset LabeledDataset::Empty(int feature_dim, int n_classes) {
  return LabeledDataset(Matrix(0, feature_dim), {}, n_classes);
}

LabeledDataset LabeledDataset::Subset(
    std::span<const std::size_t> rows) const {
  Matrix x(static_cast<Eigen::Index>(rows.size()), features_.cols());
  std::vector<int> y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= size()) throw ValidationError("subset row out of range");
    x.row(static_cast<Eigen::Index>(i)) =
        features_.row(static_cast<Eigen::Index>(rows[i]));
    y[i] = labels_[rows[i]];
  }
  return LabeledDataset(std::move(x), std::move(y), n_classes_);
}

std::vector<std::size_t> LabeledDataset::ClassCounts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(n_classes_), 0);
  for (int label : labels_) ++counts[static_cast<std::size_t>(label)];
  return counts;
}

SoftDataset::SoftDataset(Matrix features, Matrix soft_labels,
                         double row_tolerance)
    : features_(std::move(features)), soft_labels_(std::move(soft_labels)) {
  if (features_.rows() != soft_labels_.rows()) {
    throw ValidationError("feature rows != soft label rows");
  }
  if (soft_labels_.cols() <= 0) {
    throw ValidationError("soft labels need at least one class");
  }
  if (!features_.allFinite()) {
    throw ValidationError("non-finite feature value");
  }
  for (Eigen::Index i = 0; i < soft_labels_.rows(); ++i) {
    double sum = 0.0;
    for (Eigen::Index c = 0; c < soft_labels_.cols(); ++c) {
      double p = soft_labels_(i, c);
      if (!std::isfinite(p) || p < 0.0) {
        throw ValidationError("soft label row " + std::to_string(i) +
                              " has a negative or non-finite entry");
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > row_tolerance) {
      throw ValidationError("soft label row " + std::to_string(i) +
                            " sums to " + std::to_string(sum));
    }
  }
}

SoftDataset SoftDataset::Empty(int feature_dim, int n_classes) {
  return SoftDataset(Matrix(0, feature_dim), Matrix(0, n_classes));
}

SoftDataset SoftDataset::OneHot(const LabeledDataset& data) {
  Matrix y = Matrix::Zero(static_cast<Eigen::Index>(data.size()),
                          data.n_classes());
  for (std::size_t i = 0; i < data.size(); ++i) {
    y(static_cast<Eigen::Index>(i), data.labels()[i]) = 1.0;
  }
  return SoftDataset(data.features(), std::move(y));
}

SoftDataset SoftDataset::Subset(std::span<const std::size_t> rows) const {
  Matrix x(static_cast<Eigen::Index>(rows.size()), features_.cols());
  Matrix y(static_cast<Eigen::Index>(rows.size()), soft_labels_.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= size()) throw ValidationError("subset row out of range");
    auto src = static_cast<Eigen::Index>(rows[i]);
    auto dst = static_cast<Eigen::Index>(i);
    x.row(dst) = features_.row(src);
    y.row(dst) = soft_labels_.row(src);
  }
  // Rows were validated on construction of *this.
  return SoftDataset(std::move(x), std::move(y),
                     std::numeric_limits<double>::infinity());
}

int ArgMax(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  int best = 0;
  for (Eigen::Index c = 1; c < row.size(); ++c) {
    if (row(c) > row(best)) best = static_cast<int>(c);
  }
  return best;
}

LabeledDataset Harden(const SoftDataset& soft) {
  std::vector<int> labels(soft.size());
  for (std::size_t i = 0; i < soft.size(); ++i) {
    labels[i] = ArgMax(soft.soft_labels().row(static_cast<Eigen::Index>(i)));
  }
  return LabeledDataset(soft.features(), std::move(labels), soft.n_classes());
}

SoftDataset Concat(std::span<const SoftDataset> datasets) {
  if (datasets.empty()) throw ValidationError("concat of an empty list");
  const int dim = datasets.front().feature_dim();
  const int classes = datasets.front().n_classes();
  Eigen::Index rows = 0;
  for (const auto& d : datasets) {
    if (d.feature_dim() != dim || d.n_classes() != classes) {
      throw ValidationError("concat: feature_dim/n_classes mismatch");
    }
    rows += static_cast<Eigen::Index>(d.size());
  }
  Matrix x(rows, dim);
  Matrix y(rows, classes);
  Eigen::Index at = 0;
  for (const auto& d : datasets) {
    auto n = static_cast<Eigen::Index>(d.size());
    x.middleRows(at, n) = d.features();
    y.middleRows(at, n) = d.soft_labels();
    at += n;
  }
  return SoftDataset(std::move(x), std::move(y),
                     std::numeric_limits<double>::infinity());
}

LabeledDataset Concat(std::span<const LabeledDataset> datasets) {
  if (datasets.empty()) throw ValidationError("concat of an empty list");
  const int dim = datasets.front().feature_dim();
  const int classes = datasets.front().n_classes();
  Eigen::Index rows = 0;
  for (const auto& d : datasets) {
    if (d.feature_dim() != dim || d.n_classes() != classes) {
      throw ValidationError("concat: feature_dim/n_classes mismatch");
    }
    rows += static_cast<Eigen::Index>(d.size());
  }
  Matrix x(rows, dim);
  std::vector<int> y;
  y.reserve(static_cast<std::size_t>(rows));
  Eigen::Index at = 0;
  for (const auto& d : datasets) {
    auto n = static_cast<Eigen::Index>(d.size());
    x.middleRows(at, n) = d.features();
    y.insert(y.end(), d.labels().begin(), d.labels().end());
    at += n;
  }
  return LabeledDataset(std::move(x), std::move(y), classes);
}

}  // namespace fedkr
