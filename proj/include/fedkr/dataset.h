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

#ifndef FEDKR_DATASET_H_
#define FEDKR_DATASET_H_

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace fedkr {

using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Feature matrix with one hard class label per row.
class LabeledDataset {
 public:
  // Throws ValidationError unless every label lies in [0, n_classes) and the
  // label count matches the number of rows.
  LabeledDataset(Matrix features, std::vector<int> labels, int n_classes);

  static LabeledDataset Empty(int feature_dim, int n_classes);

  const Matrix& features() const { return features_; }
  const std::vector<int>& labels() const { return labels_; }
  int n_classes() const { return n_classes_; }
  int feature_dim() const { return static_cast<int>(features_.cols()); }
  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }

  // Rows in the given order; indices may repeat.
  LabeledDataset Subset(std::span<const std::size_t> rows) const;

  std::vector<std::size_t> ClassCounts() const;

 private:
  Matrix features_;
  std::vector<int> labels_;
  int n_classes_;
};

// Feature matrix with a class-probability vector per row.
class SoftDataset {
 public:
  static constexpr double kRowSumTolerance = 1e-6;

  // Rows of soft_labels must be non-negative and sum to one within
  // row_tolerance; all entries must be finite.
  SoftDataset(Matrix features, Matrix soft_labels,
              double row_tolerance = kRowSumTolerance);

  static SoftDataset Empty(int feature_dim, int n_classes);

  // One-hot encoding of a labelled dataset.
  static SoftDataset OneHot(const LabeledDataset& data);

  const Matrix& features() const { return features_; }
  const Matrix& soft_labels() const { return soft_labels_; }
  int n_classes() const { return static_cast<int>(soft_labels_.cols()); }
  int feature_dim() const { return static_cast<int>(features_.cols()); }
  std::size_t size() const { return static_cast<std::size_t>(features_.rows()); }
  bool empty() const { return features_.rows() == 0; }

  SoftDataset Subset(std::span<const std::size_t> rows) const;

 private:
  Matrix features_;
  Matrix soft_labels_;
};

// Argmax of each row; ties go to the lowest index.
int ArgMax(const Eigen::Ref<const Eigen::RowVectorXd>& row);

// Hard labels from soft labels (argmax, lowest index wins ties).
LabeledDataset Harden(const SoftDataset& soft);

// Row-wise concatenation in input order. Throws on an empty list or when
// feature_dim / n_classes disagree.
SoftDataset Concat(std::span<const SoftDataset> datasets);
LabeledDataset Concat(std::span<const LabeledDataset> datasets);

}  // namespace fedkr

#endif  // FEDKR_DATASET_H_
