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

#ifndef FEDKR_TASK_H_
#define FEDKR_TASK_H_

#include <array>
#include <vector>

#include "fedkr/dataset.h"
#include "fedkr/rng.h"

namespace fedkr {

struct SplitSizes {
  int train = 120;
  int val = 40;
  int test = 40;

  int total() const { return train + val + test; }
};

// Parameters of the procedural classification benchmark.
//
// Samples come from n_classes * n_clusters_per_class isotropic Gaussian
// clusters. Cluster centroids are distinct vertices of a hypercube with edge
// class_separation, so any two centroids are at least class_separation apart.
struct TaskSpec {
  int feature_dim = 16;
  int n_classes = 4;
  int n_clusters_per_class = 2;
  double class_separation = 2.0;
  double noise_scale = 1.25;
  SplitSizes samples_per_member;
  int n_members = 10;

  // Throws ValidationError on non-positive counts or scales.
  void Validate() const;
  int total_samples() const { return n_members * samples_per_member.total(); }
};

// n_members * (train + val + test) samples; per-class counts differ by at
// most one and rows are in random order.
LabeledDataset MakeTask(const TaskSpec& spec, const RngStream& rng);

// Disjoint shards of a uniformly random permutation. The first
// (n % n_members) shards receive one extra row.
std::vector<LabeledDataset> SplitFederation(const LabeledDataset& data,
                                            int n_members,
                                            const RngStream& rng);

struct TvtSplit {
  LabeledDataset train;
  LabeledDataset val;
  LabeledDataset test;
};

// Largest-remainder sizes for the given ratios; leftover rows go to the
// largest fractional parts with ties resolved train, then val, then test.
std::array<std::size_t, 3> TvtSizes(std::size_t n,
                                    const std::array<double, 3>& ratios);

// Random train/val/test split. Ratios must be positive and sum to one within
// 1e-9, and every part must end up non-empty.
TvtSplit SplitTvt(const LabeledDataset& data,
                  const std::array<double, 3>& ratios, const RngStream& rng);

}  // namespace fedkr

#endif  // FEDKR_TASK_H_
