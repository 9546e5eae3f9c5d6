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

#include "fedkr/task.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "fedkr/error.h"

namespace fedkr {
namespace {

// Distinct hypercube vertices with coordinates +-edge/2.
std::vector<Vector> HypercubeCentroids(int count, int dim, double edge,
                                       Rng& rng) {
  const bool enumerable = dim < 63;
  if (enumerable && static_cast<unsigned long long>(count) > (1ULL << dim)) {
    throw ValidationError("feature_dim " + std::to_string(dim) +
                          " cannot host " + std::to_string(count) +
                          " distinct centroids");
  }
  std::set<std::vector<bool>> used;
  std::vector<Vector> centroids;
  while (static_cast<int>(centroids.size()) < count) {
    std::vector<bool> bits(static_cast<std::size_t>(dim));
    for (int d = 0; d < dim; ++d) bits[static_cast<std::size_t>(d)] = rng.Below(2) == 1;
    if (!used.insert(bits).second) continue;
    Vector c(dim);
    for (int d = 0; d < dim; ++d) {
      c(d) = bits[static_cast<std::size_t>(d)] ? 0.5 * edge : -0.5 * edge;
    }
    centroids.push_back(std::move(c));
  }
  return centroids;
}

}  // namespace

void TaskSpec::Validate() const {
  auto positive = [](bool ok, const char* what) {
    if (!ok) throw ValidationError(std::string(what) + " must be positive");
  };
  positive(feature_dim > 0, "feature_dim");
  positive(n_classes > 0, "n_classes");
  positive(n_clusters_per_class > 0, "n_clusters_per_class");
  positive(class_separation > 0.0 && std::isfinite(class_separation),
           "class_separation");
  positive(noise_scale > 0.0 && std::isfinite(noise_scale), "noise_scale");
  positive(samples_per_member.train > 0, "samples_per_member.train");
  positive(samples_per_member.val > 0, "samples_per_member.val");
  positive(samples_per_member.test > 0, "samples_per_member.test");
  positive(n_members > 0, "n_members");
}

LabeledDataset MakeTask(const TaskSpec& spec, const RngStream& rng) {
  spec.Validate();
  Rng centroid_rng = rng.Child("centroids").Engine();
  const int n_centroids = spec.n_classes * spec.n_clusters_per_class;
  std::vector<Vector> centroids = HypercubeCentroids(
      n_centroids, spec.feature_dim, spec.class_separation, centroid_rng);

  const auto total = static_cast<std::size_t>(spec.total_samples());
  const auto k = static_cast<std::size_t>(spec.n_classes);
  std::vector<int> labels;
  labels.reserve(total);
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t count = total / k + (c < total % k ? 1 : 0);
    labels.insert(labels.end(), count, static_cast<int>(c));
  }

  Rng sample_rng = rng.Child("samples").Engine();
  sample_rng.Shuffle(labels);
  Matrix x(static_cast<Eigen::Index>(total), spec.feature_dim);
  for (std::size_t i = 0; i < total; ++i) {
    auto cluster = static_cast<int>(
        sample_rng.Below(static_cast<std::size_t>(spec.n_clusters_per_class)));
    const Vector& mu =
        centroids[static_cast<std::size_t>(labels[i] * spec.n_clusters_per_class +
                                           cluster)];
    for (int d = 0; d < spec.feature_dim; ++d) {
      x(static_cast<Eigen::Index>(i), d) =
          mu(d) + spec.noise_scale * sample_rng.Normal();
    }
  }
  return LabeledDataset(std::move(x), std::move(labels), spec.n_classes);
}

std::vector<LabeledDataset> SplitFederation(const LabeledDataset& data,
                                            int n_members,
                                            const RngStream& rng) {
  if (n_members < 1) throw ValidationError("n_members must be >= 1");
  const auto members = static_cast<std::size_t>(n_members);
  if (members > data.size()) {
    throw ValidationError("cannot split " + std::to_string(data.size()) +
                          " samples across " + std::to_string(n_members) +
                          " members");
  }
  Rng engine = rng.Engine();
  std::vector<std::size_t> order = engine.Permutation(data.size());
  std::vector<LabeledDataset> shards;
  shards.reserve(members);
  std::size_t at = 0;
  for (std::size_t m = 0; m < members; ++m) {
    std::size_t len = data.size() / members + (m < data.size() % members ? 1 : 0);
    shards.push_back(data.Subset(std::span(order).subspan(at, len)));
    at += len;
  }
  return shards;
}

std::array<std::size_t, 3> TvtSizes(std::size_t n,
                                    const std::array<double, 3>& ratios) {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r > 0.0) || !std::isfinite(r)) {
      throw ValidationError("train/val/test ratios must all be positive");
    }
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ValidationError("train/val/test ratios must sum to 1");
  }
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    double quota = ratios[i] * static_cast<double>(n);
    double whole = std::floor(quota);
    sizes[i] = static_cast<std::size_t>(whole);
    remainder[i] = quota - whole;
    assigned += sizes[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return remainder[a] > remainder[b];
  });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++sizes[order[i % 3]];
  return sizes;
}

TvtSplit SplitTvt(const LabeledDataset& data,
                  const std::array<double, 3>& ratios, const RngStream& rng) {
  auto sizes = TvtSizes(data.size(), ratios);
  for (std::size_t s : sizes) {
    if (s == 0) {
      throw ValidationError("train/val/test split leaves an empty part for " +
                            std::to_string(data.size()) + " samples");
    }
  }
  Rng engine = rng.Engine();
  std::vector<std::size_t> order = engine.Permutation(data.size());
  std::span<const std::size_t> all(order);
  return TvtSplit{
      data.Subset(all.subspan(0, sizes[0])),
      data.Subset(all.subspan(sizes[0], sizes[1])),
      data.Subset(all.subspan(sizes[0] + sizes[1], sizes[2])),
  };
}

}  // namespace fedkr
