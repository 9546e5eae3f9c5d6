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

#ifndef FEDKR_DDA_H_
#define FEDKR_DDA_H_

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedkr/classifier.h"
#include "fedkr/dataset.h"
#include "fedkr/hpo.h"

namespace fedkr::dda {

// Contribution fractions are searched on a 20% grid.
inline constexpr std::array<double, 6> kFractionGrid{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};

// Admissible regeneration counts: the divisors of the epoch budget.
std::vector<int> RegenerationChoices(int epochs);

// 6^n_members * |RegenerationChoices(epochs)|.
unsigned long long SearchSpaceCardinality(std::size_t n_members, int epochs);

// A downloaded synthetic dataset and the size of the real set behind it.
struct Pool {
  SoftDataset data;
  std::size_t real_size = 0;
};

using PoolSet = std::map<std::string, Pool>;

// Which size a fraction refers to.
enum class FractionBase {
  kPoolSize,  // the shared synthetic pool
  kRealSize,  // the contributor's real training set
};

enum class RegenerationMode {
  kPartition,  // one aggregate split into r equal parts
  kRedraw,     // a fresh draw of 1/r of the plan per segment
};

struct AggregationPlan {
  std::map<std::string, double> fractions;
  int regenerations = 1;

  // Every pool has a grid fraction, at least one is positive and r divides
  // `epochs`.
  void Validate(const PoolSet& pools, int epochs) const;
  bool AllZero() const;
  std::string ToString() const;

  friend bool operator==(const AggregationPlan&, const AggregationPlan&) = default;
};

struct DdaOptions {
  int budget = 50;
  int tuning_epochs = 50;
  FractionBase fraction_base = FractionBase::kPoolSize;
  RegenerationMode regeneration_mode = RegenerationMode::kPartition;
  hpo::StudyOptions study{.pruner = hpo::HyperbandConfig{5, 50, 3}};
};

// Number of rows drawn from `pool` for a fraction.
std::size_t DrawCount(double fraction, const Pool& pool, FractionBase base);

// Draws round(fraction * size) rows without replacement from every pool,
// concatenates them in member order and shuffles the result.
SoftDataset BuildAggregate(const AggregationPlan& plan, const PoolSet& pools,
                           const RngStream& rng,
                           FractionBase base = FractionBase::kPoolSize);

// Sizes of r random parts of n rows; the first n % r parts get one extra row.
std::vector<std::size_t> PartSizes(std::size_t n, int r);

// Parts used in each epoch. When r divides `epochs` every part is used for
// epochs / r consecutive epochs. Otherwise (tuning runs with a shorter budget)
// epoch e uses part floor(e * r / epochs) if r < epochs, or the parts in
// [floor(e * r / epochs), floor((e + 1) * r / epochs)) if r > epochs.
std::vector<std::vector<int>> EpochParts(int epochs, int r);

struct TrainResult {
  ClassifierModel model;
  double cas = 0.0;
};

// Builds the plan's aggregate and trains cfg.epochs epochs with model state
// carried across regeneration segments; the learning-rate schedule spans the
// whole run. Returns the model and its accuracy on val. Throws when
// cfg.epochs is not divisible by plan.regenerations.
TrainResult TrainWithRegeneration(const AggregationPlan& plan, const PoolSet& pools,
                                  const LabeledDataset& val, const TrainConfig& cfg,
                                  const DdaOptions& options = {});

// Full-budget training of the chosen plan.
ClassifierModel TrainFinal(const AggregationPlan& plan, const PoolSet& pools,
                           const TrainConfig& cfg, const DdaOptions& options = {});

using PlanObjective =
    std::function<double(const AggregationPlan&, hpo::TrialContext&)>;

struct PlanSearch {
  AggregationPlan plan;
  double value = 0.0;
  hpo::Study study;
};

// TPE + Hyperband over one grid dimension per member plus the regeneration
// count, for exactly options.budget trials. All-zero plans score 0 without
// calling the objective.
PlanSearch OptimizePlanWith(const std::vector<std::string>& member_ids,
                            int final_epochs, const PlanObjective& objective,
                            const DdaOptions& options, const RngStream& rng);

// The real objective: TrainWithRegeneration at options.tuning_epochs with the
// validation accuracy reported at each Hyperband rung.
PlanSearch OptimizePlan(const PoolSet& pools, const LabeledDataset& val,
                        const TrainConfig& cfg, const DdaOptions& options,
                        const RngStream& rng);

}  // namespace fedkr::dda

#endif  // FEDKR_DDA_H_
