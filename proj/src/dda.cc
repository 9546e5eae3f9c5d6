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

#include "fedkr/dda.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include <spdlog/spdlog.h>

#include "fedkr/error.h"

namespace fedkr::dda {
namespace {

bool OnGrid(double fraction) {
  return std::find(kFractionGrid.begin(), kFractionGrid.end(), fraction) !=
         kFractionGrid.end();
}

SoftDataset DrawAggregate(const std::map<std::string, std::size_t>& counts,
                          const PoolSet& pools, const RngStream& rng) {
  std::vector<SoftDataset> pieces;
  for (const auto& [member, count] : counts) {
    if (count == 0) continue;
    const Pool& pool = pools.at(member);
    if (count > pool.data.size()) {
      throw ValidationError("plan asks for " + std::to_string(count) + " rows of " +
                            member + "'s pool of " + std::to_string(pool.data.size()));
    }
    Rng engine = rng.Child("pool/" + member).Engine();
    std::vector<std::size_t> order = engine.Permutation(pool.data.size());
    order.resize(count);
    pieces.push_back(pool.data.Subset(order));
  }
  if (pieces.empty()) throw ValidationError("aggregation plan selects no data");
  SoftDataset all = Concat(std::span<const SoftDataset>(pieces));
  Rng engine = rng.Child("shuffle").Engine();
  return all.Subset(engine.Permutation(all.size()));
}

std::map<std::string, std::size_t> PlanCounts(const AggregationPlan& plan,
                                              const PoolSet& pools, FractionBase base) {
  std::map<std::string, std::size_t> counts;
  for (const auto& [member, fraction] : plan.fractions) {
    counts[member] = DrawCount(fraction, pools.at(member), base);
  }
  return counts;
}

// Trains cfg.epochs epochs of the plan, calling after_epoch(epoch, model) after
// every epoch (1-based); training stops early when it returns false.
ClassifierModel TrainPlan(const AggregationPlan& plan, const PoolSet& pools,
                          const TrainConfig& cfg, const DdaOptions& options,
                          bool strict,
                          const std::function<bool(int, const ClassifierModel&)>& after_epoch) {
  cfg.Validate();
  plan.Validate(pools, strict ? cfg.epochs : plan.regenerations);
  const int r = plan.regenerations;
  const auto counts = PlanCounts(plan, pools, options.fraction_base);
  const auto& first = pools.begin()->second.data;

  std::vector<SoftDataset> parts;
  if (options.regeneration_mode == RegenerationMode::kPartition) {
    SoftDataset aggregate = DrawAggregate(counts, pools, cfg.rng.Child("aggregate"));
    if (r == 1) {
      parts.push_back(std::move(aggregate));
    } else {
      Rng engine = cfg.rng.Child("partition").Engine();
      std::vector<std::size_t> order = engine.Permutation(aggregate.size());
      std::size_t at = 0;
      for (std::size_t len : PartSizes(aggregate.size(), r)) {
        parts.push_back(aggregate.Subset(std::span(order).subspan(at, len)));
        at += len;
      }
    }
  } else {
    for (int s = 0; s < r; ++s) {
      std::map<std::string, std::size_t> scaled;
      for (const auto& [member, count] : counts) {
        scaled[member] = static_cast<std::size_t>(
            std::llround(static_cast<double>(count) / static_cast<double>(r)));
      }
      bool any = std::any_of(scaled.begin(), scaled.end(),
                             [](const auto& kv) { return kv.second > 0; });
      if (!any) {
        // Tiny plans: keep one row from each selected pool.
        for (auto& [member, count] : scaled) count = counts.at(member) > 0 ? 1 : 0;
      }
      parts.push_back(DrawAggregate(scaled, pools, cfg.rng.Child("redraw", s)));
    }
  }

  ClassifierTrainer trainer(
      ClassifierModel::Initialize(first.feature_dim(), cfg.hidden_dim, first.n_classes(),
                                  cfg.rng.Child("init")),
      cfg);
  const auto schedule = EpochParts(cfg.epochs, r);
  std::vector<int> current;
  std::optional<SoftDataset> merged;
  for (int e = 0; e < cfg.epochs; ++e) {
    const auto& ids = schedule[static_cast<std::size_t>(e)];
    if (ids.size() == 1) {
      trainer.RunEpoch(parts[static_cast<std::size_t>(ids[0])]);
    } else {
      if (ids != current) {
        std::vector<SoftDataset> pieces;
        for (int id : ids) pieces.push_back(parts[static_cast<std::size_t>(id)]);
        merged = Concat(std::span<const SoftDataset>(pieces));
        current = ids;
      }
      trainer.RunEpoch(*merged);
    }
    if (!after_epoch(e + 1, trainer.model())) break;
  }
  return trainer.TakeModel();
}

}  // namespace

std::vector<int> RegenerationChoices(int epochs) {
  if (epochs < 1) throw ValidationError("epoch budget must be >= 1");
  std::vector<int> out;
  for (int d = 1; d <= epochs; ++d) {
    if (epochs % d == 0) out.push_back(d);
  }
  return out;
}

unsigned long long SearchSpaceCardinality(std::size_t n_members, int epochs) {
  unsigned long long total = RegenerationChoices(epochs).size();
  for (std::size_t i = 0; i < n_members; ++i) total *= kFractionGrid.size();
  return total;
}

void AggregationPlan::Validate(const PoolSet& pools, int epochs) const {
  if (pools.empty()) throw ValidationError("no pools to aggregate");
  for (const auto& [member, fraction] : fractions) {
    if (!pools.contains(member)) {
      throw ValidationError("plan references unknown member " + member);
    }
    if (!OnGrid(fraction)) {
      throw ValidationError("fraction " + std::to_string(fraction) + " for " + member +
                            " is not on the 20% grid");
    }
  }
  if (AllZero()) throw ValidationError("aggregation plan has every fraction at zero");
  if (regenerations < 1 || epochs % regenerations != 0) {
    throw ValidationError("regeneration count " + std::to_string(regenerations) +
                          " does not divide " + std::to_string(epochs) + " epochs");
  }
}

bool AggregationPlan::AllZero() const {
  return std::all_of(fractions.begin(), fractions.end(),
                     [](const auto& kv) { return kv.second <= 0.0; });
}

std::string AggregationPlan::ToString() const {
  std::string out;
  char buf[64];
  for (const auto& [member, fraction] : fractions) {
    std::snprintf(buf, sizeof(buf), "%.1f", fraction);
    out += member + "=" + buf + ",";
  }
  out += "r=" + std::to_string(regenerations);
  return out;
}

std::size_t DrawCount(double fraction, const Pool& pool, FractionBase base) {
  const std::size_t size =
      base == FractionBase::kPoolSize ? pool.data.size() : pool.real_size;
  auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(size)));
  return std::min(count, pool.data.size());
}

SoftDataset BuildAggregate(const AggregationPlan& plan, const PoolSet& pools,
                           const RngStream& rng, FractionBase base) {
  if (plan.AllZero()) throw ValidationError("aggregation plan has every fraction at zero");
  for (const auto& [member, fraction] : plan.fractions) {
    if (!pools.contains(member)) {
      throw ValidationError("plan references unknown member " + member);
    }
    if (!(fraction >= 0.0 && fraction <= 1.0)) {
      throw ValidationError("fraction outside [0, 1] for " + member);
    }
  }
  return DrawAggregate(PlanCounts(plan, pools, base), pools, rng);
}

std::vector<std::size_t> PartSizes(std::size_t n, int r) {
  if (r < 1) throw ValidationError("part count must be >= 1");
  const auto parts = static_cast<std::size_t>(r);
  std::vector<std::size_t> sizes(parts);
  for (std::size_t i = 0; i < parts; ++i) sizes[i] = n / parts + (i < n % parts ? 1 : 0);
  return sizes;
}

std::vector<std::vector<int>> EpochParts(int epochs, int r) {
  if (epochs < 1 || r < 1) throw ValidationError("epochs and r must be >= 1");
  std::vector<std::vector<int>> out(static_cast<std::size_t>(epochs));
  for (int e = 0; e < epochs; ++e) {
    auto& ids = out[static_cast<std::size_t>(e)];
    const long long lo = static_cast<long long>(e) * r / epochs;
    if (epochs % r == 0 || r < epochs) {
      ids.push_back(static_cast<int>(lo));
    } else {
      const long long hi = static_cast<long long>(e + 1) * r / epochs;
      for (long long p = lo; p < hi; ++p) ids.push_back(static_cast<int>(p));
    }
  }
  return out;
}

TrainResult TrainWithRegeneration(const AggregationPlan& plan, const PoolSet& pools,
                                  const LabeledDataset& val, const TrainConfig& cfg,
                                  const DdaOptions& options) {
  if (val.empty()) throw ValidationError("validation shard is empty");
  ClassifierModel model = TrainPlan(plan, pools, cfg, options, /*strict=*/true,
                                    [](int, const ClassifierModel&) { return true; });
  double cas = Accuracy(model, val);
  return TrainResult{std::move(model), cas};
}

ClassifierModel TrainFinal(const AggregationPlan& plan, const PoolSet& pools,
                           const TrainConfig& cfg, const DdaOptions& options) {
  return TrainPlan(plan, pools, cfg, options, /*strict=*/true,
                   [](int, const ClassifierModel&) { return true; });
}

PlanSearch OptimizePlanWith(const std::vector<std::string>& member_ids,
                            int final_epochs, const PlanObjective& objective,
                            const DdaOptions& options, const RngStream& rng) {
  if (member_ids.empty()) throw ValidationError("no pools to aggregate");
  hpo::ParamSpace space;
  const std::vector<double> grid(kFractionGrid.begin(), kFractionGrid.end());
  for (const auto& id : member_ids) space.AddDiscrete("fraction/" + id, grid);
  std::vector<double> rates;
  for (int r : RegenerationChoices(final_epochs)) rates.push_back(r);
  space.AddDiscrete("regenerations", rates);
  spdlog::debug("DDA search space: {} points ({} members, {} regeneration rates)",
                SearchSpaceCardinality(member_ids.size(), final_epochs),
                member_ids.size(), rates.size());

  auto to_plan = [&](const hpo::Params& p) {
    AggregationPlan plan;
    for (std::size_t i = 0; i < member_ids.size(); ++i) plan.fractions[member_ids[i]] = p[i];
    plan.regenerations = static_cast<int>(p.back());
    return plan;
  };

  hpo::Study study(std::move(space), options.study, rng);
  const auto& best = hpo::Optimize(
      study, options.budget, [&](const hpo::Params& p, hpo::TrialContext& trial) {
        AggregationPlan plan = to_plan(p);
        if (plan.AllZero()) return 0.0;
        return objective(plan, trial);
      });
  AggregationPlan plan = to_plan(best.params);
  double value = *best.Value();
  return PlanSearch{std::move(plan), value, std::move(study)};
}

PlanSearch OptimizePlan(const PoolSet& pools, const LabeledDataset& val,
                        const TrainConfig& cfg, const DdaOptions& options,
                        const RngStream& rng) {
  if (pools.empty()) throw ValidationError("no pools to aggregate");
  if (val.empty()) throw ValidationError("validation shard is empty");
  std::vector<std::string> ids;
  for (const auto& [id, pool] : pools) ids.push_back(id);

  TrainConfig tuning = cfg;
  tuning.epochs = options.tuning_epochs;
  auto objective = [&](const AggregationPlan& plan, hpo::TrialContext& trial) {
    std::set<int> steps{tuning.epochs};
    const int bracket = trial.study().BracketOf(trial.trial_id());
    for (const auto& rung : trial.study().schedule()) {
      if (rung.bracket == bracket && rung.resource < tuning.epochs) steps.insert(rung.resource);
    }
    double value = 0.0;
    TrainPlan(plan, pools, tuning, options, /*strict=*/false,
              [&](int epoch, const ClassifierModel& model) {
                if (!steps.contains(epoch)) return true;
                value = Accuracy(model, val);
                return !trial.Report(epoch, value);
              });
    return value;
  };
  return OptimizePlanWith(ids, cfg.epochs, objective, options, rng);
}

}  // namespace fedkr::dda
