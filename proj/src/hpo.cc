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

#include "fedkr/hpo.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <ostream>
#include <set>

#include "fedkr/error.h"

namespace fedkr::hpo {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// NaN ranks below every number under maximization.
double RankKey(double v) { return std::isnan(v) ? kNegInf : v; }

std::string FormatNumber(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double NormalCdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// Parzen estimator over one continuous dimension: a truncated Gaussian per
// observation plus one uniform prior component, all equally weighted.
class ParzenEstimator {
 public:
  ParzenEstimator(const Continuous& dom, std::vector<double> points)
      : low_(dom.low), high_(dom.high), mus_(std::move(points)) {
    std::sort(mus_.begin(), mus_.end());
    const double range = high_ - low_;
    sigmas_.resize(mus_.size());
    norms_.resize(mus_.size());
    for (std::size_t i = 0; i < mus_.size(); ++i) {
      double left = i == 0 ? mus_[i] - low_ : mus_[i] - mus_[i - 1];
      double right = i + 1 == mus_.size() ? high_ - mus_[i] : mus_[i + 1] - mus_[i];
      double bw = std::max(left, right);
      bw = std::clamp(bw, 0.01 * range, range);
      sigmas_[i] = bw;
      norms_[i] = NormalCdf((high_ - mus_[i]) / bw) - NormalCdf((low_ - mus_[i]) / bw);
    }
  }

  double Sample(Rng& rng) const {
    std::size_t k = rng.Below(mus_.size() + 1);
    if (k == mus_.size()) return rng.Uniform(low_, high_);
    for (int attempt = 0; attempt < 1000; ++attempt) {
      double x = mus_[k] + sigmas_[k] * rng.Normal();
      if (x >= low_ && x <= high_) return x;
    }
    return rng.Uniform(low_, high_);
  }

  double LogDensity(double x) const {
    double p = 1.0 / (high_ - low_);
    for (std::size_t i = 0; i < mus_.size(); ++i) {
      double z = (x - mus_[i]) / sigmas_[i];
      p += std::exp(-0.5 * z * z) /
           (sigmas_[i] * std::sqrt(2.0 * std::numbers::pi) * norms_[i]);
    }
    return std::log(p / static_cast<double>(mus_.size() + 1));
  }

 private:
  double low_, high_;
  std::vector<double> mus_;
  std::vector<double> sigmas_;
  std::vector<double> norms_;
};

std::size_t DiscreteIndex(const Discrete& dom, double value) {
  auto it = std::find(dom.values.begin(), dom.values.end(), value);
  if (it == dom.values.end()) throw ValidationError("value outside discrete domain");
  return static_cast<std::size_t>(it - dom.values.begin());
}

// Add-one smoothed categorical frequencies.
std::vector<double> SmoothedFrequencies(const Discrete& dom,
                                        const std::vector<double>& observed) {
  std::vector<double> counts(dom.values.size(), 1.0);
  for (double v : observed) counts[DiscreteIndex(dom, v)] += 1.0;
  double total = static_cast<double>(observed.size() + dom.values.size());
  for (double& c : counts) c /= total;
  return counts;
}

}  // namespace

ParamSpace& ParamSpace::AddContinuous(std::string name, double low, double high) {
  if (!(low < high) || !std::isfinite(low) || !std::isfinite(high)) {
    throw ValidationError("continuous dimension '" + name + "' needs low < high");
  }
  dims_.push_back(Dimension{std::move(name), Continuous{low, high}});
  return *this;
}

ParamSpace& ParamSpace::AddDiscrete(std::string name, std::vector<double> values) {
  if (values.empty()) {
    throw ValidationError("discrete dimension '" + name + "' is empty");
  }
  std::set<double> unique(values.begin(), values.end());
  if (unique.size() != values.size()) {
    throw ValidationError("discrete dimension '" + name + "' has duplicates");
  }
  dims_.push_back(Dimension{std::move(name), Discrete{std::move(values)}});
  return *this;
}

unsigned long long ParamSpace::Cardinality() const {
  unsigned long long total = 1;
  for (const auto& dim : dims_) {
    const auto* d = std::get_if<Discrete>(&dim.domain);
    if (d == nullptr) return 0;
    total *= d->values.size();
  }
  return total;
}

bool ParamSpace::Contains(const Params& params) const {
  if (params.size() != dims_.size()) return false;
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (const auto* c = std::get_if<Continuous>(&dims_[i].domain)) {
      if (!(params[i] >= c->low && params[i] <= c->high)) return false;
    } else {
      const auto& values = std::get<Discrete>(dims_[i].domain).values;
      if (std::find(values.begin(), values.end(), params[i]) == values.end()) {
        return false;
      }
    }
  }
  return true;
}

const char* ToString(TrialState state) {
  switch (state) {
    case TrialState::kRunning:
      return "running";
    case TrialState::kComplete:
      return "complete";
    case TrialState::kPruned:
      return "pruned";
  }
  return "unknown";
}

std::optional<double> TrialRecord::Value() const {
  if (final_value) return final_value;
  if (!intermediate_reports.empty()) return intermediate_reports.back().value;
  return std::nullopt;
}

void HyperbandConfig::Validate() const {
  if (min_resource < 1) throw ValidationError("min_resource must be >= 1");
  if (max_resource < min_resource) {
    throw ValidationError("max_resource must be >= min_resource");
  }
  if (reduction_factor < 2) throw ValidationError("reduction_factor must be >= 2");
}

std::vector<RungEntry> RungSchedule(const HyperbandConfig& cfg) {
  cfg.Validate();
  int s_max = 0;
  long long next = static_cast<long long>(cfg.min_resource) * cfg.reduction_factor;
  while (next <= cfg.max_resource) {
    ++s_max;
    next *= cfg.reduction_factor;
  }
  std::vector<RungEntry> out;
  for (int s = s_max; s >= 0; --s) {
    long long resource = cfg.min_resource;
    for (int k = 0; k <= s; ++k) {
      out.push_back(RungEntry{
          s, k, static_cast<int>(std::min<long long>(resource, cfg.max_resource))});
      resource *= cfg.reduction_factor;
    }
  }
  return out;
}

Study::Study(ParamSpace space, StudyOptions options, RngStream rng)
    : space_(std::move(space)), options_(std::move(options)), rng_(std::move(rng)) {
  if (space_.empty()) throw ValidationError("study needs a non-empty space");
  if (!(options_.gamma > 0.0 && options_.gamma < 1.0)) {
    throw ValidationError("gamma must lie in (0, 1)");
  }
  if (options_.n_startup < 0 || options_.n_candidates < 1) {
    throw ValidationError("n_startup must be >= 0 and n_candidates >= 1");
  }
  if (options_.pruner) {
    schedule_ = RungSchedule(*options_.pruner);
    n_brackets_ = schedule_.front().bracket + 1;
  }
}

TrialRecord& Study::Mutable(int trial_id) {
  if (trial_id < 0 || static_cast<std::size_t>(trial_id) >= trials_.size()) {
    throw ValidationError("unknown trial " + std::to_string(trial_id));
  }
  return trials_[static_cast<std::size_t>(trial_id)];
}

std::pair<int, Params> Study::Suggest() {
  const int id = static_cast<int>(trials_.size());
  Rng rng = rng_.Child("suggest", id).Engine();
  int observed = 0;
  for (const auto& t : trials_) {
    if (t.state != TrialState::kRunning && t.Value()) ++observed;
  }
  Params params = observed < options_.n_startup ? SampleUniform(rng) : SampleTpe(rng);
  trials_.push_back(TrialRecord{id, params, {}, std::nullopt, TrialState::kRunning});
  return {id, params};
}

Params Study::SampleUniform(Rng& rng) const {
  Params out;
  for (const auto& dim : space_.dimensions()) {
    if (const auto* c = std::get_if<Continuous>(&dim.domain)) {
      out.push_back(rng.Uniform(c->low, c->high));
    } else {
      const auto& values = std::get<Discrete>(dim.domain).values;
      out.push_back(values[rng.Below(values.size())]);
    }
  }
  return out;
}

Params Study::SampleTpe(Rng& rng) const {
  std::vector<const TrialRecord*> done;
  for (const auto& t : trials_) {
    if (t.state != TrialState::kRunning && t.Value()) done.push_back(&t);
  }
  std::stable_sort(done.begin(), done.end(), [](const TrialRecord* a, const TrialRecord* b) {
    double ka = RankKey(*a->Value());
    double kb = RankKey(*b->Value());
    if (ka != kb) return ka > kb;
    return a->trial_id < b->trial_id;
  });
  const auto n_good = std::min(
      done.size(), static_cast<std::size_t>(std::ceil(
                       options_.gamma * static_cast<double>(done.size()))));

  const auto& dims = space_.dimensions();
  auto split = [&](std::size_t d, std::vector<double>& good, std::vector<double>& bad) {
    for (std::size_t i = 0; i < done.size(); ++i) {
      (i < n_good ? good : bad).push_back(done[i]->params[d]);
    }
  };

  if (space_.Cardinality() > 0) {
    // Fully discrete: score joint candidates and skip points already tried,
    // which a deterministic objective would only repeat.
    std::vector<std::vector<double>> l(dims.size()), g(dims.size());
    for (std::size_t d = 0; d < dims.size(); ++d) {
      std::vector<double> good, bad;
      split(d, good, bad);
      const auto& dom = std::get<Discrete>(dims[d].domain);
      l[d] = SmoothedFrequencies(dom, good);
      g[d] = SmoothedFrequencies(dom, bad);
    }
    std::set<Params> tried;
    for (const auto& t : trials_) tried.insert(t.params);
    Params best, best_new;
    double best_score = kNegInf, best_new_score = kNegInf;
    for (int k = 0; k < options_.n_candidates; ++k) {
      Params x(dims.size());
      double score = 0.0;
      for (std::size_t d = 0; d < dims.size(); ++d) {
        std::size_t j = rng.Categorical(l[d]);
        x[d] = std::get<Discrete>(dims[d].domain).values[j];
        score += std::log(l[d][j]) - std::log(g[d][j]);
      }
      if (best.empty() || score > best_score) {
        best = x;
        best_score = score;
      }
      if (!tried.contains(x) && (best_new.empty() || score > best_new_score)) {
        best_new = x;
        best_new_score = score;
      }
    }
    return best_new.empty() ? best : best_new;
  }

  Params out;
  for (std::size_t d = 0; d < dims.size(); ++d) {
    std::vector<double> good, bad;
    split(d, good, bad);
    double best_x = 0.0;
    double best_score = kNegInf;
    bool have = false;
    if (const auto* c = std::get_if<Continuous>(&dims[d].domain)) {
      ParzenEstimator l(*c, good);
      ParzenEstimator g(*c, bad);
      for (int k = 0; k < options_.n_candidates; ++k) {
        double x = l.Sample(rng);
        double score = l.LogDensity(x) - g.LogDensity(x);
        if (!have || score > best_score) {
          best_x = x;
          best_score = score;
          have = true;
        }
      }
    } else {
      const auto& dom = std::get<Discrete>(dims[d].domain);
      std::vector<double> l = SmoothedFrequencies(dom, good);
      std::vector<double> g = SmoothedFrequencies(dom, bad);
      for (int k = 0; k < options_.n_candidates; ++k) {
        std::size_t j = rng.Categorical(l);
        double score = std::log(l[j]) - std::log(g[j]);
        if (!have || score > best_score) {
          best_x = dom.values[j];
          best_score = score;
          have = true;
        }
      }
    }
    out.push_back(best_x);
  }
  return out;
}

void Study::Report(int trial_id, int resource_step, double value) {
  TrialRecord& t = Mutable(trial_id);
  if (t.state != TrialState::kRunning) {
    throw ValidationError("trial " + std::to_string(trial_id) + " is " +
                          ToString(t.state) + "; reports are closed");
  }
  if (!t.intermediate_reports.empty() &&
      resource_step <= t.intermediate_reports.back().step) {
    throw ValidationError("report steps must increase strictly (got " +
                          std::to_string(resource_step) + " after " +
                          std::to_string(t.intermediate_reports.back().step) + ")");
  }
  t.intermediate_reports.push_back(IntermediateReport{resource_step, value});
}

int Study::BracketOf(int trial_id) const {
  if (n_brackets_ == 0) return 0;
  return (n_brackets_ - 1) - trial_id % n_brackets_;
}

bool Study::ShouldPrune(int trial_id) const {
  if (trial_id < 0 || static_cast<std::size_t>(trial_id) >= trials_.size()) {
    throw ValidationError("unknown trial " + std::to_string(trial_id));
  }
  const TrialRecord& t = trials_[static_cast<std::size_t>(trial_id)];
  if (t.intermediate_reports.empty()) {
    throw ValidationError("trial " + std::to_string(trial_id) + " has no reports");
  }
  if (!options_.pruner) return false;
  const int bracket = BracketOf(trial_id);
  const IntermediateReport& last = t.intermediate_reports.back();
  bool on_rung = false;
  for (const auto& r : schedule_) {
    if (r.bracket == bracket && r.resource == last.step) on_rung = true;
  }
  if (!on_rung) return false;

  std::vector<double> peers;
  for (int id = 0; id < trial_id; ++id) {
    if (BracketOf(id) != bracket) continue;
    for (const auto& r : trials_[static_cast<std::size_t>(id)].intermediate_reports) {
      if (r.step == last.step) peers.push_back(RankKey(r.value));
    }
  }
  if (peers.empty()) return false;
  std::sort(peers.begin(), peers.end(), std::greater<>());
  const auto eta = static_cast<std::size_t>(options_.pruner->reduction_factor);
  const std::size_t keep = std::max<std::size_t>(1, (peers.size() + eta - 1) / eta);
  return RankKey(last.value) < peers[keep - 1];
}

void Study::Complete(int trial_id, double value) {
  TrialRecord& t = Mutable(trial_id);
  if (t.state != TrialState::kRunning) {
    throw ValidationError("trial " + std::to_string(trial_id) + " already finished");
  }
  t.final_value = value;
  t.state = TrialState::kComplete;
}

void Study::Prune(int trial_id) {
  TrialRecord& t = Mutable(trial_id);
  if (t.state != TrialState::kRunning) {
    throw ValidationError("trial " + std::to_string(trial_id) + " already finished");
  }
  if (t.intermediate_reports.empty()) {
    throw ValidationError("cannot prune a trial without reports");
  }
  t.final_value = t.intermediate_reports.back().value;
  t.state = TrialState::kPruned;
}

const TrialRecord& Study::BestTrial() const {
  const TrialRecord* best = nullptr;
  for (const auto& t : trials_) {
    auto v = t.Value();
    if (!v) continue;
    if (best == nullptr || RankKey(*v) > RankKey(*best->Value())) best = &t;
  }
  if (best == nullptr) throw ValidationError("study has no evaluated trials");
  return *best;
}

void Study::ExportLog(std::ostream& out) const {
  const auto& dims = space_.dimensions();
  for (const auto& t : trials_) {
    out << "trial=" << t.trial_id << "\tstate=" << ToString(t.state) << "\tparams=";
    for (std::size_t d = 0; d < dims.size(); ++d) {
      if (d > 0) out << ',';
      out << dims[d].name << '=' << FormatNumber(t.params[d]);
    }
    out << "\treports=";
    for (std::size_t i = 0; i < t.intermediate_reports.size(); ++i) {
      if (i > 0) out << ';';
      out << t.intermediate_reports[i].step << ':'
          << FormatNumber(t.intermediate_reports[i].value);
    }
    auto v = t.Value();
    out << "\tvalue=" << (v ? FormatNumber(*v) : std::string("-")) << '\n';
  }
}

bool TrialContext::Report(int step, double value) {
  study_.Report(trial_id_, step, value);
  if (study_.ShouldPrune(trial_id_)) pruned_ = true;
  return pruned_;
}

const TrialRecord& Optimize(Study& study, int n_trials, const Objective& objective) {
  if (n_trials < 1) throw ValidationError("n_trials must be >= 1");
  for (int i = 0; i < n_trials; ++i) {
    auto [id, params] = study.Suggest();
    TrialContext ctx(study, id);
    double value = objective(params, ctx);
    if (ctx.pruned()) {
      study.Prune(id);
    } else {
      study.Complete(id, value);
    }
  }
  return study.BestTrial();
}

}  // namespace fedkr::hpo
