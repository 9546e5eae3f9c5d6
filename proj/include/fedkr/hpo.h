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

#ifndef FEDKR_HPO_H_
#define FEDKR_HPO_H_

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "fedkr/rng.h"

namespace fedkr::hpo {

struct Continuous {
  double low = 0.0;
  double high = 1.0;
};

// Ordered, duplicate-free set of admissible values.
struct Discrete {
  std::vector<double> values;
};

struct Dimension {
  std::string name;
  std::variant<Continuous, Discrete> domain;
};

class ParamSpace {
 public:
  ParamSpace& AddContinuous(std::string name, double low, double high);
  ParamSpace& AddDiscrete(std::string name, std::vector<double> values);

  const std::vector<Dimension>& dimensions() const { return dims_; }
  std::size_t size() const { return dims_.size(); }
  bool empty() const { return dims_.empty(); }
  // Number of grid points; 0 when any dimension is continuous.
  unsigned long long Cardinality() const;
  bool Contains(const std::vector<double>& params) const;

 private:
  std::vector<Dimension> dims_;
};

// One value per dimension, in ParamSpace order.
using Params = std::vector<double>;

enum class TrialState { kRunning, kComplete, kPruned };
const char* ToString(TrialState state);

struct IntermediateReport {
  int step = 0;
  double value = 0.0;
};

struct TrialRecord {
  int trial_id = 0;
  Params params;
  std::vector<IntermediateReport> intermediate_reports;
  std::optional<double> final_value;
  TrialState state = TrialState::kRunning;

  // final_value if set, else the last report, else nullopt.
  std::optional<double> Value() const;
};

struct HyperbandConfig {
  int min_resource = 5;
  int max_resource = 50;
  int reduction_factor = 3;

  void Validate() const;
};

struct RungEntry {
  int bracket = 0;
  int rung = 0;
  int resource = 0;

  friend bool operator==(const RungEntry&, const RungEntry&) = default;
};

// Brackets s = floor(log_eta(max/min)) down to 0. Bracket s owns rungs at
// min * eta^k for k = 0..s, capped at max.
std::vector<RungEntry> RungSchedule(const HyperbandConfig& cfg);

struct StudyOptions {
  double gamma = 0.25;
  int n_startup = 10;
  int n_candidates = 24;
  // Unset disables pruning.
  std::optional<HyperbandConfig> pruner = HyperbandConfig{};
};

// A maximizing Tree-structured Parzen Estimator study with optional Hyperband
// pruning. Not thread-safe: callers serialize all mutations.
class Study {
 public:
  Study(ParamSpace space, StudyOptions options, RngStream rng);

  // Creates a running trial. The first n_startup suggestions (counted over
  // evaluated trials) are uniform; later ones maximize l(x)/g(x) per dimension.
  std::pair<int, Params> Suggest();

  // Appends an intermediate value. Steps must increase strictly; NaN is
  // accepted and ranks below every number.
  void Report(int trial_id, int resource_step, double value);

  // True iff the latest report sits on a rung of the trial's bracket and is
  // strictly below the top-1/eta value of earlier bracket peers at that rung.
  bool ShouldPrune(int trial_id) const;

  void Complete(int trial_id, double value);
  // Marks the trial pruned; its last report becomes the final value.
  void Prune(int trial_id);

  // Highest value (NaN lowest); ties go to the lowest trial_id.
  const TrialRecord& BestTrial() const;

  int BracketOf(int trial_id) const;
  const std::vector<TrialRecord>& trials() const { return trials_; }
  const ParamSpace& space() const { return space_; }
  const StudyOptions& options() const { return options_; }
  const std::vector<RungEntry>& schedule() const { return schedule_; }
  int n_brackets() const { return n_brackets_; }

  // Line-delimited trial log:
  //   trial=<id>\tstate=<state>\tparams=<name>=<v>,...\treports=<step>:<v>;...\tvalue=<v>
  // Numbers use 17 significant digits; a missing value is written as "-".
  void ExportLog(std::ostream& out) const;

 private:
  TrialRecord& Mutable(int trial_id);
  Params SampleUniform(Rng& rng) const;
  Params SampleTpe(Rng& rng) const;

  ParamSpace space_;
  StudyOptions options_;
  RngStream rng_;
  std::vector<TrialRecord> trials_;
  std::vector<RungEntry> schedule_;
  int n_brackets_ = 0;
};

// Handed to an objective so it can report intermediate values and learn
// whether to stop.
class TrialContext {
 public:
  TrialContext(Study& study, int trial_id) : study_(study), trial_id_(trial_id) {}

  // Reports a value; returns true when the trial should stop now.
  bool Report(int step, double value);
  bool pruned() const { return pruned_; }
  int trial_id() const { return trial_id_; }
  const Study& study() const { return study_; }

 private:
  Study& study_;
  int trial_id_;
  bool pruned_ = false;
};

using Objective = std::function<double(const Params&, TrialContext&)>;

// Runs exactly n_trials suggest/evaluate rounds; pruned trials count toward
// the budget. Returns the best trial.
const TrialRecord& Optimize(Study& study, int n_trials, const Objective& objective);

}  // namespace fedkr::hpo

#endif  // FEDKR_HPO_H_
