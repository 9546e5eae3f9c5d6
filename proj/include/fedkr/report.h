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

#ifndef FEDKR_REPORT_H_
#define FEDKR_REPORT_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fedkr/federation.h"

namespace fedkr::report {

inline constexpr const char* kArtifactVersion = "0.1.0";

// Leading "# key value" lines of every output file.
struct Provenance {
  std::string config_digest;
  std::uint64_t seed = 0;
  std::string version = kArtifactVersion;
};

std::string Header(const Provenance& p, const std::string& kind);

// %.17g: round-trips every double, so reruns compare byte for byte.
std::string FormatDouble(double v);

// Columns: member_id,accuracy,correct,test_size,epochs
std::string MethodCsv(const fed::MethodReport& report, const Provenance& p);

// Long format: member_id,stage,step,value with stages checkpoint, sigma and
// dda, then one summary row per member (stage "chosen").
std::string CasTraceCsv(const fed::MethodReport& fedkr, const Provenance& p);

// Columns: member_id,ordinary_auc,fedkr_auc
std::string MiaCsv(const std::vector<fed::MiaRecord>& records, const Provenance& p);

// Inverse of MethodCsv (summary fields recomputed). Throws ValidationError.
fed::MethodReport ParseMethodCsv(const std::string& text);

struct MethodSummary {
  std::string method;
  std::size_t seeds = 0;
  double mean = 0.0;    // mean over seeds of the per-member mean
  double stddev = 0.0;  // sample standard deviation of the per-seed means
  double member_stddev = 0.0;  // mean over seeds of the per-member spread
  double pooled = 0.0;  // mean over seeds of the pooled accuracy
  // Over every (seed, member) pair matched against Ordinary.
  std::optional<fed::Improvement> improvement;
};

// Groups per-seed reports by method (first-seen order) and computes
// improvements against the Ordinary report of the same seed.
std::vector<MethodSummary> Summarize(const std::vector<fed::MethodReport>& reports);

// Table with one column per method, in percent: accuracy mean and spread,
// pooled accuracy, then the Min/Mean/Max improvement rows.
std::string FormatTable(const std::vector<MethodSummary>& summaries);

// Writes through a temporary file and a rename so readers never see half a
// file.
void WriteFileAtomically(const std::filesystem::path& path, const std::string& contents);

}  // namespace fedkr::report

#endif  // FEDKR_REPORT_H_
