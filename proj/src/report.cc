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

#include "fedkr/report.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "fedkr/error.h"

namespace fedkr::report {
namespace {

std::vector<std::string> SplitCsv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
  return out;
}

double ParseDouble(const std::string& s, int line) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ValidationError("line " + std::to_string(line) + ": '" + s + "' is not a number");
}

std::string Label(const std::string& method) {
  if (method == "ordinary") return "Ordinary";
  if (method == "centralised") return "Centralised";
  if (method == "fedavg") return "FedAvg";
  if (method == "fedkr") return "FedKR";
  return method;
}

std::string Pct(double v, int decimals = 2) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, 100.0 * v);
  return buf;
}

double SampleStd(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace

std::string Header(const Provenance& p, const std::string& kind) {
  return "# fedkr " + p.version + "\n# kind " + kind + "\n# config_digest " + p.config_digest +
         "\n# seed " + std::to_string(p.seed) + "\n";
}

std::string FormatDouble(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string MethodCsv(const fed::MethodReport& report, const Provenance& p) {
  std::string out = Header(p, "method") + "# method " + report.method + "\n";
  out += "member_id,accuracy,correct,test_size,epochs\n";
  for (const auto& m : report.members) {
    out += m.member_id + "," + FormatDouble(m.accuracy) + "," + std::to_string(m.correct) + "," +
           std::to_string(m.test_size) + "," + std::to_string(report.epochs) + "\n";
  }
  return out;
}

std::string CasTraceCsv(const fed::MethodReport& fedkr, const Provenance& p) {
  std::string out = Header(p, "cas_trace");
  out += "member_id,stage,step,value\n";
  auto rows = [&](const std::string& id, const char* stage, const std::vector<double>& values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      out += id + "," + stage + "," + std::to_string(i + 1) + "," + FormatDouble(values[i]) + "\n";
    }
  };
  for (const auto& t : fedkr.cas) {
    rows(t.member_id, "checkpoint", t.checkpoint_cas);
    rows(t.member_id, "sigma", t.sigma_trials);
    rows(t.member_id, "dda", t.dda_trials);
  }
  out += "# chosen settings: member_id,checkpoint_epoch,sigma,pool_size,dda_trials,plan\n";
  for (const auto& t : fedkr.cas) {
    // The plan holds commas, so it is quoted.
    out += "# " + t.member_id + "," + std::to_string(t.checkpoint_epoch) + "," +
           FormatDouble(t.sigma) + "," + std::to_string(t.pool_size) + "," +
           std::to_string(t.dda_trial_count) + ",\"" + t.plan + "\"\n";
  }
  return out;
}

std::string MiaCsv(const std::vector<fed::MiaRecord>& records, const Provenance& p) {
  std::string out = Header(p, "mia");
  out += "member_id,ordinary_auc,fedkr_auc\n";
  for (const auto& r : records) {
    out += r.member_id + "," + FormatDouble(r.ordinary_auc) + "," + FormatDouble(r.fedkr_auc) + "\n";
  }
  return out;
}

fed::MethodReport ParseMethodCsv(const std::string& text) {
  fed::MethodReport report;
  bool have_seed = false;
  bool have_header = false;
  std::stringstream ss(text);
  int line_no = 0;
  for (std::string line; std::getline(ss, line);) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::stringstream meta(line.substr(1));
      std::string key, value;
      meta >> key >> value;
      if (key == "kind" && value != "method") {
        throw ValidationError("not a per-method result file (kind " + value + ")");
      }
      if (key == "method") report.method = value;
      if (key == "seed") {
        report.seed = std::stoull(value);
        have_seed = true;
      }
      continue;
    }
    auto cells = SplitCsv(line);
    if (!have_header) {
      if (line != "member_id,accuracy,correct,test_size,epochs") {
        throw ValidationError("line " + std::to_string(line_no) + ": unexpected column header");
      }
      have_header = true;
      continue;
    }
    if (cells.size() != 5) {
      throw ValidationError("line " + std::to_string(line_no) + ": expected 5 columns");
    }
    fed::MemberOutcome m;
    m.member_id = cells[0];
    m.accuracy = ParseDouble(cells[1], line_no);
    m.correct = static_cast<std::size_t>(ParseDouble(cells[2], line_no));
    m.test_size = static_cast<std::size_t>(ParseDouble(cells[3], line_no));
    report.epochs = static_cast<int>(ParseDouble(cells[4], line_no));
    report.members.push_back(std::move(m));
  }
  if (report.method.empty() || !have_seed || report.members.empty()) {
    throw ValidationError("result file lacks a method, a seed or member rows");
  }
  fed::Summarize(report);
  return report;
}

std::vector<MethodSummary> Summarize(const std::vector<fed::MethodReport>& reports) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const fed::MethodReport*>> by_method;
  std::map<std::uint64_t, const fed::MethodReport*> ordinary;
  for (const auto& r : reports) {
    if (!by_method.contains(r.method)) order.push_back(r.method);
    by_method[r.method].push_back(&r);
    if (r.method == "ordinary") {
      if (ordinary.contains(r.seed)) {
        throw ValidationError("two ordinary results for seed " + std::to_string(r.seed));
      }
      ordinary[r.seed] = &r;
    }
  }
  std::vector<MethodSummary> out;
  for (const auto& method : order) {
    const auto& runs = by_method[method];
    MethodSummary s;
    s.method = method;
    s.seeds = runs.size();
    std::vector<double> means;
    std::vector<double> diffs;
    bool matched = method != "ordinary" && !ordinary.empty();
    for (const auto* r : runs) {
      means.push_back(r->mean);
      s.member_stddev += r->stddev;
      s.pooled += r->pooled;
      if (!matched) continue;
      auto it = ordinary.find(r->seed);
      if (it == ordinary.end()) {
        matched = false;
        continue;
      }
      for (const auto& m : r->members) {
        auto base = std::find_if(it->second->members.begin(), it->second->members.end(),
                                 [&](const fed::MemberOutcome& b) { return b.member_id == m.member_id; });
        if (base == it->second->members.end()) {
          throw ValidationError("member " + m.member_id + " of " + method + " seed " +
                                std::to_string(r->seed) + " has no ordinary result");
        }
        diffs.push_back(m.accuracy - base->accuracy);
      }
    }
    const auto n = static_cast<double>(runs.size());
    double total = 0.0;
    for (double m : means) total += m;
    s.mean = total / n;
    s.stddev = SampleStd(means);
    s.member_stddev /= n;
    s.pooled /= n;
    if (matched && !diffs.empty()) {
      fed::Improvement imp;
      imp.min = *std::min_element(diffs.begin(), diffs.end());
      imp.max = *std::max_element(diffs.begin(), diffs.end());
      double sum = 0.0;
      for (double d : diffs) sum += d;
      imp.mean = std::clamp(sum / static_cast<double>(diffs.size()), imp.min, imp.max);
      s.improvement = imp;
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::string FormatTable(const std::vector<MethodSummary>& summaries) {
  std::vector<std::string> labels{"", "Seeds", "Accuracy", "Spread over members", "Pooled accuracy",
                                  "Min Imp", "Mean Imp", "Max Imp"};
  std::vector<std::vector<std::string>> columns;
  for (const auto& s : summaries) {
    std::vector<std::string> col{Label(s.method), std::to_string(s.seeds),
                                 Pct(s.mean) + " +- " + Pct(s.stddev), Pct(s.member_stddev),
                                 Pct(s.pooled)};
    if (s.improvement) {
      col.push_back(Pct(s.improvement->min));
      col.push_back(Pct(s.improvement->mean));
      col.push_back(Pct(s.improvement->max));
    } else {
      col.insert(col.end(), {"-", "-", "-"});
    }
    columns.push_back(std::move(col));
  }
  std::size_t label_width = 0;
  for (const auto& l : labels) label_width = std::max(label_width, l.size());
  std::string out;
  for (std::size_t row = 0; row < labels.size(); ++row) {
    std::string line = labels[row] + std::string(label_width - labels[row].size(), ' ');
    for (const auto& col : columns) {
      std::size_t width = 0;
      for (const auto& cell : col) width = std::max(width, cell.size());
      line += "  " + std::string(width - col[row].size(), ' ') + col[row];
    }
    out += line + "\n";
  }
  out += "Accuracy in percent: mean over seeds +- spread of the seed means. Improvements are\n"
         "member-wise differences to Ordinary on the same seed, in points.\n";
  return out;
}

void WriteFileAtomically(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << contents;
    out.flush();
    if (!out) throw Error("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace fedkr::report
