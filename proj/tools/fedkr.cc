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

// fedkr command-line entry point.
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration or usage error,
// 3 authorization failure.

#include <algorithm>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include <pthread.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"

#include "fedkr/config.h"
#include "fedkr/error.h"
#include "fedkr/federation.h"
#include "fedkr/report.h"
#include "fedkr/repository.h"

namespace fs = std::filesystem;
using namespace fedkr;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDenied = 3;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string log_level;
  std::string endpoint;
  std::string output_dir;
};

void SetLogLevel(const std::string& level) {
  spdlog::set_level(spdlog::level::from_str(level));
}

config::RunConfig LoadConfig(const Common& common) {
  config::RunConfig cfg;
  if (!common.config_path.empty()) cfg = config::LoadRunConfig(common.config_path);
  if (!common.endpoint.empty()) cfg.repository = common.endpoint;
  if (!common.output_dir.empty()) cfg.output_dir = common.output_dir;
  if (common.seed) cfg.experiment.seeds = {*common.seed};
  if (!common.log_level.empty()) cfg.log_level = common.log_level;
  SetLogLevel(cfg.log_level);
  return cfg;
}

std::string RequireEndpoint(const config::RunConfig& cfg) {
  if (cfg.repository == config::kInProcess) {
    throw config::ConfigError(0, "this command needs a repository endpoint (--endpoint or "
                                 "FEDKR_ENDPOINT)");
  }
  return cfg.repository;
}

std::size_t MemberIndex(const config::RunConfig& cfg, const std::string& member) {
  const int n = cfg.experiment.task.n_members;
  for (int i = 0; i < n; ++i) {
    if (fed::MemberId(i, n) == member || std::to_string(i) == member) {
      return static_cast<std::size_t>(i);
    }
  }
  throw config::ConfigError(0, "unknown member '" + member + "' (expected " +
                                   fed::MemberId(0, n) + ".." + fed::MemberId(n - 1, n) +
                                   " or an index)");
}

report::Provenance MakeProvenance(const config::RunConfig& cfg, std::uint64_t seed) {
  return report::Provenance{config::ConfigDigest(cfg), seed, report::kArtifactVersion};
}

std::vector<std::uint8_t> ReadBytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

std::string ReadText(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fed::ClientFactory Clients(const config::RunConfig& cfg, repo::RepositoryStore& local) {
  if (cfg.repository == config::kInProcess) {
    return [&local] { return std::make_unique<repo::InProcessClient>(local); };
  }
  const std::string endpoint = cfg.repository;
  return [endpoint] { return std::make_unique<repo::HttpClient>(endpoint); };
}

// ---- simulate ----

int Simulate(const Common& common) {
  config::RunConfig cfg = LoadConfig(common);
  const fs::path out = cfg.output_dir;
  fs::create_directories(out);
  const fs::path marker = out / "RUN_INCOMPLETE";
  const std::string digest = config::ConfigDigest(cfg);
  report::WriteFileAtomically(marker, "run in progress; config_digest " + digest + "\n");

  auto wants = [&](const std::string& m) {
    return std::find(cfg.methods.begin(), cfg.methods.end(), m) != cfg.methods.end();
  };
  repo::RepositoryStore local;
  const fed::ClientFactory clients = Clients(cfg, local);
  std::vector<fed::MethodReport> all;
  try {
    for (std::uint64_t seed : cfg.experiment.seeds) {
      const auto prov = MakeProvenance(cfg, seed);
      const std::string suffix = "_seed" + std::to_string(seed) + ".csv";
      std::optional<fed::MethodReport> ordinary;
      std::optional<fed::MethodReport> fedkr;
      auto emit = [&](fed::MethodReport r) {
        if (ordinary && r.method != "ordinary") r.improvement = fed::ImprovementOver(r, *ordinary);
        spdlog::info("seed {} {}: mean accuracy {:.4f}", seed, r.method, r.mean);
        report::WriteFileAtomically(out / (r.method + suffix), report::MethodCsv(r, prov));
        all.push_back(r);
        return r;
      };
      if (wants("ordinary")) ordinary = emit(fed::RunOrdinary(cfg.experiment, seed));
      if (wants("centralised")) emit(fed::RunCentralised(cfg.experiment, seed));
      if (wants("fedavg")) emit(fed::RunFedAvg(cfg.experiment, seed));
      if (wants("fedkr")) {
        fedkr = emit(fed::RunFedKr(cfg.experiment, seed, clients).report);
        fs::create_directories(out / "traces");
        report::WriteFileAtomically(out / "traces" / ("cas" + suffix),
                                    report::CasTraceCsv(*fedkr, prov));
      }
      if (cfg.mia) {
        auto records = fed::MiaComparison(cfg.experiment, seed, *ordinary, *fedkr);
        report::WriteFileAtomically(out / ("mia" + suffix), report::MiaCsv(records, prov));
      }
    }
  } catch (const std::exception& e) {
    report::WriteFileAtomically(marker, "run failed; config_digest " + digest + "\n" + e.what() + "\n");
    throw;
  }
  std::string seeds;
  for (auto s : cfg.experiment.seeds) seeds += (seeds.empty() ? "" : ",") + std::to_string(s);
  std::string table = "# fedkr " + std::string(report::kArtifactVersion) + "\n# kind table\n" +
                      "# config_digest " + digest + "\n# seeds " + seeds + "\n" +
                      report::FormatTable(report::Summarize(all));
  report::WriteFileAtomically(out / "table.txt", table);
  fs::remove(marker);
  spdlog::info("results written to {}", out.string());
  return 0;
}

// ---- serve ----

int Serve(const Common& common, const std::string& bind, const std::string& storage) {
  SetLogLevel(common.log_level.empty() ? "info" : common.log_level);
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos) {
    throw config::ConfigError(0, "--bind expects host:port, got '" + bind + "'");
  }
  const std::string host = bind.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(bind.substr(colon + 1));
  } catch (const std::exception&) {
    throw config::ConfigError(0, "--bind has a bad port: '" + bind + "'");
  }
  if (storage.empty()) throw config::ConfigError(0, "--storage must not be empty");

  // Block the signals before the server threads start so only sigwait sees them.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  repo::RepositoryStore store(storage);
  repo::RepositoryServer server(store);
  const int bound = server.Start(host, port);
  // The bound port goes to stdout so scripts can use --bind host:0.
  std::cout << "listening " << host << ":" << bound << std::endl;
  int sig = 0;
  sigwait(&set, &sig);
  spdlog::info("signal {}: shutting down", sig);
  server.Stop();
  return 0;
}

// ---- contribute / train ----

fs::path TokenPath(const config::RunConfig& cfg, std::uint64_t seed, const std::string& member) {
  return fs::path(cfg.output_dir) / "tokens" / (cfg.experiment.TaskId(seed) + "-" + member + ".json");
}

int Contribute(const Common& common, const std::string& member, const std::string& token_out) {
  config::RunConfig cfg = LoadConfig(common);
  const std::string endpoint = RequireEndpoint(cfg);
  const std::uint64_t seed = cfg.experiment.seeds.front();
  const std::size_t index = MemberIndex(cfg, member);
  kr::MemberContext ctx = fed::MakeContext(cfg.experiment, seed, index);
  repo::HttpClient client(endpoint);
  fed::ContributeResult result = fed::Contribute(cfg.experiment, seed, index, ctx, client);
  const fs::path path = token_out.empty() ? TokenPath(cfg, seed, ctx.member_id()) : fs::path(token_out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  nlohmann::json receipt{{"manifest", result.receipt.manifest}, {"token", result.receipt.token.value}};
  report::WriteFileAtomically(path, receipt.dump(2) + "\n");
  spdlog::info("{} contributed {} rows to {} as {}; receipt in {}", ctx.member_id(),
               result.contribution.synth.size(), cfg.experiment.TaskId(seed),
               result.receipt.manifest.contribution_id, path.string());
  return 0;
}

int Train(const Common& common, const std::string& member, const std::string& token_in) {
  config::RunConfig cfg = LoadConfig(common);
  const std::string endpoint = RequireEndpoint(cfg);
  const std::uint64_t seed = cfg.experiment.seeds.front();
  const std::size_t index = MemberIndex(cfg, member);
  kr::MemberContext ctx = fed::MakeContext(cfg.experiment, seed, index);
  const fs::path path = token_in.empty() ? TokenPath(cfg, seed, ctx.member_id()) : fs::path(token_in);
  repo::MembershipToken token;
  if (fs::exists(path)) {
    token.value = nlohmann::json::parse(ReadText(path)).at("token").get<std::string>();
  } else {
    // The repository decides; without a token it refuses.
    spdlog::warn("no membership receipt at {}", path.string());
  }
  repo::HttpClient client(endpoint);
  fed::StudentResult student = fed::TrainStudent(cfg.experiment, seed, index, ctx, client, token);

  const fs::path dir = fs::path(cfg.output_dir) / "students";
  fs::create_directories(dir);
  const std::string stem = ctx.member_id() + "_seed" + std::to_string(seed);
  auto bytes = SerializeModel(student.model);
  report::WriteFileAtomically(dir / (stem + ".model"), std::string(bytes.begin(), bytes.end()));
  fed::MethodReport r;
  r.method = "fedkr";
  r.seed = seed;
  r.epochs = cfg.experiment.budgets.epochs;
  r.members = {student.outcome};
  fed::Summarize(r);
  report::WriteFileAtomically(dir / (stem + ".csv"), report::MethodCsv(r, MakeProvenance(cfg, seed)));
  spdlog::info("{}: plan {} test accuracy {:.4f}", ctx.member_id(), student.plan.ToString(),
               student.outcome.accuracy);
  return 0;
}

// ---- attack ----

int Attack(const Common& common, const std::string& model_path, const std::string& member) {
  config::RunConfig cfg = LoadConfig(common);
  const std::uint64_t seed = cfg.experiment.seeds.front();
  const fs::path out = cfg.output_dir;
  fs::create_directories(out);
  const auto prov = MakeProvenance(cfg, seed);
  const std::string suffix = "_seed" + std::to_string(seed) + ".csv";
  if (!model_path.empty()) {
    if (member.empty()) throw config::ConfigError(0, "--model needs --member");
    const std::size_t index = MemberIndex(cfg, member);
    ClassifierModel model = DeserializeModel(ReadBytes(model_path));
    auto members = fed::BuildFederation(cfg.experiment.task, seed);
    const auto& m = members[index];
    const double auc = fed::MiaProbe(model, m.train, m.test,
                                     RngStream(seed, "mia").Child("member", static_cast<long long>(index)));
    std::string csv = report::Header(prov, "attack") + "# model " + fs::path(model_path).filename().string() +
                      "\nmember_id,auc\n" + m.id + "," + report::FormatDouble(auc) + "\n";
    report::WriteFileAtomically(out / ("attack_" + m.id + suffix), csv);
    spdlog::info("{}: membership inference AUC {:.4f}", m.id, auc);
    return 0;
  }
  repo::RepositoryStore local;
  fed::MethodReport ordinary = fed::RunOrdinary(cfg.experiment, seed);
  fed::MethodReport fedkr = fed::RunFedKr(cfg.experiment, seed, Clients(cfg, local)).report;
  auto records = fed::MiaComparison(cfg.experiment, seed, ordinary, fedkr);
  report::WriteFileAtomically(out / ("mia" + suffix), report::MiaCsv(records, prov));
  double o = 0.0, k = 0.0;
  for (const auto& r : records) {
    o += r.ordinary_auc;
    k += r.fedkr_auc;
  }
  spdlog::info("seed {}: mean AUC ordinary {:.4f}, fedkr {:.4f}", seed, o / records.size(),
               k / records.size());
  return 0;
}

// ---- report ----

int Report(const Common& common, const std::vector<std::string>& inputs, const std::string& out) {
  SetLogLevel(common.log_level.empty() ? "info" : common.log_level);
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto& entry : fs::directory_iterator(in)) {
        const auto name = entry.path().filename().string();
        if (entry.is_regular_file() && entry.path().extension() == ".csv" &&
            name.find("_seed") != std::string::npos && name.rfind("mia_", 0) != 0 &&
            name.rfind("attack_", 0) != 0) {
          found.push_back(entry.path());
        }
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.emplace_back(in);
    }
  }
  if (files.empty()) throw config::ConfigError(0, "no result files given");
  std::vector<fed::MethodReport> reports;
  std::set<std::string> digests;
  for (const auto& f : files) {
    const std::string text = ReadText(f);
    try {
      reports.push_back(report::ParseMethodCsv(text));
    } catch (const ValidationError& e) {
      throw ValidationError(f.string() + ": " + e.what());
    }
    const auto at = text.find("# config_digest ");
    if (at != std::string::npos) {
      digests.insert(text.substr(at + 16, text.find('\n', at) - at - 16));
    }
  }
  // Canonical column order, whatever the file names.
  auto rank = [](const std::string& m) {
    static const std::vector<std::string> order{"ordinary", "centralised", "fedavg", "fedkr"};
    return std::find(order.begin(), order.end(), m) - order.begin();
  };
  std::stable_sort(reports.begin(), reports.end(),
                   [&](const auto& a, const auto& b) { return rank(a.method) < rank(b.method); });
  std::set<std::uint64_t> seeds;
  for (const auto& r : reports) seeds.insert(r.seed);
  std::string seed_list;
  for (auto s : seeds) seed_list += (seed_list.empty() ? "" : ",") + std::to_string(s);
  std::string table = "# fedkr " + std::string(report::kArtifactVersion) + "\n# kind table\n" +
                      "# config_digest " + (digests.size() == 1 ? *digests.begin() : "mixed") +
                      "\n# seeds " + seed_list + "\n" +
                      report::FormatTable(report::Summarize(reports));
  const fs::path target = out;
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  report::WriteFileAtomically(target, table);
  spdlog::info("table over {} result files written to {}", files.size(), target.string());
  return 0;
}

void AddCommon(CLI::App* cmd, Common& common, bool with_config = true) {
  if (with_config) {
    cmd->add_option("-c,--config", common.config_path, "JSON run configuration")
        ->check(CLI::ExistingFile);
    cmd->add_option("-o,--output", common.output_dir, "Output directory (overrides the config)");
  }
  cmd->add_option("--seed", common.seed, "Master seed (replaces the configured seed list)");
  cmd->add_option("--log-level", common.log_level, "trace, debug, info, warn, error or off");
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("fedkr"));
  spdlog::set_pattern("[%H:%M:%S.%e] [%l] %v");

  CLI::App app{"Federated knowledge recycling on desk-scale tabular tasks"};
  app.require_subcommand(1);
  Common common;

  auto* simulate = app.add_subcommand("simulate", "Run the configured methods over every seed");
  AddCommon(simulate, common);
  simulate->add_option("--endpoint", common.endpoint, "Repository endpoint, or in-process")
      ->envname("FEDKR_ENDPOINT");

  auto* serve = app.add_subcommand("serve", "Run the contribution repository");
  AddCommon(serve, common, false);
  std::string bind = "127.0.0.1:8080";
  std::string storage = "repository";
  serve->add_option("--bind", bind, "host:port to listen on")->envname("FEDKR_BIND")->capture_default_str();
  serve->add_option("--storage", storage, "Storage directory")->envname("FEDKR_STORAGE")->capture_default_str();

  auto* contribute = app.add_subcommand("contribute", "Produce one member's synthetic dataset and upload it");
  AddCommon(contribute, common);
  std::string member;
  std::string token_file;
  contribute->add_option("--member", member, "Member id (m03) or index (3)")->required();
  contribute->add_option("--endpoint", common.endpoint, "Repository endpoint")->envname("FEDKR_ENDPOINT");
  contribute->add_option("--receipt", token_file, "Where to store the upload receipt");

  auto* train = app.add_subcommand("train", "Download the pools, aggregate and train one member's student");
  AddCommon(train, common);
  train->add_option("--member", member, "Member id (m03) or index (3)")->required();
  train->add_option("--endpoint", common.endpoint, "Repository endpoint")->envname("FEDKR_ENDPOINT");
  train->add_option("--receipt", token_file, "Receipt written by contribute");

  auto* attack = app.add_subcommand("attack", "Membership-inference probe");
  AddCommon(attack, common);
  std::string model_path;
  attack->add_option("--model", model_path, "Attack a saved model instead of a fresh run")
      ->check(CLI::ExistingFile);
  attack->add_option("--member", member, "Member whose shards are used with --model");
  attack->add_option("--endpoint", common.endpoint, "Repository endpoint")->envname("FEDKR_ENDPOINT");

  auto* rep = app.add_subcommand("report", "Aggregate per-seed result files into a table");
  AddCommon(rep, common, false);
  std::vector<std::string> inputs;
  std::string table_out = "table.txt";
  rep->add_option("inputs", inputs, "Result CSV files or directories")->required();
  rep->add_option("--out", table_out, "Table file")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*simulate) return Simulate(common);
    if (*serve) return Serve(common, bind, storage);
    if (*contribute) return Contribute(common, member, token_file);
    if (*train) return Train(common, member, token_file);
    if (*attack) return Attack(common, model_path, member);
    if (*rep) return Report(common, inputs, table_out);
  } catch (const config::ConfigError& e) {
    spdlog::error("configuration: {}", e.what());
    return kExitConfig;
  } catch (const AccessDenied& e) {
    spdlog::error("access denied: {}", e.what());
    return kExitDenied;
  } catch (const NetworkError& e) {
    const std::string endpoint = common.endpoint.empty() ? "the configured repository" : common.endpoint;
    spdlog::error("{} ({})", e.what(), endpoint);
    spdlog::error("check that the repository is running (fedkr serve) and reachable, then retry");
    return kExitRuntime;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitRuntime;
  }
  return kExitRuntime;
}
