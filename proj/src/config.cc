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

#include "fedkr/config.h"

#include <fstream>
#include <set>
#include <sstream>

namespace fedkr::config {
namespace {

using nlohmann::json;
using Path = std::vector<std::string>;

std::string Dotted(const Path& path) {
  std::string out;
  for (const auto& p : path) out += (out.empty() ? "" : ".") + p;
  return out;
}

int LineAt(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(offset), '\n'));
}

// Line of the last key of `path`, found by searching for each quoted key after
// the previous one. 0 when a key cannot be found.
int KeyLine(const std::string& text, const Path& path) {
  std::size_t at = 0;
  for (const auto& key : path) {
    at = text.find("\"" + key + "\"", at);
    if (at == std::string::npos) return 0;
  }
  return LineAt(text, at);
}

class Reader {
 public:
  explicit Reader(const std::string& text) : text_(text) {}

  [[noreturn]] void Fail(const Path& path, const std::string& message) const {
    throw ConfigError(KeyLine(text_, path), Dotted(path) + ": " + message);
  }

  void Keys(const json& obj, const Path& path, std::set<std::string> allowed) const {
    if (!obj.is_object()) Fail(path, "expected an object");
    for (const auto& [key, value] : obj.items()) {
      if (!allowed.contains(key)) {
        Path p = path;
        p.push_back(key);
        throw ConfigError(KeyLine(text_, p), "unknown key '" + Dotted(p) + "'");
      }
    }
  }

  template <typename T>
  void Get(const json& obj, Path path, const std::string& key, T& out) const {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    path.push_back(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) Fail(path, "expected true or false");
      out = v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) Fail(path, "expected an integer");
      if (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned()) {
        Fail(path, "expected a non-negative integer");
      }
      out = v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) Fail(path, "expected a number");
      out = v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) Fail(path, "expected a string");
      out = v.get<std::string>();
    } else {
      // vectors of integers or strings
      if (!v.is_array()) Fail(path, "expected an array");
      T items;
      for (const auto& item : v) {
        typename T::value_type x{};
        json wrapper{{"item", item}};
        Get(wrapper, path, "item", x);
        items.push_back(x);
      }
      out = std::move(items);
    }
  }

  template <typename E>
  void Enum(const json& obj, Path path, const std::string& key,
            const std::vector<std::pair<std::string, E>>& names, E& out) const {
    std::string name;
    Get(obj, path, key, name);
    if (name.empty()) return;
    for (const auto& [n, e] : names) {
      if (n == name) {
        out = e;
        return;
      }
    }
    path.push_back(key);
    std::string options;
    for (const auto& [n, e] : names) options += (options.empty() ? "" : ", ") + n;
    Fail(path, "'" + name + "' is not one of " + options);
  }

  const std::string& text() const { return text_; }

 private:
  const std::string& text_;
};

const std::vector<std::pair<std::string, LrSchedule>> kSchedules{
    {"constant", LrSchedule::kConstant}, {"cosine", LrSchedule::kCosine}};
const std::vector<std::pair<std::string, dda::FractionBase>> kBases{
    {"pool", dda::FractionBase::kPoolSize}, {"real", dda::FractionBase::kRealSize}};
const std::vector<std::pair<std::string, dda::RegenerationMode>> kModes{
    {"partition", dda::RegenerationMode::kPartition}, {"redraw", dda::RegenerationMode::kRedraw}};
const std::set<std::string> kMethods{"ordinary", "centralised", "fedavg", "fedkr"};
const std::set<std::string> kLogLevels{"trace", "debug", "info", "warn", "error", "off"};

template <typename E>
std::string NameOf(const std::vector<std::pair<std::string, E>>& names, E e) {
  for (const auto& [n, v] : names) {
    if (v == e) return n;
  }
  return "";
}

json ExperimentJson(const fed::ExperimentConfig& e) {
  const TaskSpec& t = e.task;
  return json{
      {"task",
       {{"feature_dim", t.feature_dim},
        {"n_classes", t.n_classes},
        {"n_clusters_per_class", t.n_clusters_per_class},
        {"class_separation", t.class_separation},
        {"noise_scale", t.noise_scale},
        {"n_members", t.n_members},
        {"samples_per_member",
         {{"train", t.samples_per_member.train},
          {"val", t.samples_per_member.val},
          {"test", t.samples_per_member.test}}}}},
      {"seeds", e.seeds},
      {"budgets",
       {{"sigma_trials", e.budgets.sigma_trials},
        {"dda_trials", e.budgets.dda_trials},
        {"epochs", e.budgets.epochs}}},
      {"fedavg", {{"rounds", e.fedavg.rounds}, {"local_epochs", e.fedavg.local_epochs}}},
      {"classifier",
       {{"hidden_dim", e.hidden_dim},
        {"batch_size", e.batch_size},
        {"learning_rate", e.learning_rate},
        {"momentum", e.momentum},
        {"lr_schedule", NameOf(kSchedules, e.lr_schedule)}}},
      {"knowledge_recycling",
       {{"generator_epochs", e.generator_epochs},
        {"n_components", e.n_components},
        {"probe_sigma", e.probe_sigma}}},
      {"hpo",
       {{"tuning_epochs", e.tuning_epochs},
        {"pruning", e.pruning},
        {"min_resource", e.pruner_min_resource},
        {"reduction_factor", e.pruner_reduction_factor}}},
      {"dda",
       {{"fraction_base", NameOf(kBases, e.fraction_base)},
        {"regeneration_mode", NameOf(kModes, e.regeneration_mode)}}},
      {"task_prefix", e.task_prefix},
  };
}

// Maps a validation message that starts with a field name onto its line.
int LineOfMessage(const std::string& text, const std::string& message) {
  std::string field = message.substr(0, message.find_first_of(" :"));
  Path path;
  std::stringstream ss(field);
  for (std::string part; std::getline(ss, part, '.');) path.push_back(part);
  if (path.empty()) return 0;
  if (int line = KeyLine(text, path)) return line;
  path.insert(path.begin(), "task");
  return KeyLine(text, path);
}

std::string Locate(int line, const std::string& file) {
  if (file.empty()) return line > 0 ? "line " + std::to_string(line) + ": " : "";
  return file + (line > 0 ? ":" + std::to_string(line) : "") + ": ";
}
}  // namespace

ConfigError::ConfigError(int line, const std::string& message, const std::string& file)
    : ValidationError(Locate(line, file) + message), line_(line), message_(message) {}

RunConfig ParseRunConfig(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(LineAt(text, e.byte > 0 ? e.byte - 1 : 0),
                      std::string("invalid JSON: ") + e.what());
  }
  Reader r(text);
  RunConfig cfg;
  fed::ExperimentConfig& e = cfg.experiment;
  r.Keys(doc, {},
         {"task", "seeds", "budgets", "fedavg", "classifier", "knowledge_recycling", "hpo", "dda",
          "methods", "mia", "output_dir", "repository", "task_prefix", "threads", "log_level"});

  if (doc.contains("task")) {
    const json& t = doc["task"];
    r.Keys(t, {"task"},
           {"feature_dim", "n_classes", "n_clusters_per_class", "class_separation", "noise_scale",
            "n_members", "samples_per_member"});
    r.Get(t, {"task"}, "feature_dim", e.task.feature_dim);
    r.Get(t, {"task"}, "n_classes", e.task.n_classes);
    r.Get(t, {"task"}, "n_clusters_per_class", e.task.n_clusters_per_class);
    r.Get(t, {"task"}, "class_separation", e.task.class_separation);
    r.Get(t, {"task"}, "noise_scale", e.task.noise_scale);
    r.Get(t, {"task"}, "n_members", e.task.n_members);
    if (t.contains("samples_per_member")) {
      const json& s = t["samples_per_member"];
      const Path p{"task", "samples_per_member"};
      r.Keys(s, p, {"train", "val", "test"});
      r.Get(s, p, "train", e.task.samples_per_member.train);
      r.Get(s, p, "val", e.task.samples_per_member.val);
      r.Get(s, p, "test", e.task.samples_per_member.test);
    }
  }
  r.Get(doc, {}, "seeds", e.seeds);
  if (doc.contains("budgets")) {
    const json& b = doc["budgets"];
    r.Keys(b, {"budgets"}, {"sigma_trials", "dda_trials", "epochs"});
    r.Get(b, {"budgets"}, "sigma_trials", e.budgets.sigma_trials);
    r.Get(b, {"budgets"}, "dda_trials", e.budgets.dda_trials);
    r.Get(b, {"budgets"}, "epochs", e.budgets.epochs);
  }
  if (doc.contains("fedavg")) {
    const json& f = doc["fedavg"];
    r.Keys(f, {"fedavg"}, {"rounds", "local_epochs"});
    r.Get(f, {"fedavg"}, "rounds", e.fedavg.rounds);
    r.Get(f, {"fedavg"}, "local_epochs", e.fedavg.local_epochs);
  }
  if (doc.contains("classifier")) {
    const json& c = doc["classifier"];
    const Path p{"classifier"};
    r.Keys(c, p, {"hidden_dim", "batch_size", "learning_rate", "momentum", "lr_schedule"});
    r.Get(c, p, "hidden_dim", e.hidden_dim);
    r.Get(c, p, "batch_size", e.batch_size);
    r.Get(c, p, "learning_rate", e.learning_rate);
    r.Get(c, p, "momentum", e.momentum);
    r.Enum(c, p, "lr_schedule", kSchedules, e.lr_schedule);
  }
  if (doc.contains("knowledge_recycling")) {
    const json& k = doc["knowledge_recycling"];
    const Path p{"knowledge_recycling"};
    r.Keys(k, p, {"generator_epochs", "n_components", "probe_sigma"});
    r.Get(k, p, "generator_epochs", e.generator_epochs);
    r.Get(k, p, "n_components", e.n_components);
    r.Get(k, p, "probe_sigma", e.probe_sigma);
  }
  if (doc.contains("hpo")) {
    const json& h = doc["hpo"];
    const Path p{"hpo"};
    r.Keys(h, p, {"tuning_epochs", "pruning", "min_resource", "reduction_factor"});
    r.Get(h, p, "tuning_epochs", e.tuning_epochs);
    r.Get(h, p, "pruning", e.pruning);
    r.Get(h, p, "min_resource", e.pruner_min_resource);
    r.Get(h, p, "reduction_factor", e.pruner_reduction_factor);
  }
  if (doc.contains("dda")) {
    const json& d = doc["dda"];
    const Path p{"dda"};
    r.Keys(d, p, {"fraction_base", "regeneration_mode"});
    r.Enum(d, p, "fraction_base", kBases, e.fraction_base);
    r.Enum(d, p, "regeneration_mode", kModes, e.regeneration_mode);
  }
  r.Get(doc, {}, "methods", cfg.methods);
  r.Get(doc, {}, "mia", cfg.mia);
  r.Get(doc, {}, "output_dir", cfg.output_dir);
  r.Get(doc, {}, "repository", cfg.repository);
  r.Get(doc, {}, "task_prefix", e.task_prefix);
  r.Get(doc, {}, "threads", e.threads);
  r.Get(doc, {}, "log_level", cfg.log_level);

  if (cfg.methods.empty()) r.Fail({"methods"}, "at least one method is required");
  std::set<std::string> seen;
  for (const auto& m : cfg.methods) {
    if (!kMethods.contains(m)) {
      r.Fail({"methods"}, "unknown method '" + m +
                              "' (expected ordinary, centralised, fedavg or fedkr)");
    }
    if (!seen.insert(m).second) r.Fail({"methods"}, "method '" + m + "' listed twice");
  }
  if (cfg.mia && !(seen.contains("ordinary") && seen.contains("fedkr"))) {
    r.Fail({"mia"}, "membership inference needs both 'ordinary' and 'fedkr' in methods");
  }
  if (!kLogLevels.contains(cfg.log_level)) {
    r.Fail({"log_level"}, "'" + cfg.log_level + "' is not a log level");
  }
  if (cfg.output_dir.empty()) r.Fail({"output_dir"}, "must not be empty");
  if (cfg.repository != kInProcess && cfg.repository.rfind("http://", 0) != 0) {
    r.Fail({"repository"}, "expected \"in-process\" or an http://host:port endpoint");
  }
  std::set<std::uint64_t> seeds(e.seeds.begin(), e.seeds.end());
  if (seeds.size() != e.seeds.size()) r.Fail({"seeds"}, "seeds must be distinct");

  try {
    e.Validate();
  } catch (const ValidationError& err) {
    throw ConfigError(LineOfMessage(text, err.what()), err.what());
  }
  return cfg;
}

RunConfig LoadRunConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(0, "cannot read config file", path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return ParseRunConfig(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(e.line(), e.message(), path.string());
  }
}

nlohmann::json ToJson(const RunConfig& cfg) {
  json out = ExperimentJson(cfg.experiment);
  out["methods"] = cfg.methods;
  out["mia"] = cfg.mia;
  out["output_dir"] = cfg.output_dir;
  out["repository"] = cfg.repository;
  out["threads"] = cfg.experiment.threads;
  out["log_level"] = cfg.log_level;
  return out;
}

std::string ConfigDigest(const RunConfig& cfg) {
  json j = ExperimentJson(cfg.experiment);
  j["methods"] = cfg.methods;
  j["mia"] = cfg.mia;
  const std::string canonical = j.dump();
  return repo::Sha256Hex(
      std::span(reinterpret_cast<const std::uint8_t*>(canonical.data()), canonical.size()));
}

}  // namespace fedkr::config
