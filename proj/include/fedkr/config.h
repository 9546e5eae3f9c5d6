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

#ifndef FEDKR_CONFIG_H_
#define FEDKR_CONFIG_H_

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "fedkr/error.h"
#include "fedkr/federation.h"

namespace fedkr::config {

// A configuration problem, located at a line of the source document when one
// can be found (line 0 otherwise).
class ConfigError : public ValidationError {
 public:
  ConfigError(int line, const std::string& message, const std::string& file = "");
  int line() const { return line_; }
  const std::string& message() const { return message_; }

 private:
  int line_;
  std::string message_;
};

inline constexpr const char* kInProcess = "in-process";

struct RunConfig {
  fed::ExperimentConfig experiment;
  std::vector<std::string> methods{"ordinary", "centralised", "fedavg", "fedkr"};
  bool mia = false;  // attack Ordinary models and FedKR students
  std::string output_dir = "results";
  std::string repository = kInProcess;  // or "http://host:port"
  std::string log_level = "info";
};

// Every key is optional; absent keys keep their defaults and unknown keys are
// rejected. Throws ConfigError.
RunConfig ParseRunConfig(const std::string& text);
RunConfig LoadRunConfig(const std::filesystem::path& path);

// Full document with every default filled in.
nlohmann::json ToJson(const RunConfig& cfg);

// SHA-256 of the settings that determine results (everything except output
// location, repository endpoint, log level and thread count).
std::string ConfigDigest(const RunConfig& cfg);

}  // namespace fedkr::config

#endif  // FEDKR_CONFIG_H_
