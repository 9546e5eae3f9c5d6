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

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <random>

#include <spdlog/spdlog.h>

#include "fedkr/error.h"
#include "fedkr/repository.h"

namespace fedkr::repo {
namespace {

namespace fs = std::filesystem;

std::string RandomHex128() {
  static std::mutex mu;
  static std::random_device device;
  std::lock_guard lock(mu);
  char buf[33];
  std::uint64_t hi = (static_cast<std::uint64_t>(device()) << 32) | device();
  std::uint64_t lo = (static_cast<std::uint64_t>(device()) << 32) | device();
  std::snprintf(buf, sizeof(buf), "%016llx%016llx", static_cast<unsigned long long>(hi),
                static_cast<unsigned long long>(lo));
  return buf;
}

std::string UtcNow() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

bool ValidTaskId(const std::string& task) {
  if (task.empty() || task.size() > 128) return false;
  for (char c : task) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) {
      return false;
    }
  }
  return true;
}

void WriteFileAtomically(const fs::path& path, std::span<const std::uint8_t> bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw Error("failed to write " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::vector<std::uint8_t> ReadFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("missing file " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

std::span<const std::uint8_t> AsBytes(const std::string& s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

}  // namespace

RepositoryStore::RepositoryStore(std::filesystem::path storage_dir)
    : dir_(std::move(storage_dir)) {
  if (dir_.empty()) return;
  std::error_code ec;
  fs::create_directories(dir_ / "contributions", ec);
  if (ec) throw Error("cannot create storage directory " + dir_.string() + ": " + ec.message());
  Recover();
}

void RepositoryStore::Recover() {
  std::ifstream in(dir_ / "index.jsonl");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json event;
    try {
      event = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      // A torn final write leaves a partial line; everything before it stands.
      spdlog::warn("index.jsonl:{}: unreadable entry skipped", line_no);
      continue;
    }
    const std::string kind = event.value("event", "");
    if (kind == "token") {
      tokens_[event.at("token").get<std::string>()] =
          TokenInfo{event.at("task_id").get<std::string>(),
                    event.at("member_id").get<std::string>()};
    } else if (kind == "contribution") {
      const std::string id = event.at("contribution_id").get<std::string>();
      Record record;
      try {
        auto bytes = ReadFile(dir_ / "contributions" / (id + ".json"));
        record.manifest = nlohmann::json::parse(bytes.begin(), bytes.end())
                              .get<ContributionManifest>();
        auto payload = ReadFile(dir_ / "contributions" / (id + ".payload"));
        if (Sha256Hex(payload) != record.manifest.payload_checksum) {
          throw IntegrityError("checksum mismatch");
        }
      } catch (const std::exception& e) {
        spdlog::warn("contribution {} quarantined: {}", id, e.what());
        record.manifest.contribution_id = id;
        record.manifest.task_id = event.value("task_id", "");
        record.manifest.member_id = event.value("member_id", "");
        record.quarantined = true;
      }
      latest_[{record.manifest.task_id, record.manifest.member_id}] = id;
      records_[id] = std::move(record);
    }
  }
}

void RepositoryStore::AppendIndex(const nlohmann::json& event) {
  if (dir_.empty()) return;
  std::lock_guard lock(index_mu_);
  std::ofstream out(dir_ / "index.jsonl", std::ios::app);
  out << event.dump() << '\n';
  out.flush();
  if (!out) throw Error("failed to append to the repository index");
}

UploadReceipt RepositoryStore::Upload(const std::string& task_id,
                                      ContributionManifest draft,
                                      std::vector<std::uint8_t> payload) {
  if (!ValidTaskId(task_id)) throw ValidationError("invalid task id '" + task_id + "'");
  if (draft.format_version != kManifestFormatVersion) {
    throw ValidationError("unsupported manifest format_version " +
                          std::to_string(draft.format_version));
  }
  if (draft.task_id != task_id) {
    throw ValidationError("manifest task_id '" + draft.task_id + "' != '" + task_id + "'");
  }
  if (draft.member_id.empty()) throw ValidationError("manifest member_id is empty");
  if (draft.real_size == 0 || draft.n_samples != kSynthMultiplier * draft.real_size) {
    throw ValidationError("n_samples " + std::to_string(draft.n_samples) + " is not " +
                          std::to_string(kSynthMultiplier) + " x real_size " +
                          std::to_string(draft.real_size));
  }
  if (!(draft.sigma >= kSigmaLow && draft.sigma <= kSigmaHigh)) {
    throw ValidationError("sigma outside [0.5, 2.5]");
  }
  if (Sha256Hex(payload) != draft.payload_checksum) {
    throw IntegrityError("payload does not match payload_checksum");
  }
  DecodePayload(payload, draft);  // structural check of the rows

  draft.contribution_id = RandomHex128();
  draft.created_at = UtcNow();
  MembershipToken token{RandomHex128()};

  Record record{draft, {}, false};
  if (dir_.empty()) {
    record.payload = std::move(payload);
  } else {
    const fs::path base = dir_ / "contributions" / draft.contribution_id;
    WriteFileAtomically(fs::path(base) += ".payload", payload);
    const std::string manifest = nlohmann::json(draft).dump(2);
    WriteFileAtomically(fs::path(base) += ".json", AsBytes(manifest));
  }

  {
    std::unique_lock lock(mu_);
    AppendIndex({{"event", "contribution"},
                 {"contribution_id", draft.contribution_id},
                 {"task_id", task_id},
                 {"member_id", draft.member_id}});
    AppendIndex({{"event", "token"},
                 {"token", token.value},
                 {"task_id", task_id},
                 {"member_id", draft.member_id}});
    records_[draft.contribution_id] = std::move(record);
    latest_[{task_id, draft.member_id}] = draft.contribution_id;
    tokens_[token.value] = TokenInfo{task_id, draft.member_id};
  }
  spdlog::debug("task {}: stored contribution {} from {}", task_id, draft.contribution_id,
               draft.member_id);
  return UploadReceipt{draft, token};
}

void RepositoryStore::CheckToken(const std::string& task_id,
                                 const MembershipToken& token) const {
  if (token.empty()) {
    throw AccessDenied("a membership token is required; contribute to task '" + task_id +
                       "' first");
  }
  auto it = tokens_.find(token.value);
  if (it == tokens_.end() || it->second.task_id != task_id) {
    throw AccessDenied("token is not a membership of task '" + task_id + "'");
  }
}

std::vector<ContributionManifest> RepositoryStore::List(const std::string& task_id,
                                                        const MembershipToken& token) const {
  std::shared_lock lock(mu_);
  CheckToken(task_id, token);
  std::vector<ContributionManifest> out;
  for (const auto& [key, id] : latest_) {
    if (key.first != task_id) continue;
    const Record& record = records_.at(id);
    if (!record.quarantined) out.push_back(record.manifest);
  }
  return out;
}

RepositoryStore::Blob RepositoryStore::Fetch(const std::string& task_id,
                                             const MembershipToken& token,
                                             const std::string& contribution_id) {
  Blob blob;
  {
    std::shared_lock lock(mu_);
    CheckToken(task_id, token);
    auto it = records_.find(contribution_id);
    if (it == records_.end() || it->second.manifest.task_id != task_id ||
        it->second.quarantined) {
      throw NotFound("no contribution '" + contribution_id + "' in task '" + task_id + "'");
    }
    blob.manifest = it->second.manifest;
    if (dir_.empty()) blob.payload = it->second.payload;
  }
  if (!dir_.empty()) {
    blob.payload = ReadFile(dir_ / "contributions" / (contribution_id + ".payload"));
  }
  if (Sha256Hex(blob.payload) != blob.manifest.payload_checksum) {
    std::unique_lock lock(mu_);
    records_[contribution_id].quarantined = true;
    spdlog::error("contribution {} failed its checksum and was quarantined", contribution_id);
    throw IntegrityError("stored payload of " + contribution_id + " is corrupt");
  }
  return blob;
}

HealthInfo RepositoryStore::Health() const {
  std::shared_lock lock(mu_);
  HealthInfo info{kServiceVersion, 0, {}};
  for (const auto& [key, id] : latest_) {
    if (!records_.at(id).quarantined) ++info.contributions;
  }
  for (const auto& [id, record] : records_) {
    if (record.quarantined) info.quarantined.push_back(id);
  }
  return info;
}

UploadReceipt InProcessClient::Upload(const std::string& task_id,
                                      const Contribution& contribution) {
  contribution.Validate();
  std::vector<std::uint8_t> payload = EncodePayload(contribution.synth);
  ContributionManifest draft = DraftManifest(task_id, contribution, payload);
  return store_.Upload(task_id, std::move(draft), std::move(payload));
}

std::vector<ContributionManifest> InProcessClient::List(const std::string& task_id,
                                                        const MembershipToken& token) {
  return store_.List(task_id, token);
}

SoftDataset InProcessClient::Download(const std::string& task_id,
                                      const MembershipToken& token,
                                      const std::string& contribution_id) {
  auto blob = store_.Fetch(task_id, token, contribution_id);
  return VerifyAndDecode(blob.payload, blob.manifest);
}

HealthInfo InProcessClient::Health() { return store_.Health(); }

}  // namespace fedkr::repo
