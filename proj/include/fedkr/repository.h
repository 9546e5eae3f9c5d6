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

#ifndef FEDKR_REPOSITORY_H_
#define FEDKR_REPOSITORY_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "fedkr/contribution.h"
#include "fedkr/dataset.h"

namespace httplib {
class Server;
}

namespace fedkr::repo {

inline constexpr int kManifestFormatVersion = 1;
inline constexpr const char* kServiceVersion = "0.1.0";

// Metadata stored next to each shared payload.
struct ContributionManifest {
  int format_version = kManifestFormatVersion;
  std::string contribution_id;  // assigned by the server
  std::string member_id;
  std::string task_id;
  std::size_t n_samples = 0;
  int feature_dim = 0;
  int n_classes = 0;
  std::size_t real_size = 0;
  double sigma = 1.0;
  std::string payload_checksum;  // lowercase hex SHA-256 of the payload
  std::string created_at;        // UTC, RFC 3339

  friend bool operator==(const ContributionManifest&, const ContributionManifest&) = default;
};

void to_json(nlohmann::json& j, const ContributionManifest& m);
void from_json(const nlohmann::json& j, ContributionManifest& m);

// Credential earned by contributing; bound to (member_id, task_id).
struct MembershipToken {
  std::string value;

  bool empty() const { return value.empty(); }
  friend bool operator==(const MembershipToken&, const MembershipToken&) = default;
};

std::string Sha256Hex(std::span<const std::uint8_t> bytes);

// Rows of little-endian float32: feature_dim features then n_classes soft
// labels per row, row-major, no padding.
std::vector<std::uint8_t> EncodePayload(const SoftDataset& synth);

// Inverse of EncodePayload. Throws ValidationError on a length mismatch,
// non-finite values or a soft-label row whose sum is off by more than 1e-4.
SoftDataset DecodePayload(std::span<const std::uint8_t> bytes,
                          const ContributionManifest& manifest);

// Checks the payload against manifest.payload_checksum (IntegrityError on
// mismatch) and decodes it.
SoftDataset VerifyAndDecode(std::span<const std::uint8_t> bytes,
                            const ContributionManifest& manifest);

// Client-side manifest for an upload; id and timestamp are left empty.
ContributionManifest DraftManifest(const std::string& task_id,
                                   const Contribution& contribution,
                                   std::span<const std::uint8_t> payload);

struct UploadReceipt {
  ContributionManifest manifest;
  MembershipToken token;
};

struct HealthInfo {
  std::string version;
  std::size_t contributions = 0;  // live (listed) records
  std::vector<std::string> quarantined;
};

// Contribution registry shared by the HTTP service and in-process clients.
//
// Payloads are immutable once written; re-uploads by the same member for the
// same task replace the listed record but keep the old payload. With a
// storage directory every record survives a restart:
//   <dir>/index.jsonl                   append-only event log
//   <dir>/contributions/<id>.json       manifest
//   <dir>/contributions/<id>.payload    payload bytes
// Records whose payload fails its checksum are quarantined and not listed.
class RepositoryStore {
 public:
  // An empty path keeps everything in memory.
  explicit RepositoryStore(std::filesystem::path storage_dir = {});

  // Validates manifest/payload consistency (ValidationError) and the checksum
  // (IntegrityError), stores the record and issues a token.
  UploadReceipt Upload(const std::string& task_id, ContributionManifest draft,
                       std::vector<std::uint8_t> payload);

  // Live manifests of the task ordered by member_id. AccessDenied unless the
  // token was issued by an upload to this task.
  std::vector<ContributionManifest> List(const std::string& task_id,
                                         const MembershipToken& token) const;

  struct Blob {
    ContributionManifest manifest;
    std::vector<std::uint8_t> payload;
  };
  // NotFound for unknown or delisted ids; IntegrityError (and quarantine)
  // when stored bytes no longer match.
  Blob Fetch(const std::string& task_id, const MembershipToken& token,
             const std::string& contribution_id);

  HealthInfo Health() const;
  const std::filesystem::path& storage_dir() const { return dir_; }

 private:
  struct Record {
    ContributionManifest manifest;
    std::vector<std::uint8_t> payload;  // memory mode only
    bool quarantined = false;
  };
  struct TokenInfo {
    std::string task_id;
    std::string member_id;
  };

  void Recover();
  void AppendIndex(const nlohmann::json& event);
  void CheckToken(const std::string& task_id, const MembershipToken& token) const;

  std::filesystem::path dir_;
  mutable std::shared_mutex mu_;
  std::mutex index_mu_;
  std::map<std::string, Record> records_;
  // (task, member) -> contribution id of the listed record.
  std::map<std::pair<std::string, std::string>, std::string> latest_;
  std::map<std::string, TokenInfo> tokens_;
};

class RepositoryClient {
 public:
  virtual ~RepositoryClient() = default;

  virtual UploadReceipt Upload(const std::string& task_id,
                               const Contribution& contribution) = 0;
  virtual std::vector<ContributionManifest> List(const std::string& task_id,
                                                 const MembershipToken& token) = 0;
  // Payload decoded after verifying its checksum; bit-identical to the
  // uploaded dataset at float32 precision.
  virtual SoftDataset Download(const std::string& task_id,
                               const MembershipToken& token,
                               const std::string& contribution_id) = 0;
  virtual HealthInfo Health() = 0;
};

// Calls a RepositoryStore directly, through the same validation and encoding
// as the HTTP path.
class InProcessClient : public RepositoryClient {
 public:
  explicit InProcessClient(RepositoryStore& store) : store_(store) {}

  UploadReceipt Upload(const std::string& task_id, const Contribution& contribution) override;
  std::vector<ContributionManifest> List(const std::string& task_id,
                                         const MembershipToken& token) override;
  SoftDataset Download(const std::string& task_id, const MembershipToken& token,
                       const std::string& contribution_id) override;
  HealthInfo Health() override;

 private:
  RepositoryStore& store_;
};

// HTTP/1.1 client for RepositoryServer. Endpoint form: "http://host:port".
class HttpClient : public RepositoryClient {
 public:
  explicit HttpClient(std::string endpoint);

  UploadReceipt Upload(const std::string& task_id, const Contribution& contribution) override;
  std::vector<ContributionManifest> List(const std::string& task_id,
                                         const MembershipToken& token) override;
  SoftDataset Download(const std::string& task_id, const MembershipToken& token,
                       const std::string& contribution_id) override;
  HealthInfo Health() override;

  const std::string& endpoint() const { return endpoint_; }

 private:
  std::string endpoint_;
};

// HTTP front end:
//   GET  /v1/health
//   POST /v1/tasks/{task}/contributions        multipart: manifest (JSON), payload (binary)
//   GET  /v1/tasks/{task}/contributions        Authorization: Bearer <token>
//   GET  /v1/tasks/{task}/contributions/{id}   Authorization: Bearer <token>
class RepositoryServer {
 public:
  explicit RepositoryServer(RepositoryStore& store);
  ~RepositoryServer();
  RepositoryServer(const RepositoryServer&) = delete;
  RepositoryServer& operator=(const RepositoryServer&) = delete;

  // Binds and serves on a background thread. Port 0 picks a free port.
  // Returns the bound port; throws NetworkError when binding fails.
  int Start(const std::string& host, int port);
  // Blocks serving on the calling thread until Stop().
  void Listen(const std::string& host, int port);
  void Stop();
  int port() const { return port_; }

 private:
  void Routes();

  RepositoryStore& store_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace fedkr::repo

#endif  // FEDKR_REPOSITORY_H_
