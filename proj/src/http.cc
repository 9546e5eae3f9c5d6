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

#include <spdlog/spdlog.h>

// Eigen must precede httplib: <resolv.h> defines a `_res` macro.
#include "fedkr/error.h"
#include "fedkr/repository.h"

#include "httplib.h"

namespace fedkr::repo {
namespace {

constexpr const char* kManifestHeader = "X-Contribution-Manifest";

void SendError(httplib::Response& res, int status, const std::string& message) {
  res.status = status;
  res.set_content(nlohmann::json{{"error", message}}.dump(), "application/json");
}

MembershipToken BearerToken(const httplib::Request& req) {
  const std::string auth = req.get_header_value("Authorization");
  constexpr std::string_view kPrefix = "Bearer ";
  if (auth.size() > kPrefix.size() && auth.compare(0, kPrefix.size(), kPrefix) == 0) {
    return MembershipToken{auth.substr(kPrefix.size())};
  }
  return {};
}

// Runs a handler, translating library errors into HTTP statuses.
template <typename F>
void Guarded(httplib::Response& res, F&& body) {
  try {
    body();
  } catch (const ValidationError& e) {
    SendError(res, 422, e.what());
  } catch (const IntegrityError& e) {
    SendError(res, 409, e.what());
  } catch (const AccessDenied& e) {
    SendError(res, 403, e.what());
  } catch (const NotFound& e) {
    SendError(res, 404, e.what());
  } catch (const std::exception& e) {
    spdlog::error("request failed: {}", e.what());
    SendError(res, 500, e.what());
  }
}

std::string ErrorText(const httplib::Result& res) {
  try {
    auto body = nlohmann::json::parse(res->body);
    if (body.contains("error")) return body["error"].get<std::string>();
  } catch (const std::exception&) {
  }
  return res->body;
}

// Maps a non-2xx response back onto the exception the store raised.
void ThrowForStatus(const httplib::Result& res, const std::string& what) {
  if (!res) {
    throw NetworkError(what + ": " + httplib::to_string(res.error()));
  }
  if (res->status >= 200 && res->status < 300) return;
  const std::string message = what + ": " + ErrorText(res);
  switch (res->status) {
    case 400:
    case 422: throw ValidationError(message);
    case 409: throw IntegrityError(message);
    case 401:
    case 403: throw AccessDenied(message);
    case 404: throw NotFound(message);
    default: throw NetworkError(message + " (HTTP " + std::to_string(res->status) + ")");
  }
}

httplib::Client MakeClient(const std::string& endpoint) {
  httplib::Client client(endpoint);
  client.set_connection_timeout(5);
  client.set_read_timeout(60);
  client.set_write_timeout(60);
  return client;
}

httplib::Headers AuthHeaders(const MembershipToken& token) {
  httplib::Headers headers;
  if (!token.empty()) headers.emplace("Authorization", "Bearer " + token.value);
  return headers;
}

std::string TaskPath(const std::string& task_id) {
  return "/v1/tasks/" + httplib::detail::encode_url(task_id) + "/contributions";
}

}  // namespace

RepositoryServer::RepositoryServer(RepositoryStore& store)
    : store_(store), server_(std::make_unique<httplib::Server>()) {
  Routes();
}

RepositoryServer::~RepositoryServer() { Stop(); }

void RepositoryServer::Routes() {
  server_->Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
    Guarded(res, [&] {
      HealthInfo info = store_.Health();
      res.set_content(nlohmann::json{{"version", info.version},
                                     {"contributions", info.contributions},
                                     {"quarantined", info.quarantined}}
                          .dump(),
                      "application/json");
    });
  });

  server_->Post(R"(/v1/tasks/([^/]+)/contributions)",
                [this](const httplib::Request& req, httplib::Response& res) {
                  Guarded(res, [&] {
                    const std::string task = req.matches[1];
                    if (!req.is_multipart_form_data() || !req.has_file("manifest") ||
                        !req.has_file("payload")) {
                      SendError(res, 400,
                                "expected multipart parts 'manifest' and 'payload'");
                      return;
                    }
                    nlohmann::json j;
                    try {
                      j = nlohmann::json::parse(req.get_file_value("manifest").content);
                    } catch (const nlohmann::json::exception& e) {
                      SendError(res, 400, std::string("manifest is not JSON: ") + e.what());
                      return;
                    }
                    auto draft = j.get<ContributionManifest>();
                    const std::string& bytes = req.get_file_value("payload").content;
                    std::vector<std::uint8_t> payload(bytes.begin(), bytes.end());
                    UploadReceipt receipt = store_.Upload(task, std::move(draft),
                                                          std::move(payload));
                    res.status = 201;
                    res.set_content(nlohmann::json{{"manifest", receipt.manifest},
                                                   {"token", receipt.token.value}}
                                        .dump(),
                                    "application/json");
                  });
                });

  server_->Get(R"(/v1/tasks/([^/]+)/contributions)",
               [this](const httplib::Request& req, httplib::Response& res) {
                 Guarded(res, [&] {
                   MembershipToken token = BearerToken(req);
                   if (token.empty()) {
                     SendError(res, 401, "membership token required");
                     return;
                   }
                   auto manifests = store_.List(req.matches[1], token);
                   res.set_content(nlohmann::json(manifests).dump(), "application/json");
                 });
               });

  server_->Get(R"(/v1/tasks/([^/]+)/contributions/([^/]+))",
               [this](const httplib::Request& req, httplib::Response& res) {
                 Guarded(res, [&] {
                   MembershipToken token = BearerToken(req);
                   if (token.empty()) {
                     SendError(res, 401, "membership token required");
                     return;
                   }
                   auto blob = store_.Fetch(req.matches[1], token, req.matches[2]);
                   res.set_header(kManifestHeader, nlohmann::json(blob.manifest).dump());
                   res.set_content(std::string(blob.payload.begin(), blob.payload.end()),
                                   "application/octet-stream");
                 });
               });
}

int RepositoryServer::Start(const std::string& host, int port) {
  int bound = port == 0 ? server_->bind_to_any_port(host)
                        : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) {
    throw NetworkError("cannot bind " + host + ":" + std::to_string(port));
  }
  port_ = bound;
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  spdlog::info("repository listening on {}:{}", host, port_);
  return port_;
}

void RepositoryServer::Listen(const std::string& host, int port) {
  if (!server_->bind_to_port(host, port)) {
    throw NetworkError("cannot bind " + host + ":" + std::to_string(port));
  }
  port_ = port;
  spdlog::info("repository listening on {}:{}", host, port_);
  server_->listen_after_bind();
}

void RepositoryServer::Stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

HttpClient::HttpClient(std::string endpoint) : endpoint_(std::move(endpoint)) {
  while (!endpoint_.empty() && endpoint_.back() == '/') endpoint_.pop_back();
  if (endpoint_.rfind("http://", 0) != 0) {
    throw ValidationError("endpoint must look like http://host:port, got '" + endpoint_ + "'");
  }
}

UploadReceipt HttpClient::Upload(const std::string& task_id,
                                 const Contribution& contribution) {
  contribution.Validate();
  std::vector<std::uint8_t> payload = EncodePayload(contribution.synth);
  ContributionManifest draft = DraftManifest(task_id, contribution, payload);
  httplib::MultipartFormDataItems items{
      {"manifest", nlohmann::json(draft).dump(), "manifest.json", "application/json"},
      {"payload", std::string(payload.begin(), payload.end()), "payload.bin",
       "application/octet-stream"},
  };
  auto client = MakeClient(endpoint_);
  auto res = client.Post(TaskPath(task_id), items);
  ThrowForStatus(res, "upload for " + contribution.member_id);
  auto body = nlohmann::json::parse(res->body);
  return UploadReceipt{body.at("manifest").get<ContributionManifest>(),
                       MembershipToken{body.at("token").get<std::string>()}};
}

std::vector<ContributionManifest> HttpClient::List(const std::string& task_id,
                                                   const MembershipToken& token) {
  auto client = MakeClient(endpoint_);
  auto res = client.Get(TaskPath(task_id), AuthHeaders(token));
  ThrowForStatus(res, "list " + task_id);
  return nlohmann::json::parse(res->body).get<std::vector<ContributionManifest>>();
}

SoftDataset HttpClient::Download(const std::string& task_id, const MembershipToken& token,
                                 const std::string& contribution_id) {
  auto client = MakeClient(endpoint_);
  auto res = client.Get(TaskPath(task_id) + "/" + httplib::detail::encode_url(contribution_id),
                        AuthHeaders(token));
  ThrowForStatus(res, "download " + contribution_id);
  if (!res->has_header(kManifestHeader)) {
    throw NetworkError("download " + contribution_id + ": response lacks a manifest");
  }
  auto manifest =
      nlohmann::json::parse(res->get_header_value(kManifestHeader)).get<ContributionManifest>();
  std::span<const std::uint8_t> bytes(reinterpret_cast<const std::uint8_t*>(res->body.data()),
                                      res->body.size());
  return VerifyAndDecode(bytes, manifest);
}

HealthInfo HttpClient::Health() {
  auto client = MakeClient(endpoint_);
  auto res = client.Get("/v1/health");
  ThrowForStatus(res, "health");
  auto body = nlohmann::json::parse(res->body);
  return HealthInfo{body.at("version").get<std::string>(),
                    body.at("contributions").get<std::size_t>(),
                    body.at("quarantined").get<std::vector<std::string>>()};
}

}  // namespace fedkr::repo
