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

#include <bit>
#include <cmath>
#include <cstdio>

#include <openssl/evp.h>

#include "fedkr/error.h"
#include "fedkr/repository.h"

namespace fedkr::repo {

void to_json(nlohmann::json& j, const ContributionManifest& m) {
  j = nlohmann::json{{"format_version", m.format_version},
                     {"contribution_id", m.contribution_id},
                     {"member_id", m.member_id},
                     {"task_id", m.task_id},
                     {"n_samples", m.n_samples},
                     {"feature_dim", m.feature_dim},
                     {"n_classes", m.n_classes},
                     {"real_size", m.real_size},
                     {"sigma", m.sigma},
                     {"payload_checksum", m.payload_checksum},
                     {"created_at", m.created_at}};
}

void from_json(const nlohmann::json& j, ContributionManifest& m) {
  if (!j.is_object()) throw ValidationError("manifest must be a JSON object");
  try {
    m.format_version = j.at("format_version").get<int>();
    m.contribution_id = j.value("contribution_id", "");
    m.member_id = j.at("member_id").get<std::string>();
    m.task_id = j.at("task_id").get<std::string>();
    m.n_samples = j.at("n_samples").get<std::size_t>();
    m.feature_dim = j.at("feature_dim").get<int>();
    m.n_classes = j.at("n_classes").get<int>();
    m.real_size = j.at("real_size").get<std::size_t>();
    m.sigma = j.at("sigma").get<double>();
    m.payload_checksum = j.at("payload_checksum").get<std::string>();
    m.created_at = j.value("created_at", "");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed manifest: ") + e.what());
  }
}

std::string Sha256Hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::vector<std::uint8_t> EncodePayload(const SoftDataset& synth) {
  const auto rows = static_cast<Eigen::Index>(synth.size());
  const int dim = synth.feature_dim();
  const int classes = synth.n_classes();
  std::vector<std::uint8_t> out;
  out.reserve(static_cast<std::size_t>(rows) * static_cast<std::size_t>(dim + classes) * 4);
  auto put = [&out](double v) {
    auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  };
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (int d = 0; d < dim; ++d) put(synth.features()(i, d));
    for (int c = 0; c < classes; ++c) put(synth.soft_labels()(i, c));
  }
  return out;
}

SoftDataset DecodePayload(std::span<const std::uint8_t> bytes,
                          const ContributionManifest& manifest) {
  if (manifest.feature_dim <= 0 || manifest.n_classes <= 0) {
    throw ValidationError("manifest dimensions must be positive");
  }
  const auto width = static_cast<std::size_t>(manifest.feature_dim + manifest.n_classes);
  const std::size_t expected = manifest.n_samples * width * 4;
  if (bytes.size() != expected) {
    throw ValidationError("payload is " + std::to_string(bytes.size()) +
                          " bytes; manifest implies " + std::to_string(expected));
  }
  const auto rows = static_cast<Eigen::Index>(manifest.n_samples);
  Matrix x(rows, manifest.feature_dim);
  Matrix y(rows, manifest.n_classes);
  std::size_t at = 0;
  auto get = [&]() {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(bytes[at + i]) << (8 * i);
    at += 4;
    float v = std::bit_cast<float>(bits);
    if (!std::isfinite(v)) throw ValidationError("payload contains a non-finite value");
    return static_cast<double>(v);
  };
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (int d = 0; d < manifest.feature_dim; ++d) x(i, d) = get();
    for (int c = 0; c < manifest.n_classes; ++c) y(i, c) = get();
  }
  // float32 quantization leaves row sums a little off one.
  return SoftDataset(std::move(x), std::move(y), 1e-4);
}

SoftDataset VerifyAndDecode(std::span<const std::uint8_t> bytes,
                            const ContributionManifest& manifest) {
  if (Sha256Hex(bytes) != manifest.payload_checksum) {
    throw IntegrityError("payload checksum mismatch for contribution " +
                         manifest.contribution_id);
  }
  return DecodePayload(bytes, manifest);
}

ContributionManifest DraftManifest(const std::string& task_id,
                                   const Contribution& contribution,
                                   std::span<const std::uint8_t> payload) {
  ContributionManifest m;
  m.member_id = contribution.member_id;
  m.task_id = task_id;
  m.n_samples = contribution.synth.size();
  m.feature_dim = contribution.synth.feature_dim();
  m.n_classes = contribution.synth.n_classes();
  m.real_size = contribution.real_size;
  m.sigma = contribution.sigma;
  m.payload_checksum = Sha256Hex(payload);
  return m;
}

}  // namespace fedkr::repo
