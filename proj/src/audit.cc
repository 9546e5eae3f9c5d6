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

#include "fedkr/audit.h"

namespace fedkr {
namespace {
thread_local std::string current_actor;
}  // namespace

void AccessAudit::RecordAccess(const std::string& owner) {
  const std::string& actor = ActingAs::Current();
  std::lock_guard lock(mu_);
  ++accesses_;
  if (!actor.empty() && actor != owner) violations_.push_back({actor, owner});
}

std::vector<AccessAudit::Violation> AccessAudit::violations() const {
  std::lock_guard lock(mu_);
  return violations_;
}

std::size_t AccessAudit::access_count() const {
  std::lock_guard lock(mu_);
  return accesses_;
}

ActingAs::ActingAs(std::string member_id) : previous_(std::move(current_actor)) {
  current_actor = std::move(member_id);
}

ActingAs::~ActingAs() { current_actor = std::move(previous_); }

const std::string& ActingAs::Current() { return current_actor; }

}  // namespace fedkr
