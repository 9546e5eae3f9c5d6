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

#ifndef FEDKR_AUDIT_H_
#define FEDKR_AUDIT_H_

#include <mutex>
#include <string>
#include <vector>

namespace fedkr {

// Records reads of private shards whose owner differs from the member on
// whose behalf the current thread is running.
class AccessAudit {
 public:
  struct Violation {
    std::string actor;
    std::string owner;
  };

  void RecordAccess(const std::string& owner);
  std::vector<Violation> violations() const;
  std::size_t access_count() const;

 private:
  mutable std::mutex mu_;
  std::vector<Violation> violations_;
  std::size_t accesses_ = 0;
};

// Sets the acting member for the current thread for the guard's lifetime.
// Outside any guard the actor is empty and no access is attributed.
class ActingAs {
 public:
  explicit ActingAs(std::string member_id);
  ~ActingAs();
  ActingAs(const ActingAs&) = delete;
  ActingAs& operator=(const ActingAs&) = delete;

  static const std::string& Current();

 private:
  std::string previous_;
};

}  // namespace fedkr

#endif  // FEDKR_AUDIT_H_
