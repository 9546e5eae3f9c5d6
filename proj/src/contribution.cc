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

#include "fedkr/contribution.h"

#include "fedkr/error.h"

namespace fedkr {

void Contribution::Validate() const {
  if (member_id.empty()) throw ValidationError("contribution without member_id");
  if (real_size == 0) throw ValidationError("contribution real_size must be > 0");
  if (synth.size() != kSynthMultiplier * real_size) {
    throw ValidationError("contribution has " + std::to_string(synth.size()) +
                          " samples; expected " +
                          std::to_string(kSynthMultiplier * real_size));
  }
  if (!(sigma >= kSigmaLow && sigma <= kSigmaHigh)) {
    throw ValidationError("contribution sigma outside [0.5, 2.5]");
  }
}

}  // namespace fedkr
