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

#ifndef FEDKR_CONTRIBUTION_H_
#define FEDKR_CONTRIBUTION_H_

#include <cstddef>
#include <string>

#include "fedkr/dataset.h"

namespace fedkr {

// Shared synthetic datasets are this many times the member's real training
// set.
inline constexpr std::size_t kSynthMultiplier = 5;

// Allowed range of the generation standard-deviation multiplier.
inline constexpr double kSigmaLow = 0.5;
inline constexpr double kSigmaHigh = 2.5;

// A member's shareable synthetic dataset with its provenance.
struct Contribution {
  std::string member_id;
  SoftDataset synth;
  std::size_t real_size = 0;
  double sigma = 1.0;
  int checkpoint_epoch = 0;

  // Throws ValidationError unless synth has kSynthMultiplier * real_size rows
  // and sigma lies in [kSigmaLow, kSigmaHigh].
  void Validate() const;
};

}  // namespace fedkr

#endif  // FEDKR_CONTRIBUTION_H_
