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

#ifndef FEDKR_ERROR_H_
#define FEDKR_ERROR_H_

#include <stdexcept>
#include <string>

namespace fedkr {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A precondition on an argument or configuration does not hold.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Training or evaluation produced non-finite numbers.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Stored or transmitted bytes do not match their declared checksum.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// The caller holds no valid membership token for the requested task.
class AccessDenied : public Error {
 public:
  using Error::Error;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

// Transport-level failure talking to a remote repository.
class NetworkError : public Error {
 public:
  using Error::Error;
};

}  // namespace fedkr

#endif  // FEDKR_ERROR_H_
