// Copyright 2026 The Osq Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef OSQ_ERROR_HPP_
#define OSQ_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace osq {

enum class ErrorKind {
  kInvalidArgument,  // malformed inputs (bad example, mismatched rollout)
  kDomain,           // numeric domain violations (NaN/Inf, p outside [0,1])
  kShape,            // tensor/vector extent mismatch
  kConfig,           // invalid configuration value
  kIo,               // file system failures
  kFormat,           // corrupt or unrecognized file contents
  kCapacity,         // enumeration bound exceeded
  kAborted,          // run aborted (e.g. repeated non-finite gradients)
};

const char* error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

inline const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid_argument";
    case ErrorKind::kDomain: return "domain";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kCapacity: return "capacity";
    case ErrorKind::kAborted: return "aborted";
  }
  return "unknown";
}

}  // namespace osq

#endif  // OSQ_ERROR_HPP_
