// Copyright 2026 The alrnet Authors.
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

#pragma once

#include <stdexcept>
#include <string>

namespace alr {

/// Error categories. The numeric values are the C API status codes and, for
/// the first four, the CLI exit codes.
enum class ErrorCode : int {
  Internal = 1,
  Config = 2,      // bad usage, flag or configuration value
  Io = 3,          // unreadable/unwritable file, malformed file contents
  Missing = 4,     // prerequisite artifact absent (checkpoint, scaler)
  Numeric = 5,     // non-finite intermediate
  Degenerate = 6,  // statistic undefined for the given data
  Usage = 7,       // API misuse (e.g. backward without a recorded forward)
  Skipped = 8,     // measurement not possible, caller may continue
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

#define ALR_DEFINE_ERROR(Name, Code)                                   \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& what) : Error(ErrorCode::Code, what) {} \
  };

ALR_DEFINE_ERROR(ConfigError, Config)
ALR_DEFINE_ERROR(IoError, Io)
ALR_DEFINE_ERROR(MissingError, Missing)
ALR_DEFINE_ERROR(NumericError, Numeric)
ALR_DEFINE_ERROR(DegenerateError, Degenerate)
ALR_DEFINE_ERROR(UsageError, Usage)
ALR_DEFINE_ERROR(SkippedError, Skipped)

#undef ALR_DEFINE_ERROR

/// Malformed file contents. Reported through the I/O category.
class FormatError : public IoError {
 public:
  FormatError(const std::string& field, const std::string& what)
      : IoError("format error in '" + field + "': " + what), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace alr
