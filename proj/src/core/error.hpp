/*
 * Copyright 2026 The FACTS Slicer Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FACTS_CORE_ERROR_HPP_
#define FACTS_CORE_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace facts {

// Error categories. The numeric values are mirrored by facts_status_t in the
// public C header and must stay in sync.
enum class ErrorCode : int {
  kInvalidArgument = 1,
  kIo = 2,
  kFormat = 3,
  kBadMagic = 4,
  kDtypeMismatch = 5,
  kRowMismatch = 6,
  kNonFinite = 7,
  kUndefinedMetric = 8,
  kDivergence = 9,
  kMissingBlock = 10,
  kEmptyClass = 11,
  kFitFailed = 12,
  kInternal = 99,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kIo: return "i/o error";
    case ErrorCode::kFormat: return "format error";
    case ErrorCode::kBadMagic: return "bad magic";
    case ErrorCode::kDtypeMismatch: return "dtype mismatch";
    case ErrorCode::kRowMismatch: return "row-count mismatch";
    case ErrorCode::kNonFinite: return "non-finite value";
    case ErrorCode::kUndefinedMetric: return "undefined metric";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kMissingBlock: return "missing block";
    case ErrorCode::kEmptyClass: return "empty class";
    case ErrorCode::kFitFailed: return "fit failed";
    case ErrorCode::kInternal: return "internal error";
  }
  return "unknown error";
}

[[noreturn]] inline void Fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void Require(bool condition, const std::string& message) {
  if (!condition) Fail(ErrorCode::kInvalidArgument, message);
}

}  // namespace facts

#endif  // FACTS_CORE_ERROR_HPP_
