// Copyright 2026 The Authors.
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

#ifndef CRUST_ERROR_H_
#define CRUST_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace crust {

// Every failure raised by the library carries one of these codes so callers
// (and tests) can branch on the kind of failure rather than on message text.
enum class ErrorCode {
  // linalg
  kNonSymmetric,
  kNonFinite,
  kTooFewPoints,
  kShapeMismatch,
  // data
  kBadConfig,
  kBadMagic,
  kTruncatedFile,
  kDimensionMismatch,
  kTooFewClasses,
  // model
  kDimMismatch,
  kNonFiniteLoss,
  kBadCheckpoint,
  // coreset
  kEmptySet,
  kBadK,
  kDegenerateAffinity,
  kAllClustersFiltered,
  // bounds
  kBadInput,
  kEmptySelection,
  // continual
  kEmptyExperience,
  // metrics
  kIncompleteRow,
  kTooFewExperiences,
  kEmptyStore,
  // experiment / cli
  kConfigError,
  kIoError,
  kNoResults,
};

std::string_view ErrorCodeName(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace crust

#endif  // CRUST_ERROR_H_
