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

#include "crust/error.h"

namespace crust {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNonSymmetric: return "NonSymmetric";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kTooFewPoints: return "TooFewPoints";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kBadConfig: return "BadConfig";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kTruncatedFile: return "TruncatedFile";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kTooFewClasses: return "TooFewClasses";
    case ErrorCode::kDimMismatch: return "DimMismatch";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kBadCheckpoint: return "BadCheckpoint";
    case ErrorCode::kEmptySet: return "EmptySet";
    case ErrorCode::kBadK: return "BadK";
    case ErrorCode::kDegenerateAffinity: return "DegenerateAffinity";
    case ErrorCode::kAllClustersFiltered: return "AllClustersFiltered";
    case ErrorCode::kBadInput: return "BadInput";
    case ErrorCode::kEmptySelection: return "EmptySelection";
    case ErrorCode::kEmptyExperience: return "EmptyExperience";
    case ErrorCode::kIncompleteRow: return "IncompleteRow";
    case ErrorCode::kTooFewExperiences: return "TooFewExperiences";
    case ErrorCode::kEmptyStore: return "EmptyStore";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kNoResults: return "NoResults";
  }
  return "Unknown";
}

}  // namespace crust
