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


#include "crust/metrics.h"

#include <cmath>
#include <string>

#include "crust/error.h"

namespace crust::metrics {

AccuracyMatrix::AccuracyMatrix(std::size_t experiences, std::size_t classes)
    : experiences_(experiences),
      classes_(classes),
      values_(experiences * classes),
      taught_at_(classes) {}

std::optional<double> AccuracyMatrix::at(std::size_t i, std::size_t j) const {
  if (i >= experiences_ || j >= classes_) {
    throw Error(ErrorCode::kBadInput, "accuracy index out of range");
  }
  return values_[i * classes_ + j];
}

void AccuracyMatrix::Set(std::size_t i, std::size_t j, double accuracy) {
  if (i >= experiences_ || j >= classes_) {
    throw Error(ErrorCode::kBadInput, "accuracy index out of range");
  }
  if (!(accuracy >= 0.0 && accuracy <= 1.0)) {
    throw Error(ErrorCode::kBadInput, "accuracy outside [0, 1]");
  }
  values_[i * classes_ + j] = accuracy;
}

void AccuracyMatrix::SetRow(std::size_t i, std::span<const std::optional<double>> row) {
  if (row.size() != classes_) throw Error(ErrorCode::kBadInput, "row width mismatch");
  for (std::size_t j = 0; j < classes_; ++j) {
    if (row[j]) Set(i, j, *row[j]);
  }
}

void AccuracyMatrix::SetTaughtAt(std::size_t j, std::size_t experience) {
  if (j >= classes_ || experience >= experiences_) {
    throw Error(ErrorCode::kBadInput, "taught_at index out of range");
  }
  taught_at_[j] = experience;
}

double AverageFinalAccuracy(const AccuracyMatrix& m) {
  if (m.experiences() == 0) throw Error(ErrorCode::kIncompleteRow, "no experiences");
  const std::size_t last = m.experiences() - 1;
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t j = 0; j < m.classes(); ++j) {
    if (!m.taught_at(j)) continue;
    const std::optional<double> v = m.at(last, j);
    if (!v) {
      throw Error(ErrorCode::kIncompleteRow,
                  "final row lacks taught class " + std::to_string(j));
    }
    sum += *v;
    ++count;
  }
  if (count == 0) throw Error(ErrorCode::kIncompleteRow, "no taught classes");
  return sum / static_cast<double>(count);
}

double Forgetting(const AccuracyMatrix& m) {
  if (m.experiences() < 2) {
    throw Error(ErrorCode::kTooFewExperiences, "forgetting needs T >= 2");
  }
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t j = 0; j < m.classes(); ++j) {
    const std::optional<std::size_t> t = m.taught_at(j);
    if (!t) continue;
    for (std::size_t i = *t + 1; i < m.experiences(); ++i) {
      const std::optional<double> reference = m.at(*t, j);
      const std::optional<double> later = m.at(i, j);
      if (!reference || !later) {
        throw Error(ErrorCode::kIncompleteRow,
                    "missing accuracy for class " + std::to_string(j));
      }
      sum += *reference - *later;
      ++pairs;
    }
  }
  if (pairs == 0) {
    throw Error(ErrorCode::kTooFewExperiences, "no class was followed by an experience");
  }
  return sum / static_cast<double>(pairs);
}

std::map<int, ClassPurity> PurityByClass(
    const std::map<int, std::vector<std::size_t>>& coresets,
    const data::Dataset& ds) {
  std::map<int, ClassPurity> out;
  for (const auto& [cls, ids] : coresets) {
    ClassPurity& p = out[cls];
    for (std::size_t id : ids) {
      if (id >= ds.size()) throw Error(ErrorCode::kBadInput, "sample id out of range");
      ++p.total;
      if (ds.samples[id].is_clean()) ++p.clean;
    }
  }
  return out;
}

double Purity(const std::map<int, ClassPurity>& by_class) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& [cls, p] : by_class) {
    if (p.total == 0) continue;
    sum += p.fraction();
    ++count;
  }
  if (count == 0) throw Error(ErrorCode::kEmptyStore, "no stored samples");
  return sum / static_cast<double>(count);
}

double Purity(const std::map<int, std::vector<std::size_t>>& coresets,
              const data::Dataset& ds) {
  return Purity(PurityByClass(coresets, ds));
}

}  // namespace crust::metrics
