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


// Accuracy-matrix bookkeeping and the continual-learning summary metrics.

#ifndef CRUST_METRICS_H_
#define CRUST_METRICS_H_

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "crust/data.h"

namespace crust::metrics {

// R(i, j): test accuracy on class j after experience i. Every row spans all
// classes, including ones not taught yet; entries may be absent.
class AccuracyMatrix {
 public:
  AccuracyMatrix() = default;
  AccuracyMatrix(std::size_t experiences, std::size_t classes);

  std::size_t experiences() const { return experiences_; }
  std::size_t classes() const { return classes_; }

  std::optional<double> at(std::size_t i, std::size_t j) const;
  // Throws kBadInput for values outside [0, 1] or indices out of range.
  void Set(std::size_t i, std::size_t j, double accuracy);
  void SetRow(std::size_t i, std::span<const std::optional<double>> row);

  // Experience that taught class j; classes never taught stay absent.
  std::optional<std::size_t> taught_at(std::size_t j) const { return taught_at_[j]; }
  void SetTaughtAt(std::size_t j, std::size_t experience);

  friend bool operator==(const AccuracyMatrix&, const AccuracyMatrix&) = default;

 private:
  std::size_t experiences_ = 0;
  std::size_t classes_ = 0;
  std::vector<std::optional<double>> values_;
  std::vector<std::optional<std::size_t>> taught_at_;
};

// Mean of the final row over taught classes. kIncompleteRow if any of those
// entries is absent or nothing was taught.
double AverageFinalAccuracy(const AccuracyMatrix& m);

// Mean of R(t_j, j) - R(i, j) over every taught class j and every later
// experience i > t_j, where t_j is the experience that taught j. Negative
// values mean backward transfer. kTooFewExperiences when T < 2 or no such
// pair exists; kIncompleteRow when a needed entry is absent.
double Forgetting(const AccuracyMatrix& m);

struct ClassPurity {
  std::size_t clean = 0;
  std::size_t total = 0;

  double fraction() const {
    return total == 0 ? 0.0 : static_cast<double>(clean) / static_cast<double>(total);
  }
};

// Per class: how many stored samples are clean (label unflipped and input
// unperturbed). `coresets` maps class id to sample ids of `ds`.
std::map<int, ClassPurity> PurityByClass(
    const std::map<int, std::vector<std::size_t>>& coresets,
    const data::Dataset& ds);

// Unweighted mean of the per-class clean fractions over non-empty classes.
// kEmptyStore when there is none.
double Purity(const std::map<int, std::vector<std::size_t>>& coresets,
              const data::Dataset& ds);
double Purity(const std::map<int, ClassPurity>& by_class);

}  // namespace crust::metrics

#endif  // CRUST_METRICS_H_
