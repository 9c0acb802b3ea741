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


// Class-incremental training with per-class replay memories.
//
// Each experience introduces new classes. Replay strategies keep at most
// coreset_k samples per past class and mix them into later training. The
// CRUST strategies train in two phases: phase 1 on the new classes' full data
// plus every stored coreset, phase 2 on coresets only, re-selecting the new
// classes' coresets from fresh gradients at the start of every phase-2 epoch.

#ifndef CRUST_CONTINUAL_H_
#define CRUST_CONTINUAL_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crust/bounds.h"
#include "crust/coreset.h"
#include "crust/data.h"
#include "crust/metrics.h"
#include "crust/model.h"

namespace crust::continual {

// Declaration order is the reporting order.
enum class Strategy {
  kNaive,
  kCumulative,
  kJoint,
  kRandomReplay,
  kContinualCrust,
  kContinualCosineCrust,
};

inline constexpr Strategy kAllStrategies[] = {
    Strategy::kNaive,        Strategy::kCumulative,     Strategy::kJoint,
    Strategy::kRandomReplay, Strategy::kContinualCrust, Strategy::kContinualCosineCrust,
};

const char* StrategyName(Strategy s);
std::optional<Strategy> ParseStrategy(std::string_view name);
// Strategies with a bounded per-class memory.
bool IsReplay(Strategy s);

struct CoresetParams {
  // Dissimilarity for continual_crust; continual_cosine_crust always clusters
  // under cosine and runs Euclidean CRUST inside clusters.
  coreset::Metric metric = coreset::Metric::kEuclidean;
  // Unset means DefaultKClusters / DefaultMinClusterSize of the class size.
  std::optional<std::size_t> k_clusters;
  std::optional<std::size_t> min_cluster_size;
  model::GradientMode gradient_mode = model::GradientMode::kLogits;
  std::uint64_t seed = 0;  // mixed with the run seed
};

struct StrategyConfig {
  Strategy strategy = Strategy::kContinualCrust;
  std::size_t coreset_k = 100;
  model::TrainConfig train;
  CoresetParams coreset;
  // Label margin handed to the Theorem 1 diagnostic.
  double bounds_delta = 0.5;

  void Validate() const;
};

struct CoresetEntry {
  std::vector<std::size_t> ids;  // sample ids
  double objective = 0.0;
  bool fallback_used = false;
  int last_refresh_epoch = -1;  // epoch within the experience, -1 if never
};

struct CoresetStore {
  std::size_t capacity = 0;  // per class; 0 means unbounded
  std::map<int, CoresetEntry> entries;

  bool Contains(int cls) const { return entries.count(cls) > 0; }
  std::size_t TotalStored() const;
  std::map<int, std::vector<std::size_t>> Ids() const;
};

struct ClassBounds {
  int cls = 0;
  bounds::BoundInputs inputs;
  std::optional<bounds::BoundReport> theorem1;  // absent when rho == 0
};

struct PoolAudit {
  std::size_t phase2_examples = 0;
  // Phase-2 examples whose sample id is outside the coreset union.
  std::size_t phase2_violations = 0;
};

struct ExperienceLog {
  std::vector<int> classes;
  std::vector<double> epoch_losses;
  std::optional<double> purity;
  std::map<int, metrics::ClassPurity> purity_by_class;
  std::vector<ClassBounds> bounds;
  PoolAudit audit;
  std::vector<std::string> warnings;
  double wallclock_s = 0.0;
};

// Trains `model` on one experience and updates `store`. `experience_index`
// and `seed` feed the derived shuffle/selection seeds. Throws kEmptyExperience
// when the experience has no training data and kBadInput when one of its
// classes is already stored.
ExperienceLog RunExperience(model::MlpClassifier& model, CoresetStore& store,
                            const data::Dataset& train,
                            const data::Experience& experience,
                            const StrategyConfig& cfg, std::size_t experience_index,
                            std::uint64_t seed);

struct RunRecord {
  Strategy strategy = Strategy::kNaive;
  std::uint64_t seed = 0;
  metrics::AccuracyMatrix accuracy;
  std::vector<ExperienceLog> experiences;
  std::optional<double> afa;
  std::optional<double> forgetting;  // absent for joint and T = 1
  std::optional<double> purity;      // final store; absent without a store
  std::map<int, std::vector<std::size_t>> final_store;
  double wallclock_s = 0.0;
};

// Fresh model of shape {feature_dim, hidden_layers..., num_classes}; every
// experience is followed by an evaluation on all test classes (clean labels).
// The joint strategy trains once on the union of all experiences and fills
// only the final row.
RunRecord RunCurriculum(const data::Dataset& train, const data::Dataset& test,
                        const data::ExperienceStream& stream,
                        const StrategyConfig& cfg,
                        std::span<const std::size_t> hidden_layers,
                        std::uint64_t seed);

}  // namespace crust::continual

#endif  // CRUST_CONTINUAL_H_
