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


#include "crust/continual.h"

#include <algorithm>
#include <chrono>
#include <random>
#include <unordered_set>
#include <utility>

#include "crust/error.h"
#include "crust/random.h"

namespace crust::continual {
namespace {

// Tags for DeriveSeed.
constexpr std::uint64_t kModelTag = 1;
constexpr std::uint64_t kShuffleTag = 2;
constexpr std::uint64_t kSelectTag = 3;
constexpr std::uint64_t kRandomReplayTag = 4;

// Training examples with the sample id and routing group of each one.
struct Pool {
  std::vector<model::Example> examples;
  std::vector<std::size_t> ids;
  std::vector<int> groups;

  void Add(const data::Dataset& ds, std::span<const std::size_t> sample_ids,
           int group) {
    for (std::size_t id : sample_ids) {
      const data::LabeledSample& s = ds.samples[id];
      examples.push_back({s.features, s.label, 1.0});
      ids.push_back(id);
      groups.push_back(group);
    }
  }
  void AddStore(const data::Dataset& ds, const CoresetStore& store) {
    for (const auto& [cls, entry] : store.entries) Add(ds, entry.ids, cls);
  }
};

// Balances routing groups (experience class for new data, owning class for
// stored samples) rather than observed labels, so flipped labels are not
// up-weighted as if they formed a rare class.
Pool Balanced(const Pool& pool, model::ClassWeighting weighting) {
  std::map<int, std::size_t> counts;
  for (int g : pool.groups) ++counts[g];
  if (weighting == model::ClassWeighting::kNone || counts.size() < 2) return pool;

  if (weighting == model::ClassWeighting::kWeightedLoss) {
    Pool out = pool;
    const double scale =
        static_cast<double>(pool.examples.size()) / static_cast<double>(counts.size());
    for (std::size_t i = 0; i < out.examples.size(); ++i) {
      out.examples[i].weight = scale / static_cast<double>(counts[out.groups[i]]);
    }
    return out;
  }

  // Upsampling: repeat every group cyclically up to the largest group size.
  std::size_t largest = 0;
  for (const auto& [g, c] : counts) largest = std::max(largest, c);
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < pool.groups.size(); ++i) members[pool.groups[i]].push_back(i);
  Pool out;
  for (const auto& [g, idx] : members) {
    for (std::size_t r = 0; r < largest; ++r) {
      const std::size_t i = idx[r % idx.size()];
      out.examples.push_back(pool.examples[i]);
      out.ids.push_back(pool.ids[i]);
      out.groups.push_back(g);
    }
  }
  return out;
}

struct ClassSelection {
  CoresetEntry entry;
  // Populated when the selector ran (the class exceeded the budget).
  std::optional<model::GradientFeatures> gradients;
  coreset::ClusterAssignment clusters;
  coreset::CoresetSelection selection;
};

ClassSelection SelectCoreset(const model::MlpClassifier& model,
                             const data::Dataset& train,
                             std::span<const std::size_t> members,
                             const StrategyConfig& cfg, int epoch,
                             std::uint64_t seed) {
  ClassSelection out;
  out.entry.last_refresh_epoch = epoch;
  if (members.size() <= cfg.coreset_k) {
    out.entry.ids.assign(members.begin(), members.end());
    return out;
  }
  out.gradients =
      model::LastLayerGradients(model, train, members, cfg.coreset.gradient_mode);
  const model::GradientFeatures& g = *out.gradients;
  const std::size_t n = members.size();
  if (cfg.strategy == Strategy::kContinualCosineCrust) {
    const std::size_t a =
        cfg.coreset.min_cluster_size.value_or(coreset::DefaultMinClusterSize(n));
    const std::size_t k_clusters = std::min(
        n, cfg.coreset.k_clusters.value_or(coreset::DefaultKClusters(n, a)));
    coreset::CosineCrustResult r =
        coreset::CosineCrustSelect(g, cfg.coreset_k, k_clusters, a, seed);
    out.selection = std::move(r.selection);
    out.clusters = std::move(r.clusters);
  } else {
    if (cfg.coreset.metric == coreset::Metric::kEuclidean) {
      out.selection = coreset::CrustSelect(g, cfg.coreset_k);
    } else {
      out.selection = coreset::GreedySelect(
          coreset::PairwiseDissimilarity(g.matrix, cfg.coreset.metric), cfg.coreset_k);
      for (std::size_t i = 0; i < out.selection.rows.size(); ++i) {
        out.selection.ids[i] = g.ids[out.selection.rows[i]];
      }
    }
    out.clusters.cluster_of.assign(n, 0);
    out.clusters.sizes = {n};
    out.clusters.kept = {0};
    out.clusters.k_clusters = 1;
  }
  out.entry.ids = out.selection.ids;
  out.entry.objective = out.selection.objective;
  out.entry.fallback_used = out.selection.fallback_used;
  return out;
}

std::vector<std::size_t> UniformSubset(std::span<const std::size_t> members,
                                       std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> ids(members.begin(), members.end());
  if (ids.size() <= k) return ids;
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(k);
  return ids;
}

bool IsCrust(Strategy s) {
  return s == Strategy::kContinualCrust || s == Strategy::kContinualCosineCrust;
}

}  // namespace

const char* StrategyName(Strategy s) {
  switch (s) {
    case Strategy::kNaive: return "naive";
    case Strategy::kCumulative: return "cumulative";
    case Strategy::kJoint: return "joint";
    case Strategy::kRandomReplay: return "random_replay";
    case Strategy::kContinualCrust: return "continual_crust";
    case Strategy::kContinualCosineCrust: return "continual_cosine_crust";
  }
  return "unknown";
}

std::optional<Strategy> ParseStrategy(std::string_view name) {
  for (Strategy s : kAllStrategies) {
    if (name == StrategyName(s)) return s;
  }
  return std::nullopt;
}

bool IsReplay(Strategy s) { return s == Strategy::kRandomReplay || IsCrust(s); }

void StrategyConfig::Validate() const {
  train.Validate();
  if (IsReplay(strategy) && coreset_k < 1) {
    throw Error(ErrorCode::kBadConfig, "coreset_k must be >= 1 for replay strategies");
  }
  if (coreset.k_clusters && *coreset.k_clusters < 1) {
    throw Error(ErrorCode::kBadConfig, "k_clusters must be >= 1");
  }
  if (!(bounds_delta >= 0.0 && bounds_delta <= 1.0)) {
    throw Error(ErrorCode::kBadConfig, "bounds_delta must lie in [0, 1]");
  }
}

std::size_t CoresetStore::TotalStored() const {
  std::size_t total = 0;
  for (const auto& [cls, entry] : entries) total += entry.ids.size();
  return total;
}

std::map<int, std::vector<std::size_t>> CoresetStore::Ids() const {
  std::map<int, std::vector<std::size_t>> out;
  for (const auto& [cls, entry] : entries) out[cls] = entry.ids;
  return out;
}

ExperienceLog RunExperience(model::MlpClassifier& model, CoresetStore& store,
                            const data::Dataset& train,
                            const data::Experience& experience,
                            const StrategyConfig& cfg, std::size_t experience_index,
                            std::uint64_t seed) {
  cfg.Validate();
  if (experience.train_indices.empty() ||
      experience.train_by_class.size() != experience.classes.size()) {
    throw Error(ErrorCode::kEmptyExperience, "experience has no training data");
  }
  for (std::size_t c = 0; c < experience.classes.size(); ++c) {
    if (experience.train_by_class[c].empty()) {
      throw Error(ErrorCode::kEmptyExperience,
                  "class " + std::to_string(experience.classes[c]) + " has no samples");
    }
    if (store.Contains(experience.classes[c])) {
      throw Error(ErrorCode::kBadInput,
                  "class " + std::to_string(experience.classes[c]) + " already stored");
    }
  }

  const auto started = std::chrono::steady_clock::now();
  ExperienceLog log;
  log.classes = experience.classes;
  model::Optimizer optimizer(model, cfg.train);
  const Strategy strategy = cfg.strategy;
  const int total_epochs = cfg.train.total_epochs();
  // CRUST strategies switch to coreset-only training after phase 1.
  const int phase1_epochs = IsCrust(strategy) ? cfg.train.epochs_phase1 : total_epochs;

  auto train_on = [&](const Pool& pool, int epoch) {
    const Pool balanced = Balanced(pool, cfg.train.class_weighting);
    log.epoch_losses.push_back(model::TrainEpoch(
        model, optimizer, balanced.examples, cfg.train,
        DeriveSeed(seed, {kShuffleTag, experience_index,
                          static_cast<std::uint64_t>(epoch)})));
  };

  Pool phase1;
  for (std::size_t c = 0; c < experience.classes.size(); ++c) {
    phase1.Add(train, experience.train_by_class[c], experience.classes[c]);
  }
  if (strategy != Strategy::kNaive && strategy != Strategy::kJoint) {
    phase1.AddStore(train, store);
  }
  for (int epoch = 0; epoch < phase1_epochs; ++epoch) train_on(phase1, epoch);

  std::map<int, ClassSelection> latest;
  auto select_all = [&](int epoch) {
    for (std::size_t c = 0; c < experience.classes.size(); ++c) {
      const int cls = experience.classes[c];
      latest[cls] = SelectCoreset(
          model, train, experience.train_by_class[c], cfg, epoch,
          DeriveSeed(seed ^ cfg.coreset.seed,
                     {kSelectTag, experience_index, static_cast<std::uint64_t>(cls),
                      static_cast<std::uint64_t>(epoch)}));
    }
  };

  if (IsCrust(strategy)) {
    for (int epoch = phase1_epochs; epoch < total_epochs; ++epoch) {
      select_all(epoch);
      Pool phase2;
      phase2.AddStore(train, store);
      for (const auto& [cls, sel] : latest) phase2.Add(train, sel.entry.ids, cls);

      std::unordered_set<std::size_t> allowed;
      for (const auto& [cls, entry] : store.entries) {
        allowed.insert(entry.ids.begin(), entry.ids.end());
      }
      for (const auto& [cls, sel] : latest) {
        allowed.insert(sel.entry.ids.begin(), sel.entry.ids.end());
      }
      log.audit.phase2_examples += phase2.ids.size();
      for (std::size_t id : phase2.ids) {
        if (!allowed.count(id)) ++log.audit.phase2_violations;
      }
      train_on(phase2, epoch);
    }
    if (latest.empty()) select_all(phase1_epochs);
    for (auto& [cls, sel] : latest) {
      for (const std::string& w : sel.selection.warnings) {
        log.warnings.push_back("class " + std::to_string(cls) + ": " + w);
      }
      store.entries[cls] = sel.entry;
    }
  } else if (strategy == Strategy::kRandomReplay) {
    for (std::size_t c = 0; c < experience.classes.size(); ++c) {
      const int cls = experience.classes[c];
      CoresetEntry entry;
      entry.ids = UniformSubset(
          experience.train_by_class[c], cfg.coreset_k,
          DeriveSeed(seed ^ cfg.coreset.seed,
                     {kRandomReplayTag, experience_index, static_cast<std::uint64_t>(cls)}));
      entry.last_refresh_epoch = total_epochs - 1;
      store.entries[cls] = std::move(entry);
    }
  } else if (strategy == Strategy::kCumulative) {
    for (std::size_t c = 0; c < experience.classes.size(); ++c) {
      CoresetEntry entry;
      entry.ids = experience.train_by_class[c];
      store.entries[experience.classes[c]] = std::move(entry);
    }
  }

  if (IsReplay(strategy)) {
    log.purity_by_class = metrics::PurityByClass(store.Ids(), train);
    log.purity = metrics::Purity(log.purity_by_class);
  }

  // Theorem 1 diagnostics on each new class's final selection.
  for (const auto& [cls, sel] : latest) {
    if (!sel.gradients) continue;
    ClassBounds b;
    b.cls = cls;
    b.inputs = bounds::MeasureInputs(*sel.gradients, sel.clusters, sel.selection);
    const metrics::ClassPurity& p = log.purity_by_class.at(cls);
    b.inputs.rho = 1.0 - p.fraction();
    b.inputs.delta = cfg.bounds_delta;
    b.inputs.eta = cfg.train.learning_rate;
    if (b.inputs.rho > 0.0) b.theorem1 = bounds::EvalTheorem1(b.inputs);
    log.bounds.push_back(std::move(b));
  }

  log.wallclock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                  started).count();
  return log;
}

RunRecord RunCurriculum(const data::Dataset& train, const data::Dataset& test,
                        const data::ExperienceStream& stream,
                        const StrategyConfig& cfg,
                        std::span<const std::size_t> hidden_layers,
                        std::uint64_t seed) {
  cfg.Validate();
  if (stream.experiences.empty()) {
    throw Error(ErrorCode::kEmptyExperience, "stream has no experiences");
  }
  const auto started = std::chrono::steady_clock::now();
  const std::size_t classes =
      static_cast<std::size_t>(std::max(train.num_classes, test.num_classes));
  std::vector<std::size_t> dims{train.feature_dim};
  dims.insert(dims.end(), hidden_layers.begin(), hidden_layers.end());
  dims.push_back(classes);
  model::MlpClassifier model(dims, DeriveSeed(seed, {kModelTag}));

  RunRecord record;
  record.strategy = cfg.strategy;
  record.seed = seed;
  const std::size_t experiences = stream.experiences.size();
  record.accuracy = metrics::AccuracyMatrix(experiences, classes);
  CoresetStore store;
  store.capacity = IsReplay(cfg.strategy) ? cfg.coreset_k : 0;

  auto evaluate_into = [&](std::size_t row) {
    const model::Evaluation eval = model::Evaluate(model, test);
    std::vector<std::optional<double>> values(classes);
    std::copy(eval.per_class.begin(), eval.per_class.end(), values.begin());
    record.accuracy.SetRow(row, values);
  };

  if (cfg.strategy == Strategy::kJoint) {
    data::Experience all;
    for (const data::Experience& e : stream.experiences) {
      all.classes.insert(all.classes.end(), e.classes.begin(), e.classes.end());
      all.train_by_class.insert(all.train_by_class.end(), e.train_by_class.begin(),
                                e.train_by_class.end());
      all.train_indices.insert(all.train_indices.end(), e.train_indices.begin(),
                               e.train_indices.end());
      all.test_indices.insert(all.test_indices.end(), e.test_indices.begin(),
                              e.test_indices.end());
    }
    record.experiences.push_back(
        RunExperience(model, store, train, all, cfg, experiences - 1, seed));
    evaluate_into(experiences - 1);
    for (int cls : all.classes) {
      record.accuracy.SetTaughtAt(static_cast<std::size_t>(cls), experiences - 1);
    }
  } else {
    for (std::size_t i = 0; i < experiences; ++i) {
      const data::Experience& e = stream.experiences[i];
      record.experiences.push_back(RunExperience(model, store, train, e, cfg, i, seed));
      evaluate_into(i);
      for (int cls : e.classes) {
        record.accuracy.SetTaughtAt(static_cast<std::size_t>(cls), i);
      }
    }
    if (experiences >= 2) record.forgetting = metrics::Forgetting(record.accuracy);
  }
  record.afa = metrics::AverageFinalAccuracy(record.accuracy);
  record.purity = record.experiences.back().purity;
  if (IsReplay(cfg.strategy)) record.final_store = store.Ids();
  record.wallclock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                     started).count();
  return record;
}

}  // namespace crust::continual
