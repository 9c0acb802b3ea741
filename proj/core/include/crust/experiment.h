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


// Experiment orchestration: configuration, the (strategy x noise x seed)
// grid, persisted run records and the aggregate tables.
//
// Output layout under the configured directory:
//   runs/<strategy>__<noise_kind>-<level>__seed-<seed>.json   one per cell
//   runs.csv       one row per cell, including wall-clock time
//   aggregate.csv  mean and sample std per (strategy, noise); deterministic
//   summary.txt    Acc / Forg table, strategies in declaration order
// Every file starts with the run manifest (version, config echo, seeds).

#ifndef CRUST_EXPERIMENT_H_
#define CRUST_EXPERIMENT_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "crust/continual.h"
#include "crust/data.h"

namespace crust::experiment {

inline constexpr int kRecordSchemaVersion = 1;

struct DatasetSpec {
  enum class Kind { kGaussianBlobs, kIdx };
  Kind kind = Kind::kGaussianBlobs;

  // Gaussian blobs.
  int num_classes = 4;
  std::size_t feature_dim = 8;
  double separation = 6.0;
  std::size_t train_per_class = 200;
  std::size_t test_per_class = 100;

  // IDX files. The per-class sizes above cap each split; 0 keeps everything.
  std::filesystem::path train_images;
  std::filesystem::path train_labels;
  std::filesystem::path test_images;
  std::filesystem::path test_labels;

  std::uint64_t seed = 0;  // blob sampling and subset order

  void Validate() const;
};

enum class NoiseKind { kLabel, kInstance };
const char* NoiseKindName(NoiseKind k);

struct NoiseCell {
  NoiseKind kind = NoiseKind::kLabel;
  double level = 0.0;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  data::StreamOptions stream;
  std::vector<double> label_flip_probs;
  std::vector<double> instance_noise_fractions;
  double pixel_corrupt_prob = 0.9;
  double blend = 0.5;
  std::vector<std::size_t> hidden_layers{128};
  std::vector<continual::StrategyConfig> strategies;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path output_dir;

  // Label levels first, then instance levels, each in the listed order.
  std::vector<NoiseCell> NoiseGrid() const;
  // Throws kConfigError.
  void Validate() const;
};

// JSON configuration; unknown keys and type mismatches throw kConfigError.
// Relative paths resolve against `base_dir`.
ExperimentConfig ParseConfig(std::string_view json_text,
                             const std::filesystem::path& base_dir);
ExperimentConfig LoadConfig(const std::filesystem::path& path);

// Canonical JSON of everything that determines results (the output
// directory is left out).
std::string ConfigEcho(const ExperimentConfig& cfg);

// "crust <version> (<git revision>)".
std::string VersionStamp();

struct Datasets {
  data::Dataset train;
  data::Dataset test;
};
Datasets LoadDatasets(const DatasetSpec& spec);

// Noisy training set and class stream for one (noise, seed) cell. Strategies
// sharing a cell see identical data.
struct CellData {
  data::Dataset train;
  data::ExperienceStream stream;
};
CellData PrepareCell(const ExperimentConfig& cfg, const Datasets& base,
                     const NoiseCell& noise, std::uint64_t seed);

struct RunRow {
  std::string strategy;
  std::string noise_kind;
  double noise_level = 0.0;
  std::uint64_t seed = 0;
  std::optional<double> afa;
  std::optional<double> forgetting;
  std::optional<double> purity;
  double wallclock_s = 0.0;
};

struct CellOutcome {
  RunRow row;
  std::filesystem::path record_path;
  std::string error;  // empty on success
};

struct RunOptions {
  std::size_t workers = 1;
  // Called after each cell, from worker threads, serialized by the runner.
  std::function<void(const CellOutcome&, std::size_t done, std::size_t total)>
      progress;
};

struct ExperimentSummary {
  std::vector<RunRow> rows;  // sorted by strategy, noise, seed
  std::string runs_csv;
  std::string aggregate_csv;
  std::string table;
  std::size_t failures = 0;
};

// Runs every cell on a bounded worker pool and writes all outputs. Failed
// cells are counted in `failures` and left out of the tables.
ExperimentSummary RunExperiment(const ExperimentConfig& cfg,
                                const RunOptions& options = {});

// Rebuilds the tables from the run records under `dir` (kNoResults when
// there are none) and rewrites runs.csv, aggregate.csv and summary.txt.
ExperimentSummary Summarize(const std::filesystem::path& dir);

// Run record as JSON text (schema kRecordSchemaVersion).
std::string RecordToJson(const continual::RunRecord& record, const RunRow& row,
                         const std::string& manifest_config,
                         const continual::StrategyConfig& strategy);

// "0.9 ±0.02": two decimals with trailing zeros dropped (one kept).
std::string FormatMeanStd(double mean, double std);
std::string FormatTwoDecimals(double v);

// Workers from CRUST_WORKERS, else hardware concurrency, at least 1.
std::size_t DefaultWorkers();

// A blob configuration that finishes in seconds; used by `demo`.
ExperimentConfig DemoConfig(const std::filesystem::path& output_dir);

}  // namespace crust::experiment

#endif  // CRUST_EXPERIMENT_H_
