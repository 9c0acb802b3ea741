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


#include "crust/experiment.h"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>
#include <utility>

#include "crust/error.h"
#include "crust/random.h"
#include "crust/version.h"
#include "json.hpp"

namespace crust::experiment {
namespace {

using json = nlohmann::json;
using continual::Strategy;
using continual::StrategyConfig;

constexpr std::uint64_t kNoiseTag = 11;
constexpr std::uint64_t kStreamTag = 12;
constexpr std::uint64_t kTestBlobTag = 13;

[[noreturn]] void ConfigFail(const std::string& what) {
  throw Error(ErrorCode::kConfigError, what);
}

void CheckKeys(const json& obj, std::initializer_list<std::string_view> allowed,
               const std::string& where) {
  if (!obj.is_object()) ConfigFail(where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      ConfigFail("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void Read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    ConfigFail(where + "." + key + ": " + e.what());
  }
}

// Unsigned counts must not silently wrap from negative JSON numbers.
void ReadCount(const json& obj, const char* key, std::size_t& out,
               const std::string& where) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number_unsigned()) ConfigFail(where + "." + key + " must be a count >= 0");
  out = v.get<std::size_t>();
}

std::filesystem::path ResolvePath(const json& obj, const char* key,
                                  const std::filesystem::path& base,
                                  const std::string& where) {
  std::string s;
  Read(obj, key, s, where);
  if (s.empty()) return {};
  std::filesystem::path p(s);
  return p.is_absolute() ? p : (base / p).lexically_normal();
}

const char* WeightingName(model::ClassWeighting w) {
  switch (w) {
    case model::ClassWeighting::kWeightedLoss: return "weighted_loss";
    case model::ClassWeighting::kUpsample: return "upsample";
    case model::ClassWeighting::kNone: return "none";
  }
  return "none";
}

const char* OptimizerName(model::OptimizerKind k) {
  return k == model::OptimizerKind::kAdam ? "adam" : "sgd";
}

const char* MetricName(coreset::Metric m) {
  return m == coreset::Metric::kCosine ? "cosine" : "euclidean";
}

const char* GradientModeName(model::GradientMode m) {
  return m == model::GradientMode::kLastLayerWeights ? "last_layer_weights" : "logits";
}

void ParseTrain(const json& obj, model::TrainConfig& t, const std::string& where) {
  CheckKeys(obj,
            {"learning_rate", "batch_size", "epochs_phase1", "epochs_phase2",
             "weight_decay", "class_weighting", "optimizer", "adam_beta1",
             "adam_beta2", "adam_epsilon"},
            where);
  Read(obj, "learning_rate", t.learning_rate, where);
  ReadCount(obj, "batch_size", t.batch_size, where);
  Read(obj, "epochs_phase1", t.epochs_phase1, where);
  Read(obj, "epochs_phase2", t.epochs_phase2, where);
  Read(obj, "weight_decay", t.weight_decay, where);
  Read(obj, "adam_beta1", t.adam_beta1, where);
  Read(obj, "adam_beta2", t.adam_beta2, where);
  Read(obj, "adam_epsilon", t.adam_epsilon, where);
  if (obj.contains("class_weighting")) {
    std::string s;
    Read(obj, "class_weighting", s, where);
    if (s == "weighted_loss") {
      t.class_weighting = model::ClassWeighting::kWeightedLoss;
    } else if (s == "upsample") {
      t.class_weighting = model::ClassWeighting::kUpsample;
    } else if (s == "none") {
      t.class_weighting = model::ClassWeighting::kNone;
    } else {
      ConfigFail(where + ".class_weighting: unknown value '" + s + "'");
    }
  }
  if (obj.contains("optimizer")) {
    std::string s;
    Read(obj, "optimizer", s, where);
    if (s == "sgd") {
      t.optimizer = model::OptimizerKind::kSgd;
    } else if (s == "adam") {
      t.optimizer = model::OptimizerKind::kAdam;
    } else {
      ConfigFail(where + ".optimizer: unknown value '" + s + "'");
    }
  }
}

json TrainToJson(const model::TrainConfig& t) {
  return {{"learning_rate", t.learning_rate},
          {"batch_size", t.batch_size},
          {"epochs_phase1", t.epochs_phase1},
          {"epochs_phase2", t.epochs_phase2},
          {"weight_decay", t.weight_decay},
          {"class_weighting", WeightingName(t.class_weighting)},
          {"optimizer", OptimizerName(t.optimizer)},
          {"adam_beta1", t.adam_beta1},
          {"adam_beta2", t.adam_beta2},
          {"adam_epsilon", t.adam_epsilon}};
}

StrategyConfig ParseStrategy(const json& obj, const model::TrainConfig& defaults,
                             const std::string& where) {
  CheckKeys(obj, {"name", "coreset_k", "train", "coreset", "bounds_delta"}, where);
  StrategyConfig s;
  std::string name;
  Read(obj, "name", name, where);
  const std::optional<Strategy> parsed = continual::ParseStrategy(name);
  if (!parsed) ConfigFail(where + ".name: unknown strategy '" + name + "'");
  s.strategy = *parsed;
  ReadCount(obj, "coreset_k", s.coreset_k, where);
  Read(obj, "bounds_delta", s.bounds_delta, where);
  s.train = defaults;
  if (obj.contains("train")) ParseTrain(obj.at("train"), s.train, where + ".train");
  if (obj.contains("coreset")) {
    const json& c = obj.at("coreset");
    const std::string w = where + ".coreset";
    CheckKeys(c, {"metric", "k_clusters", "min_cluster_size", "gradient_mode", "seed"}, w);
    if (c.contains("metric")) {
      std::string m;
      Read(c, "metric", m, w);
      if (m == "euclidean") {
        s.coreset.metric = coreset::Metric::kEuclidean;
      } else if (m == "cosine") {
        s.coreset.metric = coreset::Metric::kCosine;
      } else {
        ConfigFail(w + ".metric: unknown value '" + m + "'");
      }
    }
    if (c.contains("k_clusters")) {
      std::size_t v = 0;
      ReadCount(c, "k_clusters", v, w);
      s.coreset.k_clusters = v;
    }
    if (c.contains("min_cluster_size")) {
      std::size_t v = 0;
      ReadCount(c, "min_cluster_size", v, w);
      s.coreset.min_cluster_size = v;
    }
    if (c.contains("gradient_mode")) {
      std::string m;
      Read(c, "gradient_mode", m, w);
      if (m == "logits") {
        s.coreset.gradient_mode = model::GradientMode::kLogits;
      } else if (m == "last_layer_weights") {
        s.coreset.gradient_mode = model::GradientMode::kLastLayerWeights;
      } else {
        ConfigFail(w + ".gradient_mode: unknown value '" + m + "'");
      }
    }
    Read(c, "seed", s.coreset.seed, w);
  }
  return s;
}

json StrategyToJson(const StrategyConfig& s) {
  json coreset = {{"metric", MetricName(s.coreset.metric)},
                  {"gradient_mode", GradientModeName(s.coreset.gradient_mode)},
                  {"seed", s.coreset.seed}};
  coreset["k_clusters"] = s.coreset.k_clusters ? json(*s.coreset.k_clusters) : json();
  coreset["min_cluster_size"] =
      s.coreset.min_cluster_size ? json(*s.coreset.min_cluster_size) : json();
  return {{"name", continual::StrategyName(s.strategy)},
          {"coreset_k", s.coreset_k},
          {"bounds_delta", s.bounds_delta},
          {"train", TrainToJson(s.train)},
          {"coreset", coreset}};
}

json OptionalNumber(const std::optional<double>& v) { return v ? json(*v) : json(); }

std::optional<double> ReadOptional(const json& obj, const char* key) {
  if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
  return obj.at(key).get<double>();
}

json BoundsReportToJson(const bounds::BoundReport& r) {
  return {{"theorem", bounds::TheoremName(r.theorem)},
          {"alpha", r.alpha},
          {"beta", r.beta},
          {"eps_ceiling", OptionalNumber(r.eps_ceiling)},
          {"eta_suggested", OptionalNumber(r.eta_suggested)},
          {"iteration_floor", OptionalNumber(r.iteration_floor)},
          {"feasible", r.feasible},
          {"unit_constants", true}};
}

json BoundInputsToJson(const bounds::BoundInputs& in) {
  return {{"r_min", in.r_min}, {"sigma_min", in.sigma_min}, {"jac_norm", in.jac_norm},
          {"eps", in.eps},     {"k", in.k},                 {"n", in.n},
          {"rho", in.rho},     {"delta", in.delta},         {"eta", in.eta}};
}

void WriteAtomically(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw Error(ErrorCode::kIoError, "write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kIoError, "rename to " + path.string() + ": " + ec.message());
}

std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string Fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  std::string s(buf);
  if (s == "-0.0000") s = "0.0000";
  return s;
}

std::string Fixed4(const std::optional<double>& v) { return v ? Fixed4(*v) : ""; }

// Level rendered for file names and tables: shortest form that round-trips
// at two decimals ("0.5", "0.25", "0.0").
std::string LevelText(double level) { return FormatTwoDecimals(level); }

std::string CellName(const std::string& strategy, const std::string& kind,
                     double level, std::uint64_t seed) {
  return strategy + "__" + kind + "-" + LevelText(level) + "__seed-" +
         std::to_string(seed);
}

int StrategyRank(const std::string& name) {
  const std::optional<Strategy> s = continual::ParseStrategy(name);
  return s ? static_cast<int>(*s) : 1000;
}

int NoiseRank(const std::string& kind) { return kind == "label" ? 0 : 1; }

auto RowKey(const RunRow& r) {
  return std::make_tuple(StrategyRank(r.strategy), r.strategy, NoiseRank(r.noise_kind),
                         r.noise_level, r.seed);
}

struct MeanStd {
  std::optional<double> mean;
  std::optional<double> std;
};

MeanStd Aggregate(const std::vector<std::optional<double>>& values) {
  std::vector<double> v;
  for (const auto& x : values) {
    if (x) v.push_back(*x);
  }
  if (v.empty()) return {};
  double sum = 0.0;
  for (double x : v) sum += x;
  const double mean = sum / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double std = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  return {mean, std};
}

std::string Manifest(const std::string& version, const std::string& config_echo) {
  std::string seeds;
  try {
    const json echo = json::parse(config_echo);
    for (const json& s : echo.at("seeds")) {
      if (!seeds.empty()) seeds += ",";
      seeds += std::to_string(s.get<std::uint64_t>());
    }
  } catch (const json::exception&) {
  }
  return "# version: " + version + "\n# config: " + config_echo + "\n# seeds: " + seeds +
         "\n";
}

ExperimentSummary BuildSummary(std::vector<RunRow> rows, const std::string& version,
                               const std::string& config_echo) {
  std::sort(rows.begin(), rows.end(),
            [](const RunRow& a, const RunRow& b) { return RowKey(a) < RowKey(b); });
  ExperimentSummary out;
  const std::string manifest = Manifest(version, config_echo);

  std::ostringstream runs;
  runs << manifest
       << "strategy,noise_kind,noise_level,seed,afa,forgetting,purity,wallclock_s\n";
  for (const RunRow& r : rows) {
    runs << r.strategy << ',' << r.noise_kind << ',' << Fixed4(r.noise_level) << ','
         << r.seed << ',' << Fixed4(r.afa) << ',' << Fixed4(r.forgetting) << ','
         << Fixed4(r.purity) << ',' << Fixed4(r.wallclock_s) << '\n';
  }
  out.runs_csv = runs.str();

  // Groups in sorted row order.
  struct Group {
    const RunRow* first;
    std::vector<std::optional<double>> afa, forgetting, purity;
  };
  std::vector<Group> groups;
  for (const RunRow& r : rows) {
    if (groups.empty() || groups.back().first->strategy != r.strategy ||
        groups.back().first->noise_kind != r.noise_kind ||
        groups.back().first->noise_level != r.noise_level) {
      groups.push_back({&r, {}, {}, {}});
    }
    groups.back().afa.push_back(r.afa);
    groups.back().forgetting.push_back(r.forgetting);
    groups.back().purity.push_back(r.purity);
  }

  std::ostringstream agg;
  agg << manifest
      << "strategy,noise_kind,noise_level,runs,afa_mean,afa_std,forgetting_mean,"
         "forgetting_std,purity_mean,purity_std\n";
  for (const Group& g : groups) {
    const MeanStd afa = Aggregate(g.afa);
    const MeanStd forg = Aggregate(g.forgetting);
    const MeanStd pur = Aggregate(g.purity);
    agg << g.first->strategy << ',' << g.first->noise_kind << ','
        << Fixed4(g.first->noise_level) << ',' << g.afa.size() << ','
        << Fixed4(afa.mean) << ',' << Fixed4(afa.std) << ',' << Fixed4(forg.mean) << ','
        << Fixed4(forg.std) << ',' << Fixed4(pur.mean) << ',' << Fixed4(pur.std) << '\n';
  }
  out.aggregate_csv = agg.str();

  // Table: one row per strategy, an Acc and a Forg column per noise cell.
  std::vector<std::pair<std::string, double>> cells;
  std::vector<std::string> strategies;
  for (const Group& g : groups) {
    const std::pair<std::string, double> cell{g.first->noise_kind, g.first->noise_level};
    if (std::find(cells.begin(), cells.end(), cell) == cells.end()) cells.push_back(cell);
    if (std::find(strategies.begin(), strategies.end(), g.first->strategy) ==
        strategies.end()) {
      strategies.push_back(g.first->strategy);
    }
  }
  std::sort(cells.begin(), cells.end(), [](const auto& a, const auto& b) {
    return std::make_pair(NoiseRank(a.first), a.second) <
           std::make_pair(NoiseRank(b.first), b.second);
  });
  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> header{"strategy"};
  for (const auto& [kind, level] : cells) {
    header.push_back("Acc " + kind + " " + LevelText(level));
    header.push_back("Forg " + kind + " " + LevelText(level));
  }
  grid.push_back(header);
  for (const std::string& s : strategies) {
    std::vector<std::string> line{s};
    for (const auto& [kind, level] : cells) {
      const Group* found = nullptr;
      for (const Group& g : groups) {
        if (g.first->strategy == s && g.first->noise_kind == kind &&
            g.first->noise_level == level) {
          found = &g;
        }
      }
      using Series = std::vector<std::optional<double>> Group::*;
      for (Series series : {&Group::afa, &Group::forgetting}) {
        const MeanStd m = found ? Aggregate(found->*series) : MeanStd{};
        line.push_back(m.mean ? FormatMeanStd(*m.mean, *m.std) : "N/A");
      }
    }
    grid.push_back(line);
  }
  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& line : grid) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      // Count code points so "±" takes one column.
      std::size_t w = 0;
      for (unsigned char ch : line[c]) w += (ch & 0xC0) != 0x80;
      widths[c] = std::max(widths[c], w);
    }
  }
  std::ostringstream table;
  for (const auto& line : grid) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      std::size_t w = 0;
      for (unsigned char ch : line[c]) w += (ch & 0xC0) != 0x80;
      table << line[c];
      if (c + 1 < line.size()) table << std::string(widths[c] - w + 2, ' ');
    }
    table << '\n';
  }
  out.table = table.str();
  out.rows = std::move(rows);
  return out;
}

void WriteSummaryFiles(const std::filesystem::path& dir, const ExperimentSummary& s,
                       const std::string& manifest) {
  WriteAtomically(dir / "runs.csv", s.runs_csv);
  WriteAtomically(dir / "aggregate.csv", s.aggregate_csv);
  WriteAtomically(dir / "summary.txt", manifest + s.table);
}

}  // namespace

void DatasetSpec::Validate() const {
  if (kind == Kind::kGaussianBlobs) {
    if (num_classes < 2) ConfigFail("dataset.num_classes must be >= 2");
    if (feature_dim < 1) ConfigFail("dataset.feature_dim must be >= 1");
    if (train_per_class < 1 || test_per_class < 1) {
      ConfigFail("dataset per-class sizes must be >= 1 for blobs");
    }
    if (!(separation > 0.0)) ConfigFail("dataset.separation must be > 0");
  } else {
    for (const std::filesystem::path* p :
         {&train_images, &train_labels, &test_images, &test_labels}) {
      if (p->empty()) ConfigFail("dataset: idx needs all four file paths");
      if (!std::filesystem::exists(*p)) ConfigFail("dataset file not found: " + p->string());
    }
  }
}

const char* NoiseKindName(NoiseKind k) {
  return k == NoiseKind::kLabel ? "label" : "instance";
}

std::vector<NoiseCell> ExperimentConfig::NoiseGrid() const {
  std::vector<NoiseCell> cells;
  for (double p : label_flip_probs) cells.push_back({NoiseKind::kLabel, p});
  for (double f : instance_noise_fractions) cells.push_back({NoiseKind::kInstance, f});
  return cells;
}

void ExperimentConfig::Validate() const {
  dataset.Validate();
  if (strategies.empty()) ConfigFail("strategies must not be empty");
  if (seeds.empty()) ConfigFail("seeds must not be empty");
  if (NoiseGrid().empty()) ConfigFail("noise grid is empty");
  for (double p : label_flip_probs) {
    if (!(p >= 0.0 && p <= 1.0)) ConfigFail("label_flip_probs must lie in [0, 1]");
  }
  for (double f : instance_noise_fractions) {
    if (!(f >= 0.0 && f <= 1.0)) ConfigFail("instance_noise_fractions must lie in [0, 1]");
  }
  if (!(pixel_corrupt_prob >= 0.0 && pixel_corrupt_prob <= 1.0) ||
      !(blend >= 0.0 && blend <= 1.0)) {
    ConfigFail("pixel_corrupt_prob and blend must lie in [0, 1]");
  }
  if (stream.first_experience_classes < 1 || stream.classes_per_experience < 1) {
    ConfigFail("stream class counts must be >= 1");
  }
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    ConfigFail("seeds must be distinct");
  }
  std::set<Strategy> seen;
  for (const StrategyConfig& s : strategies) {
    if (!seen.insert(s.strategy).second) {
      ConfigFail(std::string("strategy listed twice: ") + continual::StrategyName(s.strategy));
    }
    try {
      s.Validate();
    } catch (const Error& e) {
      ConfigFail(std::string(continual::StrategyName(s.strategy)) + ": " + e.what());
    }
  }
  for (std::size_t h : hidden_layers) {
    if (h < 1) ConfigFail("hidden layer widths must be >= 1");
  }
  if (output_dir.empty()) ConfigFail("output_dir must be set");
}

ExperimentConfig ParseConfig(std::string_view json_text,
                             const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    ConfigFail(std::string("invalid JSON: ") + e.what());
  }
  CheckKeys(root,
            {"dataset", "stream", "noise", "model", "train", "strategies", "seeds",
             "output_dir"},
            "config");
  ExperimentConfig cfg;

  if (root.contains("dataset")) {
    const json& d = root.at("dataset");
    CheckKeys(d,
              {"kind", "num_classes", "feature_dim", "separation", "train_per_class",
               "test_per_class", "train_images", "train_labels", "test_images",
               "test_labels", "seed"},
              "dataset");
    std::string kind = "gaussian_blobs";
    Read(d, "kind", kind, "dataset");
    if (kind == "gaussian_blobs") {
      cfg.dataset.kind = DatasetSpec::Kind::kGaussianBlobs;
    } else if (kind == "idx") {
      cfg.dataset.kind = DatasetSpec::Kind::kIdx;
      cfg.dataset.train_per_class = 0;
      cfg.dataset.test_per_class = 0;
    } else {
      ConfigFail("dataset.kind: unknown value '" + kind + "'");
    }
    Read(d, "num_classes", cfg.dataset.num_classes, "dataset");
    ReadCount(d, "feature_dim", cfg.dataset.feature_dim, "dataset");
    Read(d, "separation", cfg.dataset.separation, "dataset");
    ReadCount(d, "train_per_class", cfg.dataset.train_per_class, "dataset");
    ReadCount(d, "test_per_class", cfg.dataset.test_per_class, "dataset");
    cfg.dataset.train_images = ResolvePath(d, "train_images", base_dir, "dataset");
    cfg.dataset.train_labels = ResolvePath(d, "train_labels", base_dir, "dataset");
    cfg.dataset.test_images = ResolvePath(d, "test_images", base_dir, "dataset");
    cfg.dataset.test_labels = ResolvePath(d, "test_labels", base_dir, "dataset");
    Read(d, "seed", cfg.dataset.seed, "dataset");
  }
  if (root.contains("stream")) {
    const json& s = root.at("stream");
    CheckKeys(s, {"first_experience_classes", "classes_per_experience"}, "stream");
    Read(s, "first_experience_classes", cfg.stream.first_experience_classes, "stream");
    Read(s, "classes_per_experience", cfg.stream.classes_per_experience, "stream");
  }
  if (root.contains("noise")) {
    const json& n = root.at("noise");
    CheckKeys(n,
              {"label_flip_probs", "instance_noise_fractions", "pixel_corrupt_prob",
               "blend"},
              "noise");
    Read(n, "label_flip_probs", cfg.label_flip_probs, "noise");
    Read(n, "instance_noise_fractions", cfg.instance_noise_fractions, "noise");
    Read(n, "pixel_corrupt_prob", cfg.pixel_corrupt_prob, "noise");
    Read(n, "blend", cfg.blend, "noise");
  }
  if (root.contains("model")) {
    const json& m = root.at("model");
    CheckKeys(m, {"hidden_layers"}, "model");
    Read(m, "hidden_layers", cfg.hidden_layers, "model");
  }
  model::TrainConfig defaults;
  if (root.contains("train")) ParseTrain(root.at("train"), defaults, "train");
  if (root.contains("strategies")) {
    const json& list = root.at("strategies");
    if (!list.is_array()) ConfigFail("strategies must be an array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      cfg.strategies.push_back(
          ParseStrategy(list[i], defaults, "strategies[" + std::to_string(i) + "]"));
    }
  }
  Read(root, "seeds", cfg.seeds, "config");
  const std::filesystem::path out = ResolvePath(root, "output_dir", base_dir, "config");
  cfg.output_dir = out;
  cfg.Validate();
  return cfg;
}

ExperimentConfig LoadConfig(const std::filesystem::path& path) {
  std::string text;
  try {
    text = ReadFile(path);
  } catch (const Error& e) {
    ConfigFail(e.what());
  }
  return ParseConfig(text, std::filesystem::absolute(path).parent_path());
}

std::string ConfigEcho(const ExperimentConfig& cfg) {
  const DatasetSpec& d = cfg.dataset;
  json dataset = {{"seed", d.seed},
                  {"train_per_class", d.train_per_class},
                  {"test_per_class", d.test_per_class}};
  if (d.kind == DatasetSpec::Kind::kGaussianBlobs) {
    dataset["kind"] = "gaussian_blobs";
    dataset["num_classes"] = d.num_classes;
    dataset["feature_dim"] = d.feature_dim;
    dataset["separation"] = d.separation;
  } else {
    dataset["kind"] = "idx";
    dataset["train_images"] = d.train_images.string();
    dataset["train_labels"] = d.train_labels.string();
    dataset["test_images"] = d.test_images.string();
    dataset["test_labels"] = d.test_labels.string();
  }
  json strategies = json::array();
  for (const StrategyConfig& s : cfg.strategies) strategies.push_back(StrategyToJson(s));
  const json echo = {
      {"dataset", dataset},
      {"stream",
       {{"first_experience_classes", cfg.stream.first_experience_classes},
        {"classes_per_experience", cfg.stream.classes_per_experience}}},
      {"noise",
       {{"label_flip_probs", cfg.label_flip_probs},
        {"instance_noise_fractions", cfg.instance_noise_fractions},
        {"pixel_corrupt_prob", cfg.pixel_corrupt_prob},
        {"blend", cfg.blend}}},
      {"model", {{"hidden_layers", cfg.hidden_layers}}},
      {"strategies", strategies},
      {"seeds", cfg.seeds}};
  return echo.dump();
}

std::string VersionStamp() {
  return std::string("crust ") + kVersion + " (" + kGitRevision + ")";
}

Datasets LoadDatasets(const DatasetSpec& spec) {
  spec.Validate();
  Datasets out;
  if (spec.kind == DatasetSpec::Kind::kGaussianBlobs) {
    out.train = data::GenerateGaussianBlobs(spec.num_classes, spec.train_per_class,
                                            spec.feature_dim, spec.separation, spec.seed);
    out.test = data::GenerateGaussianBlobs(spec.num_classes, spec.test_per_class,
                                           spec.feature_dim, spec.separation,
                                           DeriveSeed(spec.seed, {kTestBlobTag}));
    return out;
  }
  out.train = data::LoadIdx(spec.train_images, spec.train_labels);
  out.test = data::LoadIdx(spec.test_images, spec.test_labels);
  if (spec.train_per_class > 0) {
    out.train = data::SubsetPerClass(out.train, spec.train_per_class, spec.seed);
  }
  if (spec.test_per_class > 0) {
    out.test = data::SubsetPerClass(out.test, spec.test_per_class,
                                    DeriveSeed(spec.seed, {kTestBlobTag}));
  }
  return out;
}

CellData PrepareCell(const ExperimentConfig& cfg, const Datasets& base,
                     const NoiseCell& noise, std::uint64_t seed) {
  CellData out;
  const std::uint64_t noise_seed =
      DeriveSeed(seed, {kNoiseTag, static_cast<std::uint64_t>(noise.kind),
                        std::bit_cast<std::uint64_t>(noise.level)});
  if (noise.kind == NoiseKind::kLabel) {
    out.train = noise.level > 0.0 ? data::FlipLabels(base.train, noise.level,
                                                     base.train.num_classes, noise_seed)
                                  : base.train;
  } else {
    data::NoiseSpec spec;
    spec.instance_noise_fraction = noise.level;
    spec.pixel_corrupt_prob = cfg.pixel_corrupt_prob;
    spec.blend = cfg.blend;
    spec.rng_seed = noise_seed;
    out.train = noise.level > 0.0 ? data::PerturbInstances(base.train, spec) : base.train;
  }
  out.stream = data::BuildStream(out.train, base.test, DeriveSeed(seed, {kStreamTag}),
                                 cfg.stream);
  return out;
}

std::string RecordToJson(const continual::RunRecord& record, const RunRow& row,
                         const std::string& manifest_config,
                         const continual::StrategyConfig& strategy) {
  const metrics::AccuracyMatrix& m = record.accuracy;
  json rows = json::array();
  for (std::size_t i = 0; i < m.experiences(); ++i) {
    json r = json::array();
    for (std::size_t j = 0; j < m.classes(); ++j) r.push_back(OptionalNumber(m.at(i, j)));
    rows.push_back(r);
  }
  json taught = json::array();
  for (std::size_t j = 0; j < m.classes(); ++j) {
    const auto t = m.taught_at(j);
    taught.push_back(t ? json(*t) : json());
  }
  json experiences = json::array();
  json bound_list = json::array();
  for (std::size_t i = 0; i < record.experiences.size(); ++i) {
    const continual::ExperienceLog& e = record.experiences[i];
    json purity_by_class = json::object();
    for (const auto& [cls, p] : e.purity_by_class) {
      purity_by_class[std::to_string(cls)] = {{"clean", p.clean}, {"total", p.total}};
    }
    experiences.push_back({{"classes", e.classes},
                           {"purity", OptionalNumber(e.purity)},
                           {"purity_by_class", purity_by_class},
                           {"epoch_losses", e.epoch_losses},
                           {"audit",
                            {{"phase2_examples", e.audit.phase2_examples},
                             {"phase2_violations", e.audit.phase2_violations}}},
                           {"warnings", e.warnings},
                           {"wallclock_s", e.wallclock_s}});
    for (const continual::ClassBounds& b : e.bounds) {
      bound_list.push_back(
          {{"experience", i},
           {"class", b.cls},
           {"inputs", BoundInputsToJson(b.inputs)},
           {"theorem1", b.theorem1 ? BoundsReportToJson(*b.theorem1) : json()}});
    }
  }
  json coresets = json::object();
  for (const auto& [cls, ids] : record.final_store) coresets[std::to_string(cls)] = ids;

  const json out = {
      {"schema_version", kRecordSchemaVersion},
      {"version", VersionStamp()},
      {"config", json::parse(manifest_config)},
      {"strategy", row.strategy},
      {"noise_kind", row.noise_kind},
      {"noise_level", row.noise_level},
      {"seed", row.seed},
      {"strategy_config", StrategyToJson(strategy)},
      {"metrics",
       {{"afa", OptionalNumber(row.afa)},
        {"forgetting", OptionalNumber(row.forgetting)},
        {"purity", OptionalNumber(row.purity)},
        {"wallclock_s", row.wallclock_s}}},
      {"accuracy_matrix",
       {{"experiences", m.experiences()},
        {"classes", m.classes()},
        {"rows", rows},
        {"taught_at", taught}}},
      {"experiences", experiences},
      {"bounds", bound_list},
      {"coresets", coresets}};
  return out.dump(1) + "\n";
}

ExperimentSummary RunExperiment(const ExperimentConfig& cfg, const RunOptions& options) {
  cfg.Validate();
  const std::filesystem::path runs_dir = cfg.output_dir / "runs";
  std::error_code ec;
  std::filesystem::create_directories(runs_dir, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot create " + runs_dir.string());

  const Datasets base = LoadDatasets(cfg.dataset);
  const std::string echo = ConfigEcho(cfg);

  struct Cell {
    std::size_t strategy;
    NoiseCell noise;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (std::size_t s = 0; s < cfg.strategies.size(); ++s) {
    for (const NoiseCell& n : cfg.NoiseGrid()) {
      for (std::uint64_t seed : cfg.seeds) cells.push_back({s, n, seed});
    }
  }

  std::vector<CellOutcome> outcomes(cells.size());
  std::atomic<std::size_t> next{0};
  std::size_t done = 0;
  std::mutex mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const Cell& cell = cells[i];
      const StrategyConfig& strategy = cfg.strategies[cell.strategy];
      CellOutcome& out = outcomes[i];
      out.row.strategy = continual::StrategyName(strategy.strategy);
      out.row.noise_kind = NoiseKindName(cell.noise.kind);
      out.row.noise_level = cell.noise.level;
      out.row.seed = cell.seed;
      out.record_path = runs_dir / (CellName(out.row.strategy, out.row.noise_kind,
                                             cell.noise.level, cell.seed) +
                                    ".json");
      try {
        const CellData data = PrepareCell(cfg, base, cell.noise, cell.seed);
        const continual::RunRecord record = continual::RunCurriculum(
            data.train, base.test, data.stream, strategy, cfg.hidden_layers, cell.seed);
        out.row.afa = record.afa;
        out.row.forgetting = record.forgetting;
        out.row.purity = record.purity;
        out.row.wallclock_s = record.wallclock_s;
        WriteAtomically(out.record_path, RecordToJson(record, out.row, echo, strategy));
      } catch (const std::exception& e) {
        out.error = e.what();
        const json failed = {{"schema_version", kRecordSchemaVersion},
                             {"version", VersionStamp()},
                             {"config", json::parse(echo)},
                             {"strategy", out.row.strategy},
                             {"noise_kind", out.row.noise_kind},
                             {"noise_level", out.row.noise_level},
                             {"seed", out.row.seed},
                             {"error", out.error}};
        try {
          WriteAtomically(out.record_path, failed.dump(1) + "\n");
        } catch (const std::exception&) {
        }
      }
      std::lock_guard<std::mutex> lock(mu);
      ++done;
      if (options.progress) options.progress(out, done, cells.size());
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(options.workers, 1, cells.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();

  std::vector<RunRow> rows;
  std::size_t failures = 0;
  for (const CellOutcome& o : outcomes) {
    if (o.error.empty()) {
      rows.push_back(o.row);
    } else {
      ++failures;
    }
  }
  ExperimentSummary summary = BuildSummary(std::move(rows), VersionStamp(), echo);
  summary.failures = failures;
  WriteSummaryFiles(cfg.output_dir, summary, Manifest(VersionStamp(), echo));
  return summary;
}

ExperimentSummary Summarize(const std::filesystem::path& dir) {
  const std::filesystem::path runs_dir = dir / "runs";
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(runs_dir)) {
    for (const auto& entry : std::filesystem::directory_iterator(runs_dir)) {
      if (entry.path().extension() == ".json") files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    throw Error(ErrorCode::kNoResults, "no run records under " + runs_dir.string());
  }
  std::vector<RunRow> rows;
  std::size_t failures = 0;
  std::string version;
  std::string echo;
  for (const auto& path : files) {
    json rec;
    try {
      rec = json::parse(ReadFile(path));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kIoError, path.string() + ": " + e.what());
    }
    if (rec.value("schema_version", 0) != kRecordSchemaVersion) {
      throw Error(ErrorCode::kIoError, path.string() + ": unsupported schema_version");
    }
    if (version.empty()) {
      version = rec.at("version").get<std::string>();
      echo = rec.at("config").dump();
    }
    if (rec.contains("error")) {
      ++failures;
      continue;
    }
    RunRow row;
    row.strategy = rec.at("strategy").get<std::string>();
    row.noise_kind = rec.at("noise_kind").get<std::string>();
    row.noise_level = rec.at("noise_level").get<double>();
    row.seed = rec.at("seed").get<std::uint64_t>();
    const json& m = rec.at("metrics");
    row.afa = ReadOptional(m, "afa");
    row.forgetting = ReadOptional(m, "forgetting");
    row.purity = ReadOptional(m, "purity");
    row.wallclock_s = m.at("wallclock_s").get<double>();
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error(ErrorCode::kNoResults, "every run record is a failure");
  ExperimentSummary summary = BuildSummary(std::move(rows), version, echo);
  summary.failures = failures;
  WriteSummaryFiles(dir, summary, Manifest(version, echo));
  return summary;
}

std::string FormatTwoDecimals(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  std::string s(buf);
  while (s.back() == '0' && s[s.size() - 2] != '.') s.pop_back();
  if (s == "-0.0") s = "0.0";
  return s;
}

std::string FormatMeanStd(double mean, double std) {
  return FormatTwoDecimals(mean) + " ±" + FormatTwoDecimals(std);
}

std::size_t DefaultWorkers() {
  if (const char* env = std::getenv("CRUST_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

ExperimentConfig DemoConfig(const std::filesystem::path& output_dir) {
  ExperimentConfig cfg;
  cfg.dataset.kind = DatasetSpec::Kind::kGaussianBlobs;
  cfg.dataset.num_classes = 4;
  cfg.dataset.feature_dim = 8;
  cfg.dataset.separation = 6.0;
  cfg.dataset.train_per_class = 100;
  cfg.dataset.test_per_class = 50;
  cfg.label_flip_probs = {0.0, 0.3};
  cfg.hidden_layers = {32};
  model::TrainConfig train;
  train.optimizer = model::OptimizerKind::kAdam;
  train.learning_rate = 5e-3;
  train.epochs_phase1 = 6;
  train.epochs_phase2 = 4;
  for (Strategy s : {Strategy::kNaive, Strategy::kRandomReplay, Strategy::kContinualCrust,
                     Strategy::kContinualCosineCrust}) {
    StrategyConfig sc;
    sc.strategy = s;
    sc.coreset_k = 20;
    sc.train = train;
    cfg.strategies.push_back(sc);
  }
  cfg.seeds = {0, 1};
  cfg.output_dir = output_dir;
  return cfg;
}

}  // namespace crust::experiment
