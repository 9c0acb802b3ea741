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

#include "crust/data.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "binary_io.h"
#include "crust/error.h"

namespace crust::data {

namespace {

constexpr std::uint32_t kIdxImageMagic = 2051;
constexpr std::uint32_t kIdxLabelMagic = 2049;
constexpr char kCacheTag[] = "CDS1";

void CheckProbability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw Error(ErrorCode::kBadConfig,
                std::string(name) + " must lie in [0,1], got " + std::to_string(p));
  }
}

}  // namespace

void Dataset::Validate() const {
  if (num_classes < 1) throw Error(ErrorCode::kBadConfig, "num_classes < 1");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const LabeledSample& s = samples[i];
    if (s.id != i) {
      throw Error(ErrorCode::kBadConfig,
                  "sample ids must be dense; position " + std::to_string(i) +
                      " holds id " + std::to_string(s.id));
    }
    if (s.features.size() != feature_dim) {
      throw Error(ErrorCode::kBadConfig, "sample " + std::to_string(i) +
                                             " has wrong feature length");
    }
    if (s.label < 0 || s.label >= num_classes || s.clean_label < 0 ||
        s.clean_label >= num_classes) {
      throw Error(ErrorCode::kBadConfig,
                  "sample " + std::to_string(i) + " has a label out of range");
    }
    for (double v : s.features) {
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::kBadConfig,
                    "sample " + std::to_string(i) + " has non-finite features");
      }
    }
  }
}

void NoiseSpec::Validate() const {
  CheckProbability(label_flip_prob, "label_flip_prob");
  CheckProbability(instance_noise_fraction, "instance_noise_fraction");
  CheckProbability(pixel_corrupt_prob, "pixel_corrupt_prob");
  CheckProbability(blend, "blend");
}

Dataset GenerateGaussianBlobs(int num_classes, std::size_t per_class,
                              std::size_t feature_dim, double separation,
                              std::uint64_t seed) {
  if (num_classes < 2 || per_class < 1 || feature_dim < 1) {
    throw Error(ErrorCode::kBadConfig,
                "blobs need num_classes >= 2, per_class >= 1, feature_dim >= 1");
  }
  if (!(separation > 0.0)) {
    throw Error(ErrorCode::kBadConfig, "blob separation must be positive");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  Dataset ds;
  ds.num_classes = num_classes;
  ds.feature_dim = feature_dim;
  ds.samples.reserve(static_cast<std::size_t>(num_classes) * per_class);
  for (int c = 0; c < num_classes; ++c) {
    const std::size_t axis = static_cast<std::size_t>(c) % feature_dim;
    const std::size_t pass = static_cast<std::size_t>(c) / feature_dim;
    const double magnitude = static_cast<double>(pass / 2 + 1);
    const double center = separation * magnitude * (pass % 2 == 0 ? 1.0 : -1.0);
    for (std::size_t i = 0; i < per_class; ++i) {
      LabeledSample s;
      s.id = ds.samples.size();
      s.label = c;
      s.clean_label = c;
      s.features.resize(feature_dim);
      for (std::size_t d = 0; d < feature_dim; ++d) {
        s.features[d] = noise(rng) + (d == axis ? center : 0.0);
      }
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

Dataset LoadIdx(const std::filesystem::path& images_path,
                const std::filesystem::path& labels_path) {
  auto images = internal::ByteReader::FromFile(images_path);
  auto labels = internal::ByteReader::FromFile(labels_path);

  const std::uint32_t image_magic = images.U32Be();
  if (image_magic != kIdxImageMagic) {
    throw Error(ErrorCode::kBadMagic, images.name() + ": image magic " +
                                          std::to_string(image_magic));
  }
  const std::uint32_t label_magic = labels.U32Be();
  if (label_magic != kIdxLabelMagic) {
    throw Error(ErrorCode::kBadMagic, labels.name() + ": label magic " +
                                          std::to_string(label_magic));
  }
  const std::uint32_t n_images = images.U32Be();
  const std::uint32_t rows = images.U32Be();
  const std::uint32_t cols = images.U32Be();
  const std::uint32_t n_labels = labels.U32Be();
  if (n_images != n_labels) {
    throw Error(ErrorCode::kDimensionMismatch,
                std::to_string(n_images) + " images vs " +
                    std::to_string(n_labels) + " labels");
  }
  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  images.Need(pixels * n_images);
  labels.Need(n_labels);

  Dataset ds;
  ds.feature_dim = pixels;
  ds.samples.resize(n_images);
  int max_label = 0;
  for (std::size_t i = 0; i < n_images; ++i) {
    LabeledSample& s = ds.samples[i];
    s.id = i;
    s.features.resize(pixels);
    for (std::size_t p = 0; p < pixels; ++p) {
      s.features[p] = static_cast<double>(images.U8()) / 255.0;
    }
  }
  for (std::size_t i = 0; i < n_labels; ++i) {
    const int label = labels.U8();
    ds.samples[i].label = label;
    ds.samples[i].clean_label = label;
    max_label = std::max(max_label, label);
  }
  ds.num_classes = max_label + 1;
  return ds;
}

Dataset SubsetPerClass(const Dataset& ds, std::size_t per_class,
                       std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    by_class[ds.samples[i].clean_label].push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> keep;
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    members.resize(std::min(per_class, members.size()));
    keep.insert(keep.end(), members.begin(), members.end());
  }
  std::sort(keep.begin(), keep.end());

  Dataset out;
  out.num_classes = ds.num_classes;
  out.feature_dim = ds.feature_dim;
  out.samples.reserve(keep.size());
  for (std::size_t idx : keep) {
    LabeledSample s = ds.samples[idx];
    s.id = out.samples.size();
    out.samples.push_back(std::move(s));
  }
  return out;
}

Dataset FlipLabels(const Dataset& ds, double prob, int num_classes,
                   std::uint64_t seed, std::span<const int> candidate_classes) {
  CheckProbability(prob, "label flip probability");
  std::vector<int> candidates(candidate_classes.begin(), candidate_classes.end());
  if (candidates.empty()) {
    candidates.resize(num_classes);
    std::iota(candidates.begin(), candidates.end(), 0);
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  Dataset out = ds;
  std::vector<int> others;
  for (LabeledSample& s : out.samples) {
    const bool flip = coin(rng) < prob;
    if (!flip) continue;
    others.clear();
    for (int c : candidates) {
      if (c != s.clean_label) others.push_back(c);
    }
    if (others.empty()) {
      throw Error(ErrorCode::kBadConfig, "no alternative label to flip to");
    }
    std::uniform_int_distribution<std::size_t> pick(0, others.size() - 1);
    s.label = others[pick(rng)];
  }
  return out;
}

Dataset PerturbInstances(const Dataset& ds, const NoiseSpec& spec) {
  spec.Validate();
  for (const LabeledSample& s : ds.samples) {
    for (double v : s.features) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw Error(ErrorCode::kBadConfig,
                    "instance noise needs features in [0,1]");
      }
    }
  }
  const std::size_t n = ds.size();
  const auto count = static_cast<std::size_t>(
      std::floor(spec.instance_noise_fraction * static_cast<double>(n) + 1e-9));

  std::mt19937_64 rng(spec.rng_seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(count);
  std::sort(order.begin(), order.end());

  std::uniform_real_distribution<double> coin(0.0, 1.0);
  Dataset out = ds;
  for (std::size_t idx : order) {
    LabeledSample& s = out.samples[idx];
    s.perturbed = true;
    for (double& x : s.features) {
      double mask = x;
      if (coin(rng) < spec.pixel_corrupt_prob) {
        mask = coin(rng) < 0.5 ? 0.0 : 1.0;
      }
      x = std::clamp((1.0 - spec.blend) * x + spec.blend * mask, 0.0, 1.0);
    }
  }
  return out;
}

ExperienceStream BuildStream(const Dataset& train, const Dataset& test,
                             std::uint64_t seed, const StreamOptions& options) {
  if (train.num_classes != test.num_classes ||
      train.feature_dim != test.feature_dim) {
    throw Error(ErrorCode::kBadConfig,
                "train and test datasets disagree on classes or feature_dim");
  }
  if (train.num_classes < 2) {
    throw Error(ErrorCode::kTooFewClasses, "a stream needs at least 2 classes");
  }
  if (options.first_experience_classes < 1 || options.classes_per_experience < 1) {
    throw Error(ErrorCode::kBadConfig, "experience class counts must be >= 1");
  }

  ExperienceStream stream;
  stream.class_order.resize(train.num_classes);
  std::iota(stream.class_order.begin(), stream.class_order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(stream.class_order.begin(), stream.class_order.end(), rng);

  std::vector<std::vector<std::size_t>> train_by_class(train.num_classes);
  std::vector<std::vector<std::size_t>> test_by_class(test.num_classes);
  for (std::size_t i = 0; i < train.size(); ++i) {
    train_by_class[train.samples[i].clean_label].push_back(i);
  }
  for (std::size_t i = 0; i < test.size(); ++i) {
    test_by_class[test.samples[i].clean_label].push_back(i);
  }

  std::size_t next = 0;
  while (next < stream.class_order.size()) {
    const std::size_t take = static_cast<std::size_t>(
        stream.experiences.empty() ? options.first_experience_classes
                                   : options.classes_per_experience);
    Experience exp;
    for (std::size_t j = 0; j < take && next < stream.class_order.size(); ++j) {
      const int c = stream.class_order[next++];
      exp.classes.push_back(c);
      exp.train_by_class.push_back(train_by_class[c]);
      exp.train_indices.insert(exp.train_indices.end(), train_by_class[c].begin(),
                               train_by_class[c].end());
      exp.test_indices.insert(exp.test_indices.end(), test_by_class[c].begin(),
                              test_by_class[c].end());
    }
    std::sort(exp.train_indices.begin(), exp.train_indices.end());
    std::sort(exp.test_indices.begin(), exp.test_indices.end());
    stream.experiences.push_back(std::move(exp));
  }
  return stream;
}

void SaveDatasetCache(const Dataset& ds, const std::filesystem::path& path) {
  internal::ByteWriter w;
  w.Bytes(std::string_view(kCacheTag, 4));
  w.U64Le(static_cast<std::uint64_t>(ds.num_classes));
  w.U64Le(ds.feature_dim);
  w.U64Le(ds.size());
  for (const LabeledSample& s : ds.samples) {
    w.U64Le(s.id);
    w.U32Le(static_cast<std::uint32_t>(s.label));
    w.U32Le(static_cast<std::uint32_t>(s.clean_label));
    w.U8(s.perturbed ? 1 : 0);
    for (double v : s.features) w.F64Le(v);
  }
  w.WriteTo(path);
}

Dataset LoadDatasetCache(const std::filesystem::path& path) {
  auto r = internal::ByteReader::FromFile(path);
  if (r.Bytes(4) != std::string_view(kCacheTag, 4)) {
    throw Error(ErrorCode::kBadMagic, path.string() + ": not a dataset cache");
  }
  Dataset ds;
  ds.num_classes = static_cast<int>(r.U64Le());
  ds.feature_dim = r.U64Le();
  const std::uint64_t n = r.U64Le();
  r.Need(n * (8 + 4 + 4 + 1 + 8 * ds.feature_dim));
  ds.samples.resize(n);
  for (LabeledSample& s : ds.samples) {
    s.id = r.U64Le();
    s.label = static_cast<int>(r.U32Le());
    s.clean_label = static_cast<int>(r.U32Le());
    s.perturbed = r.U8() != 0;
    s.features.resize(ds.feature_dim);
    for (double& v : s.features) v = r.F64Le();
  }
  return ds;
}

}  // namespace crust::data
