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

// Datasets, noise injection and class-incremental experience streams.

#ifndef CRUST_DATA_H_
#define CRUST_DATA_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace crust::data {

struct LabeledSample {
  std::size_t id = 0;
  std::vector<double> features;
  int label = 0;        // observed, possibly flipped
  int clean_label = 0;  // ground truth; never shown to learners
  bool perturbed = false;

  bool is_clean() const { return label == clean_label && !perturbed; }

  friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

struct Dataset {
  std::vector<LabeledSample> samples;
  int num_classes = 0;
  std::size_t feature_dim = 0;

  std::size_t size() const { return samples.size(); }

  // Throws kBadConfig when ids are not dense 0..n-1, dims disagree, labels
  // fall outside [0, num_classes) or a feature is non-finite.
  void Validate() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct NoiseSpec {
  double label_flip_prob = 0.0;
  double instance_noise_fraction = 0.0;
  double pixel_corrupt_prob = 0.9;
  double blend = 0.5;
  std::uint64_t rng_seed = 0;

  void Validate() const;
};

// Class c is centred at separation * s * e_(c mod feature_dim) with unit
// isotropic Gaussian noise, where s = +1, -1, +2, -2, ... for successive
// passes over the axes, so centres stay distinct when classes outnumber axes.
Dataset GenerateGaussianBlobs(int num_classes, std::size_t per_class,
                              std::size_t feature_dim, double separation,
                              std::uint64_t seed);

// Reads an IDX image file (magic 2051) and label file (magic 2049). Pixels are
// scaled by 1/255; num_classes is one past the largest label.
Dataset LoadIdx(const std::filesystem::path& images_path,
                const std::filesystem::path& labels_path);

// Keeps the first `per_class` samples of each clean class, in a seeded random
// order, and renumbers ids densely.
Dataset SubsetPerClass(const Dataset& ds, std::size_t per_class,
                       std::uint64_t seed);

// Each sample is selected independently with probability `prob`; a selected
// sample receives a label drawn uniformly from the candidate classes other
// than its clean label. An empty `candidate_classes` means all classes
// 0..num_classes-1.
Dataset FlipLabels(const Dataset& ds, double prob, int num_classes,
                   std::uint64_t seed,
                   std::span<const int> candidate_classes = {});

// Perturbs exactly floor(instance_noise_fraction * n) samples chosen uniformly
// without replacement: x' = (1 - blend) x + blend m, where each pixel of the
// mask m is 0 or 1 (equal odds) with probability pixel_corrupt_prob and x
// otherwise. Outputs are clipped to [0, 1].
Dataset PerturbInstances(const Dataset& ds, const NoiseSpec& spec);

struct Experience {
  std::vector<int> classes;
  // Parallel to `classes`: train indices whose clean label is that class.
  std::vector<std::vector<std::size_t>> train_by_class;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
};

struct ExperienceStream {
  std::vector<Experience> experiences;
  std::vector<int> class_order;
};

struct StreamOptions {
  int first_experience_classes = 2;
  int classes_per_experience = 1;
};

ExperienceStream BuildStream(const Dataset& train, const Dataset& test,
                             std::uint64_t seed,
                             const StreamOptions& options = {});

// Binary cache: "CDS1" tag, then num_classes, feature_dim, n as little-endian
// u64, then per sample: id u64, label u32, clean_label u32, perturbed u8 and
// feature_dim little-endian f64 values.
void SaveDatasetCache(const Dataset& ds, const std::filesystem::path& path);
Dataset LoadDatasetCache(const std::filesystem::path& path);

}  // namespace crust::data

#endif  // CRUST_DATA_H_
