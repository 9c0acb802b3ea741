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

// A small fully connected classifier with hand-written backpropagation.
//
// Hidden layers use ReLU; the output layer produces raw logits whose width is
// fixed to the total class count from the start, so gradient features keep
// the same dimension across experiences.

#ifndef CRUST_MODEL_H_
#define CRUST_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "crust/data.h"
#include "crust/linalg.h"

namespace crust::model {

struct DenseLayer {
  linalg::DenseMatrix weights;  // fan_in x fan_out
  std::vector<double> bias;     // fan_out

  std::size_t fan_in() const { return weights.rows(); }
  std::size_t fan_out() const { return weights.cols(); }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

class MlpClassifier {
 public:
  MlpClassifier() = default;
  // dims = {input, hidden..., num_outputs}. Weights and biases are drawn from
  // U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  MlpClassifier(std::vector<std::size_t> dims, std::uint64_t seed);
  // All-zero parameters.
  static MlpClassifier Zeros(std::vector<std::size_t> dims);
  static MlpClassifier FromLayers(std::vector<DenseLayer> layers);

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t input_dim() const { return dims_.front(); }
  std::size_t num_outputs() const { return dims_.back(); }

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& mutable_layers() { return layers_; }

  std::size_t ParameterCount() const;
  // Weights then bias, layer by layer.
  std::vector<double> FlatParameters() const;
  void SetFlatParameters(std::span<const double> flat);
  bool AllFinite() const;

  friend bool operator==(const MlpClassifier&, const MlpClassifier&) = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<DenseLayer> layers_;
};

struct ForwardCache {
  // activations[0] is the input, activations[l] the post-ReLU output of hidden
  // layer l, and the last entry holds the logits.
  std::vector<std::vector<double>> activations;

  const std::vector<double>& logits() const { return activations.back(); }
  // Input to the output layer.
  const std::vector<double>& penultimate() const {
    return activations[activations.size() - 2];
  }
};

ForwardCache Forward(const MlpClassifier& model, std::span<const double> features);

std::vector<double> Softmax(std::span<const double> logits);

// One training example with its loss weight.
struct Example {
  std::span<const double> features;
  int label = 0;
  double weight = 1.0;
};

// Parameter gradients, same layout as MlpClassifier::FlatParameters().
struct LossAndGradient {
  double loss = 0.0;  // sum(w_i * ce_i) / sum(w_i)
  std::vector<double> gradient;
};

// Weighted cross-entropy over `batch` and its exact gradient (plus
// weight_decay * theta when weight_decay > 0).
LossAndGradient ComputeLossAndGradient(const MlpClassifier& model,
                                       std::span<const Example> batch,
                                       double weight_decay = 0.0);

enum class ClassWeighting { kWeightedLoss, kUpsample, kNone };
enum class OptimizerKind { kSgd, kAdam };

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  int epochs_phase1 = 40;
  int epochs_phase2 = 20;
  double weight_decay = 0.0;
  ClassWeighting class_weighting = ClassWeighting::kWeightedLoss;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;

  int total_epochs() const { return epochs_phase1 + epochs_phase2; }
  void Validate() const;
};

// Holds optimizer state (Adam moments) between steps.
class Optimizer {
 public:
  Optimizer(const MlpClassifier& model, const TrainConfig& cfg);

  void Step(MlpClassifier& model, std::span<const double> gradient);
  void Reset();

 private:
  TrainConfig cfg_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::int64_t steps_ = 0;
};

// One pass of mini-batch training over `examples` in an order shuffled by
// `shuffle_seed`. Returns the weighted mean loss measured during the pass.
// Throws kNonFiniteLoss when the loss or any parameter stops being finite.
double TrainEpoch(MlpClassifier& model, Optimizer& optimizer,
                  std::span<const Example> examples, const TrainConfig& cfg,
                  std::uint64_t shuffle_seed);

// Same, with each example weighted by class_weights[label].
double TrainEpoch(MlpClassifier& model, Optimizer& optimizer,
                  std::span<const Example> examples,
                  std::span<const double> class_weights, const TrainConfig& cfg,
                  std::uint64_t shuffle_seed);

enum class GradientMode {
  // softmax(logits) - onehot(label): one column per class.
  kLogits,
  // Outer product of the above with [penultimate activations, 1]: the full
  // gradient of the output layer's weights and bias.
  kLastLayerWeights,
};

struct GradientFeatures {
  linalg::DenseMatrix matrix;   // one row per sample
  std::vector<std::size_t> ids;  // row i belongs to sample ids[i]
};

// Per-sample loss gradients at the output layer, computed against the
// observed labels of ds.samples[indices[i]].
GradientFeatures LastLayerGradients(const MlpClassifier& model,
                                    const data::Dataset& ds,
                                    std::span<const std::size_t> indices,
                                    GradientMode mode = GradientMode::kLogits);

// Predicted class (argmax of logits, lowest index on ties) per sample.
std::vector<int> Predict(const MlpClassifier& model, const data::Dataset& ds,
                         std::span<const std::size_t> indices);

struct Evaluation {
  // Accuracy against clean labels; nullopt for classes with no test sample.
  std::vector<std::optional<double>> per_class;
  double overall = 0.0;
};

Evaluation Evaluate(const MlpClassifier& model, const data::Dataset& test,
                    std::span<const std::size_t> indices);
Evaluation Evaluate(const MlpClassifier& model, const data::Dataset& test);

// "CMLP" tag, u32 version, u64 layer-dim count, the dims, then every
// parameter in FlatParameters() order; all little-endian.
void SaveCheckpoint(const MlpClassifier& model, const std::filesystem::path& path);
MlpClassifier LoadCheckpoint(const std::filesystem::path& path);

}  // namespace crust::model

#endif  // CRUST_MODEL_H_
