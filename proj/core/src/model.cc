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

#include "crust/model.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#if defined(__SSE2__)
#include <pmmintrin.h>
#include <xmmintrin.h>
#endif

#include "binary_io.h"
#include "crust/error.h"

namespace crust::model {

namespace {

constexpr char kCheckpointTag[] = "CMLP";
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::size_t kInferenceChunk = 256;

// Flushes subnormal results and operands to zero for the current thread while
// in scope. Late in training many activations and Adam moments decay into the
// subnormal range, where x86 arithmetic is several times slower.
class ScopedFlushSubnormals {
 public:
  ScopedFlushSubnormals() {
#if defined(__SSE2__)
    saved_csr_ = _mm_getcsr();
    _MM_SET_FLUSH_ZERO_MODE(_MM_FLUSH_ZERO_ON);
    _MM_SET_DENORMALS_ZERO_MODE(_MM_DENORMALS_ZERO_ON);
#endif
  }
  ~ScopedFlushSubnormals() {
#if defined(__SSE2__)
    _mm_setcsr(saved_csr_);
#endif
  }
  ScopedFlushSubnormals(const ScopedFlushSubnormals&) = delete;
  ScopedFlushSubnormals& operator=(const ScopedFlushSubnormals&) = delete;

 private:
  unsigned int saved_csr_ = 0;
};

void CheckDims(const std::vector<std::size_t>& dims) {
  if (dims.size() < 2) {
    throw Error(ErrorCode::kDimMismatch, "an MLP needs at least input and output");
  }
  for (std::size_t d : dims) {
    if (d == 0) throw Error(ErrorCode::kDimMismatch, "zero-width layer");
  }
}

// Numerically stable log-sum-exp of one logit row.
double LogSumExp(std::span<const double> z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - mx);
  return mx + std::log(sum);
}

// Reusable buffers for batched forward and backward passes. Activations are
// stored row-major, one row per batch element.
class Backprop {
 public:
  explicit Backprop(const MlpClassifier& model) : model_(model) {
    acts_.resize(model.dims().size());
  }

  // Fills activations for rows gathered from `rows` (each of input width).
  template <typename RowAt>
  void Forward(std::size_t batch, RowAt row_at) {
    const auto& dims = model_.dims();
    batch_ = batch;
    acts_[0].resize(batch * dims[0]);
    for (std::size_t b = 0; b < batch; ++b) {
      std::span<const double> x = row_at(b);
      if (x.size() != dims[0]) {
        throw Error(ErrorCode::kDimMismatch,
                    "feature length " + std::to_string(x.size()) +
                        " != input dim " + std::to_string(dims[0]));
      }
      std::copy(x.begin(), x.end(), acts_[0].begin() + b * dims[0]);
    }
    const auto& layers = model_.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const DenseLayer& layer = layers[l];
      const std::size_t in = layer.fan_in();
      const std::size_t out = layer.fan_out();
      std::vector<double>& z = acts_[l + 1];
      z.resize(batch * out);
      const bool hidden = l + 1 < layers.size();
      for (std::size_t b = 0; b < batch; ++b) {
        double* zr = z.data() + b * out;
        std::copy(layer.bias.begin(), layer.bias.end(), zr);
        const double* a = acts_[l].data() + b * in;
        for (std::size_t i = 0; i < in; ++i) {
          const double ai = a[i];
          if (ai == 0.0) continue;
          const double* w = layer.weights.row(i).data();
          for (std::size_t o = 0; o < out; ++o) zr[o] += ai * w[o];
        }
        if (hidden) {
          for (std::size_t o = 0; o < out; ++o) zr[o] = std::max(zr[o], 0.0);
        }
      }
    }
  }

  std::span<const double> logits(std::size_t b) const {
    const std::size_t c = model_.num_outputs();
    return {acts_.back().data() + b * c, c};
  }
  std::span<const double> penultimate(std::size_t b) const {
    const std::size_t w = model_.dims()[model_.dims().size() - 2];
    return {acts_[acts_.size() - 2].data() + b * w, w};
  }

  // Weighted cross-entropy of the last Forward() batch and its gradient,
  // accumulated into `grad` (resized and zeroed here). Returns
  // sum(w_i * ce_i); the gradient is of sum(w_i * ce_i) / weight_total.
  double Backward(std::span<const int> labels, std::span<const double> weights,
                  double weight_total, std::vector<double>& grad) {
    const auto& layers = model_.layers();
    const std::size_t classes = model_.num_outputs();
    grad.assign(model_.ParameterCount(), 0.0);

    double weighted_loss = 0.0;
    delta_.resize(batch_ * classes);
    for (std::size_t b = 0; b < batch_; ++b) {
      auto z = logits(b);
      const double lse = LogSumExp(z);
      const int y = labels[b];
      weighted_loss += weights[b] * (lse - z[y]);
      const double scale = weights[b] / weight_total;
      for (std::size_t c = 0; c < classes; ++c) {
        const double p = std::exp(z[c] - lse);
        delta_[b * classes + c] = scale * (p - (static_cast<int>(c) == y ? 1.0 : 0.0));
      }
    }

    std::vector<std::size_t> offsets(layers.size());
    std::size_t offset = 0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      offsets[l] = offset;
      offset += layers[l].fan_in() * layers[l].fan_out() + layers[l].fan_out();
    }

    for (std::size_t l = layers.size(); l-- > 0;) {
      const DenseLayer& layer = layers[l];
      const std::size_t in = layer.fan_in();
      const std::size_t out = layer.fan_out();
      double* gw = grad.data() + offsets[l];
      double* gb = gw + in * out;
      const std::vector<double>& a = acts_[l];
      for (std::size_t b = 0; b < batch_; ++b) {
        const double* d = delta_.data() + b * out;
        for (std::size_t o = 0; o < out; ++o) gb[o] += d[o];
        const double* ar = a.data() + b * in;
        for (std::size_t i = 0; i < in; ++i) {
          const double ai = ar[i];
          if (ai == 0.0) continue;
          double* gwr = gw + i * out;
          for (std::size_t o = 0; o < out; ++o) gwr[o] += ai * d[o];
        }
      }
      if (l == 0) break;
      next_delta_.assign(batch_ * in, 0.0);
      for (std::size_t b = 0; b < batch_; ++b) {
        const double* d = delta_.data() + b * out;
        const double* ar = a.data() + b * in;
        double* nd = next_delta_.data() + b * in;
        for (std::size_t i = 0; i < in; ++i) {
          if (ar[i] <= 0.0) continue;  // ReLU gate
          const double* w = layer.weights.row(i).data();
          double s = 0.0;
          for (std::size_t o = 0; o < out; ++o) s += w[o] * d[o];
          nd[i] = s;
        }
      }
      delta_.swap(next_delta_);
    }
    return weighted_loss;
  }

 private:
  const MlpClassifier& model_;
  std::size_t batch_ = 0;
  std::vector<std::vector<double>> acts_;
  std::vector<double> delta_;
  std::vector<double> next_delta_;
};

void AddWeightDecay(const MlpClassifier& model, double weight_decay,
                    std::vector<double>& grad) {
  if (weight_decay == 0.0) return;
  std::size_t k = 0;
  for (const DenseLayer& layer : model.layers()) {
    for (double w : layer.weights.data()) grad[k++] += weight_decay * w;
    for (double b : layer.bias) grad[k++] += weight_decay * b;
  }
}

}  // namespace

MlpClassifier::MlpClassifier(std::vector<std::size_t> dims, std::uint64_t seed)
    : dims_(std::move(dims)) {
  CheckDims(dims_);
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims_[l]));
    std::uniform_real_distribution<double> u(-bound, bound);
    DenseLayer layer{linalg::DenseMatrix(dims_[l], dims_[l + 1]),
                     std::vector<double>(dims_[l + 1])};
    for (std::size_t i = 0; i < dims_[l]; ++i) {
      for (std::size_t o = 0; o < dims_[l + 1]; ++o) layer.weights(i, o) = u(rng);
    }
    for (double& b : layer.bias) b = u(rng);
    layers_.push_back(std::move(layer));
  }
}

MlpClassifier MlpClassifier::Zeros(std::vector<std::size_t> dims) {
  CheckDims(dims);
  MlpClassifier m;
  m.dims_ = std::move(dims);
  for (std::size_t l = 0; l + 1 < m.dims_.size(); ++l) {
    m.layers_.push_back({linalg::DenseMatrix(m.dims_[l], m.dims_[l + 1]),
                         std::vector<double>(m.dims_[l + 1], 0.0)});
  }
  return m;
}

MlpClassifier MlpClassifier::FromLayers(std::vector<DenseLayer> layers) {
  if (layers.empty()) throw Error(ErrorCode::kDimMismatch, "no layers");
  MlpClassifier m;
  m.dims_.push_back(layers.front().fan_in());
  for (const DenseLayer& layer : layers) {
    if (layer.fan_in() != m.dims_.back() || layer.bias.size() != layer.fan_out()) {
      throw Error(ErrorCode::kDimMismatch, "layer shapes do not chain");
    }
    m.dims_.push_back(layer.fan_out());
  }
  CheckDims(m.dims_);
  m.layers_ = std::move(layers);
  return m;
}

std::size_t MlpClassifier::ParameterCount() const {
  std::size_t count = 0;
  for (const DenseLayer& layer : layers_) {
    count += layer.fan_in() * layer.fan_out() + layer.fan_out();
  }
  return count;
}

std::vector<double> MlpClassifier::FlatParameters() const {
  std::vector<double> flat;
  flat.reserve(ParameterCount());
  for (const DenseLayer& layer : layers_) {
    flat.insert(flat.end(), layer.weights.data().begin(), layer.weights.data().end());
    flat.insert(flat.end(), layer.bias.begin(), layer.bias.end());
  }
  return flat;
}

void MlpClassifier::SetFlatParameters(std::span<const double> flat) {
  if (flat.size() != ParameterCount()) {
    throw Error(ErrorCode::kDimMismatch, "flat parameter count mismatch");
  }
  std::size_t k = 0;
  for (DenseLayer& layer : layers_) {
    for (std::size_t i = 0; i < layer.fan_in(); ++i) {
      for (std::size_t o = 0; o < layer.fan_out(); ++o) layer.weights(i, o) = flat[k++];
    }
    for (double& b : layer.bias) b = flat[k++];
  }
}

bool MlpClassifier::AllFinite() const {
  for (const DenseLayer& layer : layers_) {
    if (!layer.weights.AllFinite()) return false;
    for (double b : layer.bias) {
      if (!std::isfinite(b)) return false;
    }
  }
  return true;
}

ForwardCache Forward(const MlpClassifier& model, std::span<const double> features) {
  if (features.size() != model.input_dim()) {
    throw Error(ErrorCode::kDimMismatch,
                "feature length " + std::to_string(features.size()) +
                    " != input dim " + std::to_string(model.input_dim()));
  }
  ForwardCache cache;
  cache.activations.emplace_back(features.begin(), features.end());
  const auto& layers = model.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const DenseLayer& layer = layers[l];
    const std::vector<double>& a = cache.activations.back();
    std::vector<double> z = layer.bias;
    for (std::size_t i = 0; i < layer.fan_in(); ++i) {
      auto w = layer.weights.row(i);
      for (std::size_t o = 0; o < layer.fan_out(); ++o) z[o] += a[i] * w[o];
    }
    if (l + 1 < layers.size()) {
      for (double& v : z) v = std::max(v, 0.0);
    }
    cache.activations.push_back(std::move(z));
  }
  return cache;
}

std::vector<double> Softmax(std::span<const double> logits) {
  const double lse = LogSumExp(logits);
  std::vector<double> p(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) p[i] = std::exp(logits[i] - lse);
  return p;
}

LossAndGradient ComputeLossAndGradient(const MlpClassifier& model,
                                       std::span<const Example> batch,
                                       double weight_decay) {
  Backprop bp(model);
  bp.Forward(batch.size(), [&](std::size_t b) { return batch[b].features; });
  std::vector<int> labels(batch.size());
  std::vector<double> weights(batch.size());
  double total = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    labels[b] = batch[b].label;
    weights[b] = batch[b].weight;
    total += batch[b].weight;
  }
  LossAndGradient out;
  if (total <= 0.0) {
    out.gradient.assign(model.ParameterCount(), 0.0);
    AddWeightDecay(model, weight_decay, out.gradient);
    return out;
  }
  out.loss = bp.Backward(labels, weights, total, out.gradient) / total;
  AddWeightDecay(model, weight_decay, out.gradient);
  return out;
}

void TrainConfig::Validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorCode::kBadConfig, "learning_rate must be finite and >= 0");
  }
  if (batch_size == 0) throw Error(ErrorCode::kBadConfig, "batch_size must be >= 1");
  if (epochs_phase1 < 0 || epochs_phase2 < 0) {
    throw Error(ErrorCode::kBadConfig, "epoch counts must be >= 0");
  }
  if (!(weight_decay >= 0.0)) {
    throw Error(ErrorCode::kBadConfig, "weight_decay must be >= 0");
  }
}

Optimizer::Optimizer(const MlpClassifier& model, const TrainConfig& cfg)
    : cfg_(cfg),
      m_(cfg.optimizer == OptimizerKind::kAdam ? model.ParameterCount() : 0, 0.0),
      v_(m_.size(), 0.0) {}

void Optimizer::Reset() {
  std::fill(m_.begin(), m_.end(), 0.0);
  std::fill(v_.begin(), v_.end(), 0.0);
  steps_ = 0;
}

void Optimizer::Step(MlpClassifier& model, std::span<const double> gradient) {
  if (gradient.size() != model.ParameterCount()) {
    throw Error(ErrorCode::kDimMismatch, "gradient size mismatch");
  }
  const double lr = cfg_.learning_rate;
  ++steps_;
  const bool adam = cfg_.optimizer == OptimizerKind::kAdam;
  const double c1 = adam ? 1.0 - std::pow(cfg_.adam_beta1, static_cast<double>(steps_)) : 1.0;
  const double c2 = adam ? 1.0 - std::pow(cfg_.adam_beta2, static_cast<double>(steps_)) : 1.0;
  std::size_t k = 0;
  auto update = [&](double& theta) {
    const double g = gradient[k];
    if (adam) {
      m_[k] = cfg_.adam_beta1 * m_[k] + (1.0 - cfg_.adam_beta1) * g;
      v_[k] = cfg_.adam_beta2 * v_[k] + (1.0 - cfg_.adam_beta2) * g * g;
      theta -= lr * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + cfg_.adam_epsilon);
    } else {
      theta -= lr * g;
    }
    ++k;
  };
  for (DenseLayer& layer : model.mutable_layers()) {
    for (std::size_t i = 0; i < layer.fan_in(); ++i) {
      for (double& w : layer.weights.row(i)) update(w);
    }
    for (double& b : layer.bias) update(b);
  }
}

double TrainEpoch(MlpClassifier& model, Optimizer& optimizer,
                  std::span<const Example> examples, const TrainConfig& cfg,
                  std::uint64_t shuffle_seed) {
  cfg.Validate();
  if (examples.empty()) {
    throw Error(ErrorCode::kEmptyExperience, "TrainEpoch on an empty set");
  }
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(shuffle_seed);
  std::shuffle(order.begin(), order.end(), rng);

  const ScopedFlushSubnormals flush;
  Backprop bp(model);
  std::vector<double> grad;
  std::vector<int> labels;
  std::vector<double> weights;
  double loss_sum = 0.0;
  double weight_sum = 0.0;
  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
    const std::size_t batch = std::min(cfg.batch_size, order.size() - start);
    labels.resize(batch);
    weights.resize(batch);
    double total = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const Example& ex = examples[order[start + b]];
      labels[b] = ex.label;
      weights[b] = ex.weight;
      total += ex.weight;
    }
    if (total <= 0.0) continue;
    bp.Forward(batch, [&](std::size_t b) { return examples[order[start + b]].features; });
    const double batch_loss = bp.Backward(labels, weights, total, grad);
    if (!std::isfinite(batch_loss)) {
      throw Error(ErrorCode::kNonFiniteLoss, "loss diverged; reduce learning_rate");
    }
    loss_sum += batch_loss;
    weight_sum += total;
    AddWeightDecay(model, cfg.weight_decay, grad);
    optimizer.Step(model, grad);
    if (!model.AllFinite()) {
      throw Error(ErrorCode::kNonFiniteLoss,
                  "parameters became non-finite; reduce learning_rate");
    }
  }
  return weight_sum > 0.0 ? loss_sum / weight_sum : 0.0;
}

double TrainEpoch(MlpClassifier& model, Optimizer& optimizer,
                  std::span<const Example> examples,
                  std::span<const double> class_weights, const TrainConfig& cfg,
                  std::uint64_t shuffle_seed) {
  std::vector<Example> weighted(examples.begin(), examples.end());
  for (Example& ex : weighted) {
    if (ex.label < 0 || static_cast<std::size_t>(ex.label) >= class_weights.size()) {
      throw Error(ErrorCode::kDimMismatch, "label without a class weight");
    }
    ex.weight = class_weights[ex.label];
  }
  return TrainEpoch(model, optimizer, weighted, cfg, shuffle_seed);
}

GradientFeatures LastLayerGradients(const MlpClassifier& model,
                                    const data::Dataset& ds,
                                    std::span<const std::size_t> indices,
                                    GradientMode mode) {
  const std::size_t classes = model.num_outputs();
  const std::size_t hidden = model.dims()[model.dims().size() - 2];
  const std::size_t width =
      mode == GradientMode::kLogits ? classes : classes * (hidden + 1);
  GradientFeatures out;
  out.matrix = linalg::DenseMatrix(indices.size(), width);
  out.ids.assign(indices.begin(), indices.end());

  Backprop bp(model);
  for (std::size_t start = 0; start < indices.size(); start += kInferenceChunk) {
    const std::size_t batch = std::min(kInferenceChunk, indices.size() - start);
    bp.Forward(batch, [&](std::size_t b) {
      return std::span<const double>(ds.samples[indices[start + b]].features);
    });
    for (std::size_t b = 0; b < batch; ++b) {
      const data::LabeledSample& s = ds.samples[indices[start + b]];
      if (s.label < 0 || static_cast<std::size_t>(s.label) >= classes) {
        throw Error(ErrorCode::kDimMismatch, "label outside the output layer");
      }
      std::vector<double> g = Softmax(bp.logits(b));
      g[s.label] -= 1.0;
      auto row = out.matrix.row(start + b);
      if (mode == GradientMode::kLogits) {
        std::copy(g.begin(), g.end(), row.begin());
      } else {
        auto h = bp.penultimate(b);
        for (std::size_t c = 0; c < classes; ++c) {
          for (std::size_t j = 0; j < hidden; ++j) row[c * (hidden + 1) + j] = g[c] * h[j];
          row[c * (hidden + 1) + hidden] = g[c];
        }
      }
    }
  }
  return out;
}

std::vector<int> Predict(const MlpClassifier& model, const data::Dataset& ds,
                         std::span<const std::size_t> indices) {
  std::vector<int> predictions(indices.size());
  Backprop bp(model);
  for (std::size_t start = 0; start < indices.size(); start += kInferenceChunk) {
    const std::size_t batch = std::min(kInferenceChunk, indices.size() - start);
    bp.Forward(batch, [&](std::size_t b) {
      return std::span<const double>(ds.samples[indices[start + b]].features);
    });
    for (std::size_t b = 0; b < batch; ++b) {
      auto z = bp.logits(b);
      predictions[start + b] =
          static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
    }
  }
  return predictions;
}

Evaluation Evaluate(const MlpClassifier& model, const data::Dataset& test,
                    std::span<const std::size_t> indices) {
  if (indices.empty()) throw Error(ErrorCode::kEmptySet, "empty test set");
  const std::vector<int> predicted = Predict(model, test, indices);
  const std::size_t classes = static_cast<std::size_t>(
      std::max<int>(test.num_classes, static_cast<int>(model.num_outputs())));
  std::vector<std::size_t> correct(classes, 0);
  std::vector<std::size_t> total(classes, 0);
  std::size_t correct_all = 0;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int y = test.samples[indices[i]].clean_label;
    ++total[y];
    if (predicted[i] == y) {
      ++correct[y];
      ++correct_all;
    }
  }
  Evaluation eval;
  eval.per_class.resize(static_cast<std::size_t>(test.num_classes));
  for (std::size_t c = 0; c < eval.per_class.size(); ++c) {
    if (total[c] > 0) {
      eval.per_class[c] = static_cast<double>(correct[c]) / static_cast<double>(total[c]);
    }
  }
  eval.overall = static_cast<double>(correct_all) / static_cast<double>(indices.size());
  return eval;
}

Evaluation Evaluate(const MlpClassifier& model, const data::Dataset& test) {
  std::vector<std::size_t> all(test.size());
  std::iota(all.begin(), all.end(), 0);
  return Evaluate(model, test, all);
}

void SaveCheckpoint(const MlpClassifier& model, const std::filesystem::path& path) {
  internal::ByteWriter w;
  w.Bytes(std::string_view(kCheckpointTag, 4));
  w.U32Le(kCheckpointVersion);
  w.U64Le(model.dims().size());
  for (std::size_t d : model.dims()) w.U64Le(d);
  for (double v : model.FlatParameters()) w.F64Le(v);
  w.WriteTo(path);
}

MlpClassifier LoadCheckpoint(const std::filesystem::path& path) {
  auto r = internal::ByteReader::FromFile(path);
  if (r.Bytes(4) != std::string_view(kCheckpointTag, 4)) {
    throw Error(ErrorCode::kBadCheckpoint, path.string() + ": missing CMLP tag");
  }
  const std::uint32_t version = r.U32Le();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::kBadCheckpoint,
                "unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint64_t depth = r.U64Le();
  if (depth < 2 || depth > 64) {
    throw Error(ErrorCode::kBadCheckpoint, "implausible layer count");
  }
  std::vector<std::size_t> dims(depth);
  for (std::size_t& d : dims) d = r.U64Le();
  MlpClassifier model = MlpClassifier::Zeros(dims);
  std::vector<double> flat(model.ParameterCount());
  for (double& v : flat) v = r.F64Le();
  if (r.remaining() != 0) {
    throw Error(ErrorCode::kBadCheckpoint, "trailing bytes in checkpoint");
  }
  model.SetFlatParameters(flat);
  if (!model.AllFinite()) {
    throw Error(ErrorCode::kBadCheckpoint, "checkpoint holds non-finite values");
  }
  return model;
}

}  // namespace crust::model
