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

#include "crust/coreset.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <queue>
#include <string>
#include <utility>

#include "crust/error.h"

namespace crust::coreset {
namespace {

using linalg::DenseMatrix;

void CheckSelectionSize(std::size_t n, std::size_t k) {
  if (k < 1 || k > n) {
    throw Error(ErrorCode::kBadK, "k=" + std::to_string(k) +
                                      " outside [1, " + std::to_string(n) + "]");
  }
}

double MaxEntry(const DenseMatrix& m) {
  double best = 0.0;
  for (double v : m.data()) best = std::max(best, v);
  return best;
}

// Unit-norm copies of the rows; zero rows stay zero and are flagged.
DenseMatrix NormalizedRows(const DenseMatrix& rows, std::vector<bool>& is_zero) {
  DenseMatrix out = rows;
  is_zero.assign(rows.rows(), false);
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    const double norm = linalg::Norm(rows.row(i));
    if (norm == 0.0) {
      is_zero[i] = true;
      continue;
    }
    for (double& v : out.row(i)) v /= norm;
  }
  return out;
}

// Marginal gain of adding row e given the current per-point minima.
double Gain(const DissimilarityMatrix& d, std::span<const double> current_min,
            std::size_t e) {
  const auto de = d.values.row(e);
  double gain = 0.0;
  for (std::size_t i = 0; i < de.size(); ++i) {
    gain += std::max(0.0, current_min[i] - de[i]);
  }
  return gain;
}

// First pick: the gain n*d0 - sum_i d_ie is compared through -sum_i d_ie so
// that the choice does not depend on d0 through rounding.
std::size_t FirstPick(const DissimilarityMatrix& d) {
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t e = 0; e < d.size(); ++e) {
    const auto de = d.values.row(e);
    const double score = -std::accumulate(de.begin(), de.end(), 0.0);
    if (score > best_score) {
      best_score = score;
      best = e;
    }
  }
  return best;
}

void Cover(const DissimilarityMatrix& d, std::size_t e,
           std::vector<double>& current_min) {
  const auto de = d.values.row(e);
  for (std::size_t i = 0; i < de.size(); ++i) {
    current_min[i] = std::min(current_min[i], de[i]);
  }
}

std::vector<std::size_t> PlainGreedy(const DissimilarityMatrix& d, std::size_t k) {
  const std::size_t n = d.size();
  std::vector<bool> chosen(n, false);
  std::vector<std::size_t> picks{FirstPick(d)};
  chosen[picks[0]] = true;
  std::vector<double> current_min(d.values.row(picks[0]).begin(),
                                  d.values.row(picks[0]).end());
  while (picks.size() < k) {
    std::size_t best = n;
    double best_gain = -1.0;
    for (std::size_t e = 0; e < n; ++e) {
      if (chosen[e]) continue;
      const double g = Gain(d, current_min, e);
      if (g > best_gain) {
        best_gain = g;
        best = e;
      }
    }
    chosen[best] = true;
    picks.push_back(best);
    Cover(d, best, current_min);
  }
  return picks;
}

struct HeapEntry {
  double gain;
  std::size_t id;
  std::size_t stamp;  // pick count when `gain` was computed
};

// Max-heap on gain, lowest id first among equal gains.
struct HeapOrder {
  bool operator()(const HeapEntry& a, const HeapEntry& b) const {
    if (a.gain != b.gain) return a.gain < b.gain;
    return a.id > b.id;
  }
};

std::vector<std::size_t> LazyGreedy(const DissimilarityMatrix& d, std::size_t k) {
  const std::size_t n = d.size();
  std::vector<std::size_t> picks{FirstPick(d)};
  std::vector<double> current_min(d.values.row(picks[0]).begin(),
                                  d.values.row(picks[0]).end());
  if (k == 1) return picks;

  std::priority_queue<HeapEntry, std::vector<HeapEntry>, HeapOrder> heap;
  for (std::size_t e = 0; e < n; ++e) {
    if (e == picks[0]) continue;
    heap.push({Gain(d, current_min, e), e, picks.size()});
  }
  while (picks.size() < k) {
    HeapEntry top = heap.top();
    heap.pop();
    if (top.stamp == picks.size()) {
      picks.push_back(top.id);
      Cover(d, top.id, current_min);
      continue;
    }
    // Gains only shrink as S grows, so a stale value is an upper bound.
    top.gain = Gain(d, current_min, top.id);
    top.stamp = picks.size();
    heap.push(top);
  }
  return picks;
}

ClusterAssignment BuildAssignment(std::vector<std::size_t> cluster_of,
                                  std::size_t k_clusters) {
  ClusterAssignment out;
  out.k_clusters = k_clusters;
  out.sizes.assign(k_clusters, 0);
  for (std::size_t c : cluster_of) ++out.sizes[c];
  out.cluster_of = std::move(cluster_of);
  return out;
}

void NormalizeEmbeddingRows(DenseMatrix& embedding) {
  for (std::size_t i = 0; i < embedding.rows(); ++i) {
    const double norm = linalg::Norm(embedding.row(i));
    if (norm == 0.0) continue;
    for (double& v : embedding.row(i)) v /= norm;
  }
}

// Eigenvectors of D^-1/2 A D^-1/2 for its k largest eigenvalues (the k
// smallest of L), from the dense n x n matrix.
DenseMatrix DenseEmbedding(const DenseMatrix& unit, const std::vector<bool>& is_zero,
                           std::size_t k) {
  const std::size_t n = unit.rows();
  DenseMatrix laplacian(n, n);
  std::vector<double> degree(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double cos_dist;
      if (i == j) {
        cos_dist = 0.0;
      } else if (is_zero[i] || is_zero[j]) {
        cos_dist = (is_zero[i] && is_zero[j]) ? 0.0 : 1.0;
      } else {
        cos_dist = std::clamp(1.0 - linalg::Dot(unit.row(i), unit.row(j)), 0.0, 2.0);
      }
      laplacian(i, j) = 1.0 - cos_dist / 2.0;
      degree[i] += laplacian(i, j);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (degree[i] <= 0.0) {
      throw Error(ErrorCode::kDegenerateAffinity,
                  "affinity row " + std::to_string(i) + " sums to 0");
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double m = laplacian(i, j) / std::sqrt(degree[i] * degree[j]);
      laplacian(i, j) = (i == j ? 1.0 : 0.0) - m;
    }
  }
  const linalg::EigenDecomposition eig = linalg::SymEigen(laplacian);
  DenseMatrix embedding(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < k; ++c) embedding(i, c) = eig.eigenvectors(i, c);
  }
  return embedding;
}

// The affinity factors as A = B B^T with rows
//   b_i = [sqrt(1/2), sqrt(1/2) * unit_i, 0]        for non-zero rows,
//   b_i = [sqrt(1/2), 0,                  sqrt(1/2)] for zero rows,
// so D^-1/2 A D^-1/2 = Z Z^T with Z = D^-1/2 B, and its non-zero eigenpairs
// follow from the r x r matrix Z^T Z. Returns nullopt when the rank is too
// small to supply k eigenvectors.
std::optional<DenseMatrix> LowRankEmbedding(const DenseMatrix& unit,
                                            const std::vector<bool>& is_zero,
                                            std::size_t k) {
  const std::size_t n = unit.rows();
  const bool any_zero = std::find(is_zero.begin(), is_zero.end(), true) != is_zero.end();
  const std::size_t r = 1 + unit.cols() + (any_zero ? 1 : 0);
  if (r >= n) return std::nullopt;

  const double h = std::sqrt(0.5);
  DenseMatrix z(n, r);
  for (std::size_t i = 0; i < n; ++i) {
    z(i, 0) = h;
    if (is_zero[i]) {
      z(i, r - 1) = h;
    } else {
      for (std::size_t c = 0; c < unit.cols(); ++c) z(i, 1 + c) = h * unit(i, c);
    }
  }
  std::vector<double> column_sum(r, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < r; ++c) column_sum[c] += z(i, c);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double degree = linalg::Dot(z.row(i), column_sum);
    if (degree <= 0.0) {
      throw Error(ErrorCode::kDegenerateAffinity,
                  "affinity row " + std::to_string(i) + " sums to 0");
    }
    const double scale = 1.0 / std::sqrt(degree);
    for (double& v : z.row(i)) v *= scale;
  }

  const linalg::EigenDecomposition eig = linalg::SymEigen(linalg::Gram(z));
  const double top = eig.eigenvalues.back();
  if (!(top > 0.0)) return std::nullopt;
  // Columns in descending eigenvalue order.
  std::vector<std::size_t> columns;
  for (std::size_t c = r; c-- > 0 && columns.size() < k;) {
    if (eig.eigenvalues[c] <= 1e-10 * top) break;
    columns.push_back(c);
  }
  if (columns.size() < k) return std::nullopt;

  DenseMatrix embedding(n, k);
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t col = columns[c];
    const double inv_sqrt = 1.0 / std::sqrt(eig.eigenvalues[col]);
    for (std::size_t i = 0; i < n; ++i) {
      double v = 0.0;
      for (std::size_t j = 0; j < r; ++j) v += z(i, j) * eig.eigenvectors(j, col);
      embedding(i, c) = v * inv_sqrt;
    }
  }
  return embedding;
}

model::GradientFeatures Subset(const model::GradientFeatures& g,
                               std::span<const std::size_t> rows) {
  model::GradientFeatures out;
  out.matrix = g.matrix.SelectRows(rows);
  out.ids.reserve(rows.size());
  for (std::size_t r : rows) out.ids.push_back(g.ids[r]);
  return out;
}

void CheckFeatures(const model::GradientFeatures& g) {
  if (g.ids.size() != g.matrix.rows()) {
    throw Error(ErrorCode::kShapeMismatch, "gradient ids do not match rows");
  }
}

}  // namespace

DissimilarityMatrix PairwiseDissimilarity(const DenseMatrix& rows, Metric metric) {
  const std::size_t n = rows.rows();
  DissimilarityMatrix out;
  out.metric = metric;
  out.values = DenseMatrix(n, n);
  std::vector<bool> is_zero;
  const DenseMatrix unit =
      metric == Metric::kCosine ? NormalizedRows(rows, is_zero) : DenseMatrix();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double v;
      if (metric == Metric::kEuclidean) {
        v = std::sqrt(linalg::SquaredDistance(rows.row(i), rows.row(j)));
      } else if (is_zero[i] || is_zero[j]) {
        v = (is_zero[i] && is_zero[j]) ? 0.0 : 1.0;
      } else {
        v = std::clamp(1.0 - linalg::Dot(unit.row(i), unit.row(j)), 0.0, 2.0);
      }
      out.values(i, j) = v;
      out.values(j, i) = v;
    }
  }
  out.d0 = MaxEntry(out.values);
  return out;
}

DissimilarityMatrix WithUpperBound(DissimilarityMatrix d, double d0) {
  if (!(d0 >= MaxEntry(d.values))) {
    throw Error(ErrorCode::kBadInput, "d0 is below the largest dissimilarity");
  }
  d.d0 = d0;
  return d;
}

double FacilityLocationValue(const DissimilarityMatrix& d,
                             std::span<const std::size_t> s) {
  if (s.empty()) throw Error(ErrorCode::kEmptySet, "facility location of empty set");
  for (std::size_t j : s) {
    if (j >= d.size()) throw Error(ErrorCode::kBadInput, "id out of range");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j : s) best = std::min(best, d(i, j));
    total += d.d0 - best;
  }
  return total;
}

CoresetSelection GreedySelect(const DissimilarityMatrix& d, std::size_t k,
                              GreedyMethod method) {
  CheckSelectionSize(d.size(), k);
  CoresetSelection out;
  out.rows = method == GreedyMethod::kLazy ? LazyGreedy(d, k) : PlainGreedy(d, k);
  out.ids = out.rows;
  out.cluster.assign(k, std::nullopt);
  out.objective = FacilityLocationValue(d, out.rows);
  return out;
}

CoresetSelection CrustSelect(const model::GradientFeatures& g, std::size_t k) {
  CheckFeatures(g);
  CheckSelectionSize(g.matrix.rows(), k);
  CoresetSelection out =
      GreedySelect(PairwiseDissimilarity(g.matrix, Metric::kEuclidean), k);
  for (std::size_t i = 0; i < out.rows.size(); ++i) out.ids[i] = g.ids[out.rows[i]];
  return out;
}

ClusterAssignment SpectralCluster(const DenseMatrix& rows, std::size_t k_clusters,
                                  std::uint64_t seed, SpectralSolver solver) {
  const std::size_t n = rows.rows();
  if (k_clusters < 2 || k_clusters > n) {
    throw Error(ErrorCode::kBadK, "k_clusters=" + std::to_string(k_clusters) +
                                      " outside [2, " + std::to_string(n) + "]");
  }
  std::vector<bool> is_zero;
  const DenseMatrix unit = NormalizedRows(rows, is_zero);
  std::optional<DenseMatrix> embedding;
  if (solver == SpectralSolver::kAuto) {
    embedding = LowRankEmbedding(unit, is_zero, k_clusters);
  }
  if (!embedding) embedding = DenseEmbedding(unit, is_zero, k_clusters);
  NormalizeEmbeddingRows(*embedding);
  linalg::KMeansResult km = linalg::KMeans(*embedding, k_clusters, seed);
  return BuildAssignment(std::move(km.assignments), k_clusters);
}

void ApplySizeFilter(ClusterAssignment& clusters, std::size_t min_cluster_size) {
  clusters.min_cluster_size = min_cluster_size;
  clusters.kept.clear();
  for (std::size_t c = 0; c < clusters.sizes.size(); ++c) {
    if (clusters.sizes[c] > min_cluster_size) clusters.kept.push_back(c);
  }
}

std::size_t DefaultKClusters(std::size_t n, std::size_t min_cluster_size) {
  const std::size_t k = std::min({std::size_t{8}, n / (2 * min_cluster_size + 1), n});
  return std::max<std::size_t>(k, 1);
}

std::size_t DefaultMinClusterSize(std::size_t n) {
  return std::max<std::size_t>(2, (n * 5 + 99) / 100);
}

std::vector<std::size_t> ProportionalBudgets(std::span<const std::size_t> sizes,
                                             std::size_t total) {
  const std::size_t sum = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  if (total > sum) throw Error(ErrorCode::kBadK, "budget exceeds available rows");
  std::vector<std::size_t> budgets(sizes.size(), 0);
  if (total == 0) return budgets;
  std::vector<std::size_t> remainder(sizes.size());
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    budgets[c] = total * sizes[c] / sum;
    remainder[c] = total * sizes[c] % sum;
    assigned += budgets[c];
  }
  std::vector<std::size_t> order(sizes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return remainder[a] > remainder[b];
  });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++budgets[order[i]];
  return budgets;
}

CosineCrustResult CosineCrustSelect(const model::GradientFeatures& g, std::size_t k,
                                    std::size_t k_clusters,
                                    std::size_t min_cluster_size,
                                    std::uint64_t seed) {
  CheckFeatures(g);
  const std::size_t n = g.matrix.rows();
  CheckSelectionSize(n, k);
  if (k_clusters < 1 || k_clusters > n) {
    throw Error(ErrorCode::kBadK, "k_clusters=" + std::to_string(k_clusters));
  }

  CosineCrustResult out;
  out.clusters = k_clusters == 1
                     ? BuildAssignment(std::vector<std::size_t>(n, 0), 1)
                     : SpectralCluster(g.matrix, k_clusters, seed);
  ApplySizeFilter(out.clusters, min_cluster_size);

  if (out.clusters.kept.empty()) {
    out.selection = CrustSelect(g, k);
    out.selection.fallback_used = true;
    out.selection.warnings.push_back(
        "all " + std::to_string(k_clusters) + " clusters have size <= " +
        std::to_string(min_cluster_size) + "; selected with CRUST on all rows");
    return out;
  }

  std::vector<std::size_t> kept_sizes;
  for (std::size_t c : out.clusters.kept) kept_sizes.push_back(out.clusters.sizes[c]);
  const std::size_t kept_total =
      std::accumulate(kept_sizes.begin(), kept_sizes.end(), std::size_t{0});
  const std::vector<std::size_t> budgets =
      ProportionalBudgets(kept_sizes, std::min(k, kept_total));

  CoresetSelection& sel = out.selection;
  for (std::size_t idx = 0; idx < out.clusters.kept.size(); ++idx) {
    if (budgets[idx] == 0) continue;
    const std::size_t cluster = out.clusters.kept[idx];
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < n; ++i) {
      if (out.clusters.cluster_of[i] == cluster) members.push_back(i);
    }
    const CoresetSelection local = CrustSelect(Subset(g, members), budgets[idx]);
    for (std::size_t r : local.rows) {
      sel.rows.push_back(members[r]);
      sel.ids.push_back(g.ids[members[r]]);
      sel.cluster.push_back(cluster);
    }
  }
  sel.objective = FacilityLocationValue(
      PairwiseDissimilarity(g.matrix, Metric::kEuclidean), sel.rows);
  return out;
}

SpectrumReport ComputeSpectrumReport(const DenseMatrix& gradients,
                                     double split_ratio) {
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) {
    throw Error(ErrorCode::kBadInput, "split_ratio must lie in (0, 1)");
  }
  if (gradients.empty()) throw Error(ErrorCode::kBadInput, "empty gradient matrix");
  SpectrumReport out;
  out.split_ratio = split_ratio;
  out.singular_values = linalg::SingularValues(gradients);
  const double top = out.singular_values.front();
  if (top == 0.0) return out;
  // Singular values come from the Gram matrix, which squares the condition
  // number, so round-off leaves "zero" values near 1e-8 * top.
  constexpr double kRankTolerance = 1e-7;
  for (double s : out.singular_values) {
    if (s > kRankTolerance * top) ++out.rank;
  }
  out.split_index = out.rank;
  for (std::size_t i = 1; i < out.rank; ++i) {
    if (out.singular_values[i] / top < split_ratio) {
      out.split_index = i;
      break;
    }
  }
  return out;
}

}  // namespace crust::coreset
