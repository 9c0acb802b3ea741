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

// Coreset selection over per-sample gradient features.
//
// CRUST picks k samples maximizing the facility-location function
//
//   F(S) = sum_{i in V} max_{j in S} (d0 - d_ij),
//
// i.e. minimizing the k-medoids cost sum_i min_{j in S} d_ij, with the
// standard greedy algorithm (1 - 1/e approximation, F being monotone
// submodular). CosineCRUST first spectrally clusters the gradients under
// cosine distance, discards small clusters as likely noise and runs CRUST
// inside each kept cluster with budgets proportional to cluster size.

#ifndef CRUST_CORESET_H_
#define CRUST_CORESET_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crust/linalg.h"
#include "crust/model.h"

namespace crust::coreset {

enum class Metric { kEuclidean, kCosine };

struct DissimilarityMatrix {
  linalg::DenseMatrix values;  // n x n, symmetric, zero diagonal
  Metric metric = Metric::kEuclidean;
  double d0 = 0.0;             // upper bound on every entry

  std::size_t size() const { return values.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return values(i, j); }
};

// Euclidean: ||g_i - g_j||_2. Cosine: 1 - <g_i, g_j> / (||g_i|| ||g_j||),
// clamped to [0, 2]; a zero row is at distance 1 from every non-zero row and 0
// from other zero rows. d0 is the largest entry.
DissimilarityMatrix PairwiseDissimilarity(const linalg::DenseMatrix& rows,
                                          Metric metric);

// Replaces d0; throws kBadInput if it is below the largest entry.
DissimilarityMatrix WithUpperBound(DissimilarityMatrix d, double d0);

// sum_i (d0 - min_{j in s} d_ij). Throws kEmptySet for an empty s.
double FacilityLocationValue(const DissimilarityMatrix& d,
                             std::span<const std::size_t> s);

struct CoresetSelection {
  std::vector<std::size_t> rows;  // positions in the input, insertion order
  std::vector<std::size_t> ids;   // sample ids for those rows
  double objective = 0.0;  // F(S); Euclidean for CrustSelect and CosineCrustSelect
  // Kept cluster each pick came from (CosineCRUST only).
  std::vector<std::optional<std::size_t>> cluster;
  bool fallback_used = false;
  std::vector<std::string> warnings;
};

enum class GreedyMethod { kPlain, kLazy };

// k greedy insertions from the empty set; ties go to the lowest row. Gains
// are kept free of d0 so the picks are identical for every valid d0. kLazy
// (priority queue of stale upper bounds) returns exactly what kPlain does.
CoresetSelection GreedySelect(const DissimilarityMatrix& d, std::size_t k,
                              GreedyMethod method = GreedyMethod::kLazy);

// Euclidean dissimilarities of the gradient rows, then GreedySelect.
CoresetSelection CrustSelect(const model::GradientFeatures& g, std::size_t k);

struct ClusterAssignment {
  std::vector<std::size_t> cluster_of;  // per input row
  std::vector<std::size_t> sizes;       // per cluster id
  std::vector<std::size_t> kept;        // ids with size > min_cluster_size
  std::size_t k_clusters = 0;
  std::size_t min_cluster_size = 0;
};

enum class SpectralSolver {
  // Uses the rank <= d+1 structure of the cosine affinity when it applies,
  // else the dense eigensolver.
  kAuto,
  kDense,
};

// Affinity a_ij = 1 - cos_dist(i, j) / 2, symmetric normalized Laplacian
// L = I - D^-1/2 A D^-1/2, embedding by the eigenvectors of the k_clusters
// smallest eigenvalues (rows normalized), then seeded k-means.
ClusterAssignment SpectralCluster(const linalg::DenseMatrix& rows,
                                  std::size_t k_clusters, std::uint64_t seed,
                                  SpectralSolver solver = SpectralSolver::kAuto);

// Marks clusters with size > min_cluster_size as kept.
void ApplySizeFilter(ClusterAssignment& clusters, std::size_t min_cluster_size);

// min(8, floor(n / (2 * min_cluster_size + 1)), n), at least 1.
std::size_t DefaultKClusters(std::size_t n, std::size_t min_cluster_size);
// max(2, ceil(0.05 * n)).
std::size_t DefaultMinClusterSize(std::size_t n);

struct CosineCrustResult {
  CoresetSelection selection;
  ClusterAssignment clusters;
};

// Spectral clustering (k_clusters == 1 puts every row in one cluster), drop
// clusters of size <= min_cluster_size, split min(k, kept rows) across kept
// clusters by largest remainder, CRUST within each. If every cluster is
// filtered out the result is plain CrustSelect on all rows with
// fallback_used set.
CosineCrustResult CosineCrustSelect(const model::GradientFeatures& g,
                                    std::size_t k, std::size_t k_clusters,
                                    std::size_t min_cluster_size,
                                    std::uint64_t seed);

// Proportional integer budgets summing to `total`, largest remainder first,
// ties to the lower index.
std::vector<std::size_t> ProportionalBudgets(std::span<const std::size_t> sizes,
                                             std::size_t total);

struct SpectrumReport {
  std::vector<double> singular_values;  // descending
  std::size_t rank = 0;
  // Number of leading "information" directions: the smallest i with
  // sigma_(i+1) / sigma_1 < split_ratio, or rank when no such i exists.
  std::size_t split_index = 0;
  double split_ratio = 0.0;
};

SpectrumReport ComputeSpectrumReport(const linalg::DenseMatrix& gradients,
                                     double split_ratio);

}  // namespace crust::coreset

#endif  // CRUST_CORESET_H_
