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

#include "crust/linalg.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "crust/error.h"

namespace crust::linalg {

namespace {

constexpr double kSymmetryTolerance = 1e-10;
constexpr double kJacobiTolerance = 1e-12;
constexpr int kMaxJacobiSweeps = 100;

void RequireFinite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::kNonFinite, std::string(what) + " has NaN/Inf");
    }
  }
}

}  // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols,
                         std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw Error(ErrorCode::kShapeMismatch,
                "data length " + std::to_string(data_.size()) + " != " +
                    std::to_string(rows_) + "x" + std::to_string(cols_));
  }
  RequireFinite(data_, "matrix");
}

DenseMatrix DenseMatrix::Identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::Diagonal(std::span<const double> diagonal) {
  RequireFinite(diagonal, "diagonal");
  DenseMatrix m(diagonal.size(), diagonal.size());
  for (std::size_t i = 0; i < diagonal.size(); ++i) m(i, i) = diagonal[i];
  return m;
}

DenseMatrix DenseMatrix::FromRows(
    std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) {
      throw Error(ErrorCode::kShapeMismatch, "ragged rows");
    }
    data.insert(data.end(), row.begin(), row.end());
  }
  return DenseMatrix(r, c, std::move(data));
}

DenseMatrix DenseMatrix::Transpose() const {
  DenseMatrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  }
  return t;
}

DenseMatrix DenseMatrix::SelectRows(std::span<const std::size_t> indices) const {
  DenseMatrix out(indices.size(), cols_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows_) {
      throw Error(ErrorCode::kShapeMismatch, "row index out of range");
    }
    std::copy_n(row(indices[i]).begin(), cols_, out.row(i).begin());
  }
  return out;
}

double DenseMatrix::FrobeniusNorm() const {
  double sum = 0.0;
  for (double v : data_) sum += v * v;
  return std::sqrt(sum);
}

bool DenseMatrix::AllFinite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

DenseMatrix Multiply(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw Error(ErrorCode::kShapeMismatch, "inner dimensions differ");
  }
  DenseMatrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

DenseMatrix Gram(const DenseMatrix& a) {
  DenseMatrix g(a.cols(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto row = a.row(r);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double ai = row[i];
      if (ai == 0.0) continue;
      for (std::size_t j = i; j < a.cols(); ++j) g(i, j) += ai * row[j];
    }
  }
  for (std::size_t i = 0; i < a.cols(); ++i) {
    for (std::size_t j = 0; j < i; ++j) g(i, j) = g(j, i);
  }
  return g;
}

EigenDecomposition SymEigen(const DenseMatrix& a) {
  if (a.rows() != a.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "SymEigen needs a square matrix");
  }
  RequireFinite(a.data(), "SymEigen input");
  const std::size_t n = a.rows();
  double scale = 1.0;
  for (double v : a.data()) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::abs(a(i, j) - a(j, i)) > kSymmetryTolerance * scale) {
        throw Error(ErrorCode::kNonSymmetric,
                    "entry (" + std::to_string(i) + "," + std::to_string(j) +
                        ") differs from its transpose");
      }
    }
  }

  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) m(i, j) = 0.5 * (a(i, j) + a(j, i));
  }
  DenseMatrix v = DenseMatrix::Identity(n);

  auto off_diagonal_norm = [&] {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) sum += 2.0 * m(i, j) * m(i, j);
    }
    return std::sqrt(sum);
  };
  auto diagonal_norm = [&] {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += m(i, i) * m(i, i);
    return std::sqrt(sum);
  };

  int sweeps = 0;
  while (sweeps < kMaxJacobiSweeps) {
    const double off = off_diagonal_norm();
    if (off == 0.0 || off <= kJacobiTolerance * diagonal_norm()) break;
    ++sweeps;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = m(p, q);
        if (apq == 0.0) continue;
        const double tau = (m(q, q) - m(p, p)) / (2.0 * apq);
        const double t = tau >= 0.0 ? 1.0 / (tau + std::sqrt(1.0 + tau * tau))
                                    : -1.0 / (-tau + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double mkp = m(k, p);
          const double mkq = m(k, q);
          m(k, p) = c * mkp - s * mkq;
          m(k, q) = s * mkp + c * mkq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double mpk = m(p, k);
          const double mqk = m(q, k);
          m(p, k) = c * mpk - s * mqk;
          m(q, k) = s * mpk + c * mqk;
        }
        m(p, q) = 0.0;
        m(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return m(x, x) < m(y, y);
  });

  EigenDecomposition result;
  result.sweeps = sweeps;
  result.eigenvalues.resize(n);
  result.eigenvectors = DenseMatrix(n, n);
  for (std::size_t col = 0; col < n; ++col) {
    const std::size_t src = order[col];
    result.eigenvalues[col] = m(src, src);
    std::size_t pivot = 0;
    double norm = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      norm += v(k, src) * v(k, src);
      if (std::abs(v(k, src)) > std::abs(v(pivot, src))) pivot = k;
    }
    norm = std::sqrt(norm);
    const double sign = v(pivot, src) < 0.0 ? -1.0 : 1.0;
    for (std::size_t k = 0; k < n; ++k) {
      result.eigenvectors(k, col) = sign * v(k, src) / norm;
    }
  }
  return result;
}

std::vector<double> SingularValues(const DenseMatrix& a) {
  if (a.empty()) {
    throw Error(ErrorCode::kShapeMismatch, "SingularValues of empty matrix");
  }
  RequireFinite(a.data(), "SingularValues input");
  const EigenDecomposition eig = SymEigen(Gram(a));
  std::vector<double> sv(eig.eigenvalues.size());
  for (std::size_t i = 0; i < sv.size(); ++i) {
    sv[i] = std::sqrt(std::max(0.0, eig.eigenvalues[sv.size() - 1 - i]));
  }
  return sv;
}

double SquaredDistance(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

double Dot(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

double Norm(std::span<const double> a) { return std::sqrt(Dot(a, a)); }

namespace {

std::vector<std::size_t> SeedCentroids(const DenseMatrix& points, std::size_t k,
                                       std::mt19937_64& rng) {
  const std::size_t n = points.rows();
  std::vector<std::size_t> chosen;
  std::vector<bool> taken(n, false);
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  chosen.push_back(first(rng));
  taken[chosen.back()] = true;

  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  while (chosen.size() < k) {
    const auto latest = points.row(chosen.back());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], SquaredDistance(points.row(i), latest));
      total += d2[i];
    }
    std::size_t pick = n;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      const double target = u(rng);
      double cumulative = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        cumulative += d2[i];
        pick = i;
        if (cumulative > target) break;
      }
    }
    if (pick == n) {
      // Every remaining point coincides with a chosen centroid.
      pick = 0;
      while (taken[pick]) ++pick;
    }
    taken[pick] = true;
    chosen.push_back(pick);
  }
  return chosen;
}

double Assign(const DenseMatrix& points, const DenseMatrix& centroids,
              std::vector<std::size_t>& assignments) {
  double inertia = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    std::size_t best = 0;
    double best_d = SquaredDistance(points.row(i), centroids.row(0));
    for (std::size_t c = 1; c < centroids.rows(); ++c) {
      const double d = SquaredDistance(points.row(i), centroids.row(c));
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    assignments[i] = best;
    inertia += best_d;
  }
  return inertia;
}

}  // namespace

KMeansResult KMeans(const DenseMatrix& points, std::size_t k, std::uint64_t seed,
                    int max_iter) {
  const std::size_t n = points.rows();
  if (k == 0) throw Error(ErrorCode::kTooFewPoints, "k must be >= 1");
  if (k > n) {
    throw Error(ErrorCode::kTooFewPoints, "k=" + std::to_string(k) +
                                              " exceeds " + std::to_string(n) +
                                              " points");
  }
  RequireFinite(points.data(), "KMeans input");
  const std::size_t dim = points.cols();

  std::mt19937_64 rng(seed);
  const auto seeds = SeedCentroids(points, k, rng);
  DenseMatrix centroids = points.SelectRows(seeds);

  KMeansResult result;
  result.assignments.assign(n, 0);
  std::vector<std::size_t> previous;
  bool converged = false;
  for (int iter = 0; iter < max_iter; ++iter) {
    result.inertia = Assign(points, centroids, result.assignments);
    result.inertia_history.push_back(result.inertia);
    result.iterations = iter + 1;
    if (result.assignments == previous) {
      converged = true;
      break;
    }
    previous = result.assignments;

    DenseMatrix sums(k, dim);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = result.assignments[i];
      ++counts[c];
      auto dst = sums.row(c);
      auto src = points.row(i);
      for (std::size_t d = 0; d < dim; ++d) dst[d] += src[d];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      auto dst = centroids.row(c);
      auto src = sums.row(c);
      for (std::size_t d = 0; d < dim; ++d) {
        dst[d] = src[d] / static_cast<double>(counts[c]);
      }
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t farthest = 0;
      double farthest_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d =
            SquaredDistance(points.row(i), centroids.row(result.assignments[i]));
        if (d > farthest_d) {
          farthest_d = d;
          farthest = i;
        }
      }
      std::copy_n(points.row(farthest).begin(), dim, centroids.row(c).begin());
      --counts[result.assignments[farthest]];
      result.assignments[farthest] = c;
      counts[c] = 1;
    }
  }
  if (!converged) {
    result.inertia = Assign(points, centroids, result.assignments);
    result.inertia_history.push_back(result.inertia);
  }
  result.centroids = std::move(centroids);
  return result;
}

}  // namespace crust::linalg
