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

// Minimal dense numeric kernel: a row-major matrix, a cyclic Jacobi
// eigensolver for symmetric matrices, singular values through the Gram
// matrix, and seeded k-means++ / Lloyd clustering.

#ifndef CRUST_LINALG_H_
#define CRUST_LINALG_H_

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace crust::linalg {

class DenseMatrix {
 public:
  DenseMatrix() = default;
  // Zero-filled rows x cols.
  DenseMatrix(std::size_t rows, std::size_t cols);
  // Takes ownership of row-major `data`; throws kShapeMismatch when the
  // length disagrees with rows * cols and kNonFinite on NaN/Inf.
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static DenseMatrix Identity(std::size_t n);
  static DenseMatrix Diagonal(std::span<const double> diagonal);
  static DenseMatrix FromRows(
      std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }
  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * cols_ + c];
  }

  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

  const std::vector<double>& data() const { return data_; }

  DenseMatrix Transpose() const;
  // Rows selected by index, in the given order.
  DenseMatrix SelectRows(std::span<const std::size_t> indices) const;
  double FrobeniusNorm() const;
  bool AllFinite() const;

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

DenseMatrix Multiply(const DenseMatrix& a, const DenseMatrix& b);
// a^T a without materializing the transpose.
DenseMatrix Gram(const DenseMatrix& a);

struct EigenDecomposition {
  std::vector<double> eigenvalues;  // ascending
  DenseMatrix eigenvectors;         // column i pairs with eigenvalues[i]
  int sweeps = 0;
};

// Cyclic Jacobi. Stops once the off-diagonal Frobenius norm falls to
// 1e-12 of the diagonal norm or after 100 sweeps. Eigenvector signs are
// fixed so that the largest-magnitude component of each column is positive.
EigenDecomposition SymEigen(const DenseMatrix& a);

// Singular values in descending order, as square roots of the eigenvalues
// of a^T a (negative round-off clamped to zero).
std::vector<double> SingularValues(const DenseMatrix& a);

struct KMeansResult {
  std::vector<std::size_t> assignments;
  DenseMatrix centroids;
  double inertia = 0.0;
  int iterations = 0;
  // Inertia after each assignment step; non-increasing.
  std::vector<double> inertia_history;
};

// k-means++ seeding from `seed`, then Lloyd iterations until the assignment
// stops changing or `max_iter` is reached. Ties go to the lowest centroid
// index. An empty cluster is reseeded at the point farthest from its current
// centroid.
KMeansResult KMeans(const DenseMatrix& points, std::size_t k,
                    std::uint64_t seed, int max_iter = 300);

double SquaredDistance(std::span<const double> a, std::span<const double> b);
double Dot(std::span<const double> a, std::span<const double> b);
double Norm(std::span<const double> a);

}  // namespace crust::linalg

#endif  // CRUST_LINALG_H_
