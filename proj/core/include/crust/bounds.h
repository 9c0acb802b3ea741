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


// Numeric evaluators for the robustness theorems of CRUST-style coresets.
//
// Theorem 1 (label flipping) and Theorem 2 (input perturbation) give
// conditions under which gradient descent on a coreset with a fraction rho
// of noisy samples still fits the clean labels. Their O(.) constants are not
// known, so every constant here is 1 and log is natural: the numbers are trend
// diagnostics, not certified bounds.

#ifndef CRUST_BOUNDS_H_
#define CRUST_BOUNDS_H_

#include <cstddef>
#include <optional>

#include "crust/coreset.h"
#include "crust/model.h"

namespace crust::bounds {

struct BoundInputs {
  double r_min = 0.0;       // smallest per-cluster count in the coreset
  double sigma_min = 0.0;   // smallest singular value of J(W, X_S)
  double jac_norm = 0.0;    // ||J(W, X)||_2
  double eps = 0.0;         // Jacobian approximation error
  double k = 0.0;           // coreset size
  double n = 0.0;           // dataset size
  double rho = 0.0;         // noisy fraction inside the coreset
  double delta = 0.0;       // label margin (Thm 1) or perturbed fraction (Thm 2)
  double eta = 0.0;         // learning rate
  double e_min = 0.0;       // perturbation error on sigma_min
  double e_max = 0.0;       // perturbation error on sigma_max
  double e_j1 = 0.0;        // Jacobian perturbation magnitude
  double e_j2 = 0.0;        // average-Jacobian perturbation magnitude
  double r0_norm = 0.0;     // initial residual norm
  double nu = 0.0;          // target residual

  // Throws kBadInput unless magnitudes are finite and nonnegative, rho and
  // delta lie in [0, 1] and k <= n.
  void Validate() const;
};

enum class Theorem { kLabelFlip, kPerturbation };

struct BoundReport {
  Theorem theorem = Theorem::kLabelFlip;
  double alpha = 0.0;
  double beta = 0.0;
  // Absent where the formula divides by zero or leaves its domain.
  std::optional<double> eps_ceiling;
  std::optional<double> eta_suggested;
  std::optional<double> iteration_floor;
  bool feasible = false;
};

// alpha = sqrt(r_min) sigma_min, beta = jac_norm + eps,
// eps_ceiling = delta alpha^2 / (k beta log(sqrt(k) / rho)),
// eta_suggested = 1 / (2 beta^2),
// iteration_floor = log(sqrt(n) / rho) / (eta alpha^2), feasible iff
// rho < delta / 8. Requires rho > 0 and eta > 0.
BoundReport EvalTheorem1(const BoundInputs& in);

// alpha = sqrt(r_min) sigma_min - E_min, beta = jac_norm + eps + E_max,
// eps_ceiling = delta alpha^2 / (k beta |log delta|),
// iteration_floor = log(r0 / nu) / (eta D) with
// D = alpha/2 + E_J2 alpha + E_J1 alpha - eta E_J2 beta^3 / 2 - eta E_J1 beta / 3;
// feasible iff D > 0. Requires eta, nu and r0_norm positive.
BoundReport EvalTheorem2(const BoundInputs& in);

// Fills r_min, sigma_min, jac_norm, k and n from measured gradients; the
// remaining fields are left at zero for the caller. r_min counts selected
// rows per cluster of `clusters` and keeps the smallest non-zero count.
BoundInputs MeasureInputs(const model::GradientFeatures& g,
                          const coreset::ClusterAssignment& clusters,
                          const coreset::CoresetSelection& selection);

const char* TheoremName(Theorem t);

}  // namespace crust::bounds

#endif  // CRUST_BOUNDS_H_
