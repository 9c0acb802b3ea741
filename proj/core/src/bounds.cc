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


#include "crust/bounds.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "crust/error.h"
#include "crust/linalg.h"

namespace crust::bounds {
namespace {

void Require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::kBadInput, what);
}

std::optional<double> Finite(double v) {
  if (std::isfinite(v)) return v;
  return std::nullopt;
}

}  // namespace

void BoundInputs::Validate() const {
  const double magnitudes[] = {r_min, sigma_min, jac_norm, eps, k, n, rho, delta,
                               eta, e_min, e_max, e_j1, e_j2, r0_norm, nu};
  for (double v : magnitudes) {
    Require(std::isfinite(v) && v >= 0.0, "bound inputs must be finite and >= 0");
  }
  Require(rho <= 1.0, "rho must lie in [0, 1]");
  Require(delta <= 1.0, "delta must lie in [0, 1]");
  Require(k <= n, "k must not exceed n");
}

BoundReport EvalTheorem1(const BoundInputs& in) {
  in.Validate();
  Require(in.rho > 0.0, "theorem 1 needs rho > 0");
  Require(in.eta > 0.0, "theorem 1 needs eta > 0");
  BoundReport out;
  out.theorem = Theorem::kLabelFlip;
  out.alpha = std::sqrt(in.r_min) * in.sigma_min;
  out.beta = in.jac_norm + in.eps;
  const double log_term = std::log(std::sqrt(in.k) / in.rho);
  if (in.k > 0.0 && out.beta > 0.0 && log_term > 0.0) {
    out.eps_ceiling =
        Finite(in.delta * out.alpha * out.alpha / (in.k * out.beta * log_term));
  }
  if (out.beta > 0.0) out.eta_suggested = Finite(1.0 / (2.0 * out.beta * out.beta));
  if (out.alpha > 0.0 && in.n >= 1.0) {
    out.iteration_floor = Finite(std::log(std::sqrt(in.n) / in.rho) /
                                 (in.eta * out.alpha * out.alpha));
  }
  out.feasible = in.rho < in.delta / 8.0;
  return out;
}

BoundReport EvalTheorem2(const BoundInputs& in) {
  in.Validate();
  Require(in.eta > 0.0, "theorem 2 needs eta > 0");
  Require(in.nu > 0.0, "theorem 2 needs nu > 0");
  Require(in.r0_norm > 0.0, "theorem 2 needs r0_norm > 0");
  BoundReport out;
  out.theorem = Theorem::kPerturbation;
  out.alpha = std::sqrt(in.r_min) * in.sigma_min - in.e_min;
  out.beta = in.jac_norm + in.eps + in.e_max;
  const double log_delta = std::abs(std::log(in.delta));
  if (in.delta > 0.0 && in.delta < 1.0 && in.k > 0.0 && out.beta > 0.0) {
    out.eps_ceiling =
        Finite(in.delta * out.alpha * out.alpha / (in.k * out.beta * log_delta));
  }
  if (out.beta > 0.0) out.eta_suggested = Finite(1.0 / (2.0 * out.beta * out.beta));
  const double a = out.alpha;
  const double b = out.beta;
  const double denom = a / 2.0 + in.e_j2 * a + in.e_j1 * a -
                       in.eta * in.e_j2 * b * b * b / 2.0 -
                       in.eta * in.e_j1 * b / 3.0;
  out.feasible = denom > 0.0;
  if (out.feasible) {
    out.iteration_floor =
        Finite(std::max(0.0, std::log(in.r0_norm / in.nu)) / (in.eta * denom));
  }
  return out;
}

BoundInputs MeasureInputs(const model::GradientFeatures& g,
                          const coreset::ClusterAssignment& clusters,
                          const coreset::CoresetSelection& selection) {
  if (selection.rows.empty()) {
    throw Error(ErrorCode::kEmptySelection, "cannot measure an empty selection");
  }
  if (clusters.cluster_of.size() != g.matrix.rows()) {
    throw Error(ErrorCode::kShapeMismatch, "cluster assignment does not match rows");
  }
  std::map<std::size_t, std::size_t> per_cluster;
  for (std::size_t r : selection.rows) {
    if (r >= g.matrix.rows()) throw Error(ErrorCode::kBadInput, "row out of range");
    ++per_cluster[clusters.cluster_of[r]];
  }
  BoundInputs out;
  out.r_min = static_cast<double>(
      std::min_element(per_cluster.begin(), per_cluster.end(),
                       [](const auto& a, const auto& b) { return a.second < b.second; })
          ->second);
  out.sigma_min = linalg::SingularValues(g.matrix.SelectRows(selection.rows)).back();
  out.jac_norm = linalg::SingularValues(g.matrix).front();
  out.k = static_cast<double>(selection.rows.size());
  out.n = static_cast<double>(g.matrix.rows());
  return out;
}

const char* TheoremName(Theorem t) {
  return t == Theorem::kLabelFlip ? "label_flip" : "perturbation";
}

}  // namespace crust::bounds
