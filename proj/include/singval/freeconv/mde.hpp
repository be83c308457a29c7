// Copyright 2026 The singval Authors
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

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <sstream>
#include <vector>

#include "singval/core/error.hpp"
#include "singval/ensemble/profile.hpp"
#include "singval/spectral/spectrum.hpp"

namespace singval::freeconv {

/// One nonzero second moment E[x_ab x_cd] of the N x N matrix X.
struct CovarianceTerm {
  int a, b, c, d;
  double value;
};

/// Nonzero covariances of X, symmetrized under (ab) <-> (cd).
inline std::vector<CovarianceTerm> covariance_terms(const ensemble::CorrelationProfile& profile, int n) {
  const double inv_n = 1.0 / n;
  const int r = profile.radius();
  std::vector<CovarianceTerm> out;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = std::max(0, a - r); c <= std::min(n - 1, a + r); ++c)
        for (int d = std::max(0, b - r); d <= std::min(n - 1, b + r); ++d) {
          const double v = 0.5 * (profile.xi(n, a, b, c, d) + profile.xi(n, c, d, a, b)) * inv_n;
          if (v != 0.0) out.push_back({a, b, c, d, v});
        }
  return out;
}

/// Xi(M)_{ik} = sum_{jl} E[h_ij h_kl] M_jl for H = [[0, X], [X^T, 0]].
inline Eigen::MatrixXcd mde_xi(const std::vector<CovarianceTerm>& terms, int n, const Eigen::MatrixXcd& m) {
  Eigen::MatrixXcd xi = Eigen::MatrixXcd::Zero(2 * n, 2 * n);
  for (const auto& t : terms) {
    // h_{a, n+b} = x_ab and h_{n+b, a} = x_ab.
    xi(t.a, t.c) += t.value * m(n + t.b, n + t.d);
    xi(t.a, n + t.d) += t.value * m(n + t.b, t.c);
    xi(n + t.b, t.c) += t.value * m(t.a, n + t.d);
    xi(n + t.b, n + t.d) += t.value * m(t.a, t.c);
  }
  return xi;
}

struct MdeOptions {
  double tol = 1e-10;
  double damping = 1.0;
  int max_iterations = 20000;
  int max_n = 64;
  double min_eta = 0.01;
};

struct MdeSolution {
  Eigen::MatrixXcd M;
  double residual = 0.0;
  int iterations = 0;

  /// (1/2N) Tr M.
  spectral::Complex normalized_trace() const { return M.trace() / static_cast<double>(M.rows()); }
};

/// Solves M(-z - Xi(M)) = I by the iteration M <- (-z - Xi(M))^{-1}.
inline MdeSolution solve_mde(const ensemble::CorrelationProfile& profile, int n,
                             const spectral::SpectralPoint& p, const MdeOptions& opts = {}) {
  if (n < 1 || n > opts.max_n) throw ArgumentError("solve_mde: n must lie in [1, " + std::to_string(opts.max_n) + "]");
  if (p.eta() < opts.min_eta) throw ArgumentError("solve_mde: eta below the supported minimum");
  const auto terms = covariance_terms(profile, n);
  const spectral::Complex z = p.z();
  const int dim = 2 * n;
  const Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(dim, dim);
  Eigen::MatrixXcd m = (-1.0 / z) * id;
  double residual = 0.0;
  for (int it = 0; it <= opts.max_iterations; ++it) {
    const Eigen::MatrixXcd a = -z * id - mde_xi(terms, n, m);
    residual = (m * a - id).cwiseAbs().maxCoeff();
    if (!std::isfinite(residual)) break;
    if (residual <= opts.tol) return {m, residual, it};
    const Eigen::MatrixXcd next = a.partialPivLu().inverse();
    m = (1.0 - opts.damping) * m + opts.damping * next;
  }
  std::ostringstream msg;
  msg << "solve_mde: no convergence, last defect " << residual;
  throw SolverError(msg.str(), residual);
}

}  // namespace singval::freeconv
