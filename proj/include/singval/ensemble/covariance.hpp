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

#include <cmath>
#include <optional>
#include <sstream>

#include <Eigen/Dense>

#include "singval/core/error.hpp"
#include "singval/ensemble/profile.hpp"

namespace singval::ensemble {

/// Entry (i, j) of an N x N matrix, flattened row-major into the covariance
/// index space.
inline int flat_index(int n, int i, int j) { return i * n + j; }

struct CovarianceMatrix {
  Eigen::MatrixXd sigma;                ///< N^2 x N^2, Sigma_{(ij),(kl)} = xi_{ijkl} / N
  std::optional<double> min_eigenvalue; ///< exact floor when the dense eigensolve was run
};

struct CovarianceOptions {
  int max_n = 64;
  /// Dense eigensolves are run up to this covariance dimension; above it the
  /// floor is certified by a shifted Cholesky factorization.
  int max_eigensolve_dim = 1024;
  double tolerance = 1e-10;
};

namespace detail {

inline double min_eigenvalue(const Eigen::MatrixXd& sym) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace detail

/// Dense covariance of the flattened entries, with the positive-definiteness
/// floor c0/N verified.
inline CovarianceMatrix build_covariance(const CorrelationProfile& profile, int n,
                                         const CovarianceOptions& opts = {}) {
  if (n < 1) throw ParameterError("build_covariance: n must be positive");
  if (n > opts.max_n) {
    std::ostringstream msg;
    msg << "build_covariance: n = " << n << " exceeds the dense limit " << opts.max_n;
    throw ParameterError(msg.str());
  }
  const int dim = n * n;
  const int r = profile.radius();
  const double inv_n = 1.0 / static_cast<double>(n);
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(dim, dim);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int k = std::max(0, i - r); k <= std::min(n - 1, i + r); ++k) {
        for (int l = std::max(0, j - r); l <= std::min(n - 1, j + r); ++l) {
          const double xi = profile.xi(n, i, j, k, l);
          const int dist = std::max(std::abs(k - i), std::abs(l - j));
          if (std::abs(xi) > profile.c1() * std::exp(-profile.c2() * dist) * (1.0 + 1e-12)) {
            std::ostringstream msg;
            msg << "build_covariance: |xi| at offset (" << k - i << "," << l - j
                << ") exceeds the decay bound c1*exp(-c2*d)";
            throw ParameterError(msg.str());
          }
          sigma(flat_index(n, i, j), flat_index(n, k, l)) = xi * inv_n;
        }
      }
    }
  }
  sigma = 0.5 * (sigma + sigma.transpose()).eval();

  const double floor = profile.c0() * inv_n;
  const double tol = opts.tolerance * inv_n;
  CovarianceMatrix out;
  if (dim <= opts.max_eigensolve_dim) {
    const double lo = detail::min_eigenvalue(sigma);
    out.min_eigenvalue = lo;
    if (lo < floor - tol) {
      std::ostringstream msg;
      msg << "covariance is not positive definite above c0/N: minimum eigenvalue " << lo
          << " < " << floor;
      throw DefinitenessError(msg.str(), lo);
    }
  } else {
    Eigen::MatrixXd shifted = sigma;
    shifted.diagonal().array() -= (floor - tol);
    Eigen::LLT<Eigen::MatrixXd> llt(shifted);
    if (llt.info() != Eigen::Success) {
      const double lo = detail::min_eigenvalue(sigma);
      std::ostringstream msg;
      msg << "covariance is not positive definite above c0/N: minimum eigenvalue " << lo
          << " < " << floor;
      throw DefinitenessError(msg.str(), lo);
    }
  }
  out.sigma = std::move(sigma);
  return out;
}

/// Lower Cholesky factor of the covariance, the sampling map z -> L z.
struct CovarianceFactor {
  int n = 0;
  Eigen::MatrixXd lower;
  std::optional<double> min_eigenvalue;
};

inline CovarianceFactor factor_covariance(const CorrelationProfile& profile, int n,
                                          const CovarianceOptions& opts = {}) {
  CovarianceMatrix cov = build_covariance(profile, n, opts);
  Eigen::LLT<Eigen::MatrixXd> llt(cov.sigma);
  if (llt.info() != Eigen::Success)
    throw DefinitenessError("covariance Cholesky factorization failed",
                            cov.min_eigenvalue.value_or(detail::min_eigenvalue(cov.sigma)));
  return {n, llt.matrixL(), cov.min_eigenvalue};
}

}  // namespace singval::ensemble
