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
#include <memory>
#include <vector>

#include "singval/core/error.hpp"
#include "singval/core/rng.hpp"
#include "singval/ensemble/sample.hpp"
#include "singval/freeconv/free_convolution.hpp"
#include "singval/spectral/spectrum.hpp"

namespace singval::dynamics {

/// M_t = V + W_t with V = diag(v) and W_t Gaussian, Var (W_t)_ij = t/N.
struct MatrixFlowState {
  freeconv::InitialData v;
  Eigen::MatrixXd w;
  double t = 0.0;

  explicit MatrixFlowState(freeconv::InitialData data)
      : v(std::move(data)), w(Eigen::MatrixXd::Zero(v.n(), v.n())) {}

  Eigen::MatrixXd matrix() const {
    Eigen::MatrixXd m = w;
    for (int i = 0; i < v.n(); ++i) m(i, i) += v.values()[i];
    return m;
  }

  /// Adds an independent increment of duration dt.
  void step(double dt, Philox& gen) {
    if (!(dt >= 0.0)) throw ArgumentError("MatrixFlowState::step: dt must be >= 0");
    const double sd = std::sqrt(dt / v.n());
    for (int i = 0; i < v.n(); ++i)
      for (int j = 0; j < v.n(); ++j) w(i, j) += sd * gen.normal();
    t += dt;
  }
};

/// Singular values of V + sqrt(t) W, W with i.i.d. N(0, 1/N) entries.
inline spectral::Spectrum matrix_flow(const freeconv::InitialData& v, double t, RngStream stream,
                                      spectral::SvdMethod method = spectral::SvdMethod::OneSidedJacobi) {
  if (!(t >= 0.0)) throw ArgumentError("matrix_flow: t must be >= 0");
  MatrixFlowState state(v);
  Philox gen(stream);
  if (t > 0.0) state.step(t, gen);
  spectral::Spectrum out;
  out.n = v.n();
  out.stream = stream;
  out.values = t == 0.0 ? v.values() : spectral::singular_values(state.matrix(), method);
  return out;
}

/// Entrywise Ornstein-Uhlenbeck state of the symmetrized matrix
/// H = [[0, X], [X^T, 0]].
struct OuState {
  int n = 0;
  Eigen::MatrixXd h;         ///< 2N x 2N
  double f = 0.0;            ///< stationary mean of each entry of X
  Eigen::MatrixXd variance;  ///< s_ij, N x N
  double t = 0.0;

  Eigen::MatrixXd x() const { return h.topRightCorner(n, n); }

  static OuState from_matrix(const Eigen::MatrixXd& x, double f, Eigen::MatrixXd variance) {
    if (x.rows() != x.cols() || variance.rows() != x.rows() || variance.cols() != x.cols())
      throw DimensionError("OuState: matrix and variance table must be N x N");
    if (!((variance.array() > 0.0).all())) throw ArgumentError("OuState: variances must be positive");
    OuState s;
    s.n = static_cast<int>(x.rows());
    s.h = spectral::symmetrize(x);
    s.f = f;
    s.variance = std::move(variance);
    return s;
  }

  /// From a sparse or Gaussian sample: the mean is the entry shift f/N and
  /// the variances come from the profile.
  static OuState from_sample(const ensemble::MatrixSample& m) {
    if (!m.spec) throw ProvenanceError("OuState: sample without spec");
    const auto& spec = *m.spec;
    const double nn = static_cast<double>(m.n);
    switch (spec.kind) {
      case ensemble::EnsembleKind::Sparse:
        return from_matrix(m.entries, spec.sparse.f / nn, spec.sparse.profile.matrix());
      case ensemble::EnsembleKind::Gaussian:
        return from_matrix(m.entries, 0.0, Eigen::MatrixXd::Constant(m.n, m.n, 1.0 / nn));
      default:
        throw ArgumentError("OuState: only sparse and Gaussian samples carry an entrywise variance table");
    }
  }
};

/// Exact-in-law evolution over duration t:
/// x(t) = f + e^{-t/(2N s)} (x(0) - f) + sqrt(s (1 - e^{-t/(N s)})) Z.
inline OuState ou_evolve(const OuState& h0, double t, RngStream stream) {
  if (!(t >= 0.0)) throw ArgumentError("ou_evolve: t must be >= 0");
  OuState out = h0;
  out.t = h0.t + t;
  if (t == 0.0) return out;
  Philox gen(stream);
  const int n = h0.n;
  const double nn = static_cast<double>(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double s = h0.variance(i, j);
      const double decay = std::exp(-t / (2.0 * nn * s));
      const double sd = std::sqrt(s * -std::expm1(-t / (nn * s)));
      const double x = h0.f + decay * (h0.h(i, n + j) - h0.f) + sd * gen.normal();
      out.h(i, n + j) = x;
      out.h(n + j, i) = x;
    }
  }
  return out;
}

struct GaussianSplit {
  Eigen::MatrixXd residual;  ///< per-entry non-Gaussian-part variance
  double gaussian_weight = 0.0;
  double r = 0.0;            ///< min_ij N s_ij
  long clipped = 0;          ///< residuals below -1e-15 that were clipped to 0
};

/// Splits the OU fluctuation variance s_ij (1 - e^{-t/(N s_ij)}) into a
/// common Gaussian part gaussian_weight^2 = r (1 - e^{-t/r}) / N and a
/// nonnegative residual.
inline GaussianSplit gaussian_divisible_split(const Eigen::MatrixXd& variance, double t) {
  if (!(t >= 0.0)) throw ArgumentError("gaussian_divisible_split: t must be >= 0");
  const double nn = static_cast<double>(variance.rows());
  GaussianSplit out;
  out.r = variance.minCoeff() * nn;
  if (!(out.r > 0.0)) throw ArgumentError("gaussian_divisible_split: variances must be positive");
  const double common = out.r * -std::expm1(-t / out.r) / nn;
  out.gaussian_weight = std::sqrt(common);
  out.residual.resize(variance.rows(), variance.cols());
  for (Eigen::Index k = 0; k < variance.size(); ++k) {
    const double s = variance.data()[k];
    double res = s * -std::expm1(-t / (nn * s)) - common;
    if (res < 0.0) {
      if (res < -1e-15) ++out.clipped;
      res = 0.0;
    }
    out.residual.data()[k] = res;
  }
  return out;
}

}  // namespace singval::dynamics
