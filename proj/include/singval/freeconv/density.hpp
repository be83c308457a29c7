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

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "singval/core/error.hpp"
#include "singval/freeconv/free_convolution.hpp"

namespace singval::freeconv {

/// Density samples on an increasing energy grid.
struct SpectralDensity {
  std::vector<double> energy;
  std::vector<double> rho;
};

/// Default eta for density extraction.
inline constexpr double kDensityEta = 1e-4;

/// rho(E) = max(0, Im m(E + i eta) / pi) at each grid point of the solution.
inline SpectralDensity density(const StieltjesSolution& s) {
  SpectralDensity out;
  out.energy.reserve(s.grid.size());
  out.rho.reserve(s.grid.size());
  for (std::size_t k = 0; k < s.grid.size(); ++k) {
    out.energy.push_back(s.grid[k].energy());
    out.rho.push_back(std::max(0.0, s.m[k].imag() / std::numbers::pi));
  }
  return out;
}

/// Uniform grid lo, lo + h, ..., hi.
inline std::vector<double> energy_grid(double lo, double hi, double h) {
  if (!(hi > lo) || !(h > 0.0)) throw ArgumentError("energy_grid: requires lo < hi and h > 0");
  const auto n = static_cast<std::size_t>(std::llround((hi - lo) / h));
  std::vector<double> e(n + 1);
  for (std::size_t k = 0; k <= n; ++k) e[k] = lo + (hi - lo) * static_cast<double>(k) / n;
  return e;
}

/// Cumulative distribution of a piecewise-linear density, normalized to unit
/// total mass. Exact integration of the linear interpolant.
class CumulativeDensity {
 public:
  explicit CumulativeDensity(const SpectralDensity& rho, double mass_tolerance = 1e-6)
      : x_(rho.energy), rho_(rho.rho) {
    if (x_.size() < 2 || x_.size() != rho_.size())
      throw ArgumentError("CumulativeDensity: need at least two matching grid points");
    for (std::size_t k = 1; k < x_.size(); ++k)
      if (!(x_[k] > x_[k - 1])) throw ArgumentError("CumulativeDensity: grid must be increasing");
    f_.assign(x_.size(), 0.0);
    for (std::size_t k = 1; k < x_.size(); ++k)
      f_[k] = f_[k - 1] + 0.5 * (rho_[k] + rho_[k - 1]) * (x_[k] - x_[k - 1]);
    mass_ = f_.back();
    if (!(std::abs(mass_ - 1.0) <= mass_tolerance))
      throw NormalizationError("classical_locations: density mass " + io::format_double(mass_) +
                               " differs from 1");
  }

  double mass() const noexcept { return mass_; }

  double operator()(double x) const {
    if (x <= x_.front()) return 0.0;
    if (x >= x_.back()) return 1.0;
    const auto k = static_cast<std::size_t>(std::upper_bound(x_.begin(), x_.end(), x) - x_.begin()) - 1;
    const double h = x_[k + 1] - x_[k];
    const double u = x - x_[k];
    const double part = rho_[k] * u + (rho_[k + 1] - rho_[k]) * u * u / (2.0 * h);
    return (f_[k] + part) / mass_;
  }

  /// inf{x : F(x) >= level} by bisection to tolerance tol.
  double quantile(double level, double tol = 1e-8) const {
    if (!(level >= 0.0 && level <= 1.0)) throw ArgumentError("quantile: level must lie in [0, 1]");
    // Locate the cell first, then bisect inside it.
    const double target = level * mass_;
    auto it = std::lower_bound(f_.begin(), f_.end(), target);
    if (it == f_.begin()) {
      // Leading zero-mass cells: the infimum is where mass starts.
      std::size_t k = 0;
      while (k + 1 < f_.size() && f_[k + 1] <= 0.0) ++k;
      return x_[k];
    }
    if (it == f_.end()) return x_.back();
    const auto k = static_cast<std::size_t>(it - f_.begin());
    double lo = x_[k - 1], hi = x_[k];
    while (hi - lo > tol * 0.5) {
      const double mid = 0.5 * (lo + hi);
      ((*this)(mid) >= level ? hi : lo) = mid;
    }
    return hi;
  }

 private:
  std::vector<double> x_;
  std::vector<double> rho_;
  std::vector<double> f_;
  double mass_ = 0.0;
};

/// gamma_i for i in {-N..-1, 1..N}.
class ClassicalLocations {
 public:
  ClassicalLocations() = default;
  ClassicalLocations(std::vector<double> negative, std::vector<double> positive)
      : neg_(std::move(negative)), pos_(std::move(positive)) {}

  int n() const noexcept { return static_cast<int>(pos_.size()); }

  double operator[](int i) const {
    if (i == 0 || std::abs(i) > n()) throw ArgumentError("ClassicalLocations: index out of range");
    return i > 0 ? pos_[i - 1] : neg_[-i - 1];
  }

  const std::vector<double>& positive() const noexcept { return pos_; }
  const std::vector<double>& negative() const noexcept { return neg_; }

 private:
  std::vector<double> neg_;  ///< gamma_{-1}, ..., gamma_{-N}
  std::vector<double> pos_;  ///< gamma_1, ..., gamma_N
};

struct ClassicalOptions {
  double mass_tolerance = 1e-6;
  double tol = 1e-8;
};

/// Quantiles at (N + i - 1)/(2N) for i >= 1 and (N + i)/(2N) for i <= -1.
inline ClassicalLocations classical_locations(const SpectralDensity& rho, int n,
                                              const ClassicalOptions& opts = {}) {
  if (n < 1) throw ArgumentError("classical_locations: n must be positive");
  const CumulativeDensity cdf(rho, opts.mass_tolerance);
  std::vector<double> neg(static_cast<std::size_t>(n)), pos(static_cast<std::size_t>(n));
  const double denom = 2.0 * n;
  for (int i = 1; i <= n; ++i) {
    pos[i - 1] = cdf.quantile((n + i - 1) / denom, opts.tol);
    neg[i - 1] = cdf.quantile((n - i) / denom, opts.tol);
  }
  return {std::move(neg), std::move(pos)};
}

/// Same thresholds applied to the closed-form semicircle quantile.
inline ClassicalLocations semicircle_locations(int n) {
  if (n < 1) throw ArgumentError("semicircle_locations: n must be positive");
  std::vector<double> neg(static_cast<std::size_t>(n)), pos(static_cast<std::size_t>(n));
  const double denom = 2.0 * n;
  for (int i = 1; i <= n; ++i) {
    pos[i - 1] = i == 1 ? 0.0 : semicircle_quantile((n + i - 1) / denom);
    neg[i - 1] = semicircle_quantile((n - i) / denom);
  }
  return {std::move(neg), std::move(pos)};
}

}  // namespace singval::freeconv
