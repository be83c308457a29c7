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
#include <complex>
#include <numbers>
#include <vector>

#include "singval/core/error.hpp"
#include "singval/spectral/spectrum.hpp"

namespace singval::freeconv {

using spectral::Complex;
using spectral::SpectralPoint;

/// Root of m^2 + z m + 1 = 0 in the upper half plane.
///
/// The two roots multiply to one and the Herglotz root has |m| < 1, so it is
/// taken as the reciprocal of the larger-modulus root, which is free of
/// cancellation.
inline Complex solve_semicircle(const SpectralPoint& p) {
  const Complex z = p.z();
  Complex s = std::sqrt(z * z - 4.0);
  const Complex a = 0.5 * (-z + s);
  const Complex b = 0.5 * (-z - s);
  const Complex big = std::abs(a) >= std::abs(b) ? a : b;
  return 1.0 / big;
}

/// |m - 1/(-z - m)|.
inline double semicircle_residual(const SpectralPoint& p, Complex m) {
  return std::abs(m - 1.0 / (-p.z() - m));
}

inline double semicircle_density(double x) {
  return std::abs(x) < 2.0 ? std::sqrt(4.0 - x * x) / (2.0 * std::numbers::pi) : 0.0;
}

inline double semicircle_cdf(double x) {
  if (x <= -2.0) return 0.0;
  if (x >= 2.0) return 1.0;
  return 0.5 + (x * std::sqrt(4.0 - x * x) / 4.0 + std::asin(x / 2.0)) / std::numbers::pi;
}

/// Inverse of semicircle_cdf by bisection to machine precision.
inline double semicircle_quantile(double u) {
  if (!(u >= 0.0 && u <= 1.0)) throw ArgumentError("semicircle_quantile: level must lie in [0, 1]");
  double lo = -2.0, hi = 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    (semicircle_cdf(mid) >= u ? hi : lo) = mid;
  }
  return hi;
}

}  // namespace singval::freeconv
