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
#include <complex>
#include <filesystem>
#include <limits>
#include <sstream>
#include <vector>

#include "singval/core/error.hpp"
#include "singval/core/io.hpp"
#include "singval/freeconv/semicircle.hpp"
#include "singval/spectral/spectrum.hpp"

namespace singval::freeconv {

/// Deterministic singular values v_1..v_N of the initial matrix V. The
/// symmetrized view is {+-v_i}.
class InitialData {
 public:
  /// Growth exponent C_V: every |v_i| must be at most N^C_V.
  static constexpr double kGrowthExponent = 10.0;

  InitialData() = default;
  explicit InitialData(std::vector<double> v) : v_(std::move(v)) {
    if (v_.empty()) throw ArgumentError("InitialData: empty");
    const double bound = std::pow(static_cast<double>(v_.size()), kGrowthExponent);
    for (double x : v_) {
      if (!std::isfinite(x) || x < 0.0) throw ArgumentError("InitialData: values must be finite and >= 0");
      if (x > bound) throw ArgumentError("InitialData: value exceeds N^C_V");
    }
    std::sort(v_.begin(), v_.end());
  }

  int n() const noexcept { return static_cast<int>(v_.size()); }
  const std::vector<double>& values() const noexcept { return v_; }
  spectral::SymmetrizedSpectrum symmetrized() const { return spectral::SymmetrizedSpectrum(v_); }

  /// Positive semicircle classical locations for 2N particles: v_i is the
  /// semicircle quantile at level (N + i - 1)/(2N), so v_1 = 0.
  static InitialData semicircle_quantiles(int n) {
    if (n < 1) throw ArgumentError("semicircle_quantiles: n must be positive");
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 1; i <= n; ++i)
      v[i - 1] = i == 1 ? 0.0 : semicircle_quantile((n + i - 1) / (2.0 * n));
    return InitialData(std::move(v));
  }

 private:
  std::vector<double> v_;
};

struct MfcOptions {
  double tol = 1e-12;
  double damping = 0.5;      ///< omega in m <- (1 - omega) m + omega Phi(m)
  int max_iterations = 200000;
  double eta_start = 10.0;   ///< continuation starts at max(eta, eta_start)
  double eta_factor = 0.5;   ///< geometric continuation step
};

struct MfcPoint {
  Complex m;
  double residual = 0.0;
  int iterations = 0;
};

namespace detail {

struct MfcEval {
  Complex phi;   ///< (1/2N) sum 1/(v_i - z - t m)
  Complex dphi;  ///< derivative of phi in m
};

inline MfcEval evaluate_mfc(const std::vector<double>& v, double t, Complex z, Complex m) {
  const Complex shift = z + t * m;
  Complex phi = 0.0, d = 0.0;
  for (double x : v) {
    const Complex a = 1.0 / (x - shift);
    const Complex b = 1.0 / (-x - shift);
    phi += a + b;
    d += a * a + b * b;
  }
  const double norm = 1.0 / (2.0 * static_cast<double>(v.size()));
  return {phi * norm, t * d * norm};
}

/// Solves m = Phi(m) at fixed z from a start in the upper half plane. Newton
/// steps are taken when they stay in the upper half plane and reduce the
/// defect; otherwise a damped fixed-point step is used.
inline MfcPoint refine_mfc(const std::vector<double>& v, double t, Complex z, Complex m,
                           const MfcOptions& opts, int max_iterations) {
  MfcEval e = evaluate_mfc(v, t, z, m);
  double defect = std::abs(m - e.phi);
  int it = 0;
  while (defect > opts.tol && it < max_iterations) {
    ++it;
    Complex next = m;
    bool took_newton = false;
    const Complex denom = 1.0 - e.dphi;
    if (std::abs(denom) > 1e-300) {
      const Complex cand = m - (m - e.phi) / denom;
      if (cand.imag() > 0.0 && std::isfinite(cand.real()) && std::isfinite(cand.imag())) {
        const MfcEval ce = evaluate_mfc(v, t, z, cand);
        const double cd = std::abs(cand - ce.phi);
        if (cd < defect) {
          m = cand;
          e = ce;
          defect = cd;
          took_newton = true;
        }
      }
    }
    if (!took_newton) {
      next = (1.0 - opts.damping) * m + opts.damping * e.phi;
      m = next;
      e = evaluate_mfc(v, t, z, m);
      defect = std::abs(m - e.phi);
    }
  }
  return {m, defect, it};
}

}  // namespace detail

/// Fixed-point defect |m - (1/2N) sum 1/(v_i - z - t m)|.
inline double mfc_residual(const InitialData& data, double t, const SpectralPoint& p, Complex m) {
  return std::abs(m - detail::evaluate_mfc(data.values(), t, p.z(), m).phi);
}

/// Solves at p starting from a known nearby solution (continuation step).
inline MfcPoint solve_mfc_from(const InitialData& data, double t, const SpectralPoint& p,
                               Complex start, const MfcOptions& opts = {}) {
  if (!(t >= 0.0)) throw ArgumentError("solve_mfc: t must be >= 0");
  if (!(start.imag() > 0.0)) throw ArgumentError("solve_mfc: start must lie in the upper half plane");
  if (t == 0.0) {
    const Complex m = detail::evaluate_mfc(data.values(), 0.0, p.z(), 0.0).phi;
    return {m, 0.0, 0};
  }
  MfcPoint r = detail::refine_mfc(data.values(), t, p.z(), start, opts, opts.max_iterations);
  if (r.residual > opts.tol) {
    std::ostringstream msg;
    msg << "solve_mfc: no convergence at z = (" << p.energy() << ", " << p.eta()
        << "), last defect " << r.residual;
    throw SolverError(msg.str(), r.residual);
  }
  return r;
}

/// Free convolution Stieltjes transform m_fc,t(z), the solution of
/// m = (1/2N) sum_{+-i} 1/(v_i - z - t m) with Im m > 0, reached by
/// continuation in eta from eta_start down to p.eta().
inline MfcPoint solve_mfc(const InitialData& data, double t, const SpectralPoint& p,
                          const MfcOptions& opts = {}) {
  if (!(t >= 0.0)) throw ArgumentError("solve_mfc: t must be >= 0");
  if (t == 0.0) return solve_mfc_from(data, t, p, {0.0, 1.0}, opts);
  double eta = std::max(p.eta(), opts.eta_start);
  SpectralPoint cur(p.energy(), eta);
  MfcPoint r = solve_mfc_from(data, t, cur, -1.0 / cur.z(), opts);
  int total = r.iterations;
  while (eta > p.eta()) {
    eta = std::max(p.eta(), eta * opts.eta_factor);
    cur = SpectralPoint(p.energy(), eta);
    r = solve_mfc_from(data, t, cur, r.m, opts);
    total += r.iterations;
  }
  r.iterations = total;
  return r;
}

/// Solved transform on a grid of spectral points.
struct StieltjesSolution {
  std::vector<SpectralPoint> grid;
  std::vector<Complex> m;
  std::vector<double> residual;
  double t = 0.0;
};

inline StieltjesSolution solve_mfc_grid(const InitialData& data, double t,
                                        const std::vector<SpectralPoint>& grid,
                                        const MfcOptions& opts = {}) {
  StieltjesSolution out;
  out.grid = grid;
  out.t = t;
  out.m.reserve(grid.size());
  out.residual.reserve(grid.size());
  for (const auto& p : grid) {
    const MfcPoint r = solve_mfc(data, t, p, opts);
    out.m.push_back(r.m);
    out.residual.push_back(r.residual);
  }
  return out;
}

/// Fixed-eta energy sweep. Each point is seeded from its neighbour and falls
/// back to a cold continuation solve when that fails to converge quickly.
inline StieltjesSolution solve_mfc_sweep(const InitialData& data, double t,
                                         const std::vector<double>& energies, double eta,
                                         const MfcOptions& opts = {}) {
  StieltjesSolution out;
  out.t = t;
  bool have_prev = false;
  Complex prev;
  for (double e : energies) {
    const SpectralPoint p(e, eta);
    MfcPoint r;
    if (t == 0.0) {
      r = solve_mfc_from(data, t, p, {0.0, 1.0}, opts);
    } else {
      bool done = false;
      if (have_prev) {
        r = detail::refine_mfc(data.values(), t, p.z(), prev, opts, 60);
        done = r.residual <= opts.tol;
      }
      if (!done) r = solve_mfc(data, t, p, opts);
    }
    out.grid.push_back(p);
    out.m.push_back(r.m);
    out.residual.push_back(r.residual);
    prev = r.m;
    have_prev = true;
  }
  return out;
}

/// Closed-form semicircle transform on a grid, as a StieltjesSolution.
inline StieltjesSolution semicircle_solution(const std::vector<SpectralPoint>& grid) {
  StieltjesSolution out;
  out.grid = grid;
  for (const auto& p : grid) {
    const Complex m = solve_semicircle(p);
    out.m.push_back(m);
    out.residual.push_back(semicircle_residual(p, m));
  }
  return out;
}

/// Columns (E, eta, re_m, im_m, residual).
inline void write_solution_csv(const StieltjesSolution& s, const std::filesystem::path& path) {
  io::CsvWriter csv(path);
  csv.header({"E", "eta", "re_m", "im_m", "residual"});
  for (std::size_t k = 0; k < s.grid.size(); ++k)
    csv.row(s.grid[k].energy(), s.grid[k].eta(), s.m[k].real(), s.m[k].imag(), s.residual[k]);
}

/// Measured stability quantities of the free convolution at one point.
struct StabilityReport {
  double im_m = 0.0;
  double min_distance = 0.0;  ///< min_i |v_i - z - t m|
  double derivative_gap = 0.0;  ///< |1 - (t/2N) sum (v_i - z - t m)^-2|
};

inline StabilityReport stability_quantities(const InitialData& data, double t,
                                            const SpectralPoint& p, Complex m) {
  const Complex shift = p.z() + t * m;
  double min_d = std::numeric_limits<double>::infinity();
  Complex sum = 0.0;
  for (double x : data.values()) {
    for (double v : {x, -x}) {
      const Complex d = v - shift;
      min_d = std::min(min_d, std::abs(d));
      sum += 1.0 / (d * d);
    }
  }
  return {m.imag(), min_d, std::abs(1.0 - t / (2.0 * data.n()) * sum)};
}

struct RegularityOptions {
  double c = 0.05;
  double C = 20.0;
  int n_eta = 25;
  int min_energy_points = 41;
  int max_energy_points = 20001;
};

/// Measured bounds of Im m_V over |E| <= G, eta in [g, 10].
struct RegularityReport {
  double g = 0.0;
  double G = 0.0;
  bool holds = false;
  double c_low = 0.0;
  double C_high = 0.0;
};

/// Evaluates Im m_V (1/2N normalization) on a log grid in eta and a uniform
/// energy grid fine enough (spacing <= g/2) to resolve the gaps between atoms.
inline RegularityReport check_regularity(const InitialData& data, double g, double G,
                                         const RegularityOptions& opts = {}) {
  if (!(g > 0.0 && g <= 10.0)) throw ArgumentError("check_regularity: requires 0 < g <= 10");
  if (!(G > 0.0)) throw ArgumentError("check_regularity: requires G > 0");
  const auto sym = data.symmetrized();
  int ne = static_cast<int>(std::ceil(4.0 * G / g)) + 1;
  ne = std::clamp(ne, opts.min_energy_points, opts.max_energy_points);
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (int a = 0; a < opts.n_eta; ++a) {
    const double eta = opts.n_eta == 1 ? g : g * std::pow(10.0 / g, a / (opts.n_eta - 1.0));
    for (int b = 0; b < ne; ++b) {
      const double e = -G + 2.0 * G * b / (ne - 1.0);
      const double im = spectral::stieltjes(sym, SpectralPoint(e, eta)).imag();
      lo = std::min(lo, im);
      hi = std::max(hi, im);
    }
  }
  return {g, G, lo >= opts.c && hi <= opts.C, lo, hi};
}

}  // namespace singval::freeconv
