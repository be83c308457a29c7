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
#include <memory>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <lapacke.h>

#include "singval/core/error.hpp"
#include "singval/core/io.hpp"
#include "singval/ensemble/sample.hpp"

namespace singval::spectral {

using Complex = std::complex<double>;

/// Sorted singular values sigma_1 <= ... <= sigma_N of one matrix.
struct Spectrum {
  int n = 0;
  std::vector<double> values;
  std::shared_ptr<const ensemble::EnsembleSpec> spec;  ///< may be null for deterministic input
  RngStream stream;
};

/// The 2N eigenvalues +-lambda_k of the symmetrization, stored once as the
/// nonnegative half. Index i runs over {-N..-1, 1..N}; lambda_{-k} = -lambda_k.
class SymmetrizedSpectrum {
 public:
  SymmetrizedSpectrum() = default;
  explicit SymmetrizedSpectrum(std::vector<double> positive) : positive_(std::move(positive)) {
    std::sort(positive_.begin(), positive_.end());
  }
  SymmetrizedSpectrum(std::initializer_list<double> positive)
      : SymmetrizedSpectrum(std::vector<double>(positive)) {}
  explicit SymmetrizedSpectrum(const Spectrum& s) : SymmetrizedSpectrum(s.values) {}

  int n() const noexcept { return static_cast<int>(positive_.size()); }

  double operator[](int i) const {
    if (i == 0 || std::abs(i) > n()) throw ArgumentError("SymmetrizedSpectrum: index out of range");
    return i > 0 ? positive_[i - 1] : -positive_[-i - 1];
  }

  std::span<const double> positive() const noexcept { return positive_; }

  /// All 2N values in ascending order.
  std::vector<double> all() const {
    std::vector<double> out;
    out.reserve(2 * positive_.size());
    for (auto it = positive_.rbegin(); it != positive_.rend(); ++it) out.push_back(-*it);
    out.insert(out.end(), positive_.begin(), positive_.end());
    return out;
  }

 private:
  std::vector<double> positive_;
};

/// Spectral parameter z = E + i eta with eta > 0.
class SpectralPoint {
 public:
  SpectralPoint(double energy, double eta) : energy_(energy), eta_(eta) {
    if (!(eta > 0.0) || !std::isfinite(energy) || !std::isfinite(eta))
      throw ArgumentError("SpectralPoint: eta must be positive and finite");
  }
  double energy() const noexcept { return energy_; }
  double eta() const noexcept { return eta_; }
  Complex z() const noexcept { return {energy_, eta_}; }

 private:
  double energy_;
  double eta_;
};

enum class SvdMethod {
  /// One-sided Jacobi (LAPACK dgesvj): small singular values keep high
  /// relative accuracy.
  OneSidedJacobi,
  /// Householder bidiagonalization + divide and conquer (dgesdd): absolute
  /// accuracy O(eps * ||M||), several times faster at N >= 256.
  Bidiagonal,
};

namespace detail {

inline void require_finite(const Eigen::MatrixXd& m) {
  if (!m.allFinite()) throw DataError("singular_values: matrix has non-finite entries");
}

}  // namespace detail

/// All singular values of a real square or rectangular matrix, ascending.
inline std::vector<double> singular_values(const Eigen::MatrixXd& m,
                                           SvdMethod method = SvdMethod::OneSidedJacobi) {
  detail::require_finite(m);
  const lapack_int rows = static_cast<lapack_int>(m.rows());
  const lapack_int cols = static_cast<lapack_int>(m.cols());
  if (rows == 0 || cols == 0) return {};
  Eigen::MatrixXd a = m;
  // dgesvj needs rows >= cols.
  if (method == SvdMethod::OneSidedJacobi && rows < cols) a.transposeInPlace();
  const lapack_int r = static_cast<lapack_int>(a.rows());
  const lapack_int c = static_cast<lapack_int>(a.cols());
  std::vector<double> sv(static_cast<std::size_t>(std::min(r, c)));
  lapack_int info = 0;
  if (method == SvdMethod::OneSidedJacobi) {
    std::vector<double> stat(6);
    info = LAPACKE_dgesvj(LAPACK_COL_MAJOR, 'G', 'N', 'N', r, c, a.data(), r, sv.data(), 0,
                          nullptr, 1, stat.data());
    if (info == 0 && stat[0] != 1.0)
      for (auto& v : sv) v *= stat[0];
  } else {
    info = LAPACKE_dgesdd(LAPACK_COL_MAJOR, 'N', r, c, a.data(), r, sv.data(), nullptr, 1,
                          nullptr, 1);
  }
  if (info != 0)
    throw SolverError("singular_values: LAPACK returned info = " + std::to_string(info),
                      static_cast<double>(info));
  std::sort(sv.begin(), sv.end());
  return sv;
}

inline Spectrum singular_values(const ensemble::MatrixSample& m,
                                SvdMethod method = SvdMethod::OneSidedJacobi) {
  return {m.n, singular_values(m.entries, method), m.spec, m.stream};
}

/// H = [[0, M], [M^T, 0]].
inline Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) {
  const Eigen::Index r = m.rows(), c = m.cols();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(r + c, r + c);
  h.topRightCorner(r, c) = m;
  h.bottomLeftCorner(c, r) = m.transpose();
  return h;
}

inline Eigen::MatrixXd symmetrize(const ensemble::MatrixSample& m) { return symmetrize(m.entries); }

/// m_N(z) = (1/2N) sum over the 2N symmetrized values of 1/(lambda_i - z).
inline Complex stieltjes(const SymmetrizedSpectrum& s, const SpectralPoint& p) {
  const Complex z = p.z();
  Complex acc = 0.0;
  for (double v : s.positive()) acc += 1.0 / (v - z) + 1.0 / (-v - z);
  return acc / (2.0 * s.n());
}

/// |{ i : e1 < lambda_i < e2 }|, strict on both ends.
inline int counting(std::span<const double> values, double e1, double e2) {
  if (e1 > e2) throw ArgumentError("counting: requires E1 <= E2");
  return static_cast<int>(
      std::count_if(values.begin(), values.end(), [&](double v) { return e1 < v && v < e2; }));
}

inline int counting(const Spectrum& s, double e1, double e2) { return counting(s.values, e1, e2); }

inline int counting(const SymmetrizedSpectrum& s, double e1, double e2) {
  if (e1 > e2) throw ArgumentError("counting: requires E1 <= E2");
  int c = 0;
  for (double v : s.positive()) c += (e1 < v && v < e2) + (e1 < -v && -v < e2);
  return c;
}

/// Tr chi_r * theta_eta(H): sum over the 2N symmetrized values of the
/// Lorentzian mass (1/pi)[atan((r - l)/eta) - atan((-r - l)/eta)].
inline double smoothed_counting(const SymmetrizedSpectrum& s, double r, double eta) {
  if (!(r > 0.0) || !(eta > 0.0)) throw ArgumentError("smoothed_counting: r and eta must be positive");
  double acc = 0.0;
  for (double v : s.positive()) {
    for (double l : {v, -v}) acc += std::atan((r - l) / eta) - std::atan((-r - l) / eta);
  }
  return acc / std::numbers::pi;
}

/// Number of j (ascending order) with mu_j > lambda_{j+1} + tol or
/// mu_j < lambda_{j-1} - tol: the rank-one interlacing pattern.
inline int interlacing_violations(std::span<const double> lambda, std::span<const double> mu, double tol) {
  if (lambda.size() != mu.size()) throw DimensionError("interlacing_violations: sizes differ");
  int bad = 0;
  for (std::size_t j = 0; j < mu.size(); ++j) {
    if (j + 1 < mu.size() && mu[j] > lambda[j + 1] + tol) ++bad;
    if (j >= 1 && mu[j] < lambda[j - 1] - tol) ++bad;
  }
  return bad;
}

/// One value per line, full precision, after a provenance comment.
inline void write_spectrum_csv(const Spectrum& s, const std::filesystem::path& path) {
  io::CsvWriter csv(path);
  csv.comment("spec=" + (s.spec ? s.spec->fingerprint() : std::string("none")) +
              " seed=" + std::to_string(s.stream.campaign_seed) +
              " stream=" + std::to_string(s.stream.stream_index) + " n=" + std::to_string(s.n));
  for (double v : s.values) csv.row(v);
}

}  // namespace singval::spectral
