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

// Empirical distribution functions, Kolmogorov-Smirnov distances and the
// limiting law of N * lambda_1.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "singval/core/error.hpp"
#include "singval/core/io.hpp"

namespace singval::stats {

/// Right-continuous step CDF of a finite sample.
class Ecdf {
 public:
  Ecdf() = default;
  explicit Ecdf(std::vector<double> sample) : values_(std::move(sample)) {
    if (values_.empty()) throw ArgumentError("Ecdf: empty sample");
    for (double v : values_)
      if (std::isnan(v)) throw DataError("Ecdf: NaN in sample");
    std::sort(values_.begin(), values_.end());
  }

  std::size_t n() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }

  /// Fraction of the sample <= x.
  double operator()(double x) const {
    const auto it = std::upper_bound(values_.begin(), values_.end(), x);
    return static_cast<double>(it - values_.begin()) / static_cast<double>(values_.size());
  }

 private:
  std::vector<double> values_;
};

/// Half-width of the two-sided DKW confidence band at level 1 - alpha.
inline double dkw_band(double n, double alpha = 0.05) {
  if (!(n > 0.0)) throw ArgumentError("dkw_band: n must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ArgumentError("dkw_band: alpha must lie in (0, 1)");
  return std::sqrt(std::log(2.0 / alpha) / (2.0 * n));
}

struct KsResult {
  double statistic = 0.0;
  std::size_t n = 0;
  std::size_t m = 0;  ///< second sample size, 0 for one-sample tests
  double dkw_band = 0.0;

  /// Effective sample size nm / (n + m) for two samples, else n.
  double effective_n() const noexcept {
    return m == 0 ? static_cast<double>(n)
                  : static_cast<double>(n) * static_cast<double>(m) / static_cast<double>(n + m);
  }
  bool within_band() const noexcept { return statistic <= dkw_band; }
};

/// F(r) = 1 - exp(-r^2/2 - r).
inline double reference_cdf(double r) {
  if (!(r >= 0.0)) throw ArgumentError("reference_cdf: r must be >= 0");
  if (std::isinf(r)) return 1.0;
  return -std::expm1(-(0.5 * r * r + r));
}

/// Inverse of reference_cdf: r = -1 + sqrt(1 - 2 log(1 - u)).
inline double reference_quantile(double u) {
  if (!(u >= 0.0 && u <= 1.0)) throw ArgumentError("reference_quantile: u must lie in [0, 1]");
  if (u == 1.0) return INFINITY;
  const double s = -2.0 * std::log1p(-u);
  // sqrt(1 + s) - 1 without cancellation for small s.
  return s / (std::sqrt(1.0 + s) + 1.0);
}

/// sup_x |F_n(x) - cdf(x)|, evaluated on both sides of every jump.
template <class Cdf>
KsResult ks_one_sample(std::span<const double> sample, Cdf&& cdf) {
  if (sample.empty()) throw ArgumentError("ks_one_sample: empty sample");
  std::vector<double> x(sample.begin(), sample.end());
  for (double v : x)
    if (std::isnan(v)) throw DataError("ks_one_sample: NaN in sample");
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size();) {
    std::size_t j = i;
    while (j < x.size() && x[j] == x[i]) ++j;
    const double f = cdf(x[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(j) / n - f});
    i = j;
  }
  return {std::clamp(d, 0.0, 1.0), x.size(), 0, dkw_band(n)};
}

template <class Cdf>
KsResult ks_one_sample(const Ecdf& e, Cdf&& cdf) {
  return ks_one_sample(e.values(), std::forward<Cdf>(cdf));
}

/// sup_x |F_a(x) - F_b(x)| over the merged jump points.
inline KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ArgumentError("ks_two_sample: empty sample");
  std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
  for (double v : x)
    if (std::isnan(v)) throw DataError("ks_two_sample: NaN in sample");
  for (double v : y)
    if (std::isnan(v)) throw DataError("ks_two_sample: NaN in sample");
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double n = static_cast<double>(x.size()), m = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < x.size() || j < y.size()) {
    const double v = j == y.size() || (i < x.size() && x[i] <= y[j]) ? x[i] : y[j];
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  KsResult r{std::min(d, 1.0), x.size(), y.size(), 0.0};
  r.dkw_band = dkw_band(r.effective_n());
  return r;
}

inline KsResult ks_two_sample(const Ecdf& a, const Ecdf& b) { return ks_two_sample(a.values(), b.values()); }

/// Type-7 (linear interpolation) sample quantile.
inline double quantile(std::vector<double> v, double level) {
  if (v.empty()) throw ArgumentError("quantile: empty sample");
  if (!(level >= 0.0 && level <= 1.0)) throw ArgumentError("quantile: level must lie in [0, 1]");
  std::sort(v.begin(), v.end());
  const double h = level * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// CSV columns r, F_emp, F_ref: one row per sample point.
template <class Cdf>
void write_ecdf_csv(const Ecdf& e, Cdf&& ref, const std::filesystem::path& path,
                    const std::string& comment = {}) {
  io::CsvWriter csv(path);
  if (!comment.empty()) csv.comment(comment);
  csv.header({"r", "F_emp", "F_ref"});
  const auto v = e.values();
  const double n = static_cast<double>(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i + 1 < v.size() && v[i + 1] == v[i]) continue;
    csv.row(v[i], static_cast<double>(i + 1) / n, ref(v[i]));
  }
}

}  // namespace singval::stats
