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
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "singval/core/error.hpp"
#include "singval/core/rng.hpp"

namespace singval::ensemble {

/// Entry variances s_ij of an N x N matrix with independent entries.
///
/// Flat profiles have s_ij = 1/N. Doubly stochastic profiles hold an explicit
/// table with c/N <= s_ij <= C/N whose rows and columns of N*S sum to one.
class VarianceProfile {
 public:
  enum class Kind { Flat, DoublyStochastic };

  VarianceProfile() = default;

  static VarianceProfile flat(int n) {
    if (n < 1) throw ParameterError("variance profile: n must be positive");
    VarianceProfile p;
    p.n_ = n;
    return p;
  }

  /// Random doubly stochastic profile (rows and columns of S sum to one,
  /// c/N <= s_ij <= C/N): a positive seed table N s_ij drawn uniformly
  /// in [c, C] is balanced by alternating row/column renormalization, clipped
  /// to [c, C] and re-balanced until both the sums and the bounds hold.
  static VarianceProfile doubly_stochastic(int n, double c, double C, std::uint64_t seed) {
    if (n < 1) throw ParameterError("variance profile: n must be positive");
    if (!(c > 0.0) || !(c <= 1.0) || !(C >= 1.0) || !std::isfinite(C))
      throw ParameterError("variance profile: bounds must satisfy 0 < c <= 1 <= C");
    Philox gen(RngStream{seed, 0x5EEDu});
    Eigen::MatrixXd a(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) a(i, j) = c + (C - c) * gen.uniform();

    // a holds N s_ij, so every row and column must sum to N.
    const double target = static_cast<double>(n);
    constexpr int kRounds = 200;
    bool ok = false;
    for (int round = 0; round < kRounds && !ok; ++round) {
      balance(a, target);
      ok = true;
      for (Eigen::Index k = 0; k < a.size(); ++k) {
        double& v = a.data()[k];
        if (v < c) { v = c; ok = false; }
        if (v > C) { v = C; ok = false; }
      }
      if (!ok) continue;
      ok = max_sum_defect(a, target) <= 1e-12;
    }
    if (!ok) throw ParameterError("variance profile: balancing did not converge within bounds");

    VarianceProfile p;
    p.kind_ = Kind::DoublyStochastic;
    p.n_ = n;
    p.c_ = c;
    p.C_ = C;
    p.seed_ = seed;
    p.table_ = std::make_shared<const Eigen::MatrixXd>(a / static_cast<double>(n));
    return p;
  }

  Kind kind() const noexcept { return kind_; }
  int n() const noexcept { return n_; }
  double c() const noexcept { return c_; }
  double C() const noexcept { return C_; }
  std::uint64_t seed() const noexcept { return seed_; }

  double variance(int i, int j) const {
    return table_ ? (*table_)(i, j) : 1.0 / static_cast<double>(n_);
  }

  Eigen::MatrixXd matrix() const {
    if (table_) return *table_;
    return Eigen::MatrixXd::Constant(n_, n_, 1.0 / static_cast<double>(n_));
  }

  /// r = min_ij N s_ij.
  double min_scaled_variance() const {
    return table_ ? table_->minCoeff() * n_ : 1.0;
  }

  double max_scaled_variance() const {
    return table_ ? table_->maxCoeff() * n_ : 1.0;
  }

  /// Largest deviation of a row or column sum of S from one.
  double sum_defect() const {
    if (!table_) return 0.0;
    return max_sum_defect(*table_, 1.0);
  }

 private:
  // Sinkhorn scaling to row and column sums equal to target.
  static void balance(Eigen::MatrixXd& a, double target) {
    for (int it = 0; it < 100000; ++it) {
      a.array().colwise() *= target / a.rowwise().sum().array();
      a.array().rowwise() *= target / a.colwise().sum().array();
      if (max_sum_defect(a, target) <= 1e-13) return;
    }
  }

  // Relative deviation of row and column sums from target.
  static double max_sum_defect(const Eigen::MatrixXd& a, double target) {
    const double rows = (a.rowwise().sum().array() / target - 1.0).abs().maxCoeff();
    const double cols = (a.colwise().sum().array() / target - 1.0).abs().maxCoeff();
    return std::max(rows, cols);
  }

  Kind kind_ = Kind::Flat;
  int n_ = 0;
  double c_ = 1.0;
  double C_ = 1.0;
  std::uint64_t seed_ = 0;
  std::shared_ptr<const Eigen::MatrixXd> table_;
};

/// One nonzero covariance offset in an "offsets" correlation profile.
struct OffsetValue {
  int dk = 0;
  int dl = 0;
  double value = 0.0;
};

/// Correlation structure xi_{ijkl} = phi(i/N, j/N, k - i, l - j) of a
/// correlated ensemble with E[x_ij x_kl] = xi_{ijkl} / N.
///
/// phi is truncated to zero when max(|k - i|, |l - j|) > radius. The constants
/// c1, c2 bound |xi| <= c1 exp(-c2 * distance) and c0 is the floor of the
/// covariance operator in units of 1/N.
class CorrelationProfile {
 public:
  using Evaluator = std::function<double(double theta, double vartheta, int dk, int dl)>;

  CorrelationProfile() : CorrelationProfile(independent()) {}

  CorrelationProfile(std::string family, Evaluator phi, int radius, double c0, double c1,
                     double c2)
      : family_(std::move(family)), phi_(std::move(phi)), radius_(radius), c0_(c0), c1_(c1),
        c2_(c2) {
    if (radius_ < 0) throw ParameterError("correlation profile: radius must be >= 0");
    if (!(c0_ > 0.0) || !(c1_ > 0.0) || !(c2_ > 0.0))
      throw ParameterError("correlation profile: c0, c1, c2 must be positive");
  }

  /// Independent entries with unit variance profile.
  static CorrelationProfile independent(double c0 = 0.5) {
    return {"independent", [](double, double, int dk, int dl) {
              return (dk == 0 && dl == 0) ? 1.0 : 0.0;
            },
            0, c0, 1.0, 1.0};
  }

  /// Translation-invariant finite list of offsets; (0,0) defaults to 1 and
  /// each (dk, dl) is mirrored to (-dk, -dl).
  static CorrelationProfile offsets(std::vector<OffsetValue> entries, double c0 = 0.5,
                                    double c1 = 1.0, double c2 = 1.0) {
    bool has_origin = false;
    int radius = 0;
    for (const auto& e : entries) {
      if (e.dk == 0 && e.dl == 0) has_origin = true;
      radius = std::max({radius, std::abs(e.dk), std::abs(e.dl)});
    }
    if (!has_origin) entries.push_back({0, 0, 1.0});
    auto table = std::make_shared<const std::vector<OffsetValue>>(entries);
    CorrelationProfile p{"offsets",
                         [table](double, double, int dk, int dl) {
                           for (const auto& e : *table)
                             if ((e.dk == dk && e.dl == dl) || (e.dk == -dk && e.dl == -dl))
                               return e.value;
                           return 0.0;
                         },
                         radius, c0, c1, c2};
    p.offsets_ = std::move(entries);
    return p;
  }

  /// phi = c1 exp(-c2 max(|dk|, |dl|)), truncated at radius.
  static CorrelationProfile exponential(double c1, double c2, int radius, double c0 = 0.5) {
    return {"exponential",
            [c1, c2](double, double, int dk, int dl) {
              return c1 * std::exp(-c2 * std::max(std::abs(dk), std::abs(dl)));
            },
            radius, c0, c1, c2};
  }

  const std::string& family() const noexcept { return family_; }
  int radius() const noexcept { return radius_; }
  double c0() const noexcept { return c0_; }
  double c1() const noexcept { return c1_; }
  double c2() const noexcept { return c2_; }
  const std::vector<OffsetValue>& offset_values() const noexcept { return offsets_; }

  /// xi_{ijkl} for zero-based indices in an N x N matrix.
  double xi(int n, int i, int j, int k, int l) const {
    const int dk = k - i;
    const int dl = l - j;
    if (std::max(std::abs(dk), std::abs(dl)) > radius_) return 0.0;
    return phi_((i + 1) / static_cast<double>(n), (j + 1) / static_cast<double>(n), dk, dl);
  }

 private:
  std::string family_;
  Evaluator phi_;
  int radius_ = 0;
  double c0_ = 0.5;
  double c1_ = 1.0;
  double c2_ = 1.0;
  std::vector<OffsetValue> offsets_;
};

}  // namespace singval::ensemble
