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

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <numbers>

#include "singval/ensemble/sample.hpp"
#include "singval/freeconv/density.hpp"
#include "singval/freeconv/free_convolution.hpp"
#include "singval/freeconv/mde.hpp"
#include "singval/freeconv/semicircle.hpp"

namespace {

using namespace singval;
using namespace singval::freeconv;
using std::numbers::pi;

std::vector<SpectralPoint> upper_grid() {
  std::vector<SpectralPoint> g;
  for (double e : {-3.0, -1.9, -1.0, -0.2, 0.0, 0.5, 1.5, 2.0, 2.5})
    for (double eta : {1e-3, 0.05, 0.5, 2.0, 20.0}) g.emplace_back(e, eta);
  return g;
}

TEST(Semicircle, ClosedFormValues) {
  const auto m1 = solve_semicircle(SpectralPoint(0, 1));
  EXPECT_NEAR(m1.real(), 0, 1e-15);
  EXPECT_NEAR(m1.imag(), (std::sqrt(5.0) - 1) / 2, 1e-15);
  const auto m2 = solve_semicircle(SpectralPoint(0, 2));
  EXPECT_NEAR(m2.imag(), std::sqrt(2.0) - 1, 1e-15);
  EXPECT_NEAR(solve_semicircle(SpectralPoint(0, 1e-9)).imag(), 1.0, 1e-8);
  EXPECT_NEAR(semicircle_density(0), 1 / pi, 1e-16);
}

TEST(Semicircle, ResidualAndHerglotzOnGrid) {
  for (const auto& p : upper_grid()) {
    const auto m = solve_semicircle(p);
    EXPECT_GT(m.imag(), 0);
    EXPECT_LE(semicircle_residual(p, m), 1e-14);
  }
  for (double e : {-50.0, 1e3}) EXPECT_LE(semicircle_residual(SpectralPoint(e, 1e-6), solve_semicircle(SpectralPoint(e, 1e-6))), 1e-14);
}

TEST(Mfc, ZeroDataIsSemicircle) {
  const InitialData zero(std::vector<double>(10, 0.0));
  for (const auto& p : upper_grid()) {
    const auto r = solve_mfc(zero, 1.0, p);
    EXPECT_LT(std::abs(r.m - solve_semicircle(p)), 1e-11) << p.energy() << " " << p.eta();
    EXPECT_LE(r.residual, 1e-12);
  }
}

TEST(Mfc, TimeZeroIsEmpiricalTransform) {
  const InitialData data({0.2, 0.9, 1.4, 3.0});
  for (const auto& p : upper_grid()) {
    const auto r = solve_mfc(data, 0.0, p);
    EXPECT_LT(std::abs(r.m - spectral::stieltjes(data.symmetrized(), p)), 1e-12);
  }
}

TEST(Mfc, MultiStartOracle) {
  const InitialData data({1.0});
  const SpectralPoint z(0, 1);
  const auto r = solve_mfc(data, 0.5, z);
  // Plain undamped iteration from three starts.
  for (Complex start : {Complex(0, 1), Complex(2, 0.1), Complex(-1, 5)}) {
    Complex m = start;
    for (int k = 0; k < 4096; ++k) m = 0.5 * (1.0 / (1.0 - z.z() - 0.5 * m) + 1.0 / (-1.0 - z.z() - 0.5 * m));
    EXPECT_LT(std::abs(m - r.m), 1e-12);
  }
}

TEST(Mfc, HerglotzAndResidualOnGrid) {
  const auto data = InitialData::semicircle_quantiles(64);
  const auto sol = solve_mfc_grid(data, 0.1, upper_grid());
  for (std::size_t k = 0; k < sol.grid.size(); ++k) {
    EXPECT_GT(sol.m[k].imag(), 0);
    EXPECT_LE(sol.residual[k], 1e-12);
    EXPECT_LE(mfc_residual(data, 0.1, sol.grid[k], sol.m[k]), 1e-12);
  }
}

TEST(Mfc, ContinuationConsistency) {
  const auto data = InitialData::semicircle_quantiles(32);
  for (double e : {0.0, 0.7, 1.9}) {
    for (double eta : {0.2, 0.02, 0.004}) {
      const auto a = solve_mfc(data, 0.2, SpectralPoint(e, eta));
      const auto stepped = solve_mfc_from(data, 0.2, SpectralPoint(e, eta / 2), a.m);
      const auto cold = solve_mfc(data, 0.2, SpectralPoint(e, eta / 2));
      EXPECT_LT(std::abs(stepped.m - cold.m), 1e-10);
    }
  }
}

TEST(Mfc, Preconditions) {
  const InitialData data({1.0});
  EXPECT_THROW(solve_mfc(data, -0.1, SpectralPoint(0, 1)), ArgumentError);
  EXPECT_THROW(InitialData({-1.0}), ArgumentError);
  EXPECT_THROW(InitialData(std::vector<double>{}), ArgumentError);
  EXPECT_THROW(InitialData({std::pow(2.0, 11)}), ArgumentError);  // 2048 > 1^10
  MfcOptions tight;
  tight.max_iterations = 1;
  tight.damping = 1e-6;
  const auto big = InitialData::semicircle_quantiles(50);
  try {
    solve_mfc_from(big, 5.0, SpectralPoint(0.1, 1e-3), Complex(50, 1e-6), tight);
    FAIL();
  } catch (const SolverError& e) {
    EXPECT_GT(e.last_defect(), 1e-12);
  }
}

TEST(Mfc, SweepMatchesPointSolves) {
  const auto data = InitialData::semicircle_quantiles(40);
  const auto energies = energy_grid(-3, 3, 0.01);
  const auto sweep = solve_mfc_sweep(data, 0.1, energies, 1e-3);
  for (std::size_t k = 0; k < energies.size(); k += 37) {
    const auto p = solve_mfc(data, 0.1, SpectralPoint(energies[k], 1e-3));
    EXPECT_LT(std::abs(p.m - sweep.m[k]), 1e-10);
    EXPECT_LE(sweep.residual[k], 1e-12);
  }
}

TEST(Density, SemicircleValues) {
  const std::vector<SpectralPoint> grid{{0, kDensityEta}, {3, kDensityEta}, {-3, kDensityEta},
                                        {1.2, kDensityEta}, {-1.2, kDensityEta}};
  const auto rho = density(semicircle_solution(grid));
  EXPECT_NEAR(rho.rho[0], 1 / pi, 1e-3);
  EXPECT_LE(rho.rho[1], 1e-3);
  EXPECT_LE(rho.rho[2], 1e-3);
  EXPECT_NEAR(rho.rho[3], rho.rho[4], 1e-12);
  for (double v : rho.rho) EXPECT_GE(v, 0);
}

TEST(Density, SymmetricForSymmetricData) {
  const InitialData data({0.3, 0.8, 1.1});
  const auto energies = energy_grid(-2, 2, 0.05);
  const auto rho = density(solve_mfc_sweep(data, 0.3, energies, kDensityEta));
  const std::size_t n = energies.size();
  for (std::size_t k = 0; k < n; ++k) EXPECT_NEAR(rho.rho[k], rho.rho[n - 1 - k], 1e-12);
}

double semicircle_cdf_oracle(double x) {
  return 0.5 + (x * std::sqrt(4 - x * x) / 4 + std::asin(x / 2)) / pi;
}

TEST(ClassicalLocations, SemicircleQuantileOracle) {
  SpectralDensity rho;
  rho.energy = energy_grid(-2, 2, 1e-4);
  for (double e : rho.energy) rho.rho.push_back(semicircle_density(e));
  const auto gamma = classical_locations(rho, 2);
  boost::math::tools::eps_tolerance<double> tol(50);
  std::uintmax_t it = 200;
  const auto root = boost::math::tools::toms748_solve(
      [](double x) { return semicircle_cdf_oracle(x) - 0.75; }, 0.0, 2.0, tol, it);
  const double want = 0.5 * (root.first + root.second);
  EXPECT_NEAR(gamma[2], want, 1e-6);
  EXPECT_NEAR(semicircle_quantile(0.75), want, 1e-12);
  EXPECT_NEAR(gamma[1], 0.0, 1e-8);
  EXPECT_NEAR(gamma[-1], -gamma[2], 1e-8);
}

TEST(ClassicalLocations, AntisymmetryAndOrder) {
  SpectralDensity rho;
  rho.energy = energy_grid(-2, 2, 1e-4);
  for (double e : rho.energy) rho.rho.push_back(semicircle_density(e));
  const int n = 50;
  const auto gamma = classical_locations(rho, n);
  EXPECT_NEAR(gamma[1], 0.0, 1e-8);
  // The lower thresholds sit one level below the upper ones, so the mirror of
  // gamma_{-i} is gamma_{i+1}.
  EXPECT_NEAR(gamma[-n], -2.0, 1e-8);
  for (int i = 1; i <= n; ++i) {
    if (i < n) {
      EXPECT_NEAR(gamma[-i], -gamma[i + 1], 1e-8);
    }
    if (i > 1) {
      EXPECT_GE(gamma[i], gamma[i - 1]);
      EXPECT_LE(gamma[-i], gamma[-(i - 1)]);
    }
    EXPECT_NEAR(gamma[i], semicircle_quantile((n + i - 1) / (2.0 * n)), 1e-6);
  }
}

TEST(ClassicalLocations, MassDeficitRejected) {
  SpectralDensity rho;
  rho.energy = energy_grid(-1, 1, 1e-3);
  rho.rho.assign(rho.energy.size(), 0.4);
  EXPECT_THROW(classical_locations(rho, 4), NormalizationError);
}

TEST(ClassicalLocations, TimeZeroRecoversData) {
  const std::vector<double> v{0.5, 1.0, 1.5, 2.0};
  const InitialData data(v);
  const double eta = 1e-3;
  const auto energies = energy_grid(-60, 60, 1e-4);
  const auto rho = density(solve_mfc_sweep(data, 0.0, energies, eta));
  const CumulativeDensity cdf(rho, 1e-3);
  const int n = data.n();
  // Mid-level of each atom's step recovers the atom; the gap-levels land
  // between consecutive atoms.
  const auto gamma = classical_locations(rho, n, {1e-3, 1e-8});
  for (int i = 1; i <= n; ++i) {
    EXPECT_NEAR(cdf.quantile((n + i - 0.5) / (2.0 * n)), v[i - 1], 1e-5);
    EXPECT_NEAR(cdf.quantile((n - i + 0.5) / (2.0 * n)), -v[i - 1], 1e-5);
    EXPECT_LT(gamma[i], v[i - 1]);
    if (i > 1) {
      EXPECT_GT(gamma[i], v[i - 2]);
    }
  }
  EXPECT_NEAR(gamma[1], 0.0, 1e-8);
}

TEST(Regularity, SemicircleQuantilesAreRegular) {
  const int n = 200;
  const auto rep = check_regularity(InitialData::semicircle_quantiles(n), 1.0 / n, 0.5);
  EXPECT_TRUE(rep.holds) << rep.c_low << " " << rep.C_high;
  EXPECT_GE(rep.c_low, 0.05);
  EXPECT_LE(rep.C_high, 20);
}

TEST(Regularity, DistantSpectrumFails) {
  const auto rep = check_regularity(InitialData(std::vector<double>(20, 1e6)), 0.05, 0.1);
  EXPECT_FALSE(rep.holds);
  EXPECT_LT(rep.c_low, 1e-6);
}

TEST(Regularity, GapFails) {
  const auto rep = check_regularity(InitialData({1.0, 1.2, 1.5, 2.0}), 0.01, 0.5);
  EXPECT_FALSE(rep.holds);
}

TEST(Regularity, Preconditions) {
  const InitialData d({1.0});
  EXPECT_THROW(check_regularity(d, 0, 1), ArgumentError);
  EXPECT_THROW(check_regularity(d, 11, 1), ArgumentError);
  EXPECT_THROW(check_regularity(d, 1, 0), ArgumentError);
}

TEST(Stability, Examples) {
  const InitialData zero(std::vector<double>(8, 0.0));
  const SpectralPoint z(0, 1);
  const auto m = solve_mfc(zero, 1.0, z).m;
  const auto rep = stability_quantities(zero, 1.0, z, m);
  EXPECT_NEAR(rep.min_distance, (1 + std::sqrt(5.0)) / 2, 1e-12);
  const InitialData d({0.4, 1.0});
  EXPECT_EQ(stability_quantities(d, 0.0, z, solve_mfc(d, 0.0, z).m).derivative_gap, 1.0);
}

TEST(Stability, BulkBandForSemicircleData) {
  const auto data = InitialData::semicircle_quantiles(100);
  for (double e : {-1.0, -0.5, 0.0, 0.5, 1.0})
    for (double eta : {0.01, 0.05, 0.2}) {
      const SpectralPoint p(e, eta);
      const auto rep = stability_quantities(data, 0.1, p, solve_mfc(data, 0.1, p).m);
      EXPECT_GE(rep.derivative_gap, 0.1);
      EXPECT_LE(rep.derivative_gap, 10);
      EXPECT_GE(rep.min_distance, 0.1 * 0.1 * 0.5);
    }
}

void expect_im_psd(const Eigen::MatrixXcd& m) {
  const Eigen::MatrixXcd im = (m - m.adjoint()) / Complex(0, 2);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(im, Eigen::EigenvaluesOnly);
  EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12);
}

TEST(Mde, IndependentProfileIsSemicircle) {
  const int n = 12;
  for (const auto& p : {SpectralPoint(0, 1), SpectralPoint(1.3, 0.05), SpectralPoint(-2.5, 0.3)}) {
    const auto sol = solve_mde(ensemble::CorrelationProfile::independent(), n, p);
    const auto msc = solve_semicircle(p);
    EXPECT_LE(sol.residual, 1e-10);
    for (int i = 0; i < 2 * n; ++i)
      for (int k = 0; k < 2 * n; ++k)
        EXPECT_LT(std::abs(sol.M(i, k) - (i == k ? msc : Complex(0))), 1e-8);
    expect_im_psd(sol.M);
  }
}

TEST(Mde, LargeEtaExpansion) {
  const SpectralPoint p(0, 10);
  const auto sol = solve_mde(ensemble::CorrelationProfile::offsets({{1, 1, 0.1}}), 16, p);
  const Eigen::MatrixXcd ref = (-1.0 / p.z()) * Eigen::MatrixXcd::Identity(32, 32);
  EXPECT_LE((sol.M - ref).norm() / ref.norm(), 0.02);
}

TEST(Mde, WeakCorrelationMatchesMonteCarlo) {
  const int n = 64;
  const auto profile = ensemble::CorrelationProfile::offsets({{1, 1, 0.1}});
  const SpectralPoint z(0, 1);
  const auto sol = solve_mde(profile, n, z);
  EXPECT_LE(sol.residual, 1e-10);
  expect_im_psd(sol.M);
  EXPECT_LT(std::abs(sol.normalized_trace() - solve_semicircle(z)), 0.05);
  const auto spec = std::make_shared<const ensemble::EnsembleSpec>(ensemble::EnsembleSpec::correlated_ensemble(n, profile));
  Complex mc = 0;
  const int draws = 200;
  const Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(2 * n, 2 * n);
  for (int k = 0; k < draws; ++k) {
    const auto s = ensemble::sample(spec, RngStream{91, 0}.child(k));
    const Eigen::MatrixXcd h = spectral::symmetrize(s).cast<Complex>();
    mc += (h - z.z() * id).inverse().trace() / static_cast<double>(2 * n);
  }
  mc /= draws;
  EXPECT_LT(std::abs(sol.normalized_trace() - mc), 0.05);
}

TEST(Mde, XiMapStructure) {
  // Independent entries: the off-diagonal blocks of Xi vanish for diagonal M.
  const int n = 3;
  const auto terms = covariance_terms(ensemble::CorrelationProfile::independent(), n);
  EXPECT_EQ(terms.size(), 9u);
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Identity(6, 6);
  m(4, 4) = 2.0;
  const auto xi = mde_xi(terms, n, m);
  for (int a = 0; a < 3; ++a) EXPECT_LT(std::abs(xi(a, a) - Complex(4.0 / 3)), 1e-15);
  for (int b = 3; b < 6; ++b) EXPECT_LT(std::abs(xi(b, b) - Complex(1.0)), 1e-15);
  EXPECT_LT(xi.block(0, 3, 3, 3).norm(), 1e-15);
}

TEST(Mde, Preconditions) {
  const auto p = ensemble::CorrelationProfile::independent();
  EXPECT_THROW(solve_mde(p, 65, SpectralPoint(0, 1)), ArgumentError);
  EXPECT_THROW(solve_mde(p, 8, SpectralPoint(0, 0.001)), ArgumentError);
}

}  // namespace
