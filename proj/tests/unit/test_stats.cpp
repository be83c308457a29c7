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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_dec_float.hpp>

#include "singval/core/rng.hpp"
#include "singval/ensemble/spec.hpp"
#include "singval/freeconv/density.hpp"
#include "singval/stats/campaign.hpp"
#include "singval/stats/ecdf.hpp"

namespace {

using namespace singval;
using namespace singval::stats;
using ensemble::EnsembleSpec;

// Brute-force sup distance: both one-sided limits at every jump, plus
// midpoints between jumps.
template <class F, class G>
double brute_sup(std::vector<double> pts, F&& f, G&& g) {
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  double d = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double left = std::nextafter(pts[i], -INFINITY);
    d = std::max({d, std::abs(f(pts[i]) - g(pts[i])), std::abs(f(left) - g(left))});
    if (i + 1 < pts.size()) {
      const double mid = 0.5 * (pts[i] + pts[i + 1]);
      d = std::max(d, std::abs(f(mid) - g(mid)));
    }
  }
  return d;
}

double step_cdf(const std::vector<double>& v, double x) {
  return static_cast<double>(std::count_if(v.begin(), v.end(), [&](double y) { return y <= x; })) /
         static_cast<double>(v.size());
}

TEST(ReferenceCdf, ValuesAgainstHighPrecision) {
  using boost::multiprecision::cpp_dec_float_50;
  for (double r : {0.0, 0.25, 1.0, 2.0, 3.5}) {
    const cpp_dec_float_50 x(r);
    const cpp_dec_float_50 f = 1 - exp(-(x * x / 2 + x));
    EXPECT_NEAR(reference_cdf(r), f.convert_to<double>(), 1e-16) << r;
  }
  EXPECT_EQ(reference_cdf(0.0), 0.0);
  EXPECT_NEAR(reference_cdf(1.0), 0.77687, 5e-6);
  EXPECT_NEAR(reference_cdf(2.0), 0.98168, 5e-6);
  EXPECT_EQ(reference_cdf(INFINITY), 1.0);
  EXPECT_THROW(reference_cdf(-1e-9), ArgumentError);
}

TEST(ReferenceCdf, MonotoneOnFineGrid) {
  double prev = 0.0;
  for (int k = 0; k <= 10000; ++k) {
    const double f = reference_cdf(k * 1e-3);
    ASSERT_GE(f, prev);
    ASSERT_LE(f, 1.0);
    prev = f;
  }
}

TEST(ReferenceCdf, QuantileInverts) {
  for (double u : {0.0, 1e-12, 0.1, 0.5, 0.9, 0.999999}) {
    const double r = reference_quantile(u);
    EXPECT_NEAR(reference_cdf(r), u, 1e-14 * std::max(1.0, u)) << u;
    // Quadratic formula as written, away from cancellation.
    if (u > 0.01) {
      EXPECT_NEAR(r, -1.0 + std::sqrt(1.0 - 2.0 * std::log(1.0 - u)), 1e-13);
    }
  }
  EXPECT_EQ(reference_quantile(1.0), INFINITY);
  EXPECT_THROW(reference_quantile(1.5), ArgumentError);
}

TEST(Ecdf, RightContinuousStep) {
  const Ecdf e({3.0, 1.0, 2.0, 2.0});
  EXPECT_EQ(e.n(), 4u);
  EXPECT_EQ(e(0.5), 0.0);
  EXPECT_EQ(e(1.0), 0.25);
  EXPECT_EQ(e(std::nextafter(2.0, 0.0)), 0.25);
  EXPECT_EQ(e(2.0), 0.75);
  EXPECT_EQ(e(10.0), 1.0);
  EXPECT_TRUE(std::is_sorted(e.values().begin(), e.values().end()));
  EXPECT_THROW(Ecdf(std::vector<double>{}), ArgumentError);
  EXPECT_THROW(Ecdf({1.0, NAN}), DataError);
}

TEST(Ks, ExtremalArrangementGivesHalfStep) {
  for (int n : {1, 7, 100}) {
    std::vector<double> x;
    for (int k = 1; k <= n; ++k) x.push_back(reference_quantile((k - 0.5) / n));
    const auto r = ks_one_sample(x, reference_cdf);
    const double brute = brute_sup(x, [&](double t) { return step_cdf(x, t); },
                                   [](double t) { return reference_cdf(std::max(t, 0.0)); });
    EXPECT_NEAR(r.statistic, 1.0 / (2 * n), 1e-12);
    EXPECT_NEAR(r.statistic, brute, 1e-12);
    EXPECT_EQ(r.n, static_cast<std::size_t>(n));
    EXPECT_NEAR(r.dkw_band, std::sqrt(std::log(40.0) / (2.0 * n)), 1e-15);
  }
}

TEST(Ks, OneSampleMatchesBruteForceWithTies) {
  Philox gen({11, 0});
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(1 + trial % 13);
    for (auto& v : x) v = std::round(gen.uniform() * 8.0) / 4.0;
    const auto r = ks_one_sample(x, reference_cdf);
    const double brute = brute_sup(x, [&](double t) { return step_cdf(x, t); },
                                   [](double t) { return reference_cdf(std::max(t, 0.0)); });
    EXPECT_NEAR(r.statistic, brute, 1e-12);
    EXPECT_GE(r.statistic, 0.0);
    EXPECT_LE(r.statistic, 1.0);
  }
}

TEST(Ks, TwoSampleMatchesBruteForce) {
  Philox gen({12, 0});
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(1 + trial % 9), b(1 + trial % 5);
    for (auto& v : a) v = std::round(gen.uniform() * 6.0);
    for (auto& v : b) v = std::round(gen.uniform() * 6.0) + 0.5 * (trial % 2);
    std::vector<double> pts = a;
    pts.insert(pts.end(), b.begin(), b.end());
    const auto r = ks_two_sample(a, b);
    const double brute =
        brute_sup(pts, [&](double t) { return step_cdf(a, t); }, [&](double t) { return step_cdf(b, t); });
    EXPECT_NEAR(r.statistic, brute, 1e-12);
    EXPECT_EQ(r.m, b.size());
  }
}

TEST(Ks, TrivialCases) {
  const std::vector<double> a{0.1, 0.5, 0.7}, b{2.0, 3.0};
  EXPECT_EQ(ks_two_sample(a, a).statistic, 0.0);
  EXPECT_EQ(ks_two_sample(a, b).statistic, 1.0);
  EXPECT_THROW(ks_two_sample(a, {}), ArgumentError);
  EXPECT_THROW(ks_one_sample(std::vector<double>{}, reference_cdf), ArgumentError);
}

TEST(Ks, DkwBandHoldsForReferenceSamples) {
  constexpr int kReps = 1000;
  constexpr int kN = 200;
  int exceed = 0;
  for (int rep = 0; rep < kReps; ++rep) {
    Philox gen(RngStream{21, 0}.child(static_cast<std::uint64_t>(rep)));
    std::vector<double> x(kN);
    for (auto& v : x) v = reference_quantile(gen.uniform());
    exceed += !ks_one_sample(x, reference_cdf).within_band();
  }
  EXPECT_LE(exceed, 70) << "exceedances " << exceed << " / " << kReps;
}

TEST(Ks, TwoGaussianCampaignsNullCalibration) {
  constexpr int kReps = 20;
  const auto spec = EnsembleSpec::gaussian(8);
  int exceed = 0;
  for (int rep = 0; rep < kReps; ++rep) {
    const RngStream s{31, static_cast<std::uint64_t>(rep)};
    const auto a = smallest_scaled(spec, 2000, s.child(1), 1, 1, spectral::SvdMethod::Bidiagonal);
    const auto b = smallest_scaled(spec, 2000, s.child(2), 1, 1, spectral::SvdMethod::Bidiagonal);
    exceed += ks_two_sample(a[0], b[0]).statistic > 0.05;
  }
  EXPECT_LE(exceed, kReps / 10);
}

TEST(Quantile, Type7) {
  EXPECT_EQ(quantile({3.0, 1.0, 2.0}, 0.5), 2.0);
  EXPECT_DOUBLE_EQ(quantile({1.0, 2.0}, 0.25), 1.25);
  EXPECT_EQ(quantile({1.0, 2.0, 9.0}, 1.0), 9.0);
  EXPECT_THROW(quantile({}, 0.5), ArgumentError);
}

TEST(Campaign, RejectsTooFewSamples) {
  EXPECT_THROW(universality_campaign(EnsembleSpec::gaussian(8), 0, {1, 1}), ArgumentError);
  EXPECT_THROW(universality_campaign(EnsembleSpec::gaussian(8), 99, {1, 1}), ArgumentError);
}

TEST(Campaign, WorkerCountDoesNotChangeResults) {
  const auto spec = EnsembleSpec::sparse_ensemble(32, 3.0, 0.0);
  CampaignOptions one, three;
  one.workers = 1;
  three.workers = 3;
  const auto a = universality_campaign(spec, 120, {5, 9}, one);
  const auto b = universality_campaign(spec, 120, {5, 9}, three);
  EXPECT_EQ(a.scaled, b.scaled);
  EXPECT_EQ(*a.gaussian, *b.gaussian);
  ASSERT_EQ(a.ks_gaussian.size(), 4u);
  EXPECT_EQ(a.ks_gaussian[0].statistic, b.ks_gaussian[0].statistic);
  EXPECT_EQ(a.ks_reference.statistic, b.ks_reference.statistic);
  for (std::size_t k = 1; k < a.scaled.size(); ++k)
    for (std::size_t s = 0; s < a.n_samples; ++s) EXPECT_GE(a.scaled[k][s], a.scaled[k - 1][s]);
}

TEST(Campaign, GaussianSmallNCloseToReferenceLaw) {
  const auto r = universality_campaign(EnsembleSpec::gaussian(64), 800, {6, 0});
  EXPECT_TRUE(r.ks_gaussian.empty());
  EXPECT_LE(r.ks_reference.statistic, 0.06);
  EXPECT_EQ(r.ecdf(1).n(), 800u);
}

TEST(Campaign, SlopeFitReportsOneEntryPerDimension) {
  const auto fit = ks_decay_slope([](int n) { return EnsembleSpec::gaussian(n); }, {8, 16}, 200, {7, 0});
  ASSERT_EQ(fit.ks.size(), 2u);
  EXPECT_TRUE(std::isfinite(fit.slope));
}

TEST(LocalLaw, ZeroTimeDeformedIsExact) {
  const auto v = freeconv::InitialData::semicircle_quantiles(32);
  const LocalLawGrid grid{{-1.0, 0.0, 0.5}, {0.2, 1.0}};
  const auto r = local_law_check(EnsembleSpec::gaussian(32), DeformedMode{v, 0.0}, grid, 5, {8, 0});
  for (const auto& row : r.deviation)
    for (double d : row) EXPECT_EQ(d, 0.0);
  EXPECT_EQ(r.empirical_constant(), 0.0);
}

TEST(LocalLaw, GaussianMacroscopicEta) {
  const LocalLawGrid grid{{0.0, 0.5, 1.0}, {1.0}};
  const auto r = local_law_check(EnsembleSpec::gaussian(512), SparseMode{}, grid, 200, {9, 0});
  for (std::size_t p = 0; p < r.grid.size(); ++p) EXPECT_LE(r.deviation_quantile(p, 0.95), 0.05);
}

TEST(LocalLaw, DomainIsEnforced) {
  const auto spec = EnsembleSpec::gaussian(64);
  EXPECT_THROW(local_law_check(spec, SparseMode{}, {{0.0}, {1.0 / 64}}, 2, {1, 0}), ConfigurationError);
  EXPECT_THROW(local_law_check(spec, SparseMode{}, {{1.9}, {0.5}}, 2, {1, 0}), ConfigurationError);
  EXPECT_TRUE(local_law_domain_issues(64, {{0.0}, {0.5}}).empty());
  EXPECT_THROW(local_law_check(spec, DeformedMode{freeconv::InitialData::semicircle_quantiles(8), 0.1},
                               {{0.0}, {0.5}}, 2, {1, 0}),
               DimensionError);
}

TEST(LocalLaw, DeformedRatioMedianScaleCovariant) {
  constexpr int kN = 128;
  const auto v = freeconv::InitialData::semicircle_quantiles(kN);
  const double eta = std::pow(kN, -0.6);
  const LocalLawGrid grid{{0.0, 0.7}, {eta, 2 * eta}};
  const auto r = local_law_check(EnsembleSpec::gaussian(kN), DeformedMode{v, 0.1}, grid, 60, {10, 0});
  for (std::size_t e = 0; e < 2; ++e) {
    const double m1 = r.ratio_quantile(e, 0.5), m2 = r.ratio_quantile(e + 2, 0.5);
    EXPECT_LE(std::max(m1, m2) / std::min(m1, m2), 2.0) << m1 << " " << m2;
  }
}

TEST(Rigidity, TrivialCases) {
  constexpr int kN = 40;
  const auto gamma = freeconv::semicircle_locations(kN);
  std::vector<std::vector<double>> spectra{gamma.positive()};
  auto r = rigidity_check(spectra, gamma);
  EXPECT_EQ(r.max, 0.0);
  EXPECT_EQ(r.indices.size(), 20u);
  spectra[0][6] += 5.0 / kN;
  r = rigidity_check(spectra, gamma);
  EXPECT_NEAR(r.max, 5.0, 1e-12);
  EXPECT_EQ(r.argmax, 7);
  spectra[0].pop_back();
  EXPECT_THROW(rigidity_check(spectra, gamma), DimensionError);
}

TEST(Rigidity, GaussianBulkPercentile) {
  constexpr int kN = 256;
  const auto spec = std::make_shared<const EnsembleSpec>(EnsembleSpec::gaussian(kN));
  std::vector<std::vector<double>> spectra(200);
  parallel_for(spectra.size(), default_workers(), [&](std::size_t s) {
    spectra[s] = spectral::singular_values(ensemble::sample(spec, RngStream{12, 0}.child(s)).entries,
                                           spectral::SvdMethod::Bidiagonal);
  });
  const auto r = rigidity_check(spectra, freeconv::semicircle_locations(kN), 0.5);
  EXPECT_LE(r.quantile(0.99), 25.0);
}

TEST(SemicircleLocations, MatchDensityQuantiles) {
  constexpr int kN = 16;
  std::vector<spectral::SpectralPoint> grid;
  for (double e : freeconv::energy_grid(-2.2, 2.2, 1e-3)) grid.emplace_back(e, freeconv::kDensityEta);
  const auto rho = freeconv::density(freeconv::semicircle_solution(grid));
  const auto a = freeconv::classical_locations(rho, kN, {2e-2, 1e-10});
  const auto b = freeconv::semicircle_locations(kN);
  // gamma_{-N} sits at level 0, the left end of whatever grid is used.
  for (int i = 1; i < kN; ++i) {
    EXPECT_NEAR(a[i], b[i], 2e-3) << i;
    EXPECT_NEAR(a[-i], b[-i], 2e-3) << i;
  }
}

TEST(EcdfCsv, Columns) {
  const auto path = std::filesystem::temp_directory_path() / "singval_ecdf_test.csv";
  write_ecdf_csv(Ecdf({0.5, 0.5, 1.0}), reference_cdf, path);
  std::ifstream in(path);
  std::string header, l1, l2, l3;
  std::getline(in, header);
  std::getline(in, l1);
  std::getline(in, l2);
  EXPECT_EQ(header, "r,F_emp,F_ref");
  EXPECT_EQ(l1.substr(0, 4), "0.5,");
  EXPECT_FALSE(std::getline(in, l3));
  std::filesystem::remove(path);
}

}  // namespace
