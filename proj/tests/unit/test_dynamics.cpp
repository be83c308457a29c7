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
#include <numeric>

#include "singval/dynamics/dbm.hpp"
#include "singval/dynamics/flows.hpp"
#include "singval/ensemble/sample.hpp"
#include "singval/freeconv/free_convolution.hpp"

namespace {

using namespace singval;
using namespace singval::dynamics;

TEST(Drift, TwoParticles) {
  const std::vector<double> s{1, 2};
  const auto d = drift(s);
  EXPECT_NEAR(d[0], -1.0 / 6, 1e-16);
  EXPECT_NEAR(d[1], 0.25 * (1.0 + 1.0 / 3), 1e-16);
  EXPECT_EQ(drift(std::vector<double>{0.7})[0], 0.0);
}

TEST(DbmStep, ZeroNoiseEuler) {
  DbmState st({1, 2});
  Philox gen({1, 1});
  const std::vector<double> db{0, 0};
  dbm_step(st, 1e-4, db, gen);
  EXPECT_NEAR(st.positions()[0], 1 - 1e-4 / 6, 1e-16);
  EXPECT_DOUBLE_EQ(st.t(), 1e-4);
  // Zero-noise complex step has the same drift.
  DbmState c({1, 2});
  complex_variant_step(c, 1e-4, db, gen);
  EXPECT_EQ(c.positions(), st.positions());
}

TEST(DbmState, InvariantsAndMirror) {
  EXPECT_THROW(DbmState({2, 1}), ArgumentError);
  EXPECT_THROW(DbmState({-0.1, 1}), ArgumentError);
  EXPECT_THROW(DbmState({1, 1}), ArgumentError);
  const DbmState st({0.5, 1.5});
  EXPECT_EQ(st[-2], -1.5);
  EXPECT_EQ(st[1], 0.5);
  EXPECT_THROW(st[0], ArgumentError);
  EXPECT_DOUBLE_EQ(st.controller().dt_max, 1e-2 / 4);
  EXPECT_DOUBLE_EQ(st.controller().dt_min, 1e-12);
}

TEST(DbmStep, CloseKickGoesImplicitAndNeverCrosses) {
  DbmState st({0.1, 0.1001, 1.0});
  Philox gen({3, 3});
  const std::vector<double> db{0.05, -0.05, 0.0};
  const auto stats = dbm_step(st, 1e-3, db, gen);
  EXPECT_EQ(stats.implicit, 1);
  EXPECT_EQ(stats.rejected, 0);
  EXPECT_TRUE(DbmState::ordered(st.positions()));
  EXPECT_DOUBLE_EQ(st.t(), 1e-3);
}

TEST(DbmStep, ImplicitStepSolvesFixedPoint) {
  const std::vector<double> s{0.1, 0.1001, 1.0};
  const std::vector<double> db{0.05, -0.05, 0.01};
  const double sigma = diffusion(3, Variant::Real), dt = 1e-3;
  std::vector<double> out;
  ASSERT_TRUE(singval::dynamics::detail::propose_implicit(s, sigma, dt, db, out));
  const auto d = drift(out);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(out[i], s[i] + sigma * db[i] + dt * d[i], 1e-14);
}

TEST(DbmStep, ImplicitWithNonnegativeReflection) {
  // Noise pushes s_1 through zero: the solution is reflected and stays ordered.
  const std::vector<double> s{0.01, 0.5};
  const std::vector<double> db{-0.2, 0.0};
  std::vector<double> out;
  ASSERT_TRUE(singval::dynamics::detail::propose_implicit(s, diffusion(2, Variant::Real), 1e-3, db, out));
  EXPECT_GE(out[0], 0.0);
  EXPECT_TRUE(DbmState::ordered(out));
}

TEST(DbmStep, ImplicitMapIsLinfContraction) {
  Philox gen({9, 1});
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a(6), b(6), db(6);
    double x = 0.0, y = 0.0;
    for (int i = 0; i < 6; ++i) {
      x += 1e-4 + gen.uniform() * 0.3;
      y += 1e-4 + gen.uniform() * 0.3;
      a[i] = x;
      b[i] = y;
      db[i] = 0.05 * gen.normal();
    }
    std::vector<double> na, nb;
    const double sigma = diffusion(6, Variant::Real);
    ASSERT_TRUE(singval::dynamics::detail::propose_implicit(a, sigma, 1e-3, db, na));
    ASSERT_TRUE(singval::dynamics::detail::propose_implicit(b, sigma, 1e-3, db, nb));
    EXPECT_LE(linf_distance(na, nb), linf_distance(a, b) * (1 + 1e-12) + 1e-14);
  }
}

TEST(DbmStep, StiffnessErrorWhenNoProposalConverges) {
  DbmState st({0.1, 0.2});
  DtController ctl = st.controller();
  ctl.dt_min = 1e-6;
  st.set_controller(ctl);
  Philox gen({4, 4});
  const std::vector<double> db{std::nan(""), 0.0};
  try {
    dbm_step(st, 1e-3, db, gen);
    FAIL();
  } catch (const StiffnessError& e) {
    EXPECT_GT(e.dt(), 0.0);
  }
}

TEST(Integrate, ZeroHorizonAndReproducibility) {
  const auto init = freeconv::InitialData::semicircle_quantiles(8).values();
  DbmState a(init), b(init), c(init);
  integrate(a, 0.0, {1, 2});
  EXPECT_EQ(a.positions(), init);
  Trajectory ta, tb;
  integrate(a, 0.01, {1, 2}, ta.recorder());
  integrate(b, 0.01, {1, 2}, tb.recorder());
  EXPECT_EQ(a.positions(), b.positions());
  EXPECT_EQ(ta.s, tb.s);
  EXPECT_DOUBLE_EQ(a.t(), 0.01);
  integrate(c, 0.01, {1, 3});
  EXPECT_NE(a.positions(), c.positions());
}

TEST(Integrate, OrderingAlongPaths) {
  DbmState st(freeconv::InitialData::semicircle_quantiles(16).values());
  bool ok = true;
  integrate(st, 0.02, {9, 9}, [&](const DbmState& s) { ok = ok && DbmState::ordered(s.positions()); });
  EXPECT_TRUE(ok);
}

struct Moments {
  std::vector<double> mean, var, se_mean, se_var;
};

Moments moments(const std::vector<std::vector<double>>& samples) {
  const std::size_t n = samples[0].size();
  const double m = static_cast<double>(samples.size());
  Moments out{std::vector<double>(n), std::vector<double>(n), std::vector<double>(n), std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (const auto& x : samples) s += x[i];
    const double mu = s / m;
    double c2 = 0, c4 = 0;
    for (const auto& x : samples) {
      const double d = x[i] - mu;
      c2 += d * d;
      c4 += d * d * d * d;
    }
    c2 /= m;
    c4 /= m;
    out.mean[i] = mu;
    out.var[i] = c2 * m / (m - 1);
    out.se_mean[i] = std::sqrt(c2 / m);
    out.se_var[i] = std::sqrt(std::max(0.0, c4 - c2 * c2) / m);
  }
  return out;
}

TEST(Integrate, MarginalsMatchMatrixFlow) {
  const int n = 32;
  const double t = 0.01;
  const auto v = freeconv::InitialData::semicircle_quantiles(n);
  const int paths = 500;
  std::vector<std::vector<double>> sde, flow;
  for (int p = 0; p < paths; ++p) {
    DbmState st(v.values());
    integrate(st, t, RngStream{100, 0}.child(p));
    sde.push_back(st.positions());
    flow.push_back(matrix_flow(v, t, RngStream{200, 0}.child(p)).values);
  }
  const auto a = moments(sde), b = moments(flow);
  for (int i = 0; i < n; ++i) {
    EXPECT_LE(std::abs(a.mean[i] - b.mean[i]), 4 * std::hypot(a.se_mean[i], b.se_mean[i])) << i;
    EXPECT_LE(std::abs(a.var[i] - b.var[i]), 4 * std::hypot(a.se_var[i], b.se_var[i])) << i;
  }
}

TEST(MatrixFlow, TimeZeroAndSpectrum) {
  const freeconv::InitialData v({0.5, 1.0, 3.0});
  EXPECT_EQ(matrix_flow(v, 0.0, {1, 1}).values, v.values());
  EXPECT_THROW(matrix_flow(v, -1, {1, 1}), ArgumentError);
  const auto s = matrix_flow(v, 0.3, {1, 1});
  EXPECT_TRUE(std::is_sorted(s.values.begin(), s.values.end()));
  Philox gen({1, 1});
  MatrixFlowState m(v);
  m.step(0.3, gen);
  EXPECT_EQ(spectral::singular_values(m.matrix()), s.values);
}

// Two-sample KS distance, computed directly.
double ks2(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  return d;
}

// Euler scheme for the squared singular values x_k = s_k^2 with halving on
// crossings. Independent of the DBM integrator.
std::vector<double> squared_sde(std::vector<double> x, double horizon, Philox& gen) {
  const int n = static_cast<int>(x.size());
  const double nn = n;
  std::function<void(double, std::vector<double>)> step = [&](double dt, std::vector<double> db) {
    std::vector<double> y(n);
    for (int k = 0; k < n; ++k) {
      double acc = 0;
      for (int j = 0; j < n; ++j)
        if (j != k) acc += (x[k] + x[j]) / (x[k] - x[j]);
      y[k] = std::abs(x[k] + 2 * std::sqrt(x[k]) * db[k] / std::sqrt(nn) + (1 + acc / nn) * dt);
    }
    bool ok = true;
    for (int k = 1; k < n; ++k) ok = ok && y[k] > y[k - 1];
    if (ok) {
      x = y;
      return;
    }
    std::vector<double> d1(n), d2(n);
    for (int k = 0; k < n; ++k) {
      d1[k] = 0.5 * db[k] + std::sqrt(0.25 * dt) * gen.normal();
      d2[k] = db[k] - d1[k];
    }
    step(dt / 2, d1);
    step(dt / 2, d2);
  };
  const double dt = 2e-6;
  for (double t = 0; t < horizon - 1e-15; t += dt) {
    std::vector<double> db(n);
    for (auto& b : db) b = std::sqrt(dt) * gen.normal();
    step(dt, db);
  }
  return x;
}

TEST(MatrixFlow, SquaredValuesSolveCovarianceSde) {
  const int n = 16;
  const double t = 0.02;
  auto v = freeconv::InitialData::semicircle_quantiles(n).values();
  std::vector<double> x0(n);
  for (int k = 0; k < n; ++k) x0[k] = v[k] * v[k];
  std::vector<double> a, b;
  for (int p = 0; p < 500; ++p) {
    const auto s = matrix_flow(freeconv::InitialData(v), t, RngStream{300, 0}.child(p));
    a.push_back(s.values[0] * s.values[0]);
    Philox gen(RngStream{301, 0}.child(p));
    b.push_back(squared_sde(x0, t, gen)[0]);
  }
  EXPECT_LE(ks2(a, b), 0.08);
}

TEST(Coupling, IdenticalDataStayTogether) {
  const auto v = freeconv::InitialData::semicircle_quantiles(8).values();
  auto pair = couple(v, v, {5, 0});
  const auto trace = advance(pair, 0.02);
  for (double d : trace.distance) EXPECT_EQ(d, 0.0);
  EXPECT_EQ(pair.a.positions(), pair.b.positions());
}

TEST(Coupling, DistanceNonincreasing) {
  const int n = 16;
  const auto r = freeconv::InitialData::semicircle_quantiles(n).values();
  for (int p = 0; p < 10; ++p) {
    const auto s = matrix_flow(freeconv::InitialData(r), 0.05, RngStream{6, 0}.child(p)).values;
    auto pair = couple(r, s, RngStream{7, 0}.child(p));
    const auto trace = advance(pair, 0.02);
    EXPECT_EQ(trace.violations, 0);
    EXPECT_LE(trace.distance.back(), trace.distance.front());
    EXPECT_GT(trace.distance.size(), 10u);
  }
}

TEST(Interpolate, Examples) {
  const std::vector<double> r{1, 2}, s{3, 4};
  EXPECT_EQ(interpolate(r, s, 0.0), r);
  EXPECT_EQ(interpolate(r, s, 1.0), s);
  EXPECT_EQ(interpolate(r, s, 0.5), (std::vector<double>{2, 3}));
  const double base = linf_distance(r, s);
  for (double alpha : {0.1, 0.25, 0.9}) {
    const auto z = interpolate(r, s, alpha);
    EXPECT_TRUE(DbmState::ordered(z));
    EXPECT_NEAR(linf_distance(r, z), alpha * base, 1e-15);
  }
  EXPECT_THROW(interpolate(r, s, 1.5), ArgumentError);
}

TEST(ComplexVariant, VarianceRatio) {
  const int steps = 100000;
  const double dt = 1e-4;
  double vr = 0, vc = 0;
  Philox noise({8, 8}), gen({8, 9});
  for (int k = 0; k < steps; ++k) {
    const std::vector<double> db{std::sqrt(dt) * noise.normal()};
    DbmState a({5.0}), c({5.0});
    dbm_step(a, dt, db, gen);
    complex_variant_step(c, dt, db, gen);
    vr += (a.positions()[0] - 5) * (a.positions()[0] - 5);
    vc += (c.positions()[0] - 5) * (c.positions()[0] - 5);
  }
  // N=1: pure scaled Brownian increments with variance dt and dt/2.
  EXPECT_NEAR(vr / steps, dt, 0.02 * dt);
  EXPECT_NEAR(vc / vr, 0.5, 0.03 * 0.5);
}

TEST(Ou, DeterministicPartAndIdentity) {
  const int n = 4;
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(n, n);
  const auto s0 = OuState::from_matrix(x, 0.0, Eigen::MatrixXd::Constant(n, n, 1.0 / n));
  EXPECT_EQ(ou_evolve(s0, 0.0, {1, 1}).h, s0.h);
  // Mean over many evolutions of the first entry.
  double acc = 0;
  const int reps = 20000;
  for (int k = 0; k < reps; ++k) acc += ou_evolve(s0, 2 * std::log(2.0), RngStream{2, 0}.child(k)).h(0, n);
  EXPECT_NEAR(acc / reps, 0.5, 4 * std::sqrt(0.75 / n / reps));
}

TEST(Ou, StructureInvariants) {
  const auto spec = ensemble::EnsembleSpec::sparse_ensemble(16, 2, 3);
  const auto st = ou_evolve(OuState::from_sample(ensemble::sample(spec, {3, 3})), 0.5, {4, 4});
  EXPECT_NEAR(st.f, 3.0 / 16, 1e-16);
  EXPECT_EQ(st.h, st.h.transpose());
  EXPECT_TRUE(st.h.topLeftCorner(16, 16).isZero(0));
  EXPECT_TRUE(st.h.bottomRightCorner(16, 16).isZero(0));
  EXPECT_DOUBLE_EQ(st.t, 0.5);
}

TEST(Ou, MomentsConserved) {
  const int n = 320;
  const double f = 0.05;
  const auto profile = ensemble::VarianceProfile::doubly_stochastic(n, 0.5, 2.0, 3);
  Eigen::MatrixXd var = profile.matrix();
  Philox gen({6, 6});
  Eigen::MatrixXd x(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) x(i, j) = f + std::sqrt(var(i, j)) * gen.normal();
  const auto s0 = OuState::from_matrix(x, f, var);
  const auto s1 = ou_evolve(s0, 1.0, {7, 7});
  // Standardized entries should be mean 0, variance 1.
  const Eigen::ArrayXXd z = (s1.x().array() - f) / var.array().sqrt();
  const double count = static_cast<double>(n) * n;
  const double mean = z.mean();
  const double v = (z - mean).square().sum() / (count - 1);
  EXPECT_LE(std::abs(mean), 4 / std::sqrt(count));
  EXPECT_NEAR(v, 1.0, 0.02);
}

TEST(GaussianSplit, FlatProfileAllGaussian) {
  const int n = 10;
  const auto split = gaussian_divisible_split(Eigen::MatrixXd::Constant(n, n, 1.0 / n), 0.3);
  EXPECT_LE(split.residual.cwiseAbs().maxCoeff(), 1e-17);
  EXPECT_DOUBLE_EQ(split.r, 1.0);
  EXPECT_NEAR(split.gaussian_weight, std::sqrt(-std::expm1(-0.3) / n), 1e-15);
}

TEST(GaussianSplit, SmallTimeWeight) {
  const int n = 50;
  for (double t : {1e-3, 1e-5}) {
    const auto split = gaussian_divisible_split(Eigen::MatrixXd::Constant(n, n, 2.0 / n), t);
    EXPECT_NEAR(split.gaussian_weight / std::sqrt(t / n), 1.0, t);
  }
}

TEST(GaussianSplit, TwoBucketReconstruction) {
  const int n = 6;
  Eigen::MatrixXd var(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) var(i, j) = ((i + j) % 2 ? 2.0 : 1.0) / n;
  const double t = 0.5;
  const auto split = gaussian_divisible_split(var, t);
  EXPECT_EQ(split.clipped, 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      EXPECT_GE(split.residual(i, j), 0.0);
      const double total = var(i, j) * -std::expm1(-t / (n * var(i, j)));
      EXPECT_NEAR(split.residual(i, j) + split.gaussian_weight * split.gaussian_weight, total, 1e-14);
    }
}

}  // namespace
