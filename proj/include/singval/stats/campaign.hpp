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

// Monte Carlo campaigns: the law of the smallest singular values, local laws
// for the Stieltjes transform and rigidity of the singular values.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "singval/core/error.hpp"
#include "singval/core/io.hpp"
#include "singval/core/parallel.hpp"
#include "singval/core/rng.hpp"
#include "singval/ensemble/sample.hpp"
#include "singval/ensemble/spec.hpp"
#include "singval/freeconv/density.hpp"
#include "singval/freeconv/free_convolution.hpp"
#include "singval/freeconv/semicircle.hpp"
#include "singval/spectral/spectrum.hpp"
#include "singval/stats/ecdf.hpp"

namespace singval::stats {

using spectral::Complex;
using spectral::SpectralPoint;

/// Stream tag of the Gaussian comparison campaign drawn when none is given.
inline constexpr std::uint64_t kGaussianReferenceTag = 0x6761757373ULL;

struct CampaignOptions {
  int k_max = 4;  ///< record N * lambda_k for k = 1..k_max
  unsigned workers = default_workers();
  spectral::SvdMethod method = spectral::SvdMethod::Bidiagonal;
  /// Gaussian ensemble sample to compare against. If null and the spec is
  /// not Gaussian, one of equal size is drawn on stream.child(kGaussianReferenceTag).
  std::shared_ptr<const std::vector<std::vector<double>>> gaussian_reference;
  bool compare_gaussian = true;
};

struct CampaignResult {
  ensemble::EnsembleSpec spec;
  RngStream stream;
  std::size_t n_samples = 0;
  /// scaled[k][s] = N * lambda_{k+1} of sample s.
  std::vector<std::vector<double>> scaled;
  KsResult ks_reference;                ///< N * lambda_1 against reference_cdf
  std::vector<KsResult> ks_gaussian;    ///< per k, two-sample against the Gaussian campaign
  std::shared_ptr<const std::vector<std::vector<double>>> gaussian;  ///< the comparison sample
  double wall_seconds = 0.0;

  Ecdf ecdf(int k = 1) const {
    if (k < 1 || k > static_cast<int>(scaled.size())) throw ArgumentError("CampaignResult: k out of range");
    return Ecdf(scaled[static_cast<std::size_t>(k - 1)]);
  }
};

/// N * lambda_k, k = 1..k_max, for n_samples draws on stream.child(s).
inline std::vector<std::vector<double>> smallest_scaled(const ensemble::EnsembleSpec& spec,
                                                        std::size_t n_samples, RngStream stream,
                                                        int k_max, unsigned workers,
                                                        spectral::SvdMethod method) {
  spec.validate();
  if (k_max < 1 || k_max > spec.n) throw ArgumentError("smallest_scaled: k_max must lie in [1, N]");
  const auto shared = std::make_shared<const ensemble::EnsembleSpec>(spec);
  std::vector<std::vector<double>> out(static_cast<std::size_t>(k_max), std::vector<double>(n_samples));
  const double n = static_cast<double>(spec.n);
  parallel_for(n_samples, workers, [&](std::size_t s) {
    const auto m = ensemble::sample(shared, stream.child(s));
    const auto sv = spectral::singular_values(m.entries, method);
    for (int k = 0; k < k_max; ++k) out[static_cast<std::size_t>(k)][s] = n * sv[static_cast<std::size_t>(k)];
  });
  return out;
}

inline CampaignResult universality_campaign(const ensemble::EnsembleSpec& spec, std::size_t n_samples,
                                            RngStream stream, const CampaignOptions& opts = {}) {
  if (n_samples < 100) throw ArgumentError("universality_campaign: n_samples must be >= 100");
  const auto start = std::chrono::steady_clock::now();
  CampaignResult r;
  r.spec = spec;
  r.stream = stream;
  r.n_samples = n_samples;
  r.scaled = smallest_scaled(spec, n_samples, stream, opts.k_max, opts.workers, opts.method);
  r.ks_reference = ks_one_sample(r.scaled[0], reference_cdf);
  r.gaussian = opts.gaussian_reference;
  if (!r.gaussian && opts.compare_gaussian && spec.kind != ensemble::EnsembleKind::Gaussian) {
    r.gaussian = std::make_shared<const std::vector<std::vector<double>>>(
        smallest_scaled(ensemble::EnsembleSpec::gaussian(spec.n), n_samples,
                        stream.child(kGaussianReferenceTag), opts.k_max, opts.workers, opts.method));
  }
  if (r.gaussian) {
    const std::size_t k = std::min(r.scaled.size(), r.gaussian->size());
    for (std::size_t i = 0; i < k; ++i) r.ks_gaussian.push_back(ks_two_sample(r.scaled[i], (*r.gaussian)[i]));
  }
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

struct SlopeFit {
  std::vector<int> n;
  std::vector<double> ks;
  double slope = 0.0;  ///< least-squares slope of log KS against log N
};

/// One-sample KS of N * lambda_1 across dimensions; reports the decay slope
/// without judging it.
inline SlopeFit ks_decay_slope(const std::function<ensemble::EnsembleSpec(int)>& make_spec,
                               const std::vector<int>& dims, std::size_t n_samples, RngStream stream,
                               const CampaignOptions& opts = {}) {
  if (dims.size() < 2) throw ArgumentError("ks_decay_slope: needs at least two dimensions");
  SlopeFit fit;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    const auto col = smallest_scaled(make_spec(dims[i]), n_samples, stream.child(i), 1, opts.workers, opts.method);
    const double d = ks_one_sample(col[0], reference_cdf).statistic;
    fit.n.push_back(dims[i]);
    fit.ks.push_back(d);
    const double x = std::log(static_cast<double>(dims[i])), y = std::log(std::max(d, 1e-300));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double k = static_cast<double>(dims.size());
  fit.slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  return fit;
}

// ---------------------------------------------------------------------------
// Local laws

/// Deformed model V + sqrt(t) X with deterministic singular values v
/// (V = diag(v)) against the free convolution transform m_fc,t.
struct DeformedMode {
  freeconv::InitialData v;
  double t = 0.0;
};

/// Sparse model against the semicircle transform.
struct SparseMode {};

using LocalLawMode = std::variant<DeformedMode, SparseMode>;

/// Tensor grid of energies and eta values.
struct LocalLawGrid {
  std::vector<double> energies;
  std::vector<double> etas;

  std::vector<SpectralPoint> points() const {
    std::vector<SpectralPoint> out;
    for (double eta : etas)
      for (double e : energies) out.emplace_back(e, eta);
    return out;
  }
};

struct LocalLawOptions {
  double delta = 0.1;      ///< eta must be >= N^(-1 + delta)
  double bulk_edge = 1.5;  ///< |E| must be <= bulk_edge
  double max_eta = 10.0;
  unsigned workers = default_workers();
  spectral::SvdMethod method = spectral::SvdMethod::Bidiagonal;
};

/// Domain problems of a grid, as messages; empty when admissible.
inline std::vector<std::string> local_law_domain_issues(int n, const LocalLawGrid& grid,
                                                        const LocalLawOptions& opts = {}) {
  std::vector<std::string> out;
  if (grid.energies.empty() || grid.etas.empty()) out.push_back("grid: energies and etas must be nonempty");
  const double eta_min = std::pow(static_cast<double>(n), -1.0 + opts.delta);
  for (double eta : grid.etas)
    if (!(eta >= eta_min * (1 - 1e-12)) || !(eta <= opts.max_eta))
      out.push_back("grid.etas: " + io::format_double(eta) + " outside [N^(-1+delta), " +
                    io::format_double(opts.max_eta) + "] with N^(-1+delta) = " + io::format_double(eta_min));
  for (double e : grid.energies)
    if (!(std::abs(e) <= opts.bulk_edge))
      out.push_back("grid.energies: " + io::format_double(e) + " outside the bulk window |E| <= " +
                    io::format_double(opts.bulk_edge));
  return out;
}

struct LocalLawReport {
  bool deformed = false;
  int n = 0;
  std::size_t n_samples = 0;
  std::vector<SpectralPoint> grid;
  std::vector<Complex> reference;             ///< m_ref per grid point
  std::vector<std::vector<double>> deviation; ///< [point][sample] |m_N - m_ref|
  std::vector<std::vector<double>> ratio;     ///< [point][sample] normalized deviation

  double deviation_quantile(std::size_t point, double level) const { return quantile(deviation.at(point), level); }
  double ratio_quantile(std::size_t point, double level) const { return quantile(ratio.at(point), level); }

  /// Largest per-point quantile of the normalized ratio.
  double empirical_constant(double level = 0.95) const {
    double c = 0.0;
    for (std::size_t p = 0; p < ratio.size(); ++p) c = std::max(c, ratio_quantile(p, level));
    return c;
  }
};

/// Effective sparsity: q for sparse specs, sqrt(pN) for Bernoulli, sqrt(N) otherwise.
inline double effective_q(const ensemble::EnsembleSpec& spec) {
  switch (spec.kind) {
    case ensemble::EnsembleKind::Sparse: return spec.sparse.q;
    case ensemble::EnsembleKind::BernoulliDigraph: return std::sqrt(spec.bernoulli.p * spec.n);
    default: return std::sqrt(static_cast<double>(spec.n));
  }
}

/// Per-sample deviations of the empirical transform from its deterministic
/// limit. Deformed: ratio (N eta)|m_N - m_fc,t|. Sparse: ratio
/// |m_N - m_sc| / (q^-1/2 + (N eta)^-1/2).
inline LocalLawReport local_law_check(const ensemble::EnsembleSpec& spec, const LocalLawMode& mode,
                                      const LocalLawGrid& grid, std::size_t n_samples, RngStream stream,
                                      const LocalLawOptions& opts = {}) {
  spec.validate();
  if (n_samples < 1) throw ArgumentError("local_law_check: n_samples must be positive");
  const int n = spec.n;
  if (const auto issues = local_law_domain_issues(n, grid, opts); !issues.empty())
    throw ConfigurationError("local_law_check: " + issues.front());
  const auto* deformed = std::get_if<DeformedMode>(&mode);
  if (deformed) {
    if (deformed->v.n() != n) throw DimensionError("local_law_check: V and spec dimensions differ");
    if (!(deformed->t >= 0.0)) throw ArgumentError("local_law_check: t must be >= 0");
  }

  LocalLawReport r;
  r.deformed = deformed != nullptr;
  r.n = n;
  r.n_samples = n_samples;
  r.grid = grid.points();
  const std::size_t np = r.grid.size();
  r.reference.resize(np);
  for (std::size_t p = 0; p < np; ++p)
    r.reference[p] = deformed ? freeconv::solve_mfc(deformed->v, deformed->t, r.grid[p]).m
                              : freeconv::solve_semicircle(r.grid[p]);
  r.deviation.assign(np, std::vector<double>(n_samples));
  r.ratio.assign(np, std::vector<double>(n_samples));

  const auto shared = std::make_shared<const ensemble::EnsembleSpec>(spec);
  const double nn = static_cast<double>(n);
  const double q = effective_q(spec);
  parallel_for(n_samples, opts.workers, [&](std::size_t s) {
    std::vector<double> sv;
    if (deformed && deformed->t == 0.0) {
      sv = deformed->v.values();
    } else {
      auto m = ensemble::sample(shared, stream.child(s));
      if (deformed) {
        Eigen::MatrixXd a = std::sqrt(deformed->t) * m.entries;
        for (int i = 0; i < n; ++i) a(i, i) += deformed->v.values()[static_cast<std::size_t>(i)];
        sv = spectral::singular_values(a, opts.method);
      } else {
        sv = spectral::singular_values(m.entries, opts.method);
      }
    }
    const spectral::SymmetrizedSpectrum spectrum(std::move(sv));
    for (std::size_t p = 0; p < np; ++p) {
      const double eta = r.grid[p].eta();
      const double dev = std::abs(spectral::stieltjes(spectrum, r.grid[p]) - r.reference[p]);
      r.deviation[p][s] = dev;
      r.ratio[p][s] = deformed ? nn * eta * dev : dev / (1.0 / std::sqrt(q) + 1.0 / std::sqrt(nn * eta));
    }
  });
  return r;
}

/// CSV columns E, eta, re_m_ref, im_m_ref, dev_p50, dev_p95, ratio_p50,
/// ratio_p95, ratio_max.
inline void write_local_law_csv(const LocalLawReport& r, const std::filesystem::path& path,
                                const std::string& comment = {}) {
  io::CsvWriter csv(path);
  if (!comment.empty()) csv.comment(comment);
  csv.header({"E", "eta", "re_m_ref", "im_m_ref", "dev_p50", "dev_p95", "ratio_p50", "ratio_p95", "ratio_max"});
  for (std::size_t p = 0; p < r.grid.size(); ++p)
    csv.row(r.grid[p].energy(), r.grid[p].eta(), r.reference[p].real(), r.reference[p].imag(),
            r.deviation_quantile(p, 0.5), r.deviation_quantile(p, 0.95), r.ratio_quantile(p, 0.5),
            r.ratio_quantile(p, 0.95), r.ratio_quantile(p, 1.0));
}

/// Sample mean of m_N(z) = (1/2N) Tr (H - z)^-1 over n_samples draws.
inline std::vector<Complex> monte_carlo_transform(const ensemble::EnsembleSpec& spec,
                                                  const std::vector<SpectralPoint>& points, std::size_t n_samples,
                                                  RngStream stream, unsigned workers = default_workers()) {
  if (n_samples < 1) throw ArgumentError("monte_carlo_transform: n_samples must be positive");
  const auto shared = std::make_shared<const ensemble::EnsembleSpec>(spec);
  std::vector<std::vector<Complex>> per(n_samples);
  parallel_for(n_samples, workers, [&](std::size_t s) {
    const spectral::SymmetrizedSpectrum sp(
        spectral::singular_values(ensemble::sample(shared, stream.child(s)).entries, spectral::SvdMethod::OneSidedJacobi));
    per[s].reserve(points.size());
    for (const auto& p : points) per[s].push_back(spectral::stieltjes(sp, p));
  });
  std::vector<Complex> mean(points.size(), 0.0);
  for (const auto& row : per)
    for (std::size_t p = 0; p < row.size(); ++p) mean[p] += row[p];
  for (auto& m : mean) m /= static_cast<double>(n_samples);
  return mean;
}

// ---------------------------------------------------------------------------
// Rigidity

struct RigidityReport {
  int n = 0;
  std::vector<int> indices;              ///< singular value indices i in the window
  std::vector<std::vector<double>> deviation;  ///< [sample][window position] N |lambda_i - gamma_i|
  std::vector<double> per_index_max;
  double max = 0.0;
  int argmax = 0;  ///< index i attaining max

  double quantile(double level) const {
    std::vector<double> all;
    for (const auto& row : deviation) all.insert(all.end(), row.begin(), row.end());
    return stats::quantile(std::move(all), level);
  }
};

/// N |lambda_i - gamma_i| for i = 1..floor(bulk_fraction N): the central
/// bulk_fraction of the 2N symmetrized indices, whose negative half mirrors
/// the positive one. Entry k of each spectrum is taken as lambda_{k+1}, as
/// returned by singular_values.
inline RigidityReport rigidity_check(std::span<const std::vector<double>> spectra,
                                     const freeconv::ClassicalLocations& gamma, double bulk_fraction = 0.5) {
  if (spectra.empty()) throw ArgumentError("rigidity_check: no spectra");
  if (!(bulk_fraction > 0.0 && bulk_fraction <= 1.0))
    throw ArgumentError("rigidity_check: bulk_fraction must lie in (0, 1]");
  const int n = gamma.n();
  for (const auto& s : spectra)
    if (static_cast<int>(s.size()) != n) throw DimensionError("rigidity_check: spectrum and gamma dimensions differ");
  RigidityReport r;
  r.n = n;
  const int last = std::max(1, static_cast<int>(std::floor(bulk_fraction * n + 1e-9)));
  for (int i = 1; i <= last; ++i) r.indices.push_back(i);
  r.per_index_max.assign(r.indices.size(), 0.0);
  r.argmax = r.indices.front();
  for (const auto& s : spectra) {
    std::vector<double> row(r.indices.size());
    for (std::size_t k = 0; k < r.indices.size(); ++k) {
      const int i = r.indices[k];
      row[k] = n * std::abs(s[static_cast<std::size_t>(i - 1)] - gamma[i]);
      r.per_index_max[k] = std::max(r.per_index_max[k], row[k]);
      if (row[k] > r.max) {
        r.max = row[k];
        r.argmax = i;
      }
    }
    r.deviation.push_back(std::move(row));
  }
  return r;
}

/// CSV columns i, gamma_i, dev_p50, dev_p99, dev_max.
inline void write_rigidity_csv(const RigidityReport& r, const freeconv::ClassicalLocations& gamma,
                               const std::filesystem::path& path, const std::string& comment = {}) {
  io::CsvWriter csv(path);
  if (!comment.empty()) csv.comment(comment);
  csv.header({"i", "gamma_i", "dev_p50", "dev_p99", "dev_max"});
  for (std::size_t k = 0; k < r.indices.size(); ++k) {
    std::vector<double> col;
    for (const auto& row : r.deviation) col.push_back(row[k]);
    csv.row(r.indices[k], gamma[r.indices[k]], stats::quantile(col, 0.5), stats::quantile(col, 0.99),
            r.per_index_max[k]);
  }
}

}  // namespace singval::stats
