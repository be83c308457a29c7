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
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "singval/core/error.hpp"
#include "singval/core/io.hpp"
#include "singval/core/rng.hpp"
#include "singval/ensemble/spec.hpp"

namespace singval::ensemble {

/// One drawn matrix together with the law and stream it came from.
struct MatrixSample {
  int n = 0;
  Eigen::MatrixXd entries;
  std::shared_ptr<const EnsembleSpec> spec;
  RngStream stream;
};

/// Constant C in the sparse moment bound E|b_ij|^k <= C^k / (N q^(k-2)) met by
/// the three-point law drawn in sample(): C = max(1, max_ij N s_ij).
inline double sparse_moment_constant(const EnsembleSpec& spec) {
  return std::max(1.0, spec.sparse.profile.max_scaled_variance());
}

/// Three-point law {-a, 0, a} for a sparse entry with variance s: mass
/// pi = min(1, s q^2) on {-a, a}, a = sqrt(s / pi). Then E b^2 = s and
/// E|b|^k = s / q^(k-2) whenever pi < 1.
struct ThreePointLaw {
  double atom = 0.0;
  double mass = 0.0;
};

inline ThreePointLaw three_point_law(double variance, double q) {
  const double mass = std::min(1.0, variance * q * q);
  return {std::sqrt(variance / mass), mass};
}

namespace detail {

inline void draw_into(const EnsembleSpec& spec, Philox& gen, Eigen::MatrixXd& m) {
  const int n = spec.n;
  const double nn = static_cast<double>(n);
  switch (spec.kind) {
    case EnsembleKind::Gaussian: {
      const double sd = 1.0 / std::sqrt(nn);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = sd * gen.normal();
      break;
    }
    case EnsembleKind::Sparse: {
      const double shift = spec.sparse.f / nn;
      const auto& profile = spec.sparse.profile;
      const bool flat = profile.kind() == VarianceProfile::Kind::Flat;
      const ThreePointLaw flat_law = three_point_law(1.0 / nn, spec.sparse.q);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          const ThreePointLaw law =
              flat ? flat_law : three_point_law(profile.variance(i, j), spec.sparse.q);
          const double u = gen.uniform();
          double b = 0.0;
          if (u < 0.5 * law.mass) b = -law.atom;
          else if (u < law.mass) b = law.atom;
          m(i, j) = b + shift;
        }
      }
      break;
    }
    case EnsembleKind::BernoulliDigraph: {
      const auto st = standardize_bernoulli(spec.bernoulli.p, n);
      const double p = spec.bernoulli.p;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = gen.uniform() < p ? st.scale : 0.0;
      break;
    }
    case EnsembleKind::Correlated: {
      const auto factor = spec.covariance_factor();
      Eigen::VectorXd z(n * n);
      for (int k = 0; k < n * n; ++k) z(k) = gen.normal();
      const Eigen::VectorXd x = factor->lower.triangularView<Eigen::Lower>() * z;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = x(flat_index(n, i, j));
      break;
    }
  }
}

}  // namespace detail

/// Draws one matrix. Identical (spec, stream) pairs give bit-identical output.
///
/// Sparse: independent three-point entries b_ij with variance s_ij, plus the
/// rank-one shift f/N on every entry. Drawing the same stream with f = 0
/// therefore yields exactly the centered part B.
/// Gaussian: i.i.d. N(0, 1/N).
/// BernoulliDigraph: scale * A with A_ij ~ Bernoulli(p), scale from
/// standardize_bernoulli; the entries take the two values {0, scale}.
/// Correlated: centered Gaussian vector with the profile's covariance.
inline MatrixSample sample(std::shared_ptr<const EnsembleSpec> spec, RngStream stream) {
  if (!spec) throw ParameterError("sample: null spec");
  spec->validate();
  MatrixSample out;
  out.n = spec->n;
  out.entries.resize(spec->n, spec->n);
  out.stream = stream;
  Philox gen(stream);
  detail::draw_into(*spec, gen, out.entries);
  out.spec = std::move(spec);
  return out;
}

inline MatrixSample sample(const EnsembleSpec& spec, RngStream stream) {
  return sample(std::make_shared<const EnsembleSpec>(spec), stream);
}

/// Row-major CSV with full precision and a provenance comment line.
inline void write_matrix_csv(const MatrixSample& m, const std::filesystem::path& path) {
  io::CsvWriter csv(path);
  csv.comment("spec=" + (m.spec ? m.spec->fingerprint() : std::string("none")) +
              " seed=" + std::to_string(m.stream.campaign_seed) +
              " stream=" + std::to_string(m.stream.stream_index));
  for (int i = 0; i < m.n; ++i) {
    std::string line;
    for (int j = 0; j < m.n; ++j) {
      if (j) line += ',';
      line += io::format_double(m.entries(i, j));
    }
    csv.row(line);
  }
}

/// Pair of entries (i, j), (k, l) whose covariance is estimated.
struct EntryPair {
  int i = 0, j = 0, k = 0, l = 0;
};

struct CovarianceEstimate {
  EntryPair pair;
  double xi = 0.0;              ///< N * sample covariance
  double standard_error = 0.0;  ///< Monte Carlo standard error of xi
};

/// Sample estimate of xi_{ijkl} = N Cov(x_ij, x_kl) with standard errors.
inline std::vector<CovarianceEstimate> empirical_covariance(std::span<const MatrixSample> samples,
                                                            std::span<const EntryPair> pairs) {
  if (samples.size() < 100) throw ArgumentError("empirical_covariance: need at least 100 samples");
  const auto& first = samples.front();
  if (!first.spec) throw ProvenanceError("empirical_covariance: sample without spec");
  const std::string id = first.spec->fingerprint();
  for (const auto& s : samples)
    if (!s.spec || (s.spec != first.spec && s.spec->fingerprint() != id))
      throw ProvenanceError("empirical_covariance: samples come from different ensembles");
  const int n = first.n;
  const double count = static_cast<double>(samples.size());
  std::vector<CovarianceEstimate> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.i < 0 || p.j < 0 || p.k < 0 || p.l < 0 || p.i >= n || p.j >= n || p.k >= n || p.l >= n)
      throw ArgumentError("empirical_covariance: entry index out of range");
    double ma = 0.0, mb = 0.0;
    for (const auto& s : samples) {
      ma += s.entries(p.i, p.j);
      mb += s.entries(p.k, p.l);
    }
    ma /= count;
    mb /= count;
    double c = 0.0, c2 = 0.0;
    for (const auto& s : samples) {
      const double prod = (s.entries(p.i, p.j) - ma) * (s.entries(p.k, p.l) - mb);
      c += prod;
      c2 += prod * prod;
    }
    const double mean_prod = c / count;
    const double var_prod = std::max(0.0, c2 / count - mean_prod * mean_prod);
    const double cov = c / (count - 1.0);
    out.push_back({p, n * cov, n * std::sqrt(var_prod / count)});
  }
  return out;
}

}  // namespace singval::ensemble
