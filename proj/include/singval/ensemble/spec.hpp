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
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "singval/core/error.hpp"
#include "singval/ensemble/covariance.hpp"
#include "singval/ensemble/profile.hpp"

namespace singval::ensemble {

enum class EnsembleKind { Sparse, Gaussian, BernoulliDigraph, Correlated };

inline const char* to_string(EnsembleKind k) {
  switch (k) {
    case EnsembleKind::Sparse: return "sparse";
    case EnsembleKind::Gaussian: return "gaussian";
    case EnsembleKind::BernoulliDigraph: return "bernoulli";
    case EnsembleKind::Correlated: return "correlated";
  }
  return "?";
}

/// Closed-form standardization of a Bernoulli(p) adjacency matrix A:
/// scale * A = B + f |w><w| with Var(b_ij) = 1/N and sparsity q.
struct BernoulliStandardization {
  double scale = 0.0;
  double f = 0.0;
  double q = 0.0;
};

/// p > 1/2 is rejected because it would push f above sqrt(N); such graphs are
/// handled by passing to the complement graph.
inline BernoulliStandardization standardize_bernoulli(double p, int n) {
  if (n < 1) throw ParameterError("standardize_bernoulli: n must be positive");
  if (!(p > 0.0)) throw ParameterError("standardize_bernoulli: p must be positive");
  if (p > 0.5) throw ParameterError("standardize_bernoulli: p > 1/2 gives f > sqrt(N)");
  const double nn = static_cast<double>(n);
  if (p * nn < 1.0 - 1e-12) throw ParameterError("standardize_bernoulli: p*N must be >= 1");
  return {1.0 / std::sqrt(nn * p * (1.0 - p)), std::sqrt(nn * p / (1.0 - p)), std::sqrt(nn * p)};
}

namespace detail {

struct CovarianceCache {
  std::once_flag once;
  std::shared_ptr<const CovarianceFactor> factor;
  std::exception_ptr error;
};

}  // namespace detail

/// Declarative description of a matrix law.
struct EnsembleSpec {
  struct SparseParams {
    double q = 1.0;  ///< sparsity, 1 <= q <= sqrt(N)
    double f = 0.0;  ///< mean parameter, 0 <= f <= sqrt(N)
    VarianceProfile profile;
  };
  struct BernoulliParams {
    double p = 0.5;
  };
  struct CorrelatedParams {
    CorrelationProfile profile;
    std::shared_ptr<detail::CovarianceCache> cache = std::make_shared<detail::CovarianceCache>();
  };

  EnsembleKind kind = EnsembleKind::Gaussian;
  int n = 0;
  SparseParams sparse;
  BernoulliParams bernoulli;
  CorrelatedParams correlated;

  static EnsembleSpec gaussian(int n) {
    EnsembleSpec s;
    s.kind = EnsembleKind::Gaussian;
    s.n = n;
    s.validate();
    return s;
  }

  static EnsembleSpec sparse_ensemble(int n, double q, double f,
                                      std::optional<VarianceProfile> profile = std::nullopt) {
    EnsembleSpec s;
    s.kind = EnsembleKind::Sparse;
    s.n = n;
    s.sparse.q = q;
    s.sparse.f = f;
    s.sparse.profile = profile ? *profile : VarianceProfile::flat(std::max(n, 1));
    s.validate();
    return s;
  }

  static EnsembleSpec bernoulli_digraph(int n, double p) {
    EnsembleSpec s;
    s.kind = EnsembleKind::BernoulliDigraph;
    s.n = n;
    s.bernoulli.p = p;
    s.validate();
    return s;
  }

  static EnsembleSpec correlated_ensemble(int n, CorrelationProfile profile) {
    EnsembleSpec s;
    s.kind = EnsembleKind::Correlated;
    s.n = n;
    s.correlated.profile = std::move(profile);
    s.validate();
    return s;
  }

  /// Every violated invariant, as "field: message" strings.
  std::vector<std::string> issues(const CovarianceOptions& cov = {}) const {
    std::vector<std::string> out;
    if (n < 1) {
      out.push_back("n: must be a positive integer");
      return out;
    }
    const double root_n = std::sqrt(static_cast<double>(n));
    const double slack = 1e-12 * root_n;
    switch (kind) {
      case EnsembleKind::Gaussian: break;
      case EnsembleKind::Sparse:
        if (!(sparse.q >= 1.0 - 1e-12) || !(sparse.q <= root_n + slack))
          out.push_back("sparse.q: must satisfy 1 <= q <= sqrt(N) = " + std::to_string(root_n));
        if (!(sparse.f >= 0.0) || !(sparse.f <= root_n + slack))
          out.push_back("sparse.f: must satisfy 0 <= f <= sqrt(N) = " + std::to_string(root_n));
        if (sparse.profile.n() != n) out.push_back("sparse.profile: dimension does not match n");
        break;
      case EnsembleKind::BernoulliDigraph: {
        const double p = bernoulli.p;
        if (!(p > 0.0) || !(p < 1.0)) out.push_back("bernoulli.p: must lie in (0, 1)");
        else if (p > 0.5) out.push_back("bernoulli.p: p > 1/2 gives f > sqrt(N); use the complement graph");
        if (p * n < 1.0 - 1e-12) out.push_back("bernoulli.p: p*N must be >= 1");
        break;
      }
      case EnsembleKind::Correlated:
        if (n > cov.max_n)
          out.push_back("n: correlated sampling is dense and limited to N <= " +
                        std::to_string(cov.max_n));
        break;
    }
    return out;
  }

  void validate() const {
    const auto found = issues();
    if (found.empty()) return;
    std::string msg = "invalid ensemble spec: ";
    for (std::size_t i = 0; i < found.size(); ++i) msg += (i ? "; " : "") + found[i];
    throw ParameterError(msg);
  }

  /// Stable text identity used for provenance checks and file headers.
  std::string fingerprint() const {
    std::ostringstream os;
    os.precision(17);
    os << to_string(kind) << ":n=" << n;
    switch (kind) {
      case EnsembleKind::Gaussian: break;
      case EnsembleKind::Sparse:
        os << ",q=" << sparse.q << ",f=" << sparse.f << ",profile="
           << (sparse.profile.kind() == VarianceProfile::Kind::Flat ? "flat" : "doubly_stochastic");
        if (sparse.profile.kind() == VarianceProfile::Kind::DoublyStochastic)
          os << "(c=" << sparse.profile.c() << ",C=" << sparse.profile.C()
             << ",seed=" << sparse.profile.seed() << ")";
        break;
      case EnsembleKind::BernoulliDigraph: os << ",p=" << bernoulli.p; break;
      case EnsembleKind::Correlated: {
        const auto& pr = correlated.profile;
        os << ",family=" << pr.family() << ",R=" << pr.radius() << ",c0=" << pr.c0()
           << ",c1=" << pr.c1() << ",c2=" << pr.c2();
        for (const auto& e : pr.offset_values()) os << ",(" << e.dk << "," << e.dl << ")=" << e.value;
        if (pr.family() == "custom") os << ",id=" << static_cast<const void*>(correlated.cache.get());
        break;
      }
    }
    return os.str();
  }

  /// Lazily built Cholesky factor for Correlated specs; shared by copies.
  std::shared_ptr<const CovarianceFactor> covariance_factor(const CovarianceOptions& opts = {}) const {
    if (kind != EnsembleKind::Correlated) throw ParameterError("covariance_factor: spec is not correlated");
    auto& cache = *correlated.cache;
    std::call_once(cache.once, [&] {
      try {
        cache.factor = std::make_shared<const CovarianceFactor>(
            factor_covariance(correlated.profile, n, opts));
      } catch (...) {
        cache.error = std::current_exception();
      }
    });
    if (cache.error) std::rethrow_exception(cache.error);
    return cache.factor;
  }
};

}  // namespace singval::ensemble
