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

// JSON form of EnsembleSpec (documented in docs/formats.md):
//
//   {"kind": "gaussian", "n": 256}
//   {"kind": "sparse", "n": 128,
//    "sparse": {"q": 8, "f": 0.0,
//               "profile": {"kind": "flat"}
//                        | {"kind": "doubly_stochastic", "c": 0.5, "C": 2, "seed": 7}}}
//   {"kind": "bernoulli", "n": 256, "bernoulli": {"p": 0.125}}
//   {"kind": "correlated", "n": 16,
//    "correlated": {"profile": {"family": "offsets", "c0": 0.5, "c1": 1, "c2": 1,
//                               "entries": [{"dk": 1, "dl": 1, "value": 0.1}]}}}
//
// Correlation families: "independent", "offsets", "exponential" (c1, c2,
// radius). Custom evaluators have no JSON form.

#include <string>

#include <json.hpp>

#include "singval/core/error.hpp"
#include "singval/ensemble/spec.hpp"

namespace singval::ensemble {

using json = nlohmann::json;

namespace detail {

inline const json& require(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key))
    throw ConfigurationError(path + "." + key + ": required field missing");
  return j.at(key);
}

template <class T>
T get_as(const json& j, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigurationError(path + ": wrong type");
  }
}

template <class T>
T field(const json& j, const std::string& key, const std::string& path) {
  return get_as<T>(require(j, key, path), path + "." + key);
}

template <class T>
T field_or(const json& j, const std::string& key, T fallback, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return get_as<T>(j.at(key), path + "." + key);
}

}  // namespace detail

inline json to_json(const CorrelationProfile& p) {
  json j{{"family", p.family()}, {"c0", p.c0()}, {"c1", p.c1()}, {"c2", p.c2()},
         {"radius", p.radius()}};
  if (p.family() == "offsets") {
    json entries = json::array();
    for (const auto& e : p.offset_values())
      entries.push_back({{"dk", e.dk}, {"dl", e.dl}, {"value", e.value}});
    j["entries"] = entries;
  }
  return j;
}

inline CorrelationProfile correlation_profile_from_json(const json& j, const std::string& path) {
  const auto family = detail::field<std::string>(j, "family", path);
  const double c0 = detail::field_or<double>(j, "c0", 0.5, path);
  const double c1 = detail::field_or<double>(j, "c1", 1.0, path);
  const double c2 = detail::field_or<double>(j, "c2", 1.0, path);
  try {
    if (family == "independent") return CorrelationProfile::independent(c0);
    if (family == "exponential")
      return CorrelationProfile::exponential(c1, c2, detail::field<int>(j, "radius", path), c0);
    if (family == "offsets") {
      std::vector<OffsetValue> entries;
      const auto& arr = detail::require(j, "entries", path);
      if (!arr.is_array()) throw ConfigurationError(path + ".entries: must be an array");
      for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string ep = path + ".entries[" + std::to_string(i) + "]";
        entries.push_back({detail::field<int>(arr[i], "dk", ep), detail::field<int>(arr[i], "dl", ep),
                           detail::field<double>(arr[i], "value", ep)});
      }
      return CorrelationProfile::offsets(std::move(entries), c0, c1, c2);
    }
  } catch (const ParameterError& e) {
    throw ConfigurationError(path + ": " + e.what());
  }
  throw ConfigurationError(path + ".family: unknown correlation family '" + family + "'");
}

inline json to_json(const EnsembleSpec& s) {
  json j{{"kind", to_string(s.kind)}, {"n", s.n}};
  switch (s.kind) {
    case EnsembleKind::Gaussian: break;
    case EnsembleKind::Sparse: {
      json profile;
      if (s.sparse.profile.kind() == VarianceProfile::Kind::Flat) {
        profile = {{"kind", "flat"}};
      } else {
        profile = {{"kind", "doubly_stochastic"},
                   {"c", s.sparse.profile.c()},
                   {"C", s.sparse.profile.C()},
                   {"seed", s.sparse.profile.seed()}};
      }
      j["sparse"] = {{"q", s.sparse.q}, {"f", s.sparse.f}, {"profile", profile}};
      break;
    }
    case EnsembleKind::BernoulliDigraph: j["bernoulli"] = {{"p", s.bernoulli.p}}; break;
    case EnsembleKind::Correlated:
      j["correlated"] = {{"profile", to_json(s.correlated.profile)}};
      break;
  }
  return j;
}

/// Parses without checking ensemble invariants, so callers can list them via
/// EnsembleSpec::issues(). Structural problems throw ConfigurationError naming
/// the offending field.
inline EnsembleSpec spec_from_json_unchecked(const json& j, const std::string& path = "spec") {
  EnsembleSpec s;
  const auto kind = detail::field<std::string>(j, "kind", path);
  s.n = detail::field<int>(j, "n", path);
  if (s.n < 1) throw ConfigurationError(path + ".n: must be a positive integer");
  if (kind == "gaussian") {
    s.kind = EnsembleKind::Gaussian;
  } else if (kind == "sparse") {
    s.kind = EnsembleKind::Sparse;
    const auto& sp = detail::require(j, "sparse", path);
    const std::string p = path + ".sparse";
    s.sparse.q = detail::field<double>(sp, "q", p);
    s.sparse.f = detail::field_or<double>(sp, "f", 0.0, p);
    const std::string pk = detail::field_or<std::string>(
        sp.contains("profile") ? sp.at("profile") : json::object(), "kind", "flat", p + ".profile");
    if (pk == "flat") {
      s.sparse.profile = VarianceProfile::flat(s.n);
    } else if (pk == "doubly_stochastic") {
      const auto& pj = sp.at("profile");
      const std::string pp = p + ".profile";
      try {
        s.sparse.profile = VarianceProfile::doubly_stochastic(
            s.n, detail::field<double>(pj, "c", pp), detail::field<double>(pj, "C", pp),
            detail::field_or<std::uint64_t>(pj, "seed", 0, pp));
      } catch (const ParameterError& e) {
        throw ConfigurationError(pp + ": " + e.what());
      }
    } else {
      throw ConfigurationError(p + ".profile.kind: unknown profile kind '" + pk + "'");
    }
  } else if (kind == "bernoulli") {
    s.kind = EnsembleKind::BernoulliDigraph;
    s.bernoulli.p = detail::field<double>(detail::require(j, "bernoulli", path), "p", path + ".bernoulli");
  } else if (kind == "correlated") {
    s.kind = EnsembleKind::Correlated;
    const auto& cj = detail::require(j, "correlated", path);
    s.correlated.profile =
        correlation_profile_from_json(detail::require(cj, "profile", path + ".correlated"),
                                      path + ".correlated.profile");
  } else {
    throw ConfigurationError(path + ".kind: unknown ensemble kind '" + kind + "'");
  }
  return s;
}

inline EnsembleSpec spec_from_json(const json& j, const std::string& path = "spec") {
  EnsembleSpec s = spec_from_json_unchecked(j, path);
  s.validate();
  return s;
}

}  // namespace singval::ensemble
