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

// Declarative experiment runner behind the singval command line tool. One
// JSON config names a command, an ensemble spec, the campaign size and seed,
// and per-command "params" and "tolerances". validate() audits a config
// without running it; run() executes it and writes summary.json plus CSV
// tables into <out>/<config hash>. Column layouts are listed in
// docs/formats.md.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "singval/core/error.hpp"
#include "singval/core/io.hpp"
#include "singval/core/parallel.hpp"
#include "singval/core/rng.hpp"
#include "singval/dynamics/dbm.hpp"
#include "singval/dynamics/flows.hpp"
#include "singval/ensemble/json.hpp"
#include "singval/ensemble/sample.hpp"
#include "singval/freeconv/density.hpp"
#include "singval/freeconv/free_convolution.hpp"
#include "singval/freeconv/mde.hpp"
#include "singval/spectral/spectrum.hpp"
#include "singval/stats/campaign.hpp"
#include "singval/stats/ecdf.hpp"

namespace singval::cli {

using json = nlohmann::json;
using spectral::Complex;
using spectral::SpectralPoint;

enum ExitCode : int { kPass = 0, kError = 1, kCriterionFailure = 2 };

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"sample", "spectrum", "universality", "locallaw", "rigidity",
                                              "dbm",    "couple",   "freeconv",     "mde",      "ou"};
  return names;
}

struct CampaignConfig {
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
  unsigned workers = 0;  ///< 0: SINGVAL_WORKERS or the hardware concurrency
};

struct ExperimentConfig {
  std::string command;
  json raw;
  std::optional<ensemble::EnsembleSpec> spec;
  CampaignConfig campaign;
  json params = json::object();
  json tolerances = json::object();

  /// Hash of the canonical config text without campaign.workers, which does
  /// not change results.
  std::string hash() const {
    json j = raw;
    if (j.contains("campaign") && j["campaign"].is_object()) j["campaign"].erase("workers");
    return io::hex64(io::fnv1a64(j.dump()));
  }
};

struct RunOptions {
  std::optional<std::filesystem::path> out_base;  ///< default: ./results
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
};

struct RunOutcome {
  int exit_code = kPass;
  std::filesystem::path out_dir;
  json summary;
};

/// Precedence: explicit flag, then SINGVAL_WORKERS, then the config field,
/// then the hardware concurrency.
inline unsigned resolve_workers(std::optional<unsigned> flag, unsigned config_value) {
  if (flag && *flag > 0) return *flag;
  if (std::getenv("SINGVAL_WORKERS")) return default_workers();
  if (config_value > 0) return config_value;
  return default_workers();
}

namespace detail {

/// Shared state of a command: collected issues in audit mode, output
/// directory and checks in run mode.
class Context {
 public:
  /// spec_invalid: the spec was present but rejected, already reported.
  Context(const ExperimentConfig& cfg, bool dry_run, bool spec_invalid = false)
      : cfg_(cfg), dry_run_(dry_run), spec_reported_(spec_invalid) {}

  const ExperimentConfig& cfg() const { return cfg_; }
  bool dry_run() const { return dry_run_; }
  std::vector<std::string>& issues() { return issues_; }
  void issue(const std::string& field, const std::string& message) { issues_.push_back(field + ": " + message); }

  template <class T>
  T get(const json& obj, const std::string& key, T fallback, const std::string& path) {
    if (!obj.is_object() || !obj.contains(key)) return fallback;
    try {
      return obj.at(key).get<T>();
    } catch (const json::exception&) {
      issue(path + "." + key, "wrong type");
      return fallback;
    }
  }

  template <class T>
  T param(const std::string& key, T fallback) { return get<T>(cfg_.params, key, fallback, "params"); }

  template <class T>
  std::optional<T> required_param(const std::string& key) {
    if (!cfg_.params.contains(key)) {
      issue("params." + key, "required field missing");
      return std::nullopt;
    }
    return get<T>(cfg_.params, key, T{}, "params");
  }

  std::optional<double> tolerance(const std::string& key) {
    if (!cfg_.tolerances.contains(key)) return std::nullopt;
    return get<double>(cfg_.tolerances, key, 0.0, "tolerances");
  }

  const ensemble::EnsembleSpec* spec() {
    if (!cfg_.spec) {
      if (!spec_reported_) issue("spec", "required for command '" + cfg_.command + "'");
      spec_reported_ = true;
      return nullptr;
    }
    return &*cfg_.spec;
  }

  /// Dimension from params.n, else spec.n.
  int dimension() {
    if (cfg_.params.contains("n")) {
      const int n = param<int>("n", 0);
      if (n < 1) issue("params.n", "must be a positive integer");
      return n;
    }
    if (cfg_.spec) return cfg_.spec->n;
    issue("params.n", "required when no spec is given");
    return 0;
  }

  void require_samples(std::size_t minimum) {
    if (cfg_.campaign.n_samples < minimum)
      issue("campaign.n_samples", "must be >= " + std::to_string(minimum));
  }

  /// Call after reading every field; throws in run mode if anything failed.
  bool ready() {
    if (issues_.empty()) return !dry_run_;
    if (!dry_run_) throw ConfigurationError(issues_.front());
    return false;
  }

  void check(const std::string& name, double value, double tolerance, bool pass) {
    checks_.push_back({{"name", name}, {"value", value}, {"tolerance", tolerance}, {"pass", pass}});
    all_pass_ = all_pass_ && pass;
  }
  void check_le(const std::string& name, double value, double tolerance) {
    check(name, value, tolerance, value <= tolerance);
  }

  json& checks() { return checks_; }
  bool all_pass() const { return all_pass_; }

  RngStream stream() const { return {cfg_.campaign.seed, 0}; }
  unsigned workers = 1;
  std::filesystem::path out;
  json results = json::object();

  std::filesystem::path file(const std::string& name) const { return out / name; }
  std::string provenance() const {
    return "config=" + cfg_.hash() + " seed=" + std::to_string(cfg_.campaign.seed) +
           (cfg_.spec ? " spec=" + cfg_.spec->fingerprint() : std::string());
  }

 private:
  const ExperimentConfig& cfg_;
  bool dry_run_;
  bool spec_reported_ = false;
  std::vector<std::string> issues_;
  json checks_ = json::array();
  bool all_pass_ = true;
};

inline spectral::SvdMethod read_method(Context& ctx, const std::string& fallback) {
  const auto m = ctx.param<std::string>("method", fallback);
  if (m == "jacobi") return spectral::SvdMethod::OneSidedJacobi;
  if (m == "bidiagonal") return spectral::SvdMethod::Bidiagonal;
  ctx.issue("params.method", "must be 'jacobi' or 'bidiagonal'");
  return spectral::SvdMethod::OneSidedJacobi;
}

inline dynamics::Variant read_variant(Context& ctx) {
  const auto v = ctx.param<std::string>("variant", "real");
  if (v == "real") return dynamics::Variant::Real;
  if (v == "complex") return dynamics::Variant::Complex;
  ctx.issue("params.variant", "must be 'real' or 'complex'");
  return dynamics::Variant::Real;
}

/// "semicircle_quantiles", "zeros" or an explicit array of n values >= 0.
inline std::optional<freeconv::InitialData> read_initial(Context& ctx, const std::string& key, int n,
                                                         const std::string& fallback = "semicircle_quantiles") {
  const json& p = ctx.cfg().params;
  const json v = p.contains(key) ? p.at(key) : json(fallback);
  const std::string path = "params." + key;
  try {
    if (v.is_string()) {
      const auto name = v.get<std::string>();
      if (n < 1) return std::nullopt;
      if (name == "semicircle_quantiles") return freeconv::InitialData::semicircle_quantiles(n);
      if (name == "zeros") return freeconv::InitialData(std::vector<double>(static_cast<std::size_t>(n), 0.0));
      ctx.issue(path, "unknown initial data '" + name + "'");
      return std::nullopt;
    }
    if (v.is_array()) {
      auto values = v.get<std::vector<double>>();
      if (n >= 1 && static_cast<int>(values.size()) != n) {
        ctx.issue(path, "expected " + std::to_string(n) + " values");
        return std::nullopt;
      }
      return freeconv::InitialData(std::move(values));
    }
  } catch (const json::exception&) {
  } catch (const ArgumentError& e) {
    ctx.issue(path, e.what());
    return std::nullopt;
  }
  ctx.issue(path, "must be a name or an array of numbers");
  return std::nullopt;
}

/// An array, or {"from", "to", "count", "log"} where "from"/"to" may be
/// replaced by "from_n_power"/"to_n_power" meaning N^power.
inline std::vector<double> read_grid(Context& ctx, const std::string& key, int n, bool required = true) {
  const json& p = ctx.cfg().params;
  const std::string path = "params." + key;
  if (!p.contains(key)) {
    if (required) ctx.issue(path, "required field missing");
    return {};
  }
  const json& g = p.at(key);
  if (g.is_number()) return {g.get<double>()};
  if (g.is_array()) {
    try {
      return g.get<std::vector<double>>();
    } catch (const json::exception&) {
      ctx.issue(path, "must contain numbers only");
      return {};
    }
  }
  if (!g.is_object()) {
    ctx.issue(path, "must be a number, an array or a range object");
    return {};
  }
  auto bound = [&](const std::string& name) -> std::optional<double> {
    if (g.contains(name)) return ctx.get<double>(g, name, 0.0, path);
    if (g.contains(name + "_n_power")) return std::pow(static_cast<double>(n), ctx.get<double>(g, name + "_n_power", 0.0, path));
    ctx.issue(path + "." + name, "required field missing");
    return std::nullopt;
  };
  const auto lo = bound("from"), hi = bound("to");
  const int count = ctx.get<int>(g, "count", 0, path);
  const bool log = ctx.get<bool>(g, "log", false, path);
  if (count < 1) ctx.issue(path + ".count", "must be >= 1");
  if (!lo || !hi || count < 1) return {};
  if (log && !(*lo > 0.0 && *hi > 0.0)) {
    ctx.issue(path, "log ranges need positive bounds");
    return {};
  }
  std::vector<double> out;
  for (int k = 0; k < count; ++k) {
    const double a = count == 1 ? 0.0 : static_cast<double>(k) / (count - 1);
    out.push_back(log ? std::exp(std::log(*lo) + a * (std::log(*hi) - std::log(*lo))) : *lo + a * (*hi - *lo));
  }
  return out;
}

inline json ks_json(const stats::KsResult& r) {
  json j{{"statistic", r.statistic}, {"n", r.n}, {"dkw_band", r.dkw_band}};
  if (r.m) j["m"] = r.m;
  return j;
}

inline json complex_json(Complex z) { return json::array({z.real(), z.imag()}); }

// --- commands -------------------------------------------------------------

inline void cmd_sample(Context& ctx) {
  const auto* spec = ctx.spec();
  ctx.require_samples(1);
  const int keep = ctx.param<int>("write_matrices", 5);
  if (keep < 0) ctx.issue("params.write_matrices", "must be >= 0");
  if (!ctx.ready()) return;
  const std::size_t ns = ctx.cfg().campaign.n_samples;
  const auto shared = std::make_shared<const ensemble::EnsembleSpec>(*spec);
  std::vector<std::array<double, 4>> moments(ns);
  parallel_for(ns, ctx.workers, [&](std::size_t s) {
    const auto m = ensemble::sample(shared, ctx.stream().child(s));
    if (static_cast<int>(s) < keep) ensemble::write_matrix_csv(m, ctx.file("matrix_" + std::to_string(s) + ".csv"));
    const double mean = m.entries.mean();
    const double var = (m.entries.array() - mean).square().mean();
    moments[s] = {mean, var, m.entries.minCoeff(), m.entries.maxCoeff()};
  });
  io::CsvWriter csv(ctx.file("samples.csv"));
  csv.comment(ctx.provenance());
  csv.header({"sample", "mean", "variance", "min", "max"});
  double mean = 0, var = 0;
  for (std::size_t s = 0; s < ns; ++s) {
    csv.row(static_cast<unsigned long>(s), moments[s][0], moments[s][1], moments[s][2], moments[s][3]);
    mean += moments[s][0];
    var += moments[s][1];
  }
  ctx.results = {{"mean_entry", mean / ns}, {"mean_variance_times_n", var / ns * spec->n}};
}

inline void cmd_spectrum(Context& ctx) {
  const auto* spec = ctx.spec();
  ctx.require_samples(1);
  const auto method = read_method(ctx, "jacobi");
  if (!ctx.ready()) return;
  const std::size_t ns = ctx.cfg().campaign.n_samples;
  const auto shared = std::make_shared<const ensemble::EnsembleSpec>(*spec);
  std::vector<std::vector<double>> sv(ns);
  parallel_for(ns, ctx.workers, [&](std::size_t s) {
    sv[s] = spectral::singular_values(ensemble::sample(shared, ctx.stream().child(s)).entries, method);
  });
  io::CsvWriter csv(ctx.file("spectrum.csv"));
  csv.comment(ctx.provenance());
  csv.header({"sample", "i", "sigma_i"});
  double smallest = 0, largest = 0;
  for (std::size_t s = 0; s < ns; ++s) {
    for (std::size_t i = 0; i < sv[s].size(); ++i) csv.row(static_cast<unsigned long>(s), static_cast<unsigned long>(i + 1), sv[s][i]);
    smallest += sv[s].front();
    largest += sv[s].back();
  }
  ctx.results = {{"mean_smallest", smallest / ns}, {"mean_largest", largest / ns}};
}

inline void cmd_universality(Context& ctx) {
  const auto* spec = ctx.spec();
  ctx.require_samples(100);
  stats::CampaignOptions opts;
  opts.k_max = ctx.param<int>("k_max", 4);
  opts.compare_gaussian = ctx.param<bool>("compare_gaussian", true);
  opts.method = read_method(ctx, "bidiagonal");
  const auto dims = ctx.param<std::vector<int>>("slope_dims", {});
  if (spec && (opts.k_max < 1 || opts.k_max > spec->n)) ctx.issue("params.k_max", "must lie in [1, N]");
  for (int d : dims)
    if (d < 2) ctx.issue("params.slope_dims", "dimensions must be >= 2");
  std::vector<double> ks_gauss_tol;
  if (ctx.cfg().tolerances.contains("ks_gaussian")) {
    const json& t = ctx.cfg().tolerances.at("ks_gaussian");
    if (t.is_number()) ks_gauss_tol.assign(static_cast<std::size_t>(std::max(opts.k_max, 1)), t.get<double>());
    else if (t.is_array() && std::all_of(t.begin(), t.end(), [](const json& x) { return x.is_number(); }))
      ks_gauss_tol = t.get<std::vector<double>>();
    else ctx.issue("tolerances.ks_gaussian", "must be a number or an array of numbers");
  }
  const auto ks_ref_tol = ctx.tolerance("ks_reference");
  if (!ctx.ready()) return;
  opts.workers = ctx.workers;
  const auto r = stats::universality_campaign(*spec, ctx.cfg().campaign.n_samples, ctx.stream(), opts);
  const std::string prov = ctx.provenance();
  stats::write_ecdf_csv(r.ecdf(1), stats::reference_cdf, ctx.file("ecdf_lambda1.csv"), prov);
  if (r.gaussian) {
    for (std::size_t k = 0; k < r.ks_gaussian.size(); ++k) {
      const stats::Ecdf g((*r.gaussian)[k]);
      stats::write_ecdf_csv(r.ecdf(static_cast<int>(k + 1)), g,
                            ctx.file("ecdf_lambda" + std::to_string(k + 1) + "_vs_gaussian.csv"), prov);
    }
  }
  {
    io::CsvWriter csv(ctx.file("scaled.csv"));
    csv.comment(prov);
    csv.header({"sample", "k", "N_lambda_k"});
    for (std::size_t s = 0; s < r.n_samples; ++s)
      for (std::size_t k = 0; k < r.scaled.size(); ++k)
        csv.row(static_cast<unsigned long>(s), static_cast<unsigned long>(k + 1), r.scaled[k][s]);
  }
  json ks_g = json::array();
  for (const auto& k : r.ks_gaussian) ks_g.push_back(ks_json(k));
  ctx.results = {{"ks_reference", ks_json(r.ks_reference)}, {"ks_gaussian", ks_g}, {"campaign_seconds", r.wall_seconds}};
  if (!dims.empty()) {
    const auto base = *spec;
    const auto fit = stats::ks_decay_slope(
        [&](int n) {
          auto s = base;
          s.n = n;
          if (s.kind == ensemble::EnsembleKind::Sparse) {
            s.sparse.profile = ensemble::VarianceProfile::flat(n);
            s.sparse.q = std::min(s.sparse.q, std::sqrt(static_cast<double>(n)));
            s.sparse.f = std::min(s.sparse.f, std::sqrt(static_cast<double>(n)));
          }
          if (s.kind == ensemble::EnsembleKind::BernoulliDigraph) s.bernoulli.p = base.bernoulli.p * base.n / n;
          s.validate();
          return s;
        },
        dims, r.n_samples, ctx.stream().child(0x736c6f7065ULL), opts);
    ctx.results["slope"] = {{"n", fit.n}, {"ks", fit.ks}, {"slope", fit.slope}};
  }
  if (ks_ref_tol) ctx.check_le("ks_reference", r.ks_reference.statistic, *ks_ref_tol);
  for (std::size_t k = 0; k < std::min(ks_gauss_tol.size(), r.ks_gaussian.size()); ++k)
    ctx.check_le("ks_gaussian_lambda" + std::to_string(k + 1), r.ks_gaussian[k].statistic, ks_gauss_tol[k]);
}

inline void cmd_locallaw(Context& ctx) {
  const auto* spec = ctx.spec();
  ctx.require_samples(1);
  const int n = spec ? spec->n : 0;
  const auto mode_name = ctx.param<std::string>("mode", "sparse");
  stats::LocalLawOptions opts;
  opts.delta = ctx.param<double>("delta", opts.delta);
  opts.bulk_edge = ctx.param<double>("bulk_edge", opts.bulk_edge);
  opts.method = read_method(ctx, "bidiagonal");
  const double level = ctx.param<double>("level", 0.95);
  if (!(level > 0.0 && level <= 1.0)) ctx.issue("params.level", "must lie in (0, 1]");
  stats::LocalLawGrid grid{read_grid(ctx, "energies", n), read_grid(ctx, "etas", n)};
  stats::LocalLawMode mode = stats::SparseMode{};
  if (mode_name == "deformed") {
    const double t = ctx.param<double>("t", -1.0);
    if (!(t >= 0.0)) ctx.issue("params.t", "deformed mode needs t >= 0");
    if (auto v = read_initial(ctx, "v", n)) mode = stats::DeformedMode{std::move(*v), t};
  } else if (mode_name != "sparse") {
    ctx.issue("params.mode", "must be 'sparse' or 'deformed'");
  }
  if (n > 0 && !grid.energies.empty() && !grid.etas.empty())
    for (const auto& msg : stats::local_law_domain_issues(n, grid, opts)) ctx.issues().push_back("params." + msg.substr(5));
  const auto tol = ctx.tolerance("empirical_constant");
  if (!ctx.ready()) return;
  opts.workers = ctx.workers;
  const auto r = stats::local_law_check(*spec, mode, grid, ctx.cfg().campaign.n_samples, ctx.stream(), opts);
  stats::write_local_law_csv(r, ctx.file("locallaw.csv"), ctx.provenance());
  const double c = r.empirical_constant(level);
  ctx.results = {{"mode", mode_name}, {"level", level}, {"empirical_constant", c}, {"points", r.grid.size()}};
  if (tol) ctx.check_le("empirical_constant", c, *tol);
}

inline void cmd_rigidity(Context& ctx) {
  const auto* spec = ctx.spec();
  ctx.require_samples(1);
  const double fraction = ctx.param<double>("bulk_fraction", 0.5);
  if (!(fraction > 0.0 && fraction <= 1.0)) ctx.issue("params.bulk_fraction", "must lie in (0, 1]");
  const double level = ctx.param<double>("level", 0.99);
  if (!(level > 0.0 && level <= 1.0)) ctx.issue("params.level", "must lie in (0, 1]");
  const auto method = read_method(ctx, "bidiagonal");
  const auto tol = ctx.tolerance("quantile");
  if (!ctx.ready()) return;
  const std::size_t ns = ctx.cfg().campaign.n_samples;
  const auto shared = std::make_shared<const ensemble::EnsembleSpec>(*spec);
  std::vector<std::vector<double>> spectra(ns);
  parallel_for(ns, ctx.workers, [&](std::size_t s) {
    spectra[s] = spectral::singular_values(ensemble::sample(shared, ctx.stream().child(s)).entries, method);
  });
  const auto gamma = freeconv::semicircle_locations(spec->n);
  const auto r = stats::rigidity_check(spectra, gamma, fraction);
  stats::write_rigidity_csv(r, gamma, ctx.file("rigidity.csv"), ctx.provenance());
  const double q = r.quantile(level);
  ctx.results = {{"max", r.max}, {"argmax", r.argmax}, {"level", level}, {"quantile", q}, {"window", r.indices.size()}};
  if (tol) ctx.check_le("quantile", q, *tol);
}

/// Stream tag separating matrix-flow comparison draws from DBM paths.
inline constexpr std::uint64_t kMatrixFlowTag = 0x666c6f77ULL;

inline void cmd_dbm(Context& ctx) {
  const int n = ctx.dimension();
  ctx.require_samples(1);
  const auto v = read_initial(ctx, "initial", n);
  const auto horizon = ctx.required_param<double>("horizon");
  if (horizon && !(*horizon >= 0.0)) ctx.issue("params.horizon", "must be >= 0");
  const auto variant = read_variant(ctx);
  const bool compare = ctx.param<bool>("compare_matrix_flow", false);
  const auto record = ctx.param<std::string>("record", "final");
  if (record != "final" && record != "all") ctx.issue("params.record", "must be 'final' or 'all'");
  if (compare && variant != dynamics::Variant::Real) ctx.issue("params.compare_matrix_flow", "real variant only");
  const auto ks_tol = ctx.tolerance("ks_lambda1");
  const auto se_tol = ctx.tolerance("mean_standard_errors");
  if (!ctx.ready()) return;
  const std::size_t paths = ctx.cfg().campaign.n_samples;
  std::vector<dynamics::Trajectory> traj(paths);
  std::vector<dynamics::StepStats> st(paths);
  parallel_for(paths, ctx.workers, [&](std::size_t p) {
    dynamics::DbmState state(v->values(), 0.0, variant);
    auto& tr = traj[p];
    tr.t.push_back(0.0);
    tr.s.push_back(state.positions());
    dynamics::Observer obs;
    if (record == "all") obs = tr.recorder();
    st[p] = dynamics::integrate(state, *horizon, ctx.stream().child(p), obs);
    if (record == "final") {
      tr.t.push_back(state.t());
      tr.s.push_back(state.positions());
    }
  });
  dynamics::write_trajectory_csv(traj, ctx.file("trajectories.csv"));
  long accepted = 0, rejected = 0, implicit = 0;
  for (const auto& s : st) {
    accepted += s.accepted;
    rejected += s.rejected;
    implicit += s.implicit;
  }
  ctx.results = {{"accepted", accepted}, {"rejected", rejected}, {"implicit", implicit}};
  if (!compare) return;
  std::vector<std::vector<double>> flow(paths);
  parallel_for(paths, ctx.workers, [&](std::size_t p) {
    flow[p] = dynamics::matrix_flow(*v, *horizon, ctx.stream().child(kMatrixFlowTag).child(p)).values;
  });
  {
    io::CsvWriter csv(ctx.file("matrix_flow.csv"));
    csv.comment(ctx.provenance());
    csv.header({"path_id", "i", "s_i"});
    for (std::size_t p = 0; p < paths; ++p)
      for (std::size_t i = 0; i < flow[p].size(); ++i)
        csv.row(static_cast<unsigned long>(p), static_cast<unsigned long>(i + 1), flow[p][i]);
  }
  std::vector<double> a(paths), b(paths);
  for (std::size_t p = 0; p < paths; ++p) {
    a[p] = traj[p].s.back()[0];
    b[p] = flow[p][0];
  }
  const auto ks = stats::ks_two_sample(a, b);
  // Largest standardized difference of per-particle means.
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    double ma = 0, mb = 0, va = 0, vb = 0;
    for (std::size_t p = 0; p < paths; ++p) {
      ma += traj[p].s.back()[i];
      mb += flow[p][i];
    }
    ma /= paths;
    mb /= paths;
    for (std::size_t p = 0; p < paths; ++p) {
      va += std::pow(traj[p].s.back()[i] - ma, 2);
      vb += std::pow(flow[p][i] - mb, 2);
    }
    const double se = std::sqrt((va + vb) / (paths - 1.0) / paths);
    worst = std::max(worst, se > 0 ? std::abs(ma - mb) / se : 0.0);
  }
  ctx.results["ks_lambda1"] = ks_json(ks);
  ctx.results["max_mean_standard_errors"] = worst;
  if (ks_tol) ctx.check_le("ks_lambda1", ks.statistic, *ks_tol);
  if (se_tol) ctx.check_le("mean_standard_errors", worst, *se_tol);
}

inline void cmd_couple(Context& ctx) {
  const int n = ctx.dimension();
  ctx.require_samples(1);
  const auto va = read_initial(ctx, "initial_a", n);
  const auto b_name = ctx.cfg().params.value("initial_b", json("gaussian_sample"));
  std::optional<freeconv::InitialData> vb;
  if (!(b_name.is_string() && b_name.get<std::string>() == "gaussian_sample")) vb = read_initial(ctx, "initial_b", n);
  const auto horizon = ctx.required_param<double>("horizon");
  if (horizon && !(*horizon >= 0.0)) ctx.issue("params.horizon", "must be >= 0");
  const auto variant = read_variant(ctx);
  const double slack = ctx.param<double>("slack", 1e-9);
  const int stride = ctx.param<int>("record_every", 10);
  if (stride < 1) ctx.issue("params.record_every", "must be >= 1");
  const double tol = ctx.tolerance("violations").value_or(0.0);
  if (!ctx.ready()) return;
  const std::size_t pairs = ctx.cfg().campaign.n_samples;
  const auto gauss = std::make_shared<const ensemble::EnsembleSpec>(ensemble::EnsembleSpec::gaussian(n));
  std::vector<dynamics::CouplingTrace> traces(pairs);
  parallel_for(pairs, ctx.workers, [&](std::size_t p) {
    const auto stream = ctx.stream().child(p);
    std::vector<double> b0 = vb ? vb->values()
                                : spectral::singular_values(ensemble::sample(gauss, stream.child(1)).entries);
    auto pair = dynamics::couple(va->values(), std::move(b0), stream.child(0), variant);
    traces[p] = dynamics::advance(pair, *horizon, slack);
  });
  io::CsvWriter csv(ctx.file("coupling.csv"));
  csv.comment(ctx.provenance());
  csv.header({"pair_id", "t", "distance"});
  long violations = 0;
  double max_increase = -INFINITY, d0 = 0, d1 = 0;
  for (std::size_t p = 0; p < pairs; ++p) {
    const auto& tr = traces[p];
    for (std::size_t k = 0; k < tr.t.size(); ++k)
      if (k % static_cast<std::size_t>(stride) == 0 || k + 1 == tr.t.size())
        csv.row(static_cast<unsigned long>(p), tr.t[k], tr.distance[k]);
    violations += tr.violations;
    max_increase = std::max(max_increase, tr.max_increase);
    d0 += tr.distance.front();
    d1 += tr.distance.back();
  }
  ctx.results = {{"violations", violations},
                 {"max_increase", std::isfinite(max_increase) ? max_increase : 0.0},
                 {"mean_initial_distance", d0 / pairs},
                 {"mean_final_distance", d1 / pairs}};
  ctx.check_le("violations", static_cast<double>(violations), tol);
}

inline void cmd_freeconv(Context& ctx) {
  const int n = ctx.dimension();
  const auto v = read_initial(ctx, "v", n);
  const auto t = ctx.required_param<double>("t");
  if (t && !(*t >= 0.0)) ctx.issue("params.t", "must be >= 0");
  const auto energies = read_grid(ctx, "energies", n);
  const auto eta = ctx.required_param<double>("eta");
  if (eta && !(*eta > 0.0)) ctx.issue("params.eta", "must be > 0");
  const double tol = ctx.tolerance("residual").value_or(1e-12);
  if (!ctx.ready()) return;
  const auto sol = freeconv::solve_mfc_sweep(*v, *t, energies, *eta);
  freeconv::write_solution_csv(sol, ctx.file("stieltjes.csv"));
  const double worst = *std::max_element(sol.residual.begin(), sol.residual.end());
  double closed = 0.0;
  const bool semicircle = *t == 1.0 && v->values().back() == 0.0;
  if (semicircle)
    for (std::size_t k = 0; k < sol.grid.size(); ++k)
      closed = std::max(closed, std::abs(sol.m[k] - freeconv::solve_semicircle(sol.grid[k])));
  ctx.results = {{"points", sol.grid.size()}, {"max_residual", worst}};
  if (semicircle) ctx.results["max_semicircle_deviation"] = closed;
  ctx.check_le("max_residual", worst, tol);
  if (auto ct = ctx.tolerance("semicircle"); ct && semicircle) ctx.check_le("semicircle", closed, *ct);
}

inline void cmd_mde(Context& ctx) {
  const auto* spec = ctx.spec();
  if (spec && spec->kind != ensemble::EnsembleKind::Correlated) ctx.issue("spec.kind", "mde needs a correlated spec");
  const int n = spec ? spec->n : 0;
  const auto energies = read_grid(ctx, "energies", n);
  const auto eta = ctx.required_param<double>("eta");
  freeconv::MdeOptions opts;
  if (eta && !(*eta >= opts.min_eta)) ctx.issue("params.eta", "must be >= " + io::format_double(opts.min_eta));
  if (n > opts.max_n) ctx.issue("spec.n", "mde is limited to N <= " + std::to_string(opts.max_n));
  const int mc = ctx.param<int>("mc_samples", 0);
  if (mc < 0) ctx.issue("params.mc_samples", "must be >= 0");
  const auto tol = ctx.tolerance("trace");
  if (!ctx.ready()) return;
  std::vector<SpectralPoint> pts;
  for (double e : energies) pts.emplace_back(e, *eta);
  std::vector<freeconv::MdeSolution> sols;
  for (const auto& p : pts) sols.push_back(freeconv::solve_mde(spec->correlated.profile, n, p, opts));
  std::vector<Complex> mcm;
  if (mc > 0) mcm = stats::monte_carlo_transform(*spec, pts, static_cast<std::size_t>(mc), ctx.stream(), ctx.workers);
  io::CsvWriter csv(ctx.file("mde.csv"));
  csv.comment(ctx.provenance());
  csv.header({"E", "eta", "re_trace", "im_trace", "residual", "iterations", "re_mc", "im_mc"});
  double worst = 0.0, resid = 0.0;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const Complex tr = sols[k].normalized_trace();
    const Complex m = mc > 0 ? mcm[k] : Complex(NAN, NAN);
    csv.row(pts[k].energy(), pts[k].eta(), tr.real(), tr.imag(), sols[k].residual, sols[k].iterations, m.real(), m.imag());
    if (mc > 0) worst = std::max(worst, std::abs(tr - m));
    resid = std::max(resid, sols[k].residual);
  }
  ctx.results = {{"points", pts.size()}, {"max_residual", resid}};
  if (mc > 0) ctx.results["max_trace_deviation"] = worst;
  if (tol && mc > 0) ctx.check_le("trace", worst, *tol);
}

inline void cmd_ou(Context& ctx) {
  const auto* spec = ctx.spec();
  if (spec && spec->kind != ensemble::EnsembleKind::Sparse && spec->kind != ensemble::EnsembleKind::Gaussian)
    ctx.issue("spec.kind", "ou needs a sparse or gaussian spec");
  ctx.require_samples(1);
  const auto times = ctx.param<std::vector<double>>("times", {0.1, 1.0});
  for (double t : times)
    if (!(t >= 0.0)) ctx.issue("params.times", "must be >= 0");
  const double bands = ctx.tolerance("standard_errors").value_or(4.0);
  if (!ctx.ready()) return;
  const std::size_t ns = ctx.cfg().campaign.n_samples;
  const auto shared = std::make_shared<const ensemble::EnsembleSpec>(*spec);
  io::CsvWriter csv(ctx.file("ou.csv"));
  csv.comment(ctx.provenance());
  csv.header({"t", "entries", "mean_z", "mean_band", "var_ratio", "var_band", "split_min_residual", "split_clipped",
              "split_reconstruction_error"});
  json rows = json::array();
  for (std::size_t ti = 0; ti < times.size(); ++ti) {
    const double t = times[ti];
    // Standardized entries u = (x - f)/sqrt(s): sums of u and u^2, and u^4.
    std::vector<std::array<double, 3>> acc(ns);
    parallel_for(ns, ctx.workers, [&](std::size_t s) {
      const auto h0 = dynamics::OuState::from_sample(ensemble::sample(shared, ctx.stream().child(s)));
      const auto h = dynamics::ou_evolve(h0, t, ctx.stream().child(s).child(ti + 1));
      const Eigen::MatrixXd u = (h.x().array() - h.f) / h.variance.array().sqrt();
      acc[s] = {u.sum(), u.array().square().sum(), u.array().square().square().sum()};
    });
    const Eigen::MatrixXd variance =
        dynamics::OuState::from_sample(ensemble::sample(shared, ctx.stream().child(0))).variance;
    double s1 = 0, s2 = 0, s4 = 0;
    for (const auto& a : acc) {
      s1 += a[0];
      s2 += a[1];
      s4 += a[2];
    }
    const double m = static_cast<double>(ns) * spec->n * spec->n;
    const double mean_z = s1 / m, var_ratio = s2 / m;
    const double mean_band = bands / std::sqrt(m);
    const double var_band = bands * std::sqrt(std::max(s4 / m - var_ratio * var_ratio, 0.0) / m);
    const auto split = dynamics::gaussian_divisible_split(variance, t);
    const double nn = static_cast<double>(spec->n);
    double recon = 0.0, min_res = INFINITY;
    for (Eigen::Index k = 0; k < variance.size(); ++k) {
      const double s = variance.data()[k];
      const double total = s * -std::expm1(-t / (nn * s));
      recon = std::max(recon, std::abs(split.gaussian_weight * split.gaussian_weight + split.residual.data()[k] - total));
      min_res = std::min(min_res, split.residual.data()[k]);
    }
    csv.row(t, m, mean_z, mean_band, var_ratio, var_band, min_res, split.clipped, recon);
    rows.push_back({{"t", t}, {"mean_z", mean_z}, {"var_ratio", var_ratio}, {"split_clipped", split.clipped},
                    {"split_reconstruction_error", recon}});
    const std::string tag = "t=" + io::format_double(t);
    ctx.check_le("mean " + tag, std::abs(mean_z), mean_band);
    ctx.check_le("variance " + tag, std::abs(var_ratio - 1.0), var_band);
    ctx.check_le("split_clipped " + tag, static_cast<double>(split.clipped), 0.0);
    ctx.check_le("split_reconstruction " + tag, recon, 1e-14);
  }
  ctx.results = {{"times", rows}};
}

inline void dispatch(Context& ctx) {
  const auto& c = ctx.cfg().command;
  if (c == "sample") return cmd_sample(ctx);
  if (c == "spectrum") return cmd_spectrum(ctx);
  if (c == "universality") return cmd_universality(ctx);
  if (c == "locallaw") return cmd_locallaw(ctx);
  if (c == "rigidity") return cmd_rigidity(ctx);
  if (c == "dbm") return cmd_dbm(ctx);
  if (c == "couple") return cmd_couple(ctx);
  if (c == "freeconv") return cmd_freeconv(ctx);
  if (c == "mde") return cmd_mde(ctx);
  if (c == "ou") return cmd_ou(ctx);
}

}  // namespace detail

/// Structural parse. Ensemble invariants and command preconditions are
/// collected into `issues` rather than thrown.
inline ExperimentConfig parse_config(const json& j, std::vector<std::string>& issues) {
  ExperimentConfig cfg;
  cfg.raw = j;
  if (!j.is_object()) {
    issues.push_back("config: must be a JSON object");
    return cfg;
  }
  if (!j.contains("command") || !j["command"].is_string()) {
    issues.push_back("command: required string field missing");
  } else {
    cfg.command = j["command"].get<std::string>();
    const auto& names = command_names();
    if (std::find(names.begin(), names.end(), cfg.command) == names.end())
      issues.push_back("command: unknown command '" + cfg.command + "'");
  }
  if (j.contains("spec")) {
    try {
      cfg.spec = ensemble::spec_from_json_unchecked(j["spec"]);
      for (const auto& msg : cfg.spec->issues()) issues.push_back("spec." + msg);
      if (!cfg.spec->issues().empty()) cfg.spec.reset();
    } catch (const Error& e) {
      issues.push_back(e.what());
    }
  }
  const json campaign = j.value("campaign", json::object());
  if (!campaign.is_object()) {
    issues.push_back("campaign: must be an object");
  } else {
    auto read_uint = [&](const char* key, std::uint64_t fallback) -> std::uint64_t {
      if (!campaign.contains(key)) return fallback;
      const auto& v = campaign.at(key);
      if (v.is_number_unsigned()) return v.get<std::uint64_t>();
      if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::uint64_t>(v.get<long long>());
      issues.push_back(std::string("campaign.") + key + ": must be a nonnegative integer");
      return fallback;
    };
    cfg.campaign.n_samples = static_cast<std::size_t>(read_uint("n_samples", 0));
    cfg.campaign.seed = read_uint("seed", 0);
    cfg.campaign.workers = static_cast<unsigned>(read_uint("workers", 0));
  }
  cfg.params = j.value("params", json::object());
  cfg.tolerances = j.value("tolerances", json::object());
  if (!cfg.params.is_object()) issues.push_back("params: must be an object");
  if (!cfg.tolerances.is_object()) issues.push_back("tolerances: must be an object");
  return cfg;
}

/// Every problem with a config, without executing it.
inline std::vector<std::string> validate(const json& j) {
  std::vector<std::string> issues;
  const auto cfg = parse_config(j, issues);
  if (!issues.empty() && cfg.command.empty()) return issues;
  detail::Context ctx(cfg, true, !cfg.spec && j.is_object() && j.contains("spec"));
  try {
    detail::dispatch(ctx);
  } catch (const Error& e) {
    ctx.issues().push_back(e.what());
  }
  issues.insert(issues.end(), ctx.issues().begin(), ctx.issues().end());
  return issues;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("config: cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigurationError(std::string("config: invalid JSON: ") + e.what());
  }
}

/// Applies overrides, validates, executes and writes the outputs. Throws
/// ConfigurationError for invalid configs and propagates execution errors.
inline RunOutcome run(json j, const RunOptions& opts = {}) {
  if (opts.seed && j.is_object()) {
    if (!j.contains("campaign") || !j["campaign"].is_object()) j["campaign"] = json::object();
    j["campaign"]["seed"] = *opts.seed;
  }
  const auto issues = validate(j);
  if (!issues.empty()) throw ConfigurationError(issues.front());
  std::vector<std::string> ignored;
  const auto cfg = parse_config(j, ignored);
  const auto start = std::chrono::steady_clock::now();
  RunOutcome out;
  out.out_dir = opts.out_base.value_or(std::filesystem::path("results")) / cfg.hash();
  std::filesystem::create_directories(out.out_dir);
  detail::Context ctx(cfg, false);
  ctx.out = out.out_dir;
  ctx.workers = resolve_workers(opts.workers, cfg.campaign.workers);
  std::cerr << "singval: " << cfg.command << " -> " << out.out_dir.string() << " (workers: " << ctx.workers << ")\n";
  detail::dispatch(ctx);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out.summary = {{"command", cfg.command},
                 {"config", cfg.raw},
                 {"config_hash", cfg.hash()},
                 {"seed", cfg.campaign.seed},
                 {"stream", {{"campaign_seed", cfg.campaign.seed}, {"stream_index", 0}}},
                 {"workers", ctx.workers},
                 {"results", ctx.results},
                 {"checks", ctx.checks()},
                 {"pass", ctx.all_pass()},
                 {"wall_seconds", seconds}};
  std::ofstream(out.out_dir / "summary.json") << out.summary.dump(2) << '\n';
  out.exit_code = ctx.all_pass() ? kPass : kCriterionFailure;
  return out;
}

}  // namespace singval::cli
