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

// Euler-Maruyama integration of the symmetrized singular-value Dyson Brownian
// motion
//
//   ds_i = sigma dB_i + (1/2N) sum_{j != +-i} dt / (s_i - s_j),
//
// where j runs over the mirrored set {+-1, ..., +-N}, s_{-k} = -s_k and
// B_{-k} = -B_k. The real ensemble has sigma = 1/sqrt(N), the complex one
// sigma = 1/sqrt(2N). Only the positive half s_1 < ... < s_N is stored.
//
// Step control: an explicit Euler proposal is used when dt times the largest
// local stiffness (1/2N) sum_{j != +-i} (s_i - s_j)^-2 is at most
// stiffness_bound and the proposal keeps the positive half strictly ordered.
// Otherwise the step is taken drift-implicitly: s' = y + dt grad W(s') with
// y = s + sigma dB and W the log-gas energy, i.e. the minimizer of the convex
// function |x - y|^2 / 2 - dt W(x) over the ordered cone, found by Newton's
// method. The implicit step cannot cross (the logarithms are barriers), which
// matters because the gap between neighbours behaves like a two-dimensional
// Bessel process and approaches zero far below any explicit step size. If
// Newton fails the interval is split in two and the Brownian increment is
// refined by a bridge draw, down to dt_min.
//
// Both step maps are l-infinity contractions for two configurations driven
// by the same increment, provided both use the same map: the explicit one
// when stiffness_bound <= 1, the implicit one always (its Jacobian is the
// inverse of a diagonally dominant M-matrix with margin one).
//
// A step that carries s_1 through zero is reflected, which is exact in law
// because the mirrored system is invariant under s_1 -> -s_1.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <sstream>
#include <vector>

#include "singval/core/error.hpp"
#include "singval/core/io.hpp"
#include "singval/core/rng.hpp"

namespace singval::dynamics {

enum class Variant { Real, Complex };

struct DtController {
  double dt_max = 1e-2;
  double dt_min = 1e-12;
  double shrink = 0.5;             ///< split fraction beta used when a step is rejected
  double stiffness_bound = 0.05;   ///< explicit step only if dt * stiffness <= this

  static DtController for_n(int n) { return {1e-2 / (static_cast<double>(n) * n), 1e-12, 0.5, 0.05}; }
};

struct StepStats {
  long accepted = 0;
  long implicit = 0;  ///< accepted steps taken drift-implicitly
  long rejected = 0;
  double min_dt = std::numeric_limits<double>::infinity();
};

/// Positive half of the particle configuration.
class DbmState {
 public:
  DbmState() = default;
  explicit DbmState(std::vector<double> s, double t = 0.0, Variant variant = Variant::Real)
      : s_(std::move(s)), t_(t), variant_(variant) {
    if (s_.empty()) throw ArgumentError("DbmState: need at least one particle");
    controller_ = DtController::for_n(n());
    if (!ordered(s_)) throw ArgumentError("DbmState: positions must satisfy 0 <= s_1 < ... < s_N");
  }

  int n() const noexcept { return static_cast<int>(s_.size()); }
  double t() const noexcept { return t_; }
  Variant variant() const noexcept { return variant_; }
  const std::vector<double>& positions() const noexcept { return s_; }
  const DtController& controller() const noexcept { return controller_; }
  void set_controller(DtController c) {
    if (!(c.dt_max > 0.0) || !(c.dt_min > 0.0) || !(c.shrink > 0.0 && c.shrink < 1.0) ||
        !(c.stiffness_bound > 0.0 && c.stiffness_bound <= 1.0))
      throw ArgumentError("DtController: need dt_max, dt_min > 0, 0 < shrink < 1, 0 < stiffness_bound <= 1");
    controller_ = c;
  }

  /// Mirrored view: s_{-k} = -s_k.
  double operator[](int i) const {
    if (i == 0 || std::abs(i) > n()) throw ArgumentError("DbmState: index out of range");
    return i > 0 ? s_[i - 1] : -s_[-i - 1];
  }

  static bool ordered(const std::vector<double>& s) {
    if (!(s.front() >= 0.0)) return false;
    for (std::size_t k = 0; k < s.size(); ++k)
      if (!std::isfinite(s[k]) || (k > 0 && !(s[k] > s[k - 1]))) return false;
    return true;
  }

 private:
  friend struct StateAccess;
  std::vector<double> s_;
  double t_ = 0.0;
  Variant variant_ = Variant::Real;
  DtController controller_;
};

struct StateAccess {
  static std::vector<double>& s(DbmState& st) { return st.s_; }
  static double& t(DbmState& st) { return st.t_; }
};

inline double diffusion(int n, Variant v) {
  return v == Variant::Real ? 1.0 / std::sqrt(static_cast<double>(n))
                            : 1.0 / std::sqrt(2.0 * static_cast<double>(n));
}

/// (1/2N) sum_{j != +-i} 1/(s_i - s_j) for each positive particle.
inline std::vector<double> drift(std::span<const double> s) {
  const std::size_t n = s.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      acc += 1.0 / (s[i] - s[j]) + 1.0 / (s[i] + s[j]);
    }
    out[i] = acc / (2.0 * static_cast<double>(n));
  }
  return out;
}

/// max_i (1/2N) sum_{j != +-i} (s_i - s_j)^-2.
inline double stiffness(std::span<const double> s) {
  const std::size_t n = s.size();
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double a = s[i] - s[j], b = s[i] + s[j];
      acc += 1.0 / (a * a) + 1.0 / (b * b);
    }
    worst = std::max(worst, acc);
  }
  return worst / (2.0 * static_cast<double>(n));
}

namespace detail {

/// Explicit Euler proposal; false when the step is too stiff or crosses.
inline bool propose_explicit(std::span<const double> s, double sigma, double dt, std::span<const double> db,
                             double bound, std::vector<double>& out) {
  if (dt * stiffness(s) > bound) return false;
  const auto d = drift(s);
  out.resize(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = s[i] + sigma * db[i] + d[i] * dt;
  out[0] = std::abs(out[0]);
  return DbmState::ordered(out);
}

// Interior of the ordered cone: x_1 < ... < x_N and x_1 + x_2 > 0.
inline bool in_cone(const Eigen::VectorXd& x) {
  for (Eigen::Index i = 1; i < x.size(); ++i)
    if (!(x(i) > x(i - 1))) return false;
  return x.size() < 2 || x(0) + x(1) > 0.0;
}

// (1/2N) sum_{i<j} [log(x_j - x_i) + log(x_i + x_j)].
inline double log_gas(const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) acc += std::log(x(j) - x(i)) + std::log(x(i) + x(j));
  return acc / (2.0 * static_cast<double>(n));
}

/// Drift-implicit proposal: minimizes |x - y|^2 / 2 - dt W(x) by damped
/// Newton iteration from the current state. False if Newton fails.
inline bool propose_implicit(std::span<const double> s, double sigma, double dt, std::span<const double> db,
                             std::vector<double>& out) {
  const Eigen::Index n = static_cast<Eigen::Index>(s.size());
  Eigen::VectorXd y(n), x(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    y(i) = s[i] + sigma * db[i];
    x(i) = s[i];
  }
  const double inv2n = 1.0 / (2.0 * static_cast<double>(n));
  auto objective = [&](const Eigen::VectorXd& v) { return 0.5 * (v - y).squaredNorm() - dt * log_gas(v); };
  Eigen::VectorXd g(n);
  Eigen::MatrixXd h(n, n);
  auto gradient = [&](const Eigen::VectorXd& v) {
    const std::vector<double> sv(v.data(), v.data() + n);
    const auto d = drift(sv);
    for (Eigen::Index i = 0; i < n; ++i) g(i) = v(i) - y(i) - dt * d[static_cast<std::size_t>(i)];
  };
  gradient(x);
  double phi = objective(x);
  bool converged = false;
  for (int it = 0; it < 100; ++it) {
    const double scale = std::max(1.0, x.cwiseAbs().maxCoeff());
    if (g.cwiseAbs().maxCoeff() <= 1e-15 * scale) {
      converged = true;
      break;
    }
    h.setIdentity();
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j) continue;
        const double a = x(i) - x(j), b = x(i) + x(j);
        const double c = inv2n / (a * a), e = inv2n / (b * b);
        h(i, i) += dt * (c + e);
        h(i, j) -= dt * (c - e);
      }
    const Eigen::VectorXd step = h.llt().solve(-g);
    const double g_norm = g.cwiseAbs().maxCoeff();
    double alpha = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls, alpha *= 0.5) {
      const Eigen::VectorXd cand = x + alpha * step;
      if (!in_cone(cand)) continue;
      const double phi_c = objective(cand);
      const Eigen::VectorXd g_old = g;
      gradient(cand);
      if (phi_c <= phi || g.cwiseAbs().maxCoeff() < g_norm) {
        x = cand;
        phi = phi_c;
        moved = true;
        break;
      }
      g = g_old;
    }
    if (!moved) {
      gradient(x);
      converged = g.cwiseAbs().maxCoeff() <= 1e-13 * scale;
      break;
    }
  }
  if (!converged) return false;
  out.assign(x.data(), x.data() + n);
  out[0] = std::abs(out[0]);
  return DbmState::ordered(out);
}

/// Advances every configuration in `states` by dt with the shared increment
/// db, splitting the interval if no proposal is accepted. on_accept is called
/// after each accepted substep with its length.
template <class OnAccept>
void advance(std::span<std::vector<double>* const> states, double sigma, double dt,
             std::vector<double> db, Philox& gen, const DtController& ctl, double t0,
             StepStats& stats, OnAccept&& on_accept) {
  std::vector<std::vector<double>> next(states.size());
  bool ok = true;
  for (std::size_t k = 0; k < states.size() && ok; ++k)
    ok = propose_explicit(*states[k], sigma, dt, db, ctl.stiffness_bound, next[k]);
  if (!ok) {
    ok = true;
    for (std::size_t k = 0; k < states.size() && ok; ++k) ok = propose_implicit(*states[k], sigma, dt, db, next[k]);
    if (ok) ++stats.implicit;
  }
  if (ok) {
    for (std::size_t k = 0; k < states.size(); ++k) states[k]->swap(next[k]);
    ++stats.accepted;
    stats.min_dt = std::min(stats.min_dt, dt);
    on_accept(dt);
    return;
  }
  ++stats.rejected;
  const double beta = ctl.shrink;
  const double dt1 = beta * dt, dt2 = dt - dt1;
  if (std::min(dt1, dt2) < ctl.dt_min) {
    std::ostringstream msg;
    msg << "dbm: step size fell below dt_min = " << ctl.dt_min << " at t = " << t0
        << " (stiffness " << stiffness(*states[0]) << ")";
    throw StiffnessError(msg.str(), t0, dt);
  }
  // Brownian bridge: B(beta dt) given B(dt) = db.
  std::vector<double> db1(db.size()), db2(db.size());
  const double bridge_sd = std::sqrt(beta * (1.0 - beta) * dt);
  for (std::size_t i = 0; i < db.size(); ++i) {
    db1[i] = beta * db[i] + bridge_sd * gen.normal();
    db2[i] = db[i] - db1[i];
  }
  advance(states, sigma, dt1, std::move(db1), gen, ctl, t0, stats, on_accept);
  advance(states, sigma, dt2, std::move(db2), gen, ctl, t0 + dt1, stats, on_accept);
}

// Uniform steps of at most dt_max; a ragged tail step of a few ulps would
// otherwise show up as rounding noise divided by a tiny dt.
inline std::size_t step_count(double horizon, double dt_max) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(horizon / dt_max * (1.0 - 1e-12))));
}

inline std::vector<double> increments(Philox& gen, int n, double dt) {
  std::vector<double> db(static_cast<std::size_t>(n));
  const double sd = std::sqrt(dt);
  for (auto& x : db) x = sd * gen.normal();
  return db;
}

}  // namespace detail

/// One step of length dt driven by the increment db (one entry per positive
/// particle). If neither proposal is accepted the interval is split with
/// bridge refinements drawn from gen, so the state always ends at t + dt.
inline StepStats dbm_step(DbmState& state, double dt, std::span<const double> db, Philox& gen) {
  if (!(dt > 0.0)) throw ArgumentError("dbm_step: dt must be positive");
  if (static_cast<int>(db.size()) != state.n()) throw DimensionError("dbm_step: one increment per particle");
  StepStats stats;
  std::vector<double>* states[1] = {&StateAccess::s(state)};
  detail::advance(std::span<std::vector<double>* const>(states), diffusion(state.n(), state.variant()), dt,
                  std::vector<double>(db.begin(), db.end()), gen, state.controller(), state.t(), stats,
                  [](double) {});
  StateAccess::t(state) += dt;
  return stats;
}

/// As dbm_step with the complex-ensemble diffusion 1/sqrt(2N).
inline StepStats complex_variant_step(DbmState& state, double dt, std::span<const double> db, Philox& gen) {
  DbmState tmp(state.positions(), state.t(), Variant::Complex);
  tmp.set_controller(state.controller());
  const StepStats stats = dbm_step(tmp, dt, db, gen);
  StateAccess::s(state) = tmp.positions();
  StateAccess::t(state) = tmp.t();
  return stats;
}

using Observer = std::function<void(const DbmState&)>;

/// Integrates to state.t() + horizon in steps of at most controller().dt_max.
inline StepStats integrate(DbmState& state, double horizon, RngStream stream, const Observer& observer = {}) {
  if (!(horizon >= 0.0)) throw ArgumentError("integrate: horizon must be >= 0");
  StepStats total;
  if (horizon == 0.0) return total;
  Philox gen(stream);
  const double t_end = state.t() + horizon;
  const double sigma = diffusion(state.n(), state.variant());
  std::vector<double>* states[1] = {&StateAccess::s(state)};
  const double t0 = state.t();
  const std::size_t steps = detail::step_count(horizon, state.controller().dt_max);
  const double dt = horizon / static_cast<double>(steps);
  for (std::size_t k = 1; k <= steps; ++k) {
    detail::advance(std::span<std::vector<double>* const>(states), sigma, dt,
                    detail::increments(gen, state.n(), dt), gen, state.controller(), state.t(), total,
                    [](double) {});
    StateAccess::t(state) = k == steps ? t_end : t0 + static_cast<double>(k) * dt;
    if (observer) observer(state);
  }
  return total;
}

/// z_i(0, alpha) = (1 - alpha) r_i + alpha s_i.
inline std::vector<double> interpolate(std::span<const double> r, std::span<const double> s, double alpha) {
  if (r.size() != s.size()) throw DimensionError("interpolate: sizes differ");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ArgumentError("interpolate: alpha must lie in [0, 1]");
  std::vector<double> out(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (alpha == 0.0) out[i] = r[i];
    else if (alpha == 1.0) out[i] = s[i];
    else out[i] = (1.0 - alpha) * r[i] + alpha * s[i];
  }
  return out;
}

inline double linf_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

/// Two configurations driven by the same Brownian increments.
struct CoupledPair {
  DbmState a;
  DbmState b;
  RngStream stream;
  long draws = 0;  ///< number of full steps taken, so repeated advances continue the stream
};

struct CouplingTrace {
  std::vector<double> t;
  std::vector<double> distance;  ///< l-infinity distance after each accepted substep
  long violations = 0;           ///< increases larger than slack * dt
  double max_increase = -std::numeric_limits<double>::infinity();
  StepStats stats;
};

inline CoupledPair couple(std::vector<double> a0, std::vector<double> b0, RngStream stream,
                          Variant variant = Variant::Real) {
  if (a0.size() != b0.size()) throw DimensionError("couple: configurations differ in size");
  CoupledPair p{DbmState(std::move(a0), 0.0, variant), DbmState(std::move(b0), 0.0, variant), stream, 0};
  return p;
}

/// Advances both members by horizon with shared noise and records the
/// l-infinity distance at every accepted substep.
inline CouplingTrace advance(CoupledPair& pair, double horizon, double slack = 1e-9) {
  if (!(horizon >= 0.0)) throw ArgumentError("advance: horizon must be >= 0");
  CouplingTrace trace;
  const int n = pair.a.n();
  auto& sa = StateAccess::s(pair.a);
  auto& sb = StateAccess::s(pair.b);
  double t = pair.a.t();
  trace.t.push_back(t);
  trace.distance.push_back(linf_distance(sa, sb));
  if (horizon == 0.0) return trace;
  Philox gen(pair.stream.child(static_cast<std::uint64_t>(pair.draws)));
  const double t_end = t + horizon;
  const double sigma = diffusion(n, pair.a.variant());
  DtController ctl = pair.a.controller();
  std::vector<double>* states[2] = {&sa, &sb};
  double sub_t = t;
  auto on_accept = [&](double dt) {
    sub_t += dt;
    const double d = linf_distance(sa, sb);
    const double inc = d - trace.distance.back();
    trace.max_increase = std::max(trace.max_increase, inc);
    if (inc > slack * dt) ++trace.violations;
    trace.t.push_back(sub_t);
    trace.distance.push_back(d);
  };
  const double t0 = t;
  const std::size_t steps = detail::step_count(horizon, ctl.dt_max);
  const double dt = horizon / static_cast<double>(steps);
  for (std::size_t k = 1; k <= steps; ++k) {
    detail::advance(std::span<std::vector<double>* const>(states), sigma, dt, detail::increments(gen, n, dt),
                    gen, ctl, t, trace.stats, on_accept);
    t = k == steps ? t_end : t0 + static_cast<double>(k) * dt;
    sub_t = t;
  }
  StateAccess::t(pair.a) = t;
  StateAccess::t(pair.b) = t;
  ++pair.draws;
  return trace;
}

/// Snapshots of one path.
struct Trajectory {
  std::vector<double> t;
  std::vector<std::vector<double>> s;

  Observer recorder() {
    return [this](const DbmState& st) {
      t.push_back(st.t());
      s.push_back(st.positions());
    };
  }
};

/// Columns (path_id, t, i, s_i).
inline void write_trajectory_csv(std::span<const Trajectory> paths, const std::filesystem::path& path) {
  io::CsvWriter csv(path);
  csv.header({"path_id", "t", "i", "s_i"});
  for (std::size_t p = 0; p < paths.size(); ++p)
    for (std::size_t k = 0; k < paths[p].t.size(); ++k)
      for (std::size_t i = 0; i < paths[p].s[k].size(); ++i)
        csv.row(static_cast<unsigned long>(p), paths[p].t[k], static_cast<unsigned long>(i + 1), paths[p].s[k][i]);
}

}  // namespace singval::dynamics
