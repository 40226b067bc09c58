#pragma once

// Fixed-step integration of full and reduced systems, the phase observable
// Arg(z_i conj z_j), T_0.1 measurement and epsilon sweeps.

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "torusred/error.hpp"
#include "torusred/fourier.hpp"
#include "torusred/models.hpp"
#include "torusred/reduction.hpp"

namespace torusred {

enum class Scheme { euler, rk4 };

inline Scheme scheme_from_string(const std::string& s) {
  if (s == "euler") return Scheme::euler;
  if (s == "rk4") return Scheme::rk4;
  throw config_error("unknown integrator scheme '" + s + "' (expected euler or rk4)");
}

inline std::string to_string(Scheme s) { return s == Scheme::euler ? "euler" : "rk4"; }

struct IntegratorSpec {
  Scheme scheme = Scheme::rk4;
  double dt = 0.01;
  double t_end = 100.0;
  std::size_t record_stride = 1;  // record every n-th step
  bool record_states = true;      // false keeps only t and the phase observable

  void validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw config_error("integrator step dt must be positive");
    if (!(t_end > 0.0) || !std::isfinite(t_end)) throw config_error("integrator horizon t_end must be positive");
    if (record_stride == 0) throw config_error("record_stride must be at least 1");
  }

  std::size_t steps() const { return static_cast<std::size_t>(std::llround(t_end / dt)); }
};

struct TrajectoryRecord {
  bool reduced = false;
  std::size_t state_dim = 0;
  std::vector<double> t;
  std::vector<double> states;   // row-major, state_dim per recorded time
  std::vector<double> phi_hat;  // unwrapped phase observable (empty if none)
  bool failed = false;
  std::string failure;

  std::size_t size() const { return t.size(); }
  Eigen::Map<const Eigen::VectorXd> state(std::size_t i) const {
    return {states.data() + i * state_dim, static_cast<Eigen::Index>(state_dim)};
  }
};

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Nearest-branch continuation of an angle.
inline double unwrap(double prev, double raw) {
  double d = std::remainder(raw - prev, 2.0 * std::numbers::pi);
  return prev + d;
}

template <class Rhs>
void step(Scheme s, const Rhs& f, Eigen::VectorXd& x, double dt, Eigen::VectorXd& k1, Eigen::VectorXd& k2,
          Eigen::VectorXd& k3, Eigen::VectorXd& k4, Eigen::VectorXd& tmp) {
  f(x, k1);
  if (s == Scheme::euler) {
    x += dt * k1;
    return;
  }
  tmp = x + 0.5 * dt * k1;
  f(tmp, k2);
  tmp = x + 0.5 * dt * k2;
  f(tmp, k3);
  tmp = x + dt * k3;
  f(tmp, k4);
  x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// Generic driver: `observe(x)` returns the raw observable or NaN for none.
template <class Rhs, class Obs>
TrajectoryRecord integrate(const Rhs& f, const Obs& observe, Eigen::VectorXd x, const IntegratorSpec& spec,
                           bool reduced, bool continuous_observable) {
  spec.validate();
  TrajectoryRecord rec;
  rec.reduced = reduced;
  rec.state_dim = static_cast<std::size_t>(x.size());
  const std::size_t steps = spec.steps();
  Eigen::VectorXd k1(x.size()), k2(x.size()), k3(x.size()), k4(x.size()), tmp(x.size());
  double obs = observe(x);
  const bool has_obs = !std::isnan(obs);
  auto record = [&](double t) {
    rec.t.push_back(t);
    if (spec.record_states) rec.states.insert(rec.states.end(), x.data(), x.data() + x.size());
    if (has_obs) rec.phi_hat.push_back(obs);
  };
  record(0.0);
  for (std::size_t s = 1; s <= steps; ++s) {
    step(spec.scheme, f, x, spec.dt, k1, k2, k3, k4, tmp);
    if (!x.allFinite() || x.cwiseAbs().maxCoeff() > 1e12) {
      rec.failed = true;
      rec.failure = "state blew up at t = " + fmt17(static_cast<double>(s) * spec.dt);
      return rec;
    }
    if (has_obs) obs = continuous_observable ? observe(x) : unwrap(obs, observe(x));
    if (s % spec.record_stride == 0 || s == steps) record(static_cast<double>(s) * spec.dt);
  }
  return rec;
}

}  // namespace detail

/// x' = F_0(x) + eps F_1(x) + ... from x0. Records Arg(z_i conj z_j),
/// unwrapped, when the model names a phase pair.
inline TrajectoryRecord integrate_full(const OscillatorModel& model, double eps, const Eigen::VectorXd& x0,
                                       const IntegratorSpec& spec) {
  const std::size_t M = model.state_dim();
  if (static_cast<std::size_t>(x0.size()) != M) throw dimension_error("integrate_full: x0 has wrong dimension");
  if (!x0.allFinite()) throw config_error("integrate_full: x0 must be finite");
  std::optional<std::pair<std::size_t, std::size_t>> off;
  if (model.phase_pair) {
    std::size_t oi = 0, oj = 0, acc = 0;
    for (std::size_t b = 0; b < model.block_dims.size(); ++b) {
      if (b == model.phase_pair->first) oi = acc;
      if (b == model.phase_pair->second) oj = acc;
      acc += model.block_dims[b];
    }
    off = std::make_pair(oi, oj);
  }
  auto rhs = [&](const Eigen::VectorXd& x, Eigen::VectorXd& out) {
    model.evaluate(std::span<const double>(x.data(), M), eps, std::span<double>(out.data(), M));
  };
  auto observe = [&](const Eigen::VectorXd& x) {
    if (!off) return std::numeric_limits<double>::quiet_NaN();
    const std::complex<double> zi(x[static_cast<Eigen::Index>(off->first)], x[static_cast<Eigen::Index>(off->first + 1)]);
    const std::complex<double> zj(x[static_cast<Eigen::Index>(off->second)],
                                  x[static_cast<Eigen::Index>(off->second + 1)]);
    return std::arg(zi * std::conj(zj));
  };
  return detail::integrate(rhs, observe, x0, spec, false, false);
}

/// phi' = omega + sum_j eps^j f_j(phi); angles are kept unwrapped. When
/// `pair` is given, phi_i - phi_j is recorded as the observable.
inline TrajectoryRecord integrate_reduced(const ReductionResult& r, double eps, const Eigen::VectorXd& phi0,
                                          const IntegratorSpec& spec,
                                          std::optional<std::pair<std::size_t, std::size_t>> pair = std::nullopt) {
  const std::size_t m = r.omega.size();
  if (static_cast<std::size_t>(phi0.size()) != m) throw dimension_error("integrate_reduced: phi0 has wrong dimension");
  spec.validate();
  double wmax = 0.0;
  for (double w : r.omega.values()) wmax = std::max(wmax, std::abs(w));
  if (wmax * spec.dt >= std::numbers::pi)
    throw config_error("integrate_reduced: dt too large for angle unwrapping (max |omega| dt >= pi)");
  FourierMap f = r.f[0];
  double w = 1.0;
  for (std::size_t j = 1; j < r.f.size(); ++j) {
    w *= eps;
    f = f + w * r.f[j];
  }
  auto rhs = [&](const Eigen::VectorXd& x, Eigen::VectorXd& out) {
    out = f(std::span<const double>(x.data(), m)).real();
  };
  auto observe = [&](const Eigen::VectorXd& x) {
    if (!pair) return std::numeric_limits<double>::quiet_NaN();
    return x[static_cast<Eigen::Index>(pair->first)] - x[static_cast<Eigen::Index>(pair->second)];
  };
  return detail::integrate(rhs, observe, phi0, spec, true, true);
}

inline void write_csv(std::ostream& os, const TrajectoryRecord& rec) {
  const bool obs = !rec.phi_hat.empty();
  os << "t";
  if (!rec.states.empty()) {
    if (rec.reduced) {
      for (std::size_t i = 0; i < rec.state_dim; ++i) os << ",phi" << i + 1;
    } else {
      for (std::size_t i = 0; i < rec.state_dim / 2; ++i) os << ",re_z" << i + 1 << ",im_z" << i + 1;
    }
  }
  if (obs) os << ",phi_hat";
  os << "\n";
  for (std::size_t i = 0; i < rec.size(); ++i) {
    os << detail::fmt17(rec.t[i]);
    if (!rec.states.empty())
      for (std::size_t c = 0; c < rec.state_dim; ++c) os << "," << detail::fmt17(rec.states[i * rec.state_dim + c]);
    if (obs) os << "," << detail::fmt17(rec.phi_hat[i]);
    os << "\n";
  }
}

// ---------------------------------------------------------------------------
// Synchronisation time

struct T01Result {
  double envelope = std::numeric_limits<double>::quiet_NaN();  // NaN: never reached
  double raw = std::numeric_limits<double>::quiet_NaN();
  bool converged() const { return std::isfinite(envelope); }
};

/// Forward running maximum of |x| over windows [t, t + window]; entries whose
/// window runs past the end of the record are NaN.
inline std::vector<double> envelope(const std::vector<double>& t, const std::vector<double>& x, double window) {
  const std::size_t n = t.size();
  std::vector<double> env(n, std::numeric_limits<double>::quiet_NaN());
  if (n == 0) return env;
  // Monotone deque over indices, sliding the right edge forward.
  std::vector<std::size_t> dq;
  std::size_t head = 0, right = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (t[i] + window > t[n - 1] + 1e-12 * std::max(1.0, t[n - 1])) break;
    while (right < n && t[right] <= t[i] + window + 1e-12 * std::max(1.0, t[right])) {
      const double v = std::abs(x[right]);
      while (dq.size() > head && std::abs(x[dq.back()]) <= v) dq.pop_back();
      dq.push_back(right);
      ++right;
    }
    while (dq[head] < i) ++head;
    env[i] = std::abs(x[dq[head]]);
  }
  return env;
}

/// First time the |observable| envelope (window = one slow beat period) drops
/// to 10% of |observable(0)|; also the first such time of the raw signal.
inline T01Result measure_T01(const TrajectoryRecord& rec, double window) {
  if (rec.phi_hat.empty()) throw config_error("measure_T01: record has no phase observable");
  const double base = std::abs(rec.phi_hat.front());
  if (base < 1e-6) throw numerical_error("measure_T01", "initial phase difference below 1e-6: baseline undefined");
  T01Result r;
  const double thr = 0.1 * base;
  for (std::size_t i = 0; i < rec.size(); ++i)
    if (std::abs(rec.phi_hat[i]) <= thr) {
      r.raw = rec.t[i];
      break;
    }
  const auto env = envelope(rec.t, rec.phi_hat, window);
  for (std::size_t i = 0; i < env.size(); ++i)
    if (env[i] <= thr) {
      r.envelope = rec.t[i];
      break;
    }
  return r;
}

// ---------------------------------------------------------------------------
// Sweeps

struct LogLogFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Least-squares line through (ln x, ln y).
inline LogLogFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw dimension_error("fit_loglog: length mismatch");
  if (x.size() < 3) throw numerical_error("fit_loglog", "fewer than 3 converged points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = std::log(x[i]), b = std::log(y[i]);
    sx += a;
    sy += b;
    sxx += a * a;
    sxy += a * b;
  }
  const double den = n * sxx - sx * sx;
  if (den == 0.0) throw numerical_error("fit_loglog", "all abscissae coincide");
  LogLogFit f;
  f.slope = (n * sxy - sx * sy) / den;
  f.intercept = (sy - f.slope * sx) / n;
  return f;
}

struct SweepResult {
  std::vector<double> epsilon;
  std::vector<T01Result> T01;
  std::optional<LogLogFit> fit;  // empty with fewer than 3 converged runs
  std::string fit_error;

  void refit() {
    std::vector<double> x, y;
    for (std::size_t i = 0; i < epsilon.size(); ++i)
      if (T01[i].converged()) {
        x.push_back(epsilon[i]);
        y.push_back(T01[i].envelope);
      }
    try {
      fit = fit_loglog(x, y);
      fit_error.clear();
    } catch (const numerical_error& e) {
      fit.reset();
      fit_error = e.what();
    }
  }
};

inline void write_csv(std::ostream& os, const SweepResult& s) {
  os << "epsilon,T01,converged\n";
  for (std::size_t i = 0; i < s.epsilon.size(); ++i)
    os << detail::fmt17(s.epsilon[i]) << "," << detail::fmt17(s.T01[i].envelope) << ","
       << (s.T01[i].converged() ? 1 : 0) << "\n";
}

/// n values from lo to hi, equally spaced in ln.
inline std::vector<double> log_spaced(double lo, double hi, std::size_t n) {
  if (!(lo > 0.0) || !(hi > lo) || n < 2) throw config_error("log_spaced: need 0 < lo < hi and n >= 2");
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i)
    v[i] = std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * static_cast<double>(i) / static_cast<double>(n - 1));
  return v;
}

/// Worker count for sweeps: TORUSRED_THREADS if set, else the hardware count.
inline std::size_t sweep_threads() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* s = std::getenv("TORUSRED_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(s, &end, 10);
    if (end == s || *end != '\0' || v < 1) throw config_error("TORUSRED_THREADS must be a positive integer");
    n = std::min(n, static_cast<std::size_t>(v));
  }
  return n;
}

namespace detail {

template <class Run>
SweepResult run_sweep(const std::vector<double>& eps, const Run& run) {
  for (std::size_t i = 1; i < eps.size(); ++i)
    if (!(eps[i] > eps[i - 1]) && !(eps[i] < eps[i - 1]))
      throw config_error("sweep epsilon values must be strictly monotone");
  for (std::size_t i = 2; i < eps.size(); ++i)
    if ((eps[i] > eps[i - 1]) != (eps[1] > eps[0])) throw config_error("sweep epsilon values must be strictly monotone");
  SweepResult s;
  s.epsilon = eps;
  s.T01.resize(eps.size());
  std::vector<std::string> errors(eps.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < eps.size();) {
      try {
        s.T01[i] = run(eps[i]);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const std::size_t nt = std::min(sweep_threads(), eps.size());
  std::vector<std::thread> pool;
  for (std::size_t k = 1; k < nt; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (const auto& e : errors)
    if (!e.empty()) throw numerical_error("sweep_epsilon", e);
  s.refit();
  return s;
}

}  // namespace detail

struct SweepSpec {
  IntegratorSpec integrator;
  double horizon_scale = 25.0;  // t_end = horizon_scale / eps^2 (0: integrator.t_end)
  double window = 0.0;          // envelope window for T_0.1
};

inline SweepResult sweep_epsilon(const OscillatorModel& model, const Eigen::VectorXd& x0,
                                 const std::vector<double>& eps, const SweepSpec& spec) {
  return detail::run_sweep(eps, [&](double e) {
    IntegratorSpec is = spec.integrator;
    if (spec.horizon_scale > 0.0) is.t_end = spec.horizon_scale / (e * e);
    is.record_states = false;
    const auto rec = integrate_full(model, e, x0, is);
    if (rec.failed) return T01Result{};
    return measure_T01(rec, spec.window);
  });
}

inline SweepResult sweep_reduced(const ReductionResult& r, const Eigen::VectorXd& phi0,
                                 std::pair<std::size_t, std::size_t> pair, const std::vector<double>& eps,
                                 const SweepSpec& spec) {
  return detail::run_sweep(eps, [&](double e) {
    IntegratorSpec is = spec.integrator;
    if (spec.horizon_scale > 0.0) is.t_end = spec.horizon_scale / (e * e);
    is.record_states = false;
    const auto rec = integrate_reduced(r, e, phi0, is, pair);
    if (rec.failed) return T01Result{};
    return measure_T01(rec, spec.window);
  });
}

// ---------------------------------------------------------------------------
// Chain helpers

/// State (z1, z2, z3) in R^6.
inline Eigen::VectorXd chain_state(std::complex<double> z1, std::complex<double> z2, std::complex<double> z3) {
  Eigen::VectorXd x(6);
  x << z1.real(), z1.imag(), z2.real(), z2.imag(), z3.real(), z3.imag();
  return x;
}

/// Slow beat period 2 pi / |omega_1 - omega_2| of the chain.
inline double chain_beat_period(const ChainConfig& cfg) {
  return 2.0 * std::numbers::pi / std::abs(cfg.outer.frequency() - cfg.middle.frequency());
}

/// Phases (arg z1, arg z2, arg z3) of a chain state, for starting the reduced flow.
inline Eigen::VectorXd chain_phases(const Eigen::VectorXd& x) {
  Eigen::VectorXd p(3);
  for (int i = 0; i < 3; ++i) p[i] = std::atan2(x[2 * i + 1], x[2 * i]);
  return p;
}

}  // namespace torusred
