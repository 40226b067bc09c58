#pragma once

// Reproduction battery for the three-oscillator chain. Each check returns a
// named pass/fail line with the measured numbers.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "torusred/bundle.hpp"
#include "torusred/models.hpp"
#include "torusred/reduction.hpp"
#include "torusred/sim.hpp"

namespace torusred {

struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

inline ChainConfig preset_set1() {
  ChainConfig c;
  c.outer = {1.0, 1.0, -1.0, 1.0};
  c.middle = {1.0, 2.0, -1.0, -1.0};
  c.epsilon = 0.1;
  return c;
}

inline ChainConfig preset_set2() {
  ChainConfig c = preset_set1();
  c.outer.beta = 0.1;
  c.middle.beta = 6.0;
  return c;
}

namespace detail {

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

template <class F>
CheckResult timed(int id, std::string name, F&& body) {
  CheckResult r;
  r.id = id;
  r.name = std::move(name);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(r);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("error: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline CheckResult within_budget(CheckResult r, double budget) {
  if (r.seconds > budget) {
    r.passed = false;
    r.detail += " (runtime over " + num(budget) + " s)";
  }
  return r;
}

inline FourierMap zero_components(const FourierMap& g, const std::vector<Eigen::Index>& comps) {
  FourierMap::Coeffs c;
  for (const auto& [k, v] : g.coeffs()) {
    Eigen::VectorXcd w = v;
    for (auto i : comps) w[i] = 0.0;
    c.emplace(k, std::move(w));
  }
  return FourierMap(g.dim(), g.values(), g.radius(), std::move(c), g.is_real());
}

}  // namespace detail

/// Constants A, B from the order-2 reduction against the closed form.
inline CheckResult check_constants(int id, const std::string& name, const ChainConfig& cfg, double A_expected,
                                   double time_budget) {
  auto out = detail::timed(id, name, [&](CheckResult& r) {
    const auto res = reduce(chain_model(cfg), chain_bundle(cfg), {});
    const auto p = chain_AB_from_reduction(res), f = chain_AB(cfg);
    const double dA = std::abs(p.A - A_expected), dAf = std::abs(p.A - f.A), dB = std::abs(p.B - f.B);
    r.passed = dA <= 1e-8 && dAf <= 1e-8 && dB <= 1e-8;
    r.detail = "A_pipeline=" + detail::num(p.A) + " A_expected=" + detail::num(A_expected) + " B_pipeline=" +
               detail::num(p.B) + " B_formula=" + detail::num(f.B) + " |dA|=" + detail::num(std::max(dA, dAf)) +
               " |dB|=" + detail::num(dB);
  });
  return detail::within_budget(std::move(out), time_budget);
}

inline CheckResult check_residual_scaling(int id) {
  return detail::timed(id, "residual scaling J=2 (slope 3 +- 0.1)", [&](CheckResult& r) {
    const auto cfg = preset_set1();
    const auto model = chain_model(cfg);
    const auto res = reduce(model, chain_bundle(cfg), {});
    const double r2 = conjugacy_residual(model, res, 1e-2), r3 = conjugacy_residual(model, res, 1e-3);
    const double slope = std::log(r2 / r3) / std::log(10.0);
    r.passed = std::abs(slope - 3.0) <= 0.1;
    r.detail = "residual(1e-2)=" + detail::num(r2) + " residual(1e-3)=" + detail::num(r3) + " slope=" + detail::num(slope);
  });
}

inline CheckResult check_normal_form(int id) {
  return detail::timed(id, "normal form to K_nf = 6", [&](CheckResult& r) {
    double worst = 0.0;
    for (const auto& cfg : {preset_set1(), preset_set2()}) {
      ReductionOptions o;
      o.K_nf = 6;
      worst = std::max(worst, normal_form_defect(reduce(chain_model(cfg), chain_bundle(cfg), o)));
    }
    r.passed = worst <= 1e-10;
    r.detail = "max non-resonant |f_jk| = " + detail::num(worst);
  });
}

/// Numerical Floquet bundle of a Stuart-Landau cycle against the analytic one.
inline CheckResult check_floquet(int id) {
  auto out = detail::timed(id, "Floquet cross-check on Stuart-Landau", [&](CheckResult& r) {
    const StuartLandauParams p{1.0, 1.0, -1.0, 1.0};
    const auto cycle = sl_cycle(p);
    const auto mono = floquet_decompose(cycle, sl_field(p));
    double e0 = 1e300, e1 = 1e300;
    for (const auto& l : mono.exponents) {
      e0 = std::min(e0, std::abs(l));
      e1 = std::min(e1, std::abs(l - std::complex<double>(p.floquet(), 0.0)));
    }
    const auto num = cycle_bundle(cycle, mono);
    const auto ana = sl_bundle(p);
    double angle = 0.0;
    for (int i = 0; i < 256; ++i) {
      const double phi[1] = {2.0 * std::numbers::pi * i / 256.0};
      const Eigen::VectorXd a = num.N.real_at(phi), b = ana.N.real_at(phi);
      angle = std::max(angle, std::abs(a[0] * b[1] - a[1] * b[0]) / (a.norm() * b.norm()));
    }
    r.passed = e0 <= 1e-6 && e1 <= 1e-6 && angle <= 1e-6;
    r.detail = "|lambda_0|=" + detail::num(e0) + " |lambda_1 + 2 alpha|=" + detail::num(e1) +
               " max sin(angle)=" + detail::num(angle);
  });
  return detail::within_budget(std::move(out), 5.0);
}

inline CheckResult check_synchronisation(int id) {
  return detail::timed(id, "synchronisation, set 1 (Euler dt=0.05)", [&](CheckResult& r) {
    const auto cfg = preset_set1();
    IntegratorSpec spec{Scheme::euler, 0.05, 4000.0, 1, false};
    const auto rec = integrate_full(chain_model(cfg), 0.1, chain_state({-1.0, 0.0}, {1.0, 0.4}, {-1.0, 0.3}), spec);
    if (rec.failed) throw numerical_error("integrate_full", rec.failure);
    double worst = 0.0;
    for (std::size_t i = 0; i < rec.size(); ++i)
      if (rec.t[i] >= 2500.0) worst = std::max(worst, std::abs(rec.phi_hat[i]));
    r.passed = worst <= 0.05;
    r.detail = "max |phi_hat| on [2500,4000] = " + detail::num(worst);
  });
}

inline CheckResult check_phase_lock(int id) {
  return detail::timed(id, "phase lock, set 2 (RK4 dt=0.01)", [&](CheckResult& r) {
    const auto cfg = preset_set2();
    IntegratorSpec spec{Scheme::rk4, 0.01, 4000.0, 1, false};
    const auto rec = integrate_full(chain_model(cfg), 0.1, chain_state({1.0, 0.3}, {1.0, 0.4}, {-0.2, 0.9}), spec);
    if (rec.failed) throw numerical_error("integrate_full", rec.failure);
    double lo = 1e300, hi = -1e300;
    for (std::size_t i = 0; i < rec.size(); ++i)
      if (rec.t[i] >= 3000.0) {
        lo = std::min(lo, rec.phi_hat[i]);
        hi = std::max(hi, rec.phi_hat[i]);
      }
    const double center = 0.5 * (lo + hi), target = chain_locked_phase(chain_AB(cfg));
    const double offset = std::abs(std::remainder(center - target, 2.0 * std::numbers::pi));
    r.passed = 0.5 * (hi - lo) <= 0.1 && offset <= 0.1 && std::abs(center) > 0.1;
    r.detail = "band=[" + detail::num(lo) + "," + detail::num(hi) + "] center=" + detail::num(center) +
               " 2atan(A/B)=" + detail::num(target);
  });
}

inline SweepResult locking_time_sweep() {
  const auto cfg = preset_set1();
  SweepSpec spec{IntegratorSpec{Scheme::euler, 0.05, 1.0, 1, false}, 25.0, chain_beat_period(cfg)};
  return sweep_epsilon(chain_model(cfg), chain_state({-1.0, 0.3}, {1.0, 0.4}, {-1.0, 0.5}), log_spaced(0.02, 0.1, 20),
                       spec);
}

inline CheckResult check_locking_time_scaling(int id) {
  return detail::timed(id, "T_0.1 scaling, 20 eps in [0.02,0.1] (slope -2 +- 0.15)", [&](CheckResult& r) {
    const auto s = locking_time_sweep();
    std::size_t conv = 0;
    for (const auto& t : s.T01) conv += t.converged() ? 1 : 0;
    if (!s.fit) throw numerical_error("sweep_epsilon", s.fit_error);
    r.passed = conv == s.epsilon.size() && std::abs(s.fit->slope + 2.0) <= 0.15;
    r.detail = "converged=" + std::to_string(conv) + "/" + std::to_string(s.epsilon.size()) +
               " slope=" + detail::num(s.fit->slope);
  });
}

inline CheckResult check_gauge(int id) {
  return detail::timed(id, "gauge invariance of order-2 resonant terms", [&](CheckResult& r) {
    const auto cfg = preset_set1();
    const auto model = chain_model(cfg);
    const auto bundle = chain_bundle(cfg);
    const auto base = reduce(model, bundle, {});
    ReductionOptions alt;
    // Drop the tangential correction of oscillators 1 and 3; the dropped
    // harmonics move into f_1.
    alt.choose_g = [](int j, const FourierMap& g) { return j == 1 ? detail::zero_components(g, {0, 2}) : g; };
    const auto other = reduce(model, bundle, alt);
    const auto d0 = phase_difference_field(base, 0, 2)[2], d1 = phase_difference_field(other, 0, 2)[2];
    double diff = 0.0, moved = max_coeff_norm(other.e[1] - base.e[1]);
    for (const auto* d : {&d0, &d1})
      for (const auto& [k, c] : d->coeffs())
        if (std::abs(base.omega.dot(k)) <= base.tol_res) diff = std::max(diff, std::abs((d0.coeff(k) - d1.coeff(k))[0]));
    r.passed = diff <= 1e-8 && moved > 1e-3;
    r.detail = "max resonant difference=" + detail::num(diff) + " |e_1 change|=" + detail::num(moved);
  });
}

/// Checks 1-8 and 10 of the chain battery; check 9 (oracle equivalence) lives
/// with the test suite.
inline std::vector<CheckResult> run_battery(const std::function<void(const CheckResult&)>& on_result = {}) {
  std::vector<CheckResult> out;
  auto add = [&](CheckResult r) {
    if (on_result) on_result(r);
    out.push_back(std::move(r));
  };
  add(check_constants(1, "constants A, B for set 1", preset_set1(), 0.2, 10.0));
  add(check_constants(2, "constant A for set 2", preset_set2(), -3.9 / (4.0 + 3.9 * 3.9), 10.0));
  add(check_residual_scaling(3));
  add(check_normal_form(4));
  add(check_floquet(5));
  add(check_synchronisation(6));
  add(check_phase_lock(7));
  add(check_locking_time_scaling(8));
  add(check_gauge(10));
  return out;
}

}  // namespace torusred
