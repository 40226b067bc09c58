#pragma once

// Iterative phase reduction: at each order j solve the linearised conjugacy
// equation (d_omega - F0'(e0)) e_j + e0' f_j = G_j with the ansatz
// e_j = e0' g_j + N h_j, splitting G_j along the torus and its fast fibres.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "torusred/bundle.hpp"
#include "torusred/error.hpp"
#include "torusred/fourier.hpp"
#include "torusred/jet.hpp"
#include "torusred/models.hpp"

namespace torusred {

struct ReductionOptions {
  int J = 2;
  int K = 8;
  int K_nf = -1;                      // -1: min(6, K)
  double tol_res = -1.0;              // -1: 1e-9 |omega|
  double small_divisor_floor = 1e-6;
  double saturation_tol = 1e-10;      // relative mass allowed beyond K
  /// Optional replacement for the default tangential solution at order j:
  /// receives the default g_j and returns the g_j to use; f_j follows as
  /// U_j - d_omega g_j.
  std::function<FourierMap(int j, const FourierMap& g_default)> choose_g;
};

struct HomologicalRHS {
  FourierMap U;
  FourierMap V;
  double reconstruction_error = 0.0;  // sup |e0' U + N V - G| / sup |G|
};

struct OrderResidual {
  int j = 0;
  double G_norm = 0.0;         // sup_grid |G_j|
  double linearised = 0.0;     // sup |d_omega e_j - F0'(e0) e_j + e0' f_j - G_j| / sup|G_j|
  double ansatz = 0.0;         // sup |e0'(d_omega g_j + f_j) + N (d_omega - L) h_j - G_j| / sup|G_j|
  double reconstruction = 0.0;  // split_rhs reconstruction error
};

/// Orders 0..J; e[0] = e0, f[0] = omega (constant), g[0] = h[0] = 0.
struct ReductionResult {
  int J = 0;
  int K = 0;
  int K_nf = 0;
  double tol_res = 0.0;
  FrequencyVector omega{std::vector<double>{1.0}};
  std::vector<FourierMap> e, f, g, h, G, U, V;
  std::vector<OrderResidual> residuals;
};

namespace detail {

// Per-node linear algebra shared by all orders.
struct BundleGrid {
  std::size_t M = 0, m = 0, q = 0;
  std::vector<int> n;
  std::vector<Eigen::MatrixXd> T, N, pi, Tplus, Nplus;
  std::vector<Eigen::VectorXd> e0;
  std::vector<Eigen::MatrixXd> J0;  // F0'(e0) when a field is supplied

  BundleGrid(const TorusBundle& b, int n_per_angle, const VectorField* F0 = nullptr)
      : M(b.state_dim()), m(b.torus_dim()), q(b.normal_dim()), n(uniform_sizes(b.torus_dim(), n_per_angle)) {
    const auto gt = sample(b.tangent(), n), gn = sample(b.N, n), gp = sample(b.pi, n), ge = sample(b.e0, n);
    const std::size_t nodes = gt.nodes();
    T.reserve(nodes);
    N.reserve(nodes);
    for (std::size_t node = 0; node < nodes; ++node) {
      T.push_back(gt.matrix_at(node, M, m));
      N.push_back(gn.matrix_at(node, M, q));
      pi.push_back(gp.matrix_at(node, M, M));
      e0.push_back(ge.real_at(node));
      for (const auto* A : {&T.back(), &N.back()}) {
        const double c = condition_number(*A);
        if (!(c <= 1e10))
          throw numerical_error("split_rhs", "pseudo-inverse is ill-conditioned (condition number " +
                                                 std::to_string(c) + ")");
      }
      Tplus.push_back((T.back().transpose() * T.back()).ldlt().solve(T.back().transpose()));
      Nplus.push_back((N.back().transpose() * N.back()).ldlt().solve(N.back().transpose()));
      if (F0) J0.push_back(F0->jacobian(std::span<const double>(e0.back().data(), M)));
    }
  }

  std::size_t nodes() const { return T.size(); }
};

inline FourierMap checked_project(const TorusGrid& g, int K, double tol, const std::string& what) {
  FourierMap f = project(g, K, true);
  double total = 0.0;
  for (const auto& [k, c] : f.coeffs()) total += c.squaredNorm();
  const double kept = std::sqrt(total), lost = f.truncation_loss();
  if (lost > tol * std::max(kept, 1e-300) && lost > 1e-14)
    throw numerical_error("reduce", what + " has mass " + std::to_string(lost) + " beyond |k| = " +
                                        std::to_string(K) + " (relative " + std::to_string(lost / std::max(kept, 1e-300)) +
                                        "); raise K");
  return f;
}

inline HomologicalRHS split_on_grid(const TorusGrid& G, const BundleGrid& bg, int K, double sat_tol) {
  TorusGrid U(G.m, bg.m, G.n), V(G.m, bg.q, G.n);
  std::vector<Eigen::VectorXd> Gv(bg.nodes());
  for (std::size_t node = 0; node < bg.nodes(); ++node) {
    Gv[node] = G.real_at(node);
    const Eigen::VectorXd PG = bg.pi[node] * Gv[node];
    U.set_real(node, bg.Tplus[node] * PG);
    V.set_real(node, bg.Nplus[node] * (Gv[node] - PG));
  }
  HomologicalRHS r{checked_project(U, K, sat_tol, "U"), checked_project(V, K, sat_tol, "V"), 0.0};
  const auto gu = sample(r.U, G.n), gv = sample(r.V, G.n);
  double err = 0.0;
  for (std::size_t node = 0; node < bg.nodes(); ++node)
    err = std::max(err, (bg.T[node] * gu.real_at(node) + bg.N[node] * gv.real_at(node) - Gv[node]).norm());
  const double gs = G.sup_norm();
  r.reconstruction_error = gs > 0.0 ? err / gs : err;
  return r;
}

}  // namespace detail

/// U = (e0')^+ pi G and V = N^+ (1 - pi) G, evaluated node by node and
/// projected onto radius K (default: radius of G).
inline HomologicalRHS split_rhs(const FourierMap& G, const TorusBundle& b, int K = -1) {
  if (G.dim() != b.torus_dim() || G.values() != b.state_dim())
    throw dimension_error("split_rhs: G does not match the bundle");
  if (K < 0) K = std::max(G.radius(), b.radius());
  const int n = dealiased_size(std::max(K, b.radius()));
  detail::BundleGrid bg(b, n);
  return detail::split_on_grid(sample(G, bg.n), bg, K, 1e-10);
}

/// Coefficient-wise solution of i<omega,k> g_k + f_k = U_k in normal form to
/// order K_nf: f keeps resonant terms and those beyond K_nf.
inline std::pair<FourierMap, FourierMap> solve_tangential(const FourierMap& U, const FrequencyVector& omega, int K_nf,
                                                          double tol_res, double small_divisor_floor = 1e-6) {
  if (U.dim() != omega.size()) throw dimension_error("solve_tangential: torus dimension differs from |omega|");
  FourierMap::Coeffs f, g;
  const long K2 = static_cast<long>(K_nf) * K_nf;
  for (const auto& [k, c] : U.coeffs()) {
    const double s = omega.dot(k);
    if (std::abs(s) <= tol_res || norm2(k) > K2) {
      f.emplace(k, c);
      continue;
    }
    if (std::abs(s) < small_divisor_floor) {
      // Name the representative of {k, -k} whose first nonzero entry is positive.
      const auto lead = std::find_if(k.begin(), k.end(), [](int v) { return v != 0; });
      const Wavevector kk = lead != k.end() && *lead < 0 ? negated(k) : k;
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3g", std::abs(s));
      throw numerical_error("solve_tangential", std::string("small divisor |<omega,k>| = ") + buf + " at k = " +
                                                    to_string(kk));
    }
    g.emplace(k, c / cplx(0.0, s));
  }
  return {FourierMap(U.dim(), U.values(), U.radius(), std::move(f), U.is_real()),
          FourierMap(U.dim(), U.values(), U.radius(), std::move(g), U.is_real())};
}

/// h_k = (i<omega,k> - L)^{-1} V_k.
inline FourierMap solve_normal(const FourierMap& V, const FrequencyVector& omega, const Eigen::MatrixXd& L) {
  const auto q = L.rows();
  if (L.cols() != q || static_cast<Eigen::Index>(V.values()) != q)
    throw dimension_error("solve_normal: L and V dimensions differ");
  Eigen::EigenSolver<Eigen::MatrixXd> es(L, false);
  for (Eigen::Index i = 0; i < q; ++i)
    if (std::abs(es.eigenvalues()[i].real()) <= 1e-9)
      throw numerical_error("solve_normal", "Floquet matrix is not hyperbolic (eigenvalue " +
                                                std::to_string(es.eigenvalues()[i].real()) + " + " +
                                                std::to_string(es.eigenvalues()[i].imag()) + "i)");
  const Eigen::MatrixXcd Lc = L.cast<cplx>();
  FourierMap::Coeffs h;
  for (const auto& [k, c] : V.coeffs()) {
    Eigen::MatrixXcd A = -Lc;
    A.diagonal().array() += cplx(0.0, omega.dot(k));
    h.emplace(k, A.partialPivLu().solve(c));
  }
  return FourierMap(V.dim(), V.values(), V.radius(), std::move(h), V.is_real());
}

namespace detail {

// Grid of sum_{a=1}^{j-1} e_a' f_{j-a}.
inline TorusGrid tangent_flux(int j, const std::vector<FourierMap>& e, const std::vector<FourierMap>& f,
                              const std::vector<int>& n) {
  const std::size_t M = e[0].values(), m = e[0].dim();
  TorusGrid out(m, M, n);
  for (int a = 1; a < j; ++a) {
    const auto ta = sample(tangent_map(e[static_cast<std::size_t>(a)]), n);
    const auto fb = sample(f[static_cast<std::size_t>(j - a)], n);
    for (std::size_t node = 0; node < out.nodes(); ++node) {
      const Eigen::VectorXd v = ta.matrix_at(node, M, m) * fb.real_at(node);
      for (std::size_t c = 0; c < M; ++c) out.at(node, c) += v[static_cast<Eigen::Index>(c)];
    }
  }
  return out;
}

inline TorusGrid compute_G_grid(int j, const OscillatorModel& model, const std::vector<FourierMap>& e,
                                const std::vector<FourierMap>& f, const std::vector<int>& n) {
  std::vector<TorusGrid> eg;
  eg.reserve(static_cast<std::size_t>(j));
  for (int i = 0; i < j; ++i) eg.push_back(sample(e[static_cast<std::size_t>(i)], n));
  std::vector<const TorusGrid*> ptr;
  for (int i = 0; i < j; ++i)
    ptr.push_back(i > 0 && e[static_cast<std::size_t>(i)].empty() ? nullptr : &eg[static_cast<std::size_t>(i)]);
  auto jet = jet_compose_grid(model.fields, ptr, j);
  TorusGrid G = std::move(jet[static_cast<std::size_t>(j)]);
  const auto flux = tangent_flux(j, e, f, n);
  for (std::size_t i = 0; i < G.values.size(); ++i) G.values[i] = cplx(G.values[i].real() - flux.values[i].real(), 0.0);
  return G;
}

}  // namespace detail

/// G_j = [eps^j] ( F(e_0 + ... + eps^{j-1} e_{j-1}) - (e_0 + ...)' (omega + ... + eps^{j-1} f_{j-1}) )
/// from the orders already computed (e and f hold at least orders 0..j-1).
inline FourierMap compute_G(int j, const OscillatorModel& model, const std::vector<FourierMap>& e,
                            const std::vector<FourierMap>& f, int K) {
  if (j < 1 || static_cast<int>(e.size()) < j || static_cast<int>(f.size()) < j)
    throw config_error("compute_G: orders 0..j-1 must be available");
  const auto n = uniform_sizes(e[0].dim(), dealiased_size(K));
  return project(detail::compute_G_grid(j, model, e, f, n), K, true);
}

/// Phase reduction to order J about the torus described by `bundle`.
inline ReductionResult reduce(const OscillatorModel& model, const TorusBundle& bundle, ReductionOptions opt = {}) {
  if (opt.J < 0 || opt.J > 4) throw config_error("reduction order J must lie in 0..4");
  if (opt.K < 1) throw config_error("truncation radius K must be positive");
  if (opt.K_nf < 0) opt.K_nf = std::min(6, opt.K);
  if (opt.K_nf > opt.K) throw config_error("K_nf must not exceed K");
  if (opt.tol_res < 0.0) opt.tol_res = 1e-9 * bundle.omega.norm();
  if (model.fields.empty() || model.state_dim() != bundle.state_dim())
    throw dimension_error("reduce: model and bundle state dimensions differ");
  const auto diag = diagnose(bundle, model.fields[0]);
  if (diag.pde_residual > 1e-8 || diag.invariance > 1e-8)
    throw numerical_error("reduce", "bundle is not consistent with the uncoupled field (fibre residual " +
                                        std::to_string(diag.pde_residual) + ", invariance " +
                                        std::to_string(diag.invariance) + ")");

  const std::size_t M = bundle.state_dim(), m = bundle.torus_dim(), q = bundle.normal_dim();
  const int K = opt.K;
  const int n1 = dealiased_size(std::max(K, bundle.radius()));
  detail::BundleGrid bg(bundle, n1, &model.fields[0]);
  const auto& n = bg.n;

  ReductionResult r;
  r.J = opt.J;
  r.K = K;
  r.K_nf = opt.K_nf;
  r.tol_res = opt.tol_res;
  r.omega = bundle.omega;
  Eigen::VectorXd w(static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) w[static_cast<Eigen::Index>(i)] = bundle.omega[i];
  r.e.push_back(bundle.e0);
  r.f.push_back(FourierMap::constant(m, w, K));
  r.g.push_back(FourierMap::zero(m, m, K));
  r.h.push_back(FourierMap::zero(m, q, K));
  r.G.push_back(FourierMap::zero(m, M, K));
  r.U.push_back(FourierMap::zero(m, m, K));
  r.V.push_back(FourierMap::zero(m, q, K));

  for (int j = 1; j <= opt.J; ++j) {
    const std::string tag = "order-" + std::to_string(j) + " ";
    const TorusGrid Gg = detail::compute_G_grid(j, model, r.e, r.f, n);
    FourierMap G = detail::checked_project(Gg, K, opt.saturation_tol, tag + "G");
    auto rhs = detail::split_on_grid(Gg, bg, K, opt.saturation_tol);
    if (rhs.reconstruction_error > 1e-9)
      throw numerical_error("split_rhs", tag + "reconstruction error " + std::to_string(rhs.reconstruction_error));
    auto [fj, gj] = solve_tangential(rhs.U, bundle.omega, opt.K_nf, opt.tol_res, opt.small_divisor_floor);
    if (opt.choose_g) {
      gj = opt.choose_g(j, gj);
      fj = rhs.U - d_omega(gj, bundle.omega);
    }
    FourierMap hj = solve_normal(rhs.V, bundle.omega, bundle.L);

    // e_j = e0' g_j + N h_j and the two residual forms of the homological equation.
    const auto sg = sample(gj, n), sh = sample(hj, n), sf = sample(fj, n);
    const auto sdg = sample(d_omega(gj, bundle.omega), n);
    const FourierMap Lh = [&] {
      FourierMap::Coeffs c;
      const Eigen::MatrixXcd Lc = bundle.L.cast<cplx>();
      for (const auto& [k, v] : hj.coeffs()) c.emplace(k, Lc * v);
      return FourierMap(m, q, hj.radius(), std::move(c), hj.is_real());
    }();
    const auto sdh = sample(d_omega(hj, bundle.omega) - Lh, n);
    TorusGrid eg(m, M, n);
    OrderResidual res;
    res.j = j;
    res.reconstruction = rhs.reconstruction_error;
    for (std::size_t node = 0; node < bg.nodes(); ++node) {
      eg.set_real(node, bg.T[node] * sg.real_at(node) + bg.N[node] * sh.real_at(node));
      const Eigen::VectorXd lhs = bg.T[node] * (sdg.real_at(node) + sf.real_at(node)) + bg.N[node] * sdh.real_at(node);
      res.ansatz = std::max(res.ansatz, (lhs - Gg.real_at(node)).norm());
    }
    FourierMap ej = detail::checked_project(eg, K, opt.saturation_tol, tag + "e");
    const auto sde = sample(d_omega(ej, bundle.omega), n), se = sample(ej, n);
    for (std::size_t node = 0; node < bg.nodes(); ++node) {
      const Eigen::VectorXd lin =
          sde.real_at(node) - bg.J0[node] * se.real_at(node) + bg.T[node] * sf.real_at(node) - Gg.real_at(node);
      res.linearised = std::max(res.linearised, lin.norm());
    }
    res.G_norm = Gg.sup_norm();
    if (res.G_norm > 0.0) {
      res.ansatz /= res.G_norm;
      res.linearised /= res.G_norm;
    }
    if (res.linearised > 1e-8 || res.ansatz > 1e-8)
      throw numerical_error("reduce", tag + "homological residual " + std::to_string(std::max(res.linearised, res.ansatz)) +
                                          " exceeds 1e-8");
    r.e.push_back(std::move(ej));
    r.f.push_back(std::move(fj));
    r.g.push_back(std::move(gj));
    r.h.push_back(std::move(hj));
    r.G.push_back(std::move(G));
    r.U.push_back(std::move(rhs.U));
    r.V.push_back(std::move(rhs.V));
    r.residuals.push_back(res);
  }
  return r;
}

/// Orders 0..J of f^(i) - f^(j) as scalar maps.
inline std::vector<FourierMap> phase_difference_field(const ReductionResult& r, std::size_t i, std::size_t j) {
  const std::size_t m = r.omega.size();
  if (i >= m || j >= m) throw dimension_error("phase_difference_field: index out of range");
  std::vector<FourierMap> out;
  for (const auto& f : r.f) out.push_back((f.component(i) - f.component(j)).pruned(0.0));
  return out;
}

/// Largest f_j coefficient at non-resonant k with |k| <= K_nf.
inline double normal_form_defect(const ReductionResult& r) {
  double worst = 0.0;
  const long K2 = static_cast<long>(r.K_nf) * r.K_nf;
  for (std::size_t j = 1; j < r.f.size(); ++j)
    for (const auto& [k, c] : r.f[j].coeffs())
      if (norm2(k) <= K2 && std::abs(r.omega.dot(k)) > r.tol_res) worst = std::max(worst, c.norm());
  return worst;
}

/// sup_grid |e' f - F(e)| for e = sum eps^j e_j, f = omega + sum eps^j f_j and
/// F = sum eps^l F_l.
inline double conjugacy_residual(const OscillatorModel& model, const ReductionResult& r, double eps, int n = 0) {
  const std::size_t M = r.e[0].values(), m = r.e[0].dim();
  if (n <= 0) n = dealiased_size(r.K);
  FourierMap e = r.e[0], f = r.f[0];
  double w = 1.0;
  for (std::size_t j = 1; j < r.e.size(); ++j) {
    w *= eps;
    e = e + w * r.e[j];
    f = f + w * r.f[j];
  }
  const auto se = sample(e, n), st = sample(tangent_map(e), n), sf = sample(f, n);
  std::vector<double> x(M), y(M);
  double worst = 0.0;
  for (std::size_t node = 0; node < se.nodes(); ++node) {
    const Eigen::VectorXd xe = se.real_at(node);
    std::copy(xe.data(), xe.data() + static_cast<Eigen::Index>(M), x.begin());
    model.evaluate(x, eps, y);
    const Eigen::VectorXd lhs = st.matrix_at(node, M, m) * sf.real_at(node);
    worst = std::max(worst, (lhs - Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(M))).norm());
  }
  return worst;
}

/// Order-2 constants of the chain read off the reduced field: the (1,0,-1)
/// coefficient of f_2^(1) - f_2^(3) is (-B + iA)/2.
inline ChainConstants chain_AB_from_reduction(const ReductionResult& r) {
  if (r.J < 2 || r.omega.size() != 3) throw config_error("chain constants need a 3-torus reduction of order >= 2");
  const auto d = phase_difference_field(r, 0, 2)[2];
  const cplx c = d.coeff({1, 0, -1})[0];
  return {2.0 * c.imag(), -2.0 * c.real()};
}

inline nlohmann::json to_json(const ReductionResult& r) {
  nlohmann::json orders = nlohmann::json::array();
  for (int j = 0; j <= r.J; ++j) {
    const auto u = static_cast<std::size_t>(j);
    orders.push_back({{"j", j}, {"e", to_json(r.e[u])}, {"f", to_json(r.f[u])}, {"g", to_json(r.g[u])},
                      {"h", to_json(r.h[u])}});
  }
  nlohmann::json res = nlohmann::json::array();
  for (const auto& x : r.residuals)
    res.push_back({{"j", x.j}, {"G_sup", x.G_norm}, {"linearised", x.linearised}, {"ansatz", x.ansatz},
                   {"reconstruction", x.reconstruction}});
  return {{"J", r.J},         {"K", r.K},           {"K_nf", r.K_nf}, {"tol_res", r.tol_res},
          {"omega", r.omega.values()}, {"orders", orders}, {"residuals", res}};
}

}  // namespace torusred
