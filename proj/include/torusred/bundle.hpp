#pragma once

// Reducible normally hyperbolic tori: oblique projections, Floquet
// decomposition of limit cycles, fast fibre maps and product bundles.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "torusred/error.hpp"
#include "torusred/fourier.hpp"
#include "torusred/jet.hpp"

namespace torusred {

inline double condition_number(const Eigen::MatrixXd& A) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return 1.0;
  const double smin = s[s.size() - 1];
  return smin == 0.0 ? std::numeric_limits<double>::infinity() : s[0] / smin;
}

/// Projection onto im A along im B for a transverse pair of injective maps:
///   pi = A (A^T P A)^{-1} A^T P,   P = 1 - B (B^T B)^{-1} B^T.
inline Eigen::MatrixXd oblique_projection(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                          double max_condition = 1e10) {
  const Eigen::Index M = A.rows();
  if (B.rows() != M || A.cols() + B.cols() != M)
    throw dimension_error("oblique_projection: need A (M x m) and B (M x (M-m))");
  Eigen::MatrixXd AB(M, M);
  AB << A, B;
  const double cond = condition_number(AB);
  if (!(cond <= max_condition))
    throw numerical_error("oblique_projection",
                          "tangent and fibre directions are nearly degenerate (condition number " +
                              std::to_string(cond) + ")");
  Eigen::MatrixXd P = Eigen::MatrixXd::Identity(M, M);
  if (B.cols() > 0) P -= B * (B.transpose() * B).ldlt().solve(B.transpose());
  const Eigen::MatrixXd AtP = A.transpose() * P;
  return A * (AtP * A).ldlt().solve(AtP);
}

// ---------------------------------------------------------------------------
// Limit cycles

/// A T-periodic orbit sampled at t_i = i T / n, i = 0..n (the last sample
/// closes the orbit).
struct LimitCycle {
  double period = 0.0;
  double omega = 0.0;  // 2 pi / period
  std::vector<Eigen::VectorXd> samples;
  bool analytic = false;

  LimitCycle(double T, std::vector<Eigen::VectorXd> x, bool is_analytic)
      : period(T), omega(2.0 * std::numbers::pi / T), samples(std::move(x)), analytic(is_analytic) {
    if (!(T > 0.0) || !std::isfinite(T)) throw config_error("limit cycle period must be positive");
    if (samples.size() < 3) throw config_error("limit cycle needs at least two sample intervals");
    const double scale = std::max(1.0, samples.front().norm());
    const double gap = (samples.back() - samples.front()).norm();
    if (gap > 1e-8 * scale)
      throw numerical_error("limit_cycle", "orbit does not close: |X(T) - X(0)| = " + std::to_string(gap));
  }

  std::size_t dim() const { return static_cast<std::size_t>(samples.front().size()); }
  std::size_t intervals() const { return samples.size() - 1; }
};

namespace detail {

struct VariationalRun {
  std::vector<Eigen::VectorXd> orbit;
  std::vector<Eigen::MatrixXd> fundamental;
};

// Classical RK4 on x' = F(x), Phi' = DF(x) Phi, Phi(0) = Id.
inline VariationalRun integrate_variational(const VectorField& F, const Eigen::VectorXd& x0, double T,
                                            std::size_t steps) {
  const auto M = x0.size();
  const double h = T / static_cast<double>(steps);
  auto rhs = [&](const Eigen::VectorXd& x, const Eigen::MatrixXd& Phi, Eigen::VectorXd& dx, Eigen::MatrixXd& dPhi) {
    dx.resize(M);
    F.value(std::span<const double>(x.data(), static_cast<std::size_t>(M)),
            std::span<double>(dx.data(), static_cast<std::size_t>(M)));
    dPhi = F.jacobian(std::span<const double>(x.data(), static_cast<std::size_t>(M))) * Phi;
  };
  VariationalRun run;
  run.orbit.reserve(steps + 1);
  run.fundamental.reserve(steps + 1);
  Eigen::VectorXd x = x0;
  Eigen::MatrixXd Phi = Eigen::MatrixXd::Identity(M, M);
  run.orbit.push_back(x);
  run.fundamental.push_back(Phi);
  Eigen::VectorXd k1, k2, k3, k4;
  Eigen::MatrixXd l1, l2, l3, l4;
  for (std::size_t s = 0; s < steps; ++s) {
    rhs(x, Phi, k1, l1);
    rhs(x + 0.5 * h * k1, Phi + 0.5 * h * l1, k2, l2);
    rhs(x + 0.5 * h * k2, Phi + 0.5 * h * l2, k3, l3);
    rhs(x + h * k3, Phi + h * l3, k4, l4);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    Phi += (h / 6.0) * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
    if (!x.allFinite() || !Phi.allFinite())
      throw numerical_error("variational_integration", "state became non-finite");
    run.orbit.push_back(x);
    run.fundamental.push_back(Phi);
  }
  return run;
}

}  // namespace detail

/// Newton shooting for a periodic orbit of F near (x_guess, T_guess), with
/// the phase fixed by F(x_ref) . (x - x_ref) = 0. Uses RK4 with `steps` steps
/// per period.
inline LimitCycle find_limit_cycle(const VectorField& F, Eigen::VectorXd x, double T, std::size_t steps = 2048,
                                   double tol = 1e-11, int max_iter = 40) {
  const auto M = x.size();
  for (int it = 0; it < max_iter; ++it) {
    auto run = detail::integrate_variational(F, x, T, steps);
    const Eigen::VectorXd r = run.orbit.back() - x;
    if (r.norm() <= tol * std::max(1.0, x.norm())) return LimitCycle(T, std::move(run.orbit), false);
    Eigen::VectorXd fx(M), fT(M);
    F.value(std::span<const double>(x.data(), static_cast<std::size_t>(M)),
            std::span<double>(fx.data(), static_cast<std::size_t>(M)));
    F.value(std::span<const double>(run.orbit.back().data(), static_cast<std::size_t>(M)),
            std::span<double>(fT.data(), static_cast<std::size_t>(M)));
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(M + 1, M + 1);
    J.topLeftCorner(M, M) = run.fundamental.back() - Eigen::MatrixXd::Identity(M, M);
    J.topRightCorner(M, 1) = fT;
    J.bottomLeftCorner(1, M) = fx.transpose();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(M + 1);
    rhs.head(M) = -r;
    const Eigen::VectorXd d = J.colPivHouseholderQr().solve(rhs);
    x += d.head(M);
    T += d[M];
    if (!(T > 0.0)) throw numerical_error("find_limit_cycle", "period estimate became non-positive");
  }
  throw numerical_error("find_limit_cycle", "Newton shooting did not converge");
}

// ---------------------------------------------------------------------------
// Floquet decomposition Phi(t) = P(t) exp(B t)

struct MonodromyData {
  double period = 0.0;
  Eigen::MatrixXd monodromy;  // Phi(T)
  Eigen::MatrixXd floquet;    // B with exp(B T) = Phi(T)
  std::vector<std::complex<double>> exponents;
  Eigen::MatrixXd basis;                 // A: orthonormal basis of im B
  Eigen::MatrixXd normal;                // L with B A = A L
  std::vector<Eigen::VectorXd> orbit;    // X(t_i), t_i = i T / steps
  std::vector<Eigen::MatrixXd> fibre;    // P(t) A at t = t_{2i}
};

struct FloquetOptions {
  std::size_t steps = 2048;  // RK4 steps per period (even)
  double gap_tol = 1e-6;     // exponents with |Re| below this count as neutral
};

/// Real Floquet matrix B with exp(B T) = Phi(T). Rejects monodromy matrices
/// whose principal logarithm is not real (eigenvalues on the negative real
/// axis) and cycles without exactly one neutral exponent.
inline Eigen::MatrixXd floquet_from_monodromy(const Eigen::MatrixXd& monodromy, double period, double gap_tol,
                                              std::vector<std::complex<double>>* exponents = nullptr) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(monodromy);
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const auto mu = es.eigenvalues()[i];
    if (std::abs(mu.imag()) <= 1e-10 * std::abs(mu) && mu.real() < 0.0)
      throw numerical_error("floquet_decompose",
                            "monodromy matrix has a negative real eigenvalue (" + std::to_string(mu.real()) +
                                "): no real logarithm without passing to the double cover, which is not supported");
  }
  const Eigen::MatrixXd B = monodromy.log() / period;
  Eigen::EigenSolver<Eigen::MatrixXd> eb(B, false);
  std::vector<std::complex<double>> ev(eb.eigenvalues().data(), eb.eigenvalues().data() + eb.eigenvalues().size());
  std::sort(ev.begin(), ev.end(), [](auto a, auto b) {
    return a.real() != b.real() ? a.real() > b.real() : a.imag() > b.imag();
  });
  int neutral = 0;
  for (const auto& l : ev)
    if (std::abs(l.real()) < gap_tol) {
      ++neutral;
      if (std::abs(l) > std::max(gap_tol, 1e-6))
        throw numerical_error("floquet_decompose", "neutral Floquet exponent is not zero");
    }
  if (neutral != 1)
    throw numerical_error("floquet_decompose", "not normally hyperbolic: " + std::to_string(neutral) +
                                                   " Floquet exponents within " + std::to_string(gap_tol) +
                                                   " of the imaginary axis");
  if (exponents) *exponents = std::move(ev);
  return B;
}

namespace detail {

inline void fix_column_signs(Eigen::MatrixXd& A) {
  for (Eigen::Index j = 0; j < A.cols(); ++j) {
    const double scale = A.col(j).cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < A.rows(); ++i)
      if (std::abs(A(i, j)) > 1e-12 * scale) {
        if (A(i, j) < 0.0) A.col(j) *= -1.0;
        break;
      }
  }
}

// Variational flow on the normal space of the orbit: with u = F/|F| and
// Pi = 1 - u u^T, w = Pi v obeys w' = Pi DF w - u (Pi DF u)^T w. It has no
// neutral direction, so contracting solutions keep their relative accuracy.
inline Eigen::MatrixXd integrate_normal_flow(const VectorField& F, const Eigen::VectorXd& x0, double T,
                                             std::size_t steps, Eigen::MatrixXd W) {
  const auto M = x0.size();
  const double h = T / static_cast<double>(steps);
  auto rhs = [&](const Eigen::VectorXd& x, const Eigen::MatrixXd& Wc, Eigen::VectorXd& dx, Eigen::MatrixXd& dW) {
    dx.resize(M);
    F.value(std::span<const double>(x.data(), static_cast<std::size_t>(M)),
            std::span<double>(dx.data(), static_cast<std::size_t>(M)));
    const Eigen::MatrixXd J = F.jacobian(std::span<const double>(x.data(), static_cast<std::size_t>(M)));
    const Eigen::VectorXd u = dx.normalized();
    const Eigen::MatrixXd JW = J * Wc;
    const Eigen::VectorXd Ju = J * u;
    const Eigen::VectorXd du = Ju - u * u.dot(Ju);
    dW = JW - u * (u.transpose() * JW) - u * (du.transpose() * Wc);
  };
  Eigen::VectorXd x = x0, k1, k2, k3, k4;
  Eigen::MatrixXd l1, l2, l3, l4;
  for (std::size_t s = 0; s < steps; ++s) {
    rhs(x, W, k1, l1);
    rhs(x + 0.5 * h * k1, W + 0.5 * h * l1, k2, l2);
    rhs(x + 0.5 * h * k2, W + 0.5 * h * l2, k3, l3);
    rhs(x + h * k3, W + h * l3, k4, l4);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    W += (h / 6.0) * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
  }
  if (!W.allFinite()) throw numerical_error("variational_integration", "normal flow became non-finite");
  return W;
}

// Y' = DF(X(t)) Y - Y L integrated backward from Y(T) = A with step 2h, using
// the stored orbit for stage points. Tangential errors decay in this
// direction and normal components are neutral.
inline std::vector<Eigen::MatrixXd> fibre_backward(const VectorField& F, const std::vector<Eigen::VectorXd>& orbit,
                                                   double h, const Eigen::MatrixXd& A, const Eigen::MatrixXd& L) {
  const std::size_t steps = orbit.size() - 1, half = steps / 2;
  const auto M = static_cast<std::size_t>(A.rows());
  auto J = [&](std::size_t i) { return F.jacobian(std::span<const double>(orbit[i].data(), M)); };
  std::vector<Eigen::MatrixXd> Y(half + 1);
  Y[half] = A;
  const double step = -2.0 * h;
  Eigen::MatrixXd J0 = J(steps);
  for (std::size_t s = half; s > 0; --s) {
    const Eigen::MatrixXd Jm = J(2 * s - 1), J1 = J(2 * s - 2);
    const Eigen::MatrixXd& y = Y[s];
    const Eigen::MatrixXd k1 = J0 * y - y * L;
    const Eigen::MatrixXd y2 = y + 0.5 * step * k1;
    const Eigen::MatrixXd k2 = Jm * y2 - y2 * L;
    const Eigen::MatrixXd y3 = y + 0.5 * step * k2;
    const Eigen::MatrixXd k3 = Jm * y3 - y3 * L;
    const Eigen::MatrixXd y4 = y + step * k3;
    const Eigen::MatrixXd k4 = J1 * y4 - y4 * L;
    Y[s - 1] = y + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    J0 = J1;
  }
  return Y;
}

}  // namespace detail

/// Floquet data of a hyperbolic limit cycle. The normal block L comes from
/// the variational flow on the orbit's normal space, B is assembled from L,
/// the neutral multiplier and the invariant splitting of Phi(T), and the
/// fast fibre P(t) A is integrated backward in time.
inline MonodromyData floquet_decompose(const LimitCycle& cycle, const VectorField& F, FloquetOptions opt = {}) {
  if (F.in_dim != cycle.dim() || F.out_dim != cycle.dim())
    throw dimension_error("floquet_decompose: field and cycle dimensions differ");
  if (opt.steps < 4 || opt.steps % 2 != 0) throw config_error("floquet_decompose: steps must be even and at least 4");
  const auto M = static_cast<Eigen::Index>(cycle.dim());
  const double T = cycle.period;
  auto run = detail::integrate_variational(F, cycle.samples.front(), T, opt.steps);
  MonodromyData out;
  out.period = T;
  out.monodromy = run.fundamental.back();

  const Eigen::VectorXd& x0 = cycle.samples.front();
  Eigen::VectorXd f0(M);
  F.value(std::span<const double>(x0.data(), static_cast<std::size_t>(M)),
          std::span<double>(f0.data(), static_cast<std::size_t>(M)));
  if (!(f0.norm() > 0.0)) throw numerical_error("floquet_decompose", "cycle passes through an equilibrium");
  const Eigen::VectorXd u0 = f0.normalized();

  // Neutral multiplier and its left eigenvector; im B is the annihilator of the latter.
  Eigen::EigenSolver<Eigen::MatrixXd> left(out.monodromy.transpose());
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < M; ++i)
    if (std::abs(left.eigenvalues()[i] - 1.0) < std::abs(left.eigenvalues()[best] - 1.0)) best = i;
  const std::complex<double> mu0 = left.eigenvalues()[best];
  const double nu = std::log(std::abs(mu0)) / T;
  if (std::abs(mu0.imag()) > 1e-10 || mu0.real() <= 0.0 || std::abs(nu) > std::max(opt.gap_tol, 1e-6))
    throw numerical_error("floquet_decompose", "neutral Floquet exponent is not zero");
  const Eigen::VectorXd ell = left.eigenvectors().col(best).real();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(ell);
  Eigen::MatrixXd A = Eigen::MatrixXd(qr.householderQ()).rightCols(M - 1);
  detail::fix_column_signs(A);

  // Normal block from the projected flow started at Pi A.
  const Eigen::MatrixXd W0 = A - u0 * (u0.transpose() * A);
  const Eigen::MatrixXd WT = detail::integrate_normal_flow(F, x0, T, opt.steps, W0);
  const Eigen::MatrixXd E = W0.colPivHouseholderQr().solve(WT);
  std::vector<std::complex<double>> ev{std::complex<double>(nu, 0.0)};
  Eigen::MatrixXd L(M - 1, M - 1);
  if (M > 1) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(E, false);
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
      const auto mu = es.eigenvalues()[i];
      if (std::abs(mu.imag()) <= 1e-10 * std::abs(mu) && mu.real() < 0.0)
        throw numerical_error("floquet_decompose",
                              "monodromy matrix has a negative real eigenvalue (" + std::to_string(mu.real()) +
                                  "): no real logarithm without passing to the double cover, which is not supported");
    }
    L = E.log() / T;
    Eigen::EigenSolver<Eigen::MatrixXd> el(L, false);
    int neutral = 1;
    for (Eigen::Index i = 0; i < el.eigenvalues().size(); ++i) {
      ev.push_back(el.eigenvalues()[i]);
      if (std::abs(el.eigenvalues()[i].real()) < opt.gap_tol) ++neutral;
    }
    if (neutral != 1)
      throw numerical_error("floquet_decompose", "not normally hyperbolic: " + std::to_string(neutral) +
                                                     " Floquet exponents within " + std::to_string(opt.gap_tol) +
                                                     " of the imaginary axis");
  }
  std::sort(ev.begin(), ev.end(), [](auto a, auto b) {
    return a.real() != b.real() ? a.real() > b.real() : a.imag() > b.imag();
  });
  out.exponents = std::move(ev);

  Eigen::MatrixXd S(M, M), D = Eigen::MatrixXd::Zero(M, M);
  S << A, u0;
  D.topLeftCorner(M - 1, M - 1) = L;
  D(M - 1, M - 1) = nu;
  out.floquet = S * D * S.inverse();
  out.basis = A;
  out.normal = L;

  out.fibre = detail::fibre_backward(F, run.orbit, T / static_cast<double>(opt.steps), A, L);
  const double closure = (out.fibre.front() - A).norm();
  if (closure > 1e-6)
    throw numerical_error("floquet_decompose", "fast fibre does not close: |P(T) A - A| = " + std::to_string(closure));
  out.orbit = std::move(run.orbit);
  return out;
}

// ---------------------------------------------------------------------------
// Torus bundles

/// Derivative e' of an embedding as an M x m row-major matrix-valued map.
inline FourierMap tangent_map(const FourierMap& e) {
  const std::size_t M = e.values(), m = e.dim();
  FourierMap::Coeffs out;
  for (const auto& [k, c] : e.coeffs()) {
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(M * m));
    bool any = false;
    for (std::size_t r = 0; r < M; ++r)
      for (std::size_t i = 0; i < m; ++i)
        if (k[i] != 0) {
          v[static_cast<Eigen::Index>(r * m + i)] = cplx(0.0, k[i]) * c[static_cast<Eigen::Index>(r)];
          any = true;
        }
    if (any) out.emplace(k, std::move(v));
  }
  return FourierMap(m, M * m, e.radius(), std::move(out), e.is_real());
}

/// Embedding e0 of a reducible torus with fast fibre map N (M x (M-m),
/// row-major), Floquet matrix L and tangent projection pi (M x M, row-major).
struct TorusBundle {
  FourierMap e0;
  FrequencyVector omega;
  FourierMap N;
  Eigen::MatrixXd L;
  FourierMap pi;

  std::size_t state_dim() const { return e0.values(); }
  std::size_t torus_dim() const { return e0.dim(); }
  std::size_t normal_dim() const { return state_dim() - torus_dim(); }
  int radius() const { return std::max({e0.radius(), N.radius(), pi.radius()}); }

  /// e0' as an M x m row-major matrix-valued map.
  FourierMap tangent() const { return tangent_map(e0); }
};

namespace detail {

inline std::size_t divisor_at_least(std::size_t steps, std::size_t want) {
  for (std::size_t n = want; n <= steps; ++n)
    if (steps % n == 0) return n;
  return 0;
}

// pi(phi) on the grid of `e0` and `N` samples, projected onto radius K.
inline FourierMap projection_field(const TorusGrid& tangent, const TorusGrid& fibre, std::size_t M, std::size_t m,
                                   int K) {
  TorusGrid pg(tangent.m, M * M, tangent.n);
  for (std::size_t node = 0; node < tangent.nodes(); ++node) {
    const Eigen::MatrixXd P = oblique_projection(tangent.matrix_at(node, M, m), fibre.matrix_at(node, M, M - m));
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> Pr = P;
    pg.set_real(node, Eigen::Map<const Eigen::VectorXd>(Pr.data(), Pr.size()));
  }
  return project(pg, K, true);
}

}  // namespace detail

/// pi computed node by node with oblique_projection from e0' and N, then
/// projected onto radius K.
inline FourierMap tangent_projection(const FourierMap& e0, const FourierMap& tangent, const FourierMap& N, int K) {
  const std::size_t M = e0.values(), m = e0.dim();
  const int n = dealiased_size(std::max({K, tangent.radius(), N.radius()}));
  return detail::projection_field(sample(tangent, n), sample(N, n), M, m, K);
}

/// Fast fibre bundle of a hyperbolic limit cycle: N(phi) = P(phi/omega) A with
/// A an orthonormal basis of im B, and L = A^T B A.
inline TorusBundle cycle_bundle(const LimitCycle& cycle, const MonodromyData& mono, int K = 16) {
  const auto M = static_cast<Eigen::Index>(cycle.dim());
  const Eigen::MatrixXd& B = mono.floquet;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(B);
  const auto& sv = svd.singularValues();
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > 1e-8 * sv[0]) ++rank;
  if (rank != M - 1)
    throw numerical_error("cycle_bundle", "Floquet matrix has rank " + std::to_string(rank) + ", expected " +
                                              std::to_string(M - 1));
  const Eigen::MatrixXd& A = mono.basis;
  const Eigen::MatrixXd& L = mono.normal;
  if ((B * A - A * L).norm() > 1e-8 * std::max(1.0, B.norm()))
    throw numerical_error("cycle_bundle", "Floquet matrix does not leave the fibre basis invariant");

  const std::size_t half = mono.fibre.size() - 1;
  const std::size_t n = detail::divisor_at_least(half, static_cast<std::size_t>(dealiased_size(K)));
  if (n == 0)
    throw config_error("cycle_bundle: " + std::to_string(2 * half) + " integration steps cannot resolve radius " +
                       std::to_string(K));
  const std::size_t stride = half / n;
  const bool use_cycle = cycle.intervals() % n == 0;
  const std::size_t cstride = use_cycle ? cycle.intervals() / n : 2 * stride;

  TorusGrid xg(1, static_cast<std::size_t>(M), {static_cast<int>(n)});
  TorusGrid ng(1, static_cast<std::size_t>(M * (M - 1)), {static_cast<int>(n)});
  for (std::size_t i = 0; i < n; ++i) {
    xg.set_real(i, use_cycle ? cycle.samples[i * cstride] : mono.orbit[i * cstride]);
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> Ni = mono.fibre[i * stride];
    ng.set_real(i, Eigen::Map<const Eigen::VectorXd>(Ni.data(), Ni.size()));
  }
  FourierMap e0 = project(xg, K, true);
  FourierMap N = project(ng, K, true);
  TorusBundle b{e0, FrequencyVector({cycle.omega}), N, L, FourierMap::zero(1, static_cast<std::size_t>(M * M))};
  b.pi = tangent_projection(b.e0, b.tangent(), b.N, K);
  return b;
}

namespace detail {

// Places a rows_b x cols_b row-major matrix map into a rows x cols one.
inline FourierMap lift_matrix(const FourierMap& f, std::size_t rows_b, std::size_t cols_b, std::size_t m,
                              std::size_t angle_offset, std::size_t rows, std::size_t cols, std::size_t row_off,
                              std::size_t col_off) {
  FourierMap::Coeffs out;
  for (const auto& [k, c] : f.coeffs()) {
    Wavevector kk(m, 0);
    std::copy(k.begin(), k.end(), kk.begin() + static_cast<long>(angle_offset));
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(rows * cols));
    for (std::size_t r = 0; r < rows_b; ++r)
      for (std::size_t q = 0; q < cols_b; ++q)
        v[static_cast<Eigen::Index>((row_off + r) * cols + col_off + q)] = c[static_cast<Eigen::Index>(r * cols_b + q)];
    out.emplace(std::move(kk), std::move(v));
  }
  return FourierMap(m, rows * cols, f.radius(), std::move(out), f.is_real());
}

}  // namespace detail

/// Product torus T_1 x ... x T_n with block-diagonal e0, N, L and pi.
inline TorusBundle product_bundle(const std::vector<TorusBundle>& bundles) {
  if (bundles.empty()) throw config_error("product_bundle needs at least one bundle");
  std::size_t m = 0, M = 0;
  int K = 0;
  std::vector<double> omega;
  for (const auto& b : bundles) {
    m += b.torus_dim();
    M += b.state_dim();
    K = std::max(K, b.radius());
    omega.insert(omega.end(), b.omega.values().begin(), b.omega.values().end());
  }
  const std::size_t q = M - m;
  FourierMap e0 = FourierMap::zero(m, M, K), N = FourierMap::zero(m, M * q, K), pi = FourierMap::zero(m, M * M, K);
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(q));
  std::size_t ao = 0, so = 0, no = 0;
  for (const auto& b : bundles) {
    const std::size_t Mb = b.state_dim(), mb = b.torus_dim(), qb = b.normal_dim();
    e0 = e0 + lift(b.e0, m, ao, M, so);
    N = N + detail::lift_matrix(b.N, Mb, qb, m, ao, M, q, so, no);
    pi = pi + detail::lift_matrix(b.pi, Mb, Mb, m, ao, M, M, so, so);
    L.block(static_cast<Eigen::Index>(no), static_cast<Eigen::Index>(no), static_cast<Eigen::Index>(qb),
            static_cast<Eigen::Index>(qb)) = b.L;
    ao += mb;
    so += Mb;
    no += qb;
  }
  return TorusBundle{e0, FrequencyVector(omega), N, L, pi};
}

/// Replaces N by N S and L by S^{-1} L S for an invertible constant S.
inline TorusBundle regauge(const TorusBundle& b, const Eigen::MatrixXd& S) {
  const auto M = static_cast<Eigen::Index>(b.state_dim()), q = static_cast<Eigen::Index>(b.normal_dim());
  if (S.rows() != q || S.cols() != q) throw dimension_error("regauge: S must be (M-m) x (M-m)");
  Eigen::FullPivLU<Eigen::MatrixXd> lu(S);
  if (!lu.isInvertible()) throw config_error("regauge: S is singular");
  FourierMap::Coeffs out;
  for (const auto& [k, c] : b.N.coeffs()) {
    Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> Nk =
        Eigen::Map<const Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(c.data(), M, q);
    Nk = (Nk * S.cast<cplx>()).eval();
    out.emplace(k, Eigen::Map<const Eigen::VectorXcd>(Nk.data(), Nk.size()));
  }
  TorusBundle r = b;
  r.N = FourierMap(b.N.dim(), b.N.values(), b.N.radius(), std::move(out), b.N.is_real());
  r.L = lu.solve(b.L * S);
  return r;
}

/// Sup-grid checks of the defining properties of a reducible torus.
struct BundleDiagnostics {
  double invariance = 0.0;         // |d_omega e0 - F0(e0)|
  double transversality = 0.0;     // max cond [e0' | N]
  double pde_residual = 0.0;       // |d_omega N + N L - F0'(e0) N| / sup|N|
  double spectral_gap = 0.0;       // min |Re lambda(L)|
  double projection_error = 0.0;   // max of |pi^2 - pi|, |pi e0' - e0'|, |pi N|
  double tangent_identity = 0.0;   // |d_omega e0' - F0'(e0) e0'|
};

inline BundleDiagnostics diagnose(const TorusBundle& b, const VectorField& F0, int n = 0) {
  const std::size_t M = b.state_dim(), m = b.torus_dim(), q = b.normal_dim();
  if (F0.in_dim != M) throw dimension_error("diagnose: field dimension differs from the bundle");
  if (n <= 0) n = m == 1 ? 256 : dealiased_size(b.radius());
  const FourierMap T = b.tangent();
  const auto ge = sample(b.e0, n), gde = sample(d_omega(b.e0, b.omega), n);
  const auto gt = sample(T, n), gdt = sample(d_omega(T, b.omega), n);
  const auto gn = sample(b.N, n), gdn = sample(d_omega(b.N, b.omega), n);
  const auto gp = sample(b.pi, n);
  BundleDiagnostics d;
  double nsup = 0.0;
  std::vector<double> x(M), fx(M);
  const auto Mi = static_cast<Eigen::Index>(M);
  for (std::size_t node = 0; node < ge.nodes(); ++node) {
    const Eigen::VectorXd e = ge.real_at(node);
    std::copy(e.data(), e.data() + Mi, x.begin());
    F0.value(x, fx);
    d.invariance = std::max(d.invariance, (gde.real_at(node) - Eigen::Map<Eigen::VectorXd>(fx.data(), Mi)).norm());
    const Eigen::MatrixXd J = F0.jacobian(x);
    const Eigen::MatrixXd Tn = gt.matrix_at(node, M, m), Nn = gn.matrix_at(node, M, q), Pn = gp.matrix_at(node, M, M);
    Eigen::MatrixXd TN(Mi, Mi);
    TN << Tn, Nn;
    d.transversality = std::max(d.transversality, condition_number(TN));
    d.pde_residual = std::max(d.pde_residual, (gdn.matrix_at(node, M, q) + Nn * b.L - J * Nn).norm());
    nsup = std::max(nsup, Nn.norm());
    d.tangent_identity = std::max(d.tangent_identity, (gdt.matrix_at(node, M, m) - J * Tn).norm());
    d.projection_error = std::max({d.projection_error, (Pn * Pn - Pn).norm(), (Pn * Tn - Tn).norm(), (Pn * Nn).norm()});
  }
  if (nsup > 0.0) d.pde_residual /= nsup;
  Eigen::EigenSolver<Eigen::MatrixXd> es(b.L, false);
  d.spectral_gap = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
    d.spectral_gap = std::min(d.spectral_gap, std::abs(es.eigenvalues()[i].real()));
  return d;
}

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& A) {
  std::vector<double> data;
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j) data.push_back(A(i, j));
  return {{"rows", A.rows()}, {"cols", A.cols()}, {"data", data}};
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>(), cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw config_error("matrix json: wrong data length");
  Eigen::MatrixXd A(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index k = 0; k < cols; ++k) A(i, k) = data[static_cast<std::size_t>(i * cols + k)];
  return A;
}

inline nlohmann::json to_json(const TorusBundle& b) {
  return {{"omega", b.omega.values()},
          {"e0", to_json(b.e0)},
          {"N", to_json(b.N)},
          {"N_shape", {b.state_dim(), b.normal_dim()}},
          {"pi", to_json(b.pi)},
          {"L", matrix_to_json(b.L)}};
}

inline TorusBundle torus_bundle_from_json(const nlohmann::json& j) {
  return TorusBundle{fourier_map_from_json(j.at("e0")), FrequencyVector(j.at("omega").get<std::vector<double>>()),
                     fourier_map_from_json(j.at("N")), matrix_from_json(j.at("L")), fourier_map_from_json(j.at("pi"))};
}

}  // namespace torusred
