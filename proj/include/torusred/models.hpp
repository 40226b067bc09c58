#pragma once

// Oscillator systems: Stuart-Landau with analytic cycle and bundle data, the
// three-oscillator chain 1 <-> 2 -> 3, and block-diagonal uncoupled models.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "torusred/bundle.hpp"
#include "torusred/error.hpp"
#include "torusred/fourier.hpp"
#include "torusred/jet.hpp"

namespace torusred {

/// z' = (alpha + i beta) z + (gamma + i delta) |z|^2 z
struct StuartLandauParams {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = -1.0;
  double delta = 1.0;

  void validate() const {
    for (double v : {alpha, beta, gamma, delta})
      if (!std::isfinite(v)) throw config_error("Stuart-Landau parameters must be finite");
    if (!(alpha * gamma < 0.0))
      throw config_error("Stuart-Landau oscillator has no limit cycle: need alpha * gamma < 0");
    if (frequency() == 0.0) throw config_error("Stuart-Landau cycle has zero frequency (beta gamma = alpha delta)");
  }

  double radius() const { return std::sqrt(-alpha / gamma); }
  double frequency() const { return beta - alpha * delta / gamma; }
  double floquet() const { return -2.0 * alpha; }
};

namespace detail {

using cvec = std::complex<double>;

inline cvec as_c(std::span<const double> v, std::size_t i = 0) { return {v[2 * i], v[2 * i + 1]}; }

// D^n of z -> lin z + cub |z|^2 z at z in directions dirs (each a complex number).
inline cvec sl_derivative(cvec lin, cvec cub, cvec z, const std::vector<cvec>& d) {
  const cvec zb = std::conj(z);
  switch (d.size()) {
    case 0:
      return lin * z + cub * (z * z * zb);
    case 1:
      return lin * d[0] + cub * (2.0 * z * zb * d[0] + z * z * std::conj(d[0]));
    case 2: {
      const cvec &v = d[0], &w = d[1];
      return cub * (2.0 * zb * v * w + 2.0 * z * std::conj(v) * w + 2.0 * z * v * std::conj(w));
    }
    case 3: {
      const cvec &u = d[0], &v = d[1], &w = d[2];
      return cub * (2.0 * (std::conj(u) * v * w + u * std::conj(v) * w + u * v * std::conj(w)));
    }
    default:
      return {0.0, 0.0};
  }
}

}  // namespace detail

/// The Stuart-Landau right-hand side on R^2 with exact derivatives of all
/// orders.
inline VectorField sl_field(const StuartLandauParams& p) {
  const std::complex<double> lin(p.alpha, p.beta), cub(p.gamma, p.delta);
  return {2, 2, VectorField::all_orders,
          [lin, cub](std::span<const double> x, std::span<const std::span<const double>> dirs, std::span<double> y) {
            std::vector<std::complex<double>> d;
            d.reserve(dirs.size());
            for (const auto& v : dirs) d.push_back(detail::as_c(v));
            const auto r = detail::sl_derivative(lin, cub, detail::as_c(x), d);
            y[0] = r.real();
            y[1] = r.imag();
          }};
}

/// Analytic cycle X(t) = R exp(i omega t) sampled at `intervals` + 1 times.
inline LimitCycle sl_cycle(const StuartLandauParams& p, std::size_t intervals = 2048) {
  p.validate();
  const double R = p.radius(), w = p.frequency(), T = 2.0 * std::numbers::pi / std::abs(w);
  std::vector<Eigen::VectorXd> x;
  x.reserve(intervals + 1);
  for (std::size_t i = 0; i <= intervals; ++i) {
    const double t = i == intervals ? 0.0 : T * static_cast<double>(i) / static_cast<double>(intervals);
    x.push_back(Eigen::Vector2d(R * std::cos(w * t), R * std::sin(w * t)));
  }
  return LimitCycle(T, std::move(x), true);
}

/// Analytic bundle: e0 = R e^{i phi}, N = e^{i phi}(gamma + i delta),
/// L = -2 alpha; pi from the oblique projection of e0' along N.
inline TorusBundle sl_bundle(const StuartLandauParams& p, int K = 2) {
  p.validate();
  if (K < 2) throw config_error("sl_bundle needs radius K >= 2 to hold the tangent projection");
  const double R = p.radius(), w = p.frequency();
  // The orbit runs clockwise in phi when w < 0; parametrise by phi = |w| t.
  const double s = w > 0 ? 1.0 : -1.0;
  FourierMap::Coeffs e, n;
  e.emplace(Wavevector{1}, Eigen::Vector2cd(cplx(R / 2, 0.0), cplx(0.0, -s * R / 2)));
  // (gamma cos - s delta sin, s gamma sin + delta cos)
  n.emplace(Wavevector{1}, Eigen::Vector2cd(cplx(p.gamma / 2, s * p.delta / 2), cplx(p.delta / 2, -s * p.gamma / 2)));
  TorusBundle b{FourierMap(1, 2, K, std::move(e)), FrequencyVector({std::abs(w)}), FourierMap(1, 2, K, std::move(n)),
                Eigen::MatrixXd::Constant(1, 1, p.floquet()), FourierMap::zero(1, 4, K)};
  b.pi = tangent_projection(b.e0, b.tangent(), b.N, K);
  return b;
}

/// Closed-form pi(phi) = Rot(phi) pi(0) Rot(-phi) with
/// pi(0)(x + i y) = i (y - (delta/gamma) x), as a real 2 x 2 matrix.
inline Eigen::Matrix2d sl_projection(const StuartLandauParams& p, double phi) {
  Eigen::Matrix2d P0;
  P0 << 0.0, 0.0, -p.delta / p.gamma, 1.0;
  const double a = p.frequency() > 0 ? phi : -phi;
  Eigen::Matrix2d R;
  R << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
  return R * P0 * R.transpose();
}

/// Van der Pol oscillator x' = y, y' = mu (1 - x^2) y - x.
inline VectorField van_der_pol_field(double mu) {
  return {2, 2, VectorField::all_orders,
          [mu](std::span<const double> x, std::span<const std::span<const double>> d, std::span<double> y) {
            const double X = x[0], Y = x[1];
            switch (d.size()) {
              case 0:
                y[0] = Y;
                y[1] = mu * (1.0 - X * X) * Y - X;
                break;
              case 1:
                y[0] = d[0][1];
                y[1] = mu * d[0][1] - mu * (2.0 * X * d[0][0] * Y + X * X * d[0][1]) - d[0][0];
                break;
              case 2:
                y[0] = 0.0;
                y[1] = -2.0 * mu * (d[0][0] * d[1][0] * Y + X * d[0][0] * d[1][1] + X * d[1][0] * d[0][1]);
                break;
              case 3:
                y[0] = 0.0;
                y[1] = -2.0 * mu *
                       (d[0][0] * d[1][0] * d[2][1] + d[0][0] * d[2][0] * d[1][1] + d[1][0] * d[2][0] * d[0][1]);
                break;
              default:
                y[0] = y[1] = 0.0;
            }
          }};
}

// ---------------------------------------------------------------------------
// Coupled models

/// x' = F_0(x) + eps F_1(x) + eps^2 F_2(x) + ... on R^M, where F_0 acts
/// block-diagonally on oscillator blocks of sizes block_dims.
struct OscillatorModel {
  std::vector<std::size_t> block_dims;
  std::vector<VectorField> fields;  // F_0, F_1, ...
  /// Blocks (i, j) for the observable Arg(z_i conj(z_j)) when both are planar.
  std::optional<std::pair<std::size_t, std::size_t>> phase_pair;

  std::size_t state_dim() const {
    std::size_t M = 0;
    for (auto d : block_dims) M += d;
    return M;
  }

  void evaluate(std::span<const double> x, double eps, std::span<double> out) const {
    const std::size_t M = state_dim();
    std::fill(out.begin(), out.begin() + static_cast<long>(M), 0.0);
    std::vector<double> y(M);
    double w = 1.0;
    for (const auto& F : fields) {
      if (w != 0.0) {
        F.value(x, y);
        for (std::size_t i = 0; i < M; ++i) out[i] += w * y[i];
      }
      w *= eps;
    }
  }
};

/// Block-diagonal F_0(x_1, ..., x_n) = (F_1(x_1), ..., F_n(x_n)).
inline VectorField block_diagonal(std::vector<VectorField> blocks) {
  std::size_t M = 0;
  int order = VectorField::all_orders;
  for (const auto& b : blocks) {
    if (b.in_dim != b.out_dim) throw dimension_error("block_diagonal: blocks must be square");
    M += b.in_dim;
    order = std::min(order, b.max_order);
  }
  return {M, M, order,
          [blocks](std::span<const double> x, std::span<const std::span<const double>> dirs, std::span<double> y) {
            std::vector<std::span<const double>> sub(dirs.size());
            std::size_t off = 0;
            for (const auto& b : blocks) {
              for (std::size_t i = 0; i < dirs.size(); ++i) sub[i] = dirs[i].subspan(off, b.in_dim);
              b.eval(x.subspan(off, b.in_dim), sub, y.subspan(off, b.out_dim));
              off += b.in_dim;
            }
          }};
}

/// Model with uncoupled blocks and perturbations F_1, F_2, ... on the full
/// state.
inline OscillatorModel uncoupled(std::vector<VectorField> blocks, std::vector<VectorField> perturbations = {}) {
  OscillatorModel m;
  for (const auto& b : blocks) m.block_dims.push_back(b.in_dim);
  m.fields.push_back(block_diagonal(std::move(blocks)));
  const std::size_t M = m.state_dim();
  for (auto& F : perturbations) {
    if (F.in_dim != M || F.out_dim != M) throw dimension_error("perturbation dimensions differ from the model");
    m.fields.push_back(std::move(F));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Three-oscillator chain

/// Oscillators 1 and 3 share `outer` = (alpha, beta, gamma, delta); the
/// middle one has `middle` = (a, b, c, d). Coupling z1' += eps z2,
/// z2' += eps z1, z3' += eps z2.
struct ChainConfig {
  StuartLandauParams outer{1.0, 1.0, -1.0, 1.0};
  StuartLandauParams middle{1.0, 2.0, -1.0, -1.0};
  double epsilon = 0.1;

  void validate() const {
    outer.validate();
    middle.validate();
    if (!std::isfinite(epsilon)) throw config_error("epsilon must be finite");
    const double w1 = outer.frequency(), w2 = middle.frequency();
    if (std::abs(w1 - w2) <= 1e-9 * std::max(std::abs(w1), std::abs(w2)))
      throw config_error("resonance guard: outer and middle oscillators share the frequency " + std::to_string(w1) +
                         "; the chain reduction needs omega_1 != omega_2");
  }

  Eigen::Vector3d omega() const { return {outer.frequency(), middle.frequency(), outer.frequency()}; }
};

inline Eigen::MatrixXd chain_coupling() {
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(6, 6);
  C.block<2, 2>(0, 2).setIdentity();
  C.block<2, 2>(2, 0).setIdentity();
  C.block<2, 2>(4, 2).setIdentity();
  return C;
}

inline OscillatorModel chain_model(const ChainConfig& cfg) {
  cfg.validate();
  auto m = uncoupled({sl_field(cfg.outer), sl_field(cfg.middle), sl_field(cfg.outer)},
                     {VectorField::linear(chain_coupling())});
  m.phase_pair = std::make_pair(std::size_t{0}, std::size_t{2});
  return m;
}

inline TorusBundle chain_bundle(const ChainConfig& cfg, int K = 2) {
  cfg.validate();
  const auto o = sl_bundle(cfg.outer, K), c = sl_bundle(cfg.middle, K);
  return product_bundle({o, c, o});
}

struct ChainConstants {
  double A = 0.0;
  double B = 0.0;
};

/// Closed-form constants of the order-2 phase-difference dynamics
/// Phi' = eps^2 (-A sin Phi + B (1 - cos Phi)).
inline ChainConstants chain_AB(const ChainConfig& cfg) {
  cfg.validate();
  const double a = cfg.middle.alpha, c = cfg.middle.gamma, d = cfg.middle.delta;
  const double r = cfg.outer.delta / cfg.outer.gamma;
  const double D = cfg.middle.frequency() - cfg.outer.frequency();  // omega_2 - omega_1
  const double den = 4.0 * a * a + D * D;
  ChainConstants k;
  k.A = (r * D + a * (1.0 + d * r / c) + 2.0 * a * a * (d / c + r) / D) / den;
  k.B = (D + a * (d / c - r) + 2.0 * a * a * (1.0 - d * r / c) / D) / den;
  return k;
}

/// Nontrivial zero of -A sin Phi + B (1 - cos Phi).
inline double chain_locked_phase(const ChainConstants& k) { return 2.0 * std::atan(k.A / k.B); }

}  // namespace torusred
