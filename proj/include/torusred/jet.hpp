#pragma once

// Vector fields with multilinear derivative evaluators, and epsilon-jets of
// Fourier maps composed with them.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "torusred/error.hpp"
#include "torusred/fourier.hpp"

namespace torusred {

/// A smooth map F: R^in -> R^out together with its symmetric multilinear
/// derivatives. eval(x, dirs, out) writes D^n F(x)[dirs[0], ..., dirs[n-1]]
/// with n = dirs.size(); n = 0 is the value itself. Evaluators must be pure.
struct VectorField {
  using Evaluator = std::function<void(std::span<const double> x, std::span<const std::span<const double>> dirs,
                                       std::span<double> out)>;

  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  int max_order = 0;  // highest derivative order the evaluator supports
  Evaluator eval;

  /// Polynomial fields know all their derivatives.
  static constexpr int all_orders = std::numeric_limits<int>::max();

  void value(std::span<const double> x, std::span<double> out) const { eval(x, {}, out); }

  void derivative(std::span<const double> x, std::span<const std::span<const double>> dirs,
                  std::span<double> out) const {
    if (static_cast<int>(dirs.size()) > max_order)
      throw numerical_error("derivative", "field supplies derivatives only to order " + std::to_string(max_order) +
                                              ", order " + std::to_string(dirs.size()) + " requested");
    eval(x, dirs, out);
  }

  Eigen::MatrixXd jacobian(std::span<const double> x) const {
    Eigen::MatrixXd J(static_cast<Eigen::Index>(out_dim), static_cast<Eigen::Index>(in_dim));
    std::vector<double> e(in_dim, 0.0), col(out_dim);
    for (std::size_t i = 0; i < in_dim; ++i) {
      e[i] = 1.0;
      const std::span<const double> dir(e);
      derivative(x, std::span<const std::span<const double>>(&dir, 1), col);
      for (std::size_t r = 0; r < out_dim; ++r) J(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) = col[r];
      e[i] = 0.0;
    }
    return J;
  }

  static VectorField zero(std::size_t in, std::size_t out) {
    return {in, out, all_orders,
            [out](std::span<const double>, std::span<const std::span<const double>>, std::span<double> y) {
              std::fill(y.begin(), y.begin() + static_cast<long>(out), 0.0);
            }};
  }

  /// x -> A x
  static VectorField linear(const Eigen::MatrixXd& A) {
    return {static_cast<std::size_t>(A.cols()), static_cast<std::size_t>(A.rows()), all_orders,
            [A](std::span<const double> x, std::span<const std::span<const double>> dirs, std::span<double> y) {
              Eigen::Map<Eigen::VectorXd> out(y.data(), A.rows());
              if (dirs.empty())
                out = A * Eigen::Map<const Eigen::VectorXd>(x.data(), A.cols());
              else if (dirs.size() == 1)
                out = A * Eigen::Map<const Eigen::VectorXd>(dirs[0].data(), A.cols());
              else
                out.setZero();
            }};
  }
};

/// Truncated expansion e_0 + eps e_1 + ... + eps^J e_J.
struct EpsJet {
  std::vector<FourierMap> terms;

  explicit EpsJet(std::vector<FourierMap> t) : terms(std::move(t)) {
    if (terms.empty()) throw dimension_error("EpsJet needs at least the order-0 term");
    for (const auto& f : terms)
      if (f.dim() != terms[0].dim() || f.values() != terms[0].values())
        throw dimension_error("EpsJet terms must share torus and value dimensions");
  }

  int order() const { return static_cast<int>(terms.size()) - 1; }
  int max_radius() const {
    int K = 0;
    for (const auto& f : terms) K = std::max(K, f.radius());
    return K;
  }
};

namespace detail {

// Ordered compositions of r into parts drawn from `parts`.
inline void compositions(int r, const std::vector<int>& parts, std::vector<int>& cur,
                         std::vector<std::vector<int>>& out) {
  if (r == 0) {
    if (!cur.empty()) out.push_back(cur);
    return;
  }
  for (int p : parts) {
    if (p > r) continue;
    cur.push_back(p);
    compositions(r - p, parts, cur, out);
    cur.pop_back();
  }
}

inline double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

}  // namespace detail

/// Grid form of jet composition. `e_grids[i]` holds samples of e_i (nullptr
/// for an identically zero term); all grids share one node layout. Returns
/// the eps-Taylor coefficients of sum_l eps^l F_l(sum_i eps^i e_i) for orders
/// 0..J as grids with `out_dim` values, via Faa di Bruno:
///   [eps^r] F_l(e) = sum over ordered compositions (i_1..i_n) of r - l of
///                    (1/n!) D^n F_l(e_0)[e_{i_1}, ..., e_{i_n}].
inline std::vector<TorusGrid> jet_compose_grid(std::span<const VectorField> fields,
                                               const std::vector<const TorusGrid*>& e_grids, int J) {
  if (e_grids.empty() || e_grids[0] == nullptr) throw dimension_error("jet_compose: missing order-0 term");
  const TorusGrid& g0 = *e_grids[0];
  const std::size_t p = g0.p;
  const std::size_t q = fields.empty() ? p : fields[0].out_dim;
  for (const auto& F : fields)
    if (F.in_dim != p || F.out_dim != q) throw dimension_error("jet_compose: field dimensions do not match the jet");

  std::vector<int> parts;
  for (std::size_t i = 1; i < e_grids.size() && static_cast<int>(i) <= J; ++i)
    if (e_grids[i] != nullptr) parts.push_back(static_cast<int>(i));

  // comps[s] = compositions of s
  std::vector<std::vector<std::vector<int>>> comps(static_cast<std::size_t>(J) + 1);
  for (int s = 1; s <= J; ++s) {
    std::vector<int> cur;
    detail::compositions(s, parts, cur, comps[static_cast<std::size_t>(s)]);
  }
  for (std::size_t l = 0; l < fields.size() && static_cast<int>(l) <= J; ++l) {
    int need = 0;
    for (int s = 1; s <= J - static_cast<int>(l); ++s)
      for (const auto& c : comps[static_cast<std::size_t>(s)]) need = std::max(need, static_cast<int>(c.size()));
    if (need > fields[l].max_order)
      throw numerical_error("jet_compose", "F_" + std::to_string(l) + " supplies derivatives to order " +
                                               std::to_string(fields[l].max_order) + " but order " +
                                               std::to_string(need) + " is required");
  }

  std::vector<TorusGrid> out;
  for (int r = 0; r <= J; ++r) out.emplace_back(g0.m, q, g0.n);

  std::vector<std::vector<double>> node_vals(e_grids.size(), std::vector<double>(p));
  std::vector<double> y(q);
  std::vector<std::span<const double>> dirs;
  for (std::size_t node = 0; node < g0.nodes(); ++node) {
    for (std::size_t i = 0; i < e_grids.size(); ++i) {
      if (e_grids[i] == nullptr) continue;
      for (std::size_t c = 0; c < p; ++c) node_vals[i][c] = e_grids[i]->at(node, c).real();
    }
    const std::span<const double> x0(node_vals[0]);
    for (int r = 0; r <= J; ++r) {
      for (std::size_t l = 0; l < fields.size() && static_cast<int>(l) <= r; ++l) {
        const int s = r - static_cast<int>(l);
        if (s == 0) {
          fields[l].value(x0, y);
          for (std::size_t c = 0; c < q; ++c) out[static_cast<std::size_t>(r)].at(node, c) += y[c];
          continue;
        }
        for (const auto& comp : comps[static_cast<std::size_t>(s)]) {
          dirs.clear();
          for (int i : comp) dirs.emplace_back(node_vals[static_cast<std::size_t>(i)]);
          fields[l].derivative(x0, dirs, y);
          const double w = 1.0 / detail::factorial(static_cast<int>(comp.size()));
          for (std::size_t c = 0; c < q; ++c) out[static_cast<std::size_t>(r)].at(node, c) += w * y[c];
        }
      }
    }
  }
  return out;
}

/// eps-Taylor coefficients of (F_0 + eps F_1 + ...)(e_0 + eps e_1 + ...) up
/// to the order of `e`, evaluated pseudo-spectrally and projected onto radius
/// K (default: the largest radius in `e`).
inline EpsJet jet_compose(std::span<const VectorField> fields, const EpsJet& e, int K = -1) {
  if (K < 0) K = e.max_radius();
  const int n = dealiased_size(K);
  std::vector<TorusGrid> grids;
  grids.reserve(e.terms.size());
  for (const auto& t : e.terms) grids.push_back(sample(t, n));
  std::vector<const TorusGrid*> ptrs;
  for (std::size_t i = 0; i < grids.size(); ++i) ptrs.push_back(e.terms[i].empty() && i > 0 ? nullptr : &grids[i]);
  auto out = jet_compose_grid(fields, ptrs, e.order());
  std::vector<FourierMap> terms;
  for (const auto& g : out) terms.push_back(project(g, K, true));
  return EpsJet(std::move(terms));
}

}  // namespace torusred
