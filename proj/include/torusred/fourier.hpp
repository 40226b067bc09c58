#pragma once

// Vector-valued truncated Fourier series on the m-torus (R/2piZ)^m and the
// regular sample grids used to evaluate them pseudo-spectrally.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "torusred/error.hpp"

namespace torusred {

using cplx = std::complex<double>;

/// Integer wave vector k in Z^m. Ordered lexicographically by std::vector.
using Wavevector = std::vector<int>;

inline long norm2(const Wavevector& k) {
  long s = 0;
  for (int v : k) s += static_cast<long>(v) * v;
  return s;
}

inline Wavevector negated(Wavevector k) {
  for (int& v : k) v = -v;
  return k;
}

inline std::string to_string(const Wavevector& k) {
  std::string s = "(";
  for (std::size_t i = 0; i < k.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(k[i]);
  }
  return s + ")";
}

/// Frequencies omega = (omega_1, ..., omega_m) of the unperturbed torus flow.
class FrequencyVector {
 public:
  explicit FrequencyVector(std::vector<double> omega) : omega_(std::move(omega)) {
    if (omega_.empty()) throw dimension_error("frequency vector needs at least one entry");
    for (double w : omega_)
      if (!std::isfinite(w)) throw config_error("frequency vector has a non-finite entry");
  }

  std::size_t size() const { return omega_.size(); }
  double operator[](std::size_t i) const { return omega_[i]; }
  const std::vector<double>& values() const { return omega_; }

  /// <omega, k>
  double dot(const Wavevector& k) const {
    if (k.size() != omega_.size()) throw dimension_error("wave vector and frequency vector differ in length");
    double s = 0.0;
    for (std::size_t i = 0; i < k.size(); ++i) s += omega_[i] * k[i];
    return s;
  }

  double norm() const {
    double s = 0.0;
    for (double w : omega_) s += w * w;
    return std::sqrt(s);
  }

 private:
  std::vector<double> omega_;
};

/// Truncated Fourier series phi -> sum_k c_k exp(i<k,phi>) with c_k in C^p and
/// |k| <= K (Euclidean norm). Real-flagged maps are kept conjugate symmetric,
/// c_{-k} = conj(c_k), bit for bit.
///
/// Matrix-valued maps are stored with p = rows * cols in row-major order; the
/// shape lives with the owner (see TorusBundle).
class FourierMap {
 public:
  using Coeffs = std::map<Wavevector, Eigen::VectorXcd>;

  FourierMap(std::size_t m, std::size_t p, int K, bool real = true)
      : m_(m), p_(p), K_(K), real_(real) {
    if (m == 0) throw dimension_error("FourierMap needs torus dimension m >= 1");
    if (K < 0) throw config_error("FourierMap truncation radius must be non-negative");
  }

  FourierMap(std::size_t m, std::size_t p, int K, Coeffs coeffs, bool real = true)
      : FourierMap(m, p, K, real) {
    const long K2 = static_cast<long>(K) * K;
    for (auto& [k, c] : coeffs) {
      if (k.size() != m_) throw dimension_error("wave vector " + to_string(k) + " has wrong length");
      if (static_cast<std::size_t>(c.size()) != p_) throw dimension_error("coefficient has wrong value dimension");
      if (norm2(k) > K2) throw config_error("wave vector " + to_string(k) + " exceeds truncation radius");
    }
    coeffs_ = std::move(coeffs);
    if (real_) symmetrize();
  }

  /// Constant map phi -> value.
  static FourierMap constant(std::size_t m, const Eigen::VectorXd& value, int K = 0) {
    Coeffs c;
    c.emplace(Wavevector(m, 0), value.cast<cplx>());
    return FourierMap(m, static_cast<std::size_t>(value.size()), K, std::move(c), true);
  }

  static FourierMap zero(std::size_t m, std::size_t p, int K = 0) { return FourierMap(m, p, K, true); }

  std::size_t dim() const { return m_; }
  std::size_t values() const { return p_; }
  int radius() const { return K_; }
  bool is_real() const { return real_; }
  const Coeffs& coeffs() const { return coeffs_; }
  std::size_t size() const { return coeffs_.size(); }
  bool empty() const { return coeffs_.empty(); }

  /// l2 norm of the coefficients dropped by the truncating operation that
  /// produced this map (0 when nothing was dropped).
  double truncation_loss() const { return truncation_loss_; }
  void set_truncation_loss(double loss) { truncation_loss_ = loss; }

  Eigen::VectorXcd coeff(const Wavevector& k) const {
    auto it = coeffs_.find(k);
    if (it == coeffs_.end()) return Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(p_));
    return it->second;
  }

  /// Largest |k| among stored coefficients.
  double max_wavenumber() const {
    long best = 0;
    for (const auto& [k, c] : coeffs_) best = std::max(best, norm2(k));
    return std::sqrt(static_cast<double>(best));
  }

  Eigen::VectorXcd operator()(std::span<const double> phi) const {
    if (phi.size() != m_) throw dimension_error("evaluation point has wrong torus dimension");
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(p_));
    for (const auto& [k, c] : coeffs_) {
      double arg = 0.0;
      for (std::size_t i = 0; i < m_; ++i) arg += k[i] * phi[i];
      out += c * std::polar(1.0, arg);
    }
    return out;
  }

  Eigen::VectorXd real_at(std::span<const double> phi) const { return (*this)(phi).real(); }

  /// Scalar map holding value component `c`.
  FourierMap component(std::size_t c) const {
    if (c >= p_) throw dimension_error("component index out of range");
    Coeffs out;
    for (const auto& [k, v] : coeffs_) out.emplace(k, v.segment(static_cast<Eigen::Index>(c), 1));
    return FourierMap(m_, 1, K_, std::move(out), real_);
  }

  /// Drops coefficients with norm <= tol.
  FourierMap pruned(double tol) const {
    Coeffs out;
    for (const auto& [k, v] : coeffs_)
      if (v.norm() > tol) out.emplace(k, v);
    FourierMap f(m_, p_, K_, std::move(out), real_);
    f.truncation_loss_ = truncation_loss_;
    return f;
  }

 private:
  void symmetrize() {
    // Make every pair (k, -k) present and exactly conjugate.
    Coeffs sym;
    for (const auto& [k, c] : coeffs_) {
      Wavevector nk = negated(k);
      if (sym.count(k)) continue;
      if (nk == k) {
        sym.emplace(k, c.real().cast<cplx>());
        continue;
      }
      // A missing partner is implied by reality; a present one is averaged in.
      auto it = coeffs_.find(nk);
      Eigen::VectorXcd avg = it == coeffs_.end() ? Eigen::VectorXcd(c) : Eigen::VectorXcd(0.5 * (c + it->second.conjugate()));
      sym.emplace(k, avg);
      sym.emplace(std::move(nk), avg.conjugate());
    }
    coeffs_ = std::move(sym);
  }

  std::size_t m_;
  std::size_t p_;
  int K_;
  bool real_;
  Coeffs coeffs_;
  double truncation_loss_ = 0.0;
};

inline void require_same_shape(const FourierMap& a, const FourierMap& b, const char* op) {
  if (a.dim() != b.dim() || a.values() != b.values())
    throw dimension_error(std::string(op) + ": operands differ in torus or value dimension");
}

inline FourierMap operator+(const FourierMap& a, const FourierMap& b) {
  require_same_shape(a, b, "add");
  FourierMap::Coeffs out = a.coeffs();
  for (const auto& [k, c] : b.coeffs()) {
    auto [it, inserted] = out.emplace(k, c);
    if (!inserted) it->second += c;
  }
  return FourierMap(a.dim(), a.values(), std::max(a.radius(), b.radius()), std::move(out),
                    a.is_real() && b.is_real());
}

inline FourierMap operator*(double s, const FourierMap& a) {
  FourierMap::Coeffs out;
  for (const auto& [k, c] : a.coeffs()) out.emplace(k, s * c);
  return FourierMap(a.dim(), a.values(), a.radius(), std::move(out), a.is_real());
}

inline FourierMap operator-(const FourierMap& a, const FourierMap& b) { return a + (-1.0) * b; }

/// Derivative in the direction omega: coefficient k becomes i<omega,k> c_k.
inline FourierMap d_omega(const FourierMap& f, const FrequencyVector& omega) {
  if (omega.size() != f.dim()) throw dimension_error("d_omega: torus dimension differs from |omega|");
  FourierMap::Coeffs out;
  for (const auto& [k, c] : f.coeffs()) {
    const double s = omega.dot(k);
    if (s != 0.0) out.emplace(k, cplx(0.0, s) * c);
  }
  return FourierMap(f.dim(), f.values(), f.radius(), std::move(out), f.is_real());
}

/// Partial derivative with respect to phi_i.
inline FourierMap partial(const FourierMap& f, std::size_t i) {
  if (i >= f.dim()) throw dimension_error("partial: direction out of range");
  FourierMap::Coeffs out;
  for (const auto& [k, c] : f.coeffs())
    if (k[i] != 0) out.emplace(k, cplx(0.0, k[i]) * c);
  return FourierMap(f.dim(), f.values(), f.radius(), std::move(out), f.is_real());
}

/// Restricts to |k| <= K, recording the dropped l2 mass.
inline FourierMap truncate(const FourierMap& f, int K) {
  const long K2 = static_cast<long>(K) * K;
  FourierMap::Coeffs out;
  double lost = 0.0;
  for (const auto& [k, c] : f.coeffs()) {
    if (norm2(k) <= K2)
      out.emplace(k, c);
    else
      lost += c.squaredNorm();
  }
  FourierMap r(f.dim(), f.values(), K, std::move(out), f.is_real());
  r.set_truncation_loss(std::sqrt(lost));
  return r;
}

/// Product of a scalar-valued map with a vector-valued one by exact
/// convolution of the coefficient sets, truncated back to `K`
/// (default: the larger input radius).
inline FourierMap multiply(const FourierMap& f, const FourierMap& g, int K = -1) {
  if (f.values() != 1) throw dimension_error("multiply: first factor must be scalar-valued");
  if (f.dim() != g.dim()) throw dimension_error("multiply: torus dimensions differ");
  if (K < 0) K = std::max(f.radius(), g.radius());
  const long K2 = static_cast<long>(K) * K;
  FourierMap::Coeffs out;
  double lost = 0.0;
  std::map<Wavevector, Eigen::VectorXcd> dropped;
  for (const auto& [kf, cf] : f.coeffs()) {
    for (const auto& [kg, cg] : g.coeffs()) {
      Wavevector k(kf.size());
      for (std::size_t i = 0; i < k.size(); ++i) k[i] = kf[i] + kg[i];
      auto& target = norm2(k) <= K2 ? out : dropped;
      Eigen::VectorXcd term = cf[0] * cg;
      auto [it, inserted] = target.emplace(std::move(k), term);
      if (!inserted) it->second += term;
    }
  }
  for (const auto& [k, c] : dropped) lost += c.squaredNorm();
  FourierMap r(f.dim(), g.values(), K, std::move(out), f.is_real() && g.is_real());
  r.set_truncation_loss(std::sqrt(lost));
  return r;
}

/// Embeds a map on an m_f-torus into an m-torus (angles starting at
/// `angle_offset`) with values placed at `value_offset` in R^p.
inline FourierMap lift(const FourierMap& f, std::size_t m, std::size_t angle_offset, std::size_t p,
                       std::size_t value_offset) {
  if (angle_offset + f.dim() > m || value_offset + f.values() > p)
    throw dimension_error("lift: target dimensions too small");
  FourierMap::Coeffs out;
  for (const auto& [k, c] : f.coeffs()) {
    Wavevector kk(m, 0);
    std::copy(k.begin(), k.end(), kk.begin() + static_cast<long>(angle_offset));
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(p));
    v.segment(static_cast<Eigen::Index>(value_offset), c.size()) = c;
    out.emplace(std::move(kk), std::move(v));
  }
  return FourierMap(m, p, f.radius(), std::move(out), f.is_real());
}

/// (sum_k ||c_k||^2 W(|k|)^2)^(1/2)
inline double weighted_norm(const FourierMap& f, const std::function<double(double)>& weight) {
  double s = 0.0;
  for (const auto& [k, c] : f.coeffs()) {
    const double w = weight(std::sqrt(static_cast<double>(norm2(k))));
    s += c.squaredNorm() * w * w;
  }
  return std::sqrt(s);
}

/// Largest coefficient norm.
inline double max_coeff_norm(const FourierMap& f) {
  double best = 0.0;
  for (const auto& [k, c] : f.coeffs()) best = std::max(best, c.norm());
  return best;
}

// ---------------------------------------------------------------------------
// Regular grids phi_i = 2 pi i / n on the torus.

/// Samples of a C^p-valued function on a regular grid. Nodes are stored with
/// the last angle varying fastest and the value index fastest of all.
struct TorusGrid {
  std::size_t m = 0;
  std::size_t p = 0;
  std::vector<int> n;
  std::vector<cplx> values;

  TorusGrid() = default;
  TorusGrid(std::size_t m_, std::size_t p_, std::vector<int> n_) : m(m_), p(p_), n(std::move(n_)) {
    if (n.size() != m) throw dimension_error("grid needs one sample count per angle");
    values.assign(nodes() * p, cplx(0.0, 0.0));
  }

  std::size_t nodes() const {
    std::size_t s = 1;
    for (int v : n) s *= static_cast<std::size_t>(v);
    return s;
  }

  std::vector<double> phi(std::size_t node) const {
    std::vector<double> out(m);
    for (std::size_t d = m; d-- > 0;) {
      const auto nd = static_cast<std::size_t>(n[d]);
      out[d] = 2.0 * std::numbers::pi * static_cast<double>(node % nd) / static_cast<double>(nd);
      node /= nd;
    }
    return out;
  }

  cplx& at(std::size_t node, std::size_t c) { return values[node * p + c]; }
  const cplx& at(std::size_t node, std::size_t c) const { return values[node * p + c]; }

  /// Real parts of the values at one node.
  Eigen::VectorXd real_at(std::size_t node) const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(p));
    for (std::size_t c = 0; c < p; ++c) v[static_cast<Eigen::Index>(c)] = values[node * p + c].real();
    return v;
  }

  /// Real parts at one node viewed as a rows x cols row-major matrix.
  Eigen::MatrixXd matrix_at(std::size_t node, std::size_t rows, std::size_t cols) const {
    if (rows * cols != p) throw dimension_error("matrix_at: shape does not match value dimension");
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = values[node * p + r * cols + c].real();
    return out;
  }

  void set_real(std::size_t node, const Eigen::Ref<const Eigen::VectorXd>& v) {
    for (std::size_t c = 0; c < p; ++c) values[node * p + c] = cplx(v[static_cast<Eigen::Index>(c)], 0.0);
  }

  double sup_norm() const {
    double best = 0.0;
    for (const auto& v : values) best = std::max(best, std::abs(v));
    return best;
  }
};

/// Samples per angle for a series of radius K: at least 2K+2 and the 3/2
/// de-aliasing rule applied to the 2K+1 retained modes.
inline int dealiased_size(int K) { return std::max(2 * K + 2, (3 * (2 * K + 1) + 1) / 2); }

namespace detail {

// In-place separable DFT over every angle. sign = -1: forward (unscaled),
// sign = +1: inverse. Summation order is fixed, so results are deterministic.
inline void dft_axes(std::vector<cplx>& v, std::size_t p, const std::vector<int>& n, int sign) {
  const std::size_t m = n.size();
  const std::size_t total = v.size();
  std::vector<cplx> line, out, w;
  for (std::size_t d = 0; d < m; ++d) {
    const auto nd = static_cast<std::size_t>(n[d]);
    if (nd == 1) continue;
    std::size_t stride = p;
    for (std::size_t e = d + 1; e < m; ++e) stride *= static_cast<std::size_t>(n[e]);
    w.resize(nd * nd);
    for (std::size_t s = 0; s < nd; ++s)
      for (std::size_t j = 0; j < nd; ++j)
        w[s * nd + j] = std::polar(1.0, sign * 2.0 * std::numbers::pi * static_cast<double>((s * j) % nd) /
                                            static_cast<double>(nd));
    line.resize(nd);
    out.resize(nd);
    const std::size_t block = stride * nd;
    for (std::size_t base = 0; base < total; base += block) {
      for (std::size_t off = 0; off < stride; ++off) {
        for (std::size_t j = 0; j < nd; ++j) line[j] = v[base + off + j * stride];
        for (std::size_t s = 0; s < nd; ++s) {
          cplx acc(0.0, 0.0);
          const cplx* ws = &w[s * nd];
          for (std::size_t j = 0; j < nd; ++j) acc += ws[j] * line[j];
          out[s] = acc;
        }
        for (std::size_t s = 0; s < nd; ++s) v[base + off + s * stride] = out[s];
      }
    }
  }
}

}  // namespace detail

inline std::vector<int> uniform_sizes(std::size_t m, int n) { return std::vector<int>(m, n); }

/// Evaluates f on the regular grid with `n` samples per angle.
inline TorusGrid sample(const FourierMap& f, const std::vector<int>& n) {
  TorusGrid g(f.dim(), f.values(), n);
  std::vector<std::size_t> stride(f.dim(), g.p);
  for (std::size_t d = f.dim(); d-- > 1;) stride[d - 1] = stride[d] * static_cast<std::size_t>(n[d]);
  for (const auto& [k, c] : f.coeffs()) {
    std::size_t offset = 0;
    for (std::size_t d = 0; d < f.dim(); ++d) {
      if (2 * std::abs(k[d]) >= n[d])
        throw numerical_error("sample", "grid with " + std::to_string(n[d]) + " points cannot resolve wave vector " +
                                            to_string(k));
      const int slot = ((k[d] % n[d]) + n[d]) % n[d];
      offset += static_cast<std::size_t>(slot) * stride[d];
    }
    for (std::size_t c2 = 0; c2 < g.p; ++c2) g.values[offset + c2] += c[static_cast<Eigen::Index>(c2)];
  }
  detail::dft_axes(g.values, g.p, g.n, +1);
  return g;
}

inline TorusGrid sample(const FourierMap& f, int n) { return sample(f, uniform_sizes(f.dim(), n)); }

/// Discrete Fourier projection of grid samples onto |k| <= K. Coefficients at
/// round-off level (relative to the largest sample) are dropped; resolved
/// coefficients beyond K are counted in truncation_loss().
inline FourierMap project(const TorusGrid& g, int K, bool real = true) {
  std::vector<cplx> v = g.values;
  detail::dft_axes(v, g.p, g.n, -1);
  const double scale = 1.0 / static_cast<double>(g.nodes());
  const double tol = 1e-13 * g.sup_norm();
  const long K2 = static_cast<long>(K) * K;
  FourierMap::Coeffs out;
  double lost = 0.0;
  const std::size_t nodes = g.nodes();
  Wavevector k(g.m);
  for (std::size_t node = 0; node < nodes; ++node) {
    std::size_t rest = node;
    bool nyquist = false;
    for (std::size_t d = g.m; d-- > 0;) {
      const auto nd = static_cast<std::size_t>(g.n[d]);
      const int s = static_cast<int>(rest % nd);
      rest /= nd;
      if (2 * s == g.n[d]) nyquist = true;
      k[d] = 2 * s < g.n[d] ? s : s - g.n[d];
    }
    Eigen::VectorXcd c(static_cast<Eigen::Index>(g.p));
    for (std::size_t j = 0; j < g.p; ++j) c[static_cast<Eigen::Index>(j)] = v[node * g.p + j] * scale;
    const double nrm = c.norm();
    if (nrm <= tol) continue;
    if (nyquist || norm2(k) > K2) {
      lost += nrm * nrm;
      continue;
    }
    out.emplace(k, std::move(c));
  }
  FourierMap f(g.m, g.p, K, std::move(out), real);
  f.set_truncation_loss(std::sqrt(lost));
  return f;
}

/// Scalar evaluator for a smooth map R^p -> R^q.
using PointMap = std::function<void(std::span<const double> in, std::span<double> out)>;

/// Pseudo-spectral composition F o e projected back onto |k| <= radius(e).
inline FourierMap compose_map(const PointMap& F, std::size_t q, const FourierMap& e, int n = 0) {
  if (!e.is_real()) throw config_error("compose_map: embedding must be real-valued");
  if (n <= 0) n = dealiased_size(e.radius());
  TorusGrid in = sample(e, n);
  TorusGrid out(e.dim(), q, in.n);
  std::vector<double> x(e.values()), y(q);
  for (std::size_t node = 0; node < in.nodes(); ++node) {
    for (std::size_t c = 0; c < e.values(); ++c) x[c] = in.at(node, c).real();
    F(x, y);
    for (std::size_t c = 0; c < q; ++c) {
      if (!std::isfinite(y[c]))
        throw numerical_error("compose_map", "evaluator returned a non-finite value at grid node " +
                                                 std::to_string(node));
      out.at(node, c) = cplx(y[c], 0.0);
    }
  }
  return project(out, e.radius(), true);
}

// ---------------------------------------------------------------------------
// JSON: {"m":..,"p":..,"K":..,"coeffs":[{"k":[..],"re":[..],"im":[..]},..]}

inline nlohmann::json to_json(const FourierMap& f) {
  nlohmann::json coeffs = nlohmann::json::array();
  for (const auto& [k, c] : f.coeffs()) {
    std::vector<double> re(static_cast<std::size_t>(c.size())), im(static_cast<std::size_t>(c.size()));
    for (Eigen::Index i = 0; i < c.size(); ++i) {
      re[static_cast<std::size_t>(i)] = c[i].real();
      im[static_cast<std::size_t>(i)] = c[i].imag();
    }
    coeffs.push_back({{"k", k}, {"re", re}, {"im", im}});
  }
  return {{"m", f.dim()}, {"p", f.values()}, {"K", f.radius()}, {"coeffs", coeffs}};
}

/// Inverse of to_json. The map is flagged real when its coefficients are
/// exactly conjugate symmetric.
inline FourierMap fourier_map_from_json(const nlohmann::json& j) {
  const auto m = j.at("m").get<std::size_t>();
  const auto p = j.at("p").get<std::size_t>();
  const int K = j.at("K").get<int>();
  FourierMap::Coeffs coeffs;
  for (const auto& e : j.at("coeffs")) {
    auto k = e.at("k").get<Wavevector>();
    auto re = e.at("re").get<std::vector<double>>();
    auto im = e.at("im").get<std::vector<double>>();
    if (re.size() != p || im.size() != p) throw config_error("fourier map json: coefficient length differs from p");
    Eigen::VectorXcd c(static_cast<Eigen::Index>(p));
    for (std::size_t i = 0; i < p; ++i) c[static_cast<Eigen::Index>(i)] = cplx(re[i], im[i]);
    coeffs.emplace(std::move(k), std::move(c));
  }
  bool real = true;
  for (const auto& [k, c] : coeffs) {
    auto it = coeffs.find(negated(k));
    if (it == coeffs.end() || it->second != c.conjugate()) {
      real = false;
      break;
    }
  }
  return FourierMap(m, p, K, std::move(coeffs), real);
}

}  // namespace torusred
