#include <gtest/gtest.h>

#include <unsupported/Eigen/MatrixFunctions>

#include "oracles.hpp"
#include "torusred/bundle.hpp"
#include "torusred/models.hpp"

using namespace torusred;

namespace {

double max_sin_angle(const TorusBundle& a, const TorusBundle& b, int n = 256) {
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    const double phi[1] = {2.0 * std::numbers::pi * i / n};
    const Eigen::VectorXd u = a.N.real_at(phi), v = b.N.real_at(phi);
    worst = std::max(worst, std::abs(u[0] * v[1] - u[1] * v[0]) / (u.norm() * v.norm()));
  }
  return worst;
}

template <class F>
std::string message_of(F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(ObliqueProjection, ConstraintLeastSquaresOracle) { EXPECT_LE(oracle::projection_error(100), 1e-9); }

TEST(ObliqueProjection, OrthogonalCase) {
  const Eigen::MatrixXd P = oblique_projection(Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 3));
  EXPECT_LT((P - Eigen::Vector2d(1, 0).asDiagonal().toDenseMatrix()).norm(), 1e-15);
}

TEST(ObliqueProjection, StuartLandauClosedForm) {
  const StuartLandauParams p{1.0, 1.0, -1.0, 1.0};
  // At phi = 0 the tangent is (0, R) and the fibre (gamma, delta).
  const Eigen::MatrixXd P = oblique_projection(Eigen::Vector2d(0, p.radius()), Eigen::Vector2d(p.gamma, p.delta));
  EXPECT_LT((P - sl_projection(p, 0.0)).norm(), 1e-14);
}

TEST(ObliqueProjection, DegenerateThrows) {
  const auto msg = message_of([] { oblique_projection(Eigen::Vector2d(1, 1), Eigen::Vector2d(2, 2 + 1e-14)); });
  EXPECT_NE(msg.find("condition number"), std::string::npos) << msg;
  EXPECT_THROW(oblique_projection(Eigen::MatrixXd::Ones(3, 1), Eigen::MatrixXd::Ones(3, 1)), dimension_error);
}

TEST(Floquet, StuartLandauExponents) {
  const StuartLandauParams p{0.5, 1.0, -2.0, 0.3};
  const auto mono = floquet_decompose(sl_cycle(p), sl_field(p));
  ASSERT_EQ(mono.exponents.size(), 2u);
  EXPECT_LE(std::abs(mono.exponents[0]), 1e-6);
  EXPECT_LE(std::abs(mono.exponents[1] - cplx(p.floquet(), 0.0)), 1e-6);
  EXPECT_LT((((mono.floquet * mono.period).exp()) - mono.monodromy).norm(), 1e-8);
}

TEST(Floquet, IdentityMonodromyIsNotHyperbolic) {
  const auto msg = message_of([] { floquet_from_monodromy(Eigen::Matrix2d::Identity(), 1.0, 1e-6); });
  EXPECT_NE(msg.find("not normally hyperbolic"), std::string::npos) << msg;
}

TEST(Floquet, NegativeEigenvalueNeedsDoubleCover) {
  const Eigen::Matrix2d Phi = Eigen::Vector2d(1.0, -0.5).asDiagonal();
  const auto msg = message_of([&] { floquet_from_monodromy(Phi, 1.0, 1e-6); });
  EXPECT_NE(msg.find("double cover"), std::string::npos) << msg;
}

TEST(Floquet, VanDerPolLiouville) {
  const double mu = 1.0;
  const auto F = van_der_pol_field(mu);
  const auto cycle = find_limit_cycle(F, Eigen::Vector2d(2.0, 0.0), 6.6);
  EXPECT_NEAR(cycle.period, 6.6633, 1e-3);
  const auto mono = floquet_decompose(cycle, F);
  EXPECT_LT(((mono.floquet * mono.period).exp() - mono.monodromy).norm(), 1e-8);
  // trace B = (1/T) int_0^T div F(X(t)) dt, and the neutral exponent is 0.
  double integral = 0.0;
  const std::size_t n = cycle.intervals();
  for (std::size_t i = 0; i < n; ++i) {
    const double a = cycle.samples[i][0], b = cycle.samples[i + 1][0];
    integral += 0.5 * (mu * (1.0 - a * a) + mu * (1.0 - b * b)) * cycle.period / n;
  }
  const double expected = integral / cycle.period;
  EXPECT_NEAR(mono.floquet.trace(), expected, 1e-4);
  EXPECT_NEAR(mono.exponents[1].real(), expected, 1e-4);
  EXPECT_LE(std::abs(mono.exponents[0]), 1e-6);

  const auto b = cycle_bundle(cycle, mono, 48);
  const auto d = diagnose(b, F);
  EXPECT_LT(d.invariance, 1e-6);
  EXPECT_LT(d.pde_residual, 1e-6);
  EXPECT_LT(d.projection_error, 1e-6);
  EXPECT_NEAR(b.L(0, 0), expected, 1e-4);
}

TEST(CycleBundle, MatchesAnalyticStuartLandau) {
  for (const auto& p : {StuartLandauParams{1.0, 1.0, -1.0, 1.0}, StuartLandauParams{1.0, 2.0, -1.0, -1.0},
                        StuartLandauParams{1.0, -0.5, -1.0, 1.0}}) {
    const auto cycle = sl_cycle(p);
    const auto mono = floquet_decompose(cycle, sl_field(p));
    const auto num = cycle_bundle(cycle, mono);
    const auto ana = sl_bundle(p);
    EXPECT_LE(max_sin_angle(num, ana), 1e-6);
    EXPECT_NEAR(num.L(0, 0), p.floquet(), 1e-6);
    EXPECT_NEAR(num.omega[0], std::abs(p.frequency()), 1e-12);
    const auto d = diagnose(num, sl_field(p));
    EXPECT_LT(d.pde_residual, 1e-8);
    EXPECT_LT(d.invariance, 1e-8);
  }
}

TEST(CycleBundle, RankDeficientFloquetMatrixThrows) {
  const StuartLandauParams p{1.0, 1.0, -1.0, 1.0};
  const auto cycle = sl_cycle(p);
  auto mono = floquet_decompose(cycle, sl_field(p));
  mono.floquet.setIdentity();
  EXPECT_THROW(cycle_bundle(cycle, mono), numerical_error);
}

TEST(LimitCycle, MustClose) {
  std::vector<Eigen::VectorXd> x{Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1), Eigen::Vector2d(-1, 0)};
  EXPECT_THROW(LimitCycle(1.0, x, false), numerical_error);
  EXPECT_THROW(LimitCycle(-1.0, x, false), config_error);
}

TEST(AnalyticBundle, DefiningIdentities) {
  for (const auto& p : {StuartLandauParams{1.0, 1.0, -1.0, 1.0}, StuartLandauParams{0.3, -2.0, -0.5, 0.7}}) {
    const auto b = sl_bundle(p);
    const auto d = diagnose(b, sl_field(p));
    EXPECT_LT(d.invariance, 1e-12);
    EXPECT_LT(d.pde_residual, 1e-12);
    EXPECT_LT(d.tangent_identity, 1e-12);
    EXPECT_LT(d.projection_error, 1e-12);
    EXPECT_NEAR(d.spectral_gap, 2.0 * p.alpha, 1e-15);
    for (int i = 0; i < 16; ++i) {
      const double phi[1] = {0.4 * i};
      const Eigen::VectorXd pv = b.pi.real_at(phi);
      const Eigen::Matrix2d P = Eigen::Map<const Eigen::Matrix<double, 2, 2, Eigen::RowMajor>>(pv.data());
      EXPECT_LT((P - sl_projection(p, phi[0])).norm(), 1e-12);
    }
  }
}

TEST(AnalyticBundle, TangentMapIsDerivative) {
  const auto b = sl_bundle({1.0, 1.0, -1.0, 1.0});
  const auto T = b.tangent();
  EXPECT_LT(max_coeff_norm(T - partial(b.e0, 0)), 1e-15);
}

TEST(ProductBundle, BlockStructure) {
  const StuartLandauParams p1{1.0, 1.0, -1.0, 1.0}, p2{0.5, 3.0, -1.0, -1.0};
  const auto b = product_bundle({sl_bundle(p1), sl_bundle(p2)});
  EXPECT_EQ(b.state_dim(), 4u);
  EXPECT_EQ(b.torus_dim(), 2u);
  EXPECT_DOUBLE_EQ(b.omega[0], p1.frequency());
  EXPECT_DOUBLE_EQ(b.omega[1], p2.frequency());
  EXPECT_DOUBLE_EQ(b.L(1, 1), p2.floquet());
  EXPECT_EQ(b.L(0, 1), 0.0);
  const auto F0 = block_diagonal({sl_field(p1), sl_field(p2)});
  const auto d = diagnose(b, F0);
  EXPECT_LT(d.invariance, 1e-12);
  EXPECT_LT(d.pde_residual, 1e-12);
  EXPECT_LT(d.projection_error, 1e-12);
  const double phi[2] = {0.3, 1.7};
  const Eigen::VectorXd x = b.e0.real_at(phi);
  EXPECT_NEAR(x.head(2).norm(), p1.radius(), 1e-14);
  EXPECT_NEAR(x.tail(2).norm(), p2.radius(), 1e-14);
}

TEST(Regauge, Covariance) {
  const StuartLandauParams p1{1.0, 1.0, -1.0, 1.0}, p2{0.5, 3.0, -1.0, -1.0};
  const auto b = product_bundle({sl_bundle(p1), sl_bundle(p2)});
  Eigen::Matrix2d S;
  S << 2.0, 0.5, -1.0, 1.5;
  const auto r = regauge(b, S);
  const auto F0 = block_diagonal({sl_field(p1), sl_field(p2)});
  EXPECT_LT(diagnose(r, F0).pde_residual, 1e-12);
  Eigen::EigenSolver<Eigen::MatrixXd> e1(b.L), e2(r.L);
  std::vector<double> l1{e1.eigenvalues()[0].real(), e1.eigenvalues()[1].real()};
  std::vector<double> l2{e2.eigenvalues()[0].real(), e2.eigenvalues()[1].real()};
  std::sort(l1.begin(), l1.end());
  std::sort(l2.begin(), l2.end());
  EXPECT_NEAR(l1[0], l2[0], 1e-12);
  EXPECT_NEAR(l1[1], l2[1], 1e-12);
  const double phi[2] = {0.9, -0.2};
  const Eigen::VectorXd n0 = b.N.real_at(phi), n1 = r.N.real_at(phi);
  const Eigen::MatrixXd N0 = Eigen::Map<const Eigen::Matrix<double, 4, 2, Eigen::RowMajor>>(n0.data());
  const Eigen::MatrixXd N1 = Eigen::Map<const Eigen::Matrix<double, 4, 2, Eigen::RowMajor>>(n1.data());
  EXPECT_LT((N0 * S - N1).norm(), 1e-14);
  EXPECT_THROW(regauge(b, Eigen::Matrix2d::Zero()), config_error);
}

TEST(BundleJson, RoundTrip) {
  const auto b = sl_bundle({1.0, 1.0, -1.0, 1.0});
  const auto r = torus_bundle_from_json(nlohmann::json::parse(to_json(b).dump()));
  EXPECT_EQ(max_coeff_norm(b.e0 - r.e0), 0.0);
  EXPECT_EQ(max_coeff_norm(b.N - r.N), 0.0);
  EXPECT_EQ(max_coeff_norm(b.pi - r.pi), 0.0);
  EXPECT_EQ(b.L, r.L);
  EXPECT_EQ(b.omega.values(), r.omega.values());
}
