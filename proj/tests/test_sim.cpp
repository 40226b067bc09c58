#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "torusred/sim.hpp"
#include "torusred/verify.hpp"

using namespace torusred;

namespace {

const ReductionResult& set1_reduction() {
  static const auto r = reduce(chain_model(preset_set1()), chain_bundle(preset_set1()), {});
  return r;
}

const ReductionResult& set2_reduction() {
  static const auto r = reduce(chain_model(preset_set2()), chain_bundle(preset_set2()), {});
  return r;
}

TrajectoryRecord synthetic(double dt, double t_end, const std::function<double(double)>& f) {
  TrajectoryRecord rec;
  for (std::size_t i = 0; i * dt <= t_end + 1e-12; ++i) {
    rec.t.push_back(i * dt);
    rec.phi_hat.push_back(f(i * dt));
  }
  return rec;
}

// Error at t = 2 of a Stuart-Landau orbit against the polar closed form.
double sl_error(Scheme s, double dt) {
  const StuartLandauParams p{1.0, 1.0, -1.0, 1.0};
  const auto model = uncoupled({sl_field(p)});
  const double t_end = 2.0;
  const Eigen::Vector2d x0(0.5, 0.2);
  const auto rec = integrate_full(model, 0.0, x0, {s, dt, t_end, 1, true});
  // Exact: r' = r - r^3 in polar form, theta' = 1 + r^2.
  const double r0 = x0.norm(), th0 = std::atan2(x0[1], x0[0]);
  const double r = 1.0 / std::sqrt(1.0 + (1.0 / (r0 * r0) - 1.0) * std::exp(-2.0 * t_end));
  const double c = 1.0 / (r0 * r0) - 1.0;
  const double integral = t_end + 0.5 * std::log((1.0 + c * std::exp(-2.0 * t_end)) / (1.0 + c));
  const double th = th0 + t_end + integral;
  const Eigen::Vector2d exact(r * std::cos(th), r * std::sin(th));
  return (rec.state(rec.size() - 1) - exact).norm();
}

}  // namespace

TEST(IntegrateReduced, UnperturbedFlowIsLinear) {
  const auto& r = set1_reduction();
  const Eigen::Vector3d phi0(0.1, -0.4, 2.0);
  const auto rec = integrate_reduced(r, 0.0, phi0, {Scheme::rk4, 0.01, 50.0, 10, true});
  for (std::size_t i = 0; i < rec.size(); ++i) {
    const Eigen::Vector3d exact = phi0 + Eigen::Vector3d(2.0, 1.0, 2.0) * rec.t[i];
    EXPECT_LT((rec.state(i) - exact).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(IntegrateFull, InvariantCirclesWithoutCoupling) {
  const auto cfg = preset_set1();
  const auto b = chain_bundle(cfg);
  const double phi[3] = {0.3, 1.1, -2.0};
  const auto rec = integrate_full(chain_model(cfg), 0.0, b.e0.real_at(phi), {Scheme::rk4, 1e-3, 20.0, 50, true});
  for (std::size_t i = 0; i < rec.size(); ++i)
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(rec.state(i).segment(2 * j, 2).norm(), 1.0, 1e-6);
}

TEST(IntegrateFull, SchemeOrders) {
  const std::vector<double> dts{1e-2, 5e-3, 2.5e-3};
  for (auto [s, order, tol] : {std::tuple{Scheme::rk4, 4.0, 0.3}, std::tuple{Scheme::euler, 1.0, 0.2}}) {
    std::vector<double> err;
    for (double dt : dts) err.push_back(sl_error(s, dt));
    EXPECT_NEAR(fit_loglog(dts, err).slope, order, tol) << to_string(s);
  }
}

TEST(IntegrateFull, BlowUpSetsFailureFlag) {
  // Forward Euler on x' = 50 x overflows the blow-up threshold quickly.
  OscillatorModel m = uncoupled({VectorField::linear(Eigen::Matrix2d::Identity() * 50.0)});
  const auto rec = integrate_full(m, 0.0, Eigen::Vector2d(1.0, 0.0), {Scheme::euler, 0.1, 100.0, 1, true});
  EXPECT_TRUE(rec.failed);
  EXPECT_FALSE(rec.failure.empty());
  EXPECT_LT(rec.t.back(), 100.0);
}

TEST(IntegrateFull, TorusAttraction) {
  const auto cfg = preset_set1();
  const auto rec =
      integrate_full(chain_model(cfg), 0.1, chain_state({0.2, 0.0}, {1.8, 0.4}, {0.0, -0.3}), {Scheme::rk4, 0.01, 10.0, 1, true});
  auto dist = [&](std::size_t i) {
    double d = 0.0;
    for (int j = 0; j < 3; ++j) d = std::max(d, std::abs(rec.state(i).segment(2 * j, 2).norm() - 1.0));
    return d;
  };
  EXPECT_GT(dist(0), 0.5);
  EXPECT_LE(dist(rec.size() - 1), 0.2);
  EXPECT_LT(dist(rec.size() - 1), dist(0));
}

TEST(IntegrateFull, UnwrappedObservableHasNoJumps) {
  const auto cfg = preset_set2();
  const auto rec = integrate_full(chain_model(cfg), 0.1, chain_state({1.0, 0.3}, {1.0, 0.4}, {-0.2, 0.9}),
                                  {Scheme::rk4, 0.01, 200.0, 1, false});
  for (std::size_t i = 1; i < rec.size(); ++i) EXPECT_LT(std::abs(rec.phi_hat[i] - rec.phi_hat[i - 1]), std::numbers::pi);
  EXPECT_TRUE(rec.states.empty());
}

TEST(Unwrap, NearestBranch) {
  EXPECT_NEAR(detail::unwrap(3.1, -3.1), 2 * std::numbers::pi - 3.1, 1e-15);
  EXPECT_NEAR(detail::unwrap(-9.3, 3.0), 3.0 - 4 * std::numbers::pi, 1e-14);
}

TEST(Chain, Set1SynchronisesByT2000) {
  const auto cfg = preset_set1();
  const auto rec = integrate_full(chain_model(cfg), 0.1, chain_state({-1.0, 0.0}, {1.0, 0.4}, {-1.0, 0.3}),
                                  {Scheme::euler, 0.05, 2000.0, 1, false});
  EXPECT_LE(std::abs(rec.phi_hat.back()), 0.05);
  const auto T = measure_T01(rec, chain_beat_period(cfg));
  ASSERT_TRUE(T.converged());
  EXPECT_LT(T.envelope, 4000.0);
  EXPECT_LE(T.raw, T.envelope);
}

TEST(Chain, Set2DoesNotReachTenPercent) {
  const auto cfg = preset_set2();
  const auto rec = integrate_full(chain_model(cfg), 0.1, chain_state({1.0, 0.3}, {1.0, 0.4}, {-0.2, 0.9}),
                                  {Scheme::euler, 0.05, 4000.0, 1, false});
  const auto T = measure_T01(rec, chain_beat_period(cfg));
  EXPECT_FALSE(T.converged());
  double lo = 1e300, hi = -1e300;
  for (std::size_t i = 0; i < rec.size(); ++i)
    if (rec.t[i] >= 3000.0) {
      lo = std::min(lo, rec.phi_hat[i]);
      hi = std::max(hi, rec.phi_hat[i]);
    }
  EXPECT_LE(0.5 * (hi - lo), 0.1);
  EXPECT_GT(std::abs(0.5 * (hi + lo)), 0.1);
}

TEST(Chain, ReducedTracksFullSystem) {
  const auto cfg = preset_set1();
  const Eigen::VectorXd x0 = chain_state({-1.0, 0.0}, {1.0, 0.4}, {-1.0, 0.3});
  const IntegratorSpec spec{Scheme::rk4, 0.01, 500.0, 10, false};
  const auto full = integrate_full(chain_model(cfg), 0.1, x0, spec);
  const auto red = integrate_reduced(set1_reduction(), 0.1, chain_phases(x0), spec, std::make_pair(0, 2));
  ASSERT_EQ(full.size(), red.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < full.size(); ++i) worst = std::max(worst, std::abs(full.phi_hat[i] - red.phi_hat[i]));
  EXPECT_LE(worst, 0.15);
  EXPECT_LT(std::abs(red.phi_hat.back()), std::abs(red.phi_hat.front()));
}

TEST(Chain, ReducedSet2LocksAtFixedPoint) {
  const auto cfg = preset_set2();
  const auto AB = chain_AB(cfg);
  const double eps = 0.1, t_end = 5.0 / (std::abs(AB.A) * eps * eps);
  const Eigen::VectorXd x0 = chain_state({1.0, 0.3}, {1.0, 0.4}, {-0.2, 0.9});
  const auto rec = integrate_reduced(set2_reduction(), eps, chain_phases(x0), {Scheme::rk4, 0.01, t_end, 100, false},
                                     std::make_pair(0, 2));
  const double target = chain_locked_phase(AB);
  EXPECT_LE(std::abs(std::remainder(rec.phi_hat.back() - target, 2 * std::numbers::pi)), 0.05);
}

TEST(T01, SyntheticExponentialDecay) {
  const double dt = 1e-3;
  const auto rec = synthetic(dt, 5.0, [](double t) { return 0.8 * std::exp(-t); });
  const auto T = measure_T01(rec, 0.1);
  EXPECT_NEAR(T.raw, std::log(10.0), dt);
  // A monotone signal is its own forward envelope.
  EXPECT_NEAR(T.envelope, std::log(10.0), dt);
}

TEST(T01, NonDecayingGivesFailureMarker) {
  const auto rec = synthetic(0.01, 50.0, [](double t) { return 0.5 + 0.1 * std::sin(t); });
  EXPECT_FALSE(measure_T01(rec, 2 * std::numbers::pi).converged());
}

TEST(T01, BaselineMustBeNonzero) {
  const auto rec = synthetic(0.01, 1.0, [](double t) { return 1e-8 * t; });
  EXPECT_THROW(measure_T01(rec, 0.1), numerical_error);
}

TEST(T01, EnvelopeIsForwardRunningMax) {
  const std::vector<double> t{0, 1, 2, 3, 4}, x{1, -3, 2, 0.5, 0.1};
  const auto env = envelope(t, x, 1.0);
  EXPECT_EQ(env[0], 3.0);
  EXPECT_EQ(env[1], 3.0);
  EXPECT_EQ(env[2], 2.0);
  EXPECT_EQ(env[3], 0.5);
  EXPECT_TRUE(std::isnan(env[4]));
}

TEST(Sweep, SyntheticPowerLaw) {
  const auto eps = log_spaced(0.02, 0.1, 20);
  std::vector<double> T;
  for (double e : eps) T.push_back(7.0 / (e * e));
  const auto fit = fit_loglog(eps, T);
  EXPECT_NEAR(fit.slope, -2.0, 1e-6);
  EXPECT_NEAR(std::exp(fit.intercept), 7.0, 1e-9);
  EXPECT_THROW(fit_loglog({0.1, 0.2}, {1.0, 2.0}), numerical_error);
}

TEST(Sweep, ReducedSystemSlope) {
  const auto cfg = preset_set1();
  const Eigen::VectorXd x0 = chain_state({-1.0, 0.3}, {1.0, 0.4}, {-1.0, 0.5});
  const SweepSpec spec{IntegratorSpec{Scheme::rk4, 0.2, 1.0, 1, false}, 25.0, chain_beat_period(cfg)};
  const auto s = sweep_reduced(set1_reduction(), chain_phases(x0), {0, 2}, log_spaced(0.02, 0.1, 20), spec);
  ASSERT_TRUE(s.fit.has_value()) << s.fit_error;
  for (const auto& t : s.T01) EXPECT_TRUE(t.converged());
  EXPECT_NEAR(s.fit->slope, -2.0, 0.1);
}

TEST(Sweep, ThreadCountDoesNotChangeResults) {
  const auto cfg = preset_set1();
  const Eigen::VectorXd x0 = chain_state({-1.0, 0.3}, {1.0, 0.4}, {-1.0, 0.5});
  const SweepSpec spec{IntegratorSpec{Scheme::rk4, 0.2, 1.0, 1, false}, 25.0, chain_beat_period(cfg)};
  const auto eps = log_spaced(0.05, 0.1, 6);
  ::setenv("TORUSRED_THREADS", "1", 1);
  const auto a = sweep_reduced(set1_reduction(), chain_phases(x0), {0, 2}, eps, spec);
  ::setenv("TORUSRED_THREADS", "4", 1);
  const auto b = sweep_reduced(set1_reduction(), chain_phases(x0), {0, 2}, eps, spec);
  ::setenv("TORUSRED_THREADS", "zero", 1);
  EXPECT_THROW(sweep_threads(), config_error);
  ::unsetenv("TORUSRED_THREADS");
  std::ostringstream sa, sb;
  write_csv(sa, a);
  write_csv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_THROW(sweep_reduced(set1_reduction(), chain_phases(x0), {0, 2}, {0.1, 0.05, 0.07}, spec), config_error);
}

TEST(Csv, HeadersAndPrecision) {
  const auto cfg = preset_set1();
  const auto rec = integrate_full(chain_model(cfg), 0.1, chain_state({-1.0, 0.0}, {1.0, 0.4}, {-1.0, 0.3}),
                                  {Scheme::rk4, 0.01, 0.02, 1, true});
  std::ostringstream os;
  write_csv(os, rec);
  std::istringstream is(os.str());
  std::string header, row;
  std::getline(is, header);
  EXPECT_EQ(header, "t,re_z1,im_z1,re_z2,im_z2,re_z3,im_z3,phi_hat");
  std::getline(is, row);
  EXPECT_EQ(row.substr(0, row.find(',')), "0");
  std::getline(is, row);
  EXPECT_EQ(row.substr(0, row.find(',')), "0.01");
  EXPECT_EQ(std::stod(row.substr(row.rfind(',') + 1)), rec.phi_hat[1]);

  SweepResult s;
  s.epsilon = {0.1};
  s.T01 = {T01Result{}};
  std::ostringstream ss;
  write_csv(ss, s);
  EXPECT_EQ(ss.str(), "epsilon,T01,converged\n0.10000000000000001,nan,0\n");
}

TEST(IntegratorSpec, Validation) {
  EXPECT_THROW((IntegratorSpec{Scheme::rk4, 0.0, 1.0, 1, true}).validate(), config_error);
  EXPECT_THROW((IntegratorSpec{Scheme::rk4, 0.1, -1.0, 1, true}).validate(), config_error);
  EXPECT_THROW((IntegratorSpec{Scheme::rk4, 0.1, 1.0, 0, true}).validate(), config_error);
  EXPECT_THROW(scheme_from_string("midpoint"), config_error);
  EXPECT_EQ(scheme_from_string("euler"), Scheme::euler);
  EXPECT_THROW(integrate_reduced(set1_reduction(), 0.1, Eigen::Vector3d::Zero(), {Scheme::rk4, 2.0, 10.0, 1, true}),
               config_error);
}
