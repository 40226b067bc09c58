#pragma once

// Batch front-end: JSON run configuration, preset parameter sets and the
// bundle / reduce / simulate / sweep / verify commands.

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "torusred/bundle.hpp"
#include "torusred/error.hpp"
#include "torusred/models.hpp"
#include "torusred/reduction.hpp"
#include "torusred/sim.hpp"
#include "torusred/verify.hpp"

namespace torusred {

enum ExitCode : int { exit_ok = 0, exit_config = 2, exit_numerical = 3, exit_acceptance = 4 };

struct SweepConfig {
  double eps_min = 0.02;
  double eps_max = 0.1;
  std::size_t count = 20;
  double horizon_scale = 25.0;
  Eigen::VectorXd x0;
};

struct RunConfig {
  std::string command;
  ChainConfig chain;
  ReductionOptions reduction;
  IntegratorSpec integrator;
  Eigen::VectorXd x0;  // simulate start
  SweepConfig sweep;
  std::string out_dir = "out";
};

namespace detail {

inline double finite(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw config_error(std::string("missing config field '") + key + "'");
  if (!j.at(key).is_number()) throw config_error(std::string("config field '") + key + "' must be a number");
  const double v = j.at(key).get<double>();
  if (!std::isfinite(v)) throw config_error(std::string("config field '") + key + "' must be finite");
  return v;
}

inline double finite_or(const nlohmann::json& j, const char* key, double fallback) {
  return j.contains(key) ? finite(j, key) : fallback;
}

inline int integer_or(const nlohmann::json& j, const char* key, int fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number_integer()) throw config_error(std::string("config field '") + key + "' must be an integer");
  return j.at(key).get<int>();
}

inline Eigen::VectorXd chain_point(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw config_error(std::string(what) + " must list three [re, im] pairs");
  Eigen::VectorXd x(6);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& z = j[i];
    if (!z.is_array() || z.size() != 2 || !z[0].is_number() || !z[1].is_number())
      throw config_error(std::string(what) + " entries must be [re, im] number pairs");
    x[static_cast<Eigen::Index>(2 * i)] = z[0].get<double>();
    x[static_cast<Eigen::Index>(2 * i + 1)] = z[1].get<double>();
  }
  if (!x.allFinite()) throw config_error(std::string(what) + " must be finite");
  return x;
}

inline nlohmann::json point_json(std::initializer_list<std::pair<double, double>> z) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& [re, im] : z) a.push_back({re, im});
  return a;
}

}  // namespace detail

/// Built-in parameter sets: "set1" synchronises, "set2" phase-locks.
inline nlohmann::json preset_json(const std::string& name) {
  if (name != "set1" && name != "set2") throw config_error("unknown preset '" + name + "' (expected set1 or set2)");
  const bool one = name == "set1";
  nlohmann::json j;
  j["model"] = {{"alpha", 1.0}, {"beta", one ? 1.0 : 0.1}, {"gamma", -1.0}, {"delta", 1.0}, {"a", 1.0},
                {"b", one ? 2.0 : 6.0}, {"c", -1.0}, {"d", -1.0}, {"epsilon", 0.1}};
  nlohmann::json integ = one ? nlohmann::json{{"scheme", "euler"}, {"dt", 0.05}, {"t_end", 4000.0}, {"record_stride", 10}}
                             : nlohmann::json{{"scheme", "rk4"}, {"dt", 0.01}, {"t_end", 4000.0}, {"record_stride", 50}};
  j["numerics"] = {{"J", 2}, {"K", 8}, {"K_nf", 6}, {"integrator", integ}};
  j["simulate"] = {{"x0", one ? detail::point_json({{-1.0, 0.0}, {1.0, 0.4}, {-1.0, 0.3}})
                               : detail::point_json({{1.0, 0.3}, {1.0, 0.4}, {-0.2, 0.9}})}};
  j["sweep"] = {{"eps_min", 0.02},
                {"eps_max", 0.1},
                {"count", 20},
                {"horizon_scale", 25.0},
                {"x0", detail::point_json({{-1.0, 0.3}, {1.0, 0.4}, {-1.0, 0.5}})}};
  return j;
}

/// Reads a run configuration document. Absent sections fall back to set 1.
inline RunConfig parse_config(const nlohmann::json& j) {
  if (!j.is_object()) throw config_error("config must be a JSON object");
  const nlohmann::json base = preset_json("set1");
  RunConfig c;
  if (j.contains("command")) c.command = j.at("command").get<std::string>();
  if (j.contains("output")) c.out_dir = j.at("output").get<std::string>();

  const auto& m = j.contains("model") ? j.at("model") : base.at("model");
  c.chain.outer = {detail::finite(m, "alpha"), detail::finite(m, "beta"), detail::finite(m, "gamma"),
                   detail::finite(m, "delta")};
  c.chain.middle = {detail::finite(m, "a"), detail::finite(m, "b"), detail::finite(m, "c"), detail::finite(m, "d")};
  c.chain.epsilon = detail::finite(m, "epsilon");
  c.chain.validate();

  const auto& n = j.contains("numerics") ? j.at("numerics") : base.at("numerics");
  c.reduction.J = detail::integer_or(n, "J", 2);
  c.reduction.K = detail::integer_or(n, "K", 8);
  c.reduction.K_nf = detail::integer_or(n, "K_nf", -1);
  c.reduction.tol_res = detail::finite_or(n, "tol_res", -1.0);
  if (c.reduction.J < 0 || c.reduction.J > 4) throw config_error("numerics.J must lie in 0..4");
  if (c.reduction.K < 1) throw config_error("numerics.K must be positive");
  if (c.reduction.K_nf > c.reduction.K) throw config_error("numerics.K_nf must not exceed numerics.K");
  if (n.contains("integrator")) {
    const auto& i = n.at("integrator");
    if (i.contains("scheme")) c.integrator.scheme = scheme_from_string(i.at("scheme").get<std::string>());
    c.integrator.dt = detail::finite_or(i, "dt", c.integrator.dt);
    c.integrator.t_end = detail::finite_or(i, "t_end", c.integrator.t_end);
    const int stride = detail::integer_or(i, "record_stride", 1);
    if (stride < 1) throw config_error("numerics.integrator.record_stride must be at least 1");
    c.integrator.record_stride = static_cast<std::size_t>(stride);
  }
  c.integrator.validate();

  const auto& s = j.contains("simulate") ? j.at("simulate") : base.at("simulate");
  c.x0 = detail::chain_point(s.at("x0"), "simulate.x0");

  const auto& w = j.contains("sweep") ? j.at("sweep") : base.at("sweep");
  c.sweep.eps_min = detail::finite(w, "eps_min");
  c.sweep.eps_max = detail::finite(w, "eps_max");
  const int count = detail::integer_or(w, "count", 20);
  if (count < 2) throw config_error("sweep.count must be at least 2");
  c.sweep.count = static_cast<std::size_t>(count);
  c.sweep.horizon_scale = detail::finite_or(w, "horizon_scale", 25.0);
  c.sweep.x0 = detail::chain_point(w.at("x0"), "sweep.x0");
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot read config file '" + path + "'");
  try {
    return parse_config(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw config_error("config file '" + path + "': " + e.what());
  }
}

namespace detail {

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw config_error("cannot write '" + p.string() + "'");
  out << text;
}

inline std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

inline int cmd_bundle(const RunConfig& c, const std::filesystem::path& out, std::ostream& log) {
  const auto model = chain_model(c.chain);
  const auto b = chain_bundle(c.chain);
  const auto d = diagnose(b, model.fields[0]);
  auto j = to_json(b);
  j["diagnostics"] = {{"invariance", d.invariance},         {"transversality_condition", d.transversality},
                      {"fibre_residual", d.pde_residual},    {"spectral_gap", d.spectral_gap},
                      {"projection_error", d.projection_error}, {"tangent_identity", d.tangent_identity}};
  write_text(out / "bundle.json", dump(j));
  log << "bundle: fibre residual " << d.pde_residual << ", spectral gap " << d.spectral_gap << ", wrote "
      << (out / "bundle.json").string() << "\n";
  return exit_ok;
}

inline int cmd_reduce(const RunConfig& c, const std::filesystem::path& out, std::ostream& log) {
  const auto model = chain_model(c.chain);
  const auto res = reduce(model, chain_bundle(c.chain), c.reduction);
  write_text(out / "reduction.json", dump(to_json(res)));
  const auto f = chain_AB(c.chain);
  nlohmann::json report = {{"A_formula", f.A}, {"B_formula", f.B}, {"normal_form_defect", normal_form_defect(res)}};
  if (res.J >= 2) {
    const auto p = chain_AB_from_reduction(res);
    report["A_pipeline"] = p.A;
    report["B_pipeline"] = p.B;
    report["dA"] = std::abs(p.A - f.A);
    report["dB"] = std::abs(p.B - f.B);
    log << "A_pipeline " << detail::num(p.A) << "  A_formula " << detail::num(f.A) << "\n"
        << "B_pipeline " << detail::num(p.B) << "  B_formula " << detail::num(f.B) << "\n";
  }
  report["residuals"] = to_json(res).at("residuals");
  report["conjugacy_residual"] = conjugacy_residual(model, res, c.chain.epsilon);
  write_text(out / "report.json", dump(report));
  log << "reduce: wrote " << (out / "reduction.json").string() << " and " << (out / "report.json").string() << "\n";
  return exit_ok;
}

inline int cmd_simulate(const RunConfig& c, const std::filesystem::path& out, std::ostream& log) {
  const auto rec = integrate_full(chain_model(c.chain), c.chain.epsilon, c.x0, c.integrator);
  std::ostringstream csv;
  write_csv(csv, rec);
  write_text(out / "trajectory.csv", csv.str());
  if (rec.failed) throw numerical_error("integrate_full", rec.failure);
  nlohmann::json summary = {{"epsilon", c.chain.epsilon}, {"scheme", to_string(c.integrator.scheme)},
                            {"dt", c.integrator.dt},      {"t_end", c.integrator.t_end},
                            {"phi_hat_0", rec.phi_hat.front()}, {"phi_hat_end", rec.phi_hat.back()}};
  try {
    const auto t = measure_T01(rec, chain_beat_period(c.chain));
    summary["T01"] = t.converged() ? nlohmann::json(t.envelope) : nlohmann::json(nullptr);
    summary["T01_raw"] = std::isfinite(t.raw) ? nlohmann::json(t.raw) : nlohmann::json(nullptr);
  } catch (const numerical_error&) {
    summary["T01"] = nullptr;
    summary["T01_raw"] = nullptr;
  }
  write_text(out / "simulate.json", dump(summary));
  log << "simulate: phi_hat(end) = " << detail::num(rec.phi_hat.back()) << ", wrote "
      << (out / "trajectory.csv").string() << "\n";
  return exit_ok;
}

inline int cmd_sweep(const RunConfig& c, const std::filesystem::path& out, std::ostream& log) {
  SweepSpec spec{c.integrator, c.sweep.horizon_scale, chain_beat_period(c.chain)};
  const auto s = sweep_epsilon(chain_model(c.chain), c.sweep.x0, log_spaced(c.sweep.eps_min, c.sweep.eps_max, c.sweep.count),
                               spec);
  std::ostringstream csv;
  write_csv(csv, s);
  write_text(out / "sweep.csv", csv.str());
  nlohmann::json j = {{"points", s.epsilon.size()}};
  if (s.fit) {
    j["slope"] = s.fit->slope;
    j["intercept"] = s.fit->intercept;
  }
  write_text(out / "sweep.json", dump(j));
  if (!s.fit) throw numerical_error("sweep_epsilon", s.fit_error);
  log << "sweep: slope " << detail::num(s.fit->slope) << ", wrote " << (out / "sweep.csv").string() << "\n";
  return exit_ok;
}

inline int cmd_verify(const std::filesystem::path& out, std::ostream& log) {
  nlohmann::json items = nlohmann::json::array();
  bool all = true;
  run_battery([&](const CheckResult& r) {
    log << (r.passed ? "PASS" : "FAIL") << " [" << r.id << "] " << r.name << ": " << r.detail << "\n";
    log.flush();
    items.push_back({{"id", r.id}, {"name", r.name}, {"passed", r.passed}});
    all = all && r.passed;
  });
  write_text(out / "verify.json", dump({{"criteria", items}, {"passed", all}}));
  log << (all ? "verify: all checks passed" : "verify: some checks failed") << "\n";
  return all ? exit_ok : exit_acceptance;
}

}  // namespace detail

/// Runs one command; returns the process exit status. Errors are reported on
/// `err`.
inline int run(const RunConfig& c, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  try {
    const std::filesystem::path out(c.out_dir);
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec) throw config_error("cannot create output directory '" + c.out_dir + "': " + ec.message());
    if (c.command == "bundle") return detail::cmd_bundle(c, out, log);
    if (c.command == "reduce") return detail::cmd_reduce(c, out, log);
    if (c.command == "simulate") return detail::cmd_simulate(c, out, log);
    if (c.command == "sweep") return detail::cmd_sweep(c, out, log);
    if (c.command == "verify") return detail::cmd_verify(out, log);
    throw config_error("unknown command '" + c.command + "'");
  } catch (const numerical_error& e) {
    err << "numerical failure in " << e.operation() << ": " << e.what() << "\n";
    return exit_numerical;
  } catch (const config_error& e) {
    err << "config error: " << e.what() << "\n";
    return exit_config;
  } catch (const dimension_error& e) {
    err << "config error: " << e.what() << "\n";
    return exit_config;
  }
}

}  // namespace torusred
