#pragma once

#include "muskat/config.hpp"
#include "muskat/geometry.hpp"
#include "muskat/holder.hpp"
#include "muskat/linearized.hpp"
#include "muskat/model_kernel.hpp"
#include "muskat/nonlinear.hpp"
#include "muskat/oracle1d.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <random>

namespace muskat::driver {

inline constexpr const char* version = "0.1.0";

using json = nlohmann::ordered_json;

enum class Mode { kernel_check, model_solve, linear_solve, nonlinear_solve, oracle_compare, holder_check };

inline const std::vector<std::pair<std::string, Mode>>& mode_names() {
  static const std::vector<std::pair<std::string, Mode>> m{
      {"kernel-check", Mode::kernel_check},       {"model-solve", Mode::model_solve},
      {"linear-solve", Mode::linear_solve},       {"nonlinear-solve", Mode::nonlinear_solve},
      {"oracle-compare", Mode::oracle_compare},   {"holder-check", Mode::holder_check}};
  return m;
}

/// Smooth outer data of size `amplitude`; lateral_variation = 0 gives laterally constant data.
struct DataSpec {
  double amplitude = 0.03;
  double lateral_variation = 1.0;
  double drift_plus = 0.2, drift_minus = 0.1;
  double c1_plus = 1.0, c3_plus = 0.0;  ///< f+(u) = c1 u + c3 u^3
  double c1_minus = 1.0, c3_minus = 0.2;
};

struct KernelCheckSpec {
  std::vector<double> times{0.25, 1.0};
  std::vector<double> eps{1.0, 0.1, 0.01};
  int n2 = 1024, n3 = 64;
  double L2 = 32.0, L3 = 8.0;
  double tol = 1e-6;
  std::vector<double> bound_eps{1e-3, 1e-2, 1e-1, 1.0};
  std::vector<double> bound_times{0.5, 1.0, 2.0};
  double bound_radius = 2.0;
  double bound_spread = 2.0;
};

struct RunConfig {
  Mode mode = Mode::nonlinear_solve;
  std::string mode_name;
  std::uint64_t seed = 0;
  std::string out = "out";
  geometry::DomainSpec domain{2, 1.0, 0.5, 16, 16};
  double plateau = 0.2;
  kernel::ModelParams model;
  double T = 0.5;
  int steps = 32;
  double alpha = 0.5;
  std::vector<double> eps_schedule{1.0, 0.1, 0.01, 0.001};
  double nu = 0.003, radius = 10.0, tol = 1e-8, kappa_max = 0.9, residual_tol = 1e-4, inner_tol = 1e-10;
  int max_iter = 20, max_halvings = 6;
  double solve_eps = 0.0;
  DataSpec data;
  KernelCheckSpec kernel;
  int oracle_space_steps = 1000, oracle_time_steps = 256;
  double oracle_tol = 1e-3, oracle_self_tol = 1e-5;
  int holder_samples = 4, holder_n = 32, holder_steps = 16;
  double holder_tol = 0.1;
  std::string hash;
};

namespace detail {

inline void check(const config::Config& c, bool ok, const std::string& key, const std::string& msg) {
  if (!ok) c.fail_key(key, "invalid '" + key + "': " + msg);
}

} // namespace detail

/// Reads and validates a run configuration. `run.mode` and `run.seed` are required.
inline RunConfig read_run_config(const config::Config& c) {
  using detail::check;
  RunConfig r;
  r.mode_name = c.require_string("run.mode");
  bool found = false;
  for (const auto& [name, m] : mode_names())
    if (name == r.mode_name) {
      r.mode = m;
      found = true;
    }
  check(c, found, "run.mode", "unknown mode '" + r.mode_name + "'");
  const std::string seed = c.require_string("run.seed");
  const long s = c.get_int("run.seed", 0);
  check(c, s >= 0, "run.seed", "must be non-negative, got " + seed);
  r.seed = static_cast<std::uint64_t>(s);
  r.out = c.get_string("run.out", r.out);

  r.domain.N = static_cast<int>(c.get_int("domain.N", r.domain.N));
  check(c, r.domain.N == 2 || r.domain.N == 3, "domain.N", "must be 2 or 3");
  r.domain.L = c.get_double("domain.L", r.domain.L);
  check(c, r.domain.L > 0, "domain.L", "must be positive");
  r.domain.lambda0 = c.get_double("domain.lambda0", r.domain.lambda0);
  check(c, r.domain.lambda0 > 0 && r.domain.lambda0 <= 0.5, "domain.lambda0", "must lie in (0, 1/2]");
  r.domain.lateral_n = static_cast<int>(c.get_int("domain.lateral_n", r.domain.lateral_n));
  check(c, r.domain.lateral_n >= 4, "domain.lateral_n", "must be at least 4");
  r.domain.vertical_M = static_cast<int>(c.get_int("domain.vertical_M", r.domain.vertical_M));
  check(c, r.domain.vertical_M >= 4, "domain.vertical_M", "must be at least 4");
  r.plateau = c.get_double("domain.plateau", r.plateau);
  check(c, r.plateau > 0 && r.plateau < 0.5, "domain.plateau", "must lie in (0, 1/2)");

  auto& m = r.model;
  m.a_plus = c.get_double("model.a_plus", 1.0);
  check(c, m.a_plus > 0, "model.a_plus", "must be positive");
  m.a_minus = c.get_double("model.a_minus", 2.0);
  check(c, m.a_minus > 0, "model.a_minus", "must be positive");
  m.m = c.get_double("model.m", 1.0);
  check(c, m.m > 0, "model.m", "must be positive");
  m.A = c.get_double("model.A", 1.5);
  check(c, m.A > 0, "model.A", "must be positive");
  m.h_plus[0] = c.get_double("model.h_plus", 0.3);
  m.h_minus[0] = c.get_double("model.h_minus", -0.2);
  m.eps = c.get_double("model.eps", 0.1);
  check(c, m.eps >= 0 && m.eps <= 1, "model.eps", "must lie in [0, 1]");

  r.T = c.get_double("time.T", r.T);
  check(c, r.T > 0, "time.T", "must be positive");
  r.steps = static_cast<int>(c.get_int("time.steps", r.steps));
  check(c, r.steps >= 4, "time.steps", "must be at least 4");

  r.alpha = c.get_double("solver.alpha", r.alpha);
  check(c, r.alpha > 0 && r.alpha < 1, "solver.alpha", "must lie in (0, 1)");
  r.eps_schedule = c.get_list("solver.eps_schedule", r.eps_schedule);
  for (double e : r.eps_schedule) check(c, e >= 0 && e <= 1, "solver.eps_schedule", "entries must lie in [0, 1]");
  r.solve_eps = c.get_double("solver.eps", r.solve_eps);
  check(c, r.solve_eps >= 0 && r.solve_eps <= 1, "solver.eps", "must lie in [0, 1]");
  r.nu = c.get_double("solver.nu", r.nu);
  check(c, r.nu > 0, "solver.nu", "must be positive");
  r.radius = c.get_double("solver.radius", r.radius);
  check(c, r.radius > 0, "solver.radius", "must be positive");
  r.tol = c.get_double("solver.tol", r.tol);
  check(c, r.tol > 0, "solver.tol", "must be positive");
  r.inner_tol = c.get_double("solver.inner_tol", r.inner_tol);
  check(c, r.inner_tol > 0, "solver.inner_tol", "must be positive");
  r.kappa_max = c.get_double("solver.kappa_max", r.kappa_max);
  check(c, r.kappa_max > 0 && r.kappa_max < 1, "solver.kappa_max", "must lie in (0, 1)");
  r.residual_tol = c.get_double("solver.residual_tol", r.residual_tol);
  check(c, r.residual_tol > 0, "solver.residual_tol", "must be positive");
  r.max_iter = static_cast<int>(c.get_int("solver.max_iter", r.max_iter));
  check(c, r.max_iter >= 1, "solver.max_iter", "must be at least 1");
  r.max_halvings = static_cast<int>(c.get_int("solver.max_halvings", r.max_halvings));
  check(c, r.max_halvings >= 0, "solver.max_halvings", "must be non-negative");

  auto& d = r.data;
  d.amplitude = c.get_double("data.amplitude", d.amplitude);
  check(c, d.amplitude > 0, "data.amplitude", "must be positive");
  d.lateral_variation = c.get_double("data.lateral_variation", d.lateral_variation);
  check(c, d.lateral_variation >= 0 && d.lateral_variation <= 5, "data.lateral_variation", "must lie in [0, 5]");
  d.drift_plus = c.get_double("data.drift_plus", d.drift_plus);
  d.drift_minus = c.get_double("data.drift_minus", d.drift_minus);
  d.c1_plus = c.get_double("data.c1_plus", d.c1_plus);
  check(c, d.c1_plus > 0, "data.c1_plus", "must be positive (f' >= nu > 0)");
  d.c3_plus = c.get_double("data.c3_plus", d.c3_plus);
  check(c, d.c3_plus >= 0, "data.c3_plus", "must be non-negative");
  d.c1_minus = c.get_double("data.c1_minus", d.c1_minus);
  check(c, d.c1_minus > 0, "data.c1_minus", "must be positive (f' >= nu > 0)");
  d.c3_minus = c.get_double("data.c3_minus", d.c3_minus);
  check(c, d.c3_minus >= 0, "data.c3_minus", "must be non-negative");
  if (r.mode == Mode::oracle_compare)
    check(c, d.lateral_variation == 0.0, "data.lateral_variation",
          "oracle-compare needs laterally constant data (non-symmetric data supplied)");

  auto& k = r.kernel;
  k.times = c.get_list("kernel.times", k.times);
  for (double t : k.times) check(c, t > 0, "kernel.times", "entries must be positive");
  k.eps = c.get_list("kernel.eps", k.eps);
  for (double e : k.eps) check(c, e > 0 && e <= 1, "kernel.eps", "entries must lie in (0, 1]");
  k.n2 = static_cast<int>(c.get_int("kernel.n2", k.n2));
  check(c, k.n2 >= 16, "kernel.n2", "must be at least 16");
  k.n3 = static_cast<int>(c.get_int("kernel.n3", k.n3));
  check(c, k.n3 >= 8, "kernel.n3", "must be at least 8");
  k.L2 = c.get_double("kernel.L2", k.L2);
  check(c, k.L2 > 0, "kernel.L2", "must be positive");
  k.L3 = c.get_double("kernel.L3", k.L3);
  check(c, k.L3 > 0, "kernel.L3", "must be positive");
  k.tol = c.get_double("kernel.tol", k.tol);
  check(c, k.tol > 0, "kernel.tol", "must be positive");
  k.bound_eps = c.get_list("kernel.bound_eps", k.bound_eps);
  for (double e : k.bound_eps) check(c, e > 0 && e <= 1, "kernel.bound_eps", "entries must lie in (0, 1]");
  k.bound_spread = c.get_double("kernel.bound_spread", k.bound_spread);
  check(c, k.bound_spread >= 1, "kernel.bound_spread", "must be at least 1");

  r.oracle_space_steps = static_cast<int>(c.get_int("oracle.space_steps", r.oracle_space_steps));
  check(c, r.oracle_space_steps >= 10, "oracle.space_steps", "must be at least 10");
  r.oracle_time_steps = static_cast<int>(c.get_int("oracle.time_steps", r.oracle_time_steps));
  check(c, r.oracle_time_steps >= 1, "oracle.time_steps", "must be at least 1");
  r.oracle_tol = c.get_double("oracle.tol", r.oracle_tol);
  check(c, r.oracle_tol > 0, "oracle.tol", "must be positive");
  r.holder_samples = static_cast<int>(c.get_int("holder.samples", r.holder_samples));
  check(c, r.holder_samples >= 1, "holder.samples", "must be at least 1");
  r.holder_n = static_cast<int>(c.get_int("holder.lateral_n", r.holder_n));
  check(c, r.holder_n >= 8, "holder.lateral_n", "must be at least 8");
  r.holder_steps = static_cast<int>(c.get_int("holder.steps", r.holder_steps));
  check(c, r.holder_steps >= 4, "holder.steps", "must be at least 4");
  r.holder_tol = c.get_double("holder.tol", r.holder_tol);
  check(c, r.holder_tol > 0, "holder.tol", "must be positive");

  const auto unused = c.unused();
  if (!unused.empty()) c.fail_key(unused.front(), "unknown key '" + unused.front() + "'");

  config::Config hashed = c;
  hashed.set("run.out", "");
  r.hash = config::hex64(config::fnv1a(hashed.canonical()));
  return r;
}

/// The free-boundary problem described by a run configuration.
inline nonlinear::NonlinearProblem nonlinear_problem(const RunConfig& r) {
  nonlinear::NonlinearProblem pr;
  pr.domain = r.domain;
  pr.plateau = r.plateau;
  pr.a_plus = r.model.a_plus;
  pr.a_minus = r.model.a_minus;
  pr.m = r.model.m;
  const auto d = r.data;
  pr.f_plus = {[d](double u) { return d.c1_plus * u + d.c3_plus * u * u * u; },
               [d](double u) { return d.c1_plus + 3 * d.c3_plus * u * u; }};
  pr.f_minus = {[d](double u) { return d.c1_minus * u + d.c3_minus * u * u * u; },
                [d](double u) { return d.c1_minus + 3 * d.c3_minus * u * u; }};
  const double L = r.domain.L;
  pr.g_plus = [d, L](double x, double y, double t) {
    return d.amplitude * (1 + d.lateral_variation * (0.1 * std::sin(2 * pi * x / L) + 0.05 * std::cos(2 * pi * y / L)) +
                          d.drift_plus * t);
  };
  pr.g_minus = [d, L](double x, double, double t) {
    return -d.amplitude * (1 - d.lateral_variation * 0.05 * std::cos(2 * pi * x / L) + d.drift_minus * t * t);
  };
  pr.T = r.T;
  pr.steps = r.steps;
  pr.eps = r.solve_eps;
  pr.alpha = r.alpha;
  pr.nu = r.nu;
  pr.radius = r.radius;
  pr.tol = r.tol;
  pr.max_iter = r.max_iter;
  pr.kappa_max = r.kappa_max;
  pr.max_halvings = r.max_halvings;
  pr.inner.tol = r.inner_tol;
  pr.inner.alpha = r.alpha;
  return pr;
}

/// Mode output: the report body plus CSV files keyed by file name.
struct Result {
  json body = json::object();
  std::vector<std::pair<std::string, std::string>> files;
  bool pass = true;

  void check(const std::string& name, double value, double threshold, bool ok) {
    body["checks"].push_back({{"name", name}, {"value", value}, {"threshold", threshold}, {"pass", ok}});
    pass = pass && ok;
  }
};

namespace detail {

inline std::string num(double v, int digits = 17) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

inline json array(const std::vector<double>& v) { return json(v); }

inline Result kernel_check(const RunConfig& r) {
  Result res;
  const auto& k = r.kernel;
  double worst_moment = 0, worst_dmoment = 0, worst_agree = 0;
  json rows = json::array();
  for (int N : {2, 3}) {
    const LateralGrid g = N == 2 ? LateralGrid(1, k.n2, k.L2) : LateralGrid(2, k.n3, k.L3);
    for (double eps : k.eps)
      for (double t : k.times) {
        kernel::ModelParams p = r.model;
        p.eps = eps;
        const auto f = kernel::kernel_K_eps(g, t, p, kernel::KernelMethod::fourier);
        const auto c = kernel::kernel_K_eps(g, t, p, kernel::KernelMethod::convolution);
        const double mom = std::abs(f.integral(f.K) - 1.0);
        const double dmom = std::abs(f.integral(f.grad[0]));
        const double agree = sup_diff(f.K, c.K) / sup_abs(f.K);
        worst_moment = std::max(worst_moment, mom);
        worst_dmoment = std::max(worst_dmoment, dmom);
        worst_agree = std::max(worst_agree, agree);
        rows.push_back({{"N", N}, {"eps", eps}, {"t", t}, {"moment0", mom}, {"moment_dx1", dmom},
                        {"relative_agreement", agree}, {"refinement", c.refinement}});
      }
  }
  res.body["moments"] = rows;
  res.check("kernel_moment_unit_mass", worst_moment, k.tol, worst_moment <= k.tol);
  res.check("kernel_moment_gradient", worst_dmoment, k.tol, worst_dmoment <= k.tol);
  res.check("kernel_fourier_vs_convolution", worst_agree, k.tol, worst_agree <= k.tol);
  const double B = kernel::reduce_params(r.model).B;
  const auto b = kernel::kernel_bound_check(LateralGrid(1, k.n2, k.L2), B, k.bound_eps, k.bound_times, k.bound_radius);
  json fits = json::array();
  for (const auto& f : b.fits) fits.push_back({{"eps", f.eps}, {"order", f.order}, {"C", f.C}});
  res.body["bound_fits"] = fits;
  res.body["bound_spread"] = std::vector<double>(b.spread.begin(), b.spread.end());
  const double spread = *std::max_element(b.spread.begin(), b.spread.end());
  res.check("kernel_bound_uniform_in_eps", spread, k.bound_spread, spread <= k.bound_spread);
  return res;
}

inline kernel::ModelRHS model_rhs(const RunConfig& r) {
  const LateralGrid lat(r.domain.N - 1, r.domain.lateral_n, r.domain.L);
  kernel::HalfSpaceGrid hg{lat, r.domain.vertical_M, 2.0};
  TimeGrid tg{r.T, r.steps};
  auto rhs = kernel::ModelRHS::zeros(hg, tg);
  const double w = 2 * pi / r.domain.L;
  for (int s = 0; s < tg.levels(); ++s) {
    const double t = tg.t(s);
    for (int p = 0; p < lat.size(); ++p) {
      const double x = lat.coord(p % lat.n[0]), y = lat.dim == 2 ? lat.coord(p / lat.n[0]) : 0.0;
      rhs.f2[s][p] = 0.1 * t * std::cos(w * x);
      rhs.f3_plus[s][p] = t * t * std::cos(2 * w * x) * (1 + 0.5 * std::sin(w * y));
      rhs.f3_minus[s][p] = t * std::sin(w * x);
      for (int j = 0; j <= hg.Mz; ++j) {
        const double z = j * hg.hz();
        rhs.f1_plus[s][hg.at(p, j)] = t * std::exp(-z) * std::sin(w * x);
        rhs.f1_minus[s][hg.at(p, j)] = t * std::exp(-2 * z) * std::cos(w * x);
      }
    }
  }
  return rhs;
}

inline Result model_solve(const RunConfig& r) {
  Result res;
  const auto rhs = model_rhs(r);
  json rows = json::array();
  std::vector<double> ratios;
  double jump = 0, kin = 0;
  std::string csv = "level,t,x1,x2,rho\n";
  for (double eps : r.eps_schedule) {
    kernel::ModelParams p = r.model;
    p.eps = eps;
    const auto s = kernel::model_solve_full(rhs, p);
    const auto L = kernel::model_estimate_ledger(rhs, s, eps, r.alpha);
    ratios.push_back(L.ratio);
    jump = std::max(jump, s.jump_residual);
    kin = std::max({kin, s.kinematic_plus, s.kinematic_minus});
    rows.push_back({{"eps", eps}, {"lhs", L.lhs}, {"rhs", L.rhs}, {"ratio", L.ratio},
                    {"jump_residual", s.jump_residual}, {"kinematic_plus", s.kinematic_plus},
                    {"kinematic_minus", s.kinematic_minus}, {"bulk_residual", s.bulk_residual},
                    {"periodisation_ok", s.periodisation_ok}});
    if (eps == r.eps_schedule.back()) {
      std::ostringstream os;
      geometry::write_interface_csv(os, s.rho);
      csv = os.str();
    }
  }
  res.body["estimate"] = rows;
  const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
  res.body["fitted_constant"] = *hi;
  res.body["ratio_spread"] = *lo > 0 ? *hi / *lo : std::numeric_limits<double>::infinity();
  res.check("model_jump_residual", jump, 1e-10, jump <= 1e-10);
  res.check("model_kinematic_residual", kin, 1e-8, kin <= 1e-8);
  res.check("model_estimate_ratio_positive", *lo, 0.0, *lo > 0 && std::isfinite(*hi));
  res.files.push_back({"interface.csv", csv});
  return res;
}

inline linear::LinearProblemData linear_data(const RunConfig& r, double eps) {
  const StripGrid g = r.domain.grid();
  const TimeGrid tg{r.T, r.steps};
  auto d = linear::LinearProblemData::zeros(g, tg, eps, r.model.a_plus, r.model.a_minus, 1.0, r.model.A);
  const double w = 2 * pi / r.domain.L;
  const int P = g.lat.size();
  for (int n = 0; n < tg.levels(); ++n) {
    const double t = tg.t(n);
    auto& td = d.levels[n];
    for (int p = 0; p < P; ++p) {
      const double x = g.lat.coord(p % g.lat.n[0]);
      td.f2[p] = 0.1 * t * std::cos(w * x);
      td.f3_plus[p] = 0.2 * t * std::cos(w * x);
      td.f3_minus[p] = -0.1 * t * std::sin(w * x);
      td.f4_plus[p] = 0.05 * t;
      for (int j = 0; j <= g.M; ++j) {
        const double z = j * g.hz();
        td.f1_plus[g.at(p, j)] = t * std::exp(-z) * std::sin(w * x);
        td.f1_minus[g.at(p, j)] = t * std::exp(-2 * z) * std::cos(w * x);
      }
    }
    d.h_plus[n] = {Field(P, r.model.h_plus[0]), Field(P, r.model.h_plus[1])};
    d.h_minus[n] = {Field(P, r.model.h_minus[0]), Field(P, r.model.h_minus[1])};
  }
  d.sync_drift();
  return d;
}

inline Result linear_solve(const RunConfig& r) {
  Result res;
  linear::PicardOptions o;
  o.alpha = r.alpha;
  o.tol = r.tol;
  o.kappa_max = r.kappa_max;
  o.max_halvings = r.max_halvings;
  json rows = json::array();
  std::string csv;
  for (double eps : r.eps_schedule) {
    const auto s = linear::solve_linear_problem(linear_data(r, eps), o);
    const auto& L = s.ledger;
    rows.push_back({{"eps", eps}, {"differences", L.differences}, {"window_start", L.window_start},
                    {"halving_history", L.halving_history}, {"contraction", L.contraction},
                    {"estimate_lhs", L.estimate_lhs}, {"estimate_rhs", L.estimate_rhs},
                    {"estimate_ratio", L.estimate_ratio}, {"fixed_point_residual", L.fixed_point_residual},
                    {"jump_residual", L.jump_residual}, {"minus_residual", L.minus_residual}});
    const bool contracted = !(L.contraction >= r.kappa_max);
    res.check("linear_contraction_eps_" + num(eps), std::isnan(L.contraction) ? 0.0 : L.contraction, r.kappa_max,
              contracted);
    const double scale = std::max(1.0, s.rho.sup());
    res.check("linear_fixed_point_eps_" + num(eps), L.fixed_point_residual, 10 * r.tol * scale,
              L.fixed_point_residual <= 10 * r.tol * scale);
    if (eps == r.eps_schedule.back()) {
      std::ostringstream os;
      geometry::write_interface_csv(os, s.rho);
      csv = os.str();
    }
  }
  res.body["solves"] = rows;
  res.files.push_back({"interface.csv", csv});
  return res;
}

inline json verification_json(const nonlinear::VerificationReport& v) {
  return {{"pde", v.pde},
          {"trace", v.trace},
          {"kinematic", v.kinematic},
          {"outer", v.outer},
          {"flux_balance", v.flux_balance},
          {"kinematic_law", v.kinematic_law},
          {"flux_margin", v.flux_margin},
          {"jump_margin", v.jump_margin},
          {"nu", v.nu},
          {"nondegenerate", v.nondegenerate}};
}

inline Result nonlinear_solve(const RunConfig& r) {
  Result res;
  const auto sol = nonlinear::solve_nonlinear(nonlinear_problem(r));
  const auto& rep = sol.report;
  res.body["compatibility"] = {{"rho1_agreement", rep.rho1_agreement},
                               {"flux_margin", rep.flux_margin},
                               {"jump_margin", rep.jump_margin},
                               {"nu", r.nu}};
  res.body["contraction"] = {{"T_accepted", rep.T_accepted},   {"steps", rep.steps},
                             {"horizon_history", rep.horizon_history}, {"differences", rep.differences},
                             {"ratios", rep.ratios},           {"contraction", rep.contraction},
                             {"iterations", rep.iterations},   {"inner_iterations", rep.inner_iterations},
                             {"eps_continuation", rep.eps_continuation}};
  res.body["residuals"] = verification_json(rep.verification);
  res.body["holder"] = {{"psi_norm", rep.psi_norm}, {"radius", r.radius}, {"F0_norm", rep.F0_norm},
                        {"solution_ledger", rep.ledger}};
  const auto& v = rep.verification;
  res.check("outer_iterations", rep.iterations, r.max_iter, rep.iterations <= r.max_iter);
  res.check("outer_contraction", std::isnan(rep.contraction) ? 0.0 : rep.contraction, r.kappa_max,
            !(rep.contraction >= r.kappa_max));
  res.check("trace_continuity", v.trace, r.residual_tol, v.trace <= r.residual_tol);
  res.check("flux_balance", v.flux_balance, r.residual_tol, v.flux_balance <= r.residual_tol);
  res.check("kinematic_law", v.kinematic_law, r.residual_tol, v.kinematic_law <= r.residual_tol);
  res.check("within_radius", rep.psi_norm, r.radius, rep.within_radius);
  res.check("nondegenerate", std::min(v.flux_margin, v.jump_margin), r.nu, v.nondegenerate);
  std::ostringstream snap;
  geometry::write_interface_csv(snap, sol.rho);
  res.files.push_back({"interface.csv", snap.str()});
  std::string ledger = "level,t,rho_min,rho_max,delta_sup,v_plus_sup,v_minus_sup\n";
  for (int n = 0; n < sol.rho.count(); ++n) {
    const auto& rl = sol.rho.levels[n];
    const auto [lo, hi] = std::minmax_element(rl.begin(), rl.end());
    ledger += std::to_string(n) + "," + num(n * sol.rho.tau) + "," + num(*lo) + "," + num(*hi) + "," +
              num(sup_abs(sol.psi.delta.levels[n])) + "," + num(sup_abs(sol.psi.v[n].plus)) + "," +
              num(sup_abs(sol.psi.v[n].minus)) + "\n";
  }
  res.files.push_back({"ledger.csv", ledger});
  return res;
}

inline Result oracle_compare(const RunConfig& r) {
  Result res;
  const auto c = oracle1d::compare(nonlinear_problem(r), {r.oracle_space_steps, r.oracle_time_steps, 1e-14, 30},
                                   r.oracle_tol, r.oracle_self_tol);
  res.body["oracle"] = {{"max_relative", c.max_relative}, {"self_change", c.self_change}};
  res.check("oracle_self_convergence", c.self_change, r.oracle_self_tol, c.self_converged);
  res.check("oracle_deviation", c.max_relative, r.oracle_tol, c.max_relative <= r.oracle_tol);
  std::string csv = "t,solver,oracle\n";
  for (std::size_t i = 0; i < c.t.size(); ++i) csv += num(c.t[i]) + "," + num(c.solver[i]) + "," + num(c.oracle[i]) + "\n";
  res.files.push_back({"interface_vs_oracle.csv", csv});
  return res;
}

/// Seeded random trigonometric samples; the E^{2+a} and P^{2+a} estimators at two
/// refinements must agree within holder.tol.
inline Result holder_check(const RunConfig& r) {
  Result res;
  std::mt19937_64 rng(r.seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const int n = r.holder_n;
  const int d = r.domain.N - 1;
  json rows = json::array();
  double worst = 0;
  for (int s = 0; s < r.holder_samples; ++s) {
    std::array<double, 4> c{}, ph{};
    for (int k = 0; k < 4; ++k) {
      c[k] = U(rng) / ((k + 1) * (k + 1));
      ph[k] = pi * U(rng);
    }
    const double tc = 0.5 + 0.5 * std::abs(U(rng));
    auto sample = [&](int nn, int steps) {
      const LateralGrid g(d, nn, r.domain.L);
      const double tau = r.T / steps;
      std::vector<Field> lv(steps + 1, Field(g.size()));
      for (int m = 0; m <= steps; ++m) {
        const double t = m * tau;
        for (int p = 0; p < g.size(); ++p) {
          const double x = g.coord(p % g.n[0]), y = d == 2 ? g.coord(p / g.n[0]) : 0.0;
          double v = 0;
          for (int k = 0; k < 4; ++k) v += c[k] * std::sin(2 * pi * (k + 1) * (x + 0.5 * y) / r.domain.L + ph[k]);
          lv[m][p] = v * t * (t + tc);
        }
      }
      const auto gf = holder::lateral_series(g, lv, tau);
      return std::pair{holder::e_norm(gf, 2, r.alpha).e_norm, holder::p_norm(gf, r.alpha, 2).p_norm};
    };
    const auto a = sample(n, r.holder_steps), b = sample(2 * n, 2 * r.holder_steps);
    const double de = std::abs(b.first / a.first - 1), dp = std::abs(b.second / a.second - 1);
    worst = std::max({worst, de, dp});
    rows.push_back({{"sample", s}, {"e_norm", {a.first, b.first}}, {"p_norm", {a.second, b.second}}});
  }
  res.body["samples"] = rows;
  res.check("holder_refinement_stability", worst, r.holder_tol, worst <= r.holder_tol);
  return res;
}

} // namespace detail

/// Runs the configured mode. Module errors propagate to the caller.
inline Result run_mode(const RunConfig& r) {
  switch (r.mode) {
  case Mode::kernel_check: return detail::kernel_check(r);
  case Mode::model_solve: return detail::model_solve(r);
  case Mode::linear_solve: return detail::linear_solve(r);
  case Mode::nonlinear_solve: return detail::nonlinear_solve(r);
  case Mode::oracle_compare: return detail::oracle_compare(r);
  case Mode::holder_check: return detail::holder_check(r);
  }
  throw ConfigError("unhandled mode");
}

inline json report_header(const RunConfig& r) {
  return {{"program", "muskat"},
          {"version", version},
          {"modules",
           {{"holder", version}, {"geometry", version}, {"model_kernel", version}, {"elliptic", version},
            {"linearized", version}, {"nonlinear", version}, {"driver", version}}},
          {"config_hash", r.hash},
          {"mode", r.mode_name},
          {"seed", r.seed}};
}

enum ExitCode { exit_pass = 0, exit_fail = 1, exit_config = 2, exit_solver = 3 };

/// Runs and writes report.json plus CSV files into r.out; returns the exit code.
inline int run(const RunConfig& r, std::ostream& log) {
  namespace fs = std::filesystem;
  json report = report_header(r);
  int code = exit_pass;
  Result res;
  try {
    res = run_mode(r);
    for (auto& [k, v] : res.body.items()) report[k] = v;
    report["pass"] = res.pass;
    code = res.pass ? exit_pass : exit_fail;
  } catch (const Error& e) {
    json err = {{"category", e.category() == Error::Category::solver ? "solver" : "domain"}, {"message", e.what()}};
    if (const auto* se = dynamic_cast<const SolverError*>(&e)) err["trace"] = se->trace();
    report["error"] = err;
    report["pass"] = false;
    log << "error: " << e.what() << "\n";
    code = exit_solver;
  }
  fs::create_directories(r.out);
  std::ofstream(fs::path(r.out) / "report.json") << report.dump(2) << "\n";
  for (const auto& [name, content] : res.files) std::ofstream(fs::path(r.out) / name) << content;
  if (report.contains("checks"))
    for (const auto& c : report["checks"])
      log << (c["pass"].get<bool>() ? "PASS " : "FAIL ") << c["name"].get<std::string>() << " "
          << detail::num(c["value"].get<double>(), 6) << " (threshold " << detail::num(c["threshold"].get<double>(), 6)
          << ")\n";
  return code;
}

} // namespace muskat::driver
