// Acceptance harness: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "muskat/driver.hpp"
#include "muskat/oracle1d.hpp"
#include "support.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

using namespace muskat;

namespace {

namespace tol {
constexpr double moment = 1e-6;
constexpr double agreement = 1e-6;
constexpr double bound_spread = 2.0;
constexpr double order_lo = 3.4, order_hi = 4.6;
constexpr double estimate_spread = 2.0;
constexpr double slope = 2.0, slope_band = 0.1;
constexpr double f0_growth = 1.1;
constexpr int outer_iterations = 20;
constexpr double outer_ratio = 0.9;
constexpr double free_boundary_residual = 1e-4;
constexpr double oracle_relative = 1e-3;
constexpr double oracle_self = 1e-5;
constexpr double band_safety = 1.5;
constexpr double ledger_change = 0.10;
} // namespace tol

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.4g", v);
  return b;
}

std::string list(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
  return s + "]";
}

std::vector<double> ratios(const std::vector<double>& e) {
  std::vector<double> r;
  for (std::size_t i = 1; i < e.size(); ++i) r.push_back(e[i - 1] / e[i]);
  return r;
}

bool all_in(const std::vector<double>& v, double lo, double hi) {
  for (double x : v)
    if (!(x >= lo && x <= hi)) return false;
  return !v.empty();
}

/// Least-squares slope of log y against log x.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]) / n;
    my += std::log(y[i]) / n;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return sxy / sxx;
}

kernel::ModelParams model_params(double eps) {
  kernel::ModelParams p;
  p.a_plus = 1.0;
  p.a_minus = 2.0;
  p.m = 1.0;
  p.A = 1.5;
  p.h_plus = {0.3, 0.0};
  p.h_minus = {-0.2, 0.0};
  p.eps = eps;
  return p;
}

LateralGrid kernel_lattice(int N) { return N == 2 ? LateralGrid(1, 1024, 32.0) : LateralGrid(2, 64, 8.0); }

Outcome kernel_moments() {
  double m0 = 0, m1 = 0;
  for (int N : {2, 3})
    for (double eps : {1.0, 0.1, 0.01})
      for (double t : {0.25, 1.0}) {
        const auto k = kernel::kernel_K_eps(kernel_lattice(N), t, model_params(eps), kernel::KernelMethod::fourier);
        m0 = std::max(m0, std::abs(k.integral(k.K) - 1.0));
        m1 = std::max(m1, std::abs(k.integral(k.grad[0])));
      }
  return {m0 <= tol::moment && m1 <= tol::moment,
          "max |int K - 1| = " + fmt(m0) + ", max |int dK/dx1| = " + fmt(m1) + " (tol " + fmt(tol::moment) + ")"};
}

Outcome kernel_cross_construction() {
  double worst = 0;
  for (int N : {2, 3})
    for (double eps : {1.0, 0.1, 0.01})
      for (double t : {0.25, 1.0}) {
        const auto g = kernel_lattice(N);
        const auto f = kernel::kernel_K_eps(g, t, model_params(eps), kernel::KernelMethod::fourier);
        const auto c = kernel::kernel_K_eps(g, t, model_params(eps), kernel::KernelMethod::convolution);
        worst = std::max(worst, sup_diff(f.K, c.K) / sup_abs(f.K));
      }
  return {worst <= tol::agreement, "max relative disagreement " + fmt(worst) + " (tol " + fmt(tol::agreement) + ")"};
}

Outcome kernel_uniformity() {
  const double B = kernel::reduce_params(model_params(0.1)).B;
  const std::vector<double> sweep{1e-3, 1e-2, 1e-1, 1.0};
  const auto r2 = kernel::kernel_bound_check(LateralGrid(1, 1024, 32.0), B, sweep, {0.5, 1.0, 2.0}, 2.0);
  const auto r3 = kernel::kernel_bound_check(LateralGrid(2, 64, 16.0), B, sweep, {0.5, 1.0, 2.0}, 2.0);
  double worst = 0;
  for (const auto* r : {&r2, &r3})
    for (double s : r->spread) worst = std::max(worst, s);
  return {worst <= tol::bound_spread,
          "max C/min C per order: N=2 " + list({r2.spread.begin(), r2.spread.end()}) + ", N=3 " +
              list({r3.spread.begin(), r3.spread.end()}) + " (tol " + fmt(tol::bound_spread) + ")"};
}

Outcome transmission_order() {
  std::vector<double> e2, e3;
  for (int M : {8, 16, 32, 64}) {
    const auto m = oracle::manufactured_transmission(2, M, true);
    e2.push_back(oracle::phase_error(elliptic::solve_transmission(m.data), m.exact));
  }
  for (int M : {8, 16, 32, 64}) {
    const auto m = oracle::manufactured_transmission(3, M, true);
    e3.push_back(oracle::phase_error(elliptic::solve_transmission(m.data), m.exact));
  }
  const auto r2 = ratios(e2), r3 = ratios(e3);
  return {all_in(r2, tol::order_lo, tol::order_hi) && all_in(r3, tol::order_lo, tol::order_hi),
          "error ratios N=2 " + list(r2) + ", N=3 " + list(r3) + " (band [" + fmt(tol::order_lo) + ", " +
              fmt(tol::order_hi) + "])"};
}

Outcome transformation_identity() {
  auto sq2 = [](const geometry::Point& y) { return y[0] * y[0] + y[1] * y[1]; };
  auto sq3 = [](const geometry::Point& y) { return y[0] * y[0] + y[1] * y[1] + y[2] * y[2]; };
  std::vector<double> e2, e3;
  for (int n : {32, 64, 128}) e2.push_back(oracle::transformation_identity_residual(2, n, 0.1, sq2, 4.0));
  for (int n : {32, 64, 128}) e3.push_back(oracle::transformation_identity_residual(3, n, 0.1, sq3, 6.0));
  const auto r2 = ratios(e2), r3 = ratios(e3);
  return {all_in(r2, tol::order_lo, tol::order_hi) && all_in(r3, tol::order_lo, tol::order_hi),
          "residual ratios N=2 " + list(r2) + ", N=3 " + list(r3)};
}

Outcome model_estimate() {
  driver::RunConfig rc;
  rc.domain = {3, 8.0, 0.5, 64, 64};
  rc.T = 0.5;
  rc.steps = 16;
  const auto rhs = driver::detail::model_rhs(rc);
  std::vector<double> r;
  for (double eps : {1.0, 0.1, 0.01, 0.001}) {
    const auto s = kernel::model_solve_full(rhs, model_params(eps));
    r.push_back(kernel::model_estimate_ledger(rhs, s, eps, 0.5).ratio);
  }
  const auto [lo, hi] = std::minmax_element(r.begin(), r.end());
  const bool ok = *lo > 0 && std::isfinite(*hi) && *hi / *lo <= tol::estimate_spread;
  return {ok, "LHS/RHS ratios " + list(r) + ", fitted constant " + fmt(*hi) + ", spread " + fmt(*hi / *lo) +
                  " (tol " + fmt(tol::estimate_spread) + ")"};
}

Outcome inner_contraction() {
  const auto m = oracle::manufactured_linear(32, 16, 64, 1.0, 0.01);
  const auto& g = m.data.grid.lat;
  const auto& tg = m.data.time;
  std::vector<Field> probe(tg.levels(), Field(g.size()));
  for (int n = 0; n < tg.levels(); ++n)
    for (int p = 0; p < g.size(); ++p) {
      const double x = g.coord(p), t = tg.t(n);
      probe[n][p] = t * t * (std::sin(2 * pi * x) + 0.3 * std::cos(6 * pi * x));
    }
  std::vector<double> kappa;
  for (int steps : {64, 32, 16, 8}) kappa.push_back(linear::measure_contraction(m.data, steps, probe));
  bool monotone = true;
  for (std::size_t i = 1; i < kappa.size(); ++i) monotone = monotone && kappa[i] < kappa[i - 1];
  const auto s = linear::solve_linear_problem(m.data);
  const double accepted = s.ledger.contraction;
  return {monotone && accepted < 1.0,
          "kappa over T, T/2, T/4, T/8 " + list(kappa) + ", kappa at accepted window " + fmt(accepted)};
}

nonlinear::IterateState bump(const nonlinear::InitialFrame& fr, double c) {
  auto psi = nonlinear::IterateState::zero(fr);
  const auto& g = fr.grid;
  for (int n = 0; n < fr.time.levels(); ++n) {
    const double t = fr.time.t(n);
    for (int j = 0; j <= g.M; ++j)
      for (int p = 0; p < g.lat.size(); ++p) {
        const double x = g.lat.coord(p % g.lat.n[0]), z = j * g.hz();
        psi.v[n].plus[g.at(p, j)] = c * t * std::sin(2 * pi * x) * (1 - z) * z;
        psi.v[n].minus[g.at(p, j)] = c * t * std::cos(2 * pi * x) * (1 - z);
      }
    for (int p = 0; p < g.lat.size(); ++p) {
      psi.delta.levels[n][p] = c * t * t * std::cos(2 * pi * g.lat.coord(p % g.lat.n[0]));
      psi.v[n].plus[p] = psi.v[n].minus[p];
    }
  }
  return psi;
}

Outcome residual_scalings() {
  const auto pr = oracle::mild_problem(3, 16, 16, 16, 0.5);
  const auto fr = nonlinear::build_initial_frame(pr);
  const std::vector<double> cs{1.0, 0.5, 0.25, 0.125};
  std::vector<double> f2, f5;
  for (double c : cs) {
    const auto psi = bump(fr, 0.08 * c);
    double a = 0, b = 0;
    for (int n = 0; n < fr.time.levels(); ++n) {
      const auto r = nonlinear::compute_level_residuals(psi.v[n], psi.delta.levels[n], fr, pr, n);
      a = std::max({a, sup_abs(r.F2[0]), sup_abs(r.F2[1])});
      b = std::max({b, sup_abs(r.F5[0]), sup_abs(r.F5[1])});
    }
    f2.push_back(a);
    f5.push_back(b);
  }
  const double s2 = loglog_slope(cs, f2), s5 = loglog_slope(cs, f5);
  // sigma's temporal cutoff is fixed by T0; only the window [0, T] shrinks.
  const double T0 = 0.5;
  std::vector<double> normalised;
  for (double T : {T0, T0 / 2, T0 / 4}) {
    auto p = oracle::mild_problem(3, 16, 16, static_cast<int>(std::lround(64 * T)), T);
    p.cutoff_horizon = T0;
    const auto f = nonlinear::build_initial_frame(p);
    const auto first = nonlinear::nonlinear_step(nonlinear::IterateState::zero(f), f, p, 0.0);
    normalised.push_back(first.norm / std::pow(T, p.alpha / 2));
  }
  const double C = normalised.front();
  bool bounded = true;
  for (double v : normalised) bounded = bounded && v <= tol::f0_growth * C;
  const bool ok = std::abs(s2 - tol::slope) <= tol::slope_band && std::abs(s5 - tol::slope) <= tol::slope_band && bounded;
  return {ok, "slopes F2 " + fmt(s2) + ", F5 " + fmt(s5) + "; |F(0)|/T^(a/2) over T0, T0/2, T0/4 " + list(normalised) +
                  " (fitted constant " + fmt(C) + ")"};
}

Outcome outer_fixed_point() {
  const auto sol = nonlinear::solve_nonlinear(oracle::mild_problem(3, 32, 32, 128, 0.5));
  const auto& r = sol.report;
  const auto& v = r.verification;
  const double worst_ratio = r.ratios.empty() ? 0.0 : *std::max_element(r.ratios.begin(), r.ratios.end());
  const double res = std::max({v.trace, v.flux_balance, v.kinematic_law});
  const bool ok = r.iterations <= tol::outer_iterations && worst_ratio < tol::outer_ratio &&
                  res <= tol::free_boundary_residual;
  return {ok, std::to_string(r.iterations) + " iterations, max ratio " + fmt(worst_ratio) + ", trace " + fmt(v.trace) +
                  ", flux " + fmt(v.flux_balance) + ", kinematic " + fmt(v.kinematic_law) + " at T = " +
                  fmt(r.T_accepted)};
}

Outcome oracle_equivalence() {
  auto pr = oracle::mild_problem(3, 4, 64, 128, 0.5);
  pr.g_plus = [](double, double, double t) { return 0.03 * (1 + 0.2 * t); };
  pr.g_minus = [](double, double, double t) { return -0.03 * (1 + 0.1 * t * t); };
  const auto c = oracle1d::compare(pr, {1000, 256, 1e-14, 30}, tol::oracle_relative, tol::oracle_self);
  return {c.pass, "max relative deviation " + fmt(c.max_relative) + ", oracle self-change " + fmt(c.self_change)};
}

struct EpsRun {
  StripGrid grid;
  std::vector<PhaseField> u;
  geometry::InterfaceState rho;
  double T = 0.0;
};

EpsRun eps_solve(double eps) {
  auto pr = oracle::mild_problem(2, 16, 16, 64, 0.5);
  pr.eps = eps;
  pr.continue_to_zero = false;
  auto s = nonlinear::solve_nonlinear(pr);
  return {s.frame.grid, std::move(s.u), std::move(s.rho), s.report.T_accepted};
}

double eps_distance(const EpsRun& a, const EpsRun& b, double beta) {
  MUSKAT_REQUIRE(a.T == b.T, "solutions on different horizons");
  std::vector<PhaseField> du;
  for (std::size_t n = 0; n < a.u.size(); ++n) {
    PhaseField d(a.u[n]);
    d.plus = axpy(-1.0, b.u[n].plus, a.u[n].plus);
    d.minus = axpy(-1.0, b.u[n].minus, a.u[n].minus);
    du.push_back(std::move(d));
  }
  geometry::InterfaceState dr = a.rho;
  for (int n = 0; n < dr.count(); ++n) dr.levels[n] = axpy(-1.0, b.rho.levels[n], a.rho.levels[n]);
  return nonlinear::solution_ledger(a.grid, du, dr, beta, holder::HolderOptions{});
}

Outcome eps_passage() {
  const double beta = 0.25;
  std::vector<EpsRun> runs;
  for (double eps : {0.1, 0.05, 0.025, 0.0125}) runs.push_back(eps_solve(eps));
  std::vector<double> d;
  for (std::size_t i = 1; i < runs.size(); ++i) d.push_back(eps_distance(runs[i - 1], runs[i], beta));
  bool decreasing = true;
  for (std::size_t i = 1; i < d.size(); ++i) decreasing = decreasing && d[i] < d[i - 1];
  const double q = d.back() / d[d.size() - 2];
  const double band = q < 1 ? tol::band_safety * d.back() * q / (1 - q) : std::numeric_limits<double>::infinity();
  const double to_zero = eps_distance(runs.back(), eps_solve(0.0), beta);
  return {decreasing && q < 1 && to_zero <= band, "E^{2+b} differences " + list(d) + ", q = " + fmt(q) +
                                                      ", |u_0 - u_eps_min| = " + fmt(to_zero) + " vs band " + fmt(band)};
}

Outcome ledger_refinement() {
  std::vector<double> L;
  for (int k : {2, 4, 8}) {
    const auto s = nonlinear::solve_nonlinear(oracle::mild_problem(2, 8 * k, 8 * k, 16 * k, 0.5));
    L.push_back(s.report.ledger);
  }
  std::vector<double> change;
  for (std::size_t i = 1; i < L.size(); ++i) change.push_back(std::abs(L[i] / L[i - 1] - 1));
  return {*std::max_element(change.begin(), change.end()) <= tol::ledger_change,
          "ledger " + list(L) + ", relative changes " + list(change) + " (tol " + fmt(tol::ledger_change) + ")"};
}

} // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"C1  kernel moments", kernel_moments},
      {"C2  kernel cross-construction", kernel_cross_construction},
      {"C3  kernel bound uniform in eps", kernel_uniformity},
      {"C4  transmission solver order", transmission_order},
      {"C5  transformation identity", transformation_identity},
      {"C6  model-problem estimate", model_estimate},
      {"C7  inner contraction", inner_contraction},
      {"C8  residual scalings", residual_scalings},
      {"C9  outer fixed point", outer_fixed_point},
      {"C10 1D oracle equivalence", oracle_equivalence},
      {"C11 eps -> 0 passage", eps_passage},
      {"C12 solution ledger under refinement", ledger_refinement},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << " [" << fmt(sec) << " s]" << std::endl;
  }
  std::cout << (failed ? std::to_string(failed) + " of 12 criteria failed" : std::string("all 12 criteria passed"))
            << std::endl;
  return failed ? 1 : 0;
}
