#pragma once

// Dense reference for laterally constant data: on (-1, s(t)) and (s(t), 1)
//   u'' = f-(u), u'' = f+(u),  u(-1) = g-(t), u(1) = g+(t),
//   u continuous at s, a+ u+'(s) = a- u-'(s),  s' = -(a+/m) u+'(s).
// Each interface position is resolved by shooting from s with RK4 in space and a
// 2x2 Newton solve on (u(s), u+'(s)); s(t) is advanced with RK4 in time.

#include "muskat/core.hpp"
#include "muskat/nonlinear.hpp"

#include <functional>

namespace muskat::oracle1d {

struct Problem {
  double a_plus = 1.0, a_minus = 2.0, m = 1.0;
  std::function<double(double)> f_plus, df_plus, f_minus, df_minus;
  std::function<double(double)> g_plus, g_minus; ///< outer values as functions of t
  double s0 = 0.0;
};

struct Options {
  int space_steps = 2000;
  int time_steps = 1024;
  double newton_tol = 1e-14;
  int max_newton = 30;
};

/// Interface value U = u(s) and slope D = u+'(s) of the two-point problem at (s, t).
struct Shot {
  double U = 0.0, D = 0.0;
  int iterations = 0;
};

namespace detail {

// state: u, u', du/dU, du'/dU, du/dD, du'/dD
using State = std::array<double, 6>;

inline State rhs(const State& y, const std::function<double(double)>& f, const std::function<double(double)>& df) {
  const double b = df(y[0]);
  return {y[1], f(y[0]), y[3], b * y[2], y[5], b * y[4]};
}

inline State integrate(State y, double from, double to, int steps, const std::function<double(double)>& f,
                       const std::function<double(double)>& df) {
  const double h = (to - from) / steps;
  auto add = [](const State& a, const State& b, double c) {
    State r;
    for (int i = 0; i < 6; ++i) r[i] = a[i] + c * b[i];
    return r;
  };
  for (int k = 0; k < steps; ++k) {
    const State k1 = rhs(y, f, df);
    const State k2 = rhs(add(y, k1, h / 2), f, df);
    const State k3 = rhs(add(y, k2, h / 2), f, df);
    const State k4 = rhs(add(y, k3, h), f, df);
    for (int i = 0; i < 6; ++i) y[i] += h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  }
  return y;
}

} // namespace detail

inline Shot shoot(const Problem& pr, double s, double t, Shot guess, const Options& o = {}) {
  MUSKAT_REQUIRE(std::abs(s) < 1, "interface left the strip: s = " << s);
  const double k = pr.a_plus / pr.a_minus;
  const double gp = pr.g_plus(t), gm = pr.g_minus(t);
  std::vector<double> trace;
  for (int it = 0; it < o.max_newton; ++it) {
    const auto yp = detail::integrate({guess.U, guess.D, 1, 0, 0, 1}, s, 1.0, o.space_steps, pr.f_plus, pr.df_plus);
    const auto ym =
        detail::integrate({guess.U, k * guess.D, 1, 0, 0, k}, s, -1.0, o.space_steps, pr.f_minus, pr.df_minus);
    const double r0 = yp[0] - gp, r1 = ym[0] - gm;
    trace.push_back(std::max(std::abs(r0), std::abs(r1)));
    if (trace.back() <= o.newton_tol * std::max(1.0, std::max(std::abs(gp), std::abs(gm)))) {
      guess.iterations = it;
      return guess;
    }
    const double j00 = yp[2], j01 = yp[4], j10 = ym[2], j11 = ym[4];
    const double det = j00 * j11 - j01 * j10;
    if (det == 0.0) throw SolverError("shooting Jacobian is singular", trace);
    guess.U -= (j11 * r0 - j01 * r1) / det;
    guess.D -= (-j10 * r0 + j00 * r1) / det;
  }
  throw SolverError("shooting Newton did not converge", trace);
}

struct Trajectory {
  double T = 0.0;
  std::vector<double> t, s, velocity;

  /// Cubic Hermite interpolation of s at time t.
  double at(double tq) const {
    MUSKAT_REQUIRE(tq >= -1e-14 && tq <= T + 1e-14, "time " << tq << " outside [0, " << T << "]");
    const int n = static_cast<int>(t.size()) - 1;
    const double dt = T / n;
    const int i = std::clamp(static_cast<int>(std::floor(tq / dt)), 0, n - 1);
    const double x = (tq - t[i]) / dt;
    const double h00 = (1 + 2 * x) * (1 - x) * (1 - x), h10 = x * (1 - x) * (1 - x), h01 = x * x * (3 - 2 * x),
                 h11 = x * x * (x - 1);
    return h00 * s[i] + h10 * dt * velocity[i] + h01 * s[i + 1] + h11 * dt * velocity[i + 1];
  }
};

inline Trajectory solve(const Problem& pr, double T, const Options& o = {}) {
  MUSKAT_REQUIRE(T > 0 && o.time_steps >= 1, "need T > 0 and at least one time step");
  MUSKAT_REQUIRE(pr.f_plus && pr.df_plus && pr.f_minus && pr.df_minus && pr.g_plus && pr.g_minus,
                 "1D oracle needs sources, derivatives and outer data");
  Trajectory tr;
  tr.T = T;
  const double dt = T / o.time_steps;
  const double c = -pr.a_plus / pr.m;
  Shot guess{0.5 * (pr.g_plus(0) + pr.g_minus(0)), 0.5 * (pr.g_plus(0) - pr.g_minus(0))};
  auto vel = [&](double s, double t) {
    guess = shoot(pr, s, t, guess, o);
    return c * guess.D;
  };
  double s = pr.s0;
  double v = vel(s, 0.0);
  tr.t.push_back(0.0);
  tr.s.push_back(s);
  tr.velocity.push_back(v);
  for (int n = 0; n < o.time_steps; ++n) {
    const double t = n * dt;
    const double k1 = v;
    const double k2 = vel(s + dt / 2 * k1, t + dt / 2);
    const double k3 = vel(s + dt / 2 * k2, t + dt / 2);
    const double k4 = vel(s + dt * k3, t + dt);
    s += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    v = vel(s, t + dt);
    tr.t.push_back(t + dt);
    tr.s.push_back(s);
    tr.velocity.push_back(v);
  }
  return tr;
}

struct SelfConvergence {
  Trajectory fine;
  double change = 0.0; ///< sup |s(dt) - s(dt/2)| over the coarse times
};

/// Runs at time_steps and 2 time_steps; the finer trajectory is returned.
inline SelfConvergence solve_self_converged(const Problem& pr, double T, Options o = {}) {
  const Trajectory coarse = solve(pr, T, o);
  o.time_steps *= 2;
  SelfConvergence r{solve(pr, T, o), 0.0};
  for (std::size_t n = 0; n < coarse.s.size(); ++n) r.change = std::max(r.change, std::abs(coarse.s[n] - r.fine.s[2 * n]));
  return r;
}

/// Reduction of a laterally constant free-boundary problem.
inline Problem from_nonlinear(const nonlinear::NonlinearProblem& np) {
  np.validate();
  const auto lat = np.grid().lat;
  for (double t : {0.0, 0.5 * np.T, np.T})
    for (Side s : {Side::plus, Side::minus}) {
      const Field g = nonlinear::sample_boundary(lat, np.boundary(s), t);
      for (double v : g)
        MUSKAT_REQUIRE(std::abs(v - g[0]) <= 1e-14 * std::max(1.0, std::abs(g[0])),
                       "non-symmetric data: outer values vary laterally at t = " << t);
    }
  Problem p;
  p.a_plus = np.a_plus;
  p.a_minus = np.a_minus;
  p.m = np.m;
  p.f_plus = np.f_plus.f;
  p.df_plus = np.f_plus.df;
  p.f_minus = np.f_minus.f;
  p.df_minus = np.f_minus.df;
  auto gp = np.g_plus, gm = np.g_minus;
  p.g_plus = [gp](double t) { return gp(0.0, 0.0, t); };
  p.g_minus = [gm](double t) { return gm(0.0, 0.0, t); };
  return p;
}

struct Comparison {
  std::vector<double> t, solver, oracle;
  double max_relative = 0.0; ///< sup |rho - s| / sup |s|
  double self_change = 0.0;
  bool self_converged = false;
  bool pass = false;
};

/// Interface trajectory of solve_nonlinear against the oracle.
inline Comparison compare(const nonlinear::NonlinearProblem& np, const Options& o = {}, double tol = 1e-3,
                          double self_tol = 1e-5) {
  const Problem p = from_nonlinear(np);
  const auto sol = nonlinear::solve_nonlinear(np);
  const auto ref = solve_self_converged(p, sol.report.T_accepted, o);
  Comparison c;
  c.self_change = ref.change;
  c.self_converged = ref.change <= self_tol;
  double scale = 0.0, dev = 0.0;
  for (int n = 0; n < sol.rho.count(); ++n) {
    const double t = n * sol.rho.tau;
    const double r = sol.rho.levels[n][0];
    const double s = ref.fine.at(t);
    for (double v : sol.rho.levels[n]) dev = std::max(dev, std::abs(v - s));
    scale = std::max(scale, std::abs(s));
    c.t.push_back(t);
    c.solver.push_back(r);
    c.oracle.push_back(s);
  }
  c.max_relative = scale > 0 ? dev / scale : dev;
  c.pass = c.self_converged && c.max_relative <= tol;
  return c;
}

} // namespace muskat::oracle1d
