#pragma once

// Linear problem with parabolic regularisation of the interface condition:
//   -lap u+- + b+- u+- = f1+-,  u+ - u- + A rho = f2,
//   rho_t - eps lap' rho + a+- du+-/dn + h+- . grad rho = f3+-,  u+- = f4+- at x_N = +-1.
// Solved by Picard iteration on rho -> L_eps(rho): a transmission solve with rho in the
// jump data followed by a parabolic update driven by the "+" equation.

#include "muskat/core.hpp"
#include "muskat/elliptic.hpp"
#include "muskat/fft.hpp"
#include "muskat/geometry.hpp"
#include "muskat/holder.hpp"
#include "muskat/model_kernel.hpp"

#include <limits>

namespace muskat::linear {

struct LinearProblemData {
  StripGrid grid;
  TimeGrid time;
  double eps = 0.1;
  std::vector<elliptic::TransmissionData> levels; ///< per time level; `rho` is ignored
  std::vector<std::array<Field, 2>> h_plus, h_minus;

  /// Zero right-hand sides with constant coefficients.
  static LinearProblemData zeros(const StripGrid& g, const TimeGrid& tg, double eps, double a_plus, double a_minus,
                                 double b, double A) {
    LinearProblemData d;
    d.grid = g;
    d.time = tg;
    d.eps = eps;
    const std::size_t P = g.lat.size();
    d.levels.assign(tg.levels(), elliptic::TransmissionData::zeros(g, a_plus, a_minus, b, A));
    d.h_plus.assign(tg.levels(), {Field(P, 0.0), Field(P, 0.0)});
    d.h_minus = d.h_plus;
    return d;
  }

  double a_plus() const { return levels.front().a_plus; }
  double a_minus() const { return levels.front().a_minus; }

  /// Sets each level's flux drift to h- - h+.
  void sync_drift() {
    for (std::size_t n = 0; n < levels.size(); ++n)
      for (int i = 0; i < 2; ++i) levels[n].Hvec[i] = axpy(-1.0, h_plus[n][i], h_minus[n][i]);
  }

  void validate() const {
    MUSKAT_REQUIRE(eps >= 0 && eps <= 1, "eps must lie in [0,1], got " << eps);
    MUSKAT_REQUIRE(static_cast<int>(levels.size()) == time.levels() && h_plus.size() == levels.size() &&
                       h_minus.size() == levels.size(),
                   "linear problem data must have one entry per time level");
    for (const auto& l : levels) l.validate();
    const auto& z = levels.front();
    for (const Field* f : {&z.f1_plus, &z.f1_minus, &z.f2, &z.f3_plus, &z.f3_minus, &z.f4_plus, &z.f4_minus})
      MUSKAT_REQUIRE(sup_abs(*f) <= 1e-12, "right-hand sides must vanish at t = 0 (dotted class)");
  }

  /// Same coefficients, zero right-hand sides: L of this data is the linear part of L_eps.
  LinearProblemData homogeneous() const {
    LinearProblemData d = *this;
    for (auto& l : d.levels)
      for (Field* f : {&l.f1_plus, &l.f1_minus, &l.f2, &l.f3_plus, &l.f3_minus, &l.f4_plus, &l.f4_minus})
        std::fill(f->begin(), f->end(), 0.0);
    return d;
  }
};

namespace detail {

inline std::vector<Field> advance(const LateralGrid& g, const std::vector<Field>& rhs, double eps, double tau,
                                  const Field& rho0) {
  const Spectral& sp = spectral_for(g);
  return kernel::exponential_integrator(
      sp, rhs, tau, [&sp, eps](std::size_t p) { return cplx(-eps * sp.k2(p), 0.0); }, rho0);
}

} // namespace detail

/// rho_t - eps lap' rho = rhs, rho(0) = 0, exact per mode for piecewise-linear rhs.
inline geometry::InterfaceState advance_rho_parabolic(const LateralGrid& g, const std::vector<Field>& rhs, double eps,
                                                      double tau) {
  MUSKAT_REQUIRE(!rhs.empty(), "right-hand side has no time levels");
  kernel::require_dotted(rhs.front(), "parabolic right-hand side");
  geometry::InterfaceState out(g, tau, static_cast<int>(rhs.size()), "rho");
  out.levels = detail::advance(g, rhs, eps, tau, Field(g.size(), 0.0));
  return out;
}

/// Transmission solve at level n with the given interface field.
inline PhaseField solve_level(const LinearProblemData& d, int n, const Field& rho,
                              const elliptic::SolverOptions& o = {}) {
  elliptic::TransmissionData td = d.levels[n];
  td.rho = rho;
  return elliptic::solve_transmission(td, o);
}

/// f3+ - a+ du+/dn - h+ . grad rho at level n, with the ghost-consistent interface flux.
inline Field parabolic_rhs(const LinearProblemData& d, int n, const Field& rho, const PhaseField& u) {
  elliptic::TransmissionData td = d.levels[n];
  td.rho = rho;
  const Field flux = elliptic::interface_fluxes(td, u).first;
  auto grad = spectral_for(d.grid.lat).gradient(rho);
  Field r(rho.size());
  for (std::size_t p = 0; p < r.size(); ++p)
    r[p] = td.f3_plus[p] - td.a_plus * flux[p] - d.h_plus[n][0][p] * grad[0][p] - d.h_plus[n][1][p] * grad[1][p];
  return r;
}

/// L_eps on the window of levels n0..n0+len-1 with rho(n0) = rho_in[0] held fixed.
inline std::vector<Field> l_eps_window(const std::vector<Field>& rho_in, const LinearProblemData& d, int n0,
                                       const elliptic::SolverOptions& o = {}) {
  std::vector<Field> rhs(rho_in.size());
  for (std::size_t i = 0; i < rho_in.size(); ++i) {
    const int n = n0 + static_cast<int>(i);
    rhs[i] = parabolic_rhs(d, n, rho_in[i], solve_level(d, n, rho_in[i], o));
  }
  return detail::advance(d.grid.lat, rhs, d.eps, d.time.tau(), rho_in.front());
}

inline geometry::InterfaceState l_eps_apply(const geometry::InterfaceState& rho_in, const LinearProblemData& d,
                                            const elliptic::SolverOptions& o = {}) {
  MUSKAT_REQUIRE(rho_in.count() == d.time.levels(), "interface field has the wrong number of time levels");
  kernel::require_dotted(rho_in.levels.front(), "rho");
  geometry::InterfaceState out(d.grid.lat, d.time.tau(), rho_in.count(), "rho");
  out.levels = l_eps_window(rho_in.levels, d, 0, o);
  return out;
}

struct PicardOptions {
  double alpha = 0.5;
  double tol = 1e-8;        ///< successive difference in the E^{2+alpha} estimator, relative to max(1, |rho|)
  int max_iter = 60;
  double kappa_max = 0.9;   ///< halve the window when the measured factor reaches this
  int max_halvings = 6;
  holder::HolderOptions holder;
  elliptic::SolverOptions solver{1e-13, 500};
};

struct IterationLedger {
  std::vector<double> differences;  ///< successive differences, all windows in order
  std::vector<int> window_start;    ///< first level of each accepted window
  std::vector<int> window_steps;    ///< steps per accepted window
  std::vector<int> window_iterations;
  std::vector<double> halving_history; ///< window length in time at each attempt
  double contraction = std::numeric_limits<double>::quiet_NaN(); ///< max ratio, needs >= 2 iterations
  double estimate_lhs = 0.0, estimate_rhs = 0.0, estimate_ratio = 0.0;
  double fixed_point_residual = 0.0; ///< sup |rho - L_eps rho|
  double minus_residual = 0.0;       ///< "-" interface equation, diagnostic
  double jump_residual = 0.0;
  double bulk_residual = 0.0;
  double time_residual = 0.0;        ///< "+" equation with a centred difference for rho_t
};

struct LinearSolution {
  std::vector<PhaseField> u;
  geometry::InterfaceState rho;
  IterationLedger ledger;
};

namespace detail {

inline double window_norm(const LinearProblemData& d, const std::vector<Field>& a, const std::vector<Field>& b,
                          const PicardOptions& o) {
  std::vector<Field> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = axpy(-1.0, b[i], a[i]);
  return holder::e_norm(holder::lateral_series(d.grid.lat, diff, d.time.tau()), 2, o.alpha, o.holder).e_norm;
}

} // namespace detail

/// E^{2+alpha} Lipschitz factor |L delta| / |delta| of the linear part of L_eps on the
/// first `steps` time steps.
inline double measure_contraction(const LinearProblemData& d, int steps, const std::vector<Field>& delta,
                                  const PicardOptions& o = {}) {
  MUSKAT_REQUIRE(steps >= 2 && steps <= d.time.steps, "contraction window must have 2..steps steps");
  const LinearProblemData h = d.homogeneous();
  std::vector<Field> dw(delta.begin(), delta.begin() + steps + 1);
  kernel::require_dotted(dw.front(), "contraction probe");
  const auto Ld = l_eps_window(dw, h, 0, o.solver);
  std::vector<Field> zero(dw.size(), Field(d.grid.lat.size(), 0.0));
  return detail::window_norm(d, Ld, zero, o) / detail::window_norm(d, dw, zero, o);
}

/// Residual diagnostics and the estimate ledger for a computed solution.
inline void fill_diagnostics(const LinearProblemData& d, LinearSolution& s, const PicardOptions& o) {
  auto& L = s.ledger;
  const int NL = d.time.levels();
  const Spectral& sp = spectral_for(d.grid.lat);
  s.u.resize(NL);
  std::vector<Field> rhs(NL);
  for (int n = 0; n < NL; ++n) {
    s.u[n] = solve_level(d, n, s.rho.levels[n], o.solver);
    rhs[n] = parabolic_rhs(d, n, s.rho.levels[n], s.u[n]);
    elliptic::TransmissionData td = d.levels[n];
    td.rho = s.rho.levels[n];
    auto r = elliptic::transmission_residuals(td, s.u[n]);
    L.jump_residual = std::max(L.jump_residual, r.jump);
    L.bulk_residual = std::max(L.bulk_residual, r.bulk);
    auto [fp, fm] = elliptic::interface_fluxes(td, s.u[n]);
    auto grad = sp.gradient(s.rho.levels[n]);
    for (std::size_t p = 0; p < fp.size(); ++p) {
      // rho_t - eps lap' rho from the "+" equation, substituted into the "-" equation
      const double drift_m = d.h_minus[n][0][p] * grad[0][p] + d.h_minus[n][1][p] * grad[1][p];
      const double m = rhs[n][p] + td.a_minus * fm[p] + drift_m - td.f3_minus[p];
      L.minus_residual = std::max(L.minus_residual, std::abs(m));
    }
    if (n > 0 && n + 1 < NL) {
      const Field lap = sp.laplacian(s.rho.levels[n]);
      for (std::size_t p = 0; p < fp.size(); ++p) {
        const double rt = (s.rho.levels[n + 1][p] - s.rho.levels[n - 1][p]) / (2 * d.time.tau());
        L.time_residual = std::max(L.time_residual, std::abs(rt - d.eps * lap[p] - rhs[n][p]));
      }
    }
  }
  const auto Lrho = detail::advance(d.grid.lat, rhs, d.eps, d.time.tau(), Field(d.grid.lat.size(), 0.0));
  for (int n = 0; n < NL; ++n) L.fixed_point_residual = std::max(L.fixed_point_residual, sup_diff(Lrho[n], s.rho.levels[n]));

  // estimate ledger: |u+|E + |u-|E + |rho|P + eps |rho|P3 against the data norms
  std::vector<Field> up(NL), um(NL);
  for (int n = 0; n < NL; ++n) {
    up[n] = s.u[n].plus;
    um[n] = s.u[n].minus;
  }
  const double tau = d.time.tau(), a = o.alpha;
  auto bulk = [&](const std::vector<Field>& v) { return holder::bulk_series(d.grid, v, tau); };
  auto lat = [&](const std::vector<Field>& v) { return holder::lateral_series(d.grid.lat, v, tau); };
  auto collect = [&](auto member) {
    std::vector<Field> v(NL);
    for (int n = 0; n < NL; ++n) v[n] = d.levels[n].*member;
    return v;
  };
  using TD = elliptic::TransmissionData;
  const auto rl = lat(s.rho.levels);
  L.estimate_lhs = holder::e_norm(bulk(up), 2, a, o.holder).e_norm + holder::e_norm(bulk(um), 2, a, o.holder).e_norm +
                   holder::p_norm(rl, a, 2, o.holder).p_norm + d.eps * holder::p_norm(rl, a, 3, o.holder).p_norm;
  const double f2 = holder::e_norm(lat(collect(&TD::f2)), 2, a, o.holder).e_norm;
  L.estimate_rhs = holder::e_norm(bulk(collect(&TD::f1_plus)), 0, a, o.holder).e_norm +
                   holder::e_norm(bulk(collect(&TD::f1_minus)), 0, a, o.holder).e_norm + 2 * f2 +
                   holder::e_norm(lat(collect(&TD::f3_plus)), 1, a, o.holder).e_norm +
                   holder::e_norm(lat(collect(&TD::f3_minus)), 1, a, o.holder).e_norm +
                   holder::e_norm(lat(collect(&TD::f4_plus)), 2, a, o.holder).e_norm +
                   holder::e_norm(lat(collect(&TD::f4_minus)), 2, a, o.holder).e_norm;
  L.estimate_ratio = L.estimate_rhs > 0 ? L.estimate_lhs / L.estimate_rhs : 0.0;
}

/// Picard iteration on L_eps over time windows. A window whose measured contraction
/// factor reaches kappa_max is halved (down to T/2^max_halvings); later windows start
/// from the accepted rho at their first level.
inline LinearSolution solve_linear_problem(const LinearProblemData& d, const PicardOptions& o = {}) {
  d.validate();
  const int steps = d.time.steps;
  LinearSolution s;
  s.rho = geometry::InterfaceState(d.grid.lat, d.time.tau(), d.time.levels(), "rho");
  auto& L = s.ledger;
  int w = steps, halvings = 0;
  int n0 = 0;
  double kappa = 0.0;
  bool have_kappa = false;
  while (n0 < steps) {
    const int m = std::min(w, steps - n0);
    L.halving_history.push_back(m * d.time.tau());
    std::vector<Field> cur(m + 1, s.rho.levels[n0]);
    std::vector<double> diffs;
    bool restart = false;
    for (int it = 0;; ++it) {
      if (it >= o.max_iter) {
        std::ostringstream os;
        os << "Picard iteration did not converge in " << o.max_iter << " iterations on window starting at t = "
           << n0 * d.time.tau();
        throw SolverError(os.str(), diffs);
      }
      std::vector<Field> next = l_eps_window(cur, d, n0, o.solver);
      const double diff = detail::window_norm(d, next, cur, o);
      std::vector<Field> zero(next.size(), Field(d.grid.lat.size(), 0.0));
      const double scale = std::max(1.0, detail::window_norm(d, next, zero, o));
      diffs.push_back(diff);
      cur = std::move(next);
      // ratios inside the noise band of the inner solves carry no information
      if (diffs.size() >= 2 && diffs[diffs.size() - 2] > 0 && diff > 10 * o.tol * scale) {
        const double ratio = diff / diffs[diffs.size() - 2];
        if (ratio >= o.kappa_max) {
          restart = true;
          break;
        }
        kappa = std::max(kappa, ratio);
        have_kappa = true;
      }
      if (diff <= o.tol * scale) break;
    }
    if (restart) {
      if (halvings >= o.max_halvings || w / 2 < 2) {
        std::ostringstream os;
        os << "no contraction after " << halvings << " halvings of the time window (last window "
           << m * d.time.tau() << ")";
        throw SolverError(os.str(), diffs);
      }
      w /= 2;
      ++halvings;
      continue;
    }
    for (int i = 0; i <= m; ++i) s.rho.levels[n0 + i] = cur[i];
    L.differences.insert(L.differences.end(), diffs.begin(), diffs.end());
    L.window_start.push_back(n0);
    L.window_steps.push_back(m);
    L.window_iterations.push_back(static_cast<int>(diffs.size()));
    n0 += m;
  }
  if (have_kappa) L.contraction = kappa;
  fill_diagnostics(d, s, o);
  return s;
}

/// Integrated energy identity of one level's transmission solve.
inline elliptic::EnergyIdentity energy_diagnostic(const PhaseField& u, const LinearProblemData& d, int n,
                                                  const Field& rho) {
  elliptic::TransmissionData td = d.levels[n];
  td.rho = rho;
  return elliptic::energy_identity(td, u);
}

} // namespace muskat::linear
