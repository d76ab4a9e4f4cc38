#pragma once

// Free-boundary problem on the periodic strip: Lap u+- = f+-(u+-) on either side of a
// moving graph x_N = rho(x', t), continuity of u, a+ du+/dn = a- du-/dn = -m V_n on
// the graph, and u+- = g+-(x', t) on x_N = +-1. The graph is pulled back to x_N = 0
// through e_rho and the unknowns are split as
//   rho = sigma + delta,  u+- = w+- o e_sigma + b+- delta + v+-,
// with (v, delta) the fixed point of psi -> F(psi): a linear solve whose data are the
// residual groups F1..F6 evaluated at psi.

#include "muskat/core.hpp"
#include "muskat/elliptic.hpp"
#include "muskat/fft.hpp"
#include "muskat/geometry.hpp"
#include "muskat/holder.hpp"
#include "muskat/linearized.hpp"

#include <functional>
#include <limits>

namespace muskat::nonlinear {

using BoundaryFn = std::function<double(double x1, double x2, double t)>;

struct Source {
  std::function<double(double)> f, df;
};

struct NonlinearProblem {
  geometry::DomainSpec domain;
  double plateau = 0.2;  ///< cutoff plateau as a fraction of lambda0
  double a_plus = 1.0, a_minus = 2.0, m = 1.0;
  Source f_plus, f_minus;
  BoundaryFn g_plus, g_minus;
  double T = 0.25;
  int steps = 32;
  double cutoff_horizon = 0.0; ///< support of the temporal cutoff in sigma; 0 means T
  double eps = 0.0;      ///< parabolic regularisation of the inner solves
  bool continue_to_zero = true; ///< after converging at eps > 0, iterate on at eps = 0
  double alpha = 0.5;
  double nu = 0.05;      ///< nondegeneracy margin
  double radius = 1.0;   ///< ball radius r for the iterate norm
  double tol = 1e-8;     ///< outer successive difference, relative to max(1, |psi|)
  int max_iter = 20;
  double kappa_max = 0.9;
  int max_halvings = 6;
  linear::PicardOptions inner = inner_defaults();
  holder::HolderOptions holder;

  static linear::PicardOptions inner_defaults() {
    linear::PicardOptions o;
    o.tol = 1e-10;
    return o;
  }

  void validate() const {
    domain.validate();
    MUSKAT_REQUIRE(a_plus > 0 && a_minus > 0 && m > 0, "a+, a- and m must be positive");
    MUSKAT_REQUIRE(f_plus.f && f_plus.df && f_minus.f && f_minus.df, "sources f+- and their derivatives are required");
    MUSKAT_REQUIRE(g_plus && g_minus, "boundary data g+- are required");
    MUSKAT_REQUIRE(T > 0 && steps >= 4, "need T > 0 and at least 4 time steps");
    MUSKAT_REQUIRE(cutoff_horizon >= 0, "cutoff horizon must be non-negative");
    MUSKAT_REQUIRE(eps >= 0 && eps <= 1, "eps must lie in [0,1]");
    MUSKAT_REQUIRE(alpha > 0 && alpha < 1, "alpha must lie in (0,1)");
    MUSKAT_REQUIRE(nu > 0, "nu must be positive");
    MUSKAT_REQUIRE(domain.vertical_M >= 4, "vertical resolution must be at least 4");
  }

  geometry::Cutoff cutoff() const { return geometry::Cutoff(domain.lambda0, plateau); }
  StripGrid grid() const { return domain.grid(); }
  TimeGrid time() const { return TimeGrid{T, steps}; }
  double eta_horizon() const { return cutoff_horizon > 0 ? cutoff_horizon : T; }
  double ahat(Side s) const { return (s == Side::plus ? a_plus : a_minus) / m; }
  const Source& source(Side s) const { return s == Side::plus ? f_plus : f_minus; }
  const BoundaryFn& boundary(Side s) const { return s == Side::plus ? g_plus : g_minus; }
};

/// Lateral field of g at time t.
inline Field sample_boundary(const LateralGrid& g, const BoundaryFn& f, double t) {
  Field out(g.size());
  for (int p = 0; p < g.size(); ++p) out[p] = f(g.coord(p % g.n[0]), g.dim == 2 ? g.coord(p / g.n[0]) : 0.0, t);
  return out;
}

namespace detail {

inline int side_index(Side s) { return s == Side::plus ? 0 : 1; }

/// Full-strip node of phase layer j.
inline int strip_node(int M, Side s, int j) { return s == Side::plus ? M + j : M - j; }

/// Cubic Lagrange weights (value, d/ds, d2/ds2) at local coordinate s on nodes 0..3.
inline void lagrange4(double s, double w0[4], double w1[4], double w2[4]) {
  static constexpr double c[4] = {-1.0 / 6, 0.5, -0.5, 1.0 / 6};
  for (int i = 0; i < 4; ++i) {
    double r[3];
    int q = 0;
    for (int k = 0; k < 4; ++k)
      if (k != i) r[q++] = k;
    const double a = s - r[0], b = s - r[1], d = s - r[2];
    w0[i] = c[i] * a * b * d;
    w1[i] = c[i] * (b * d + a * d + a * b);
    w2[i] = c[i] * 2 * (a + b + d);
  }
}

} // namespace detail

/// One phase's extended field w on the whole strip: nodal values at lambda_k = (k - M) hz,
/// k = 0..2M, plus the time correction -t chi(lambda) q(x').
class ExtendedField {
public:
  ExtendedField() = default;
  ExtendedField(const StripGrid& g, const geometry::Cutoff& c, Field base, Field q)
      : g_(g), cut_(c), base_(std::move(base)), q_(std::move(q)) {}

  struct Jet {
    double value, d1, d2;
  };

  /// w, w_lambda, w_lambda_lambda at lambda_k + dl and time t.
  Jet at(int p, int k, double dl, double t) const {
    const int M = g_.M, K = 2 * M;
    const double h = g_.hz();
    const int off = static_cast<int>(std::floor(dl / h));
    int k0 = std::clamp(k + off - 1, 0, K - 3);
    const double s = (k - k0) + dl / h;
    double w0[4], w1[4], w2[4];
    detail::lagrange4(s, w0, w1, w2);
    const std::size_t P = g_.lat.size();
    Jet j{0, 0, 0};
    for (int i = 0; i < 4; ++i) {
      const double v = base_[p + P * (k0 + i)];
      j.value += w0[i] * v;
      j.d1 += w1[i] * v;
      j.d2 += w2[i] * v;
    }
    j.d1 /= h;
    j.d2 /= h * h;
    if (t != 0.0) {
      const auto X = cut_.jet((k - M) * h + dl);
      j.value -= t * X.value * q_[p];
      j.d1 -= t * X.d1 * q_[p];
      j.d2 -= t * X.d2 * q_[p];
    }
    return j;
  }

  const Field& base() const { return base_; }
  const Field& q() const { return q_; }

private:
  StripGrid g_;
  geometry::Cutoff cut_;
  Field base_, q_;
};

/// eta and eta' with eta = 1 on [0, T/2], a quintic smoothstep down to 0 at T.
inline std::array<double, 2> time_cutoff(double t, double T) {
  const double s = (t - T / 2) / (T / 2);
  if (s <= 0) return {1.0, 0.0};
  if (s >= 1) return {0.0, 0.0};
  return {1 - s * s * s * (10 - 15 * s + 6 * s * s), -30 * s * s * (1 - s) * (1 - s) / (T / 2)};
}


/// sigma, w+-, b+- and rho1.
struct InitialFrame {
  StripGrid grid;
  StripGrid strip;   ///< whole strip as one column of 2M+1 layers
  TimeGrid time;
  PhaseField u0;
  Field flux_plus, flux_minus; ///< du0+-/dn on the interface
  Field rho1;                  ///< initial interface velocity
  double rho1_agreement = 0.0; ///< sup |rho1 from + minus rho1 from -|
  double flux_margin = 0.0, jump_margin = 0.0;
  geometry::InterfaceState sigma, sigma_t;
  std::array<ExtendedField, 2> w;
  std::array<Field, 2> normal_shift; ///< d_lambda w(0) - (-rho1/ahat): makes W_N(0) match the interface flux
  std::array<Field, 2> stationary_residual; ///< f(u0) - Lap u0 per phase layer, absorbed into the source

  const ExtendedField& ext(Side s) const { return w[detail::side_index(s)]; }
};

namespace detail {

/// Full-strip values from per-phase layers (phase values on their own side).
inline Field phase_to_strip(const StripGrid& g, const Field& phase, Side s, const Field& other_side) {
  const std::size_t P = g.lat.size();
  Field out(P * (2 * g.M + 1));
  for (int k = 0; k <= 2 * g.M; ++k)
    for (std::size_t p = 0; p < P; ++p) out[p + P * k] = other_side[p + P * k];
  for (int j = 0; j <= g.M; ++j)
    for (std::size_t p = 0; p < P; ++p) out[p + P * strip_node(g.M, s, j)] = phase[g.at(p, j)];
  return out;
}

inline Field strip_to_phase(const StripGrid& g, const Field& strip, Side s) {
  const std::size_t P = g.lat.size();
  Field out(g.bulk_size());
  for (int j = 0; j <= g.M; ++j)
    for (std::size_t p = 0; p < P; ++p) out[g.at(p, j)] = strip[p + P * strip_node(g.M, s, j)];
  return out;
}

/// Lap of a full-strip field through e_rho, restricted to the phase layers.
inline Field strip_apply(const geometry::TransformedLaplacian& L, const StripGrid& g, const Field& strip, Side s) {
  return strip_to_phase(g, L.apply(strip, Side::plus), s);
}

} // namespace detail

/// Builds sigma = rho1 t eta(t), the extensions w+- of u0 and the consistency fields.
inline InitialFrame build_initial_frame(const NonlinearProblem& pr, const elliptic::SolverOptions& o = {1e-13, 500}) {
  pr.validate();
  InitialFrame fr;
  fr.grid = pr.grid();
  fr.time = pr.time();
  const StripGrid& g = fr.grid;
  const int M = g.M, P = g.lat.size();
  fr.strip = StripGrid{g.lat, 2 * M, 2.0};
  const auto cut = pr.cutoff();

  elliptic::SemilinearProblem sp;
  sp.grid = g;
  sp.a_plus = pr.a_plus;
  sp.a_minus = pr.a_minus;
  sp.f_plus = pr.f_plus.f;
  sp.df_plus = pr.f_plus.df;
  sp.f_minus = pr.f_minus.f;
  sp.df_minus = pr.f_minus.df;
  sp.g_plus = sample_boundary(g.lat, pr.g_plus, 0.0);
  sp.g_minus = sample_boundary(g.lat, pr.g_minus, 0.0);
  sp.nu = pr.nu;
  auto st = elliptic::solve_semilinear_stationary(sp, o);
  fr.u0 = st.u;
  fr.flux_plus = st.flux_plus;
  fr.flux_minus = st.flux_minus;
  fr.flux_margin = st.flux_margin;
  fr.jump_margin = st.jump_margin;
  MUSKAT_REQUIRE(st.flux_margin >= pr.nu && st.jump_margin >= pr.nu,
                 "problem degenerate: min du0/dn = " << st.flux_margin << ", min jump = " << st.jump_margin
                                                     << ", nu = " << pr.nu);

  const double ap = pr.ahat(Side::plus), am = pr.ahat(Side::minus);
  fr.rho1.resize(P);
  for (int p = 0; p < P; ++p) {
    const double rp = -ap * st.flux_plus[p], rm = -am * st.flux_minus[p];
    fr.rho1_agreement = std::max(fr.rho1_agreement, std::abs(rp - rm));
    fr.rho1[p] = 0.5 * (rp + rm);
  }
  MUSKAT_REQUIRE(fr.rho1_agreement <= 1e-8,
                 "compatibility violated: interface velocities from the two sides differ by " << fr.rho1_agreement);

  fr.sigma = geometry::InterfaceState(g.lat, fr.time.tau(), fr.time.levels(), "sigma");
  fr.sigma_t = fr.sigma;
  fr.sigma_t.role = "sigma_t";
  for (int n = 0; n < fr.time.levels(); ++n) {
    const auto e = time_cutoff(fr.time.t(n), pr.eta_horizon());
    fr.sigma.levels[n] = scaled(fr.time.t(n) * e[0], fr.rho1);
    fr.sigma_t.levels[n] = scaled(e[0] + fr.time.t(n) * e[1], fr.rho1);
  }
  fr.sigma.require_admissible(cut.lambda0());

  const double h = g.hz();
  for (Side s : {Side::plus, Side::minus}) {
    const Field& u = s == Side::plus ? fr.u0.plus : fr.u0.minus;
    const Field& flux = s == Side::plus ? st.flux_plus : st.flux_minus;
    const Source& f = pr.source(s);
    Field trace(u.begin(), u.begin() + P);
    const Field lap = elliptic::detail::lateral_laplacian(g.lat, trace);
    Field base(static_cast<std::size_t>(P) * (2 * M + 1));
    for (int k = 0; k <= 2 * M; ++k) {
      const double lam = (k - M) * h;
      const bool own = s == Side::plus ? lam >= 0 : lam <= 0;
      const auto X = cut.jet(lam);
      for (int p = 0; p < P; ++p) {
        if (own) {
          base[p + static_cast<std::size_t>(P) * k] = u[g.at(p, std::abs(k - M))];
        } else {
          // second-order Taylor reflection, blended into the trace away from the collar
          const double unn = f.f(trace[p]) - lap[p];
          const double poly = trace[p] + lam * flux[p] + 0.5 * lam * lam * unn;
          base[p + static_cast<std::size_t>(P) * k] = X.value * poly + (1 - X.value) * trace[p];
        }
      }
    }
    Field q(P);
    const double a = pr.ahat(s);
    for (int p = 0; p < P; ++p) q[p] = (-fr.rho1[p] / a) * fr.rho1[p];
    const int si = detail::side_index(s);
    fr.w[si] = ExtendedField(g, cut, std::move(base), std::move(q));
    fr.normal_shift[si].resize(P);
    for (int p = 0; p < P; ++p) fr.normal_shift[si][p] = fr.w[si].at(p, M, 0.0, 0.0).d1 + fr.rho1[p] / a;
    const geometry::TransformedLaplacian L0(fr.strip, cut, Field(P, 0.0), M);
    const Field lap0 = detail::strip_apply(L0, g, fr.w[si].base(), s);
    Field r(g.bulk_size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = f.f(u[i]) - lap0[i];
    fr.stationary_residual[si] = std::move(r);
  }
  return fr;
}


/// psi = (v+, v-, delta) per time level.
struct IterateState {
  std::vector<PhaseField> v;
  geometry::InterfaceState delta;
  double norm = 0.0;

  static IterateState zero(const InitialFrame& fr) {
    IterateState z;
    z.v.assign(fr.time.levels(), PhaseField(fr.grid));
    z.delta = geometry::InterfaceState(fr.grid.lat, fr.time.tau(), fr.time.levels(), "delta");
    return z;
  }
};

/// |v+|E^{2+a} + |v-|E^{2+a} + |delta|P^{2+a}.
inline double iterate_norm(const InitialFrame& fr, const std::vector<PhaseField>& v,
                           const geometry::InterfaceState& delta, double alpha, const holder::HolderOptions& o = {}) {
  const int NL = static_cast<int>(v.size());
  std::vector<Field> vp(NL), vm(NL);
  for (int n = 0; n < NL; ++n) {
    vp[n] = v[n].plus;
    vm[n] = v[n].minus;
  }
  const double tau = fr.time.tau();
  return holder::e_norm(holder::bulk_series(fr.grid, vp, tau), 2, alpha, o).e_norm +
         holder::e_norm(holder::bulk_series(fr.grid, vm, tau), 2, alpha, o).e_norm +
         holder::p_norm(holder::lateral_series(fr.grid.lat, delta.levels, tau), alpha, 2, o).p_norm;
}

inline IterateState difference(const IterateState& a, const IterateState& b) {
  IterateState d = a;
  for (std::size_t n = 0; n < a.v.size(); ++n) {
    d.v[n].plus = axpy(-1.0, b.v[n].plus, a.v[n].plus);
    d.v[n].minus = axpy(-1.0, b.v[n].minus, a.v[n].minus);
    d.delta.levels[n] = axpy(-1.0, b.delta.levels[n], a.delta.levels[n]);
  }
  return d;
}

/// Residual groups at one time level, with the coefficients of the linear problem.
struct LevelResiduals {
  std::array<Field, 2> F1, F2;      ///< bulk, per phase layer
  Field F3;                         ///< interface
  std::array<Field, 2> F4, F5;      ///< interface
  std::array<Field, 2> F6;          ///< outer boundaries
  std::array<Field, 2> b;           ///< f'(w o e_sigma)
  Field A;                          ///< jump of d(w o e_sigma)/dn
  std::array<std::array<Field, 2>, 2> h; ///< drift coefficients per side and lateral axis
};

struct ResidualSet {
  std::vector<LevelResiduals> levels;
};

/// F1..F6 of the split at level n for the iterate level (v, delta).
inline LevelResiduals compute_level_residuals(const PhaseField& v, const Field& delta, const InitialFrame& fr,
                                              const NonlinearProblem& pr, int n) {
  const StripGrid& g = fr.grid;
  const int M = g.M, P = g.lat.size(), d = g.lat.dim;
  const std::size_t SP = static_cast<std::size_t>(P);
  const double t = fr.time.t(n);
  const auto cut = pr.cutoff();
  const Field& sigma = fr.sigma.levels[n];
  const Field rho = axpy(1.0, delta, sigma);
  MUSKAT_REQUIRE(sup_abs(rho) <= cut.lambda0() / 4,
                 "interface displacement " << sup_abs(rho) << " exceeds lambda0/4 at t = " << t);
  const Spectral& sp = spectral_for(g.lat);
  const Field zero(P, 0.0);
  const geometry::TransformedLaplacian F0(fr.strip, cut, zero, M), Fs(fr.strip, cut, sigma, M),
      Fr(fr.strip, cut, rho, M);
  const geometry::TransformedLaplacian L0(g, cut, zero), Ls(g, cut, sigma), Lr(g, cut, rho);
  const auto gs = sp.gradient(sigma), gd = sp.gradient(delta);
  std::vector<double> Ss(P), Sr(P);
  for (int p = 0; p < P; ++p) {
    Ss[p] = 1.0;
    Sr[p] = 1.0;
    for (int i = 0; i < d; ++i) {
      Ss[p] += gs[i][p] * gs[i][p];
      Sr[p] += (gs[i][p] + gd[i][p]) * (gs[i][p] + gd[i][p]);
    }
  }

  LevelResiduals R;
  std::array<Field, 2> Wg, WN;
  for (Side s : {Side::plus, Side::minus}) {
    const int si = detail::side_index(s);
    const ExtendedField& ext = fr.ext(s);
    const Source& f = pr.source(s);
    const double a = pr.ahat(s);
    const Field& vs = v.side(s);

    Field Ws(SP * (2 * M + 1)), Wr(Ws.size()), Bd(Ws.size());
    for (int k = 0; k <= 2 * M; ++k) {
      const double chi = cut.jet((k - M) * g.hz()).value;
      for (int p = 0; p < P; ++p) {
        const auto js = ext.at(p, k, chi * sigma[p], t);
        const std::size_t q = p + SP * k;
        Ws[q] = js.value;
        Wr[q] = ext.at(p, k, chi * rho[p], t).value;
        Bd[q] = (js.d1 - fr.normal_shift[si][p]) * chi * delta[p];
      }
    }
    const Field W = detail::strip_to_phase(g, Ws, s), B = detail::strip_to_phase(g, Bd, s);
    Field D1(Ws.size()), DW(Ws.size());
    for (std::size_t q = 0; q < Ws.size(); ++q) {
      DW[q] = Wr[q] - Ws[q];
      D1[q] = DW[q] - Bd[q];
    }
    const Field L0v = L0.apply(vs, s), Lsv = Ls.apply(vs, s), Lrv = Lr.apply(vs, s);
    const Field LrWr = detail::strip_apply(Fr, g, Wr, s);
    const Field LsD1 = detail::strip_apply(Fs, g, D1, s);
    const Field dB = axpy(-1.0, detail::strip_apply(Fs, g, Bd, s), detail::strip_apply(Fr, g, Bd, s));
    const Field dW = axpy(-1.0, detail::strip_apply(Fs, g, DW, s), detail::strip_apply(Fr, g, DW, s));
    const Field& r0 = fr.stationary_residual[si];
    Field F1(g.bulk_size()), F2(g.bulk_size()), b(g.bulk_size());
    for (std::size_t q = 0; q < F1.size(); ++q) {
      const double fw = f.f(W[q]), dfw = f.df(W[q]);
      const double lin = vs[q] + B[q];
      F1[q] = (L0v[q] - Lsv[q]) + (f.f(W[q] + lin) - dfw * lin - fw) + dfw * B[q] + (fw - LrWr[q]) - r0[q];
      F2[q] = LsD1[q] - (Lrv[q] - Lsv[q]) - dB[q] + dW[q];
      b[q] = dfw;
    }
    R.F1[si] = std::move(F1);
    R.F2[si] = std::move(F2);
    R.b[si] = std::move(b);

    // interface
    Field wg(P), wn(P), wnn(P);
    for (int p = 0; p < P; ++p) {
      const auto j = ext.at(p, M, sigma[p], t);
      wg[p] = j.value;
      wn[p] = j.d1 - fr.normal_shift[si][p];
      wnn[p] = j.d2;
    }
    const auto Wi = sp.gradient(wg), WNi = sp.gradient(wn);
    const Field vN = elliptic::normal_derivative(g, v, s);
    const auto vi = sp.gradient(Field(vs.begin(), vs.begin() + P));
    Field F4(P), F5(P);
    for (int p = 0; p < P; ++p) {
      double sWi = 0, svi = 0, sWNi = 0, dvi = 0, dWNi = 0, sdi = 0;
      for (int i = 0; i < d; ++i) {
        sWi += gs[i][p] * Wi[i][p];
        svi += gs[i][p] * vi[i][p];
        sWNi += gs[i][p] * WNi[i][p];
        sdi += gs[i][p] * gd[i][p];
        dvi += gd[i][p] * vi[i][p];
        dWNi += gd[i][p] * WNi[i][p];
      }
      const double dl = delta[p];
      F4[p] = -(fr.sigma_t.levels[n][p] + a * (Ss[p] * wn[p] - sWi)) + a * (1 - Ss[p]) * vN[p] - a * Ss[p] * wnn[p] * dl +
              a * svi + a * sWNi * dl - a * wn[p] * sdi;
      F5[p] = -a * (Sr[p] - Ss[p]) * (wnn[p] * dl + vN[p]) + a * (dWNi * dl + dvi);
    }
    for (int i = 0; i < 2; ++i) R.h[si][i] = i < d ? scaled(-a, Wi[i]) : zero;
    R.F4[si] = std::move(F4);
    R.F5[si] = std::move(F5);
    Field F6 = sample_boundary(g.lat, pr.boundary(s), t);
    const int kb = s == Side::plus ? 2 * M : 0;
    for (int p = 0; p < P; ++p) F6[p] -= ext.at(p, kb, 0.0, t).value;
    R.F6[si] = std::move(F6);
    Wg[si] = std::move(wg);
    WN[si] = std::move(wn);
  }
  R.F3 = axpy(-1.0, Wg[0], Wg[1]);
  R.A = axpy(-1.0, WN[1], WN[0]);
  return R;
}

inline ResidualSet compute_residuals(const IterateState& psi, const InitialFrame& fr, const NonlinearProblem& pr) {
  ResidualSet r;
  for (int n = 0; n < fr.time.levels(); ++n)
    r.levels.push_back(compute_level_residuals(psi.v[n], psi.delta.levels[n], fr, pr, n));
  return r;
}

/// Linear problem with the residuals as data.
inline linear::LinearProblemData linear_data(const ResidualSet& r, const InitialFrame& fr, const NonlinearProblem& pr,
                                             double eps) {
  const StripGrid& g = fr.grid;
  auto d = linear::LinearProblemData::zeros(g, fr.time, eps, pr.ahat(Side::plus), pr.ahat(Side::minus), 1.0, 1.0);
  for (int n = 0; n < fr.time.levels(); ++n) {
    const auto& R = r.levels[n];
    auto& td = d.levels[n];
    td.b_plus = R.b[0];
    td.b_minus = R.b[1];
    td.A = R.A;
    for (std::size_t q = 0; q < td.f1_plus.size(); ++q) {
      td.f1_plus[q] = -(R.F1[0][q] + R.F2[0][q]);
      td.f1_minus[q] = -(R.F1[1][q] + R.F2[1][q]);
    }
    td.f2 = R.F3;
    td.f3_plus = axpy(1.0, R.F5[0], R.F4[0]);
    td.f3_minus = axpy(1.0, R.F5[1], R.F4[1]);
    td.f4_plus = R.F6[0];
    td.f4_minus = R.F6[1];
    d.h_plus[n] = R.h[0];
    d.h_minus[n] = R.h[1];
  }
  d.sync_drift();
  for (const auto& td : d.levels)
    for (double A : td.A)
      MUSKAT_REQUIRE(A >= pr.nu, "nondegeneracy lost along the iteration: A = " << A << " < nu = " << pr.nu);
  return d;
}

/// F(psi): the linear problem solved with the residuals of psi as data.
inline IterateState nonlinear_step(const IterateState& psi, const InitialFrame& fr, const NonlinearProblem& pr,
                                   double eps, linear::IterationLedger* inner = nullptr) {
  const auto data = linear_data(compute_residuals(psi, fr, pr), fr, pr, eps);
  auto sol = linear::solve_linear_problem(data, pr.inner);
  if (inner) *inner = sol.ledger;
  IterateState out;
  out.v = std::move(sol.u);
  out.delta = std::move(sol.rho);
  out.delta.role = "delta";
  out.norm = iterate_norm(fr, out.v, out.delta, pr.alpha, pr.holder);
  return out;
}

/// |F(psi1) - F(psi2)| / |psi1 - psi2| in the iterate norm.
inline double measure_lipschitz(const IterateState& psi1, const IterateState& psi2, const InitialFrame& fr,
                                const NonlinearProblem& pr, double eps) {
  const auto d_in = difference(psi1, psi2);
  const double den = iterate_norm(fr, d_in.v, d_in.delta, pr.alpha, pr.holder);
  MUSKAT_REQUIRE(den > 0, "contraction probe needs two distinct iterates");
  const auto d_out = difference(nonlinear_step(psi1, fr, pr, eps), nonlinear_step(psi2, fr, pr, eps));
  return iterate_norm(fr, d_out.v, d_out.delta, pr.alpha, pr.holder) / den;
}

/// u+- = w+- o e_sigma + b+- delta + v+-, rho = sigma + delta.
inline std::pair<std::vector<PhaseField>, geometry::InterfaceState> reconstruct(const IterateState& psi,
                                                                                const InitialFrame& fr,
                                                                                const NonlinearProblem& pr) {
  const StripGrid& g = fr.grid;
  const int M = g.M, P = g.lat.size();
  const auto cut = pr.cutoff();
  std::vector<PhaseField> u(fr.time.levels(), PhaseField(g));
  geometry::InterfaceState rho(g.lat, fr.time.tau(), fr.time.levels(), "rho");
  for (int n = 0; n < fr.time.levels(); ++n) {
    const double t = fr.time.t(n);
    const Field& sg = fr.sigma.levels[n];
    const Field& dl = psi.delta.levels[n];
    rho.levels[n] = axpy(1.0, dl, sg);
    for (Side s : {Side::plus, Side::minus}) {
      const ExtendedField& ext = fr.ext(s);
      const int si = detail::side_index(s);
      Field& out = u[n].side(s);
      const Field& v = psi.v[n].side(s);
      for (int j = 0; j <= M; ++j) {
        const int k = detail::strip_node(M, s, j);
        const double chi = cut.jet((k - M) * g.hz()).value;
        for (int p = 0; p < P; ++p) {
          const auto js = ext.at(p, k, chi * sg[p], t);
          const std::size_t q = g.at(p, j);
          out[q] = js.value + (js.d1 - fr.normal_shift[si][p]) * chi * dl[p] + v[q];
        }
      }
    }
  }
  return {std::move(u), std::move(rho)};
}

namespace detail {

/// First-derivative weights at node x on nodes 0..m-1 (unit spacing).
inline std::vector<double> fd_weights(double x, int m) {
  std::vector<double> w(m);
  for (int i = 0; i < m; ++i) {
    double den = 1, num = 0;
    for (int k = 0; k < m; ++k)
      if (k != i) den *= i - k;
    for (int l = 0; l < m; ++l) {
      if (l == i) continue;
      double prod = 1;
      for (int k = 0; k < m; ++k)
        if (k != i && k != l) prod *= x - k;
      num += prod;
    }
    w[i] = num / den;
  }
  return w;
}

} // namespace detail

struct VerificationReport {
  double pde = 0.0;           ///< transformed equation at interior layers
  double trace = 0.0;         ///< u+ - u- on the interface
  double kinematic = 0.0;     ///< rho_t + (a/m)(S u_N + S_i u_i), both sides
  double outer = 0.0;         ///< Dirichlet data on x_N = +-1
  double flux_balance = 0.0;  ///< a+ du+/dn - a- du-/dn along the moving normal
  double kinematic_law = 0.0; ///< a du/dn + m V_n, both sides
  double flux_margin = 0.0;   ///< min du0+-/dn at t = 0
  double jump_margin = 0.0;   ///< min (du0+/dn - du0-/dn) at t = 0
  double nu = 0.0;
  bool nondegenerate = false;
};

/// Residuals of the free-boundary problem for a candidate (u, rho); derivatives are
/// independent of the solver: third-order one-sided normal differences, spectral
/// lateral derivatives and second-order time differences.
inline VerificationReport verify_solution(const std::vector<PhaseField>& u, const geometry::InterfaceState& rho,
                                          const NonlinearProblem& pr) {
  const StripGrid g = pr.grid();
  const TimeGrid tg = pr.time();
  MUSKAT_REQUIRE(static_cast<int>(u.size()) == rho.count() && rho.count() >= 5, "need matching levels, at least 5");
  const int M = g.M, P = g.lat.size(), d = g.lat.dim, NL = rho.count();
  const double h = g.hz(), tau = rho.tau;
  const auto cut = pr.cutoff();
  const Spectral& sp = spectral_for(g.lat);
  VerificationReport r;
  r.nu = pr.nu;
  r.flux_margin = r.jump_margin = std::numeric_limits<double>::infinity();
  auto dn = [&](const Field& f, int p, Side s) {
    const std::size_t st = P;
    const double v = (-11 * f[p] + 18 * f[p + st] - 9 * f[p + 2 * st] + 2 * f[p + 3 * st]) / (6 * h);
    return s == Side::plus ? v : -v;
  };
  for (int n = 0; n < NL; ++n) {
    const Field& rh = rho.levels[n];
    const double t = tg.t(n);
    Field rt(P);
    // fourth-order differences on the five nearest levels
    const int n0 = std::clamp(n - 2, 0, NL - 5);
    const auto wt = detail::fd_weights(n - n0, 5);
    for (int p = 0; p < P; ++p) {
      double acc = 0;
      for (int i = 0; i < 5; ++i) acc += wt[i] * rho.levels[n0 + i][p];
      rt[p] = acc / tau;
    }
    const geometry::TransformedLaplacian L(g, cut, rh);
    const auto gr = sp.gradient(rh);
    const Field trace(u[n].plus.begin(), u[n].plus.begin() + P);
    const auto ui = sp.gradient(trace);
    std::array<Field, 2> q;
    for (Side s : {Side::plus, Side::minus}) {
      const Field& us = u[n].side(s);
      const Field Lu = L.apply(us, s);
      const Source& f = pr.source(s);
      for (int j = 1; j < M; ++j)
        for (int p = 0; p < P; ++p) r.pde = std::max(r.pde, std::abs(Lu[g.at(p, j)] - f.f(us[g.at(p, j)])));
      const Field gb = sample_boundary(g.lat, pr.boundary(s), t);
      for (int p = 0; p < P; ++p) r.outer = std::max(r.outer, std::abs(us[g.at(p, M)] - gb[p]));
      Field qs(P);
      for (int p = 0; p < P; ++p) {
        double S = 1.0, Si = 0.0;
        for (int i = 0; i < d; ++i) {
          S += gr[i][p] * gr[i][p];
          Si -= gr[i][p] * ui[i][p];
        }
        qs[p] = S * dn(us, p, s) + Si;
        r.kinematic = std::max(r.kinematic, std::abs(rt[p] + pr.ahat(s) * qs[p]));
        const double sq = std::sqrt(S);
        const double a = s == Side::plus ? pr.a_plus : pr.a_minus;
        r.kinematic_law = std::max(r.kinematic_law, std::abs(a * qs[p] / sq + pr.m * rt[p] / sq));
      }
      q[detail::side_index(s)] = std::move(qs);
    }
    for (int p = 0; p < P; ++p) {
      r.trace = std::max(r.trace, std::abs(u[n].plus[p] - u[n].minus[p]));
      double S = 1.0;
      for (int i = 0; i < d; ++i) S += gr[i][p] * gr[i][p];
      r.flux_balance = std::max(r.flux_balance, std::abs(pr.a_plus * q[0][p] - pr.a_minus * q[1][p]) / std::sqrt(S));
      if (n == 0) {
        const double dp = dn(u[0].plus, p, Side::plus), dm = dn(u[0].minus, p, Side::minus);
        r.flux_margin = std::min({r.flux_margin, dp, dm});
        r.jump_margin = std::min(r.jump_margin, dp - dm);
      }
    }
  }
  r.nondegenerate = r.flux_margin >= pr.nu && r.jump_margin >= pr.nu;
  return r;
}

struct NonlinearReport {
  double T_accepted = 0.0;
  int steps = 0;
  std::vector<double> differences; ///< successive outer differences on the accepted horizon
  std::vector<double> ratios;
  double contraction = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  std::vector<double> horizon_history; ///< T of every attempt
  double psi_norm = 0.0;
  bool within_radius = false;
  double F0_norm = 0.0;      ///< |F(0)|, the first iterate
  double rho1_agreement = 0.0;
  double flux_margin = 0.0, jump_margin = 0.0;
  double ledger = 0.0;       ///< |u+|E^{2+a} + |u-|E^{2+a} + |rho|P^{2+a}
  bool eps_continuation = false;
  std::vector<int> inner_iterations; ///< Picard iterations of each outer step
  VerificationReport verification;
};

struct NonlinearSolution {
  std::vector<PhaseField> u;
  geometry::InterfaceState rho;
  IterateState psi;
  InitialFrame frame;
  NonlinearReport report;
};

/// E^{2+a}(u+) + E^{2+a}(u-) + P^{2+a}(rho).
inline double solution_ledger(const StripGrid& g, const std::vector<PhaseField>& u, const geometry::InterfaceState& rho,
                              double alpha, const holder::HolderOptions& o = {}) {
  std::vector<Field> up, um;
  for (const auto& f : u) {
    up.push_back(f.plus);
    um.push_back(f.minus);
  }
  return holder::e_norm(holder::bulk_series(g, up, rho.tau), 2, alpha, o).e_norm +
         holder::e_norm(holder::bulk_series(g, um, rho.tau), 2, alpha, o).e_norm +
         holder::p_norm(holder::lateral_series(g.lat, rho.levels, rho.tau), alpha, 2, o).p_norm;
}

namespace detail {

enum class OuterStatus { converged, weak_contraction };

inline OuterStatus outer_iterate(IterateState& psi, const InitialFrame& fr, const NonlinearProblem& pr, double eps,
                                 NonlinearReport& rep, bool record_f0) {
  std::vector<double> diffs, ratios;
  double kappa = 0.0;
  bool have = false;
  for (int it = 0;; ++it) {
    if (it >= pr.max_iter) {
      std::ostringstream os;
      os << "outer iteration did not converge in " << pr.max_iter << " iterations (T = " << fr.time.T << ")";
      throw SolverError(os.str(), diffs);
    }
    linear::IterationLedger inner;
    IterateState next = nonlinear_step(psi, fr, pr, eps, &inner);
    rep.inner_iterations.push_back(static_cast<int>(inner.differences.size()));
    if (record_f0 && it == 0) rep.F0_norm = next.norm;
    const double diff = iterate_norm(fr, difference(next, psi).v, difference(next, psi).delta, pr.alpha, pr.holder);
    const double scale = std::max(1.0, next.norm);
    diffs.push_back(diff);
    psi = std::move(next);
    if (diffs.size() >= 2 && diffs[diffs.size() - 2] > 0 && diff > 10 * pr.tol * scale) {
      const double ratio = diff / diffs[diffs.size() - 2];
      ratios.push_back(ratio);
      if (ratio >= pr.kappa_max) return OuterStatus::weak_contraction;
      kappa = std::max(kappa, ratio);
      have = true;
    }
    if (diff <= pr.tol * scale) break;
  }
  rep.differences.insert(rep.differences.end(), diffs.begin(), diffs.end());
  rep.ratios.insert(rep.ratios.end(), ratios.begin(), ratios.end());
  if (have) rep.contraction = std::isnan(rep.contraction) ? kappa : std::max(rep.contraction, kappa);
  rep.iterations += static_cast<int>(diffs.size());
  return OuterStatus::converged;
}

} // namespace detail

/// Outer fixed point from psi = 0. The horizon is halved (time step kept) while the
/// measured contraction factor reaches kappa_max. With eps > 0 a final pass at eps = 0
/// continues from the regularised fixed point.
inline NonlinearSolution solve_nonlinear(NonlinearProblem pr) {
  pr.validate();
  pr.cutoff_horizon = pr.eta_horizon();
  NonlinearSolution sol;
  auto& rep = sol.report;
  for (int halvings = 0;; ++halvings) {
    rep.horizon_history.push_back(pr.T);
    sol.frame = build_initial_frame(pr);
    sol.psi = IterateState::zero(sol.frame);
    NonlinearReport attempt;
    attempt.horizon_history = rep.horizon_history;
    auto status = detail::outer_iterate(sol.psi, sol.frame, pr, pr.eps, attempt, true);
    if (status == detail::OuterStatus::converged && pr.eps > 0 && pr.continue_to_zero) {
      attempt.eps_continuation = true;
      status = detail::outer_iterate(sol.psi, sol.frame, pr, 0.0, attempt, false);
    }
    if (status == detail::OuterStatus::converged) {
      rep = std::move(attempt);
      break;
    }
    if (halvings >= pr.max_halvings || pr.steps / 2 < 4) {
      std::ostringstream os;
      os << "no outer contraction after " << halvings << " halvings of the horizon (T = " << pr.T << ")";
      throw SolverError(os.str(), attempt.differences);
    }
    pr.T /= 2;
    pr.steps /= 2;
  }
  rep.T_accepted = pr.T;
  rep.steps = pr.steps;
  rep.psi_norm = sol.psi.norm;
  rep.within_radius = sol.psi.norm <= pr.radius;
  rep.rho1_agreement = sol.frame.rho1_agreement;
  rep.flux_margin = sol.frame.flux_margin;
  rep.jump_margin = sol.frame.jump_margin;
  auto [u, rho] = reconstruct(sol.psi, sol.frame, pr);
  sol.u = std::move(u);
  sol.rho = std::move(rho);
  rep.verification = verify_solution(sol.u, sol.rho, pr);
  rep.ledger = solution_ledger(sol.frame.grid, sol.u, sol.rho, pr.alpha, pr.holder);
  return sol;
}

} // namespace muskat::nonlinear
