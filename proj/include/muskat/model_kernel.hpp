#pragma once

// Half-space model problem with constant coefficients: kernels, per-mode
// evolution of the interface and the full (u+, u-, rho) reconstruction.

#include "muskat/core.hpp"
#include "muskat/fft.hpp"
#include "muskat/geometry.hpp"
#include "muskat/holder.hpp"

#include <functional>
#include <limits>

namespace muskat::kernel {

struct ModelParams {
  double a_plus = 1.0;
  double a_minus = 1.0;
  double m = 1.0;
  double A = 2.0;
  std::array<double, 2> h_plus{0.0, 0.0};
  std::array<double, 2> h_minus{0.0, 0.0};
  double eps = 0.0;

  void validate() const {
    MUSKAT_REQUIRE(a_plus > 0 && a_minus > 0, "flux coefficients a+ and a- must be positive");
    MUSKAT_REQUIRE(A > 0, "jump coefficient A must be positive");
    MUSKAT_REQUIRE(m > 0, "mobility m must be positive");
    MUSKAT_REQUIRE(eps >= 0 && eps <= 1, "eps must lie in [0,1], got " << eps);
  }
};

struct ReducedParams {
  std::array<double, 2> H{0.0, 0.0};
  double B = 0.0;
  /// weights w+ , w- with f~ = w+ F3+ + w- F3-; w- alone is the f3- scaling constant.
  double w_plus = 0.0;
  double w_minus = 0.0;
};

inline ReducedParams reduce_params(const ModelParams& p) {
  p.validate();
  const double s = 1.0 / p.a_plus + 1.0 / p.a_minus;
  ReducedParams r;
  r.B = p.A / s;
  for (int i = 0; i < 2; ++i) r.H[i] = (p.h_plus[i] / p.a_plus + p.h_minus[i] / p.a_minus) / s;
  r.w_plus = 1.0 / (p.a_plus * s);
  r.w_minus = 1.0 / (p.a_minus * s);
  return r;
}

/// Heat kernel (4 pi eps t)^{-d/2} exp(-r2/(4 eps t)) on R^d, d = N-1.
inline double gamma_eps(int N, double r2, double t, double eps) {
  MUSKAT_REQUIRE(t > 0, "gamma_eps needs t > 0, got " << t);
  MUSKAT_REQUIRE(eps > 0, "gamma_eps needs eps > 0, got " << eps);
  const double d = N - 1;
  return std::pow(4 * pi * eps * t, -d / 2) * std::exp(-r2 / (4 * eps * t));
}

/// Poisson kernel c_N B t / (r2 + B^2 t^2)^{N/2}, c_N = Gamma(N/2) / pi^{N/2}.
inline double poisson_kernel_G(int N, double r2, double t, double B) {
  MUSKAT_REQUIRE(t > 0, "poisson_kernel_G needs t > 0, got " << t);
  MUSKAT_REQUIRE(B > 0, "poisson_kernel_G needs B > 0, got " << B);
  const double cN = std::tgamma(N / 2.0) / std::pow(pi, N / 2.0);
  return cN * B * t / std::pow(r2 + B * B * t * t, N / 2.0);
}

enum class KernelMethod { fourier, convolution };

/// K_eps(., t) sampled on a lateral lattice centred at index 0 (minimum-image coordinates).
struct KernelGrid {
  LateralGrid grid;
  double t = 1.0;
  Field K;
  std::array<Field, 2> grad;
  KernelMethod method = KernelMethod::fourier;
  int refinement = 1; ///< oversampling factor used internally

  double coord(int i, int axis = 0) const {
    const int n = grid.n[axis];
    return (i < (n + 1) / 2 ? i : i - n) * grid.h();
  }
  double integral(const Field& f) const {
    double s = 0;
    for (double v : f) s += v;
    return s * grid.cell_volume();
  }
};

struct KernelOptions {
  double decay_tol = 1e-16;        ///< tail size at the resolved wavenumber
  std::size_t max_points = 1u << 22; ///< cap on internal lattice size
};

namespace detail {

inline double symbol_decay(double k, double t, double eps, double B) { return (eps * k * k + B * k) * t; }

/// Smallest decay exponent of Gamma^(eta) G^(k - eta) over eta in [0, k]: the aliasing
/// size of a lattice quadrature of Gamma * G at wavenumber k.
inline double split_decay(double k, double t, double eps, double B) {
  const double eta = eps > 0 ? std::min(k, B / (2 * eps)) : 0.0;
  return (eps * eta * eta + B * (k - eta)) * t;
}

/// Smallest power-of-two refinement s such that the relevant decay reaches tol at
/// wavenumber kfac * pi * n * s / L. Throws naming the scale that forces the refinement.
inline int refinement_for(const LateralGrid& g, double t, double eps, double B, double kfac, const KernelOptions& o,
                          bool split = false) {
  const double need = -std::log(o.decay_tol);
  int s = 1;
  while (true) {
    const double k = kfac * pi * g.n[0] * s / g.L;
    if ((split ? split_decay(k, t, eps, B) : symbol_decay(k, t, eps, B)) >= need) return s;
    const std::size_t pts = static_cast<std::size_t>(std::pow(g.n[0] * 2.0 * s, g.dim));
    if (pts > o.max_points) {
      const bool eps_limited = split ? (eps > 0 && B / (2 * eps) >= k) : eps * k >= B;
      std::ostringstream os;
      os << "lattice too coarse: ";
      if (eps_limited)
        os << "epsilon-scale sqrt(eps t) = " << std::sqrt(eps * t);
      else
        os << "B-scale B t = " << B * t;
      os << " is not resolved at the largest allowed wavenumber " << k;
      throw DomainError(os.str());
    }
    s *= 2;
  }
}

inline LateralGrid refined(const LateralGrid& g, int s) { return LateralGrid(g.dim, g.n[0] * s, g.L); }

inline Field subsample(const LateralGrid& fine, const LateralGrid& coarse, int s, const Field& f) {
  Field out(coarse.size());
  for (int i1 = 0; i1 < coarse.n[1]; ++i1)
    for (int i0 = 0; i0 < coarse.n[0]; ++i0)
      out[coarse.index(i0, i1)] = f[fine.index(i0 * s, coarse.dim == 2 ? i1 * s : 0)];
  return out;
}

/// Periodised 1D heat kernel and its derivative.
inline std::pair<double, double> gamma_periodic_1d(double x, double L, double eps, double t) {
  const double s2 = 4 * eps * t;
  const int nmax = static_cast<int>(std::ceil(std::sqrt(s2 * 45.0) / L)) + 1;
  double v = 0.0, d = 0.0;
  for (int n = -nmax; n <= nmax; ++n) {
    const double y = x + n * L;
    const double e = std::exp(-y * y / s2);
    v += e;
    d += -2 * y / s2 * e;
  }
  const double c = 1.0 / std::sqrt(pi * s2);
  return {c * v, c * d};
}

/// Periodised Poisson kernel in d = 1 (closed form) and its derivative.
inline std::pair<double, double> poisson_periodic_1d(double x, double L, double B, double t) {
  const double c = 2 * pi * B * t / L;
  const double th = 2 * pi * x / L;
  const double den = std::cosh(c) - std::cos(th);
  return {std::sinh(c) / (L * den), -std::sinh(c) * std::sin(th) * (2 * pi / L) / (L * den * den)};
}

/// Periodised Poisson kernel in d = 2 on an n x n lattice of period L, via the
/// closed-form row sum plus a Bessel-K expansion of the remaining lateral images.
inline void poisson_periodic_2d(const LateralGrid& g, double B, double t, Field& G, Field& G1, Field& G2) {
  const int n = g.n[0];
  const double L = g.L, h = g.h(), bt = B * t;
  const double c = 2 * pi * bt / L;
  G.assign(g.size(), 0.0);
  G1.assign(g.size(), 0.0);
  G2.assign(g.size(), 0.0);
  const double q1 = 2 * pi / L;
  const double amax = 40.0 / q1;
  const int n2max = static_cast<int>(std::ceil(amax / L)) + 1;
  const int mmax = static_cast<int>(std::ceil(40.0 / (q1 * bt))) + 1;
  std::vector<double> Cm(mmax + 1), Dm(mmax + 1);
  // cos(q_m x1) and sin(q_m x1) at lattice columns
  std::vector<double> cosv(static_cast<std::size_t>(n) * (mmax + 1)), sinv(cosv.size());
  for (int i0 = 0; i0 < n; ++i0)
    for (int m = 0; m <= mmax; ++m) {
      cosv[static_cast<std::size_t>(i0) * (mmax + 1) + m] = std::cos(q1 * m * i0 * h);
      sinv[static_cast<std::size_t>(i0) * (mmax + 1) + m] = std::sin(q1 * m * i0 * h);
    }
  const double pref = bt / (pi * L);
  for (int i1 = 0; i1 < n; ++i1) {
    const double x2 = i1 * h;
    std::fill(Cm.begin(), Cm.end(), 0.0);
    std::fill(Dm.begin(), Dm.end(), 0.0);
    for (int n2 = -n2max; n2 <= n2max; ++n2) {
      const double y = x2 + n2 * L;
      const double a = std::sqrt(y * y + bt * bt);
      for (int m = 1; m <= mmax; ++m) {
        const double q = q1 * m;
        const double z = q * a;
        if (z > 40.0) break;
        const double K1 = std::cyl_bessel_k(1.0, z);
        const double K0 = std::cyl_bessel_k(0.0, z);
        const double F = 2 * q / a * K1;
        const double dK1 = -K0 - K1 / z;
        const double Fa = 2 * q * (-K1 / (a * a) + q / a * dK1);
        Cm[m] += F;
        Dm[m] += Fa * y / a;
      }
    }
    const double th = 2 * pi * x2 / L;
    const double den = std::cosh(c) - std::cos(th);
    const double row = std::sinh(c) / (L * L * den);
    const double drow = -std::sinh(c) * std::sin(th) * (2 * pi / L) / (L * L * den * den);
    for (int i0 = 0; i0 < n; ++i0) {
      double v = 0, d1 = 0, d2 = 0;
      const double* cs = &cosv[static_cast<std::size_t>(i0) * (mmax + 1)];
      const double* sn = &sinv[static_cast<std::size_t>(i0) * (mmax + 1)];
      for (int m = 1; m <= mmax; ++m) {
        v += Cm[m] * cs[m];
        d1 += -Cm[m] * q1 * m * sn[m];
        d2 += Dm[m] * cs[m];
      }
      const std::size_t p = g.index(i0, i1);
      G[p] = row + pref * v;
      G1[p] = pref * d1;
      G2[p] = drow + pref * d2;
    }
  }
}

inline Field cyclic_convolution(const LateralGrid& g, const Field& a, const Field& b) {
  const Spectral& sp = spectral_for(g);
  CField A = sp.forward(a), Bc = sp.forward(b);
  for (std::size_t p = 0; p < A.size(); ++p) A[p] *= Bc[p];
  Field r = sp.backward_real(A);
  for (double& v : r) v *= g.cell_volume();
  return r;
}

} // namespace detail

/// Fourier-multiplier derivative D^r K_eps on the lattice, r = (r0, r1).
inline Field kernel_derivative_fourier(const LateralGrid& g, double t, double eps, double B, std::array<int, 2> r,
                                       const KernelOptions& o = {}) {
  MUSKAT_REQUIRE(t > 0, "kernel needs t > 0");
  const int s = detail::refinement_for(g, t, eps, B, 1.0, o);
  const LateralGrid f = detail::refined(g, s);
  const Spectral& sp = spectral_for(f);
  CField c(f.size());
  for (std::size_t p = 0; p < c.size(); ++p) {
    const auto& k = sp.k(p);
    const double kk = sp.kabs(p);
    cplx v = std::exp(-(eps * kk * kk + B * kk) * t);
    for (int a = 0; a < 2; ++a)
      for (int q = 0; q < r[a]; ++q) v *= cplx(0.0, k[a]);
    c[p] = v;
  }
  CField x = sp.backward(c);
  Field out(f.size());
  const double scale = static_cast<double>(f.size()) / std::pow(f.L, f.dim);
  for (std::size_t p = 0; p < out.size(); ++p) out[p] = x[p].real() * scale;
  return detail::subsample(f, g, s, out);
}

/// K_eps(., t) with gradient. `fourier` sums the periodised symbol; `convolution`
/// convolves closed-form periodised Gamma_eps and G on a refined quadrature lattice.
inline KernelGrid kernel_K_eps(const LateralGrid& g, double t, const ModelParams& p, KernelMethod method,
                               const KernelOptions& o = {}) {
  MUSKAT_REQUIRE(t > 0, "kernel needs t > 0, got " << t);
  const double B = reduce_params(p).B;
  const double eps = p.eps;
  KernelGrid out;
  out.grid = g;
  out.t = t;
  out.method = method;
  if (method == KernelMethod::fourier) {
    out.K = kernel_derivative_fourier(g, t, eps, B, {0, 0}, o);
    out.grad[0] = kernel_derivative_fourier(g, t, eps, B, {1, 0}, o);
    out.grad[1] = g.dim == 2 ? kernel_derivative_fourier(g, t, eps, B, {0, 1}, o) : Field(g.size(), 0.0);
    out.refinement = detail::refinement_for(g, t, eps, B, 1.0, o);
    return out;
  }
  // Trapezoid quadrature of a periodic convolution is exact up to the symbol at 2 pi / h_q.
  const int s = eps > 0 ? detail::refinement_for(g, t, eps, B, 2.0, o, true) : 1;
  const LateralGrid f = detail::refined(g, s);
  out.refinement = s;
  Field G(f.size()), G1(f.size(), 0.0), G2(f.size(), 0.0);
  if (f.dim == 1) {
    for (int i = 0; i < f.n[0]; ++i) {
      auto [v, d] = detail::poisson_periodic_1d(i * f.h(), f.L, B, t);
      G[i] = v;
      G1[i] = d;
    }
  } else {
    detail::poisson_periodic_2d(f, B, t, G, G1, G2);
  }
  if (eps == 0.0) {
    out.K = detail::subsample(f, g, s, G);
    out.grad[0] = detail::subsample(f, g, s, G1);
    out.grad[1] = detail::subsample(f, g, s, G2);
    return out;
  }
  std::vector<double> g1v(f.n[0]), g1d(f.n[0]);
  for (int i = 0; i < f.n[0]; ++i) {
    auto [v, d] = detail::gamma_periodic_1d(i * f.h(), f.L, eps, t);
    g1v[i] = v;
    g1d[i] = d;
  }
  Field Gam(f.size()), Gam1(f.size()), Gam2(f.size(), 0.0);
  for (int i1 = 0; i1 < f.n[1]; ++i1)
    for (int i0 = 0; i0 < f.n[0]; ++i0) {
      const std::size_t q = f.index(i0, i1);
      const double other = f.dim == 2 ? g1v[i1] : 1.0;
      Gam[q] = g1v[i0] * other;
      Gam1[q] = g1d[i0] * other;
      if (f.dim == 2) Gam2[q] = g1v[i0] * g1d[i1];
    }
  out.K = detail::subsample(f, g, s, detail::cyclic_convolution(f, Gam, G));
  out.grad[0] = detail::subsample(f, g, s, detail::cyclic_convolution(f, Gam1, G));
  out.grad[1] = f.dim == 2 ? detail::subsample(f, g, s, detail::cyclic_convolution(f, Gam2, G)) : Field(g.size(), 0.0);
  return out;
}

struct BoundFit {
  double eps = 0.0;
  int order = 0;
  double C = 0.0;
};

struct BoundReport {
  std::vector<BoundFit> fits;
  std::array<double, 3> spread{1.0, 1.0, 1.0}; ///< max C / min C across eps per order
  double region_radius = 0.0;
  std::vector<double> times;
};

/// Smallest C with |D^r K_eps| <= C (|x|^2 + t^2)^{-(N-1)/2 - |r|} over |x| <= radius and the
/// given times, per eps and per |r| <= 2 (maximised over multi-indices of equal order).
inline BoundReport kernel_bound_check(const LateralGrid& g, double B, const std::vector<double>& eps_sweep,
                                      const std::vector<double>& times, double radius, const KernelOptions& o = {}) {
  BoundReport rep;
  rep.region_radius = radius;
  rep.times = times;
  const int d = g.dim;
  std::vector<std::array<int, 2>> idx[3];
  idx[0] = {{0, 0}};
  idx[1] = d == 2 ? std::vector<std::array<int, 2>>{{1, 0}, {0, 1}} : std::vector<std::array<int, 2>>{{1, 0}};
  idx[2] = d == 2 ? std::vector<std::array<int, 2>>{{2, 0}, {1, 1}, {0, 2}} : std::vector<std::array<int, 2>>{{2, 0}};
  KernelGrid coords;
  coords.grid = g;
  for (double eps : eps_sweep)
    for (int r = 0; r <= 2; ++r) {
      double C = 0.0;
      for (double t : times)
        for (const auto& mi : idx[r]) {
          Field D = kernel_derivative_fourier(g, t, eps, B, mi, o);
          for (int i1 = 0; i1 < g.n[1]; ++i1)
            for (int i0 = 0; i0 < g.n[0]; ++i0) {
              const double x0 = coords.coord(i0, 0), x1 = d == 2 ? coords.coord(i1, 1) : 0.0;
              const double r2 = x0 * x0 + x1 * x1;
              if (r2 > radius * radius) continue;
              const double w = std::pow(r2 + t * t, (d / 2.0) + r);
              C = std::max(C, std::abs(D[g.index(i0, i1)]) * w);
            }
        }
      rep.fits.push_back({eps, r, C});
    }
  for (int r = 0; r <= 2; ++r) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& f : rep.fits)
      if (f.order == r) {
        lo = std::min(lo, f.C);
        hi = std::max(hi, f.C);
      }
    rep.spread[r] = hi / lo;
  }
  return rep;
}

/// phi1(z) = (e^z - 1)/z and phi2(z) = (e^z - 1 - z)/z^2, series near 0.
inline std::pair<cplx, cplx> phi12(cplx z) {
  if (std::abs(z) < 0.25) {
    cplx p1 = 0.0, p2 = 0.0, term = 1.0;
    for (int k = 0; k < 14; ++k) {
      // term = z^k / k!
      p1 += term / static_cast<double>(k + 1);
      p2 += term / static_cast<double>((k + 1) * (k + 2));
      term *= z / static_cast<double>(k + 1);
    }
    return {p1, p2};
  }
  const cplx e = std::exp(z);
  return {(e - 1.0) / z, (e - 1.0 - z) / (z * z)};
}

/// Per-mode Duhamel integration of rho_t = r(k) rho + f with f piecewise linear in time.
/// `f` holds levels n0..n0+len-1 of the forcing; the result has the same levels with
/// rho(level n0) = rho0.
inline std::vector<Field> exponential_integrator(const Spectral& sp, const std::vector<Field>& f, double tau,
                                                 const std::function<cplx(std::size_t)>& rate, const Field& rho0) {
  const std::size_t P = sp.size();
  std::vector<cplx> E(P), F1(P), F2(P);
  for (std::size_t p = 0; p < P; ++p) {
    const cplx z = rate(p) * tau;
    E[p] = std::exp(z);
    auto [a, b] = phi12(z);
    F1[p] = tau * a;
    F2[p] = tau * b;
  }
  std::vector<Field> out(f.size());
  out[0] = rho0;
  CField r = sp.forward(rho0);
  CField fa = sp.forward(f[0]);
  for (std::size_t n = 1; n < f.size(); ++n) {
    CField fb = sp.forward(f[n]);
    for (std::size_t p = 0; p < P; ++p) r[p] = E[p] * r[p] + F1[p] * fa[p] + F2[p] * (fb[p] - fa[p]);
    out[n] = sp.backward_real(r);
    fa = std::move(fb);
  }
  return out;
}

/// Per-mode rate of the reduced interface equation: -i H.k - eps k^2 - B |k|.
/// Nyquist modes carry no drift so that real data stays real.
inline std::function<cplx(std::size_t)> model_rate(const Spectral& sp, const ModelParams& p) {
  const ReducedParams r = reduce_params(p);
  return [&sp, r, eps = p.eps](std::size_t q) {
    const auto& k = sp.k(q);
    const double drift = (sp.nyquist(q, 0) ? 0.0 : r.H[0] * k[0]) + (sp.nyquist(q, 1) ? 0.0 : r.H[1] * k[1]);
    return cplx(-eps * sp.k2(q) - r.B * sp.kabs(q), -drift);
  };
}

inline void require_dotted(const Field& f0, const char* what) {
  MUSKAT_REQUIRE(sup_abs(f0) <= 1e-12, what << " does not vanish at t = 0 (sup " << sup_abs(f0) << ")");
}

/// rho with rho_t - eps lap rho - B lap(Lambda rho) + H.grad rho = f, rho(0) = 0.
inline geometry::InterfaceState evolve_interface_model(const LateralGrid& g, const std::vector<Field>& f, double tau,
                                                       const ModelParams& p) {
  MUSKAT_REQUIRE(!f.empty(), "forcing has no time levels");
  require_dotted(f[0], "interface forcing");
  const Spectral& sp = spectral_for(g);
  geometry::InterfaceState out(g, tau, static_cast<int>(f.size()), "rho");
  out.levels = exponential_integrator(sp, f, tau, model_rate(sp, p), Field(g.size(), 0.0));
  return out;
}

/// Single-mode forcing e^{i k.x} g(t): Duhamel integral of the kernel form evaluated by
/// composite Gauss-Legendre quadrature in tau with g sampled exactly. Returns the mode
/// amplitude at time t.
inline cplx evolve_mode_quadrature(std::array<double, 2> k, const ModelParams& p, const std::function<double(double)>& g,
                                   double t, int panels = 64) {
  const ReducedParams r = reduce_params(p);
  const double kk = std::hypot(k[0], k[1]);
  const cplx rate(-p.eps * kk * kk - r.B * kk, -(r.H[0] * k[0] + r.H[1] * k[1]));
  static const double xg[5] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                               0.9061798459386640};
  static const double wg[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889, 0.4786286704993665,
                               0.2369268850561891};
  cplx s = 0.0;
  const double hp = t / panels;
  for (int q = 0; q < panels; ++q)
    for (int j = 0; j < 5; ++j) {
      const double tau = q * hp + (xg[j] + 1) * hp / 2;
      s += wg[j] * hp / 2 * std::exp(rate * tau) * g(t - tau);
    }
  return s;
}

/// Riesz-type operator with symbol 1/|k| on the torus; zero mode mapped to zero.
inline Field riesz_lambda(const LateralGrid& g, const Field& rho) { return spectral_for(g).riesz(rho); }

enum class BoundaryCondition { dirichlet, neumann };

/// Half-space grid: lateral torus times z in [0, Z] with layers j = 0..Mz.
struct HalfSpaceGrid {
  LateralGrid lat;
  int Mz = 64;
  double Z = 4.0;
  double hz() const { return Z / Mz; }
  std::size_t size() const { return static_cast<std::size_t>(lat.size()) * (Mz + 1); }
  std::size_t at(int p, int j) const { return static_cast<std::size_t>(p) + static_cast<std::size_t>(lat.size()) * j; }
};

/// Bounded solution of -lap u = f in z > 0 with u = F or du/dz = F at z = 0, per lateral
/// mode with finite differences in z and the decay closure u_z = -|k| u at z = Z.
inline Field halfspace_solve(const HalfSpaceGrid& g, const Field& f, const Field& F, BoundaryCondition bc) {
  const Spectral& sp = spectral_for(g.lat);
  const int P = g.lat.size(), M = g.Mz;
  const double h = g.hz();
  MUSKAT_REQUIRE(f.size() == g.size() && static_cast<int>(F.size()) == P, "half-space data has wrong size");
  std::vector<CField> fh(M + 1);
  for (int j = 0; j <= M; ++j) fh[j] = sp.forward(layer(StripGrid{g.lat, M}, f, j));
  CField Fh = sp.forward(F);
  if (bc == BoundaryCondition::neumann) {
    double mass = 0.0;
    for (int j = 0; j <= M; ++j) mass += (j == 0 || j == M ? 0.5 : 1.0) * std::abs(fh[j][0]) * h;
    const double scale = std::max(1.0, sup_abs(F) * P);
    MUSKAT_REQUIRE(std::abs(Fh[0]) <= 1e-12 * scale && mass <= 1e-12 * scale,
                   "Neumann zero mode with nonzero mean data has no bounded solution on the periodic strip");
  }
  std::vector<CField> uh(M + 1, CField(P));
  std::vector<double> a(M + 1), b(M + 1), c(M + 1);
  std::vector<cplx> d(M + 1);
  for (int p = 0; p < P; ++p) {
    const double k = sp.kabs(p), k2 = sp.k2(p);
    if (p == 0 && bc == BoundaryCondition::neumann) continue;
    for (int j = 0; j <= M; ++j) {
      a[j] = -1 / (h * h);
      c[j] = -1 / (h * h);
      b[j] = 2 / (h * h) + k2;
      d[j] = fh[j][p];
    }
    if (bc == BoundaryCondition::dirichlet) {
      b[0] = 1;
      c[0] = 0;
      d[0] = Fh[p];
    } else {
      c[0] = -2 / (h * h);
      d[0] = fh[0][p] - 2.0 * Fh[p] / h;
    }
    a[M] = -2 / (h * h);
    b[M] = 2 / (h * h) + 2 * k / h + k2;
    c[M] = 0;
    solve_tridiagonal(a, b, c, d);
    for (int j = 0; j <= M; ++j) uh[j][p] = d[j];
  }
  Field u(g.size());
  for (int j = 0; j <= M; ++j) {
    Field row = sp.backward_real(uh[j]);
    for (int p = 0; p < P; ++p) u[g.at(p, j)] = row[p];
  }
  return u;
}

/// Right-hand sides of the model problem on a time lattice. Minus-phase layer j sits
/// at x_N = -j*hz.
struct ModelRHS {
  HalfSpaceGrid grid;
  TimeGrid time;
  std::vector<Field> f1_plus, f1_minus; // bulk, per level
  std::vector<Field> f2, f3_plus, f3_minus; // lateral, per level

  static ModelRHS zeros(const HalfSpaceGrid& g, const TimeGrid& tg) {
    ModelRHS r{g, tg, {}, {}, {}, {}, {}};
    r.f1_plus.assign(tg.levels(), Field(g.size(), 0.0));
    r.f1_minus = r.f1_plus;
    r.f2.assign(tg.levels(), Field(g.lat.size(), 0.0));
    r.f3_plus = r.f2;
    r.f3_minus = r.f2;
    return r;
  }
};

struct ModelSolution {
  std::vector<Field> u_plus, u_minus;
  geometry::InterfaceState rho;
  double jump_residual = 0.0;       ///< u+ - u- + A rho - f2 at x_N = 0
  double kinematic_plus = 0.0;      ///< "+" interface equation
  double kinematic_minus = 0.0;     ///< "-" interface equation
  double bulk_residual = 0.0;       ///< -lap_h u - f1 (finite-difference consistency, diagnostic)
  bool periodisation_ok = true;     ///< support + drift + kernel spread <= L/2
};

/// Solves the half-space model problem: auxiliary Dirichlet solves absorb f1 and f2,
/// rho follows from the reduced interface equation, the traces g+- from the "+"
/// equation and the jump, and u+- extend the traces by e^{-|k| |x_N|}.
inline ModelSolution model_solve_full(const ModelRHS& rhs, const ModelParams& p, double support_radius = 0.0) {
  p.validate();
  const ReducedParams r = reduce_params(p);
  const HalfSpaceGrid& g = rhs.grid;
  const Spectral& sp = spectral_for(g.lat);
  const int P = g.lat.size(), M = g.Mz, NL = rhs.time.levels();
  const double h = g.hz(), tau = rhs.time.tau();
  MUSKAT_REQUIRE(static_cast<int>(rhs.f3_plus.size()) == NL, "rhs has wrong number of time levels");
  require_dotted(rhs.f2[0], "f2");
  require_dotted(rhs.f3_plus[0], "f3+");
  require_dotted(rhs.f3_minus[0], "f3-");
  require_dotted(rhs.f1_plus[0], "f1+");
  require_dotted(rhs.f1_minus[0], "f1-");
  const StripGrid col{g.lat, M};

  ModelSolution sol;
  std::vector<Field> Up(NL), Um(NL), F3p(NL), F3m(NL), ft(NL);
  for (int n = 0; n < NL; ++n) {
    Up[n] = halfspace_solve(g, rhs.f1_plus[n], rhs.f2[n], BoundaryCondition::dirichlet);
    Um[n] = halfspace_solve(g, rhs.f1_minus[n], Field(P, 0.0), BoundaryCondition::dirichlet);
    F3p[n] = rhs.f3_plus[n];
    F3m[n] = rhs.f3_minus[n];
    ft[n].resize(P);
    for (int q = 0; q < P; ++q) {
      const double dUp = geometry::Column::d1(&Up[n][q], P, 0, M, h);
      const double dUm = -geometry::Column::d1(&Um[n][q], P, 0, M, h);
      F3p[n][q] -= p.a_plus * dUp;
      F3m[n][q] -= p.a_minus * dUm;
      ft[n][q] = r.w_plus * F3p[n][q] + r.w_minus * F3m[n][q];
    }
  }
  sol.rho = evolve_interface_model(g.lat, ft, tau, p);

  const auto rate = model_rate(sp, p);
  sol.u_plus.resize(NL);
  sol.u_minus.resize(NL);
  for (int n = 0; n < NL; ++n) {
    CField rh = sp.forward(sol.rho.levels[n]);
    CField fh = sp.forward(ft[n]);
    CField F3ph = sp.forward(F3p[n]);
    CField F3mh = sp.forward(F3m[n]);
    CField gp(P), gm(P), rt(P);
    for (int q = 0; q < P; ++q) {
      rt[q] = rate(q) * rh[q] + fh[q];
      if (q == 0) {
        gm[q] = 0.0;
        gp[q] = -p.A * rh[q];
        continue;
      }
      const auto& k = sp.k(q);
      const double kk = sp.kabs(q);
      const double dp = (sp.nyquist(q, 0) ? 0.0 : p.h_plus[0] * k[0]) + (sp.nyquist(q, 1) ? 0.0 : p.h_plus[1] * k[1]);
      gp[q] = (rt[q] + cplx(p.eps * kk * kk, dp) * rh[q] - F3ph[q]) / (p.a_plus * kk);
      gm[q] = gp[q] + p.A * rh[q];
    }
    sol.u_plus[n] = Up[n];
    sol.u_minus[n] = Um[n];
    for (int j = 0; j <= M; ++j) {
      CField ep(P), em(P);
      for (int q = 0; q < P; ++q) {
        const double e = std::exp(-sp.kabs(q) * j * h);
        ep[q] = gp[q] * e;
        em[q] = gm[q] * e;
      }
      Field a = sp.backward_real(ep), b = sp.backward_real(em);
      for (int q = 0; q < P; ++q) {
        sol.u_plus[n][g.at(q, j)] += a[q];
        sol.u_minus[n][g.at(q, j)] += b[q];
      }
    }
    // residuals: FD normal derivative of the auxiliary part, exact modal derivative of the extension
    CField dpl(P), dmi(P);
    for (int q = 0; q < P; ++q) {
      dpl[q] = -sp.kabs(q) * gp[q];
      dmi[q] = sp.kabs(q) * gm[q];
    }
    Field dExtP = sp.backward_real(dpl), dExtM = sp.backward_real(dmi);
    Field rho_t = sp.backward_real(rt);
    Field lap = sp.laplacian(sol.rho.levels[n]);
    auto grad = sp.gradient(sol.rho.levels[n]);
    for (int q = 0; q < P; ++q) {
      const double jump = sol.u_plus[n][q] - sol.u_minus[n][q] + p.A * sol.rho.levels[n][q] - rhs.f2[n][q];
      sol.jump_residual = std::max(sol.jump_residual, std::abs(jump));
      const double uNp = geometry::Column::d1(&Up[n][q], P, 0, M, h) + dExtP[q];
      const double uNm = -geometry::Column::d1(&Um[n][q], P, 0, M, h) + dExtM[q];
      const double common = rho_t[q] - p.eps * lap[q];
      const double kp = common + p.a_plus * uNp + p.h_plus[0] * grad[0][q] + p.h_plus[1] * grad[1][q] - rhs.f3_plus[n][q];
      const double km =
          common + p.a_minus * uNm + p.h_minus[0] * grad[0][q] + p.h_minus[1] * grad[1][q] - rhs.f3_minus[n][q];
      sol.kinematic_plus = std::max(sol.kinematic_plus, std::abs(kp));
      sol.kinematic_minus = std::max(sol.kinematic_minus, std::abs(km));
    }
    // -lap_h u - f1 at interior layers
    for (int side = 0; side < 2; ++side) {
      const Field& u = side == 0 ? sol.u_plus[n] : sol.u_minus[n];
      const Field& f1 = side == 0 ? rhs.f1_plus[n] : rhs.f1_minus[n];
      for (int j = 1; j < M; ++j) {
        Field lat = sp.laplacian(layer(col, u, j));
        for (int q = 0; q < P; ++q) {
          const double uzz = (u[g.at(q, j + 1)] - 2 * u[g.at(q, j)] + u[g.at(q, j - 1)]) / (h * h);
          sol.bulk_residual = std::max(sol.bulk_residual, std::abs(-lat[q] - uzz - f1[g.at(q, j)]));
        }
      }
    }
  }
  const double T = rhs.time.T;
  const double spread = support_radius + std::hypot(r.H[0], r.H[1]) * T + 6 * std::max(std::sqrt(p.eps * T), r.B * T);
  sol.periodisation_ok = spread <= g.lat.L / 2;
  return sol;
}

/// Ratio of the left- and right-hand sides of the model-problem estimate in the
/// discrete estimators (eps-weighted P^{3+a} term included).
struct EstimateLedger {
  double lhs = 0.0, rhs = 0.0, ratio = 0.0;
};

inline EstimateLedger model_estimate_ledger(const ModelRHS& data, const ModelSolution& s, double eps, double alpha,
                                            const holder::HolderOptions& o = {}) {
  const StripGrid col{data.grid.lat, data.grid.Mz};
  // the half-space grid spacing differs from 1/M; rescale via a bulk grid function
  auto bulk = [&](const std::vector<Field>& v) {
    holder::GridFunction gf = holder::bulk_series(col, v, data.time.tau());
    gf.h.back() = data.grid.hz();
    return gf;
  };
  auto lat = [&](const std::vector<Field>& v) { return holder::lateral_series(data.grid.lat, v, data.time.tau()); };
  EstimateLedger L;
  L.lhs = holder::e_norm(bulk(s.u_plus), 2, alpha, o).e_norm + holder::e_norm(bulk(s.u_minus), 2, alpha, o).e_norm +
          holder::p_norm(lat(s.rho.levels), alpha, 2, o).p_norm +
          eps * holder::p_norm(lat(s.rho.levels), alpha, 3, o).p_norm;
  L.rhs = holder::e_norm(bulk(data.f1_plus), 0, alpha, o).e_norm + holder::e_norm(bulk(data.f1_minus), 0, alpha, o).e_norm +
          holder::e_norm(lat(data.f2), 2, alpha, o).e_norm + holder::e_norm(lat(data.f3_plus), 1, alpha, o).e_norm +
          holder::e_norm(lat(data.f3_minus), 1, alpha, o).e_norm;
  L.ratio = L.rhs > 0 ? L.lhs / L.rhs : 0.0;
  return L;
}

} // namespace muskat::kernel
