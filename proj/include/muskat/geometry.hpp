#pragma once

#include "muskat/core.hpp"
#include "muskat/fft.hpp"

#include <cstdio>
#include <ostream>

namespace muskat::geometry {

/// Periodic strip (-1, 1) x torus^{N-1} with the reference interface x_N = 0.
struct DomainSpec {
  int N = 2;
  double L = 1.0;
  double lambda0 = 0.5;
  int lateral_n = 32;
  int vertical_M = 32;

  void validate() const {
    MUSKAT_REQUIRE(N == 2 || N == 3, "dimension N must be 2 or 3, got " << N);
    MUSKAT_REQUIRE(L > 0, "lateral period L must be positive");
    MUSKAT_REQUIRE(lambda0 > 0 && lambda0 <= 0.5, "lambda0 must lie in (0, 1/2], got " << lambda0);
    MUSKAT_REQUIRE(lateral_n >= 4, "lateral resolution must be at least 4");
    MUSKAT_REQUIRE(vertical_M >= 4, "vertical resolution must be at least 4");
  }

  StripGrid grid() const {
    validate();
    return StripGrid{LateralGrid(N - 1, lateral_n, L), vertical_M};
  }
};

/// Even cutoff: 1 on |lambda| <= p0*lambda0, 0 for |lambda| >= lambda0. On the ramp
/// the slope is a constant plateau entered and left through C3 smoothstep corners of
/// relative width c, so chi is C4 with moderate higher derivatives.
class Cutoff {
public:
  struct Jet {
    double value, d1, d2;
  };

  explicit Cutoff(double lambda0 = 0.5, double plateau = 0.2, double corner = 0.35)
      : lambda0_(lambda0), p0_(plateau), c_(corner) {
    MUSKAT_REQUIRE(lambda0 > 0 && lambda0 <= 0.5, "cutoff lambda0 must lie in (0, 1/2]");
    MUSKAT_REQUIRE(plateau > 0 && plateau < 1, "cutoff plateau fraction must lie in (0,1)");
    MUSKAT_REQUIRE(corner > 0 && corner <= 0.5, "cutoff corner width must lie in (0, 1/2]");
    double slope = 0.0;
    const int samples = 20000;
    for (int i = 0; i <= samples; ++i) slope = std::max(slope, std::abs(jet(lambda0 * i / samples).d1));
    max_slope_ = slope;
    MUSKAT_REQUIRE(slope <= 2.0 / lambda0, "cutoff slope " << slope << " exceeds 2/lambda0");
  }

  double lambda0() const { return lambda0_; }
  double plateau() const { return p0_; }
  double max_slope() const { return max_slope_; }

  Jet jet(double lambda) const {
    const double al = std::abs(lambda);
    const double w = (1.0 - p0_) * lambda0_;
    const double s = (al - p0_ * lambda0_) / w;
    if (s <= 0) return {1.0, 0.0, 0.0};
    if (s >= 1) return {0.0, 0.0, 0.0};
    const double A = 1.0 / (1.0 - c_);
    double I, P, dP; // integral of the slope profile, profile, profile derivative
    if (s < c_) {
      const double x = s / c_;
      I = c_ * smooth_int(x);
      P = smooth(x);
      dP = smooth_d1(x) / c_;
    } else if (s > 1 - c_) {
      const double x = (1 - s) / c_;
      I = (1 - c_) - c_ * smooth_int(x);
      P = smooth(x);
      dP = -smooth_d1(x) / c_;
    } else {
      I = c_ / 2 + (s - c_);
      P = 1.0;
      dP = 0.0;
    }
    const double sgn = lambda < 0 ? -1.0 : 1.0;
    return {1.0 - A * I, -sgn * A * P / w, -A * dP / (w * w)};
  }

private:
  // C3 smoothstep 35x^4 - 84x^5 + 70x^6 - 20x^7, its integral and derivative.
  static double smooth(double x) { return x * x * x * x * (35 + x * (-84 + x * (70 - 20 * x))); }
  static double smooth_int(double x) { return x * x * x * x * x * (7 + x * (-14 + x * (10 - 2.5 * x))); }
  static double smooth_d1(double x) { return x * x * x * (140 + x * (-420 + x * (420 - 140 * x))); }

  double lambda0_, p0_, c_;
  double max_slope_ = 0.0;
};

/// (chi, chi').
inline std::pair<double, double> cutoff_chi(const Cutoff& c, double lambda) {
  auto j = c.jet(lambda);
  return {j.value, j.d1};
}

/// Interface height field (rho, sigma or delta) on the lateral torus per time level.
struct InterfaceState {
  LateralGrid grid;
  double tau = 1.0;
  std::vector<Field> levels;
  std::string role = "rho";

  InterfaceState() = default;
  InterfaceState(const LateralGrid& g, double dt, int nlevels, std::string r = "rho")
      : grid(g), tau(dt), levels(nlevels, Field(g.size(), 0.0)), role(std::move(r)) {}

  int count() const { return static_cast<int>(levels.size()); }
  double sup() const {
    double m = 0;
    for (const auto& f : levels) m = std::max(m, sup_abs(f));
    return m;
  }
  void require_admissible(double lambda0) const {
    const double s = sup();
    MUSKAT_REQUIRE(s <= lambda0 / 4 + 1e-14,
                   "interface field '" << role << "' has sup " << s << " above lambda0/4 = " << lambda0 / 4);
  }
};

using Point = std::array<double, 3>;
using Matrix = std::array<std::array<double, 3>, 3>;

/// Value and lateral gradient of one interface level at an arbitrary lateral point.
struct RhoJet {
  double value = 0.0;
  std::array<double, 2> grad{0.0, 0.0};
};

inline RhoJet rho_at(const Field& level, const LateralGrid& g, const Point& x) {
  const Spectral& sp = spectral_for(g);
  auto r = sp.interpolate(sp.forward(level), x[0], g.dim == 2 ? x[1] : 0.0);
  return {r[0], {r[1], r[2]}};
}

/// y = x + e_N chi(x_N) rho(x'). N-th component is index N-1.
inline Point map_e_rho(const DomainSpec& spec, const Cutoff& c, double rho_value, const Point& x) {
  MUSKAT_REQUIRE(std::abs(rho_value) <= c.lambda0() / 4 + 1e-14,
                 "|rho| = " << std::abs(rho_value) << " exceeds lambda0/4; map is not guaranteed bijective");
  Point y = x;
  y[spec.N - 1] += c.jet(x[spec.N - 1]).value * rho_value;
  return y;
}

inline Point map_e_rho(const DomainSpec& spec, const Cutoff& c, const InterfaceState& rho, const Point& x, int level) {
  rho.require_admissible(c.lambda0());
  return map_e_rho(spec, c, rho_at(rho.levels.at(level), rho.grid, x).value, x);
}

/// Inverse of the collar shift by scalar Newton in x_N (monotone since 1 + chi' rho >= 1/2).
inline Point inverse_e_rho(const DomainSpec& spec, const Cutoff& c, double rho_value, const Point& y) {
  const int N = spec.N - 1;
  Point x = y;
  double z = y[N];
  for (int it = 0; it < 60; ++it) {
    auto j = c.jet(z);
    const double F = z + j.value * rho_value - y[N];
    const double dz = F / (1 + j.d1 * rho_value);
    z -= dz;
    if (std::abs(dz) < 1e-16) break;
  }
  x[N] = z;
  return x;
}

/// J_rho = ((dy/dx)^{-1})^T. Entries beyond N are zero.
inline Matrix jacobian_J_rho(const DomainSpec& spec, const Cutoff& c, const RhoJet& rho, const Point& x) {
  const int N = spec.N;
  auto j = c.jet(x[N - 1]);
  const double D = 1 + j.d1 * rho.value;
  MUSKAT_REQUIRE(D > 0, "dy/dx is singular (1 + chi' rho = " << D << ")");
  Matrix J{};
  for (int i = 0; i < N - 1; ++i) {
    J[i][i] = 1.0;
    J[i][N - 1] = -j.value * rho.grad[i] / D;
  }
  J[N - 1][N - 1] = 1.0 / D;
  return J;
}

inline Matrix jacobian_J_rho(const DomainSpec& spec, const Cutoff& c, const InterfaceState& rho, const Point& x,
                             int level) {
  return jacobian_J_rho(spec, c, rho_at(rho.levels.at(level), rho.grid, x), x);
}

/// det(dy/dx) = 1 + chi' rho.
inline double jacobian_det(const Cutoff& c, double rho_value, double xN) { return 1 + c.jet(xN).d1 * rho_value; }

/// S = 1 + |grad rho|^2, S_i = -rho_i on the plateau around x_N = 0.
struct InterfaceCoefficients {
  double S = 1.0;
  std::array<double, 2> Si{0.0, 0.0};
};

inline InterfaceCoefficients interface_coefficients(const RhoJet& rho) {
  return {1.0 + rho.grad[0] * rho.grad[0] + rho.grad[1] * rho.grad[1], {-rho.grad[0], -rho.grad[1]}};
}

inline InterfaceCoefficients interface_coefficients(const InterfaceState& rho, const Point& omega, int level) {
  return interface_coefficients(rho_at(rho.levels.at(level), rho.grid, omega));
}

/// Vertical derivative stencils within one phase column; z = j*hz measured away from x_N = 0.
struct Column {
  static double d1(const double* u, std::size_t st, int j, int M, double h) {
    if (j == 0) return (-3 * u[0] + 4 * u[st] - u[2 * st]) / (2 * h);
    if (j == M) return (3 * u[st * M] - 4 * u[st * (M - 1)] + u[st * (M - 2)]) / (2 * h);
    return (u[st * (j + 1)] - u[st * (j - 1)]) / (2 * h);
  }
  static double d2(const double* u, std::size_t st, int j, int M, double h) {
    if (j == 0) return (2 * u[0] - 5 * u[st] + 4 * u[2 * st] - u[3 * st]) / (h * h);
    if (j == M) return (2 * u[st * M] - 5 * u[st * (M - 1)] + 4 * u[st * (M - 2)] - u[st * (M - 3)]) / (h * h);
    return (u[st * (j + 1)] - 2 * u[st * j] + u[st * (j - 1)]) / (h * h);
  }
};

/// Discrete L_rho = pullback of the Laplacian through e_rho, in non-divergence form
///   L u = lap' u - 2 a_i u_iN + (a_i a_i + D^-2) u_NN + b u_N,
/// a_i = chi rho_i / D, D = 1 + chi' rho. Lateral derivatives of u are centred
/// periodic differences; vertical ones are centred inside a phase and one-sided
/// at x_N = 0 and x_N = +-1. With `shift` > 0 layer j of the plus side sits at
/// (j - shift) hz, so a grid with M = 2M' and shift = M' covers the whole strip.
class TransformedLaplacian {
public:
  TransformedLaplacian(const StripGrid& g, const Cutoff& c, const Field& rho, int shift = 0) : g_(g) {
    const int P = g.lat.size();
    const int d = g.lat.dim;
    MUSKAT_REQUIRE(static_cast<int>(rho.size()) == P, "rho level has wrong size");
    MUSKAT_REQUIRE(g.M >= 3, "transformed Laplacian needs at least 4 layers per phase");
    const Spectral& sp = spectral_for(g.lat);
    std::array<Field, 2> r1, r2;
    for (int i = 0; i < d; ++i) {
      r1[i] = sp.derivative(rho, i);
      r2[i] = sp.second_derivative(rho, i);
    }
    for (int s = 0; s < 2; ++s) {
      auto& C = coef_[s];
      for (auto& a : C.a) a.assign(g.bulk_size(), 0.0);
      C.cnn.assign(g.bulk_size(), 1.0);
      C.cn.assign(g.bulk_size(), 0.0);
      const double sign = s == 0 ? 1.0 : -1.0;
      for (int j = 0; j <= g.M; ++j) {
        const auto X = c.jet(sign * (j - shift) * g.hz());
        for (int p = 0; p < P; ++p) {
          const std::size_t q = g.at(p, j);
          const double D = 1 + X.d1 * rho[p];
          double aa = 0.0, lin = -X.d2 * rho[p] / (D * D * D);
          for (int i = 0; i < d; ++i) {
            const double ai = X.value * r1[i][p] / D;
            const double dai_i = (X.value * r2[i][p] * D - X.value * X.d1 * r1[i][p] * r1[i][p]) / (D * D);
            const double dai_N = (X.d1 * r1[i][p] * D - X.value * r1[i][p] * X.d2 * rho[p]) / (D * D);
            C.a[i][q] = ai;
            aa += ai * ai;
            lin += -dai_i + ai * dai_N;
          }
          C.cnn[q] = aa + 1.0 / (D * D);
          C.cn[q] = lin;
        }
      }
    }
  }

  /// L_rho applied to one phase field (layers 0..M).
  Field apply(const Field& u, Side side) const {
    const auto& C = coef_[side == Side::plus ? 0 : 1];
    const double sign = side == Side::plus ? 1.0 : -1.0;
    const LateralGrid& lat = g_.lat;
    const int P = lat.size(), M = g_.M, n0 = lat.n[0], n1 = lat.n[1];
    const double hx = lat.h(), hz = g_.hz();
    const std::size_t st = static_cast<std::size_t>(P);
    Field out(u.size(), 0.0);
    // vertical first derivative per node, needed for the mixed term
    Field uz(u.size());
    for (int p = 0; p < P; ++p)
      for (int j = 0; j <= M; ++j) uz[g_.at(p, j)] = sign * Column::d1(&u[p], st, j, M, hz);
    for (int j = 0; j <= M; ++j)
      for (int i1 = 0; i1 < n1; ++i1)
        for (int i0 = 0; i0 < n0; ++i0) {
          const int p = lat.index(i0, i1);
          const std::size_t q = g_.at(p, j);
          const int e = lat.index((i0 + 1) % n0, i1), w = lat.index((i0 - 1 + n0) % n0, i1);
          double lap = (u[g_.at(e, j)] - 2 * u[q] + u[g_.at(w, j)]) / (hx * hx);
          double mix = C.a[0][q] * (uz[g_.at(e, j)] - uz[g_.at(w, j)]) / (2 * hx);
          if (lat.dim == 2) {
            const int nn = lat.index(i0, (i1 + 1) % n1), ss = lat.index(i0, (i1 - 1 + n1) % n1);
            lap += (u[g_.at(nn, j)] - 2 * u[q] + u[g_.at(ss, j)]) / (hx * hx);
            mix += C.a[1][q] * (uz[g_.at(nn, j)] - uz[g_.at(ss, j)]) / (2 * hx);
          }
          const double uzz = Column::d2(&u[p], st, j, M, hz);
          out[q] = lap - 2 * mix + C.cnn[q] * uzz + C.cn[q] * uz[q];
        }
    return out;
  }

private:
  struct Coefs {
    std::array<Field, 2> a;
    Field cnn, cn;
  };
  StripGrid g_;
  std::array<Coefs, 2> coef_;
};

/// CSV rows "level,t,x1,x2,value" for every lattice node and time level.
inline void write_interface_csv(std::ostream& os, const InterfaceState& s) {
  os << "level,t,x1,x2," << s.role << "\n";
  char buf[128];
  for (int n = 0; n < s.count(); ++n)
    for (int i1 = 0; i1 < s.grid.n[1]; ++i1)
      for (int i0 = 0; i0 < s.grid.n[0]; ++i0) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", n, n * s.tau, s.grid.coord(i0),
                      s.grid.dim == 2 ? s.grid.coord(i1) : 0.0, s.levels[n][s.grid.index(i0, i1)]);
        os << buf;
      }
}

} // namespace muskat::geometry
