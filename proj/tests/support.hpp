#pragma once

// Shared oracles and manufactured-solution harnesses for the unit tests and the
// acceptance binary.

#include "muskat/elliptic.hpp"
#include "muskat/linearized.hpp"
#include "muskat/nonlinear.hpp"
#include "muskat/geometry.hpp"

#include <functional>

namespace muskat::oracle {

using ScalarFn = std::function<double(const geometry::Point&)>;

/// Samples f on one phase of the strip (layers 0..M, x_N = +-j*hz).
inline Field sample_phase(const StripGrid& g, Side side, const ScalarFn& f) {
  Field out(g.bulk_size());
  const double s = side == Side::plus ? 1.0 : -1.0;
  for (int j = 0; j <= g.M; ++j)
    for (int i1 = 0; i1 < g.lat.n[1]; ++i1)
      for (int i0 = 0; i0 < g.lat.n[0]; ++i0) {
        geometry::Point x{g.lat.coord(i0), 0.0, 0.0};
        if (g.lat.dim == 2) x[1] = g.lat.coord(i1);
        x[g.lat.dim] = s * j * g.hz();
        out[g.at(g.lat.index(i0, i1), j)] = f(x);
      }
  return out;
}

inline Field sample_lateral(const LateralGrid& g, const std::function<double(double, double)>& f) {
  Field out(g.size());
  for (int i1 = 0; i1 < g.n[1]; ++i1)
    for (int i0 = 0; i0 < g.n[0]; ++i0) out[g.index(i0, i1)] = f(g.coord(i0), g.dim == 2 ? g.coord(i1) : 0.0);
  return out;
}

/// max over both phases of |(L0 f)(e_rho x) - L_rho(f o e_rho)(x)|, skipping lateral
/// seam nodes so that non-periodic f can be used.
inline double transformation_identity_residual(int N, int n, double amp, const ScalarFn& f, double L0f) {
  geometry::DomainSpec spec{N, 1.0, 0.5, n, n};
  StripGrid g = spec.grid();
  geometry::Cutoff c(spec.lambda0);
  Field rho = sample_lateral(g.lat, [&](double x1, double x2) {
    return N == 3 ? amp * (std::sin(2 * pi * x1) + 0.5 * std::cos(2 * pi * x2)) / 1.5 : amp * std::sin(2 * pi * x1);
  });
  geometry::TransformedLaplacian Lr(g, c, rho);
  double worst = 0.0;
  for (Side side : {Side::plus, Side::minus}) {
    const double s = side == Side::plus ? 1.0 : -1.0;
    Field fe(g.bulk_size());
    for (int j = 0; j <= g.M; ++j)
      for (int p = 0; p < g.lat.size(); ++p) {
        const int i0 = p % g.lat.n[0], i1 = p / g.lat.n[0];
        geometry::Point x{g.lat.coord(i0), g.lat.dim == 2 ? g.lat.coord(i1) : 0.0, 0.0};
        x[N - 1] = s * j * g.hz();
        fe[g.at(p, j)] = f(geometry::map_e_rho(spec, c, rho[p], x));
      }
    Field r = Lr.apply(fe, side);
    for (int j = 0; j <= g.M; ++j)
      for (int p = 0; p < g.lat.size(); ++p) {
        const int i0 = p % g.lat.n[0], i1 = p / g.lat.n[0];
        if (i0 == 0 || i0 == g.lat.n[0] - 1) continue;
        if (g.lat.dim == 2 && (i1 == 0 || i1 == g.lat.n[1] - 1)) continue;
        worst = std::max(worst, std::abs(r[g.at(p, j)] - L0f));
      }
  }
  return worst;
}

/// Manufactured transmission problem on the unit strip with laterally varying data:
///   u+ = (1 + phi/2) e^{-z},  u- = 0.7 psi e^{z} + 0.2 z + 1,
///   phi = sin(2 pi x1) [+ cos(2 pi x2)],  psi = cos(2 pi x1) [+ sin(2 pi x2)],
/// with variable b+ when `variable_b`, a+ = 1, a- = 2, rho = phi / 20.
struct ManufacturedTransmission {
  elliptic::TransmissionData data;
  PhaseField exact;
};

inline ManufacturedTransmission manufactured_transmission(int N, int M, bool variable_b) {
  const int n = M;
  StripGrid g{N == 3 ? LateralGrid(2, n, 1.0) : LateralGrid(1, n, 1.0), M};
  auto d = elliptic::TransmissionData::zeros(g, 1.0, 2.0, 1.0, 1.0);
  PhaseField ex(g);
  const double w = 2 * pi, w2 = w * w;
  const std::array<double, 2> H{0.4, -0.3};
  d.Hvec = {Field(g.lat.size(), H[0]), Field(g.lat.size(), N == 3 ? H[1] : 0.0)};
  for (int i1 = 0; i1 < g.lat.n[1]; ++i1)
    for (int i0 = 0; i0 < g.lat.n[0]; ++i0) {
      const int p = g.lat.index(i0, i1);
      const double x1 = g.lat.coord(i0), x2 = N == 3 ? g.lat.coord(i1) : 0.0;
      const double phi = std::sin(w * x1) + (N == 3 ? std::cos(w * x2) : 0.0);
      const double psi = std::cos(w * x1) + (N == 3 ? std::sin(w * x2) : 0.0);
      const double phi1 = w * std::cos(w * x1), phi2 = N == 3 ? -w * std::sin(w * x2) : 0.0;
      const double rho = phi / 20, A = 1.5 + 0.2 * psi;
      for (int j = 0; j <= M; ++j) {
        const double z = j * g.hz();
        const std::size_t k = g.at(p, j);
        const double bp = variable_b ? 1.0 + 0.3 * psi * z * z : 1.0;
        const double up = (1 + phi / 2) * std::exp(-z);
        const double lap_up = (1 + phi / 2 - w2 * phi / 2) * std::exp(-z);
        const double zm = -z;
        const double um = 0.7 * psi * std::exp(zm) + 0.2 * zm + 1;
        const double lap_um = 0.7 * psi * (1 - w2) * std::exp(zm);
        d.b_plus[k] = bp;
        d.b_minus[k] = 2.0;
        d.f1_plus[k] = -lap_up + bp * up;
        d.f1_minus[k] = -lap_um + 2.0 * um;
        ex.plus[k] = up;
        ex.minus[k] = um;
      }
      d.rho[p] = rho;
      d.A[p] = A;
      const double up0 = 1 + phi / 2, um0 = 0.7 * psi + 1;
      d.f2[p] = up0 - um0 + A * rho;
      const double dup = -(1 + phi / 2), dum = 0.7 * psi + 0.2;
      d.f3_minus[p] = 0.1 * psi;
      d.f3_plus[p] = d.a_plus * dup - d.a_minus * dum + d.f3_minus[p] - (H[0] * phi1 + (N == 3 ? H[1] * phi2 : 0.0)) / 20;
      d.f4_plus[p] = (1 + phi / 2) * std::exp(-1.0);
      d.f4_minus[p] = 0.7 * psi * std::exp(-1.0) - 0.2 + 1;
    }
  return {d, ex};
}

inline double phase_error(const PhaseField& a, const PhaseField& b) {
  return std::max(sup_diff(a.plus, b.plus), sup_diff(a.minus, b.minus));
}

struct ManufacturedLinear {
  linear::LinearProblemData data;
  std::vector<PhaseField> u;
  std::vector<Field> rho;
};

// rho = c t^2 sin(wx), u+ = t phi(x) e^{-z}, u- = t psi(x) e^{z}, one lateral dimension, L = 1.
inline ManufacturedLinear manufactured_linear(int n, int M, int steps, double T, double eps, double c = 0.05) {
  const StripGrid g{LateralGrid(1, n, 1.0), M};
  const TimeGrid tg{T, steps};
  const double ap = 1.0, am = 2.0, bp = 1.0, bm = 2.0, A = 1.5, hp = 0.3, hm = -0.2;
  ManufacturedLinear m{linear::LinearProblemData::zeros(g, tg, eps, ap, am, bp, A), {}, {}};
  auto& d = m.data;
  const double w = 2 * pi, w2 = w * w;
  for (int s = 0; s < tg.levels(); ++s) {
    const double t = tg.t(s);
    d.h_plus[s][0].assign(n, hp);
    d.h_minus[s][0].assign(n, hm);
    auto& L = d.levels[s];
    L.b_minus.assign(L.b_minus.size(), bm);
    PhaseField u(g);
    Field rho(n);
    for (int p = 0; p < n; ++p) {
      const double x = g.lat.coord(p);
      const double phi = 1 + 0.5 * std::cos(w * x), phi2 = -0.5 * w2 * std::cos(w * x);
      const double psi = 0.7 * std::sin(w * x) + 1, psi2 = -0.7 * w2 * std::sin(w * x);
      for (int j = 0; j <= M; ++j) {
        const double z = j * g.hz();
        const std::size_t k = g.at(p, j);
        u.plus[k] = t * phi * std::exp(-z);
        u.minus[k] = t * psi * std::exp(-z);
        L.f1_plus[k] = t * (-phi2 - phi + bp * phi) * std::exp(-z);
        L.f1_minus[k] = t * (-psi2 - psi + bm * psi) * std::exp(-z);
      }
      rho[p] = c * t * t * std::sin(w * x);
      const double rt = 2 * c * t * std::sin(w * x), lap = -w2 * rho[p], rx = c * t * t * w * std::cos(w * x);
      L.f2[p] = t * phi - t * psi + A * rho[p];
      L.f3_plus[p] = rt - eps * lap + ap * (-t * phi) + hp * rx;
      L.f3_minus[p] = rt - eps * lap + am * (t * psi) + hm * rx;
      L.f4_plus[p] = t * phi * std::exp(-1.0);
      L.f4_minus[p] = t * psi * std::exp(-1.0);
    }
    m.u.push_back(std::move(u));
    m.rho.push_back(std::move(rho));
  }
  d.sync_drift();
  return m;
}

/// Small smooth data of size amp: linear source above, cubic below, time-dependent outer values.
inline nonlinear::NonlinearProblem mild_problem(int N, int n, int M, int steps, double T, double amp = 0.03) {
  nonlinear::NonlinearProblem pr;
  pr.domain = geometry::DomainSpec{N, 1.0, 0.5, n, M};
  pr.a_plus = 1.0;
  pr.a_minus = 2.0;
  pr.m = 1.0;
  pr.nu = 0.1 * amp;
  pr.radius = 10.0;
  pr.f_plus = {[](double u) { return u; }, [](double) { return 1.0; }};
  pr.f_minus = {[](double u) { return u + 0.2 * u * u * u; }, [](double u) { return 1 + 0.6 * u * u; }};
  pr.g_plus = [amp](double x, double y, double t) {
    return amp * (1 + 0.1 * std::sin(2 * pi * x) + 0.05 * std::cos(2 * pi * y) + 0.2 * t);
  };
  pr.g_minus = [amp](double x, double, double t) { return -amp * (1 - 0.05 * std::cos(2 * pi * x) + 0.1 * t * t); };
  pr.T = T;
  pr.steps = steps;
  return pr;
}

} // namespace muskat::oracle
