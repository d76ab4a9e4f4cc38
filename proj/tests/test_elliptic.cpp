#include "muskat/elliptic.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace muskat;
using namespace muskat::elliptic;

TEST(Transmission, ZeroDataGivesZero) {
  StripGrid g{LateralGrid(1, 8, 1.0), 8};
  auto d = TransmissionData::zeros(g);
  auto u = solve_transmission(d);
  EXPECT_EQ(sup_abs(u.plus), 0.0);
  EXPECT_EQ(sup_abs(u.minus), 0.0);
  d.b_plus[3] = 2.0; // iterative path
  SolveLog log;
  u = solve_transmission(d, {}, &log);
  EXPECT_EQ(log.method, "pcg");
  EXPECT_EQ(sup_abs(u.plus), 0.0);
}

TEST(Transmission, ExponentialProfilesSecondOrder) {
  // u+ = e^{-x_N}, u- = e^{x_N}, b = a = 1: f3+ - f3- = -2, f4 = e^{-1}
  std::vector<double> err;
  for (int M : {8, 16, 32, 64}) {
    StripGrid g{LateralGrid(1, 4, 1.0), M};
    auto d = TransmissionData::zeros(g);
    d.f3_plus.assign(4, -2.0);
    d.f4_plus.assign(4, std::exp(-1.0));
    d.f4_minus.assign(4, std::exp(-1.0));
    auto u = solve_transmission(d);
    double e = 0;
    for (int j = 0; j <= M; ++j)
      for (int p = 0; p < 4; ++p) {
        e = std::max(e, std::abs(u.plus[g.at(p, j)] - std::exp(-j * g.hz())));
        e = std::max(e, std::abs(u.minus[g.at(p, j)] - std::exp(-j * g.hz())));
      }
    err.push_back(e);
  }
  for (std::size_t i = 1; i < err.size(); ++i) {
    EXPECT_GE(err[i - 1] / err[i], 3.4);
    EXPECT_LE(err[i - 1] / err[i], 4.6);
  }
}

TEST(Transmission, ManufacturedSecondOrderVariableCoefficients) {
  std::vector<double> err;
  for (int M : {8, 16, 32, 64}) {
    auto m = oracle::manufactured_transmission(2, M, true);
    err.push_back(oracle::phase_error(solve_transmission(m.data), m.exact));
  }
  for (std::size_t i = 1; i < err.size(); ++i) {
    EXPECT_GE(err[i - 1] / err[i], 3.4) << i;
    EXPECT_LE(err[i - 1] / err[i], 4.6) << i;
  }
}

TEST(Transmission, ManufacturedThreeDimensional) {
  std::vector<double> err;
  for (int M : {8, 16, 32}) {
    auto m = oracle::manufactured_transmission(3, M, false);
    SolveLog log;
    err.push_back(oracle::phase_error(solve_transmission(m.data, {}, &log), m.exact));
    EXPECT_EQ(log.method, "modal");
  }
  EXPECT_GE(err[1] / err[2], 3.4);
  EXPECT_LE(err[1] / err[2], 4.6);
}

TEST(Transmission, DiscreteConditionsHold) {
  auto m = oracle::manufactured_transmission(2, 16, true);
  auto u = solve_transmission(m.data);
  auto r = transmission_residuals(m.data, u);
  EXPECT_LT(r.bulk, 1e-7);
  EXPECT_LT(r.jump, 1e-13);
  EXPECT_LT(r.flux, 1e-8);
  EXPECT_EQ(r.dirichlet, 0.0);
}

TEST(Transmission, LinearInData) {
  auto m1 = oracle::manufactured_transmission(2, 12, true);
  auto m2 = m1;
  for (double& v : m2.data.f1_minus) v = std::sin(v);
  for (double& v : m2.data.rho) v *= -3;
  for (double& v : m2.data.f3_plus) v += 0.5;
  m2.data.f4_minus.assign(m2.data.f4_minus.size(), 0.25);
  auto sum = m1.data;
  for (std::size_t k = 0; k < sum.f1_plus.size(); ++k) {
    sum.f1_plus[k] += m2.data.f1_plus[k];
    sum.f1_minus[k] += m2.data.f1_minus[k];
  }
  for (std::size_t p = 0; p < sum.f2.size(); ++p) {
    sum.f2[p] += m2.data.f2[p];
    sum.f3_plus[p] += m2.data.f3_plus[p];
    sum.f3_minus[p] += m2.data.f3_minus[p];
    sum.f4_plus[p] += m2.data.f4_plus[p];
    sum.f4_minus[p] += m2.data.f4_minus[p];
    sum.rho[p] += m2.data.rho[p];
  }
  auto a = solve_transmission(m1.data), b = solve_transmission(m2.data), c = solve_transmission(sum);
  EXPECT_LT(sup_diff(c.plus, axpy(1.0, a.plus, b.plus)), 1e-8);
  EXPECT_LT(sup_diff(c.minus, axpy(1.0, a.minus, b.minus)), 1e-8);
}

TEST(Transmission, EnergyIdentityConverges) {
  std::vector<double> res;
  for (int M : {8, 16, 32}) {
    auto m = oracle::manufactured_transmission(2, M, true);
    auto e = energy_identity(m.data, solve_transmission(m.data));
    EXPECT_GE(e.gradient, 0.0);
    EXPECT_GE(e.reaction, 0.0);
    res.push_back(e.relative_residual);
  }
  EXPECT_LT(res[2], 1e-2);
  EXPECT_GT(res[0] / res[1], 3.0);
  EXPECT_GT(res[1] / res[2], 3.0);
  auto z = TransmissionData::zeros(StripGrid{LateralGrid(1, 4, 1.0), 4});
  EXPECT_EQ(energy_identity(z, solve_transmission(z)).relative_residual, 0.0);
}

TEST(Transmission, ErrorsAreReported) {
  auto m = oracle::manufactured_transmission(2, 8, true);
  auto bad = m.data;
  bad.b_minus[5] = 0.0;
  EXPECT_THROW(solve_transmission(bad), DomainError);
  SolverOptions o;
  o.max_iter = 1;
  o.tol = 1e-15;
  try {
    solve_transmission(m.data, o);
    FAIL() << "expected non-convergence";
  } catch (const SolverError& e) {
    EXPECT_FALSE(e.trace().empty());
  }
  StripGrid thin{LateralGrid(1, 4, 1.0), 1};
  EXPECT_THROW(solve_transmission(TransmissionData::zeros(thin)), DomainError);
}

TEST(NormalDerivative, Stencils) {
  StripGrid g{LateralGrid(1, 4, 1.0), 16};
  PhaseField lin(g), ex(g), sq(g);
  for (int j = 0; j <= g.M; ++j)
    for (int p = 0; p < 4; ++p) {
      const double z = j * g.hz();
      lin.plus[g.at(p, j)] = z;
      lin.minus[g.at(p, j)] = -z;
      ex.plus[g.at(p, j)] = std::exp(-z);
      sq.plus[g.at(p, j)] = z * z;
      sq.minus[g.at(p, j)] = z * z;
    }
  for (double v : normal_derivative(g, lin, Side::plus)) EXPECT_NEAR(v, 1.0, 1e-12);
  for (double v : normal_derivative(g, lin, Side::minus)) EXPECT_NEAR(v, 1.0, 1e-12);
  for (double v : normal_derivative(g, sq, Side::minus)) EXPECT_NEAR(v, 0.0, 1e-12);
  const double e16 = std::abs(normal_derivative(g, ex, Side::plus)[0] + 1);
  StripGrid g2{LateralGrid(1, 4, 1.0), 32};
  PhaseField ex2(g2);
  for (int j = 0; j <= 32; ++j) ex2.plus[g2.at(0, j)] = std::exp(-j * g2.hz());
  const double e32 = std::abs(normal_derivative(g2, ex2, Side::plus)[0] + 1);
  EXPECT_GT(e16 / e32, 3.5);
  EXPECT_THROW(normal_derivative(StripGrid{LateralGrid(1, 4, 1.0), 1}, PhaseField(StripGrid{LateralGrid(1, 4, 1.0), 1}),
                                 Side::plus),
               DomainError);
}

namespace {

SemilinearProblem linear_source(int M, double c) {
  SemilinearProblem pr;
  pr.grid = StripGrid{LateralGrid(1, 4, 1.0), M};
  pr.a_plus = 1.0;
  pr.a_minus = 2.0;
  pr.f_plus = [c](double u) { return u - c; };
  pr.f_minus = pr.f_plus;
  pr.df_plus = [](double) { return 1.0; };
  pr.df_minus = pr.df_plus;
  pr.g_plus.assign(4, 2.0 + c);
  pr.g_minus.assign(4, -1.0 + c);
  pr.nu = 0.1;
  return pr;
}

// u'' = u on each phase, u continuous, a+ u+' = a- u-', u(+1) = 2, u(-1) = -1.
double linear_oracle(double z) {
  const double ap = 1.0, am = 2.0, gp = 2.0, gm = -1.0;
  const double sp = (gp - gm) / (std::sinh(1.0) * (1 + ap / am));
  const double s = (gp - sp * std::sinh(1.0)) / std::cosh(1.0);
  const double sm = ap * sp / am;
  return z >= 0 ? s * std::cosh(z) + sp * std::sinh(z) : s * std::cosh(z) + sm * std::sinh(z);
}

} // namespace

TEST(Semilinear, LinearSourceMatchesClosedForm) {
  std::vector<double> err;
  for (int M : {16, 32, 64}) {
    auto r = solve_semilinear_stationary(linear_source(M, 0.0));
    double e = 0;
    for (int j = 0; j <= M; ++j) {
      const double z = j * (1.0 / M);
      e = std::max({e, std::abs(r.u.plus[4 * j] - linear_oracle(z)), std::abs(r.u.minus[4 * j] - linear_oracle(-z))});
    }
    err.push_back(e);
    EXPECT_TRUE(r.nondegenerate);
    EXPECT_LE(r.iterations, 2);
  }
  EXPECT_GT(err[0] / err[1], 3.5);
  EXPECT_GT(err[1] / err[2], 3.5);
}

TEST(Semilinear, ShiftedSourceShiftsSolution) {
  auto a = solve_semilinear_stationary(linear_source(24, 0.0));
  auto b = solve_semilinear_stationary(linear_source(24, 0.75));
  for (std::size_t k = 0; k < a.u.plus.size(); ++k) {
    EXPECT_NEAR(b.u.plus[k], a.u.plus[k] + 0.75, 1e-9);
    EXPECT_NEAR(b.u.minus[k], a.u.minus[k] + 0.75, 1e-9);
  }
}

TEST(Semilinear, NewtonConvergesQuadratically) {
  SemilinearProblem pr;
  pr.grid = StripGrid{LateralGrid(1, 16, 1.0), 32};
  pr.a_plus = 1.0;
  pr.a_minus = 3.0;
  pr.f_plus = [](double u) { return u + u * u * u; };
  pr.df_plus = [](double u) { return 1 + 3 * u * u; };
  pr.f_minus = [](double u) { return 2 * u + std::sinh(u) - 1; };
  pr.df_minus = [](double u) { return 2 + std::cosh(u); };
  pr.g_plus.resize(16);
  pr.g_minus.resize(16);
  for (int i = 0; i < 16; ++i) {
    pr.g_plus[i] = 2.0 + 0.3 * std::sin(2 * pi * i / 16.0);
    pr.g_minus[i] = -1.0;
  }
  auto r = solve_semilinear_stationary(pr);
  ASSERT_GE(r.residuals.size(), 4u);
  // r_{k+1} <= C r_k^2 with one constant along the whole history
  for (std::size_t k = 1; k + 1 < r.residuals.size(); ++k)
    EXPECT_LE(r.residuals[k + 1], 0.1 * r.residuals[k] * r.residuals[k]) << k;
  EXPECT_LE(r.residuals.back(), 1e-12 * r.residuals.front());
}

TEST(Semilinear, DegenerateDataIsFlagged) {
  auto pr = linear_source(16, 0.0);
  pr.g_plus.assign(4, -1.0);
  auto r = solve_semilinear_stationary(pr);
  EXPECT_FALSE(r.nondegenerate);
}
