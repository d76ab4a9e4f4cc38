#include "muskat/oracle1d.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace muskat;
using namespace muskat::oracle1d;

namespace {

Problem linear_problem() {
  Problem p;
  p.f_plus = p.f_minus = [](double u) { return u; };
  p.df_plus = p.df_minus = [](double) { return 1.0; };
  p.g_plus = [](double t) { return 2.0 + t; };
  p.g_minus = [](double) { return -1.0; };
  return p;
}

nonlinear::NonlinearProblem flat_problem(int M, int steps, double T) {
  auto pr = oracle::mild_problem(2, 4, M, steps, T);
  const double amp = 0.03;
  pr.g_plus = [amp](double, double, double t) { return amp * (1 + 0.2 * t); };
  pr.g_minus = [amp](double, double, double t) { return -amp * (1 + 0.1 * t * t); };
  return pr;
}

} // namespace

TEST(Shooting, LinearSourceMatchesClosedForm) {
  // u'' = u with interface at s: u = A cosh + B sinh on each side, solved by hand below
  const auto p = linear_problem();
  for (double s : {0.0, 0.2, -0.3}) {
    const auto sh = shoot(p, s, 0.0, {});
    // u+(x) = U cosh(x - s) + D sinh(x - s), u-(x) = U cosh(x - s) + k D sinh(x - s)
    const double k = p.a_plus / p.a_minus;
    const double cp = std::cosh(1 - s), sp = std::sinh(1 - s), cm = std::cosh(1 + s), sm = std::sinh(1 + s);
    // U cp + D sp = 2, U cm - k D sm = -1
    const double det = -cp * k * sm - sp * cm;
    const double U = (-2 * k * sm + sp) / det, D = (-cp - 2 * cm) / det;
    EXPECT_NEAR(sh.U, U, 1e-12);
    EXPECT_NEAR(sh.D, D, 1e-12);
    EXPECT_LE(sh.iterations, 2);
  }
}

TEST(Shooting, EquilibriumStaysAtRest) {
  Problem p;
  p.f_plus = p.f_minus = [](double) { return 0.0; };
  p.df_plus = p.df_minus = [](double) { return 0.0; };
  p.g_plus = p.g_minus = [](double) { return 0.7; };
  p.s0 = 0.1;
  const auto tr = solve(p, 1.0, {200, 16});
  for (double s : tr.s) EXPECT_NEAR(s, 0.1, 1e-13);
}

TEST(Trajectory, SelfConvergesAtFourthOrder) {
  auto p = linear_problem();
  p.g_plus = [](double t) { return 0.3 + 0.1 * t; };
  p.g_minus = [](double) { return -0.2; };
  Options o{400, 8};
  const auto a = solve(p, 1.0, o);
  o.time_steps = 16;
  const auto b = solve(p, 1.0, o);
  o.time_steps = 32;
  const auto c = solve(p, 1.0, o);
  const double e1 = std::abs(a.s.back() - b.s.back()), e2 = std::abs(b.s.back() - c.s.back());
  EXPECT_GT(e1 / e2, 12.0);
  const auto sc = solve_self_converged(p, 1.0, {400, 64});
  EXPECT_LT(sc.change, 1e-5);
  EXPECT_NEAR(sc.fine.at(0.5), sc.fine.s[64], 1e-15);
  EXPECT_LT(sc.fine.s.back(), 0.0); // a+ u+' > 0 drives the interface down
}

TEST(Compare, RejectsLateralVariation) {
  auto pr = oracle::mild_problem(2, 8, 8, 8, 0.25);
  EXPECT_THROW(from_nonlinear(pr), DomainError);
}

TEST(Compare, FreeBoundarySolverMatchesOracle) {
  const auto c = compare(flat_problem(32, 64, 0.5), {1000, 256});
  EXPECT_TRUE(c.self_converged) << c.self_change;
  EXPECT_LT(c.max_relative, 1e-3);
  EXPECT_TRUE(c.pass);
  EXPECT_EQ(c.t.size(), 65u);
}
