#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace muskat {

constexpr double pi = std::numbers::pi;

/// Base error. `category` distinguishes configuration problems from solver failures
/// so the CLI can map them to exit codes.
class Error : public std::runtime_error {
public:
  enum class Category { config, domain, solver };

  Error(Category c, const std::string& what) : std::runtime_error(what), category_(c) {}
  Category category() const noexcept { return category_; }

private:
  Category category_;
};

class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& w) : Error(Category::config, w) {}
};

/// Precondition on mathematical input (bounds, degenerate lattices, class violations).
class DomainError : public Error {
public:
  explicit DomainError(const std::string& w) : Error(Category::domain, w) {}
};

/// Iterative procedure failed; `trace` carries the residual/iteration history.
class SolverError : public Error {
public:
  SolverError(const std::string& w, std::vector<double> trace = {})
      : Error(Category::solver, w), trace_(std::move(trace)) {}
  const std::vector<double>& trace() const noexcept { return trace_; }

private:
  std::vector<double> trace_;
};

#define MUSKAT_REQUIRE(cond, msg)                                              \
  do {                                                                         \
    if (!(cond)) {                                                             \
      std::ostringstream muskat_os_;                                           \
      muskat_os_ << msg;                                                       \
      throw ::muskat::DomainError(muskat_os_.str());                           \
    }                                                                          \
  } while (0)

using Field = std::vector<double>;

/// Periodic lateral lattice of 1 or 2 axes with equal spacing L/n.
/// Flat index is i0 + n0*i1.
struct LateralGrid {
  int dim = 1;
  std::array<int, 2> n{16, 1};
  double L = 1.0;

  LateralGrid() = default;
  LateralGrid(int d, int n_per_axis, double period) : dim(d), n{n_per_axis, d == 2 ? n_per_axis : 1}, L(period) {
    MUSKAT_REQUIRE(d == 1 || d == 2, "lateral dimension must be 1 or 2, got " << d);
    MUSKAT_REQUIRE(n_per_axis >= 2, "lateral lattice needs at least 2 nodes per axis");
    MUSKAT_REQUIRE(period > 0, "lateral period must be positive");
  }

  double h() const { return L / n[0]; }
  int size() const { return n[0] * n[1]; }
  double coord(int i) const { return i * h(); }
  int index(int i0, int i1 = 0) const { return i0 + n[0] * i1; }
  double cell_volume() const { return dim == 2 ? h() * h() : h(); }
  bool operator==(const LateralGrid&) const = default;
};

/// Strip lattice: lateral torus times vertical layers j = 0..M in each phase.
/// Plus phase layer j sits at x_N = +j*hz, minus phase layer j at x_N = -j*hz.
struct StripGrid {
  LateralGrid lat;
  int M = 16;
  double height = 1.0; ///< extent of the layer column

  double hz() const { return height / M; }
  int layers() const { return M + 1; }
  std::size_t bulk_size() const { return static_cast<std::size_t>(lat.size()) * layers(); }
  std::size_t at(int p, int j) const { return static_cast<std::size_t>(p) + static_cast<std::size_t>(lat.size()) * j; }
  int N() const { return lat.dim + 1; }
  bool operator==(const StripGrid&) const = default;
};

enum class Side { plus, minus };

/// Two bulk fields on the strip phases sharing the interface line.
struct PhaseField {
  Field plus;
  Field minus;
  std::string role = "u";

  PhaseField() = default;
  explicit PhaseField(const StripGrid& g, std::string r = "u")
      : plus(g.bulk_size(), 0.0), minus(g.bulk_size(), 0.0), role(std::move(r)) {}

  Field& side(Side s) { return s == Side::plus ? plus : minus; }
  const Field& side(Side s) const { return s == Side::plus ? plus : minus; }
};

/// Uniform time lattice t_n = n*tau, n = 0..steps.
struct TimeGrid {
  double T = 1.0;
  int steps = 16;
  double tau() const { return T / steps; }
  int levels() const { return steps + 1; }
  double t(int n) const { return n * tau(); }
};

inline double sup_abs(const Field& f) {
  double m = 0.0;
  for (double v : f) m = std::max(m, std::abs(v));
  return m;
}

inline double sup_diff(const Field& a, const Field& b) {
  MUSKAT_REQUIRE(a.size() == b.size(), "size mismatch in sup_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline Field axpy(double a, const Field& x, const Field& y) {
  Field r(y);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] += a * x[i];
  return r;
}

inline Field scaled(double a, Field x) {
  for (double& v : x) v *= a;
  return x;
}

inline Field layer(const StripGrid& g, const Field& bulk, int j) {
  Field r(g.lat.size());
  for (int p = 0; p < g.lat.size(); ++p) r[p] = bulk[g.at(p, j)];
  return r;
}

/// Thomas algorithm: sub-diagonal a, diagonal b, super-diagonal c (taken by value), rhs d
/// overwritten with the solution. No pivoting; intended for diagonally dominant systems.
template <class T>
void solve_tridiagonal(std::vector<double> a, std::vector<double> b, const std::vector<double>& c, std::vector<T>& d) {
  const std::size_t n = b.size();
  for (std::size_t i = 1; i < n; ++i) {
    const double w = a[i] / b[i - 1];
    b[i] -= w * c[i - 1];
    d[i] -= w * d[i - 1];
  }
  d[n - 1] /= b[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) d[i] = (d[i] - c[i] * d[i + 1]) / b[i];
}

} // namespace muskat
