#pragma once

// Finite-difference transmission (conjugation) problem on the strip
// [0,L)^{N-1} x [-1,1] and the semilinear stationary problem built on it.
//
// Unknowns per lateral node: u+ at layers M-1..1, the interface value s = u-(0),
// u- at layers 1..M-1; u+(0) = s + g with g = f2 - A rho. The interface row is the
// flux condition with ghost values eliminated through the PDE on both sides, and
// each phase's rows are scaled by a+-, which makes the system symmetric positive
// definite.

#include "muskat/core.hpp"
#include "muskat/fft.hpp"
#include "muskat/geometry.hpp"

#include <functional>
#include <limits>
#include <string>
#include <tuple>

namespace muskat::elliptic {

namespace detail {

/// Centred periodic second differences summed over lateral axes.
inline void lateral_laplacian(const LateralGrid& g, const double* x, double* y) {
  const int n0 = g.n[0], n1 = g.n[1];
  const double ih2 = 1.0 / (g.h() * g.h());
  for (int i1 = 0; i1 < n1; ++i1)
    for (int i0 = 0; i0 < n0; ++i0) {
      const int p = g.index(i0, i1);
      double v = x[g.index((i0 + 1) % n0, i1)] + x[g.index((i0 + n0 - 1) % n0, i1)] - 2 * x[p];
      if (g.dim == 2) v += x[g.index(i0, (i1 + 1) % n1)] + x[g.index(i0, (i1 + n1 - 1) % n1)] - 2 * x[p];
      y[p] = v * ih2;
    }
}

inline Field lateral_laplacian(const LateralGrid& g, const Field& x) {
  Field y(x.size());
  lateral_laplacian(g, x.data(), y.data());
  return y;
}

/// Symbol of minus the discrete lateral Laplacian.
inline double lateral_symbol(const Spectral& sp, std::size_t p, double h) {
  const auto& k = sp.k(p);
  return (4 - 2 * std::cos(k[0] * h) - 2 * std::cos(k[1] * h)) / (h * h);
}

inline double dot(const Field& a, const Field& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

} // namespace detail

struct TransmissionData {
  StripGrid grid;
  double a_plus = 1.0;
  double a_minus = 1.0;
  double nu = 1e-8;
  Field b_plus, b_minus;     ///< bulk reaction coefficients
  Field A;                   ///< lateral jump coefficient
  std::array<Field, 2> Hvec; ///< lateral flux drift h- - h+
  Field f1_plus, f1_minus;   ///< bulk sources
  Field f2, f3_plus, f3_minus;
  Field f4_plus, f4_minus;   ///< Dirichlet data at x_N = +1 and x_N = -1
  Field rho;

  static TransmissionData zeros(const StripGrid& g, double a_plus = 1.0, double a_minus = 1.0, double b = 1.0,
                                double A = 1.0) {
    TransmissionData d;
    d.grid = g;
    d.a_plus = a_plus;
    d.a_minus = a_minus;
    const std::size_t P = g.lat.size(), B = g.bulk_size();
    d.b_plus.assign(B, b);
    d.b_minus.assign(B, b);
    d.A.assign(P, A);
    d.Hvec = {Field(P, 0.0), Field(P, 0.0)};
    d.f1_plus.assign(B, 0.0);
    d.f1_minus.assign(B, 0.0);
    d.f2.assign(P, 0.0);
    d.f3_plus.assign(P, 0.0);
    d.f3_minus.assign(P, 0.0);
    d.f4_plus.assign(P, 0.0);
    d.f4_minus.assign(P, 0.0);
    d.rho.assign(P, 0.0);
    return d;
  }

  void validate_shapes() const {
    const std::size_t P = grid.lat.size(), B = grid.bulk_size();
    MUSKAT_REQUIRE(grid.M >= 2, "transmission problem needs at least 2 layers per phase, got M = " << grid.M);
    MUSKAT_REQUIRE(b_plus.size() == B && b_minus.size() == B && f1_plus.size() == B && f1_minus.size() == B,
                   "bulk fields do not match the strip grid");
    for (const Field* f : {&A, &Hvec[0], &Hvec[1], &f2, &f3_plus, &f3_minus, &f4_plus, &f4_minus, &rho})
      MUSKAT_REQUIRE(f->size() == P, "lateral fields do not match the lateral lattice");
    MUSKAT_REQUIRE(a_plus > 0 && a_minus > 0, "a+ and a- must be positive");
  }

  void validate() const {
    validate_shapes();
    for (const Field* b : {&b_plus, &b_minus})
      for (double v : *b) MUSKAT_REQUIRE(v >= nu, "reaction coefficient " << v << " below nu = " << nu);
    for (double v : A) MUSKAT_REQUIRE(v >= nu, "jump coefficient " << v << " below nu = " << nu);
  }

  /// Prescribed jump u+ - u- at x_N = 0.
  Field jump() const {
    Field g(f2);
    for (std::size_t p = 0; p < g.size(); ++p) g[p] -= A[p] * rho[p];
    return g;
  }

  /// Prescribed flux jump a+ du+/dn - a- du-/dn at x_N = 0.
  Field flux_jump() const {
    auto grad = spectral_for(grid.lat).gradient(rho);
    Field q(f3_plus.size());
    for (std::size_t p = 0; p < q.size(); ++p)
      q[p] = f3_plus[p] - f3_minus[p] + Hvec[0][p] * grad[0][p] + Hvec[1][p] * grad[1][p];
    return q;
  }
};

struct SolverOptions {
  double tol = 1e-10;   ///< relative residual for the iterative path
  int max_iter = 500;
};

struct SolveLog {
  std::string method;
  int iterations = 0;
  double relative_residual = 0.0;
  std::vector<double> trace;
};

/// The scaled SPD system in layer-major storage x[l * P + p], l = 0..2M-2.
class TransmissionOperator {
public:
  explicit TransmissionOperator(const TransmissionData& d) : d_(d), g_(d.grid), sp_(spectral_for(d.grid.lat)) {
    d.validate_shapes();
    const int M = g_.M, P = g_.lat.size();
    const double h = g_.hz(), ih2 = 1.0 / (h * h);
    const double ap = d.a_plus, am = d.a_minus;
    nl_ = 2 * M - 1;
    wlat_.resize(nl_);
    diag_.resize(nl_);
    off_.resize(nl_);
    wb_.assign(nl_, Field(P));
    for (int l = 0; l < nl_; ++l) {
      const int j = layer_depth(l);
      if (l < M - 1) {
        wlat_[l] = ap;
        diag_[l] = 2 * ap * ih2;
        for (int p = 0; p < P; ++p) wb_[l][p] = ap * d.b_plus[g_.at(p, j)];
      } else if (l == M - 1) {
        wlat_[l] = (ap + am) / 2;
        diag_[l] = (ap + am) * ih2;
        for (int p = 0; p < P; ++p) wb_[l][p] = (ap * d.b_plus[g_.at(p, 0)] + am * d.b_minus[g_.at(p, 0)]) / 2;
      } else {
        wlat_[l] = am;
        diag_[l] = 2 * am * ih2;
        for (int p = 0; p < P; ++p) wb_[l][p] = am * d.b_minus[g_.at(p, j)];
      }
      off_[l] = l < M - 1 ? -ap * ih2 : -am * ih2; // coupling l <-> l+1
    }
    mean_wb_.resize(nl_);
    constant_ = true;
    for (int l = 0; l < nl_; ++l) {
      double s = 0;
      for (double v : wb_[l]) s += v;
      mean_wb_[l] = s / P;
      for (double v : wb_[l])
        if (std::abs(v - mean_wb_[l]) > 1e-14 * std::max(1.0, std::abs(mean_wb_[l]))) constant_ = false;
    }
    symbol_.resize(P);
    for (int p = 0; p < P; ++p) symbol_[p] = detail::lateral_symbol(sp_, p, g_.lat.h());
  }

  int layers() const { return nl_; }
  std::size_t size() const { return static_cast<std::size_t>(nl_) * g_.lat.size(); }
  bool laterally_constant() const { return constant_; }
  double row_weight(int l) const { return wlat_[l]; }

  /// Depth index j of storage layer l within its phase (0 for the interface).
  int layer_depth(int l) const {
    const int M = g_.M;
    return l < M - 1 ? M - 1 - l : l - (M - 1);
  }

  void apply(const Field& x, Field& y) const {
    const int P = g_.lat.size();
    y.assign(size(), 0.0);
    Field lap(P);
    for (int l = 0; l < nl_; ++l) {
      const double* xl = &x[static_cast<std::size_t>(l) * P];
      double* yl = &y[static_cast<std::size_t>(l) * P];
      detail::lateral_laplacian(g_.lat, xl, lap.data());
      for (int p = 0; p < P; ++p) {
        double v = (diag_[l] + wb_[l][p]) * xl[p] - wlat_[l] * lap[p];
        if (l > 0) v += off_[l - 1] * xl[p - P];
        if (l + 1 < nl_) v += off_[l] * xl[p + P];
        yl[p] = v;
      }
    }
  }

  Field rhs() const {
    const int M = g_.M, P = g_.lat.size();
    const double h = g_.hz(), ih2 = 1.0 / (h * h);
    const double ap = d_.a_plus, am = d_.a_minus;
    const Field g = d_.jump(), q = d_.flux_jump();
    const Field lapg = detail::lateral_laplacian(g_.lat, g);
    Field r(size(), 0.0);
    for (int l = 0; l < nl_; ++l) {
      const int j = layer_depth(l);
      double* rl = &r[static_cast<std::size_t>(l) * P];
      for (int p = 0; p < P; ++p) {
        if (l < M - 1) {
          rl[p] = ap * d_.f1_plus[g_.at(p, j)];
          if (j == 1) rl[p] += ap * g[p] * ih2;
          if (j == M - 1) rl[p] += ap * d_.f4_plus[p] * ih2;
        } else if (l == M - 1) {
          const double bp = d_.b_plus[g_.at(p, 0)];
          rl[p] = -q[p] / h - ap * g[p] * ih2 - ap / 2 * (bp * g[p] - lapg[p] - d_.f1_plus[g_.at(p, 0)]) +
                  am / 2 * d_.f1_minus[g_.at(p, 0)];
        } else {
          rl[p] = am * d_.f1_minus[g_.at(p, j)];
          if (j == M - 1) rl[p] += am * d_.f4_minus[p] * ih2;
        }
      }
    }
    return r;
  }

  /// Exact inverse for laterally constant reaction terms; otherwise the inverse of the
  /// operator with each layer's reaction replaced by its lateral mean.
  void modal_solve(const Field& r, Field& z) const {
    const int P = g_.lat.size();
    std::vector<CField> rh(nl_);
    for (int l = 0; l < nl_; ++l)
      rh[l] = sp_.forward(Field(r.begin() + static_cast<std::ptrdiff_t>(l) * P, r.begin() + static_cast<std::ptrdiff_t>(l + 1) * P));
    std::vector<double> a(nl_), b(nl_), c(nl_);
    std::vector<cplx> d(nl_);
    for (int p = 0; p < P; ++p) {
      for (int l = 0; l < nl_; ++l) {
        a[l] = l > 0 ? off_[l - 1] : 0.0;
        c[l] = l + 1 < nl_ ? off_[l] : 0.0;
        b[l] = diag_[l] + mean_wb_[l] + wlat_[l] * symbol_[p];
        d[l] = rh[l][p];
      }
      solve_tridiagonal(a, b, c, d);
      for (int l = 0; l < nl_; ++l) rh[l][p] = d[l];
    }
    z.resize(size());
    for (int l = 0; l < nl_; ++l) {
      Field v = sp_.backward_real(rh[l]);
      std::copy(v.begin(), v.end(), z.begin() + static_cast<std::ptrdiff_t>(l) * P);
    }
  }

  PhaseField unpack(const Field& x, const std::string& role = "u") const {
    const int M = g_.M, P = g_.lat.size();
    const Field g = d_.jump();
    PhaseField u(g_, role);
    for (int l = 0; l < nl_; ++l) {
      const int j = layer_depth(l);
      for (int p = 0; p < P; ++p) {
        const double v = x[static_cast<std::size_t>(l) * P + p];
        if (l < M - 1) {
          u.plus[g_.at(p, j)] = v;
        } else if (l == M - 1) {
          u.minus[g_.at(p, 0)] = v;
          u.plus[g_.at(p, 0)] = v + g[p];
        } else {
          u.minus[g_.at(p, j)] = v;
        }
      }
    }
    for (int p = 0; p < P; ++p) {
      u.plus[g_.at(p, M)] = d_.f4_plus[p];
      u.minus[g_.at(p, M)] = d_.f4_minus[p];
    }
    return u;
  }

  Field pack(const PhaseField& u) const {
    const int M = g_.M, P = g_.lat.size();
    Field x(size());
    for (int l = 0; l < nl_; ++l) {
      const int j = layer_depth(l);
      for (int p = 0; p < P; ++p)
        x[static_cast<std::size_t>(l) * P + p] = l < M - 1 ? u.plus[g_.at(p, j)] : u.minus[g_.at(p, j)];
    }
    return x;
  }

private:
  const TransmissionData& d_;
  StripGrid g_;
  const Spectral& sp_;
  int nl_ = 0;
  std::vector<double> wlat_, diag_, off_, mean_wb_, symbol_;
  std::vector<Field> wb_;
  bool constant_ = true;
};

/// Preconditioned conjugate gradients with the modal solve as preconditioner.
inline Field pcg(const TransmissionOperator& op, const Field& b, const SolverOptions& o, SolveLog& log) {
  const double bn = std::sqrt(detail::dot(b, b));
  Field x(op.size(), 0.0);
  log.method = "pcg";
  if (bn == 0.0) return x;
  op.modal_solve(b, x);
  Field r, Ax, z, pdir, Ap;
  op.apply(x, Ax);
  r = axpy(-1.0, Ax, b);
  op.modal_solve(r, z);
  pdir = z;
  double rz = detail::dot(r, z);
  for (int it = 1; it <= o.max_iter; ++it) {
    const double rel = std::sqrt(detail::dot(r, r)) / bn;
    log.trace.push_back(rel);
    log.iterations = it - 1;
    log.relative_residual = rel;
    if (rel <= o.tol) return x;
    op.apply(pdir, Ap);
    const double alpha = rz / detail::dot(pdir, Ap);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] += alpha * pdir[i];
      r[i] -= alpha * Ap[i];
    }
    op.modal_solve(r, z);
    const double rz1 = detail::dot(r, z);
    for (std::size_t i = 0; i < x.size(); ++i) pdir[i] = z[i] + rz1 / rz * pdir[i];
    rz = rz1;
  }
  std::ostringstream os;
  os << "transmission solve did not reach relative residual " << o.tol << " in " << o.max_iter
     << " iterations (last " << log.relative_residual << ")";
  throw SolverError(os.str(), log.trace);
}

/// Solves -lap u+- + b+- u+- = f1+-, u+ - u- = f2 - A rho, a+ du+/dn - a- du-/dn =
/// f3+ - f3- + Hvec . grad rho, u+- = f4+- at x_N = +-1.
inline PhaseField solve_transmission(const TransmissionData& d, const SolverOptions& o = {}, SolveLog* log = nullptr) {
  d.validate();
  TransmissionOperator op(d);
  SolveLog local;
  SolveLog& lg = log ? *log : local;
  lg = SolveLog{};
  const Field b = op.rhs();
  Field x;
  if (op.laterally_constant()) {
    op.modal_solve(b, x);
    lg.method = "modal";
    Field Ax;
    op.apply(x, Ax);
    const double bn = std::sqrt(detail::dot(b, b));
    lg.relative_residual = bn > 0 ? std::sqrt(detail::dot(axpy(-1.0, Ax, b), axpy(-1.0, Ax, b))) / bn : 0.0;
  } else {
    x = pcg(op, b, o, lg);
  }
  return op.unpack(x);
}

/// One-sided second-order du/dx_N at x_N = 0 from the indicated side.
inline Field normal_derivative(const StripGrid& g, const PhaseField& u, Side side) {
  MUSKAT_REQUIRE(g.M >= 2, "normal derivative needs at least 3 layers on the side, got " << g.M + 1);
  const int P = g.lat.size();
  const double h = g.hz();
  const Field& v = u.side(side);
  const double s = side == Side::plus ? 1.0 : -1.0;
  Field out(P);
  for (int p = 0; p < P; ++p)
    out[p] = s * (-3 * v[g.at(p, 0)] + 4 * v[g.at(p, 1)] - v[g.at(p, 2)]) / (2 * h);
  return out;
}

/// Interface fluxes du+-/dx_N consistent with the eliminated ghost values.
inline std::pair<Field, Field> interface_fluxes(const TransmissionData& d, const PhaseField& u) {
  const StripGrid& g = d.grid;
  const int P = g.lat.size();
  const double h = g.hz();
  const Field up0 = layer(g, u.plus, 0), um0 = layer(g, u.minus, 0);
  const Field lp = detail::lateral_laplacian(g.lat, up0), lm = detail::lateral_laplacian(g.lat, um0);
  Field fp(P), fm(P);
  for (int p = 0; p < P; ++p) {
    const std::size_t i0 = g.at(p, 0), i1 = g.at(p, 1);
    const double Rp = d.b_plus[i0] * up0[p] - lp[p] - d.f1_plus[i0];
    const double Rm = d.b_minus[i0] * um0[p] - lm[p] - d.f1_minus[i0];
    fp[p] = (u.plus[i1] - up0[p]) / h - h / 2 * Rp;
    fm[p] = (um0[p] - u.minus[i1]) / h + h / 2 * Rm;
  }
  return {fp, fm};
}

struct TransmissionResiduals {
  double bulk = 0.0;      ///< interior rows, equation units
  double jump = 0.0;
  double flux = 0.0;      ///< ghost-consistent flux jump
  double dirichlet = 0.0;
};

inline TransmissionResiduals transmission_residuals(const TransmissionData& d, const PhaseField& u) {
  const StripGrid& g = d.grid;
  const int P = g.lat.size(), M = g.M;
  const double h = g.hz();
  TransmissionResiduals r;
  for (int side = 0; side < 2; ++side) {
    const Field& v = side == 0 ? u.plus : u.minus;
    const Field& b = side == 0 ? d.b_plus : d.b_minus;
    const Field& f = side == 0 ? d.f1_plus : d.f1_minus;
    for (int j = 1; j < M; ++j) {
      const Field lap = detail::lateral_laplacian(g.lat, layer(g, v, j));
      for (int p = 0; p < P; ++p) {
        const double vzz = (v[g.at(p, j + 1)] - 2 * v[g.at(p, j)] + v[g.at(p, j - 1)]) / (h * h);
        r.bulk = std::max(r.bulk, std::abs(-vzz - lap[p] + b[g.at(p, j)] * v[g.at(p, j)] - f[g.at(p, j)]));
      }
    }
  }
  const Field gj = d.jump(), q = d.flux_jump();
  auto [fp, fm] = interface_fluxes(d, u);
  for (int p = 0; p < P; ++p) {
    r.jump = std::max(r.jump, std::abs(u.plus[g.at(p, 0)] - u.minus[g.at(p, 0)] - gj[p]));
    r.flux = std::max(r.flux, std::abs(d.a_plus * fp[p] - d.a_minus * fm[p] - q[p]));
    r.dirichlet = std::max({r.dirichlet, std::abs(u.plus[g.at(p, M)] - d.f4_plus[p]),
                            std::abs(u.minus[g.at(p, M)] - d.f4_minus[p])});
  }
  return r;
}

/// Terms of the integrated energy identity
///   sum a+-(|grad u+-|^2 + b+- u+-^2) + int_0 (u- q + g a+ du+) + outer = sum a+- f1+- u+-.
struct EnergyIdentity {
  double gradient = 0.0, reaction = 0.0, interface = 0.0, outer = 0.0, data = 0.0;
  double relative_residual = 0.0;
};

inline EnergyIdentity energy_identity(const TransmissionData& d, const PhaseField& u) {
  const StripGrid& g = d.grid;
  const int P = g.lat.size(), M = g.M;
  const double h = g.hz(), dA = g.lat.cell_volume();
  EnergyIdentity e;
  const int n0 = g.lat.n[0], n1 = g.lat.n[1];
  const double hl = g.lat.h();
  for (int side = 0; side < 2; ++side) {
    const double a = side == 0 ? d.a_plus : d.a_minus;
    const Field& v = side == 0 ? u.plus : u.minus;
    const Field& b = side == 0 ? d.b_plus : d.b_minus;
    const Field& f = side == 0 ? d.f1_plus : d.f1_minus;
    for (int j = 0; j <= M; ++j) {
      const double wz = (j == 0 || j == M ? 0.5 : 1.0) * h;
      for (int i1 = 0; i1 < n1; ++i1)
        for (int i0 = 0; i0 < n0; ++i0) {
          const int p = g.lat.index(i0, i1);
          const std::size_t k = g.at(p, j);
          const double dx0 = (v[g.at(g.lat.index((i0 + 1) % n0, i1), j)] - v[g.at(g.lat.index((i0 + n0 - 1) % n0, i1), j)]) / (2 * hl);
          const double dx1 = g.lat.dim == 2 ? (v[g.at(g.lat.index(i0, (i1 + 1) % n1), j)] -
                                               v[g.at(g.lat.index(i0, (i1 + n1 - 1) % n1), j)]) / (2 * hl)
                                            : 0.0;
          const double dz = geometry::Column::d1(&v[p], P, j, M, h);
          e.gradient += a * (dx0 * dx0 + dx1 * dx1 + dz * dz) * wz * dA;
          e.reaction += a * b[k] * v[k] * v[k] * wz * dA;
          e.data += a * f[k] * v[k] * wz * dA;
        }
    }
  }
  const Field gj = d.jump(), q = d.flux_jump();
  auto [fp, fm] = interface_fluxes(d, u);
  for (int p = 0; p < P; ++p) {
    e.interface += (u.minus[g.at(p, 0)] * q[p] + gj[p] * d.a_plus * fp[p]) * dA;
    const double dtop = geometry::Column::d1(&u.plus[p], P, M, M, h);
    const double dbot = -geometry::Column::d1(&u.minus[p], P, M, M, h);
    e.outer += (-d.a_plus * u.plus[g.at(p, M)] * dtop + d.a_minus * u.minus[g.at(p, M)] * dbot) * dA;
  }
  const double lhs = e.gradient + e.reaction + e.interface + e.outer;
  const double scale = std::max({std::abs(e.gradient) + std::abs(e.reaction), std::abs(e.data), 1e-300});
  e.relative_residual = (lhs == 0.0 && e.data == 0.0) ? 0.0 : std::abs(lhs - e.data) / scale;
  return e;
}

struct SemilinearProblem {
  StripGrid grid;
  double a_plus = 1.0, a_minus = 1.0;
  std::function<double(double)> f_plus, df_plus, f_minus, df_minus;
  Field g_plus, g_minus; ///< Dirichlet data at x_N = +1 and x_N = -1
  double nu = 1e-8;
  int max_iter = 30;
  double tol = 1e-12; ///< relative to the initial residual
};

struct SemilinearResult {
  PhaseField u;
  std::vector<double> residuals; ///< nonlinear residual before each Newton step and at exit
  int iterations = 0;
  Field flux_plus, flux_minus;   ///< du+-/dn at the interface
  double flux_margin = 0.0;      ///< min over the interface of min(du+/dn, du-/dn)
  double jump_margin = 0.0;      ///< min of du+/dn - du-/dn
  bool nondegenerate = false;
};

namespace detail {

inline TransmissionData newton_data(const SemilinearProblem& pr, const PhaseField& u) {
  TransmissionData d = TransmissionData::zeros(pr.grid, pr.a_plus, pr.a_minus, 1.0, 1.0);
  d.nu = pr.nu;
  d.f4_plus = pr.g_plus;
  d.f4_minus = pr.g_minus;
  for (std::size_t k = 0; k < u.plus.size(); ++k) {
    const double up = u.plus[k], um = u.minus[k];
    d.b_plus[k] = pr.df_plus(up);
    d.b_minus[k] = pr.df_minus(um);
    d.f1_plus[k] = d.b_plus[k] * up - pr.f_plus(up);
    d.f1_minus[k] = d.b_minus[k] * um - pr.f_minus(um);
  }
  return d;
}

/// Sup of the discrete nonlinear residual -lap u + f(u) in equation units, including the
/// interface flux row.
inline double semilinear_residual(const SemilinearProblem& pr, const PhaseField& u) {
  TransmissionData d = newton_data(pr, u);
  // b u - f1 = f(u) node by node, so the linearised residual equals the nonlinear one
  TransmissionOperator op(d);
  Field Ax;
  const Field x = op.pack(u);
  op.apply(x, Ax);
  const Field b = op.rhs();
  const int P = pr.grid.lat.size();
  double r = 0;
  for (int l = 0; l < op.layers(); ++l)
    for (int p = 0; p < P; ++p) {
      const std::size_t i = static_cast<std::size_t>(l) * P + p;
      r = std::max(r, std::abs(Ax[i] - b[i]) / op.row_weight(l));
    }
  return r;
}

} // namespace detail

/// Newton iteration for lap u+- = f+-(u+-) with u+ = u- and a+ du+/dn = a- du-/dn at x_N = 0.
inline SemilinearResult solve_semilinear_stationary(const SemilinearProblem& pr, const SolverOptions& o = {}) {
  MUSKAT_REQUIRE(pr.f_plus && pr.df_plus && pr.f_minus && pr.df_minus, "semilinear sources are not set");
  const int P = pr.grid.lat.size();
  MUSKAT_REQUIRE(static_cast<int>(pr.g_plus.size()) == P && static_cast<int>(pr.g_minus.size()) == P,
                 "Dirichlet data do not match the lateral lattice");
  SemilinearResult res;
  res.u = PhaseField(pr.grid, "u0");
  for (int p = 0; p < P; ++p) {
    res.u.plus[pr.grid.at(p, pr.grid.M)] = pr.g_plus[p];
    res.u.minus[pr.grid.at(p, pr.grid.M)] = pr.g_minus[p];
  }
  SolverOptions inner = o;
  inner.tol = std::min(o.tol, 1e-13);
  int growth = 0;
  for (int it = 0;; ++it) {
    const double r = detail::semilinear_residual(pr, res.u);
    res.residuals.push_back(r);
    if (r <= pr.tol * std::max(1.0, res.residuals.front())) break;
    if (it > 0 && r > res.residuals[it - 1]) ++growth;
    if (it >= pr.max_iter || growth >= 3) {
      std::ostringstream os;
      os << "Newton iteration stagnated after " << it << " steps (residual " << r << ")";
      throw SolverError(os.str(), res.residuals);
    }
    TransmissionData d = detail::newton_data(pr, res.u);
    res.u = solve_transmission(d, inner);
    res.u.role = "u0";
    res.iterations = it + 1;
  }
  TransmissionData d = detail::newton_data(pr, res.u);
  std::tie(res.flux_plus, res.flux_minus) = interface_fluxes(d, res.u);
  res.flux_margin = std::numeric_limits<double>::infinity();
  res.jump_margin = std::numeric_limits<double>::infinity();
  for (int p = 0; p < P; ++p) {
    res.flux_margin = std::min({res.flux_margin, res.flux_plus[p], res.flux_minus[p]});
    res.jump_margin = std::min(res.jump_margin, res.flux_plus[p] - res.flux_minus[p]);
  }
  res.nondegenerate = res.flux_margin >= pr.nu && res.jump_margin >= pr.nu;
  return res;
}

} // namespace muskat::elliptic
