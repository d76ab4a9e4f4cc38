#pragma once

// Discrete estimators for anisotropic Hölder norms E^{k+a} and P^{k+a}.
//
// Pair suprema are O(n^2); node sets above the configured caps are subsampled
// with a deterministic stride.

#include "muskat/core.hpp"

#include <algorithm>
#include <functional>
#include <limits>

namespace muskat::holder {

/// Samples of u(x, t). Spatial axes come first (axis 0 fastest), time is the
/// slowest axis with `dims.back()` levels.
struct GridFunction {
  std::vector<int> dims;
  std::vector<double> h;
  double tau = 1.0;
  std::vector<bool> periodic;
  Field values;

  GridFunction() = default;
  GridFunction(std::vector<int> d, std::vector<double> spacing, double dt, std::vector<bool> per, Field v)
      : dims(std::move(d)), h(std::move(spacing)), tau(dt), periodic(std::move(per)), values(std::move(v)) {
    validate();
  }

  int space_axes() const { return static_cast<int>(dims.size()) - 1; }
  int levels() const { return dims.back(); }
  std::size_t space_size() const {
    std::size_t s = 1;
    for (int a = 0; a < space_axes(); ++a) s *= static_cast<std::size_t>(dims[a]);
    return s;
  }
  double& at(std::size_t node, int n) { return values[node + space_size() * n]; }
  double at(std::size_t node, int n) const { return values[node + space_size() * n]; }

  void validate() const {
    MUSKAT_REQUIRE(dims.size() >= 2, "grid function needs at least one space axis and a time axis");
    MUSKAT_REQUIRE(static_cast<int>(h.size()) == space_axes() && static_cast<int>(periodic.size()) == space_axes(),
                   "grid function spacing/periodicity must be given per space axis");
    for (double s : h) MUSKAT_REQUIRE(s > 0, "spacing must be positive");
    MUSKAT_REQUIRE(tau > 0, "time step must be positive");
    std::size_t total = space_size() * static_cast<std::size_t>(levels());
    MUSKAT_REQUIRE(values.size() == total, "grid function has " << values.size() << " values, expected " << total);
    for (double v : values) MUSKAT_REQUIRE(std::isfinite(v), "grid function contains a non-finite value");
  }
};

struct HolderOptions {
  int space_nodes = 1024;      ///< cap on sampled nodes for spatial pair sups
  int mixed_space_nodes = 256; ///< cap on sampled nodes for mixed pair sups
  int time_levels = 17;        ///< cap on sampled time levels for pair sups
};

struct HolderEstimate {
  int k = 0;
  double alpha = 0.5;
  double sup = 0.0;
  std::array<double, 4> deriv_sups{};      ///< max_t sum_{|r|=j} |D^r u|, j = 0..k
  std::array<double, 4> space_seminorms{}; ///< max_t sum_{|r|=j} <D^r u>_x
  double time_seminorm = 0.0;              ///< sum_{|r|<=k} <D^r u>_t
  double mixed = 0.0;                      ///< sum_{|r|<=k} [D^r u]^{(a,a)}
  double e_norm = 0.0;
  double p_norm = 0.0;
  bool has_p = false;
  double reduced = 0.0;    ///< sup + <u>_t + sum_{|r|=k} [D^r u]  (interpolated form, diagnostic)
  double equivalent = 0.0; ///< sup + <u>_t + top-order difference-quotient form (diagnostic)
};

namespace detail {

inline std::vector<int> sample_indices(int n, int m, bool periodic) {
  std::vector<int> idx;
  if (m >= n) {
    idx.resize(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    return idx;
  }
  idx.resize(m);
  for (int i = 0; i < m; ++i)
    idx[i] = periodic ? static_cast<int>((static_cast<long long>(i) * n) / m)
                      : static_cast<int>(std::llround(static_cast<double>(i) * (n - 1) / (m - 1)));
  return idx;
}

/// Per-axis sample counts whose product does not exceed `cap`.
inline std::vector<int> sample_counts(const GridFunction& u, int cap) {
  std::vector<int> m(u.dims.begin(), u.dims.end() - 1);
  auto product = [&] {
    long long p = 1;
    for (int v : m) p *= v;
    return p;
  };
  while (product() > cap) {
    auto it = std::max_element(m.begin(), m.end());
    if (*it <= 2) break;
    *it = std::max(2, (*it + 1) / 2);
  }
  return m;
}

struct SampledNodes {
  std::vector<std::size_t> node;
  std::vector<std::vector<double>> coord; // per node, per axis
};

inline SampledNodes sample_nodes(const GridFunction& u, int cap) {
  const int S = u.space_axes();
  std::vector<int> m = sample_counts(u, cap);
  std::vector<std::vector<int>> idx(S);
  for (int a = 0; a < S; ++a) idx[a] = sample_indices(u.dims[a], m[a], u.periodic[a]);
  SampledNodes out;
  std::vector<int> c(S, 0);
  while (true) {
    std::size_t node = 0, stride = 1;
    std::vector<double> x(S);
    for (int a = 0; a < S; ++a) {
      node += stride * static_cast<std::size_t>(idx[a][c[a]]);
      stride *= static_cast<std::size_t>(u.dims[a]);
      x[a] = idx[a][c[a]] * u.h[a];
    }
    out.node.push_back(node);
    out.coord.push_back(std::move(x));
    int a = 0;
    while (a < S && ++c[a] == static_cast<int>(idx[a].size())) c[a++] = 0;
    if (a == S) break;
  }
  return out;
}

inline double distance(const GridFunction& u, const std::vector<double>& x, const std::vector<double>& y) {
  double s = 0.0;
  for (int a = 0; a < u.space_axes(); ++a) {
    double d = std::abs(x[a] - y[a]);
    if (u.periodic[a]) {
      const double P = u.dims[a] * u.h[a];
      d = std::min(d, P - d);
    }
    s += d * d;
  }
  return std::sqrt(s);
}

/// Derivative of order `ord` (0..3) along `axis` applied at every time level.
inline Field axis_derivative(const GridFunction& u, const Field& v, int axis, int ord) {
  if (ord == 0) return v;
  const int n = u.dims[axis];
  MUSKAT_REQUIRE(n >= (u.periodic[axis] || ord == 1 ? 3 : 4),
                 "axis " << axis << " has " << n << " nodes, too few for a derivative of order " << ord);
  std::size_t stride = 1;
  for (int a = 0; a < axis; ++a) stride *= static_cast<std::size_t>(u.dims[a]);
  const double h = u.h[axis];
  Field out(v.size());
  const std::size_t total = v.size();
  const std::size_t block = stride * static_cast<std::size_t>(n);
  auto second = [&](const Field& w, Field& r) {
    for (std::size_t base = 0; base < total; base += block)
      for (std::size_t s = 0; s < stride; ++s) {
        auto W = [&](int i) { return w[base + s + stride * static_cast<std::size_t>(i)]; };
        for (int i = 0; i < n; ++i) {
          double val;
          if (u.periodic[axis]) {
            val = (W((i + 1) % n) - 2 * W(i) + W((i - 1 + n) % n)) / (h * h);
          } else if (i == 0) {
            val = (2 * W(0) - 5 * W(1) + 4 * W(2) - W(3)) / (h * h);
          } else if (i == n - 1) {
            val = (2 * W(n - 1) - 5 * W(n - 2) + 4 * W(n - 3) - W(n - 4)) / (h * h);
          } else {
            val = (W(i + 1) - 2 * W(i) + W(i - 1)) / (h * h);
          }
          r[base + s + stride * static_cast<std::size_t>(i)] = val;
        }
      }
  };
  auto first = [&](const Field& w, Field& r) {
    for (std::size_t base = 0; base < total; base += block)
      for (std::size_t s = 0; s < stride; ++s) {
        auto W = [&](int i) { return w[base + s + stride * static_cast<std::size_t>(i)]; };
        for (int i = 0; i < n; ++i) {
          double val;
          if (u.periodic[axis]) {
            val = (W((i + 1) % n) - W((i - 1 + n) % n)) / (2 * h);
          } else if (i == 0) {
            val = (-3 * W(0) + 4 * W(1) - W(2)) / (2 * h);
          } else if (i == n - 1) {
            val = (3 * W(n - 1) - 4 * W(n - 2) + W(n - 3)) / (2 * h);
          } else {
            val = (W(i + 1) - W(i - 1)) / (2 * h);
          }
          r[base + s + stride * static_cast<std::size_t>(i)] = val;
        }
      }
  };
  if (ord == 1) {
    first(v, out);
  } else if (ord == 2) {
    second(v, out);
  } else {
    Field tmp(v.size());
    second(v, tmp);
    first(tmp, out);
  }
  return out;
}

/// All D^r u with |r| = j for j = 0..k, grouped by order. Multi-indices are
/// per-axis derivative counts.
inline std::vector<std::vector<Field>> derivative_fields(const GridFunction& u, int k) {
  const int S = u.space_axes();
  std::vector<std::vector<Field>> out(k + 1);
  std::vector<int> r(S, 0);
  std::function<void(int, int)> rec = [&](int axis, int left) {
    if (axis == S - 1) {
      r[axis] = left;
      Field f = u.values;
      for (int a = 0; a < S; ++a) f = axis_derivative(u, f, a, r[a]);
      int order = 0;
      for (int v : r) order += v;
      out[order].push_back(std::move(f));
      return;
    }
    for (int c = left; c >= 0; --c) {
      r[axis] = c;
      rec(axis + 1, left - c);
    }
  };
  for (int j = 0; j <= k; ++j) rec(0, j);
  return out;
}

struct PairTable {
  std::vector<std::size_t> a, b;
  std::vector<double> w; // 1 / dist^alpha
};

inline PairTable space_pairs(const GridFunction& u, const SampledNodes& s, double alpha) {
  PairTable t;
  const std::size_t m = s.node.size();
  t.a.reserve(m * (m - 1) / 2);
  t.b.reserve(m * (m - 1) / 2);
  t.w.reserve(m * (m - 1) / 2);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) {
      const double d = distance(u, s.coord[i], s.coord[j]);
      if (d <= 0) continue;
      t.a.push_back(s.node[i]);
      t.b.push_back(s.node[j]);
      t.w.push_back(std::pow(d, -alpha));
    }
  return t;
}

inline double pair_sup(const Field& f, std::size_t offset, const PairTable& t) {
  double m = 0.0;
  for (std::size_t q = 0; q < t.w.size(); ++q)
    m = std::max(m, std::abs(f[offset + t.a[q]] - f[offset + t.b[q]]) * t.w[q]);
  return m;
}

inline double mixed_sup(const GridFunction& u, const Field& f, const PairTable& sp, const std::vector<int>& lv,
                        double beta, double max_gap) {
  const std::size_t S = u.space_size();
  double m = 0.0;
  for (std::size_t i = 0; i < lv.size(); ++i)
    for (std::size_t j = i + 1; j < lv.size(); ++j) {
      const double gap = (lv[j] - lv[i]) * u.tau;
      if (gap >= max_gap) continue;
      const double wt = std::pow(gap, -beta);
      const std::size_t oi = S * lv[i], oj = S * lv[j];
      for (std::size_t q = 0; q < sp.w.size(); ++q) {
        const double d = f[oi + sp.a[q]] - f[oi + sp.b[q]] - f[oj + sp.a[q]] + f[oj + sp.b[q]];
        m = std::max(m, std::abs(d) * sp.w[q] * wt);
      }
    }
  return m;
}

inline double time_sup(const GridFunction& u, const Field& f, const std::vector<int>& lv, double alpha) {
  const std::size_t S = u.space_size();
  double m = 0.0;
  for (std::size_t i = 0; i < lv.size(); ++i)
    for (std::size_t j = i + 1; j < lv.size(); ++j) {
      const double wt = std::pow((lv[j] - lv[i]) * u.tau, -alpha);
      const std::size_t oi = S * lv[i], oj = S * lv[j];
      for (std::size_t x = 0; x < S; ++x) m = std::max(m, std::abs(f[oi + x] - f[oj + x]) * wt);
    }
  return m;
}

inline void require_nondegenerate(const GridFunction& u, bool need_time) {
  for (int a = 0; a < u.space_axes(); ++a)
    MUSKAT_REQUIRE(u.dims[a] >= 2, "degenerate lattice: space axis " << a << " has a single node");
  if (need_time) MUSKAT_REQUIRE(u.levels() >= 2, "degenerate lattice: time axis has a single level");
}

} // namespace detail

/// sup over node pairs with x != y, t != tau of the second difference quotient.
inline double mixed_seminorm(const GridFunction& u, double alpha, double beta, const HolderOptions& opt = {}) {
  u.validate();
  MUSKAT_REQUIRE(alpha > 0 && alpha < 1 && beta > 0 && beta < 1, "exponents must lie in (0,1)");
  detail::require_nondegenerate(u, true);
  auto nodes = detail::sample_nodes(u, opt.mixed_space_nodes);
  auto pairs = detail::space_pairs(u, nodes, alpha);
  auto lv = detail::sample_indices(u.levels(), opt.time_levels, false);
  return detail::mixed_sup(u, u.values, pairs, lv, beta, std::numeric_limits<double>::infinity());
}

/// Components of the E^{k+alpha} norm. A single time level is allowed and
/// contributes no time or mixed terms.
inline HolderEstimate e_norm(const GridFunction& u, int k, double alpha, const HolderOptions& opt = {}) {
  u.validate();
  MUSKAT_REQUIRE(k >= 0 && k <= 3, "derivative order k must lie in 0..3, got " << k);
  MUSKAT_REQUIRE(alpha > 0 && alpha < 1, "alpha must lie in (0,1)");
  detail::require_nondegenerate(u, false);

  HolderEstimate est;
  est.k = k;
  est.alpha = alpha;
  const auto D = detail::derivative_fields(u, k);
  const std::size_t S = u.space_size();
  const int levels = u.levels();

  for (int j = 0; j <= k; ++j) {
    double best = 0.0;
    for (int n = 0; n < levels; ++n) {
      double s = 0.0;
      for (const Field& f : D[j]) {
        double m = 0.0;
        for (std::size_t x = 0; x < S; ++x) m = std::max(m, std::abs(f[S * n + x]));
        s += m;
      }
      best = std::max(best, s);
    }
    est.deriv_sups[j] = best;
  }
  est.sup = est.deriv_sups[0];

  const auto lv = detail::sample_indices(levels, opt.time_levels, false);
  {
    auto nodes = detail::sample_nodes(u, opt.space_nodes);
    auto pairs = detail::space_pairs(u, nodes, alpha);
    for (int j = 0; j <= k; ++j) {
      double best = 0.0;
      for (int n : lv) {
        double s = 0.0;
        for (const Field& f : D[j]) s += detail::pair_sup(f, S * static_cast<std::size_t>(n), pairs);
        best = std::max(best, s);
      }
      est.space_seminorms[j] = best;
    }
  }

  double top_mixed = 0.0, top_mixed_short = 0.0, st0 = 0.0;
  if (levels >= 2) {
    auto nodes = detail::sample_nodes(u, opt.mixed_space_nodes);
    auto pairs = detail::space_pairs(u, nodes, alpha);
    const double inf = std::numeric_limits<double>::infinity();
    for (int j = 0; j <= k; ++j)
      for (const Field& f : D[j]) {
        const double ts = detail::time_sup(u, f, lv, alpha);
        const double mx = detail::mixed_sup(u, f, pairs, lv, alpha, inf);
        est.time_seminorm += ts;
        est.mixed += mx;
        if (j == 0) st0 = ts;
        if (j == k) {
          top_mixed += mx;
          top_mixed_short += detail::mixed_sup(u, f, pairs, lv, alpha, 1.0);
        }
      }
  }

  est.e_norm = est.sup + est.space_seminorms[k] + est.time_seminorm + est.mixed;
  for (int j = 1; j <= k; ++j) est.e_norm += est.deriv_sups[j];
  est.reduced = est.sup + st0 + top_mixed;
  est.equivalent = est.sup + st0 + top_mixed_short;
  return est;
}

/// Discrete time derivative: centred inside, one-sided second order at the ends.
inline GridFunction time_derivative(const GridFunction& u) {
  const int L = u.levels();
  MUSKAT_REQUIRE(L >= 3, "time derivative needs at least 3 time levels, got " << L);
  GridFunction d = u;
  const std::size_t S = u.space_size();
  for (int n = 0; n < L; ++n)
    for (std::size_t x = 0; x < S; ++x) {
      double v;
      if (n == 0)
        v = (-3 * u.at(x, 0) + 4 * u.at(x, 1) - u.at(x, 2)) / (2 * u.tau);
      else if (n == L - 1)
        v = (3 * u.at(x, L - 1) - 4 * u.at(x, L - 2) + u.at(x, L - 3)) / (2 * u.tau);
      else
        v = (u.at(x, n + 1) - u.at(x, n - 1)) / (2 * u.tau);
      d.at(x, n) = v;
    }
  return d;
}

/// |rho|_{E^{k+a}} + |rho_t|_{E^{1+a}}.
inline HolderEstimate p_norm(const GridFunction& rho, double alpha, int k, const HolderOptions& opt = {}) {
  MUSKAT_REQUIRE(k == 2 || k == 3, "P-norm order must be 2 or 3, got " << k);
  MUSKAT_REQUIRE(rho.levels() >= 3, "P-norm needs at least 3 time levels, got " << rho.levels());
  HolderEstimate est = e_norm(rho, k, alpha, opt);
  const HolderEstimate et = e_norm(time_derivative(rho), 1, alpha, opt);
  est.p_norm = est.e_norm + et.e_norm;
  est.has_p = true;
  return est;
}

/// Lateral torus fields, one per time level.
inline GridFunction lateral_series(const LateralGrid& g, const std::vector<Field>& levels, double tau) {
  std::vector<int> dims;
  std::vector<double> h;
  std::vector<bool> per;
  for (int a = 0; a < g.dim; ++a) {
    dims.push_back(g.n[a]);
    h.push_back(g.h());
    per.push_back(true);
  }
  dims.push_back(static_cast<int>(levels.size()));
  Field v;
  v.reserve(static_cast<std::size_t>(g.size()) * levels.size());
  for (const Field& f : levels) v.insert(v.end(), f.begin(), f.end());
  return GridFunction(dims, h, tau, per, std::move(v));
}

/// One strip phase (layers 0..M) per time level; the vertical axis is non-periodic.
inline GridFunction bulk_series(const StripGrid& g, const std::vector<Field>& levels, double tau) {
  std::vector<int> dims;
  std::vector<double> h;
  std::vector<bool> per;
  for (int a = 0; a < g.lat.dim; ++a) {
    dims.push_back(g.lat.n[a]);
    h.push_back(g.lat.h());
    per.push_back(true);
  }
  dims.push_back(g.layers());
  h.push_back(g.hz());
  per.push_back(false);
  dims.push_back(static_cast<int>(levels.size()));
  Field v;
  v.reserve(g.bulk_size() * levels.size());
  for (const Field& f : levels) v.insert(v.end(), f.begin(), f.end());
  return GridFunction(dims, h, tau, per, std::move(v));
}

/// Restriction to time levels [n0, n1].
inline GridFunction time_window(const GridFunction& u, int n0, int n1) {
  MUSKAT_REQUIRE(0 <= n0 && n0 <= n1 && n1 < u.levels(), "invalid time window");
  GridFunction w;
  w.dims = u.dims;
  w.dims.back() = n1 - n0 + 1;
  w.h = u.h;
  w.tau = u.tau;
  w.periodic = u.periodic;
  const std::size_t S = u.space_size();
  w.values.assign(u.values.begin() + static_cast<std::ptrdiff_t>(S * n0),
                  u.values.begin() + static_cast<std::ptrdiff_t>(S * (n1 + 1)));
  return w;
}

inline GridFunction scaled(const GridFunction& u, double c) {
  GridFunction r = u;
  for (double& v : r.values) v *= c;
  return r;
}

inline GridFunction difference(const GridFunction& a, const GridFunction& b) {
  MUSKAT_REQUIRE(a.dims == b.dims, "grid function shapes differ");
  GridFunction r = a;
  for (std::size_t i = 0; i < r.values.size(); ++i) r.values[i] -= b.values[i];
  return r;
}

} // namespace muskat::holder
