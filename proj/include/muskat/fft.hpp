#pragma once

#include "muskat/core.hpp"

#include <fftw3.h>

#include <complex>
#include <map>
#include <memory>
#include <tuple>

namespace muskat {

using cplx = std::complex<double>;
using CField = std::vector<cplx>;

/// Spectral toolkit on a lateral torus. Methods share scratch buffers, so one
/// instance must not be used from two threads at once.
class Spectral {
public:
  explicit Spectral(const LateralGrid& g) : grid_(g), size_(static_cast<std::size_t>(g.size())) {
    buf_.reset(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * size_)));
    if (g.dim == 1) {
      fwd_.reset(fftw_plan_dft_1d(g.n[0], buf_.get(), buf_.get(), FFTW_FORWARD, FFTW_ESTIMATE));
      bwd_.reset(fftw_plan_dft_1d(g.n[0], buf_.get(), buf_.get(), FFTW_BACKWARD, FFTW_ESTIMATE));
    } else {
      fwd_.reset(fftw_plan_dft_2d(g.n[1], g.n[0], buf_.get(), buf_.get(), FFTW_FORWARD, FFTW_ESTIMATE));
      bwd_.reset(fftw_plan_dft_2d(g.n[1], g.n[0], buf_.get(), buf_.get(), FFTW_BACKWARD, FFTW_ESTIMATE));
    }
    k_.resize(size_);
    nyq_.resize(size_);
    for (int i1 = 0; i1 < g.n[1]; ++i1)
      for (int i0 = 0; i0 < g.n[0]; ++i0) {
        const std::size_t p = g.index(i0, i1);
        k_[p] = {wavenumber(i0, g.n[0]), g.dim == 2 ? wavenumber(i1, g.n[1]) : 0.0};
        nyq_[p] = {g.n[0] % 2 == 0 && i0 == g.n[0] / 2, g.dim == 2 && g.n[1] % 2 == 0 && i1 == g.n[1] / 2};
      }
  }

  const LateralGrid& grid() const { return grid_; }
  std::size_t size() const { return size_; }
  const std::array<double, 2>& k(std::size_t p) const { return k_[p]; }
  double kabs(std::size_t p) const { return std::hypot(k_[p][0], k_[p][1]); }
  double k2(std::size_t p) const { return k_[p][0] * k_[p][0] + k_[p][1] * k_[p][1]; }
  bool nyquist(std::size_t p, int axis) const { return nyq_[p][axis]; }

  /// Unnormalised forward transform.
  CField forward(const Field& f) const {
    MUSKAT_REQUIRE(f.size() == size_, "spectral forward: size " << f.size() << " != " << size_);
    for (std::size_t p = 0; p < size_; ++p) {
      buf_.get()[p][0] = f[p];
      buf_.get()[p][1] = 0.0;
    }
    fftw_execute(fwd_.get());
    CField c(size_);
    for (std::size_t p = 0; p < size_; ++p) c[p] = {buf_.get()[p][0], buf_.get()[p][1]};
    return c;
  }

  CField forward(const CField& f) const {
    for (std::size_t p = 0; p < size_; ++p) {
      buf_.get()[p][0] = f[p].real();
      buf_.get()[p][1] = f[p].imag();
    }
    fftw_execute(fwd_.get());
    CField c(size_);
    for (std::size_t p = 0; p < size_; ++p) c[p] = {buf_.get()[p][0], buf_.get()[p][1]};
    return c;
  }

  /// Normalised inverse transform.
  CField backward(const CField& c) const {
    for (std::size_t p = 0; p < size_; ++p) {
      buf_.get()[p][0] = c[p].real();
      buf_.get()[p][1] = c[p].imag();
    }
    fftw_execute(bwd_.get());
    CField f(size_);
    const double s = 1.0 / static_cast<double>(size_);
    for (std::size_t p = 0; p < size_; ++p) f[p] = {buf_.get()[p][0] * s, buf_.get()[p][1] * s};
    return f;
  }

  Field backward_real(const CField& c) const {
    CField f = backward(c);
    Field r(size_);
    for (std::size_t p = 0; p < size_; ++p) r[p] = f[p].real();
    return r;
  }

  /// Apply a Fourier multiplier symbol(p) to a real field.
  template <class Symbol>
  Field multiply(const Field& f, Symbol&& symbol) const {
    CField c = forward(f);
    for (std::size_t p = 0; p < size_; ++p) c[p] *= symbol(p);
    return backward_real(c);
  }

  Field derivative(const Field& f, int axis) const {
    return multiply(f, [&](std::size_t p) { return nyq_[p][axis] ? cplx(0.0) : cplx(0.0, k_[p][axis]); });
  }

  Field second_derivative(const Field& f, int axis) const {
    return multiply(f, [&](std::size_t p) { return cplx(-k_[p][axis] * k_[p][axis]); });
  }

  Field mixed_derivative(const Field& f, int a, int b) const {
    if (a == b) return second_derivative(f, a);
    return multiply(f, [&](std::size_t p) {
      return (nyq_[p][a] || nyq_[p][b]) ? cplx(0.0) : cplx(-k_[p][a] * k_[p][b]);
    });
  }

  Field laplacian(const Field& f) const {
    return multiply(f, [&](std::size_t p) { return cplx(-k2(p)); });
  }

  /// Multiplier 1/|k|, zero mode mapped to zero.
  Field riesz(const Field& f) const {
    return multiply(f, [&](std::size_t p) { return p == 0 ? cplx(0.0) : cplx(1.0 / kabs(p)); });
  }

  std::array<Field, 2> gradient(const Field& f) const {
    std::array<Field, 2> g;
    g[0] = derivative(f, 0);
    g[1] = grid_.dim == 2 ? derivative(f, 1) : Field(size_, 0.0);
    return g;
  }

  /// Trigonometric interpolant value and gradient at an arbitrary lateral point.
  /// `coeffs` are forward-transform coefficients; gradients drop Nyquist modes like derivative().
  std::array<double, 3> interpolate(const CField& coeffs, double x0, double x1 = 0.0) const {
    std::array<double, 3> out{0.0, 0.0, 0.0};
    const double s = 1.0 / static_cast<double>(size_);
    for (std::size_t p = 0; p < size_; ++p) {
      const double ph = k_[p][0] * x0 + k_[p][1] * x1;
      const cplx e(std::cos(ph), std::sin(ph));
      const cplx term = coeffs[p] * e * s;
      out[0] += term.real();
      if (nyq_[p][0] || nyq_[p][1]) continue;
      out[1] += (cplx(0, k_[p][0]) * term).real();
      out[2] += (cplx(0, k_[p][1]) * term).real();
    }
    return out;
  }

private:
  double wavenumber(int i, int n) const {
    const int m = i <= n / 2 ? i : i - n;
    return 2.0 * pi * m / grid_.L;
  }

  struct FreeBuf {
    void operator()(fftw_complex* p) const { fftw_free(p); }
  };
  struct FreePlan {
    void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
  };

  LateralGrid grid_;
  std::size_t size_;
  std::unique_ptr<fftw_complex, FreeBuf> buf_;
  std::unique_ptr<fftw_plan_s, FreePlan> fwd_;
  std::unique_ptr<fftw_plan_s, FreePlan> bwd_;
  std::vector<std::array<double, 2>> k_;
  std::vector<std::array<bool, 2>> nyq_;
};

/// Process-wide cache of spectral objects keyed by lattice. Not thread-safe.
inline const Spectral& spectral_for(const LateralGrid& g) {
  static std::map<std::tuple<int, int, int, double>, std::unique_ptr<Spectral>> cache;
  auto key = std::make_tuple(g.dim, g.n[0], g.n[1], g.L);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, std::make_unique<Spectral>(g)).first;
  return *it->second;
}

} // namespace muskat
