#pragma once

#include <fftw3.h>

#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "grid.hpp"

namespace pcopt {

/// Half-complex spectrum of a real field: the r2c transform keeps modes
/// q1 = 0..n1/2 along the fastest axis. Coefficients are normalized so that
/// c[k] are the trigonometric-polynomial coefficients (forward divides by n).
struct Spectrum {
  Grid grid;
  int n1h = 0;  // n1/2 + 1
  std::vector<std::complex<double>> c;

  explicit Spectrum(const Grid& g)
      : grid(g), n1h(g.n[0] / 2 + 1),
        c(static_cast<std::size_t>(n1h) * g.n[1] * g.n[2]) {}

  std::size_t index(int q1, int i2, int i3) const {
    return static_cast<std::size_t>(q1) +
           static_cast<std::size_t>(n1h) * (i2 + static_cast<std::size_t>(grid.n[1]) * i3);
  }
};

namespace detail {

struct PlanPair {
  fftw_plan r2c = nullptr;
  fftw_plan c2r = nullptr;
  ~PlanPair() {
    if (r2c) fftw_destroy_plan(r2c);
    if (c2r) fftw_destroy_plan(c2r);
  }
};

/// FFTW planning is not thread-safe; executing planned transforms on fresh
/// arrays is. Plans are cached per grid extents for the process lifetime.
/// FFTW_ESTIMATE keeps plan selection (and hence bitwise output) stable.
inline const PlanPair& plans_for(const Grid& g) {
  static std::mutex mtx;
  static std::map<std::array<int, 4>, std::unique_ptr<PlanPair>> cache;
  std::array<int, 4> key{g.d, g.n[0], g.n[1], g.n[2]};
  std::lock_guard<std::mutex> lock(mtx);
  auto it = cache.find(key);
  if (it != cache.end()) return *it->second;

  auto pp = std::make_unique<PlanPair>();
  // FFTW is row-major (last dimension fastest); our storage is x-fastest,
  // so pass extents in reversed order.
  std::vector<int> dims;
  for (int c = g.d - 1; c >= 0; --c) dims.push_back(g.n[c]);
  std::size_t nreal = g.points();
  std::size_t ncplx = static_cast<std::size_t>(g.n[0] / 2 + 1) * g.n[1] * g.n[2];
  double* rbuf = fftw_alloc_real(nreal);
  fftw_complex* cbuf = fftw_alloc_complex(ncplx);
  pp->r2c = fftw_plan_dft_r2c(g.d, dims.data(), rbuf, cbuf, FFTW_ESTIMATE);
  pp->c2r = fftw_plan_dft_c2r(g.d, dims.data(), cbuf, rbuf, FFTW_ESTIMATE);
  fftw_free(rbuf);
  fftw_free(cbuf);
  auto [pos, ok] = cache.emplace(key, std::move(pp));
  return *pos->second;
}

struct FftwRealBuf {
  double* p;
  explicit FftwRealBuf(std::size_t n) : p(fftw_alloc_real(n)) {}
  ~FftwRealBuf() { fftw_free(p); }
  FftwRealBuf(const FftwRealBuf&) = delete;
  FftwRealBuf& operator=(const FftwRealBuf&) = delete;
};

struct FftwComplexBuf {
  fftw_complex* p;
  explicit FftwComplexBuf(std::size_t n) : p(fftw_alloc_complex(n)) {}
  ~FftwComplexBuf() { fftw_free(p); }
  FftwComplexBuf(const FftwComplexBuf&) = delete;
  FftwComplexBuf& operator=(const FftwComplexBuf&) = delete;
};

}  // namespace detail

inline Spectrum fft_forward(const ScalarField& f) {
  const Grid& g = f.grid;
  const auto& plans = detail::plans_for(g);
  Spectrum out(g);
  detail::FftwRealBuf rbuf(g.points());
  detail::FftwComplexBuf cbuf(out.c.size());
  std::copy(f.v.begin(), f.v.end(), rbuf.p);
  fftw_execute_dft_r2c(plans.r2c, rbuf.p, cbuf.p);
  const double inv_n = 1.0 / static_cast<double>(g.points());
  for (std::size_t i = 0; i < out.c.size(); ++i)
    out.c[i] = std::complex<double>(cbuf.p[i][0] * inv_n, cbuf.p[i][1] * inv_n);
  return out;
}

inline ScalarField fft_inverse(const Spectrum& s) {
  const Grid& g = s.grid;
  const auto& plans = detail::plans_for(g);
  detail::FftwRealBuf rbuf(g.points());
  detail::FftwComplexBuf cbuf(s.c.size());
  for (std::size_t i = 0; i < s.c.size(); ++i) {
    cbuf.p[i][0] = s.c[i].real();
    cbuf.p[i][1] = s.c[i].imag();
  }
  fftw_execute_dft_c2r(plans.c2r, cbuf.p, rbuf.p);
  ScalarField out(g);
  std::copy(rbuf.p, rbuf.p + g.points(), out.v.begin());
  return out;
}

/// Integer wavenumber along axis c for spectrum index i (full range mapping
/// i <= n/2 -> i, else i - n).
inline int wavenumber(int i, int n) { return (i <= n / 2) ? i : i - n; }

/// Wavenumber used by first-derivative weights: the Nyquist mode carries no
/// sign information for odd operators and is zeroed.
inline int wavenumber_odd(int i, int n) {
  if (n % 2 == 0 && ((i <= n / 2) ? i : i - n) == n / 2) return 0;
  return wavenumber(i, n);
}

/// Visit every retained mode. fn(idx, q1, k) where k[] are the full integer
/// wavenumbers of the mode and q1 the half-spectrum index along axis 0.
template <typename Fn>
void for_each_mode(const Spectrum& s, Fn&& fn) {
  const Grid& g = s.grid;
  std::size_t idx = 0;
  for (int i3 = 0; i3 < g.n[2]; ++i3) {
    int k3 = (g.d == 3) ? wavenumber(i3, g.n[2]) : 0;
    for (int i2 = 0; i2 < g.n[1]; ++i2) {
      int k2 = wavenumber(i2, g.n[1]);
      for (int q1 = 0; q1 < s.n1h; ++q1, ++idx) {
        std::array<int, 3> k{q1, k2, k3};
        fn(idx, q1, k);
      }
    }
  }
}

}  // namespace pcopt
