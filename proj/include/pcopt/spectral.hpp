#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>

#include "fft.hpp"
#include "grid.hpp"

namespace pcopt {

/// Sobolev regularization operator A = B^T B, B = (-lap + gamma)^kappa.
/// Model names map onto the per-mode multiplier (|k|^2 + gamma)^s:
///   H1     -> s = 1        (first-order Sobolev energy)
///   H2     -> s = 2*kappa  (kappa = 1 gives the biharmonic-type operator)
///   H1_div -> s = 1 plus a quadratic penalty on div(v), weighted separately
enum class RegModel { H1, H2, H1Div };

struct RegularizationConfig {
  RegModel model = RegModel::H2;
  double beta = 1e-2;       // weight of the Sobolev energy
  double gamma = 1.0;       // shift making A invertible without special cases
  int kappa = 1;            // operator order parameter for H2
  double div_penalty = 0.0; // weight of 0.5*||div v||^2 (H1Div only)

  void validate() const {
    if (!(beta > 0.0)) throw std::invalid_argument("regularization: beta must be > 0");
    if (gamma < 0.0) throw std::invalid_argument("regularization: gamma must be >= 0");
    if (kappa < 1) throw std::invalid_argument("regularization: kappa must be >= 1");
    if (div_penalty < 0.0) throw std::invalid_argument("regularization: div_penalty must be >= 0");
  }

  int sobolev_exponent() const { return model == RegModel::H2 ? 2 * kappa : 1; }
};

namespace detail {

/// First-derivative wavenumber: Nyquist zeroed to keep odd operators
/// skew-adjoint on the real r2c layout.
inline double ktilde(int k, int n) { return (2 * std::abs(k) == n) ? 0.0 : k; }

}  // namespace detail

/// Spectral gradient. Exact for band-limited fields.
inline VectorField grad(const ScalarField& f) {
  const Grid& g = f.grid;
  Spectrum s = fft_forward(f);
  VectorField out(g);
  for (int c = 0; c < g.d; ++c) {
    Spectrum sc(g);
    for_each_mode(s, [&](std::size_t idx, int, const std::array<int, 3>& k) {
      double kc = detail::ktilde(k[c], g.n[c]);
      // multiply by i*kc
      sc.c[idx] = std::complex<double>(-kc * s.c[idx].imag(), kc * s.c[idx].real());
    });
    out.c[c] = fft_inverse(sc);
  }
  return out;
}

/// Spectral divergence.
inline ScalarField div(const VectorField& v) {
  const Grid& g = v.grid;
  Spectrum acc(g);
  for (int c = 0; c < g.d; ++c) {
    Spectrum s = fft_forward(v.c[c]);
    for_each_mode(s, [&](std::size_t idx, int, const std::array<int, 3>& k) {
      double kc = detail::ktilde(k[c], g.n[c]);
      acc.c[idx] += std::complex<double>(-kc * s.c[idx].imag(), kc * s.c[idx].real());
    });
  }
  return fft_inverse(acc);
}

inline ScalarField laplacian(const ScalarField& f) {
  Spectrum s = fft_forward(f);
  const Grid& g = f.grid;
  for_each_mode(s, [&](std::size_t idx, int, const std::array<int, 3>& k) {
    double k2 = 0.0;
    for (int c = 0; c < g.d; ++c) k2 += static_cast<double>(k[c]) * k[c];
    s.c[idx] *= -k2;
  });
  return fft_inverse(s);
}

/// Pseudo-inverse of the Laplacian: the zero mode (mean) is nulled.
inline ScalarField inv_laplacian(const ScalarField& f) {
  Spectrum s = fft_forward(f);
  const Grid& g = f.grid;
  for_each_mode(s, [&](std::size_t idx, int, const std::array<int, 3>& k) {
    double k2 = 0.0;
    for (int c = 0; c < g.d; ++c) k2 += static_cast<double>(k[c]) * k[c];
    s.c[idx] = (k2 == 0.0) ? 0.0 : s.c[idx] / (-k2);
  });
  return fft_inverse(s);
}

/// Leray projection K = I - grad lap^{-1} div onto divergence-free fields.
/// Applied mode-wise with the first-derivative wavenumbers so that
/// div(leray_project(v)) vanishes identically; the zero mode passes through.
inline VectorField leray_project(const VectorField& v) {
  const Grid& g = v.grid;
  std::vector<Spectrum> s;
  s.reserve(g.d);
  for (int c = 0; c < g.d; ++c) s.push_back(fft_forward(v.c[c]));

  for_each_mode(s[0], [&](std::size_t idx, int, const std::array<int, 3>& k) {
    double kt[3] = {0, 0, 0};
    double k2 = 0.0;
    for (int c = 0; c < g.d; ++c) {
      kt[c] = detail::ktilde(k[c], g.n[c]);
      k2 += kt[c] * kt[c];
    }
    if (k2 == 0.0) return;
    std::complex<double> kdotv(0.0, 0.0);
    for (int c = 0; c < g.d; ++c) kdotv += kt[c] * s[c].c[idx];
    kdotv /= k2;
    for (int c = 0; c < g.d; ++c) s[c].c[idx] -= kt[c] * kdotv;
  });

  VectorField out(g);
  for (int c = 0; c < g.d; ++c) out.c[c] = fft_inverse(s[c]);
  return out;
}

namespace detail {

template <typename Mult>
ScalarField apply_mode_multiplier(const ScalarField& f, Mult&& mult) {
  Spectrum s = fft_forward(f);
  const Grid& g = f.grid;
  for_each_mode(s, [&](std::size_t idx, int, const std::array<int, 3>& k) {
    double k2 = 0.0;
    for (int c = 0; c < g.d; ++c) k2 += static_cast<double>(k[c]) * k[c];
    s.c[idx] *= mult(k2);
  });
  return fft_inverse(s);
}

}  // namespace detail

/// A v: per-mode multiplication by (|k|^2 + gamma)^s, componentwise.
inline VectorField apply_regop(const VectorField& v, const RegularizationConfig& cfg) {
  cfg.validate();
  const int s = cfg.sobolev_exponent();
  VectorField out(v.grid);
  for (int c = 0; c < v.dims(); ++c)
    out.c[c] = detail::apply_mode_multiplier(
        v.c[c], [&](double k2) { return std::pow(k2 + cfg.gamma, s); });
  return out;
}

/// A^{-1} v. For gamma = 0 the zero mode is singular: it is nulled and, if it
/// carried energy, *singular_flagged is set.
inline VectorField inv_regop(const VectorField& v, const RegularizationConfig& cfg,
                             bool* singular_flagged = nullptr) {
  cfg.validate();
  if (singular_flagged) *singular_flagged = false;
  const int s = cfg.sobolev_exponent();
  VectorField out(v.grid);
  for (int c = 0; c < v.dims(); ++c) {
    Spectrum sp = fft_forward(v.c[c]);
    const Grid& g = v.grid;
    // a zero mode is "energetic" only relative to the field scale; FFT
    // roundoff leaves ~1e-17 residues on mean-free fields
    const double mean_tol = 1e-12 * norm_inf(v.c[c]);
    for_each_mode(sp, [&](std::size_t idx, int, const std::array<int, 3>& k) {
      double k2 = 0.0;
      for (int cc = 0; cc < g.d; ++cc) k2 += static_cast<double>(k[cc]) * k[cc];
      double lam = std::pow(k2 + cfg.gamma, s);
      if (lam == 0.0) {
        if (singular_flagged && std::abs(sp.c[idx]) > mean_tol) *singular_flagged = true;
        sp.c[idx] = 0.0;
      } else {
        sp.c[idx] /= lam;
      }
    });
    out.c[c] = fft_inverse(sp);
  }
  return out;
}

/// Spectral Gaussian filter with standard deviation sigma (physical units).
inline ScalarField gaussian_smooth(const ScalarField& f, double sigma) {
  if (sigma <= 0.0) return f;
  const double s2 = 0.5 * sigma * sigma;
  return detail::apply_mode_multiplier(f, [&](double k2) { return std::exp(-s2 * k2); });
}

/// Gradient contribution of the divergence penalty 0.5*w*||div v||^2,
/// i.e. -w * grad(div v).
inline VectorField div_penalty_gradient(const VectorField& v, double weight) {
  VectorField g = grad(div(v));
  scale(g, -weight);
  return g;
}

}  // namespace pcopt
