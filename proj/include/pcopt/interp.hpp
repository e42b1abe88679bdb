#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "grid.hpp"

namespace pcopt {

namespace detail {

inline double wrap_coord(double y) {
  y -= two_pi * std::floor(y / two_pi);
  if (y >= two_pi) y -= two_pi;  // guard the y == 2*pi roundoff case
  return y;
}

/// Cubic Lagrange weights on the 4-point stencil {-1,0,1,2} at fraction
/// s in [0,1). Nodal exactness: s = 0 gives (0,1,0,0).
inline void cubic_weights(double s, double w[4]) {
  w[0] = -s * (s - 1.0) * (s - 2.0) / 6.0;
  w[1] = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0;
  w[2] = -(s + 1.0) * s * (s - 2.0) / 2.0;
  w[3] = (s + 1.0) * s * (s - 1.0) / 6.0;
}

}  // namespace detail

/// Departure points of one semi-Lagrangian time step, one per grid point,
/// wrapped into [0,2pi)^d. The interpolation stencil (base node and Lagrange
/// weights per axis) is precomputed once since the map is reused for every
/// step of a stationary velocity.
struct CharacteristicMap {
  Grid grid;
  std::vector<double> y;        // d * n coordinates, component-major
  std::vector<int32_t> base;    // d * n stencil base node indices
  std::vector<double> weights;  // d * 4 * n Lagrange weights

  explicit CharacteristicMap(const Grid& g)
      : grid(g), y(static_cast<std::size_t>(g.d) * g.points()) {}

  double coord(int c, std::size_t i) const { return y[c * grid.points() + i]; }

  void finalize() {
    const std::size_t n = grid.points();
    base.resize(static_cast<std::size_t>(grid.d) * n);
    weights.resize(static_cast<std::size_t>(grid.d) * 4 * n);
    for (int c = 0; c < grid.d; ++c) {
      const double inv_h = grid.n[c] / two_pi;
      for (std::size_t i = 0; i < n; ++i) {
        double u = y[c * n + i] * inv_h;
        double fl = std::floor(u);
        double s = u - fl;
        int i0 = static_cast<int>(fl);
        // snap departures that land on a node up to roundoff, so that the
        // zero-velocity map reproduces fields bitwise
        if (s < 1e-10) {
          s = 0.0;
        } else if (s > 1.0 - 1e-10) {
          s = 0.0;
          ++i0;
        }
        if (i0 >= grid.n[c]) i0 -= grid.n[c];
        base[c * n + i] = i0;
        detail::cubic_weights(s, &weights[(c * n + i) * 4]);
      }
    }
  }
};

/// Cubic Lagrange interpolation of f at the map's departure points, with
/// periodic index wrapping. Exact at grid nodes.
inline ScalarField interpolate_cubic(const ScalarField& f, const CharacteristicMap& pts) {
  check_same_grid(f.grid, pts.grid, "interpolate_cubic");
  const Grid& g = f.grid;
  const std::size_t n = g.points();
  ScalarField out(g);

  // wrapped index lookup tables: entry j maps stencil node j-1 of base i
  // so table[i0 + off] with off in 0..3 covers nodes i0-1 .. i0+2
  std::array<std::vector<int32_t>, 3> wrapped;
  for (int c = 0; c < g.d; ++c) {
    wrapped[c].resize(g.n[c] + 3);
    for (int i = 0; i < g.n[c] + 3; ++i) wrapped[c][i] = (i - 1 + g.n[c]) % g.n[c];
  }

  const int n1 = g.n[0], n2 = g.n[1];
  if (g.d == 3) {
    for (std::size_t i = 0; i < n; ++i) {
      const double* w1 = &pts.weights[(0 * n + i) * 4];
      const double* w2 = &pts.weights[(1 * n + i) * 4];
      const double* w3 = &pts.weights[(2 * n + i) * 4];
      const int b1 = pts.base[0 * n + i];
      const int b2 = pts.base[1 * n + i];
      const int b3 = pts.base[2 * n + i];
      double acc = 0.0;
      for (int o3 = 0; o3 < 4; ++o3) {
        const std::size_t off3 = static_cast<std::size_t>(wrapped[2][b3 + o3]) * n2;
        double acc2 = 0.0;
        for (int o2 = 0; o2 < 4; ++o2) {
          const std::size_t row = (off3 + wrapped[1][b2 + o2]) * n1;
          const double* fr = &f.v[row];
          double acc1 = 0.0;
          for (int o1 = 0; o1 < 4; ++o1) acc1 += w1[o1] * fr[wrapped[0][b1 + o1]];
          acc2 += w2[o2] * acc1;
        }
        acc += w3[o3] * acc2;
      }
      out.v[i] = acc;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const double* w1 = &pts.weights[(0 * n + i) * 4];
      const double* w2 = &pts.weights[(1 * n + i) * 4];
      const int b1 = pts.base[0 * n + i];
      const int b2 = pts.base[1 * n + i];
      double acc = 0.0;
      for (int o2 = 0; o2 < 4; ++o2) {
        const double* fr = &f.v[static_cast<std::size_t>(wrapped[1][b2 + o2]) * n1];
        double acc1 = 0.0;
        for (int o1 = 0; o1 < 4; ++o1) acc1 += w1[o1] * fr[wrapped[0][b1 + o1]];
        acc += w2[o2] * acc1;
      }
      out.v[i] = acc;
    }
  }
  return out;
}

inline VectorField interpolate_cubic(const VectorField& f, const CharacteristicMap& pts) {
  VectorField out(f.grid);
  for (int c = 0; c < f.dims(); ++c) out.c[c] = interpolate_cubic(f.c[c], pts);
  return out;
}

/// Departure points for one backward-in-step trace of the characteristics:
/// a two-stage (Heun) scheme, y~ = x - ht*v, then
/// y = x - ht/2 * (interpolate(v, y~) + v).
inline CharacteristicMap trace_characteristics(const VectorField& v, double h_t) {
  if (!(h_t > 0.0)) throw std::invalid_argument("trace_characteristics: h_t must be > 0");
  const Grid& g = v.grid;
  const std::size_t n = g.points();

  CharacteristicMap stage(g);
  for (int c = 0; c < g.d; ++c) {
    std::size_t i = 0;
    for (int i3 = 0; i3 < g.n[2]; ++i3)
      for (int i2 = 0; i2 < g.n[1]; ++i2)
        for (int i1 = 0; i1 < g.n[0]; ++i1, ++i) {
          int ic = (c == 0) ? i1 : (c == 1 ? i2 : i3);
          stage.y[c * n + i] = detail::wrap_coord(g.coord(c, ic) - h_t * v.c[c].v[i]);
        }
  }
  stage.finalize();
  VectorField v_mid = interpolate_cubic(v, stage);

  CharacteristicMap out(g);
  for (int c = 0; c < g.d; ++c) {
    std::size_t i = 0;
    for (int i3 = 0; i3 < g.n[2]; ++i3)
      for (int i2 = 0; i2 < g.n[1]; ++i2)
        for (int i1 = 0; i1 < g.n[0]; ++i1, ++i) {
          int ic = (c == 0) ? i1 : (c == 1 ? i2 : i3);
          out.y[c * n + i] = detail::wrap_coord(
              g.coord(c, ic) - 0.5 * h_t * (v_mid.c[c].v[i] + v.c[c].v[i]));
        }
  }
  out.finalize();
  return out;
}

}  // namespace pcopt
