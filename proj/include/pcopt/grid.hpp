#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace pcopt {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// Periodic regular grid on [0,2pi)^d, d in {2,3}. Point i along axis c sits
/// at x = i * spacing(c). Linear storage is x-fastest:
/// idx = i1 + n1*(i2 + n2*i3).
struct Grid {
  int d = 3;
  std::array<int, 3> n{1, 1, 1};  // n[c] == 1 for c >= d

  Grid() = default;
  Grid(int n1, int n2) : d(2), n{n1, n2, 1} { validate(); }
  Grid(int n1, int n2, int n3) : d(3), n{n1, n2, n3} { validate(); }

  void validate() const {
    if (d != 2 && d != 3) throw std::invalid_argument("grid: d must be 2 or 3");
    for (int c = 0; c < d; ++c) {
      if (n[c] < 4 || n[c] % 2 != 0)
        throw std::invalid_argument("grid: each extent must be even and >= 4, got " +
                                    std::to_string(n[c]));
    }
    for (int c = d; c < 3; ++c)
      if (n[c] != 1) throw std::invalid_argument("grid: unused extent must be 1");
  }

  std::size_t points() const {
    return static_cast<std::size_t>(n[0]) * n[1] * n[2];
  }
  double spacing(int c) const { return two_pi / n[c]; }
  /// Quadrature weight of one grid cell, h1*...*hd.
  double cell_volume() const {
    double w = 1.0;
    for (int c = 0; c < d; ++c) w *= spacing(c);
    return w;
  }
  double coord(int c, int i) const { return spacing(c) * i; }

  std::size_t index(int i1, int i2, int i3 = 0) const {
    return static_cast<std::size_t>(i1) +
           static_cast<std::size_t>(n[0]) * (i2 + static_cast<std::size_t>(n[1]) * i3);
  }

  bool operator==(const Grid& o) const { return d == o.d && n == o.n; }
  bool operator!=(const Grid& o) const { return !(*this == o); }
};

/// Real-valued samples on a Grid.
struct ScalarField {
  Grid grid;
  std::vector<double> v;

  ScalarField() = default;
  explicit ScalarField(const Grid& g, double fill = 0.0) : grid(g), v(g.points(), fill) {}

  std::size_t size() const { return v.size(); }
  double& operator[](std::size_t i) { return v[i]; }
  double operator[](std::size_t i) const { return v[i]; }
};

/// d-component vector field; all components share one grid.
struct VectorField {
  Grid grid;
  std::vector<ScalarField> c;

  VectorField() = default;
  explicit VectorField(const Grid& g) : grid(g), c(g.d, ScalarField(g)) {}

  int dims() const { return grid.d; }
};

// ---- field algebra -------------------------------------------------------

template <typename F>
ScalarField make_scalar_field(const Grid& g, F&& f) {
  ScalarField out(g);
  std::size_t idx = 0;
  for (int i3 = 0; i3 < g.n[2]; ++i3)
    for (int i2 = 0; i2 < g.n[1]; ++i2)
      for (int i1 = 0; i1 < g.n[0]; ++i1)
        out.v[idx++] = f(g.coord(0, i1), g.coord(1, i2), g.coord(2, i3));
  return out;
}

template <typename F>
VectorField make_vector_field(const Grid& g, F&& f) {
  VectorField out(g);
  std::size_t idx = 0;
  for (int i3 = 0; i3 < g.n[2]; ++i3)
    for (int i2 = 0; i2 < g.n[1]; ++i2)
      for (int i1 = 0; i1 < g.n[0]; ++i1, ++idx) {
        auto val = f(g.coord(0, i1), g.coord(1, i2), g.coord(2, i3));
        for (int c = 0; c < g.d; ++c) out.c[c].v[idx] = val[c];
      }
  return out;
}

inline void check_same_grid(const Grid& a, const Grid& b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": grid mismatch");
}

inline double dot(const ScalarField& a, const ScalarField& b) {
  check_same_grid(a.grid, b.grid, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.v[i] * b.v[i];
  return s;
}

/// Discrete L2 inner product with quadrature weight h1*...*hd.
inline double inner(const ScalarField& a, const ScalarField& b) {
  return dot(a, b) * a.grid.cell_volume();
}

inline double inner(const VectorField& a, const VectorField& b) {
  check_same_grid(a.grid, b.grid, "inner");
  double s = 0.0;
  for (int c = 0; c < a.dims(); ++c) s += dot(a.c[c], b.c[c]);
  return s * a.grid.cell_volume();
}

inline double norm_l2(const ScalarField& a) { return std::sqrt(inner(a, a)); }
inline double norm_l2(const VectorField& a) { return std::sqrt(inner(a, a)); }

inline double norm_inf(const ScalarField& a) {
  double m = 0.0;
  for (double x : a.v) m = std::max(m, std::abs(x));
  return m;
}

inline double norm_inf(const VectorField& a) {
  double m = 0.0;
  for (const auto& comp : a.c) m = std::max(m, norm_inf(comp));
  return m;
}

inline void axpy(double alpha, const ScalarField& x, ScalarField& y) {
  check_same_grid(x.grid, y.grid, "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y.v[i] += alpha * x.v[i];
}

inline void axpy(double alpha, const VectorField& x, VectorField& y) {
  for (int c = 0; c < x.dims(); ++c) axpy(alpha, x.c[c], y.c[c]);
}

inline void scale(ScalarField& a, double s) {
  for (double& x : a.v) x *= s;
}

inline void scale(VectorField& a, double s) {
  for (auto& comp : a.c) scale(comp, s);
}

inline ScalarField scaled(const ScalarField& a, double s) {
  ScalarField out = a;
  scale(out, s);
  return out;
}

inline VectorField scaled(const VectorField& a, double s) {
  VectorField out = a;
  scale(out, s);
  return out;
}

inline ScalarField subtract(const ScalarField& a, const ScalarField& b) {
  check_same_grid(a.grid, b.grid, "subtract");
  ScalarField out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.v[i] -= b.v[i];
  return out;
}

inline bool all_finite(const ScalarField& a) {
  for (double x : a.v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline bool all_finite(const VectorField& a) {
  for (const auto& comp : a.c)
    if (!all_finite(comp)) return false;
  return true;
}

inline double field_min(const ScalarField& a) {
  double m = a.v.empty() ? 0.0 : a.v[0];
  for (double x : a.v) m = std::min(m, x);
  return m;
}

inline double field_max(const ScalarField& a) {
  double m = a.v.empty() ? 0.0 : a.v[0];
  for (double x : a.v) m = std::max(m, x);
  return m;
}

}  // namespace pcopt
