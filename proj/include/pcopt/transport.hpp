#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "grid.hpp"
#include "interp.hpp"
#include "spectral.hpp"

namespace pcopt {

/// Nodal-in-time storage of a scalar field trajectory: frames 0..n_t at
/// times t_j = j / n_t.
struct Trajectory {
  Grid grid;
  int n_t = 0;
  std::vector<ScalarField> frames;

  Trajectory() = default;
  Trajectory(const Grid& g, int nt) : grid(g), n_t(nt) {
    if (nt < 1) throw std::invalid_argument("trajectory: n_t must be >= 1");
    frames.assign(nt + 1, ScalarField(g));
  }

  ScalarField& final_frame() { return frames.back(); }
  const ScalarField& final_frame() const { return frames.back(); }
};

/// Cached geometry of a stationary velocity field, shared by the transport
/// solvers: one-step departure maps for the forward (+v) and backward (-v)
/// sweeps, the divergence of v, and its values at the departure points.
struct TransportOperator {
  VectorField v;
  int n_t;
  double h_t;
  CharacteristicMap fwd_map;   // traced with +v, used by forward sweeps
  CharacteristicMap bwd_map;   // traced with -v, used by backward sweeps
  ScalarField divv;
  ScalarField divv_dep_fwd;    // div v at fwd_map departure points
  ScalarField divv_dep_bwd;

  TransportOperator(const VectorField& vel, int nt)
      : v(vel), n_t(nt), h_t(1.0 / nt),
        fwd_map(trace_characteristics(vel, h_t)),
        bwd_map(trace_characteristics(scaled(vel, -1.0), h_t)),
        divv(div(vel)),
        divv_dep_fwd(interpolate_cubic(divv, fwd_map)),
        divv_dep_bwd(interpolate_cubic(divv, bwd_map)) {}
};

/// Transport of the template image: dm/dt + v . grad m = 0, m(0) = m_T.
/// Each step interpolates the previous frame at the departure points.
inline Trajectory solve_state(const ScalarField& m_T, const TransportOperator& op) {
  Trajectory traj(m_T.grid, op.n_t);
  traj.frames[0] = m_T;
  for (int j = 0; j < op.n_t; ++j)
    traj.frames[j + 1] = interpolate_cubic(traj.frames[j], op.fwd_map);
  return traj;
}

inline Trajectory solve_state(const ScalarField& m_T, const VectorField& v, int n_t) {
  return solve_state(m_T, TransportOperator(v, n_t));
}

/// Backward transport of the residual: -dl/dt - div(v l) = 0, l(1) given.
/// In reversed time this is advection by -v with source l * div v, handled
/// by the implicit trapezoidal rule along each characteristic; for
/// divergence-free v it reduces to pure advection.
inline Trajectory solve_adjoint(const ScalarField& final_value, const TransportOperator& op) {
  Trajectory traj(final_value.grid, op.n_t);
  traj.frames[op.n_t] = final_value;
  const double a = 0.5 * op.h_t;
  const std::size_t n = final_value.grid.points();
  for (int j = op.n_t - 1; j >= 0; --j) {
    ScalarField dep = interpolate_cubic(traj.frames[j + 1], op.bwd_map);
    ScalarField& out = traj.frames[j];
    for (std::size_t i = 0; i < n; ++i)
      out.v[i] = dep.v[i] * (1.0 + a * op.divv_dep_bwd.v[i]) / (1.0 - a * op.divv.v[i]);
  }
  return traj;
}

inline Trajectory solve_adjoint(const ScalarField& residual, const VectorField& v, int n_t) {
  return solve_adjoint(residual, TransportOperator(v, n_t));
}

/// Linearized transport: dm~/dt + v . grad m~ = -grad m . v~, m~(0) = 0.
/// The inhomogeneity is integrated with the trapezoidal along-characteristic
/// rule: average of the source at the departure point (old time level) and
/// at the arrival point (new time level).
/// grad_frames must hold grad(state.frames[j]) for j = 0..n_t.
inline Trajectory solve_incremental_state(const VectorField& vtilde,
                                          const TransportOperator& op,
                                          const std::vector<VectorField>& grad_frames) {
  const Grid& g = vtilde.grid;
  const std::size_t n = g.points();
  if (static_cast<int>(grad_frames.size()) != op.n_t + 1)
    throw std::invalid_argument("solve_incremental_state: need n_t+1 gradient frames");

  auto source = [&](int j) {
    ScalarField f(g);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (int c = 0; c < g.d; ++c) s += grad_frames[j].c[c].v[i] * vtilde.c[c].v[i];
      f.v[i] = -s;
    }
    return f;
  };

  Trajectory traj(g, op.n_t);
  ScalarField f_new = source(0);
  const double a = 0.5 * op.h_t;
  for (int j = 0; j < op.n_t; ++j) {
    ScalarField f_dep = interpolate_cubic(f_new, op.fwd_map);
    f_new = source(j + 1);
    ScalarField dep = interpolate_cubic(traj.frames[j], op.fwd_map);
    ScalarField& out = traj.frames[j + 1];
    for (std::size_t i = 0; i < n; ++i)
      out.v[i] = dep.v[i] + a * (f_dep.v[i] + f_new.v[i]);
  }
  return traj;
}

inline Trajectory solve_incremental_state(const VectorField& vtilde, const Trajectory& state,
                                          const VectorField& v) {
  TransportOperator op(v, state.n_t);
  std::vector<VectorField> grad_frames;
  grad_frames.reserve(state.n_t + 1);
  for (const auto& f : state.frames) grad_frames.push_back(grad(f));
  return solve_incremental_state(vtilde, op, grad_frames);
}

/// Gauss-Newton incremental adjoint: same operator as solve_adjoint with
/// final condition -m~(1); delegated so the two share one code path.
inline Trajectory solve_incremental_adjoint_gn(const ScalarField& mtilde_final,
                                               const TransportOperator& op) {
  return solve_adjoint(scaled(mtilde_final, -1.0), op);
}

inline Trajectory solve_incremental_adjoint_gn(const ScalarField& mtilde_final,
                                               const VectorField& v, int n_t) {
  return solve_adjoint(scaled(mtilde_final, -1.0), v, n_t);
}

/// Determinant of the deformation gradient via transport:
/// dpsi/dt + v . grad psi = psi div v, psi(0) = 1. The source is applied as
/// an exponential factor with the trapezoidal average of div v along the
/// characteristic, which keeps psi positive.
inline ScalarField detgrad_transport(const TransportOperator& op) {
  const Grid& g = op.v.grid;
  const std::size_t n = g.points();
  ScalarField psi(g, 1.0);
  ScalarField factor(g);
  const double a = 0.5 * op.h_t;
  for (std::size_t i = 0; i < n; ++i)
    factor.v[i] = std::exp(a * (op.divv_dep_fwd.v[i] + op.divv.v[i]));
  for (int j = 0; j < op.n_t; ++j) {
    ScalarField dep = interpolate_cubic(psi, op.fwd_map);
    for (std::size_t i = 0; i < n; ++i) psi.v[i] = dep.v[i] * factor.v[i];
  }
  return psi;
}

inline ScalarField detgrad_transport(const VectorField& v, int n_t) {
  return detgrad_transport(TransportOperator(v, n_t));
}

}  // namespace pcopt
