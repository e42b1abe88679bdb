#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "fft.hpp"
#include "grid.hpp"
#include "optimizer.hpp"
#include "spectral.hpp"
#include "transport.hpp"

namespace pcopt {

/// Isotropic diffusivity per grid point, k(x) = kappa(x) * I.
struct DiffusionField {
  Grid grid;
  std::vector<double> kappa;

  DiffusionField() = default;
  explicit DiffusionField(const Grid& g, double fill = 0.0) : grid(g), kappa(g.points(), fill) {}

  double mean() const {
    double s = 0.0;
    for (double k : kappa) s += k;
    return kappa.empty() ? 0.0 : s / kappa.size();
  }
};

/// Domain-of-interest mask realizing the Neumann boundary by the penalty
/// approach: reaction and diffusion coefficients drop to small penalty
/// values outside the masked region.
struct BrainMask {
  Grid grid;
  std::vector<uint8_t> inside;
  double penalty_k = 1e-6;
  double penalty_rho = 0.0;

  BrainMask() = default;
  explicit BrainMask(const Grid& g, bool all_inside = true)
      : grid(g), inside(g.points(), all_inside ? 1 : 0) {}
};

/// kappa = k_W pi_W + k_G pi_G inside the mask, the penalty value outside.
inline DiffusionField assemble_diffusion(const ScalarField& pi_W, const ScalarField& pi_G,
                                         double k_W, double k_G, const BrainMask& mask) {
  check_same_grid(pi_W.grid, pi_G.grid, "assemble_diffusion");
  check_same_grid(pi_W.grid, mask.grid, "assemble_diffusion");
  if (!(k_W > 0.0) || !(k_G > 0.0))
    throw std::invalid_argument("assemble_diffusion: diffusivities must be positive");
  if (!(mask.penalty_k < std::min(k_W, k_G)))
    throw std::invalid_argument("assemble_diffusion: penalty_k must be < min(k_W, k_G)");
  const double tol = 1e-9;
  DiffusionField k(pi_W.grid);
  for (std::size_t i = 0; i < k.kappa.size(); ++i) {
    if (pi_W.v[i] < -tol || pi_W.v[i] > 1.0 + tol || pi_G.v[i] < -tol || pi_G.v[i] > 1.0 + tol)
      throw std::invalid_argument("assemble_diffusion: tissue maps must lie in [0,1]");
    k.kappa[i] = mask.inside[i] ? (k_W * pi_W.v[i] + k_G * pi_G.v[i]) : mask.penalty_k;
  }
  return k;
}

/// Growth-rate field: rho inside the mask, penalty_rho outside.
inline ScalarField make_rho_field(double rho, const BrainMask& mask) {
  ScalarField f(mask.grid);
  for (std::size_t i = 0; i < f.size(); ++i)
    f.v[i] = mask.inside[i] ? rho : mask.penalty_rho;
  return f;
}

struct LogisticReport {
  std::size_t clamped = 0;
  double max_violation = 0.0;
};

/// Closed-form logistic update m+ = m e^{rho h} / (1 - m + m e^{rho h}).
/// Inputs slightly outside [0,1] (diffusion over/undershoot) are clamped and
/// counted; grossly out-of-range values are rejected.
inline ScalarField logistic_step(const ScalarField& m, const ScalarField& rho_field, double h,
                                 LogisticReport* report = nullptr) {
  check_same_grid(m.grid, rho_field.grid, "logistic_step");
  ScalarField out(m.grid);
  for (std::size_t i = 0; i < m.size(); ++i) {
    double x = m.v[i];
    if (x < -0.1 || x > 1.1)
      throw std::invalid_argument("logistic_step: state grossly out of [0,1]");
    if (x < 0.0 || x > 1.0) {
      double viol = (x < 0.0) ? -x : x - 1.0;
      if (viol > 1e-12 && report) {
        ++report->clamped;
        report->max_violation = std::max(report->max_violation, viol);
      }
      x = (x < 0.0) ? 0.0 : 1.0;
    }
    double e = std::exp(rho_field.v[i] * h);
    out.v[i] = x * e / (1.0 - x + x * e);
  }
  return out;
}

struct CnOptions {
  double tol = 1e-6;    // relative PCG residual
  int max_iter = 500;
  bool precondition = true;
};

struct CnStats {
  long pcg_iterations = 0;
  long solves = 0;
};

namespace detail {

/// L m = div(kappa grad m), assembled spectrally with the pointwise kappa.
inline ScalarField variable_diffusion_apply(const ScalarField& m, const DiffusionField& k) {
  VectorField g = grad(m);
  for (int c = 0; c < g.dims(); ++c)
    for (std::size_t i = 0; i < k.kappa.size(); ++i) g.c[c].v[i] *= k.kappa[i];
  return div(g);
}

/// Solve (I - a kbar lap) z = r spectrally (constant-coefficient
/// approximation of the Crank-Nicolson operator).
inline ScalarField cn_preconditioner(const ScalarField& r, double a, double kbar) {
  Spectrum s = fft_forward(r);
  const Grid& g = r.grid;
  for_each_mode(s, [&](std::size_t idx, int, const std::array<int, 3>& k) {
    double k2 = 0.0;
    for (int c = 0; c < g.d; ++c) k2 += static_cast<double>(k[c]) * k[c];
    s.c[idx] /= 1.0 + a * kbar * k2;
  });
  return fft_inverse(s);
}

}  // namespace detail

/// One Crank-Nicolson half step of the Strang splitting:
/// (I - ht/4 L) m' = (I + ht/4 L) m, solved by PCG with the
/// constant-coefficient spectral preconditioner P = I - ht/4 kbar lap.
inline ScalarField cn_diffusion_halfstep(const ScalarField& m, const DiffusionField& k,
                                         double h_t, const CnOptions& opts = {},
                                         CnStats* stats = nullptr) {
  check_same_grid(m.grid, k.grid, "cn_diffusion_halfstep");
  if (!(h_t > 0.0)) throw std::invalid_argument("cn_diffusion_halfstep: h_t must be > 0");
  const double a = 0.25 * h_t;
  const double kbar = k.mean();
  const std::size_t n = m.size();

  ScalarField lm = detail::variable_diffusion_apply(m, k);
  ScalarField rhs(m.grid);
  for (std::size_t i = 0; i < n; ++i) rhs.v[i] = m.v[i] + a * lm.v[i];

  auto apply = [&](const ScalarField& x) {
    ScalarField lx = detail::variable_diffusion_apply(x, k);
    ScalarField y(m.grid);
    for (std::size_t i = 0; i < n; ++i) y.v[i] = x.v[i] - a * lx.v[i];
    return y;
  };

  // initial guess: the previous state; r = rhs - A x
  ScalarField x = m;
  ScalarField ax = apply(x);
  ScalarField r(m.grid);
  for (std::size_t i = 0; i < n; ++i) r.v[i] = rhs.v[i] - ax.v[i];

  const double rhs_norm = std::sqrt(dot(rhs, rhs));
  if (stats) ++stats->solves;
  if (rhs_norm == 0.0) return ScalarField(m.grid);
  double rnorm = std::sqrt(dot(r, r));
  if (rnorm <= opts.tol * rhs_norm) return x;

  ScalarField z = opts.precondition ? detail::cn_preconditioner(r, a, kbar) : r;
  ScalarField s = z;
  double rz = dot(r, z);
  for (int it = 0; it < opts.max_iter; ++it) {
    ScalarField as = apply(s);
    double sas = dot(s, as);
    if (!(sas > 0.0)) throw SolverError("cn_diffusion_halfstep: operator lost definiteness");
    double alpha = rz / sas;
    for (std::size_t i = 0; i < n; ++i) {
      x.v[i] += alpha * s.v[i];
      r.v[i] -= alpha * as.v[i];
    }
    if (stats) ++stats->pcg_iterations;
    rnorm = std::sqrt(dot(r, r));
    if (rnorm <= opts.tol * rhs_norm) return x;
    z = opts.precondition ? detail::cn_preconditioner(r, a, kbar) : r;
    double rz_next = dot(r, z);
    double mu = rz_next / rz;
    rz = rz_next;
    for (std::size_t i = 0; i < n; ++i) s.v[i] = z.v[i] + mu * s.v[i];
  }
  throw SolverError("cn_diffusion_halfstep: PCG did not converge within max_iter");
}

/// Strang-split forward solve of dm/dt = div(k grad m) + rho m (1-m):
/// half diffusion, analytic logistic reaction, half diffusion per step.
inline Trajectory rd_forward(const ScalarField& m0, const DiffusionField& k,
                             const ScalarField& rho_field, int n_t,
                             const CnOptions& opts = {}, CnStats* stats = nullptr,
                             LogisticReport* report = nullptr) {
  Trajectory traj(m0.grid, n_t);
  traj.frames[0] = m0;
  const double h_t = 1.0 / n_t;
  ScalarField m = m0;
  for (int j = 0; j < n_t; ++j) {
    m = cn_diffusion_halfstep(m, k, h_t, opts, stats);
    m = logistic_step(m, rho_field, h_t, report);
    m = cn_diffusion_halfstep(m, k, h_t, opts, stats);
    traj.frames[j + 1] = m;
  }
  return traj;
}

/// Linearization data shared by the adjoint and the incremental solvers:
/// the state trajectory and the per-step reaction factors
/// exp(h_t rho (1 - 2 mbar)) with mbar frozen at the step midpoint state.
struct RdLinearization {
  std::shared_ptr<const Trajectory> state;
  std::vector<ScalarField> reaction_factor;  // one per step
  double h_t = 0.0;
};

inline RdLinearization make_rd_linearization(std::shared_ptr<const Trajectory> state_ptr,
                                             const ScalarField& rho_field) {
  const Trajectory& state = *state_ptr;
  RdLinearization lin;
  lin.state = std::move(state_ptr);
  lin.h_t = 1.0 / state.n_t;
  lin.reaction_factor.reserve(state.n_t);
  const std::size_t n = state.grid.points();
  for (int j = 0; j < state.n_t; ++j) {
    ScalarField f(state.grid);
    for (std::size_t i = 0; i < n; ++i) {
      double mbar = 0.5 * (state.frames[j].v[i] + state.frames[j + 1].v[i]);
      f.v[i] = std::exp(lin.h_t * rho_field.v[i] * (1.0 - 2.0 * mbar));
    }
    lin.reaction_factor.push_back(std::move(f));
  }
  return lin;
}

inline RdLinearization make_rd_linearization(const Trajectory& state,
                                             const ScalarField& rho_field) {
  return make_rd_linearization(std::make_shared<Trajectory>(state), rho_field);
}

/// Backward adjoint solve of -dl/dt = div(k grad l) + rho (1-2m) l with the
/// given final value, mirroring the forward Strang structure step by step.
inline Trajectory rd_adjoint(const ScalarField& final_value, const RdLinearization& lin,
                             const DiffusionField& k, const CnOptions& opts = {},
                             CnStats* stats = nullptr) {
  const Trajectory& state = *lin.state;
  Trajectory traj(state.grid, state.n_t);
  traj.frames[state.n_t] = final_value;
  ScalarField lam = final_value;
  const std::size_t n = state.grid.points();
  for (int j = state.n_t - 1; j >= 0; --j) {
    lam = cn_diffusion_halfstep(lam, k, lin.h_t, opts, stats);
    for (std::size_t i = 0; i < n; ++i) lam.v[i] *= lin.reaction_factor[j].v[i];
    lam = cn_diffusion_halfstep(lam, k, lin.h_t, opts, stats);
    traj.frames[j] = lam;
  }
  return traj;
}

/// Tangent (incremental state) solve: same operator structure as the
/// adjoint, run forward from the given initial value.
inline Trajectory rd_incremental_state(const ScalarField& initial_value,
                                       const RdLinearization& lin, const DiffusionField& k,
                                       const CnOptions& opts = {}, CnStats* stats = nullptr) {
  const Trajectory& state = *lin.state;
  Trajectory traj(state.grid, state.n_t);
  traj.frames[0] = initial_value;
  ScalarField mt = initial_value;
  const std::size_t n = state.grid.points();
  for (int j = 0; j < state.n_t; ++j) {
    mt = cn_diffusion_halfstep(mt, k, lin.h_t, opts, stats);
    for (std::size_t i = 0; i < n; ++i) mt.v[i] *= lin.reaction_factor[j].v[i];
    mt = cn_diffusion_halfstep(mt, k, lin.h_t, opts, stats);
    traj.frames[j + 1] = mt;
  }
  return traj;
}

/// Gauss-Newton incremental adjoint: the 2 rho lambda coupling term is
/// dropped, so it shares the adjoint's code path verbatim.
inline Trajectory rd_incremental_adjoint_gn(const ScalarField& final_value,
                                            const RdLinearization& lin,
                                            const DiffusionField& k,
                                            const CnOptions& opts = {},
                                            CnStats* stats = nullptr) {
  return rd_adjoint(final_value, lin, k, opts, stats);
}

}  // namespace pcopt
