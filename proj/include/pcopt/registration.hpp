#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <vector>

#include "grid.hpp"
#include "optimizer.hpp"
#include "spectral.hpp"
#include "transport.hpp"

namespace pcopt {

/// Velocity-based diffeomorphic registration of m_T onto m_R under the
/// hyperbolic transport constraint. Images are expected to be preprocessed
/// (smoothed if sharp-edged, normalized to [0,1]).
struct RegistrationProblem {
  ScalarField m_R;  // reference (fixed) image
  ScalarField m_T;  // template (moving) image
  RegularizationConfig reg;
  bool incompressible = false;
  int n_t = 4;

  void validate() const {
    check_same_grid(m_R.grid, m_T.grid, "registration problem");
    reg.validate();
    if (n_t < 1) throw std::invalid_argument("registration: n_t must be >= 1");
  }
};

/// Per-axis Gaussian smoothing with a standard deviation given in voxels.
inline ScalarField gaussian_smooth_voxels(const ScalarField& f, double voxels) {
  if (voxels <= 0.0) return f;
  Spectrum s = fft_forward(f);
  const Grid& g = f.grid;
  for_each_mode(s, [&](std::size_t idx, int, const std::array<int, 3>& k) {
    double e = 0.0;
    for (int c = 0; c < g.d; ++c) {
      double ks = k[c] * g.spacing(c) * voxels;
      e += ks * ks;
    }
    s.c[idx] *= std::exp(-0.5 * e);
  });
  return fft_inverse(s);
}

/// Smooth (one-voxel Gaussian by default) and rescale intensities to [0,1].
inline ScalarField preprocess_image(const ScalarField& f, double sigma_voxels = 1.0) {
  ScalarField out = gaussian_smooth_voxels(f, sigma_voxels);
  double lo = field_min(out), hi = field_max(out);
  if (hi > lo) {
    for (double& x : out.v) x = (x - lo) / (hi - lo);
  } else {
    for (double& x : out.v) x = 0.0;
  }
  return out;
}

struct RegObjectiveValue {
  double objective = 0.0;
  double mismatch = 0.0;       // 0.5 * ||m(1) - m_R||^2
  double reg_term = 0.0;       // beta * R[v] (+ divergence penalty)
  double rel_mismatch = 0.0;   // mismatch / mismatch at v = 0
};

inline double regularization_energy(const VectorField& v, const RegularizationConfig& cfg) {
  VectorField av = apply_regop(v, cfg);
  double e = 0.5 * cfg.beta * inner(av, v);
  if (cfg.model == RegModel::H1Div && cfg.div_penalty > 0.0) {
    ScalarField dv = div(v);
    e += 0.5 * cfg.div_penalty * inner(dv, dv);
  }
  return e;
}

/// Linearization point of the reduced Gauss-Newton Hessian: the accepted
/// velocity with its state/adjoint trajectories plus the cached transport
/// geometry reused by every matvec.
struct RegistrationState {
  VectorField v;
  Trajectory state;
  Trajectory adjoint;
  VectorField gradient;
  double mismatch = 0.0;
  double objective = 0.0;
  double gradient_norm = 0.0;

  std::shared_ptr<const TransportOperator> op;
  std::shared_ptr<const std::vector<VectorField>> grad_frames;
};

namespace detail {

/// Trapezoidal quadrature of the control-equation time integral
/// int_0^1 lambda grad(m) dt over the nodal frames.
inline VectorField adjoint_time_integral(const std::vector<ScalarField>& lambda_frames,
                                         const std::vector<VectorField>& grad_frames,
                                         double h_t) {
  const Grid& g = grad_frames.front().grid;
  const std::size_t n = g.points();
  VectorField acc(g);
  const int last = static_cast<int>(lambda_frames.size()) - 1;
  for (int j = 0; j <= last; ++j) {
    const double w = ((j == 0 || j == last) ? 0.5 : 1.0) * h_t;
    for (int c = 0; c < g.d; ++c) {
      const double* lam = lambda_frames[j].v.data();
      const double* gm = grad_frames[j].c[c].v.data();
      double* out = acc.c[c].v.data();
      for (std::size_t i = 0; i < n; ++i) out[i] += w * lam[i] * gm[i];
    }
  }
  return acc;
}

}  // namespace detail

/// Objective only (one forward transport solve).
inline RegObjectiveValue reg_objective(const RegistrationProblem& prob, const VectorField& v) {
  prob.validate();
  Trajectory state = solve_state(prob.m_T, v, prob.n_t);
  ScalarField res = subtract(state.final_frame(), prob.m_R);
  RegObjectiveValue val;
  val.mismatch = 0.5 * inner(res, res);
  val.reg_term = regularization_energy(v, prob.reg);
  val.objective = val.mismatch + val.reg_term;
  ScalarField res0 = subtract(prob.m_T, prob.m_R);
  double m0 = 0.5 * inner(res0, res0);
  val.rel_mismatch = (m0 > 0.0) ? val.mismatch / m0 : 0.0;
  return val;
}

/// Full evaluation at v: state forward, adjoint backward, reduced gradient
/// g = beta A v (+ divergence-penalty term) + K[int_0^1 lambda grad m dt].
inline RegistrationState evaluate_registration(const RegistrationProblem& prob,
                                               const VectorField& v) {
  prob.validate();
  RegistrationState st;
  st.v = v;
  st.op = std::make_shared<TransportOperator>(v, prob.n_t);
  st.state = solve_state(prob.m_T, *st.op);

  auto grads = std::make_shared<std::vector<VectorField>>();
  grads->reserve(prob.n_t + 1);
  for (const auto& f : st.state.frames) grads->push_back(grad(f));
  st.grad_frames = grads;

  ScalarField residual = subtract(prob.m_R, st.state.final_frame());
  st.adjoint = solve_adjoint(residual, *st.op);

  st.mismatch = 0.5 * inner(residual, residual);
  st.objective = st.mismatch + regularization_energy(v, prob.reg);

  VectorField body = detail::adjoint_time_integral(st.adjoint.frames, *st.grad_frames,
                                                   1.0 / prob.n_t);
  if (prob.incompressible) body = leray_project(body);

  st.gradient = apply_regop(v, prob.reg);
  scale(st.gradient, prob.reg.beta);
  if (prob.reg.model == RegModel::H1Div && prob.reg.div_penalty > 0.0)
    axpy(1.0, div_penalty_gradient(v, prob.reg.div_penalty), st.gradient);
  axpy(1.0, body, st.gradient);
  st.gradient_norm = norm_l2(st.gradient);
  return st;
}

inline VectorField reg_gradient(const RegistrationProblem& prob, const VectorField& v) {
  return evaluate_registration(prob, v).gradient;
}

/// Gauss-Newton Hessian matvec: H v~ = beta A v~ (+ div-penalty term)
/// + K[int_0^1 lambda~ grad m dt].
inline VectorField reg_hessian_matvec_gn(const RegistrationProblem& prob,
                                         const RegistrationState& lin,
                                         const VectorField& vtilde) {
  Trajectory mt = solve_incremental_state(vtilde, *lin.op, *lin.grad_frames);
  Trajectory lt = solve_incremental_adjoint_gn(mt.final_frame(), *lin.op);
  VectorField body = detail::adjoint_time_integral(lt.frames, *lin.grad_frames,
                                                   1.0 / prob.n_t);
  if (prob.incompressible) body = leray_project(body);

  VectorField h = apply_regop(vtilde, prob.reg);
  scale(h, prob.reg.beta);
  if (prob.reg.model == RegModel::H1Div && prob.reg.div_penalty > 0.0)
    axpy(1.0, div_penalty_gradient(vtilde, prob.reg.div_penalty), h);
  axpy(1.0, body, h);
  return h;
}

struct DetGradReport {
  ScalarField psi;
  double min = 0.0;
  double max = 0.0;
  bool diffeomorphic = false;
};

/// Determinant of the deformation gradient of the map induced by v;
/// min <= 0 flags a non-diffeomorphic result (flag, not failure).
inline DetGradReport detgrad_report(const VectorField& v, int n_t) {
  DetGradReport rep;
  rep.psi = detgrad_transport(v, n_t);
  rep.min = field_min(rep.psi);
  rep.max = field_max(rep.psi);
  rep.diffeomorphic = rep.min > 0.0;
  return rep;
}

struct RegSolveCounters {
  long state_solves = 0;
  long adjoint_solves = 0;
  long hessian_matvecs = 0;  // each matvec solves one incremental state/adjoint pair
  long pde_solves() const { return state_solves + adjoint_solves + 2 * hessian_matvecs; }
};

/// Adapter between the registration problem and the generic GNK driver.
/// Velocity fields are flattened component-major; the inner product is the
/// grid-weighted L2 product. The preconditioner is (beta A)^{-1} composed
/// with the Leray projection in incompressible mode.
class RegistrationObjective : public OptimizationProblem {
 public:
  explicit RegistrationObjective(const RegistrationProblem& prob) : prob_(prob) {
    prob_.validate();
    n_ = prob_.m_T.grid.points();
    cell_vol_ = prob_.m_T.grid.cell_volume();
  }

  const RegistrationProblem& problem() const { return prob_; }
  const RegSolveCounters& counters() const { return counters_; }

  Vec flatten(const VectorField& v) const {
    Vec w(static_cast<std::size_t>(prob_.m_T.grid.d) * n_);
    for (int c = 0; c < prob_.m_T.grid.d; ++c)
      std::copy(v.c[c].v.begin(), v.c[c].v.end(), w.begin() + c * n_);
    return w;
  }

  VectorField unflatten(const Vec& w) const {
    VectorField v(prob_.m_T.grid);
    for (int c = 0; c < prob_.m_T.grid.d; ++c)
      std::copy(w.begin() + c * n_, w.begin() + (c + 1) * n_, v.c[c].v.begin());
    return v;
  }

  double objective(const Vec& w) override {
    if (obj_w_ && *obj_w_ == w) return obj_value_.objective;
    obj_value_ = reg_objective(prob_, unflatten(w));
    ++counters_.state_solves;
    obj_w_ = w;
    return obj_value_.objective;
  }

  Vec gradient(const Vec& w) override {
    refresh_state(w);
    return flatten(lin_->gradient);
  }

  void set_linearization(const Vec& w) override { refresh_state(w); }

  Vec hessian_matvec(const Vec& dw) override {
    if (!lin_) throw std::logic_error("hessian_matvec before set_linearization");
    ++counters_.hessian_matvecs;
    return flatten(reg_hessian_matvec_gn(prob_, *lin_, unflatten(dw)));
  }

  Vec precondition(const Vec& r) override {
    VectorField z = inv_regop(unflatten(r), prob_.reg);
    scale(z, 1.0 / prob_.reg.beta);
    if (prob_.incompressible) z = leray_project(z);
    return flatten(z);
  }

  double inner(const Vec& a, const Vec& b) const override {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s * cell_vol_;
  }

  double last_mismatch() const override {
    if (lin_) return lin_->mismatch;
    return obj_value_.mismatch;
  }

  const RegistrationState* linearization() const { return lin_ ? &*lin_ : nullptr; }

  void set_beta(double beta) {
    prob_.reg.beta = beta;
    lin_.reset();
    obj_w_.reset();
  }

 private:
  void refresh_state(const Vec& w) {
    if (lin_ && lin_w_ == w) return;
    lin_ = evaluate_registration(prob_, unflatten(w));
    ++counters_.state_solves;
    ++counters_.adjoint_solves;
    lin_w_ = w;
    obj_w_ = w;
    obj_value_.objective = lin_->objective;
    obj_value_.mismatch = lin_->mismatch;
  }

  RegistrationProblem prob_;
  std::size_t n_ = 0;
  double cell_vol_ = 0.0;
  RegSolveCounters counters_;
  std::optional<RegistrationState> lin_;
  Vec lin_w_;
  std::optional<Vec> obj_w_;
  RegObjectiveValue obj_value_;
};

struct RegistrationOptions {
  SolverOptions solver;
  /// Geometric beta continuation: solve at beta = 1, divide by 10 and warm
  /// start until the target beta of the problem is reached. Intermediate
  /// stages use a loosened gradient tolerance.
  bool continuation = false;
  double continuation_start = 1.0;
  double continuation_factor = 0.1;
  double continuation_stage_tol = 2.5e-1;
  int continuation_stage_max_newton = 10;
};

struct RegistrationResult {
  RegistrationState state;
  ConvergenceLog log;
  RegSolveCounters counters;
  double initial_mismatch = 0.0;
  double rel_mismatch = 0.0;
};

/// Full registration driver: Gauss-Newton-Krylov with A^{-1} preconditioning
/// and optional beta continuation.
inline RegistrationResult run_registration(const RegistrationProblem& prob,
                                           const RegistrationOptions& opts) {
  prob.validate();
  RegistrationObjective objective(prob);
  const double target_beta = prob.reg.beta;

  std::vector<double> w(static_cast<std::size_t>(prob.m_T.grid.d) * prob.m_T.grid.points(),
                        0.0);

  if (opts.continuation && opts.continuation_start > target_beta) {
    double beta = opts.continuation_start;
    while (beta > target_beta * 1.0000001) {
      objective.set_beta(beta);
      SolverOptions stage = opts.solver;
      stage.rel_grad_tol = std::max(opts.solver.rel_grad_tol, opts.continuation_stage_tol);
      stage.max_newton = std::min(opts.solver.max_newton, opts.continuation_stage_max_newton);
      GaussNewtonResult r = gauss_newton_solve(objective, std::move(w), stage);
      w = std::move(r.w);
      beta = std::max(beta * opts.continuation_factor, target_beta);
    }
  }

  objective.set_beta(target_beta);
  GaussNewtonResult r = gauss_newton_solve(objective, std::move(w), opts.solver);

  RegistrationResult result;
  result.log = std::move(r.log);
  objective.set_linearization(r.w);
  result.state = *objective.linearization();
  result.counters = objective.counters();

  ScalarField res0 = subtract(prob.m_T, prob.m_R);
  result.initial_mismatch = 0.5 * inner(res0, res0);
  result.rel_mismatch =
      (result.initial_mismatch > 0.0) ? result.state.mismatch / result.initial_mismatch : 0.0;
  return result;
}

}  // namespace pcopt
