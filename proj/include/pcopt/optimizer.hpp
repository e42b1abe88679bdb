#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pcopt {

/// Raised by inner solvers (e.g. the diffusion PCG) when they fail to
/// converge; the Newton driver converts it into an inner_solver_failure
/// status instead of unwinding through the caller.
struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Abstract problem driven by the Gauss-Newton-Krylov solver. Vectors are
/// flat coefficient arrays; each concrete problem defines its own inner
/// product (grid-weighted L2 for fields, Euclidean for coefficients).
struct OptimizationProblem {
  using Vec = std::vector<double>;

  virtual ~OptimizationProblem() = default;

  virtual double objective(const Vec& w) = 0;
  virtual Vec gradient(const Vec& w) = 0;

  /// Fix the linearization point for subsequent hessian_matvec calls.
  virtual void set_linearization(const Vec& w) = 0;
  virtual Vec hessian_matvec(const Vec& dw) = 0;

  virtual Vec precondition(const Vec& r) { return r; }

  virtual double inner(const Vec& a, const Vec& b) const {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  }

  /// Data-fidelity part of the last evaluated objective, for logging.
  virtual double last_mismatch() const { return std::numeric_limits<double>::quiet_NaN(); }
};

struct SolverOptions {
  double rel_grad_tol = 1e-5;
  double abs_grad_tol = 1e-8;
  int max_newton = 50;
  int max_krylov = 100;
  double armijo_c1 = 1e-4;
  double armijo_shrink = 0.5;
  double forcing_cap = 0.5;

  void validate() const {
    if (!(armijo_c1 > 0.0 && armijo_c1 < 1.0))
      throw std::invalid_argument("solver: armijo_c1 must be in (0,1)");
    if (!(armijo_shrink > 0.0 && armijo_shrink < 1.0))
      throw std::invalid_argument("solver: armijo_shrink must be in (0,1)");
    if (!(rel_grad_tol > 0.0) || !(abs_grad_tol > 0.0))
      throw std::invalid_argument("solver: tolerances must be > 0");
  }
};

enum class SolveStatus {
  converged_rel,
  converged_abs,
  max_iterations,
  line_search_failure,
  inner_solver_failure,
};

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged_rel: return "converged_rel";
    case SolveStatus::converged_abs: return "converged_abs";
    case SolveStatus::max_iterations: return "max_iterations";
    case SolveStatus::line_search_failure: return "line_search_failure";
    case SolveStatus::inner_solver_failure: return "inner_solver_failure";
  }
  return "unknown";
}

struct NewtonRecord {
  int iter = 0;
  double objective = 0.0;
  double mismatch = 0.0;
  double grad_norm = 0.0;
  double alpha = 0.0;   // step length of the update that produced this iterate
  double eta = 0.0;     // forcing tolerance used for the inner solve
  int pcg_iters = 0;
  bool pcg_negative_curvature = false;
  std::vector<double> pcg_residuals;          // ||r|| in the problem norm
  std::vector<double> pcg_precond_residuals;  // sqrt(<r, P r>)
};

struct ConvergenceLog {
  std::vector<NewtonRecord> records;
  SolveStatus status = SolveStatus::max_iterations;

  int accepted_iterations() const { return static_cast<int>(records.size()) - 1; }

  std::string to_csv() const {
    std::string out = "iter,objective,mismatch,grad_norm,alpha,eta,pcg_iters\n";
    char line[256];
    for (const auto& r : records) {
      std::snprintf(line, sizeof(line), "%d,%.12e,%.12e,%.12e,%.12e,%.12e,%d\n", r.iter,
                    r.objective, r.mismatch, r.grad_norm, r.alpha, r.eta, r.pcg_iters);
      out += line;
    }
    return out;
  }

  std::string pcg_to_csv() const {
    std::string out = "iter,pcg_iter,residual,residual_precond\n";
    char line[192];
    for (const auto& r : records)
      for (std::size_t i = 0; i < r.pcg_residuals.size(); ++i) {
        std::snprintf(line, sizeof(line), "%d,%zu,%.12e,%.12e\n", r.iter, i,
                      r.pcg_residuals[i], r.pcg_precond_residuals[i]);
        out += line;
      }
    return out;
  }
};

struct PcgResult {
  std::vector<double> direction;
  std::vector<double> residuals;
  std::vector<double> precond_residuals;
  int iterations = 0;
  bool negative_curvature = false;
};

/// Preconditioned CG on H dw = rhs, stopping at the relative tolerance
/// ||r|| < eta * ||rhs|| (the inexactness is scale invariant this way).
/// Non-positive curvature truncates: the current iterate is returned, or the
/// preconditioned steepest-descent step if it occurs immediately.
inline PcgResult pcg_solve(OptimizationProblem& problem, const std::vector<double>& rhs,
                           double eta, int max_iter) {
  using Vec = std::vector<double>;
  const std::size_t n = rhs.size();
  PcgResult res;
  res.direction.assign(n, 0.0);

  Vec r = rhs;
  Vec z = problem.precondition(r);
  Vec s = z;
  double rz = problem.inner(r, z);
  const double rhs_norm = std::sqrt(problem.inner(rhs, rhs));
  res.residuals.push_back(rhs_norm);
  res.precond_residuals.push_back(std::sqrt(std::max(0.0, rz)));
  if (rhs_norm == 0.0) return res;

  for (int it = 0; it < max_iter; ++it) {
    Vec hs = problem.hessian_matvec(s);
    double shs = problem.inner(s, hs);
    if (shs <= 0.0) {
      res.negative_curvature = true;
      if (it == 0) res.direction = z;
      return res;
    }
    double kappa = rz / shs;
    for (std::size_t i = 0; i < n; ++i) {
      res.direction[i] += kappa * s[i];
      r[i] -= kappa * hs[i];
    }
    ++res.iterations;
    double rnorm = std::sqrt(problem.inner(r, r));
    z = problem.precondition(r);
    double rz_next = problem.inner(r, z);
    res.residuals.push_back(rnorm);
    res.precond_residuals.push_back(std::sqrt(std::max(0.0, rz_next)));
    if (rnorm < eta * rhs_norm) break;
    double mu = rz_next / rz;
    rz = rz_next;
    for (std::size_t i = 0; i < n; ++i) s[i] = z[i] + mu * s[i];
  }
  return res;
}

/// Backtracking line search subject to the Armijo condition. Returns the
/// accepted step length, or nullopt on underflow below 1e-10. Non-descent
/// directions are rejected before any evaluation.
inline std::optional<double> armijo_backtrack(OptimizationProblem& problem,
                                              const std::vector<double>& w,
                                              const std::vector<double>& direction,
                                              const std::vector<double>& g, double J_w,
                                              const SolverOptions& opts, int* n_evals = nullptr) {
  const double gd = problem.inner(g, direction);
  if (!(gd < 0.0))
    throw std::invalid_argument("armijo_backtrack: direction is not a descent direction");

  std::vector<double> trial(w.size());
  double alpha = 1.0;
  int evals = 0;
  while (alpha >= 1e-10) {
    for (std::size_t i = 0; i < w.size(); ++i) trial[i] = w[i] + alpha * direction[i];
    double J_trial = problem.objective(trial);
    ++evals;
    if (J_trial <= J_w + opts.armijo_c1 * alpha * gd) {
      if (n_evals) *n_evals = evals;
      return alpha;
    }
    alpha *= opts.armijo_shrink;
  }
  if (n_evals) *n_evals = evals;
  return std::nullopt;
}

struct GaussNewtonResult {
  std::vector<double> w;
  ConvergenceLog log;
};

/// Inexact Gauss-Newton-Krylov driver. Forcing follows the superlinear
/// schedule eta_k = min(cap, sqrt(||g_k|| / ||g_0||)); the stopping test is
/// the unsquared relative gradient reduction plus an absolute floor.
inline GaussNewtonResult gauss_newton_solve(OptimizationProblem& problem,
                                            std::vector<double> w, const SolverOptions& opts) {
  opts.validate();
  GaussNewtonResult out;
  ConvergenceLog& log = out.log;

  try {
    double J = problem.objective(w);
    std::vector<double> g = problem.gradient(w);
    double gnorm = std::sqrt(problem.inner(g, g));
    const double g0norm = gnorm;

    NewtonRecord rec0;
    rec0.iter = 0;
    rec0.objective = J;
    rec0.mismatch = problem.last_mismatch();
    rec0.grad_norm = gnorm;
    log.records.push_back(rec0);

    for (int k = 0; k < opts.max_newton; ++k) {
      if (gnorm <= opts.abs_grad_tol) {
        log.status = SolveStatus::converged_abs;
        out.w = std::move(w);
        return out;
      }
      if (gnorm <= opts.rel_grad_tol * g0norm) {
        log.status = SolveStatus::converged_rel;
        out.w = std::move(w);
        return out;
      }

      const double eta = std::min(opts.forcing_cap, std::sqrt(gnorm / g0norm));
      problem.set_linearization(w);
      std::vector<double> rhs(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) rhs[i] = -g[i];
      PcgResult pcg = pcg_solve(problem, rhs, eta, opts.max_krylov);

      auto alpha = armijo_backtrack(problem, w, pcg.direction, g, J, opts);
      if (!alpha) {
        log.status = SolveStatus::line_search_failure;
        out.w = std::move(w);
        return out;
      }
      for (std::size_t i = 0; i < w.size(); ++i) w[i] += *alpha * pcg.direction[i];

      J = problem.objective(w);
      g = problem.gradient(w);
      gnorm = std::sqrt(problem.inner(g, g));

      NewtonRecord rec;
      rec.iter = k + 1;
      rec.objective = J;
      rec.mismatch = problem.last_mismatch();
      rec.grad_norm = gnorm;
      rec.alpha = *alpha;
      rec.eta = eta;
      rec.pcg_iters = pcg.iterations;
      rec.pcg_negative_curvature = pcg.negative_curvature;
      rec.pcg_residuals = std::move(pcg.residuals);
      rec.pcg_precond_residuals = std::move(pcg.precond_residuals);
      log.records.push_back(std::move(rec));
    }

    if (gnorm <= opts.abs_grad_tol) {
      log.status = SolveStatus::converged_abs;
    } else if (gnorm <= opts.rel_grad_tol * g0norm) {
      log.status = SolveStatus::converged_rel;
    } else {
      log.status = SolveStatus::max_iterations;
    }
    out.w = std::move(w);
    return out;
  } catch (const SolverError&) {
    log.status = SolveStatus::inner_solver_failure;
    out.w = std::move(w);
    return out;
  }
}

}  // namespace pcopt
