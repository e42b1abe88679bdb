#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <future>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "grid.hpp"
#include "optimizer.hpp"
#include "reaction_diffusion.hpp"
#include "rng.hpp"

namespace pcopt {

/// Gaussian parametrization of the tumor initial condition: n_p bumps with
/// shared covariance. The normalization (2 pi |Sigma|^{1/2})^{-1} follows
/// the model definition; any fixed constant is absorbed by the coefficients.
struct GaussianBasis {
  int d = 2;
  std::vector<std::array<double, 3>> centers;
  std::array<std::array<double, 3>, 3> sigma{};  // covariance, d x d block

  int n_p() const { return static_cast<int>(centers.size()); }

  static GaussianBasis isotropic(int d, std::vector<std::array<double, 3>> centers,
                                 double sigma_scalar) {
    GaussianBasis b;
    b.d = d;
    b.centers = std::move(centers);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) b.sigma[i][j] = (i == j && i < d) ? sigma_scalar * sigma_scalar : 0.0;
    b.validate();
    return b;
  }

  double det() const {
    if (d == 2) return sigma[0][0] * sigma[1][1] - sigma[0][1] * sigma[1][0];
    return sigma[0][0] * (sigma[1][1] * sigma[2][2] - sigma[1][2] * sigma[2][1]) -
           sigma[0][1] * (sigma[1][0] * sigma[2][2] - sigma[1][2] * sigma[2][0]) +
           sigma[0][2] * (sigma[1][0] * sigma[2][1] - sigma[1][1] * sigma[2][0]);
  }

  void validate() const {
    if (d != 2 && d != 3) throw std::invalid_argument("basis: d must be 2 or 3");
    if (centers.empty()) throw std::invalid_argument("basis: needs at least one center");
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        if (std::abs(sigma[i][j] - sigma[j][i]) > 1e-14)
          throw std::invalid_argument("basis: covariance must be symmetric");
    if (!(sigma[0][0] > 0.0)) throw std::invalid_argument("basis: covariance not SPD");
    double m2 = sigma[0][0] * sigma[1][1] - sigma[0][1] * sigma[1][0];
    if (!(m2 > 0.0)) throw std::invalid_argument("basis: covariance not SPD");
    if (d == 3 && !(det() > 0.0)) throw std::invalid_argument("basis: covariance not SPD");
  }

  /// Inverse covariance by adjugate (d <= 3).
  std::array<std::array<double, 3>, 3> inverse() const {
    std::array<std::array<double, 3>, 3> inv{};
    if (d == 2) {
      double dt = det();
      inv[0][0] = sigma[1][1] / dt;
      inv[1][1] = sigma[0][0] / dt;
      inv[0][1] = -sigma[0][1] / dt;
      inv[1][0] = -sigma[1][0] / dt;
    } else {
      double dt = det();
      inv[0][0] = (sigma[1][1] * sigma[2][2] - sigma[1][2] * sigma[2][1]) / dt;
      inv[0][1] = (sigma[0][2] * sigma[2][1] - sigma[0][1] * sigma[2][2]) / dt;
      inv[0][2] = (sigma[0][1] * sigma[1][2] - sigma[0][2] * sigma[1][1]) / dt;
      inv[1][0] = (sigma[1][2] * sigma[2][0] - sigma[1][0] * sigma[2][2]) / dt;
      inv[1][1] = (sigma[0][0] * sigma[2][2] - sigma[0][2] * sigma[2][0]) / dt;
      inv[1][2] = (sigma[0][2] * sigma[1][0] - sigma[0][0] * sigma[1][2]) / dt;
      inv[2][0] = (sigma[1][0] * sigma[2][1] - sigma[1][1] * sigma[2][0]) / dt;
      inv[2][1] = (sigma[0][1] * sigma[2][0] - sigma[0][0] * sigma[2][1]) / dt;
      inv[2][2] = (sigma[0][0] * sigma[1][1] - sigma[0][1] * sigma[1][0]) / dt;
    }
    return inv;
  }

  double normalization() const { return 1.0 / (2.0 * std::numbers::pi * std::sqrt(det())); }
};

/// Basis functions sampled on a grid (built once, reused by every matvec).
struct BasisTable {
  Grid grid;
  std::vector<ScalarField> phi;
  std::vector<double> phi_sq_norm;  // <phi_l, phi_l> with grid quadrature

  int n_p() const { return static_cast<int>(phi.size()); }
};

inline BasisTable make_basis_table(const GaussianBasis& basis, const Grid& grid) {
  basis.validate();
  if (basis.d != grid.d) throw std::invalid_argument("basis/grid dimension mismatch");
  BasisTable table;
  table.grid = grid;
  auto inv = basis.inverse();
  const double norm = basis.normalization();
  for (const auto& mu : basis.centers) {
    ScalarField f = make_scalar_field(grid, [&](double x, double y, double z) {
      double dx[3] = {x - mu[0], y - mu[1], z - mu[2]};
      double q = 0.0;
      for (int i = 0; i < basis.d; ++i)
        for (int j = 0; j < basis.d; ++j) q += dx[i] * inv[i][j] * dx[j];
      return norm * std::exp(-0.5 * q);
    });
    table.phi_sq_norm.push_back(inner(f, f));
    table.phi.push_back(std::move(f));
  }
  return table;
}

/// m_I = Phi p: direct pointwise sum of the scaled Gaussians.
inline ScalarField apply_basis(const BasisTable& table, const std::vector<double>& p) {
  if (static_cast<int>(p.size()) != table.n_p())
    throw std::invalid_argument("apply_basis: coefficient count mismatch");
  ScalarField out(table.grid);
  for (int l = 0; l < table.n_p(); ++l) axpy(p[l], table.phi[l], out);
  return out;
}

inline ScalarField apply_basis(const GaussianBasis& basis, const Grid& grid,
                               const std::vector<double>& p) {
  return apply_basis(make_basis_table(basis, grid), p);
}

/// (Phi^T f)_l = <phi_l, f> with the grid quadrature weight.
inline std::vector<double> apply_basis_transpose(const BasisTable& table, const ScalarField& f) {
  check_same_grid(table.grid, f.grid, "apply_basis_transpose");
  std::vector<double> out(table.n_p());
  for (int l = 0; l < table.n_p(); ++l) out[l] = inner(table.phi[l], f);
  return out;
}

/// Diagonal projection onto the observed region {pi_T >= threshold}.
struct ObservationOp {
  Grid grid;
  std::vector<uint8_t> mask;
  bool empty = true;

  std::size_t count() const {
    std::size_t c = 0;
    for (auto m : mask) c += m;
    return c;
  }

  ScalarField apply(const ScalarField& f) const {
    check_same_grid(grid, f.grid, "observation");
    ScalarField out = f;
    for (std::size_t i = 0; i < out.size(); ++i)
      if (!mask[i]) out.v[i] = 0.0;
    return out;
  }
};

inline ObservationOp build_observation(const ScalarField& pi_T, double threshold) {
  if (!(threshold >= 0.0 && threshold < 1.0))
    throw std::invalid_argument("build_observation: threshold must lie in [0,1)");
  ObservationOp op;
  op.grid = pi_T.grid;
  op.mask.resize(pi_T.size());
  for (std::size_t i = 0; i < pi_T.size(); ++i) op.mask[i] = pi_T.v[i] >= threshold ? 1 : 0;
  op.empty = op.count() == 0;
  return op;
}

/// Data assimilation problem for the reaction-diffusion model. Call
/// prepare() after filling the inputs; it assembles the diffusion field,
/// the basis table and the observation operators.
struct TumorProblem {
  ScalarField pi_W, pi_G;   // tissue probability maps
  ScalarField pi_T;         // observed tumor data at t = 1
  BrainMask mask;
  GaussianBasis basis;
  double k_W = 0.0, k_G = 0.0, rho = 0.0;
  double beta = 1e-6;
  double obs_threshold = 0.0;
  int n_t = 8;
  std::optional<ScalarField> t0_data;  // optional second observation at t = 0
  CnOptions cn;

  // derived, filled by prepare()
  DiffusionField k;
  ScalarField rho_field;
  std::shared_ptr<const BasisTable> table;
  ObservationOp Q, Q0;

  void prepare() {
    check_same_grid(pi_W.grid, pi_T.grid, "tumor problem");
    if (!(beta > 0.0)) throw std::invalid_argument("tumor: beta must be > 0");
    if (n_t < 1) throw std::invalid_argument("tumor: n_t must be >= 1");
    if (!(rho > 0.0)) throw std::invalid_argument("tumor: rho must be > 0");
    k = assemble_diffusion(pi_W, pi_G, k_W, k_G, mask);
    rho_field = make_rho_field(rho, mask);
    table = std::make_shared<BasisTable>(make_basis_table(basis, pi_W.grid));
    Q = build_observation(pi_T, obs_threshold);
    if (t0_data) Q0 = build_observation(*t0_data, obs_threshold);
  }
};

struct TumorObjectiveValue {
  double objective = 0.0;
  double mismatch = 0.0;  // 0.5 ||Q(m(1) - pi_T)||^2
};

inline TumorObjectiveValue tumor_objective_from_state(const TumorProblem& prob,
                                                      const std::vector<double>& p,
                                                      const Trajectory& state) {
  TumorObjectiveValue val;
  ScalarField r1 = prob.Q.apply(subtract(state.final_frame(), prob.pi_T));
  val.mismatch = 0.5 * inner(r1, r1);
  double pn2 = 0.0;
  for (double x : p) pn2 += x * x;
  val.objective = val.mismatch + 0.5 * prob.beta * pn2;
  if (prob.t0_data) {
    ScalarField r0 = prob.Q0.apply(subtract(state.frames[0], *prob.t0_data));
    val.objective += 0.5 * inner(r0, r0);
  }
  return val;
}

inline TumorObjectiveValue tumor_objective(const TumorProblem& prob, const std::vector<double>& p,
                                           CnStats* stats = nullptr) {
  ScalarField m0 = apply_basis(*prob.table, p);
  Trajectory state = rd_forward(m0, prob.k, prob.rho_field, prob.n_t, prob.cn, stats);
  return tumor_objective_from_state(prob, p, state);
}

/// Reduced gradient g = beta p - Phi^T lambda_0 with the adjoint final
/// condition lambda(1) = -Q^T (Q m(1) - pi_T); the t = 0 observation adds
/// Phi^T Q0^T (Q0 Phi p - d0).
inline std::vector<double> tumor_gradient_from_state(const TumorProblem& prob,
                                                     const std::vector<double>& p,
                                                     const RdLinearization& lin,
                                                     CnStats* stats = nullptr) {
  const Trajectory& state = *lin.state;
  ScalarField lam1 = prob.Q.apply(subtract(state.final_frame(), prob.pi_T));
  scale(lam1, -1.0);
  Trajectory adj = rd_adjoint(lam1, lin, prob.k, prob.cn, stats);
  std::vector<double> g = apply_basis_transpose(*prob.table, adj.frames[0]);
  for (int l = 0; l < prob.table->n_p(); ++l) g[l] = prob.beta * p[l] - g[l];
  if (prob.t0_data) {
    ScalarField r0 = prob.Q0.apply(subtract(state.frames[0], *prob.t0_data));
    std::vector<double> g0 = apply_basis_transpose(*prob.table, r0);
    for (int l = 0; l < prob.table->n_p(); ++l) g[l] += g0[l];
  }
  return g;
}

inline std::vector<double> tumor_gradient(const TumorProblem& prob, const std::vector<double>& p,
                                          CnStats* stats = nullptr) {
  ScalarField m0 = apply_basis(*prob.table, p);
  auto state = std::make_shared<Trajectory>(
      rd_forward(m0, prob.k, prob.rho_field, prob.n_t, prob.cn, stats));
  RdLinearization lin = make_rd_linearization(state, prob.rho_field);
  return tumor_gradient_from_state(prob, p, lin, stats);
}

/// Gauss-Newton Hessian matvec H p~ = beta p~ - Phi^T lambda~_0 with
/// m~(0) = Phi p~ and lambda~(1) = -Q^T Q m~(1).
inline std::vector<double> tumor_hessian_matvec_gn(const TumorProblem& prob,
                                                   const RdLinearization& lin,
                                                   const std::vector<double>& ptilde,
                                                   CnStats* stats = nullptr) {
  ScalarField mt0 = apply_basis(*prob.table, ptilde);
  Trajectory mt = rd_incremental_state(mt0, lin, prob.k, prob.cn, stats);
  ScalarField lt1 = prob.Q.apply(mt.final_frame());
  scale(lt1, -1.0);
  Trajectory lt = rd_incremental_adjoint_gn(lt1, lin, prob.k, prob.cn, stats);
  std::vector<double> h = apply_basis_transpose(*prob.table, lt.frames[0]);
  for (int l = 0; l < prob.table->n_p(); ++l) h[l] = prob.beta * ptilde[l] - h[l];
  if (prob.t0_data) {
    std::vector<double> h0 = apply_basis_transpose(*prob.table, prob.Q0.apply(mt0));
    for (int l = 0; l < prob.table->n_p(); ++l) h[l] += h0[l];
  }
  return h;
}

/// Adapter between the tumor problem and the generic GNK driver. The
/// coefficient space carries the Euclidean inner product; the
/// preconditioner is (beta I + diag(Phi^T Phi))^{-1}.
class TumorObjective : public OptimizationProblem {
 public:
  explicit TumorObjective(const TumorProblem& prob) : prob_(prob) {
    if (!prob_.table) throw std::logic_error("TumorObjective: problem not prepared");
  }

  const TumorProblem& problem() const { return prob_; }
  const CnStats& stats() const { return stats_; }

  double objective(const Vec& p) override {
    refresh(p, false);
    return value_.objective;
  }

  Vec gradient(const Vec& p) override {
    refresh(p, true);
    return grad_;
  }

  void set_linearization(const Vec& p) override { refresh(p, true); }

  Vec hessian_matvec(const Vec& dp) override {
    if (!lin_.state) throw std::logic_error("hessian_matvec before set_linearization");
    return tumor_hessian_matvec_gn(prob_, lin_, dp, &stats_);
  }

  Vec precondition(const Vec& r) override {
    Vec z(r.size());
    for (std::size_t l = 0; l < r.size(); ++l)
      z[l] = r[l] / (prob_.beta + prob_.table->phi_sq_norm[l]);
    return z;
  }

  double last_mismatch() const override { return value_.mismatch; }

  const RdLinearization* linearization() const { return lin_.state ? &lin_ : nullptr; }

 private:
  void refresh(const Vec& p, bool need_adjoint) {
    const bool same = have_state_ && p == state_p_;
    if (!same) {
      ScalarField m0 = apply_basis(*prob_.table, p);
      auto state = std::make_shared<Trajectory>(
          rd_forward(m0, prob_.k, prob_.rho_field, prob_.n_t, prob_.cn, &stats_));
      lin_ = make_rd_linearization(state, prob_.rho_field);
      value_ = tumor_objective_from_state(prob_, p, *state);
      state_p_ = p;
      have_state_ = true;
      have_grad_ = false;
    }
    if (need_adjoint && !have_grad_) {
      grad_ = tumor_gradient_from_state(prob_, p, lin_, &stats_);
      have_grad_ = true;
    }
  }

  TumorProblem prob_;
  CnStats stats_;
  RdLinearization lin_;
  TumorObjectiveValue value_;
  Vec state_p_, grad_;
  bool have_state_ = false, have_grad_ = false;
};

struct TumorInversionOptions {
  SolverOptions solver;
  bool invert_diffusivity = false;
  bool invert_rho = false;
  int scalar_rounds = 2;      // alternations of (p-solve, scalar descent)
  int scalar_max_steps = 4;   // descent steps per round
  double scalar_fd_step = 1e-3;  // central-difference step on log-parameters
};

struct TumorInversionResult {
  std::vector<double> p;
  double k_W = 0.0, k_G = 0.0, rho = 0.0;
  ConvergenceLog log;   // log of the final coefficient solve
  double mismatch = 0.0;
  long pcg_iterations_total = 0;
};

namespace detail {

/// Finite-difference gradient descent with backtracking on the
/// log-parameters theta (keeps the physical scalars positive). The
/// objective is the tumor misfit at fixed p.
inline void scalar_descent(TumorProblem prob, const std::vector<double>& p,
                           std::vector<double>& theta, const std::vector<int>& which,
                           const TumorInversionOptions& opts) {
  auto set_params = [&](TumorProblem& pr, const std::vector<double>& th) {
    int j = 0;
    for (int idx : which) {
      double val = std::exp(th[j++]);
      if (idx == 0) pr.k_W = val;
      if (idx == 1) pr.k_G = val;
      if (idx == 2) pr.rho = val;
    }
    pr.k = assemble_diffusion(pr.pi_W, pr.pi_G, pr.k_W, pr.k_G, pr.mask);
    pr.rho_field = make_rho_field(pr.rho, pr.mask);
  };
  auto eval = [&](const std::vector<double>& th) {
    TumorProblem pr = prob;
    set_params(pr, th);
    return tumor_objective(pr, p).objective;
  };

  double f = eval(theta);
  for (int step = 0; step < opts.scalar_max_steps; ++step) {
    std::vector<double> gradt(theta.size());
    double gnorm = 0.0;
    for (std::size_t j = 0; j < theta.size(); ++j) {
      std::vector<double> tp = theta, tm = theta;
      tp[j] += opts.scalar_fd_step;
      tm[j] -= opts.scalar_fd_step;
      gradt[j] = (eval(tp) - eval(tm)) / (2.0 * opts.scalar_fd_step);
      gnorm += gradt[j] * gradt[j];
    }
    gnorm = std::sqrt(gnorm);
    if (gnorm < 1e-14 * std::max(1.0, std::abs(f))) break;

    // scale-aware step, capped so one step never moves log-params by more
    // than 0.1 (the scalars stay within a moderate band of the start)
    double t = std::min(std::abs(f) / (gnorm * gnorm), 0.1 / gnorm);
    bool accepted = false;
    for (int bt = 0; bt < 12; ++bt) {
      std::vector<double> trial = theta;
      for (std::size_t j = 0; j < theta.size(); ++j) trial[j] -= t * gradt[j];
      double ft = eval(trial);
      if (ft < f) {
        theta = trial;
        f = ft;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
  }
}

}  // namespace detail

/// Gauss-Newton-Krylov inversion for the basis coefficients, with optional
/// finite-difference recovery of the scalar model parameters.
inline TumorInversionResult run_tumor_inversion(const TumorProblem& problem,
                                                const TumorInversionOptions& opts) {
  TumorProblem prob = problem;
  if (!prob.table) prob.prepare();

  std::vector<int> which;
  if (opts.invert_diffusivity) {
    which.push_back(0);
    which.push_back(1);
  }
  if (opts.invert_rho) which.push_back(2);

  std::vector<double> p(prob.table->n_p(), 0.0);
  TumorInversionResult result;
  ConvergenceLog last_log;
  long pcg_total = 0;
  double mismatch = 0.0;

  const int rounds = which.empty() ? 1 : std::max(1, opts.scalar_rounds);
  for (int round = 0; round < rounds; ++round) {
    TumorObjective objective(prob);
    GaussNewtonResult r = gauss_newton_solve(objective, std::move(p), opts.solver);
    p = std::move(r.w);
    last_log = std::move(r.log);
    mismatch = objective.last_mismatch();
    pcg_total += objective.stats().pcg_iterations;

    if (!which.empty() && round + 1 < rounds) {
      std::vector<double> theta;
      for (int idx : which)
        theta.push_back(std::log(idx == 0 ? prob.k_W : (idx == 1 ? prob.k_G : prob.rho)));
      detail::scalar_descent(prob, p, theta, which, opts);
      int j = 0;
      for (int idx : which) {
        double val = std::exp(theta[j++]);
        if (idx == 0) prob.k_W = val;
        if (idx == 1) prob.k_G = val;
        if (idx == 2) prob.rho = val;
      }
      prob.k = assemble_diffusion(prob.pi_W, prob.pi_G, prob.k_W, prob.k_G, prob.mask);
      prob.rho_field = make_rho_field(prob.rho, prob.mask);
    }
  }

  result.p = std::move(p);
  result.k_W = prob.k_W;
  result.k_G = prob.k_G;
  result.rho = prob.rho;
  result.log = std::move(last_log);
  result.mismatch = mismatch;
  result.pcg_iterations_total = pcg_total;
  return result;
}

/// L-curve helper: solve for a list of betas and log (residual norm,
/// coefficient norm) pairs for manual inspection.
struct LCurvePoint {
  double beta = 0.0;
  double residual_norm = 0.0;
  double p_norm = 0.0;
};

inline std::vector<LCurvePoint> beta_sweep(const TumorProblem& problem,
                                           const std::vector<double>& betas,
                                           const TumorInversionOptions& opts) {
  std::vector<LCurvePoint> out;
  for (double b : betas) {
    TumorProblem prob = problem;
    prob.beta = b;
    if (!prob.table) prob.prepare();
    TumorInversionResult r = run_tumor_inversion(prob, opts);
    LCurvePoint pt;
    pt.beta = b;
    pt.residual_norm = std::sqrt(2.0 * r.mismatch);
    double pn = 0.0;
    for (double x : r.p) pn += x * x;
    pt.p_norm = std::sqrt(pn);
    out.push_back(pt);
  }
  return out;
}

// ---- noise / threshold study ----------------------------------------------

/// Ground truth and noiseless observations driving the study harness.
struct StudyInputs {
  ScalarField pi_W, pi_G;
  BrainMask mask;
  GaussianBasis basis;
  std::vector<double> p_true;
  double k_W = 0.0, k_G = 0.0, rho = 0.0;
  int n_t = 8;
  ScalarField data_t0, data_t1, data_t2;  // noiseless states at t = 0, 1, 2
  double beta = 1e-6;
  CnOptions cn;
};

struct StudyRow {
  double threshold = 0.0;
  double noise = 0.0;
  double coeff_err = 0.0;
  double err_t0 = 0.0;
  double err_t1 = 0.0;
  double err_t2 = 0.0;
};

struct StudyTable {
  std::vector<StudyRow> rows;

  std::string to_csv() const {
    std::string out = "threshold,noise,coeff_err,err_t0,err_t1,err_t2\n";
    char line[256];
    for (const auto& r : rows) {
      std::snprintf(line, sizeof(line), "%.12e,%.12e,%.12e,%.12e,%.12e,%.12e\n", r.threshold,
                    r.noise, r.coeff_err, r.err_t0, r.err_t1, r.err_t2);
      out += line;
    }
    return out;
  }
};

namespace detail {

inline ScalarField add_clipped_noise(const ScalarField& f, double level, Rng& rng) {
  const double sigma = level * field_max(f);
  ScalarField out = f;
  for (double& x : out.v) {
    x += sigma * rng.normal();
    x = std::min(1.0, std::max(0.0, x));
  }
  return out;
}

inline double rel_l2_error(const ScalarField& approx, const ScalarField& truth) {
  ScalarField d = subtract(approx, truth);
  double tn = norm_l2(truth);
  return tn > 0.0 ? norm_l2(d) / tn : norm_l2(d);
}

inline StudyRow run_study_cell(const StudyInputs& in, double threshold, double noise,
                               std::uint64_t seed, const TumorInversionOptions& opts) {
  Rng rng(seed);
  ScalarField noisy_t1 = add_clipped_noise(in.data_t1, noise, rng);
  ScalarField noisy_t0 = add_clipped_noise(in.data_t0, noise, rng);

  TumorProblem prob;
  prob.pi_W = in.pi_W;
  prob.pi_G = in.pi_G;
  prob.pi_T = noisy_t1;
  prob.mask = in.mask;
  prob.basis = in.basis;
  prob.k_W = in.k_W;
  prob.k_G = in.k_G;
  prob.rho = in.rho;
  prob.beta = in.beta;
  prob.obs_threshold = threshold;
  prob.n_t = in.n_t;
  prob.t0_data = noisy_t0;
  prob.cn = in.cn;
  prob.prepare();

  TumorInversionResult r = run_tumor_inversion(prob, opts);

  // reconstruction with the recovered parameters
  TumorProblem rec = prob;
  rec.k_W = r.k_W;
  rec.k_G = r.k_G;
  rec.rho = r.rho;
  rec.k = assemble_diffusion(rec.pi_W, rec.pi_G, rec.k_W, rec.k_G, rec.mask);
  rec.rho_field = make_rho_field(rec.rho, rec.mask);
  ScalarField m0 = apply_basis(*rec.table, r.p);
  Trajectory t01 = rd_forward(m0, rec.k, rec.rho_field, rec.n_t, rec.cn);
  Trajectory t12 = rd_forward(t01.final_frame(), rec.k, rec.rho_field, rec.n_t, rec.cn);

  StudyRow row;
  row.threshold = threshold;
  row.noise = noise;
  if (opts.invert_diffusivity) {
    double num = std::hypot(r.k_W - in.k_W, r.k_G - in.k_G);
    double den = std::hypot(in.k_W, in.k_G);
    row.coeff_err = num / den;
  }
  row.err_t0 = rel_l2_error(m0, in.data_t0);
  row.err_t1 = rel_l2_error(t01.final_frame(), in.data_t1);
  row.err_t2 = rel_l2_error(t12.final_frame(), in.data_t2);
  return row;
}

}  // namespace detail

/// For each (noise, threshold) pair: perturb the noiseless observations,
/// invert, and tabulate relative reconstruction errors at t = 0, 1, 2
/// (the t = 2 column is a pure forward prediction). Cells are independent
/// and deterministic given the seed; jobs > 1 fans them out to a pool.
inline StudyTable noise_threshold_study(const StudyInputs& in,
                                        const std::vector<double>& noise_levels,
                                        const std::vector<double>& thresholds,
                                        std::uint64_t seed, const TumorInversionOptions& opts,
                                        int jobs = 1) {
  StudyTable table;
  const int cells = static_cast<int>(noise_levels.size() * thresholds.size());
  table.rows.resize(cells);

  // one noise realization for the whole grid, scaled by the level: cells
  // differ only in amplitude and observation mask, which isolates the
  // noise and threshold effects the table is meant to show
  const std::uint64_t realization_seed = seed * 1000003ULL + 1ULL;
  auto run_cell = [&](int idx) {
    std::size_t ti = idx / noise_levels.size();
    std::size_t ni = idx % noise_levels.size();
    table.rows[idx] = detail::run_study_cell(in, thresholds[ti], noise_levels[ni],
                                             realization_seed, opts);
  };

  if (jobs <= 1) {
    for (int i = 0; i < cells; ++i) run_cell(i);
  } else {
    std::vector<std::future<void>> futs;
    for (int i = 0; i < cells; ++i)
      futs.push_back(std::async(std::launch::async, run_cell, i));
    for (auto& f : futs) f.get();
  }
  return table;
}

}  // namespace pcopt
