#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "pcopt/fixtures.hpp"
#include "pcopt/registration.hpp"

using namespace pcopt;

namespace {

ScalarField sum_sq_sines(const Grid& g) {
  return make_scalar_field(g, [](double x, double y, double z) {
    double s1 = std::sin(x), s2 = std::sin(y), s3 = std::sin(z);
    return (s1 * s1 + s2 * s2 + s3 * s3) / 3.0;
  });
}

VectorField trig_velocity(const Grid& g, double amp) {
  return make_vector_field(g, [&](double x, double y, double z) {
    return std::array<double, 3>{amp * std::sin(z) * std::cos(y) * std::sin(y),
                                 amp * std::sin(x) * std::cos(z) * std::sin(z),
                                 amp * std::sin(y) * std::cos(x) * std::sin(x)};
  });
}

RegistrationProblem synthetic_problem(const Grid& g, double beta, int n_t) {
  RegistrationProblem prob;
  prob.m_T = sum_sq_sines(g);
  prob.m_R = solve_state(prob.m_T, trig_velocity(g, 0.4), n_t).final_frame();
  prob.reg.model = RegModel::H2;
  prob.reg.beta = beta;
  prob.reg.gamma = 1.0;
  prob.n_t = n_t;
  return prob;
}

}  // namespace

TEST_CASE("reg_objective") {
  Grid g(16, 16, 16);
  SECTION("identical images at zero velocity give J = 0") {
    RegistrationProblem prob;
    prob.m_T = sum_sq_sines(g);
    prob.m_R = prob.m_T;
    prob.reg.beta = 1e-2;
    RegObjectiveValue val = reg_objective(prob, VectorField(g));
    CHECK(val.objective == 0.0);
    CHECK(val.mismatch == 0.0);
    CHECK(val.reg_term == 0.0);
  }
  SECTION("zero velocity: J = half the squared image distance, unit relative mismatch") {
    RegistrationProblem prob = synthetic_problem(g, 1e-2, 4);
    RegObjectiveValue val = reg_objective(prob, VectorField(g));
    ScalarField d = subtract(prob.m_T, prob.m_R);
    CHECK(val.mismatch == Catch::Approx(0.5 * inner(d, d)).epsilon(1e-14));
    CHECK(val.reg_term == 0.0);
    CHECK(val.rel_mismatch == Catch::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("reg_gradient") {
  Grid g(16, 16, 16);
  SECTION("identical images at zero velocity give a vanishing gradient") {
    RegistrationProblem prob;
    prob.m_T = sum_sq_sines(g);
    prob.m_R = prob.m_T;
    prob.reg.beta = 1e-2;
    VectorField grd = reg_gradient(prob, VectorField(g));
    CHECK(norm_inf(grd) < 1e-14);
  }
  SECTION("perfect match at t = 1 leaves only the regularization gradient") {
    RegistrationProblem prob;
    prob.m_T = sum_sq_sines(g);
    prob.reg.beta = 3e-2;
    prob.reg.gamma = 1.0;
    VectorField v = trig_velocity(g, 0.3);
    prob.m_R = solve_state(prob.m_T, v, prob.n_t).final_frame();
    VectorField grd = reg_gradient(prob, v);
    VectorField want = apply_regop(v, prob.reg);
    scale(want, prob.reg.beta);
    CHECK(oracles::rel_err_field(grd, want) < 1e-12);
  }
  SECTION("Taylor remainder decays at second order") {
    // beta at the continuation start level, where the spectrally consistent
    // regularization part dominates the optimize-then-discretize gap of the
    // semi-Lagrangian data term
    RegistrationProblem prob = synthetic_problem(g, 1e-1, 4);
    Rng rng(101);
    VectorField v = oracles::random_band_limited_vector(g, rng, 1, 0.3);
    VectorField vt = oracles::random_band_limited_vector(g, rng, 1, 0.3);
    RegistrationState st = evaluate_registration(prob, v);
    double gdot = inner(st.gradient, vt);
    std::vector<double> eps{1e-1, 1e-2, 1e-3, 1e-4};
    std::vector<double> rem;
    for (double e : eps) {
      VectorField vp = v;
      axpy(e, vt, vp);
      rem.push_back(std::abs(reg_objective(prob, vp).objective - st.objective - e * gdot));
    }
    double order = oracles::observed_order(eps, rem);
    INFO("remainders " << rem[0] << " " << rem[1] << " " << rem[2] << " " << rem[3]);
    CHECK(order > 1.85);
    CHECK(order < 2.15);
  }
  SECTION("data-term discretization gap stays below practical tolerances") {
    // central differences cancel the quadratic term and expose the
    // optimize-then-discretize inconsistency of the data gradient
    RegistrationProblem prob = synthetic_problem(g, 1e-2, 4);
    Rng rng(103);
    VectorField v = oracles::random_band_limited_vector(g, rng, 1, 0.3);
    VectorField vt = oracles::random_band_limited_vector(g, rng, 1, 0.3);
    RegistrationState st = evaluate_registration(prob, v);
    double gdot = inner(st.gradient, vt);
    const double e = 1e-3;
    VectorField vp = v, vm = v;
    axpy(e, vt, vp);
    axpy(-e, vt, vm);
    double fd =
        (reg_objective(prob, vp).objective - reg_objective(prob, vm).objective) / (2.0 * e);
    CHECK(std::abs(fd - gdot) / std::abs(fd) < 5e-2);
  }
}

TEST_CASE("reg_hessian_matvec_gn") {
  Grid g(12, 12, 12);
  RegistrationProblem prob = synthetic_problem(g, 1e-2, 4);
  Rng rng(107);
  VectorField v = oracles::random_band_limited_vector(g, rng, 1, 0.25);
  RegistrationState lin = evaluate_registration(prob, v);

  SECTION("zero direction maps to zero") {
    VectorField h = reg_hessian_matvec_gn(prob, lin, VectorField(g));
    CHECK(norm_inf(h) < 1e-14);
  }
  SECTION("constant template: only the regularization block acts") {
    RegistrationProblem cprob = prob;
    cprob.m_T = ScalarField(g, 0.5);
    cprob.m_R = ScalarField(g, 0.5);
    RegistrationState clin = evaluate_registration(cprob, v);
    VectorField vt = oracles::random_band_limited_vector(g, rng, 1, 0.3);
    VectorField h = reg_hessian_matvec_gn(cprob, clin, vt);
    VectorField want = apply_regop(vt, cprob.reg);
    scale(want, cprob.reg.beta);
    CHECK(oracles::rel_err_field(h, want) < 1e-12);
  }
  SECTION("Gauss-Newton curvature dominates the regularization quadratic form") {
    for (int t = 0; t < 5; ++t) {
      VectorField vt = oracles::random_band_limited_vector(g, rng, 2, 0.5);
      VectorField h = reg_hessian_matvec_gn(prob, lin, vt);
      double quad = inner(h, vt);
      double reg_quad = prob.reg.beta * inner(apply_regop(vt, prob.reg), vt);
      CHECK(quad >= reg_quad - 1e-6 * inner(vt, vt));
    }
  }
}

TEST_CASE("dense GN Hessian on 8^3: PSD and near-symmetric") {
  Grid g(8, 8, 8);
  RegistrationProblem prob = synthetic_problem(g, 2.5e-2, 4);
  Rng rng(103);
  VectorField v = oracles::random_band_limited_vector(g, rng, 1, 0.25);
  RegistrationState lin = evaluate_registration(prob, v);

  const std::size_t n = g.points();
  const std::size_t dim = 3 * n;
  std::vector<std::vector<double>> H(dim, std::vector<double>(dim));
  for (std::size_t col = 0; col < dim; ++col) {
    VectorField e(g);
    e.c[col / n].v[col % n] = 1.0;
    VectorField he = reg_hessian_matvec_gn(prob, lin, e);
    for (int c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < n; ++i) H[c * n + i][col] = he.c[c].v[i];
  }
  double asym2 = 0.0, norm2 = 0.0;
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = 0; j < dim; ++j) {
      double d = H[i][j] - H[j][i];
      asym2 += d * d;
      norm2 += H[i][j] * H[i][j];
    }
  double asym = std::sqrt(asym2 / norm2);
  INFO("relative asymmetry " << asym);
  CHECK(asym <= 1e-3);

  Rng rngx(105);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> x(dim);
    for (auto& xi : x) xi = rngx.normal();
    double q = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      double hx = 0.0;
      for (std::size_t j = 0; j < dim; ++j) hx += H[i][j] * x[j];
      q += x[i] * hx;
    }
    CHECK(q > 0.0);
  }
}

TEST_CASE("detgrad_report") {
  SECTION("zero velocity: min = max = 1") {
    Grid g(16, 16, 16);
    DetGradReport rep = detgrad_report(VectorField(g), 4);
    CHECK(rep.min == 1.0);
    CHECK(rep.max == 1.0);
    CHECK(rep.diffeomorphic);
  }
  SECTION("divergence-free velocity stays within 1e-3 of one") {
    Grid g(32, 32, 32);
    VectorField v = make_vector_field(g, [](double x, double y, double) {
      return std::array<double, 3>{0.5 * std::sin(y), 0.5 * std::sin(x), 0.0};
    });
    DetGradReport rep = detgrad_report(v, 4);
    CHECK(rep.min >= 1.0 - 1e-3);
    CHECK(rep.max <= 1.0 + 1e-3);
  }
  SECTION("expansion fixture extrema match the Lagrangian oracle") {
    Grid g(32, 32, 32);
    VectorField v = make_vector_field(g, [](double x, double, double) {
      return std::array<double, 3>{0.5 * std::sin(x), 0.0, 0.0};
    });
    DetGradReport rep = detgrad_report(v, 8);
    auto vel = [](const std::array<double, 3>& p) {
      return std::array<double, 3>{0.5 * std::sin(p[0]), 0.0, 0.0};
    };
    auto nvel = [&](const std::array<double, 3>& p) {
      auto f = vel(p);
      return std::array<double, 3>{-f[0], 0.0, 0.0};
    };
    double omin = 1e300, omax = -1e300;
    for (int i1 = 0; i1 < g.n[0]; ++i1) {
      auto a = oracles::integrate_flow({g.coord(0, i1), 0.0, 0.0}, 0.0, 1.0, 800, nvel);
      const double delta = 1e-5;
      auto yp = oracles::integrate_flow({a[0] + delta, 0.0, 0.0}, 0.0, 1.0, 800, vel);
      auto ym = oracles::integrate_flow({a[0] - delta, 0.0, 0.0}, 0.0, 1.0, 800, vel);
      double j = (yp[0] - ym[0]) / (2.0 * delta);
      omin = std::min(omin, j);
      omax = std::max(omax, j);
    }
    CHECK(std::abs(rep.min - omin) / omin < 1e-2);
    CHECK(std::abs(rep.max - omax) / omax < 1e-2);
  }
}

TEST_CASE("preprocess_image normalizes to [0,1]") {
  Grid g(16, 16, 16);
  ScalarField raw = make_scalar_field(g, [](double x, double y, double) {
    return (std::sin(3 * x) > 0 && std::cos(2 * y) > 0) ? 4.0 : -1.0;
  });
  ScalarField img = preprocess_image(raw, 1.0);
  CHECK(field_min(img) >= 0.0);
  CHECK(field_max(img) <= 1.0);
  CHECK(field_max(img) == Catch::Approx(1.0));
  CHECK(field_min(img) == Catch::Approx(0.0));
}

TEST_CASE("run_registration") {
  SECTION("identical images terminate at iteration zero with v = 0") {
    Grid g(16, 16, 16);
    RegistrationProblem prob;
    prob.m_T = sum_sq_sines(g);
    prob.m_R = prob.m_T;
    prob.reg.beta = 1e-2;
    RegistrationOptions opts;
    RegistrationResult r = run_registration(prob, opts);
    CHECK(r.log.accepted_iterations() == 0);
    CHECK(norm_inf(r.state.v) == 0.0);
    CHECK(r.log.status == SolveStatus::converged_abs);
  }
  SECTION("smooth synthetic problem: descent, forcing, nondecreasing PCG counts") {
    Grid g(24, 24, 24);
    Fixture fx = make_smooth_synthetic(g, 4);
    RegistrationProblem prob;
    prob.m_T = fx.m_T;
    prob.m_R = fx.m_R;
    prob.reg.model = RegModel::H2;
    prob.reg.beta = 1e-4;
    prob.reg.gamma = 1.0;
    prob.n_t = 4;
    RegistrationOptions opts;
    opts.solver.rel_grad_tol = 1e-5;
    RegistrationResult r = run_registration(prob, opts);
    CHECK(r.log.status == SolveStatus::converged_rel);
    CHECK(r.log.accepted_iterations() <= 15);
    CHECK(r.rel_mismatch <= 1e-2);
    const auto& recs = r.log.records;
    for (std::size_t j = 1; j < recs.size(); ++j) {
      CHECK(recs[j].objective <= recs[j - 1].objective);  // monotone descent
      if (j >= 2) CHECK(recs[j].pcg_iters >= recs[j - 1].pcg_iters);
      CHECK_FALSE(recs[j].pcg_negative_curvature);
      double eta_expect = std::min(0.5, std::sqrt(recs[j - 1].grad_norm / recs[0].grad_norm));
      CHECK(recs[j].eta == eta_expect);
    }
    DetGradReport rep = detgrad_report(r.state.v, prob.n_t);
    CHECK(rep.min > 0.0);
  }
  SECTION("mismatch at convergence is stable under n_t refinement") {
    Grid g(24, 24, 24);
    double mis[2];
    int idx = 0;
    for (int n_t : {4, 8}) {
      Fixture fx = make_smooth_synthetic(g, n_t);
      RegistrationProblem prob;
      prob.m_T = fx.m_T;
      prob.m_R = fx.m_R;
      prob.reg.model = RegModel::H2;
      prob.reg.beta = 1e-4;
      prob.reg.gamma = 1.0;
      prob.n_t = n_t;
      RegistrationOptions opts;
      opts.solver.rel_grad_tol = 1e-5;
      mis[idx++] = run_registration(prob, opts).rel_mismatch;
    }
    CHECK(std::abs(mis[0] - mis[1]) <= 0.05 * std::max(mis[0], mis[1]));
  }
  SECTION("incompressible mode keeps the velocity divergence-free") {
    Grid g(24, 24, 24);
    Fixture fx = make_smooth_synthetic(g, 4);  // the true velocity is solenoidal
    RegistrationProblem prob;
    prob.m_T = fx.m_T;
    prob.m_R = fx.m_R;
    prob.reg.model = RegModel::H2;
    prob.reg.beta = 1e-4;
    prob.reg.gamma = 1.0;
    prob.incompressible = true;
    RegistrationOptions opts;
    opts.solver.rel_grad_tol = 1e-4;
    RegistrationResult r = run_registration(prob, opts);
    CHECK(norm_inf(div(r.state.v)) <= 1e-10);
    CHECK(r.rel_mismatch < 0.05);
  }
  SECTION("H1-div model runs and reduces the mismatch") {
    Grid g(16, 16, 16);
    Fixture fx = make_smooth_synthetic(g, 4);
    RegistrationProblem prob;
    prob.m_T = fx.m_T;
    prob.m_R = fx.m_R;
    prob.reg.model = RegModel::H1Div;
    prob.reg.beta = 1e-2;
    prob.reg.gamma = 1.0;
    prob.reg.div_penalty = 1e-4;
    RegistrationOptions opts;
    opts.solver.rel_grad_tol = 1e-3;
    opts.solver.max_newton = 20;
    RegistrationResult r = run_registration(prob, opts);
    CHECK(r.rel_mismatch < 0.3);
    CHECK(r.log.accepted_iterations() >= 1);
  }
}
