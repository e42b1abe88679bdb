#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "pcopt/reaction_diffusion.hpp"

using namespace pcopt;

namespace {

ScalarField smooth_bump_2d(const Grid& g, double amp = 0.5) {
  const double c = std::numbers::pi;
  return make_scalar_field(g, [&](double x, double y, double) {
    double dx = x - c, dy = y - c;
    return amp * std::exp(-(dx * dx + dy * dy) / 0.8);
  });
}

}  // namespace

TEST_CASE("assemble_diffusion") {
  Grid g(16, 16);
  BrainMask mask(g);
  mask.penalty_k = 1e-5;
  SECTION("pure white matter gives k_W") {
    ScalarField w(g, 1.0), gr(g, 0.0);
    DiffusionField k = assemble_diffusion(w, gr, 0.3, 0.1, mask);
    for (double x : k.kappa) REQUIRE(x == 0.3);
  }
  SECTION("equal coefficients factorize") {
    ScalarField w = smooth_bump_2d(g, 0.4), gr = smooth_bump_2d(g, 0.3);
    DiffusionField k = assemble_diffusion(w, gr, 0.2, 0.2, mask);
    for (std::size_t i = 0; i < k.kappa.size(); ++i)
      CHECK(k.kappa[i] == Catch::Approx(0.2 * (w.v[i] + gr.v[i])).epsilon(1e-14));
  }
  SECTION("mixed maps match the pointwise oracle, penalty outside the mask") {
    ScalarField w = smooth_bump_2d(g, 0.6), gr = smooth_bump_2d(g, 0.35);
    BrainMask partial(g);
    partial.penalty_k = 1e-5;
    for (std::size_t i = 0; i < g.points(); ++i) partial.inside[i] = (i % 3 != 0);
    DiffusionField k = assemble_diffusion(w, gr, 0.25, 0.05, partial);
    for (std::size_t i = 0; i < k.kappa.size(); ++i) {
      double want = partial.inside[i] ? 0.25 * w.v[i] + 0.05 * gr.v[i] : 1e-5;
      REQUIRE(k.kappa[i] == want);
    }
  }
  SECTION("rejects nonpositive coefficients and out-of-range maps") {
    ScalarField w(g, 1.0), gr(g, 0.0);
    CHECK_THROWS_AS(assemble_diffusion(w, gr, -0.1, 0.1, mask), std::invalid_argument);
    CHECK_THROWS_AS(assemble_diffusion(w, gr, 0.1, 0.0, mask), std::invalid_argument);
    ScalarField bad(g, 1.5);
    CHECK_THROWS_AS(assemble_diffusion(bad, gr, 0.3, 0.1, mask), std::invalid_argument);
  }
}

TEST_CASE("logistic_step") {
  Grid g(8, 8);
  ScalarField rho(g, 1.0);
  SECTION("fixed points") {
    ScalarField zero(g, 0.0), one(g, 1.0);
    ScalarField z2 = logistic_step(zero, rho, 0.7);
    ScalarField o2 = logistic_step(one, rho, 0.7);
    for (double x : z2.v) REQUIRE(x == 0.0);
    for (double x : o2.v) REQUIRE(x == 1.0);
  }
  SECTION("closed-form value at m = 0.2, rho = 1, h = 1") {
    ScalarField m(g, 0.2);
    ScalarField out = logistic_step(m, rho, 1.0);
    // frozen from the independent closed-form evaluation
    for (double x : out.v) CHECK(x == Catch::Approx(0.404609675191689665).epsilon(1e-14));
  }
  SECTION("clamps slight overshoot and reports") {
    ScalarField m(g, 1.0 + 1e-6);
    LogisticReport rep;
    ScalarField out = logistic_step(m, rho, 0.5, &rep);
    CHECK(rep.clamped == g.points());
    CHECK(rep.max_violation == Catch::Approx(1e-6));
    for (double x : out.v) CHECK(x == 1.0);
  }
  SECTION("rejects grossly out-of-range input") {
    ScalarField m(g, 1.5);
    CHECK_THROWS_AS(logistic_step(m, rho, 0.5), std::invalid_argument);
  }
}

TEST_CASE("cn_diffusion_halfstep") {
  SECTION("zero diffusivity is the identity") {
    Grid g(16, 16);
    DiffusionField k(g, 0.0);
    ScalarField m = smooth_bump_2d(g);
    ScalarField out = cn_diffusion_halfstep(m, k, 0.125);
    for (std::size_t i = 0; i < m.size(); ++i) REQUIRE(out.v[i] == m.v[i]);
  }
  SECTION("default tolerance is 1e-6") {
    CHECK(CnOptions{}.tol == 1e-6);
    CHECK(CnOptions{}.max_iter == 500);
  }
  SECTION("single-mode amplification factor for constant diffusivity") {
    Grid g(32, 32);
    const double kappa0 = 0.35, h_t = 0.2;
    DiffusionField k(g, kappa0);
    // mode with |k|^2 = 1^2 + 2^2 = 5
    ScalarField m = make_scalar_field(g, [](double x, double y, double) {
      return std::sin(x) * std::cos(2 * y);
    });
    ScalarField out = cn_diffusion_halfstep(m, k, h_t);
    const double a = h_t * 5.0 * kappa0 / 4.0;
    const double factor = (1.0 - a) / (1.0 + a);
    CHECK(oracles::rel_err_field(out, scaled(m, factor)) < 1e-6);
  }
  SECTION("PCG residual honors the tolerance on a variable coefficient") {
    Grid g(32, 32);
    ScalarField w = smooth_bump_2d(g, 0.9), gr(g, 0.1);
    BrainMask mask(g);
    mask.penalty_k = 1e-5;
    DiffusionField k = assemble_diffusion(w, gr, 0.8, 0.2, mask);
    ScalarField m = make_scalar_field(g, [](double x, double y, double) {
      return 0.5 + 0.3 * std::sin(3 * x) * std::sin(y);
    });
    const double h_t = 0.125;
    ScalarField out = cn_diffusion_halfstep(m, k, h_t);
    // residual of (I - a L) out = (I + a L) m
    const double a = h_t / 4.0;
    ScalarField lo = detail::variable_diffusion_apply(out, k);
    ScalarField lm = detail::variable_diffusion_apply(m, k);
    double rn = 0.0, bn = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
      double rhs = m.v[i] + a * lm.v[i];
      double res = rhs - (out.v[i] - a * lo.v[i]);
      rn += res * res;
      bn += rhs * rhs;
    }
    CHECK(std::sqrt(rn / bn) <= 1e-6);
  }
  SECTION("preconditioner at least halves the iteration count at contrast 5") {
    Grid g(64, 64);
    ScalarField w = smooth_bump_2d(g, 1.0), gr(g, 0.0);
    for (std::size_t i = 0; i < g.points(); ++i) gr.v[i] = 1.0 - w.v[i];
    BrainMask mask(g);
    mask.penalty_k = 1e-5;
    DiffusionField k = assemble_diffusion(w, gr, 1.0, 0.2, mask);  // contrast 5
    ScalarField m = make_scalar_field(g, [](double x, double y, double) {
      return 0.5 + 0.25 * std::sin(5 * x) * std::sin(3 * y) + 0.2 * std::sin(x);
    });
    CnOptions with, without;
    without.precondition = false;
    without.max_iter = 5000;
    CnStats s_with, s_without;
    cn_diffusion_halfstep(m, k, 0.125, with, &s_with);
    cn_diffusion_halfstep(m, k, 0.125, without, &s_without);
    INFO("preconditioned " << s_with.pcg_iterations << " vs " << s_without.pcg_iterations);
    CHECK(s_with.pcg_iterations * 2 <= s_without.pcg_iterations);
  }
}

TEST_CASE("rd_forward") {
  Grid g(32, 32);
  BrainMask mask(g);
  SECTION("zero initial condition stays zero") {
    DiffusionField k(g, 0.05);
    ScalarField rho = make_rho_field(2.0, mask);
    Trajectory t = rd_forward(ScalarField(g), k, rho, 4);
    for (const auto& f : t.frames) REQUIRE(norm_inf(f) == 0.0);
  }
  SECTION("no diffusion: matches the closed-form logistic evolution") {
    DiffusionField k(g, 0.0);
    ScalarField rho = make_rho_field(1.7, mask);
    ScalarField m0 = smooth_bump_2d(g, 0.6);
    Trajectory t = rd_forward(m0, k, rho, 8);
    const double e = std::exp(1.7);
    double max_err = 0.0;
    for (std::size_t i = 0; i < m0.size(); ++i) {
      double want = m0.v[i] * e / (1.0 - m0.v[i] + m0.v[i] * e);
      max_err = std::max(max_err, std::abs(t.final_frame().v[i] - want));
    }
    CHECK(max_err < 1e-12);
  }
  SECTION("second-order self-convergence of the splitting") {
    Grid g64(64, 64);
    BrainMask mask64(g64);
    DiffusionField k(g64, 0.05);
    ScalarField rho = make_rho_field(4.0, mask64);
    ScalarField m0 = make_scalar_field(g64, [](double x, double y, double) {
      double dx = x - std::numbers::pi, dy = y - std::numbers::pi;
      return 0.6 * std::exp(-(dx * dx + dy * dy) / 0.5);
    });
    CnOptions tight;
    tight.tol = 1e-11;
    Trajectory ref = rd_forward(m0, k, rho, 256, tight);
    auto err = [&](int n_t) {
      Trajectory t = rd_forward(m0, k, rho, n_t, tight);
      return norm_l2(subtract(t.final_frame(), ref.final_frame()));
    };
    double e8 = err(8), e16 = err(16), e32 = err(32);
    double p1 = std::log2(e8 / e16), p2 = std::log2(e16 / e32);
    INFO("orders " << p1 << " " << p2);
    CHECK(p1 > 1.7);
    CHECK(p1 < 2.1);
    CHECK(p2 > 1.7);
    CHECK(p2 < 2.1);
  }
  SECTION("boundedness on a smooth fixture") {
    DiffusionField k(g, 0.08);
    ScalarField rho = make_rho_field(3.0, mask);
    ScalarField m0 = smooth_bump_2d(g, 0.9);
    Trajectory t = rd_forward(m0, k, rho, 8);
    for (const auto& f : t.frames) {
      CHECK(field_min(f) >= -1e-3);
      CHECK(field_max(f) <= 1.0 + 1e-3);
    }
  }
}

TEST_CASE("rd_adjoint") {
  Grid g(32, 32);
  BrainMask mask(g);
  SECTION("zero final residual gives zero") {
    DiffusionField k(g, 0.05);
    ScalarField rho = make_rho_field(2.0, mask);
    Trajectory state = rd_forward(smooth_bump_2d(g), k, rho, 4);
    RdLinearization lin = make_rd_linearization(state, rho);
    Trajectory adj = rd_adjoint(ScalarField(g), lin, k);
    for (const auto& f : adj.frames) REQUIRE(norm_inf(f) == 0.0);
  }
  SECTION("zero state, zero diffusivity: pure exponential growth backward") {
    const double rho0 = 1.3;
    DiffusionField k(g, 0.0);
    ScalarField rho = make_rho_field(rho0, mask);
    Trajectory state = rd_forward(ScalarField(g), k, rho, 4);  // m = 0
    RdLinearization lin = make_rd_linearization(state, rho);
    ScalarField final(g, 0.25);
    Trajectory adj = rd_adjoint(final, lin, k);
    const double want = 0.25 * std::exp(rho0);  // n_t factors e^{rho h}
    for (double x : adj.frames[0].v) CHECK(oracles::rel_err(x, want) < 1e-12);
  }
  SECTION("zero reaction, constant diffusivity: backward heat decay") {
    const double kappa0 = 0.3;
    DiffusionField k(g, kappa0);
    BrainMask m2(g);
    m2.penalty_rho = 0.0;
    ScalarField rho(g, 0.0);
    ScalarField m0 = smooth_bump_2d(g, 0.4);
    // build a state trajectory with rho = 0 (reaction factor = 1)
    Trajectory state = rd_forward(m0, k, rho, 4);
    RdLinearization lin = make_rd_linearization(state, rho);
    const int n_t = state.n_t;
    const double h_t = 1.0 / n_t;
    ScalarField final = make_scalar_field(g, [](double x, double y, double) {
      return std::sin(x) * std::sin(y);  // |k|^2 = 2
    });
    Trajectory adj = rd_adjoint(final, lin, k);
    const double a = h_t * 2.0 * kappa0 / 4.0;
    const double factor = std::pow((1.0 - a) / (1.0 + a), 2 * n_t);
    CHECK(oracles::rel_err_field(adj.frames[0], scaled(final, factor)) < 1e-6);
  }
  SECTION("tangent and adjoint propagators are discrete transposes") {
    // the optimize-then-discretize gap: mirrored Strang schemes agree to
    // the inner PCG tolerance; 1e-4 is the contract
    Grid g16(16, 16);
    BrainMask mask16(g16);
    DiffusionField k(g16, 0.07);
    ScalarField rho = make_rho_field(2.5, mask16);
    ScalarField m0 = make_scalar_field(g16, [](double x, double y, double) {
      double dx = x - std::numbers::pi, dy = y - std::numbers::pi;
      return 0.55 * std::exp(-(dx * dx + dy * dy) / 0.6);
    });
    Trajectory state = rd_forward(m0, k, rho, 8);
    RdLinearization lin = make_rd_linearization(state, rho);
    Rng rng(71);
    ScalarField A = oracles::random_band_limited(g16, rng, 3);
    ScalarField B = oracles::random_band_limited(g16, rng, 3);
    Trajectory ta = rd_incremental_state(A, lin, k);
    Trajectory tb = rd_adjoint(B, lin, k);
    double lhs = inner(ta.final_frame(), B);
    double rhs = inner(A, tb.frames[0]);
    CHECK(oracles::rel_err(lhs, rhs) < 1e-4);
  }
  SECTION("incremental adjoint shares the adjoint code path bitwise") {
    DiffusionField k(g, 0.04);
    ScalarField rho = make_rho_field(2.0, mask);
    Trajectory state = rd_forward(smooth_bump_2d(g, 0.5), k, rho, 4);
    RdLinearization lin = make_rd_linearization(state, rho);
    Rng rng(73);
    ScalarField f = oracles::random_band_limited(g, rng, 2);
    Trajectory a = rd_incremental_adjoint_gn(f, lin, k);
    Trajectory b = rd_adjoint(f, lin, k);
    for (int j = 0; j <= 4; ++j)
      for (std::size_t i = 0; i < f.size(); ++i) REQUIRE(a.frames[j].v[i] == b.frames[j].v[i]);
  }
}
