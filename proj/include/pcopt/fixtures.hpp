#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

#include "grid.hpp"
#include "registration.hpp"
#include "rng.hpp"
#include "transport.hpp"
#include "tumor.hpp"

namespace pcopt {

/// Deterministic problem inputs for the shipped benchmark cases.
struct Fixture {
  std::string name;
  // registration-type fixtures
  ScalarField m_T, m_R;
  std::optional<VectorField> v_true;
  // tumor fixture
  std::optional<StudyInputs> tumor;
};

/// Smooth synthetic 3D benchmark: a sum-of-squared-sines template
/// transported by a known trigonometric velocity; the reference image is
/// produced by the forward solve so the ground-truth velocity is recoverable.
inline Fixture make_smooth_synthetic(const Grid& g, int n_t = 4) {
  if (g.d != 3) throw std::invalid_argument("smooth_synthetic is a 3D fixture");
  Fixture fx;
  fx.name = "smooth_synthetic";
  fx.m_T = make_scalar_field(g, [](double x1, double x2, double x3) {
    double s1 = std::sin(x1), s2 = std::sin(x2), s3 = std::sin(x3);
    return (s1 * s1 + s2 * s2 + s3 * s3) / 3.0;
  });
  fx.v_true = make_vector_field(g, [](double x1, double x2, double x3) {
    return std::array<double, 3>{0.5 * std::sin(x3) * std::cos(x2) * std::sin(x2),
                                 0.5 * std::sin(x1) * std::cos(x3) * std::sin(x3),
                                 0.5 * std::sin(x2) * std::cos(x1) * std::sin(x1)};
  });
  fx.m_R = solve_state(fx.m_T, *fx.v_true, n_t).final_frame();
  return fx;
}

/// Sphere-to-bowl benchmark: register a smoothed ball onto a ball with a
/// spherical cavity scooped out of it. Indicators are smoothed with a
/// one-voxel Gaussian and normalized to [0,1].
inline Fixture make_sphere_bowl(const Grid& g) {
  if (g.d != 3) throw std::invalid_argument("sphere_bowl is a 3D fixture");
  const double cx = std::numbers::pi;
  auto ball = [](double x, double y, double z, double bx, double by, double bz, double r) {
    double dx = x - bx, dy = y - by, dz = z - bz;
    return std::sqrt(dx * dx + dy * dy + dz * dz) <= r ? 1.0 : 0.0;
  };
  Fixture fx;
  fx.name = "sphere_bowl";
  ScalarField sphere = make_scalar_field(g, [&](double x, double y, double z) {
    return ball(x, y, z, cx, cx, cx, 1.35);
  });
  ScalarField bowl = make_scalar_field(g, [&](double x, double y, double z) {
    double outer = ball(x, y, z, cx, cx, cx, 1.55);
    double cavity = ball(x, y, z, cx, cx, cx + 1.05, 1.15);
    return outer * (1.0 - cavity);
  });
  fx.m_T = preprocess_image(sphere, 1.0);
  fx.m_R = preprocess_image(bowl, 1.0);
  return fx;
}

/// Checkerboard pair: a smoothed checker template and its transport under a
/// fixed smooth velocity. Works in 2D and 3D.
inline Fixture make_checker(const Grid& g, int n_t = 4) {
  Fixture fx;
  fx.name = "checker";
  ScalarField checker = make_scalar_field(g, [&](double x, double y, double z) {
    double s = std::sin(2.0 * x) * std::sin(2.0 * y);
    if (g.d == 3) s *= std::sin(2.0 * z);
    return s > 0.0 ? 1.0 : 0.0;
  });
  fx.m_T = preprocess_image(checker, 1.0);
  VectorField v = make_vector_field(g, [&](double x1, double x2, double x3) {
    (void)x3;
    std::array<double, 3> out{0.3 * std::sin(x2), 0.3 * std::sin(x1), 0.0};
    if (g.d == 3) out[2] = 0.3 * std::sin(x1 + x2);
    return out;
  });
  fx.v_true = v;
  fx.m_R = solve_state(fx.m_T, v, n_t).final_frame();
  return fx;
}

/// Multifocal tumor case on a synthetic anatomy: an elliptical domain with
/// smooth complementary white/gray matter maps, two clusters of Gaussian
/// basis bumps, and noiseless observations at t = 0, 1, 2 generated by the
/// forward model.
inline Fixture make_multifocal_tumor(const Grid& g, std::uint64_t seed = 0) {
  if (g.d != 2) throw std::invalid_argument("multifocal_tumor is a 2D fixture");
  (void)seed;  // the fixture itself is deterministic; noise is added by the study
  const double c = std::numbers::pi;

  StudyInputs in;
  // smooth indicator of the elliptical domain
  ScalarField inside_smooth = make_scalar_field(g, [&](double x, double y, double) {
    double ex = (x - c) / 2.4, ey = (y - c) / 2.0;
    double r = std::sqrt(ex * ex + ey * ey);
    return 0.5 * (1.0 - std::tanh((r - 1.0) / 0.08));
  });
  ScalarField left_weight = make_scalar_field(g, [&](double x, double, double) {
    return 0.5 * (1.0 + std::tanh((x - c) / 0.8));
  });
  in.pi_W = ScalarField(g);
  in.pi_G = ScalarField(g);
  for (std::size_t i = 0; i < g.points(); ++i) {
    double w = inside_smooth.v[i];
    in.pi_W.v[i] = 0.9 * w * left_weight.v[i];
    in.pi_G.v[i] = 0.9 * w * (1.0 - left_weight.v[i]);
  }

  in.mask = BrainMask(g);
  for (std::size_t i = 0; i < g.points(); ++i) in.mask.inside[i] = inside_smooth.v[i] > 0.05;
  in.k_W = 0.050;
  in.k_G = 0.010;
  in.rho = 3.0;
  in.mask.penalty_k = 1e-3 * std::min(in.k_W, in.k_G);
  in.mask.penalty_rho = 0.0;
  in.n_t = 8;

  // two foci, a 2x2 cluster of bumps each
  const double h = g.spacing(0);
  const double sg = 2.0 * h;
  std::vector<std::array<double, 3>> centers;
  auto add_cluster = [&](double fx, double fy) {
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        centers.push_back({fx + (a - 0.5) * 3.0 * h, fy + (b - 0.5) * 3.0 * h, 0.0});
  };
  add_cluster(c - 1.0, c + 0.45);
  add_cluster(c + 1.1, c - 0.55);
  in.basis = GaussianBasis::isotropic(2, centers, sg);

  in.p_true = {0.12, 0.08, 0.10, 0.06, 0.11, 0.07, 0.09, 0.05};
  for (auto& pv : in.p_true) pv *= 2.0 * std::numbers::pi * sg * sg;  // undo the peak normalization scale

  BasisTable table = make_basis_table(in.basis, g);
  ScalarField m0 = apply_basis(table, in.p_true);
  DiffusionField k = assemble_diffusion(in.pi_W, in.pi_G, in.k_W, in.k_G, in.mask);
  ScalarField rho_field = make_rho_field(in.rho, in.mask);
  Trajectory t01 = rd_forward(m0, k, rho_field, in.n_t, in.cn);
  Trajectory t12 = rd_forward(t01.final_frame(), k, rho_field, in.n_t, in.cn);
  in.data_t0 = m0;
  in.data_t1 = t01.final_frame();
  in.data_t2 = t12.final_frame();

  Fixture fx;
  fx.name = "multifocal_tumor";
  fx.tumor = std::move(in);
  return fx;
}

inline Fixture make_fixture(const std::string& name, const Grid& g, std::uint64_t seed = 0) {
  if (name == "smooth_synthetic") return make_smooth_synthetic(g);
  if (name == "sphere_bowl") return make_sphere_bowl(g);
  if (name == "checker") return make_checker(g);
  if (name == "multifocal_tumor") return make_multifocal_tumor(g, seed);
  throw std::invalid_argument("unknown fixture name: " + name);
}

}  // namespace pcopt
