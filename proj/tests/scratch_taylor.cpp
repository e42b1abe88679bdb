// scratch: probe Taylor-test order and dense GN Hessian asymmetry
#include <cstdio>

#include "oracles.hpp"
#include "pcopt/registration.hpp"

using namespace pcopt;

int main(int argc, char** argv) {
  int n_t = argc > 1 ? std::atoi(argv[1]) : 4;
  int ng = argc > 4 ? std::atoi(argv[4]) : 16;
  double beta8 = argc > 5 ? std::atof(argv[5]) : 0.0;
  double beta = argc > 2 ? std::atof(argv[2]) : 1e-2;
  double amp = argc > 3 ? std::atof(argv[3]) : 0.3;

  Grid g(ng, ng, ng);
  RegistrationProblem prob;
  prob.m_T = make_scalar_field(g, [](double x, double y, double z) {
    double s1 = std::sin(x), s2 = std::sin(y), s3 = std::sin(z);
    return (s1 * s1 + s2 * s2 + s3 * s3) / 3.0;
  });
  VectorField vstar = make_vector_field(g, [&](double x, double y, double z) {
    return std::array<double, 3>{0.4 * std::sin(z) * std::cos(y) * std::sin(y),
                                 0.4 * std::sin(x) * std::cos(z) * std::sin(z),
                                 0.4 * std::sin(y) * std::cos(x) * std::sin(x)};
  });
  prob.m_R = solve_state(prob.m_T, vstar, n_t).final_frame();
  prob.reg.model = RegModel::H2;
  prob.reg.beta = beta;
  prob.reg.gamma = 1.0;
  prob.n_t = n_t;

  Rng rng(101);
  VectorField v = oracles::random_band_limited_vector(g, rng, 1, amp);
  VectorField vt = oracles::random_band_limited_vector(g, rng, 1, amp);

  RegistrationState st = evaluate_registration(prob, v);
  double J0 = st.objective;
  double gdot = inner(st.gradient, vt);

  std::printf("J0=%.6e  gdot=%.6e\n", J0, gdot);
  std::vector<double> eps{1e-1, 1e-2, 1e-3, 1e-4};
  std::vector<double> rem;
  for (double e : eps) {
    VectorField vp = v;
    axpy(e, vt, vp);
    RegObjectiveValue val = reg_objective(prob, vp);
    double r = std::abs(val.objective - J0 - e * gdot);
    rem.push_back(r);
    std::printf("eps=%.1e  rem=%.6e\n", e, r);
  }
  std::printf("observed order = %.3f\n", oracles::observed_order(eps, rem));

  for (double e : {3e-3, 1e-3, 3e-4}) {
    VectorField vp = v, vm = v;
    axpy(e, vt, vp);
    axpy(-e, vt, vm);
    double Jp = reg_objective(prob, vp).objective;
    double Jm = reg_objective(prob, vm).objective;
    double fd = (Jp - Jm) / (2.0 * e);
    std::printf("central eps=%.1e  fd-gdot=%.6e (rel %.3e)\n", e, fd - gdot,
                std::abs(fd - gdot) / std::abs(gdot));
  }


  // dense GN Hessian on 8^3
  Grid g8(8, 8, 8);
  RegistrationProblem p8;
  p8.m_T = make_scalar_field(g8, [](double x, double y, double z) {
    double s1 = std::sin(x), s2 = std::sin(y), s3 = std::sin(z);
    return (s1 * s1 + s2 * s2 + s3 * s3) / 3.0;
  });
  VectorField vs8 = make_vector_field(g8, [&](double x, double y, double z) {
    return std::array<double, 3>{0.4 * std::sin(z) * std::cos(y) * std::sin(y),
                                 0.4 * std::sin(x) * std::cos(z) * std::sin(z),
                                 0.4 * std::sin(y) * std::cos(x) * std::sin(x)};
  });
  p8.m_R = solve_state(p8.m_T, vs8, n_t).final_frame();
  p8.reg = prob.reg;
  if (beta8 > 0) p8.reg.beta = beta8;
  p8.n_t = n_t;

  Rng rng8(103);
  VectorField v8 = oracles::random_band_limited_vector(g8, rng8, 1, amp);
  RegistrationState lin = evaluate_registration(p8, v8);

  const std::size_t n = g8.points();
  const std::size_t dim = 3 * n;
  std::vector<std::vector<double>> H(dim, std::vector<double>(dim));
  for (std::size_t col = 0; col < dim; ++col) {
    VectorField e(g8);
    e.c[col / n].v[col % n] = 1.0;
    VectorField he = reg_hessian_matvec_gn(p8, lin, e);
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
  std::printf("asymmetry=%.3e\n", std::sqrt(asym2 / norm2));

  Rng rngx(105);
  int nonpsd = 0;
  for (int t = 0; t < 20; ++t) {
    std::vector<double> x(dim);
    for (auto& xi : x) xi = rngx.normal();
    double q = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      double hx = 0.0;
      for (std::size_t j = 0; j < dim; ++j) hx += H[i][j] * x[j];
      q += x[i] * hx;
    }
    if (q <= 0) ++nonpsd;
  }
  std::printf("nonpsd count = %d\n", nonpsd);
  return 0;
}
// measure <delta, vt> directly by central differences (quadratic term cancels)
