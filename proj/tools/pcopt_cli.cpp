// Batch front end: fixture generation, diffeomorphic registration, tumor
// forward simulation and inversion, det-gradient maps, and the
// noise/threshold study. Exit codes: 0 success, 1 solver failure,
// 2 usage or I/O error. Diagnostics go to stderr, results to stdout.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "pcopt/pcopt.hpp"

namespace fs = std::filesystem;
using namespace pcopt;

namespace {

Grid parse_grid(const std::string& spec) {
  std::vector<int> dims;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, 'x')) dims.push_back(std::stoi(tok));
  if (dims.size() == 2) return Grid(dims[0], dims[1]);
  if (dims.size() == 3) return Grid(dims[0], dims[1], dims[2]);
  throw std::invalid_argument("grid must be NxN or NxNxN, got '" + spec + "'");
}

std::vector<double> parse_list(const std::string& spec) {
  std::vector<double> out;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
  return out;
}

RegModel parse_model(const std::string& name) {
  if (name == "h1") return RegModel::H1;
  if (name == "h2") return RegModel::H2;
  if (name == "h1div") return RegModel::H1Div;
  throw std::invalid_argument("unknown regularization model '" + name + "'");
}

void write_coefficients(const std::string& path, const std::vector<double>& p) {
  std::string text;
  char line[64];
  for (double x : p) {
    std::snprintf(line, sizeof(line), "%.17g\n", x);
    text += line;
  }
  write_text_atomic(path, text);
}

std::vector<double> read_coefficients(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(IoError::Kind::missing_file, "missing coefficient file: " + path);
  std::vector<double> p;
  double x;
  while (in >> x) p.push_back(x);
  if (p.empty()) throw IoError(IoError::Kind::malformed, "no coefficients in " + path);
  return p;
}

void write_basis(const std::string& path, const GaussianBasis& basis) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "sigma %.17g\n", std::sqrt(basis.sigma[0][0]));
  out << buf;
  for (const auto& c : basis.centers) {
    if (basis.d == 2)
      std::snprintf(buf, sizeof(buf), "center %.17g %.17g\n", c[0], c[1]);
    else
      std::snprintf(buf, sizeof(buf), "center %.17g %.17g %.17g\n", c[0], c[1], c[2]);
    out << buf;
  }
  write_text_atomic(path, out.str());
}

GaussianBasis read_basis(const std::string& path, int d) {
  std::ifstream in(path);
  if (!in) throw IoError(IoError::Kind::missing_file, "missing basis file: " + path);
  double sigma = -1.0;
  std::vector<std::array<double, 3>> centers;
  std::string key;
  while (in >> key) {
    if (key == "sigma") {
      in >> sigma;
    } else if (key == "center") {
      std::array<double, 3> c{0, 0, 0};
      in >> c[0] >> c[1];
      if (d == 3) in >> c[2];
      centers.push_back(c);
    } else {
      throw IoError(IoError::Kind::malformed, "unknown basis key '" + key + "' in " + path);
    }
  }
  if (sigma <= 0.0 || centers.empty())
    throw IoError(IoError::Kind::malformed, "basis file needs sigma and centers: " + path);
  return GaussianBasis::isotropic(d, std::move(centers), sigma);
}

BrainMask mask_from_field(const ScalarField& f, double penalty_k, double penalty_rho) {
  BrainMask mask(f.grid);
  for (std::size_t i = 0; i < f.size(); ++i) mask.inside[i] = f.v[i] > 0.5;
  mask.penalty_k = penalty_k;
  mask.penalty_rho = penalty_rho;
  return mask;
}

ScalarField mask_to_field(const BrainMask& mask) {
  ScalarField f(mask.grid);
  for (std::size_t i = 0; i < f.size(); ++i) f.v[i] = mask.inside[i] ? 1.0 : 0.0;
  return f;
}

void export_field(const std::string& dir, const std::string& name, const ScalarField& f) {
  write_field(dir + "/" + name + ".fld", f);
  write_pgm_slices(dir + "/" + name, f);
}

/// Expand `--config FILE` into ordinary option tokens. The run config is a
/// flat key=value file whose keys mirror the subcommand's long flags;
/// unknown keys become unknown options and are rejected by the parser.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string value;
    if (args[i] == "--config" && i + 1 < args.size()) {
      value = args[i + 1];
      ++i;
    } else if (args[i].rfind("--config=", 0) == 0) {
      value = args[i].substr(9);
    } else {
      out.push_back(args[i]);
      continue;
    }
    std::ifstream in(value);
    if (!in) throw IoError(IoError::Kind::missing_file, "missing config file: " + value);
    std::string line;
    while (std::getline(in, line)) {
      const auto first = line.find_first_not_of(" \t");
      if (first == std::string::npos || line[first] == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw IoError(IoError::Kind::malformed, "config line without '=': " + line);
      auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t");
        const auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
      };
      std::string key = trim(line.substr(0, eq));
      std::string val = trim(line.substr(eq + 1));
      if (key.empty()) throw IoError(IoError::Kind::malformed, "config line without key: " + line);
      out.push_back("--" + key + "=" + val);
    }
  }
  return out;
}

struct SolverFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_converged(SolveStatus status) {
  switch (status) {
    case SolveStatus::converged_rel:
    case SolveStatus::converged_abs:
      return;
    default:
      throw SolverFailure(std::string("solver stopped with status ") + to_string(status));
  }
}

// ---- subcommand payloads ---------------------------------------------------

struct RegisterArgs {
  std::string template_path, reference_path, out_dir;
  std::string model = "h2";
  double beta = 1e-2, gamma = 1.0, div_penalty = 0.0;
  int kappa = 1;
  bool incompressible = false;
  int n_t = 4;
  double rel_tol = 5e-2, abs_tol = 1e-8;
  int max_newton = 50, max_krylov = 100;
  bool continuation = false;
  double smooth_voxels = 0.0;
};

int run_register(const RegisterArgs& a) {
  RegistrationProblem prob;
  prob.m_T = read_scalar_field(a.template_path);
  prob.m_R = read_scalar_field(a.reference_path);
  if (a.smooth_voxels > 0.0) {
    prob.m_T = preprocess_image(prob.m_T, a.smooth_voxels);
    prob.m_R = preprocess_image(prob.m_R, a.smooth_voxels);
  }
  prob.reg.model = parse_model(a.model);
  prob.reg.beta = a.beta;
  prob.reg.gamma = a.gamma;
  prob.reg.kappa = a.kappa;
  prob.reg.div_penalty = a.div_penalty;
  prob.incompressible = a.incompressible;
  prob.n_t = a.n_t;

  RegistrationOptions opts;
  opts.continuation = a.continuation;
  opts.solver.rel_grad_tol = a.rel_tol;
  opts.solver.abs_grad_tol = a.abs_tol;
  opts.solver.max_newton = a.max_newton;
  opts.solver.max_krylov = a.max_krylov;

  fs::create_directories(a.out_dir);
  RegistrationResult r = run_registration(prob, opts);

  write_field(a.out_dir + "/velocity.fld", r.state.v);
  export_field(a.out_dir, "deformed", r.state.state.final_frame());
  export_field(a.out_dir, "template", prob.m_T);
  export_field(a.out_dir, "reference", prob.m_R);
  write_text_atomic(a.out_dir + "/log.csv", r.log.to_csv());
  write_text_atomic(a.out_dir + "/pcg.csv", r.log.pcg_to_csv());

  DetGradReport det = detgrad_report(r.state.v, prob.n_t);
  export_field(a.out_dir, "detgrad", det.psi);

  std::printf("status=%s iterations=%d rel_mismatch=%.6e mismatch=%.6e\n",
              to_string(r.log.status), r.log.accepted_iterations(), r.rel_mismatch,
              r.state.mismatch);
  std::printf("pde_solves=%ld hessian_matvecs=%ld\n", r.counters.pde_solves(),
              r.counters.hessian_matvecs);
  std::printf("detgrad min=%.6e max=%.6e diffeomorphic=%s\n", det.min, det.max,
              det.diffeomorphic ? "yes" : "no");
  require_converged(r.log.status);
  return 0;
}

struct DetgradArgs {
  std::string velocity_path, out;
  int n_t = 4;
};

int run_detgrad(const DetgradArgs& a) {
  VectorField v = read_vector_field(a.velocity_path);
  DetGradReport rep = detgrad_report(v, a.n_t);
  write_field(a.out, rep.psi);
  fs::path base(a.out);
  write_pgm_slices((base.parent_path() / base.stem()).string(), rep.psi);
  std::printf("detgrad min=%.6e max=%.6e diffeomorphic=%s\n", rep.min, rep.max,
              rep.diffeomorphic ? "yes" : "no");
  return 0;
}

struct FixtureArgs {
  std::string name, grid = "64x64x64", out_dir;
  std::uint64_t seed = 0;
  int n_t = 4;
};

int run_fixture(const FixtureArgs& a) {
  Grid g = parse_grid(a.grid);
  Fixture fx = make_fixture(a.name, g, a.seed);
  fs::create_directories(a.out_dir);

  if (fx.tumor) {
    const StudyInputs& in = *fx.tumor;
    export_field(a.out_dir, "pi_w", in.pi_W);
    export_field(a.out_dir, "pi_g", in.pi_G);
    export_field(a.out_dir, "mask", mask_to_field(in.mask));
    export_field(a.out_dir, "data_t0", in.data_t0);
    export_field(a.out_dir, "data_t1", in.data_t1);
    export_field(a.out_dir, "data_t2", in.data_t2);
    write_coefficients(a.out_dir + "/p_true.csv", in.p_true);
    write_basis(a.out_dir + "/basis.txt", in.basis);
    char cfg[256];
    std::snprintf(cfg, sizeof(cfg), "kw=%.17g\nkg=%.17g\nrho=%.17g\nnt=%d\n", in.k_W, in.k_G,
                  in.rho, in.n_t);
    write_text_atomic(a.out_dir + "/fixture.cfg", cfg);
  } else {
    export_field(a.out_dir, "m_t", fx.m_T);
    export_field(a.out_dir, "m_r", fx.m_R);
    if (fx.v_true) write_field(a.out_dir + "/v_true.fld", *fx.v_true);
  }
  std::printf("fixture %s written to %s\n", a.name.c_str(), a.out_dir.c_str());
  return 0;
}

struct TumorForwardArgs {
  std::string pi_w_path, pi_g_path, p_path, basis_path, mask_path, out_dir;
  double k_w = 0.05, k_g = 0.01, rho = 3.0;
  double penalty_rho = 0.0;
  int n_t = 8;
};

int run_tumor_forward(const TumorForwardArgs& a) {
  ScalarField pi_W = read_scalar_field(a.pi_w_path);
  ScalarField pi_G = read_scalar_field(a.pi_g_path);
  BrainMask mask = a.mask_path.empty()
                       ? BrainMask(pi_W.grid)
                       : mask_from_field(read_scalar_field(a.mask_path),
                                         1e-3 * std::min(a.k_w, a.k_g), a.penalty_rho);
  mask.penalty_k = 1e-3 * std::min(a.k_w, a.k_g);
  GaussianBasis basis = read_basis(a.basis_path, pi_W.grid.d);
  std::vector<double> p = read_coefficients(a.p_path);

  BasisTable table = make_basis_table(basis, pi_W.grid);
  DiffusionField k = assemble_diffusion(pi_W, pi_G, a.k_w, a.k_g, mask);
  ScalarField rho_field = make_rho_field(a.rho, mask);
  ScalarField m0 = apply_basis(table, p);
  Trajectory traj = rd_forward(m0, k, rho_field, a.n_t);

  fs::create_directories(a.out_dir);
  export_field(a.out_dir, "m_t0", m0);
  export_field(a.out_dir, "m_t1", traj.final_frame());
  std::printf("forward solve done: m(1) in [%.6e, %.6e]\n", field_min(traj.final_frame()),
              field_max(traj.final_frame()));
  return 0;
}

struct TumorInvertArgs {
  std::string pi_w_path, pi_g_path, data_path, data_t0_path, basis_path, mask_path, out_dir;
  double k_w = 0.05, k_g = 0.01, rho = 3.0;
  double threshold = 0.0, beta = 1e-6;
  int n_t = 8;
  double rel_tol = 1e-3;
  int max_newton = 30, max_krylov = 50;
  bool invert_scalars = false;
  std::string lcurve;
};

int run_tumor_invert(const TumorInvertArgs& a) {
  TumorProblem prob;
  prob.pi_W = read_scalar_field(a.pi_w_path);
  prob.pi_G = read_scalar_field(a.pi_g_path);
  prob.pi_T = read_scalar_field(a.data_path);
  prob.mask = a.mask_path.empty()
                  ? BrainMask(prob.pi_W.grid)
                  : mask_from_field(read_scalar_field(a.mask_path),
                                    1e-3 * std::min(a.k_w, a.k_g), 0.0);
  prob.mask.penalty_k = 1e-3 * std::min(a.k_w, a.k_g);
  prob.basis = read_basis(a.basis_path, prob.pi_W.grid.d);
  prob.k_W = a.k_w;
  prob.k_G = a.k_g;
  prob.rho = a.rho;
  prob.beta = a.beta;
  prob.obs_threshold = a.threshold;
  prob.n_t = a.n_t;
  if (!a.data_t0_path.empty()) prob.t0_data = read_scalar_field(a.data_t0_path);
  prob.prepare();
  if (prob.Q.empty)
    std::fprintf(stderr, "warning: observation mask is empty at threshold %g\n", a.threshold);

  TumorInversionOptions opts;
  opts.solver.rel_grad_tol = a.rel_tol;
  opts.solver.max_newton = a.max_newton;
  opts.solver.max_krylov = a.max_krylov;
  opts.invert_diffusivity = a.invert_scalars;

  fs::create_directories(a.out_dir);

  if (!a.lcurve.empty()) {
    std::vector<double> betas = parse_list(a.lcurve);
    auto pts = beta_sweep(prob, betas, opts);
    std::string csv = "beta,residual_norm,p_norm\n";
    char line[160];
    for (const auto& pt : pts) {
      std::snprintf(line, sizeof(line), "%.12e,%.12e,%.12e\n", pt.beta, pt.residual_norm,
                    pt.p_norm);
      csv += line;
    }
    write_text_atomic(a.out_dir + "/lcurve.csv", csv);
  }

  TumorInversionResult r = run_tumor_inversion(prob, opts);
  write_coefficients(a.out_dir + "/p_rec.csv", r.p);
  ScalarField m0 = apply_basis(*prob.table, r.p);
  DiffusionField k = assemble_diffusion(prob.pi_W, prob.pi_G, r.k_W, r.k_G, prob.mask);
  ScalarField rho_field = make_rho_field(r.rho, prob.mask);
  Trajectory traj = rd_forward(m0, k, rho_field, prob.n_t, prob.cn);
  export_field(a.out_dir, "m0_rec", m0);
  export_field(a.out_dir, "m1_rec", traj.final_frame());
  write_text_atomic(a.out_dir + "/log.csv", r.log.to_csv());
  write_text_atomic(a.out_dir + "/pcg.csv", r.log.pcg_to_csv());

  std::printf("status=%s iterations=%d mismatch=%.6e\n", to_string(r.log.status),
              r.log.accepted_iterations(), r.mismatch);
  if (a.invert_scalars)
    std::printf("recovered k_w=%.6e k_g=%.6e rho=%.6e\n", r.k_W, r.k_G, r.rho);
  require_converged(r.log.status);
  return 0;
}

struct StudyArgs {
  std::string grid = "64x64", out = "study.csv";
  std::uint64_t seed = 42;
  std::string thresholds = "0.1,0.2,0.3,0.4";
  std::string noises = "0.01,0.05,0.10";
  int jobs = 1;
};

int run_study(const StudyArgs& a) {
  Grid g = parse_grid(a.grid);
  if (g.d != 2) throw std::invalid_argument("the study fixture is two-dimensional");
  Fixture fx = make_multifocal_tumor(g, a.seed);

  TumorInversionOptions opts;
  opts.solver.rel_grad_tol = 1e-3;
  opts.solver.max_newton = 12;
  opts.solver.max_krylov = 30;
  opts.invert_diffusivity = true;
  opts.scalar_rounds = 2;
  opts.scalar_max_steps = 3;

  StudyTable table = noise_threshold_study(*fx.tumor, parse_list(a.noises),
                                           parse_list(a.thresholds), a.seed, opts, a.jobs);
  write_text_atomic(a.out, table.to_csv());
  std::printf("study written to %s (%zu rows)\n", a.out.c_str(), table.rows.size());
  return 0;
}

struct InfoArgs {
  std::string field_path;
};

int run_info(const InfoArgs& a) {
  FieldFileInfo info = read_field_header(a.field_path);
  std::printf("dims:");
  for (int c = 0; c < info.grid.d; ++c) std::printf(" %d", info.grid.n[c]);
  std::printf("\ncomponents: %d\n", info.components);
  AnyField f = read_field(a.field_path);
  if (std::holds_alternative<ScalarField>(f)) {
    const auto& s = std::get<ScalarField>(f);
    double mean = 0.0;
    for (double x : s.v) mean += x;
    mean /= s.size();
    std::printf("min=%.6e max=%.6e mean=%.6e finite=%s\n", field_min(s), field_max(s), mean,
                all_finite(s) ? "yes" : "no");
  } else {
    const auto& v = std::get<VectorField>(f);
    std::printf("max_component_norm=%.6e finite=%s\n", norm_inf(v),
                all_finite(v) ? "yes" : "no");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PDE-constrained inverse solvers on periodic grids"};
  app.require_subcommand(1);

  RegisterArgs reg;
  auto* reg_cmd = app.add_subcommand("register", "diffeomorphic image registration");
  reg_cmd->add_option("--template", reg.template_path, "template image (.fld)")->required();
  reg_cmd->add_option("--reference", reg.reference_path, "reference image (.fld)")->required();
  reg_cmd->add_option("--out-dir", reg.out_dir, "output directory")->required();
  reg_cmd->add_option("--model", reg.model, "regularization model: h1, h2, h1div");
  reg_cmd->add_option("--beta", reg.beta, "regularization weight");
  reg_cmd->add_option("--gamma", reg.gamma, "operator shift");
  reg_cmd->add_option("--kappa", reg.kappa, "operator order (h2)");
  reg_cmd->add_option("--div-penalty", reg.div_penalty, "divergence penalty weight (h1div)");
  reg_cmd->add_flag("--incompressible", reg.incompressible, "project onto divergence-free fields");
  reg_cmd->add_option("--nt", reg.n_t, "number of transport time steps");
  reg_cmd->add_option("--rel-tol", reg.rel_tol, "relative gradient tolerance");
  reg_cmd->add_option("--abs-tol", reg.abs_tol, "absolute gradient tolerance");
  reg_cmd->add_option("--max-newton", reg.max_newton, "Newton iteration cap");
  reg_cmd->add_option("--max-krylov", reg.max_krylov, "Krylov iteration cap");
  reg_cmd->add_flag("--continuation", reg.continuation, "geometric beta continuation from 1");
  reg_cmd->add_option("--smooth", reg.smooth_voxels, "presmoothing stddev in voxels (0 = off)");

  DetgradArgs det;
  auto* det_cmd = app.add_subcommand("detgrad", "determinant of the deformation gradient");
  det_cmd->add_option("--velocity", det.velocity_path, "velocity field (.fld)")->required();
  det_cmd->add_option("--out", det.out, "output field path")->required();
  det_cmd->add_option("--nt", det.n_t, "number of transport time steps");

  FixtureArgs fxa;
  auto* fx_cmd = app.add_subcommand("fixture", "generate benchmark inputs");
  fx_cmd->add_option("--name", fxa.name,
                     "sphere_bowl | smooth_synthetic | multifocal_tumor | checker")
      ->required();
  fx_cmd->add_option("--grid", fxa.grid, "grid extents, e.g. 64x64x64 or 64x64");
  fx_cmd->add_option("--out-dir", fxa.out_dir, "output directory")->required();
  fx_cmd->add_option("--seed", fxa.seed, "random seed");
  fx_cmd->add_option("--nt", fxa.n_t, "time steps for generated references");

  TumorForwardArgs tf;
  auto* tf_cmd = app.add_subcommand("tumor-forward", "reaction-diffusion forward solve");
  tf_cmd->add_option("--pi-w", tf.pi_w_path, "white matter map (.fld)")->required();
  tf_cmd->add_option("--pi-g", tf.pi_g_path, "gray matter map (.fld)")->required();
  tf_cmd->add_option("--p", tf.p_path, "coefficient file")->required();
  tf_cmd->add_option("--basis", tf.basis_path, "basis file")->required();
  tf_cmd->add_option("--mask", tf.mask_path, "domain mask field (optional)");
  tf_cmd->add_option("--out-dir", tf.out_dir, "output directory")->required();
  tf_cmd->add_option("--kw", tf.k_w, "white matter diffusivity");
  tf_cmd->add_option("--kg", tf.k_g, "gray matter diffusivity");
  tf_cmd->add_option("--rho", tf.rho, "growth rate");
  tf_cmd->add_option("--nt", tf.n_t, "time steps");

  TumorInvertArgs ti;
  auto* ti_cmd = app.add_subcommand("tumor-invert", "invert for the tumor initial condition");
  ti_cmd->add_option("--pi-w", ti.pi_w_path, "white matter map (.fld)")->required();
  ti_cmd->add_option("--pi-g", ti.pi_g_path, "gray matter map (.fld)")->required();
  ti_cmd->add_option("--data", ti.data_path, "observed data at t = 1 (.fld)")->required();
  ti_cmd->add_option("--data-t0", ti.data_t0_path, "observed data at t = 0 (optional)");
  ti_cmd->add_option("--basis", ti.basis_path, "basis file")->required();
  ti_cmd->add_option("--mask", ti.mask_path, "domain mask field (optional)");
  ti_cmd->add_option("--out-dir", ti.out_dir, "output directory")->required();
  ti_cmd->add_option("--kw", ti.k_w, "white matter diffusivity");
  ti_cmd->add_option("--kg", ti.k_g, "gray matter diffusivity");
  ti_cmd->add_option("--rho", ti.rho, "growth rate");
  ti_cmd->add_option("--threshold", ti.threshold, "observation threshold in [0,1)");
  ti_cmd->add_option("--beta", ti.beta, "coefficient regularization weight");
  ti_cmd->add_option("--nt", ti.n_t, "time steps");
  ti_cmd->add_option("--rel-tol", ti.rel_tol, "relative gradient tolerance");
  ti_cmd->add_option("--max-newton", ti.max_newton, "Newton iteration cap");
  ti_cmd->add_option("--max-krylov", ti.max_krylov, "Krylov iteration cap");
  ti_cmd->add_flag("--invert-scalars", ti.invert_scalars, "also recover k_w, k_g");
  ti_cmd->add_option("--lcurve", ti.lcurve, "comma-separated betas for an L-curve sweep");

  StudyArgs st;
  auto* st_cmd = app.add_subcommand("study", "noise/threshold reconstruction study");
  st_cmd->add_option("--grid", st.grid, "2D grid extents, e.g. 64x64");
  st_cmd->add_option("--seed", st.seed, "noise seed");
  st_cmd->add_option("--thresholds", st.thresholds, "comma-separated thresholds");
  st_cmd->add_option("--noises", st.noises, "comma-separated noise levels");
  st_cmd->add_option("--out", st.out, "output CSV path");
  st_cmd->add_option("--jobs", st.jobs, "worker count for study cells");

  InfoArgs inf;
  auto* info_cmd = app.add_subcommand("info", "print field file metadata and statistics");
  info_cmd->add_option("--field", inf.field_path, "field file")->required();

  app.footer("Every subcommand also accepts --config FILE, a flat key=value file whose\n"
             "keys mirror the subcommand's long option names.");

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config(args);
    std::reverse(args.begin(), args.end());  // CLI11 consumes a reversed vector
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return 2;
  }

  try {
    if (reg_cmd->parsed()) return run_register(reg);
    if (det_cmd->parsed()) return run_detgrad(det);
    if (fx_cmd->parsed()) return run_fixture(fxa);
    if (tf_cmd->parsed()) return run_tumor_forward(tf);
    if (ti_cmd->parsed()) return run_tumor_invert(ti);
    if (st_cmd->parsed()) return run_study(st);
    if (info_cmd->parsed()) return run_info(inf);
  } catch (const SolverFailure& e) {
    std::fprintf(stderr, "solver failure: %s\n", e.what());
    return 1;
  } catch (const SolverError& e) {
    std::fprintf(stderr, "solver failure: %s\n", e.what());
    return 1;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
