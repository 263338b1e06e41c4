// Command-line front end: validate models, run the backward solvers, compare
// exact moments against Monte Carlo, and drive the horizon experiments.
//
// Exit codes: 0 pass, 1 I/O or parse error, 2 hypothesis failure,
// 3 solver error, 4 check failure.

#include <algorithm>
#include <clocale>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rslq/io.hpp"

namespace {

using namespace rslq;

constexpr int kExitPass = 0;
constexpr int kExitIO = 1;
constexpr int kExitHypothesis = 2;
constexpr int kExitSolver = 3;
constexpr int kExitCheck = 4;

// Thrown after printing a failing validation report.
struct HypothesisFailure : std::exception {
  const char* what() const noexcept override { return "hypotheses violated"; }
};

std::string output_dir(const std::string& fallback) {
  const char* env = std::getenv("RSLQ_OUTPUT_DIR");
  std::string dir = (env && *env) ? env : fallback;
  if (dir.empty()) dir = ".";
  std::filesystem::create_directories(dir);
  return dir;
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

void print_report(const ValidationReport& report) {
  for (const ValidationItem& item : report.items) {
    std::printf("%s  %s (margin %.3e)%s%s\n", item.pass ? "[ok]  " : "[FAIL]",
                item.name.c_str(), item.margin,
                item.message.empty() ? "" : ": ", item.message.c_str());
  }
  for (const std::string& w : report.warnings) {
    std::printf("[warn] %s\n", w.c_str());
  }
  std::printf("%s\n", report.pass ? "hypotheses hold" : "hypotheses violated");
}

// Loads and gate-checks a model; exits via exception on violation.
LQModel load_checked(const std::string& path, ValidationReport* out = nullptr) {
  LQModel model = load_model(path);
  ValidationReport report = validate_model(model);
  if (out) *out = report;
  if (!report.pass) {
    print_report(report);
    throw HypothesisFailure();
  }
  return model;
}

void print_family(const char* name, const MatFamily& F) {
  for (size_t i = 0; i < F.size(); ++i) {
    std::printf("%s(%zu) =", name, i + 1);
    if (F[i].rows() == 1 && F[i].cols() == 1) {
      std::printf(" %.6f\n", F[i](0, 0));
      continue;
    }
    std::printf("\n");
    for (int r = 0; r < F[i].rows(); ++r) {
      std::printf("   ");
      for (int c = 0; c < F[i].cols(); ++c) std::printf(" %12.6f", F[i](r, c));
      std::printf("\n");
    }
  }
}

int run_validate(const std::string& model_path) {
  LQModel model = load_model(model_path);
  ValidationReport report = validate_model(model);
  print_report(report);
  return report.pass ? kExitPass : kExitHypothesis;
}

int run_solve_dre(const std::string& model_path, double T, double step) {
  LQModel model = load_checked(model_path);
  DRESolution dre = solve_dre(model, T, step);
  const std::string dir = output_dir(".");
  write_dre_csv(dre, join_path(dir, "dre.csv"));
  std::printf("T = %g, step = %g, regularity_margin = %.6e, psd_margin = %.6e\n",
              T, step, dre.regularity_margin, dre.psd_margin);
  print_family("P_0", dre.P.front());
  std::printf("wrote %s\n", join_path(dir, "dre.csv").c_str());
  return kExitPass;
}

int run_solve_are(const std::string& model_path, const AREOptions& opts) {
  LQModel model = load_checked(model_path);
  ARESolution are = solve_are(model, opts);
  const std::string dir = output_dir(".");
  write_are_json(are, join_path(dir, "are.json"));
  std::printf(
      "horizon_used = %g, final_diff = %.3e, residual = %.3e, "
      "regularity_margin = %.6e, rho = %.6f\n",
      are.horizon, are.final_diff, are.residual, are.regularity_margin,
      are.rho);
  print_family("P_inf", are.P);
  print_family("Theta_inf", are.Theta);
  DissipativityCertificate cert = dissipativity_certificate(model, are.Theta);
  write_certificate_json(cert, join_path(dir, "certificate.json"));
  std::printf("delta_cert = %.6f, slack = %.3e\n", cert.delta, cert.slack);
  std::printf("wrote %s, %s\n", join_path(dir, "are.json").c_str(),
              join_path(dir, "certificate.json").c_str());
  return kExitPass;
}

int run_solve_offsets(const std::string& model_path, bool infinite, double T,
                      double tol, double step) {
  LQModel model = load_checked(model_path);
  const std::string dir = output_dir(".");
  if (infinite) {
    AREOptions are_opts;
    are_opts.step = std::min(are_opts.step, step);
    ARESolution are = solve_are(model, are_opts);
    InfiniteOffsetOptions opts;
    opts.T_max = T;
    opts.tol = tol;
    opts.step = step;
    OffsetSolution off = solve_offset_infinite(model, are, model.signals, opts);
    write_offsets_csv(off, join_path(dir, "offsets.csv"));
    std::printf("padded horizon = %g, tail_gap = %.3e, delta = %.6f\n",
                off.t_pad, off.tail_gap, off.delta);
  } else {
    DRESolution dre = solve_dre(model, T, step);
    OffsetSolution off = solve_offset_finite(model, dre, model.signals);
    write_offsets_csv(off, join_path(dir, "offsets.csv"));
    std::printf("T = %g, step = %g\n", T, step);
  }
  std::printf("wrote %s\n", join_path(dir, "offsets.csv").c_str());
  return kExitPass;
}

int run_simulate(const std::string& model_path, const std::string& law_name,
                 double T, std::int64_t paths, std::uint64_t seed, double dt,
                 std::vector<double> x0_in, int i0_file) {
  LQModel model = load_checked(model_path);
  Vector x0 = Vector::Ones(model.n);
  if (!x0_in.empty()) {
    if (static_cast<int>(x0_in.size()) != model.n) {
      throw IOError("--x0 needs " + std::to_string(model.n) + " entries");
    }
    for (int c = 0; c < model.n; ++c) x0(c) = x0_in[static_cast<size_t>(c)];
  }
  const int i0 = i0_file - 1;
  if (i0 < 0 || i0 >= model.m0()) throw IOError("--i0 out of range");

  FeedbackLaw law;
  if (law_name == "finite") {
    DRESolution dre = solve_dre(model, T, 0.5 * dt);
    OffsetSolution off = solve_offset_finite(model, dre, model.signals);
    law = finite_horizon_law(model, dre, off);
  } else if (law_name == "infinite") {
    AREOptions are_opts;
    are_opts.step = std::min(are_opts.step, 0.5 * dt);
    ARESolution are = solve_are(model, are_opts);
    InfiniteOffsetOptions opts;
    opts.T_max = T;
    opts.step = 0.5 * dt;
    OffsetSolution off = solve_offset_infinite(model, are, model.signals, opts);
    law = infinite_horizon_law(model, are, off);
  } else {
    throw IOError("--law must be 'finite' or 'infinite'");
  }

  const TimeGrid grid(0.0, T, dt);
  MomentTrajectory exact =
      closed_loop_moments(model, law, model.signals, x0, i0, grid);
  MCResult mc =
      monte_carlo_simulate(model, law, model.signals, x0, i0, grid, paths, seed);

  const std::string dir = output_dir(".");
  write_moments_csv(exact, join_path(dir, "moments.csv"));
  write_mc_csv(mc, join_path(dir, "mc.csv"));

  // Worst z-scores over nodes/regimes (informational).
  double worst_p = 0.0, worst_m1 = 0.0, worst_abs2 = 0.0;
  for (int k = 1; k < grid.num_nodes(); ++k) {
    const size_t sk = static_cast<size_t>(k);
    for (int i = 0; i < model.m0(); ++i) {
      const size_t si = static_cast<size_t>(i);
      if (mc.p_se[sk](i) > 0.0) {
        worst_p = std::max(worst_p, std::abs(mc.p_hat[sk](i) - exact.p[sk](i)) /
                                        mc.p_se[sk](i));
      }
      for (int c = 0; c < model.n; ++c) {
        if (mc.m1_se[sk][si](c) > 0.0) {
          worst_m1 = std::max(worst_m1,
                              std::abs(mc.m1_hat[sk][si](c) - exact.m1[sk][si](c)) /
                                  mc.m1_se[sk][si](c));
        }
      }
    }
    if (mc.abs2_se[sk] > 0.0) {
      worst_abs2 = std::max(worst_abs2, std::abs(mc.abs2_hat[sk] - exact.abs2(k)) /
                                            mc.abs2_se[sk]);
    }
  }
  std::printf("paths = %lld, seed = %llu, dt = %g\n",
              static_cast<long long>(paths),
              static_cast<unsigned long long>(seed), dt);
  std::printf("worst |z|: p = %.3f, m1 = %.3f, E|X|^2 = %.3f\n", worst_p,
              worst_m1, worst_abs2);
  std::printf("wrote %s, %s\n", join_path(dir, "moments.csv").c_str(),
              join_path(dir, "mc.csv").c_str());
  return kExitPass;
}

int run_turnpike(const std::string& config_path) {
  ExperimentConfig cfg = load_config(config_path);
  LQModel model = load_checked(cfg.model_path);
  if (static_cast<int>(cfg.x.size()) != model.n ||
      static_cast<int>(cfg.x_inf.size()) != model.n) {
    throw IOError(config_path + ": x / x_inf need " + std::to_string(model.n) +
                  " entries");
  }
  if (cfg.i0 >= model.m0()) throw IOError(config_path + ": i0 out of range");

  TurnpikeReport report =
      run_turnpike_experiment(model, model.signals, cfg.x, cfg.x_inf, cfg.i0,
                              cfg.T_list, cfg.grid_step);

  const std::string dir = output_dir(cfg.output_dir);
  write_error_table_csv(report, join_path(dir, "error_table.csv"));
  write_midpoint_csv(report, join_path(dir, "midpoint_series.csv"));

  std::string summary = turnpike_summary(report);

  bool pass = !report.error && report.midpoint_monotone &&
              report.fitted.has_value() && report.fitted->rate > 0.0 &&
              report.min_bound_pass_rate >= 0.99;

  if (cfg.experiment_case == "integrable") {
    CaseVerdict v = check_integrable_case(report, model.signals);
    summary += "integrable check: " + std::string(v.pass ? "pass" : "FAIL") +
               " (" + v.detail + ")\n";
    pass = pass && v.pass;
  } else if (cfg.experiment_case == "local_integrable") {
    const std::vector<double>& ergodic_T =
        cfg.ergodic_T_list.empty() ? cfg.T_list : cfg.ergodic_T_list;
    CaseVerdict v = check_ergodic_case(model, model.signals, cfg.x, cfg.i0,
                                       ergodic_T, cfg.grid_step);
    summary += "ergodic check: " + std::string(v.pass ? "pass" : "FAIL") +
               " (limit " + format_g17(v.limit) + "; " + v.detail + ")\n";
    pass = pass && v.pass;
  }

  if (cfg.mc_paths > 0) {
    // Cross-check the stationary loop against simulation on the first window.
    AREOptions are_opts;
    are_opts.step = std::min(are_opts.step, 0.5 * cfg.mc_dt);
    ARESolution are = solve_are(model, are_opts);
    InfiniteOffsetOptions opts;
    opts.T_max = cfg.T_list.front();
    opts.step = 0.5 * cfg.mc_dt;
    OffsetSolution off = solve_offset_infinite(model, are, model.signals, opts);
    FeedbackLaw law = infinite_horizon_law(model, are, off);
    const TimeGrid grid(0.0, cfg.T_list.front(), cfg.mc_dt);
    MCResult mc = monte_carlo_simulate(model, law, model.signals, cfg.x, cfg.i0,
                                       grid, cfg.mc_paths, cfg.seed);
    write_mc_csv(mc, join_path(dir, "mc.csv"));
  }

  summary += std::string("verdict: ") + (pass ? "pass" : "FAIL") + "\n";
  std::fputs(summary.c_str(), stdout);
  std::ofstream(join_path(dir, "summary.txt"), std::ios::binary) << summary;

  if (report.error) {
    std::fprintf(stderr, "%s\n", report.error->c_str());
    return kExitSolver;
  }
  return pass ? kExitPass : kExitCheck;
}

}  // namespace

int main(int argc, char** argv) {
  std::setlocale(LC_ALL, "C");
  CLI::App app{"Linear-quadratic control with Markovian regime switching"};
  app.require_subcommand(1);

  std::string model_path;
  auto* validate = app.add_subcommand("validate", "check model hypotheses");
  validate->add_option("model", model_path, "model file")->required();

  auto* solve = app.add_subcommand("solve", "run a backward solver");
  std::string solve_model;
  solve->add_option("model", solve_model, "model file")->required();
  solve->require_subcommand(1);

  auto* dre_cmd = solve->add_subcommand("dre", "finite-horizon Riccati flow");
  double dre_T = 2.0, dre_step = 1e-3;
  dre_cmd->add_option("--T", dre_T, "horizon");
  dre_cmd->add_option("--step", dre_step, "node spacing");

  auto* are_cmd = solve->add_subcommand("are", "stationary Riccati solution");
  AREOptions are_opts;
  are_cmd->add_option("--tol", are_opts.tol, "convergence tolerance");
  are_cmd->add_option("--t-step", are_opts.t_step, "horizon increment");
  are_cmd->add_option("--t-max", are_opts.t_max, "horizon cap");

  auto* off_cmd = solve->add_subcommand("offsets", "offset processes");
  bool off_infinite = false;
  double off_T = 10.0, off_tol = 1e-10, off_step = 1e-3;
  off_cmd->add_flag("--infinite", off_infinite, "stationary-tail solve");
  off_cmd->add_option("--T", off_T, "horizon (or coverage for --infinite)");
  off_cmd->add_option("--tol", off_tol, "tail tolerance");
  off_cmd->add_option("--step", off_step, "node spacing");

  auto* sim = app.add_subcommand("simulate", "Monte Carlo vs exact moments");
  std::string sim_model, sim_law = "finite";
  double sim_T = 10.0, sim_dt = 1e-3;
  std::int64_t sim_paths = 10000;
  std::uint64_t sim_seed = 1;
  std::vector<double> sim_x0;
  int sim_i0 = 1;
  sim->add_option("model", sim_model, "model file")->required();
  sim->add_option("--law", sim_law, "finite | infinite");
  sim->add_option("--T", sim_T, "window length");
  sim->add_option("--paths", sim_paths, "number of paths");
  sim->add_option("--seed", sim_seed, "RNG seed");
  sim->add_option("--dt", sim_dt, "Euler step");
  sim->add_option("--x0", sim_x0, "initial state (default all ones)");
  sim->add_option("--i0", sim_i0, "initial regime (1-based)");

  auto* tp = app.add_subcommand("turnpike", "horizon experiment from a config");
  std::string config_path;
  tp->add_option("config", config_path, "experiment config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitPass : kExitIO;
  }

  try {
    if (*validate) return run_validate(model_path);
    if (*solve) {
      if (*dre_cmd) return run_solve_dre(solve_model, dre_T, dre_step);
      if (*are_cmd) return run_solve_are(solve_model, are_opts);
      if (*off_cmd) {
        return run_solve_offsets(solve_model, off_infinite, off_T, off_tol,
                                 off_step);
      }
    }
    if (*sim) {
      return run_simulate(sim_model, sim_law, sim_T, sim_paths, sim_seed,
                          sim_dt, sim_x0, sim_i0);
    }
    if (*tp) return run_turnpike(config_path);
  } catch (const IOError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIO;
  } catch (const ModelError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIO;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIO;
  } catch (const SolverError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitSolver;
  } catch (const HypothesisFailure&) {
    return kExitHypothesis;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitSolver;
  }
  return kExitIO;
}
