#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "rslq/model.hpp"
#include "rslq/moments.hpp"
#include "rslq/offsets.hpp"
#include "rslq/riccati.hpp"
#include "rslq/stability.hpp"
#include "rslq/turnpike.hpp"

namespace rslq {

// File-level failures: missing files, malformed documents, bad shapes.
struct IOError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Model documents are JSON trees with keys n, m, m0, lambda, regimes
// (array of {A,B,C,D,Q,S,R}), and an optional signals block
// {breakpoints, b, sigma, q, r, tail}. Matrices may be nested rows or flat
// row-major arrays. Signal tables are indexed [regime][interval][component]
// with one interval per consecutive breakpoint pair; the optional tail gives
// the constant value past the last breakpoint. Regime indices in companion
// configs are 1-based.
LQModel load_model(const std::string& path);

struct ExperimentConfig {
  std::string model_path;  // resolved against the config file's directory
  std::string experiment_case;  // homogeneous | integrable | local_integrable
  std::vector<double> T_list;
  double grid_step = 0.01;
  Vector x, x_inf;
  int i0 = 0;  // zero-based internally; 1-based in the file
  std::uint64_t seed = 0;
  std::int64_t mc_paths = 0;  // 0 disables the Monte Carlo cross-check
  double mc_dt = 1e-3;
  std::vector<double> ergodic_T_list;  // defaults to T_list when empty
  std::string output_dir = ".";
};

ExperimentConfig load_config(const std::string& path);

// Shortest exact decimal form of a double (17 significant digits).
std::string format_g17(double v);

// CSV writers. Every file gets a header row; values are round-trip exact.
void write_dre_csv(const DRESolution& dre, const std::string& path);
void write_offsets_csv(const OffsetSolution& off, const std::string& path);
void write_moments_csv(const MomentTrajectory& traj, const std::string& path);
void write_mc_csv(const MCResult& mc, const std::string& path);
void write_error_table_csv(const TurnpikeReport& report,
                           const std::string& path);
void write_midpoint_csv(const TurnpikeReport& report, const std::string& path);

// Tree-format writers for the stationary objects.
void write_are_json(const ARESolution& are, const std::string& path);
void write_certificate_json(const DissipativityCertificate& cert,
                            const std::string& path);

// Plain-text table: per horizon T, midpoint error, fitted constants, and
// envelope pass rate, plus the certificate rate.
std::string turnpike_summary(const TurnpikeReport& report);

}  // namespace rslq
