#include "rslq/io.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace rslq {

namespace {

using nlohmann::json;

json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IOError("cannot open " + path);
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw IOError(path + ": " + e.what());
  }
}

double as_number(const json& j, const std::string& what) {
  if (!j.is_number()) throw IOError(what + " must be a number");
  return j.get<double>();
}

Matrix parse_matrix(const json& j, int rows, int cols,
                    const std::string& what) {
  Matrix M(rows, cols);
  if (!j.is_array()) throw IOError(what + " must be an array");
  if (static_cast<int>(j.size()) == rows && rows > 0 && j.at(0).is_array()) {
    for (int r = 0; r < rows; ++r) {
      const json& row = j.at(static_cast<size_t>(r));
      if (static_cast<int>(row.size()) != cols) {
        throw IOError(what + " row has wrong length");
      }
      for (int c = 0; c < cols; ++c) {
        M(r, c) = as_number(row.at(static_cast<size_t>(c)), what);
      }
    }
    return M;
  }
  if (static_cast<int>(j.size()) == rows * cols) {
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        M(r, c) = as_number(j.at(static_cast<size_t>(r * cols + c)), what);
      }
    }
    return M;
  }
  throw IOError(what + " has wrong shape");
}

Vector parse_vector(const json& j, int dim, const std::string& what) {
  if (!j.is_array() || static_cast<int>(j.size()) != dim) {
    throw IOError(what + " must be an array of length " + std::to_string(dim));
  }
  Vector v(dim);
  for (int k = 0; k < dim; ++k) {
    v(k) = as_number(j.at(static_cast<size_t>(k)), what);
  }
  return v;
}

// Signal tables: [regime][interval][component].
std::vector<std::vector<Vector>> parse_signal_table(const json& j, int m0,
                                                    size_t intervals, int dim,
                                                    const std::string& what) {
  if (!j.is_array() || static_cast<int>(j.size()) != m0) {
    throw IOError(what + " must have one entry per regime");
  }
  std::vector<std::vector<Vector>> out(static_cast<size_t>(m0));
  for (int i = 0; i < m0; ++i) {
    const json& per = j.at(static_cast<size_t>(i));
    if (!per.is_array() || per.size() != intervals) {
      throw IOError(what + " must have one value per breakpoint interval");
    }
    for (size_t k = 0; k < intervals; ++k) {
      out[static_cast<size_t>(i)].push_back(
          parse_vector(per.at(k), dim, what));
    }
  }
  return out;
}

VecFamily parse_tail(const json& j, int m0, int dim, const std::string& what) {
  if (!j.is_array() || static_cast<int>(j.size()) != m0) {
    throw IOError(what + " must have one entry per regime");
  }
  VecFamily out;
  for (int i = 0; i < m0; ++i) {
    out.push_back(parse_vector(j.at(static_cast<size_t>(i)), dim, what));
  }
  return out;
}

const json& require_key(const json& j, const char* key,
                        const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw IOError(where + ": missing key '" + std::string(key) + "'");
  }
  return *it;
}

json matrix_to_json(const Matrix& M) {
  json rows = json::array();
  for (int r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IOError("cannot write " + path);
  f << body;
  if (!f) throw IOError("short write to " + path);
}

}  // namespace

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

LQModel load_model(const std::string& path) {
  const json j = read_json_file(path);
  if (!j.is_object()) throw IOError(path + ": document must be an object");
  try {
  LQModel model;
  model.n = static_cast<int>(as_number(require_key(j, "n", path), "n"));
  model.m = static_cast<int>(as_number(require_key(j, "m", path), "m"));
  const int m0 =
      static_cast<int>(as_number(require_key(j, "m0", path), "m0"));
  if (model.n < 1 || model.m < 1 || m0 < 1) {
    throw IOError(path + ": dimensions must be positive");
  }
  model.gen.m0 = m0;
  model.gen.lambda = parse_matrix(require_key(j, "lambda", path), m0, m0,
                                  "lambda");

  const json& regimes = require_key(j, "regimes", path);
  if (!regimes.is_array() || static_cast<int>(regimes.size()) != m0) {
    throw IOError(path + ": 'regimes' must list " + std::to_string(m0) +
                  " entries");
  }
  for (int i = 0; i < m0; ++i) {
    const json& rj = regimes.at(static_cast<size_t>(i));
    const std::string where = "regime " + std::to_string(i + 1);
    RegimeData rg;
    rg.A = parse_matrix(require_key(rj, "A", where), model.n, model.n, where + " A");
    rg.B = parse_matrix(require_key(rj, "B", where), model.n, model.m, where + " B");
    rg.C = parse_matrix(require_key(rj, "C", where), model.n, model.n, where + " C");
    rg.D = parse_matrix(require_key(rj, "D", where), model.n, model.m, where + " D");
    rg.Q = parse_matrix(require_key(rj, "Q", where), model.n, model.n, where + " Q");
    rg.S = parse_matrix(require_key(rj, "S", where), model.m, model.n, where + " S");
    rg.R = parse_matrix(require_key(rj, "R", where), model.m, model.m, where + " R");
    model.regimes.push_back(std::move(rg));
  }

  model.signals = SignalSet::zero(model.n, model.m, m0);
  if (auto it = j.find("signals"); it != j.end()) {
    const json& sj = *it;
    SignalSet& sg = model.signals;
    if (auto bit = sj.find("breakpoints"); bit != sj.end()) {
      for (const json& v : *bit) {
        sg.breakpoints.push_back(as_number(v, "breakpoints"));
      }
    }
    const size_t intervals =
        sg.breakpoints.empty() ? 0 : sg.breakpoints.size() - 1;
    auto table = [&](const char* key, int dim) {
      if (auto tit = sj.find(key); tit != sj.end()) {
        return parse_signal_table(*tit, m0, intervals, dim, key);
      }
      return std::vector<std::vector<Vector>>(
          static_cast<size_t>(m0),
          std::vector<Vector>(intervals, Vector::Zero(dim)));
    };
    sg.b = table("b", model.n);
    sg.sigma = table("sigma", model.n);
    sg.q = table("q", model.n);
    sg.r = table("r", model.m);
    if (auto tit = sj.find("tail"); tit != sj.end()) {
      const json& tj = *tit;
      sg.has_tail = true;
      auto tail = [&](const char* key, int dim) {
        if (auto kit = tj.find(key); kit != tj.end()) {
          return parse_tail(*kit, m0, dim, std::string("tail ") + key);
        }
        return zero_vec_family(m0, dim);
      };
      sg.b_tail = tail("b", model.n);
      sg.sigma_tail = tail("sigma", model.n);
      sg.q_tail = tail("q", model.n);
      sg.r_tail = tail("r", model.m);
    }
  }
  return model;
  } catch (const json::exception& e) {
    throw IOError(path + ": " + e.what());
  }
}

ExperimentConfig load_config(const std::string& path) {
  const json j = read_json_file(path);
  if (!j.is_object()) throw IOError(path + ": document must be an object");
  try {
  ExperimentConfig cfg;

  const std::string model_rel =
      require_key(j, "model", path).get<std::string>();
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  cfg.model_path = (base / model_rel).string();

  cfg.experiment_case = require_key(j, "case", path).get<std::string>();
  if (cfg.experiment_case != "homogeneous" &&
      cfg.experiment_case != "integrable" &&
      cfg.experiment_case != "local_integrable") {
    throw IOError(path + ": unknown case '" + cfg.experiment_case + "'");
  }

  for (const json& v : require_key(j, "T_list", path)) {
    cfg.T_list.push_back(as_number(v, "T_list"));
  }
  if (cfg.T_list.empty() ||
      !std::is_sorted(cfg.T_list.begin(), cfg.T_list.end())) {
    throw IOError(path + ": T_list must be nonempty and increasing");
  }

  if (auto it = j.find("grid_step"); it != j.end()) {
    cfg.grid_step = as_number(*it, "grid_step");
  }
  if (cfg.grid_step <= 0.0) throw IOError(path + ": grid_step must be positive");

  const json& xj = require_key(j, "x", path);
  cfg.x = parse_vector(xj, static_cast<int>(xj.size()), "x");
  if (auto it = j.find("x_inf"); it != j.end()) {
    cfg.x_inf = parse_vector(*it, static_cast<int>(it->size()), "x_inf");
  } else {
    cfg.x_inf = cfg.x;
  }

  if (auto it = j.find("i0"); it != j.end()) {
    cfg.i0 = static_cast<int>(as_number(*it, "i0")) - 1;  // 1-based in files
  }
  if (cfg.i0 < 0) throw IOError(path + ": i0 must be >= 1");

  if (auto it = j.find("seed"); it != j.end()) {
    cfg.seed = it->get<std::uint64_t>();
  }
  if (auto it = j.find("mc_paths"); it != j.end()) {
    cfg.mc_paths = it->get<std::int64_t>();
  }
  if (auto it = j.find("mc_dt"); it != j.end()) {
    cfg.mc_dt = as_number(*it, "mc_dt");
  }
  if (auto it = j.find("ergodic_T_list"); it != j.end()) {
    for (const json& v : *it) {
      cfg.ergodic_T_list.push_back(as_number(v, "ergodic_T_list"));
    }
  }
  if (auto it = j.find("output_dir"); it != j.end()) {
    cfg.output_dir = it->get<std::string>();
  }
  return cfg;
  } catch (const json::exception& e) {
    throw IOError(path + ": " + e.what());
  }
}

void write_dre_csv(const DRESolution& dre, const std::string& path) {
  const int n = dre.P.empty() || dre.P[0].empty()
                    ? 0
                    : static_cast<int>(dre.P[0][0].rows());
  std::ostringstream os;
  os << "t,regime";
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) os << ",P" << r + 1 << c + 1;
  }
  os << "\n";
  for (int k = 0; k < dre.grid.num_nodes(); ++k) {
    for (size_t i = 0; i < dre.P[static_cast<size_t>(k)].size(); ++i) {
      os << format_g17(dre.grid.node(k)) << "," << i + 1;
      const Matrix& P = dre.P[static_cast<size_t>(k)][i];
      for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) os << "," << format_g17(P(r, c));
      }
      os << "\n";
    }
  }
  write_text_file(path, os.str());
}

void write_offsets_csv(const OffsetSolution& off, const std::string& path) {
  const int n = off.h.empty() || off.h[0].empty()
                    ? 0
                    : static_cast<int>(off.h[0][0].size());
  const int m = off.v.empty() || off.v[0].empty()
                    ? 0
                    : static_cast<int>(off.v[0][0].size());
  std::ostringstream os;
  os << "t,regime";
  for (int c = 0; c < n; ++c) os << ",h" << c + 1;
  for (int c = 0; c < m; ++c) os << ",v" << c + 1;
  os << "\n";
  for (size_t k = 0; k < off.h.size(); ++k) {
    for (size_t i = 0; i < off.h[k].size(); ++i) {
      os << format_g17(off.grid.node(static_cast<int>(k))) << "," << i + 1;
      for (int c = 0; c < n; ++c) os << "," << format_g17(off.h[k][i](c));
      for (int c = 0; c < m; ++c) os << "," << format_g17(off.v[k][i](c));
      os << "\n";
    }
  }
  write_text_file(path, os.str());
}

namespace {

void moment_header(std::ostringstream& os, int n, bool with_se) {
  os << "t,regime,p";
  if (with_se) os << ",p_se";
  for (int c = 0; c < n; ++c) {
    os << ",m1_" << c + 1;
    if (with_se) os << ",m1_" << c + 1 << "_se";
  }
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      os << ",M2_" << r + 1 << c + 1;
      if (with_se) os << ",M2_" << r + 1 << c + 1 << "_se";
    }
  }
  os << ",abs2";
  if (with_se) os << ",abs2_se";
  os << "\n";
}

}  // namespace

void write_moments_csv(const MomentTrajectory& traj, const std::string& path) {
  const int n = traj.m1.empty() || traj.m1[0].empty()
                    ? 0
                    : static_cast<int>(traj.m1[0][0].size());
  std::ostringstream os;
  moment_header(os, n, false);
  for (size_t k = 0; k < traj.p.size(); ++k) {
    const double abs2 = traj.abs2(static_cast<int>(k));
    for (size_t i = 0; i < traj.m1[k].size(); ++i) {
      os << format_g17(traj.grid.node(static_cast<int>(k))) << "," << i + 1
         << "," << format_g17(traj.p[k](static_cast<int>(i)));
      for (int c = 0; c < n; ++c) os << "," << format_g17(traj.m1[k][i](c));
      for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
          os << "," << format_g17(traj.M2[k][i](r, c));
        }
      }
      os << "," << format_g17(abs2) << "\n";
    }
  }
  write_text_file(path, os.str());
}

void write_mc_csv(const MCResult& mc, const std::string& path) {
  const int n = mc.m1_hat.empty() || mc.m1_hat[0].empty()
                    ? 0
                    : static_cast<int>(mc.m1_hat[0][0].size());
  std::ostringstream os;
  moment_header(os, n, true);
  for (size_t k = 0; k < mc.p_hat.size(); ++k) {
    for (size_t i = 0; i < mc.m1_hat[k].size(); ++i) {
      os << format_g17(mc.grid.node(static_cast<int>(k))) << "," << i + 1
         << "," << format_g17(mc.p_hat[k](static_cast<int>(i))) << ","
         << format_g17(mc.p_se[k](static_cast<int>(i)));
      for (int c = 0; c < n; ++c) {
        os << "," << format_g17(mc.m1_hat[k][i](c)) << ","
           << format_g17(mc.m1_se[k][i](c));
      }
      for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
          os << "," << format_g17(mc.M2_hat[k][i](r, c)) << ","
             << format_g17(mc.M2_se[k][i](r, c));
        }
      }
      os << "," << format_g17(mc.abs2_hat[k]) << ","
         << format_g17(mc.abs2_se[k]) << "\n";
    }
  }
  write_text_file(path, os.str());
}

void write_error_table_csv(const TurnpikeReport& report,
                           const std::string& path) {
  std::ostringstream os;
  os << "T,t,xhat_sq,uhat_sq,gap_h,gap_v,bound_lhs,bound_rhs,bound_ok\n";
  for (const HorizonErrors& he : report.per_horizon) {
    for (int k = 0; k < he.grid.num_nodes(); ++k) {
      const size_t sk = static_cast<size_t>(k);
      os << format_g17(he.T) << "," << format_g17(he.grid.node(k)) << ","
         << format_g17(he.xhat_sq[sk]) << "," << format_g17(he.uhat_sq[sk])
         << "," << format_g17(he.gap_h[sk]) << "," << format_g17(he.gap_v[sk])
         << "," << format_g17(he.bound_lhs[sk]) << ","
         << format_g17(he.bound_rhs[sk]) << ","
         << static_cast<int>(he.bound_ok[sk]) << "\n";
    }
  }
  write_text_file(path, os.str());
}

void write_midpoint_csv(const TurnpikeReport& report, const std::string& path) {
  std::ostringstream os;
  os << "T,midpoint,integrated_gap,J,J_over_T\n";
  for (const HorizonErrors& he : report.per_horizon) {
    os << format_g17(he.T) << "," << format_g17(he.midpoint) << ","
       << format_g17(he.integrated_gap) << "," << format_g17(he.J) << ","
       << format_g17(he.J / he.T) << "\n";
  }
  write_text_file(path, os.str());
}

void write_are_json(const ARESolution& are, const std::string& path) {
  json j;
  j["horizon_used"] = are.horizon;
  j["final_diff"] = are.final_diff;
  j["residual"] = are.residual;
  j["regularity_margin"] = are.regularity_margin;
  j["rho"] = are.rho;
  j["P"] = json::array();
  j["Theta"] = json::array();
  for (const Matrix& P : are.P) j["P"].push_back(matrix_to_json(P));
  for (const Matrix& Th : are.Theta) j["Theta"].push_back(matrix_to_json(Th));
  write_text_file(path, j.dump(2) + "\n");
}

void write_certificate_json(const DissipativityCertificate& cert,
                            const std::string& path) {
  json j;
  j["delta"] = cert.delta;
  j["slack"] = cert.slack;
  j["Sigma"] = json::array();
  for (const Matrix& S : cert.Sigma) j["Sigma"].push_back(matrix_to_json(S));
  write_text_file(path, j.dump(2) + "\n");
}

std::string turnpike_summary(const TurnpikeReport& report) {
  std::ostringstream os;
  os << "certificate rate delta = " << format_g17(report.delta_cert) << "\n";
  if (report.fitted) {
    os << "midpoint fit: K = " << format_g17(report.fitted->K)
       << ", beta = " << format_g17(report.fitted->rate)
       << ", R2 = " << format_g17(report.fitted->r_squared) << "\n";
  } else {
    os << "midpoint fit: unavailable\n";
  }
  os << "T,midpoint,bound_pass_rate,J_over_T\n";
  for (const HorizonErrors& he : report.per_horizon) {
    os << format_g17(he.T) << "," << format_g17(he.midpoint) << ","
       << format_g17(he.bound_pass_rate) << "," << format_g17(he.J / he.T)
       << "\n";
  }
  os << "ergodic window-average limit = " << format_g17(report.ergodic.limit)
     << "\n";
  if (report.error) os << "incomplete: " << *report.error << "\n";
  return os.str();
}

}  // namespace rslq
