#include <CLI11.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "slskit/json_io.hpp"

namespace {

using namespace slskit;

/// Carries exit code 2: the instance itself admits no localized solution.
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Accepts the stock TOML config format or a flat/nested JSON object.
/// Values whose SLSKIT_ environment variable is set are dropped so the
/// precedence stays flags over environment over config file.
class FlexConfig : public CLI::ConfigBase {
 public:
  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    std::string text((std::istreambuf_iterator<char>(input)),
                     std::istreambuf_iterator<char>());
    const auto first = text.find_first_not_of(" \t\r\n");
    std::vector<CLI::ConfigItem> items;
    if (first == std::string::npos || text[first] != '{') {
      std::istringstream rest(text);
      items = CLI::ConfigBase::from_config(rest);
    } else {
      Json j;
      try {
        j = Json::parse(text);
      } catch (const std::exception& e) {
        throw CLI::FileError(std::string("config json: ") + e.what());
      }
      flatten(j, {}, items);
    }
    items.erase(std::remove_if(items.begin(), items.end(),
                               [](const CLI::ConfigItem& it) {
                                 return env_masked(it.name);
                               }),
                items.end());
    return items;
  }

 private:
  static bool env_masked(const std::string& name) {
    std::string var = "SLSKIT_";
    for (char c : name)
      var += (c == '-') ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return std::getenv(var.c_str()) != nullptr;
  }
  static void flatten(const Json& j, const std::vector<std::string>& parents,
                      std::vector<CLI::ConfigItem>& items) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const Json& v = it.value();
      if (v.is_object()) {
        std::vector<std::string> deeper = parents;
        deeper.push_back(it.key());
        flatten(v, deeper, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = it.key();
      if (v.is_array())
        for (const auto& el : v) item.inputs.push_back(scalar(el));
      else
        item.inputs.push_back(scalar(v));
      items.push_back(std::move(item));
    }
  }
  static std::string scalar(const Json& v) {
    return v.is_string() ? v.get<std::string>() : v.dump();
  }
};

PlantModel load_plant_checked(const std::string& path, bool allow_large) {
  PlantModel p = load_plant(path);
  if (p.nx() > 2000 && !allow_large)
    throw std::runtime_error(
        "plant has " + std::to_string(p.nx()) +
        " states; rerun with --allow-large (per-cell parallelism is the intended "
        "scaling path at this size)");
  return p;
}

SparsityPattern path_pattern(int n) {
  SparsityPattern g = SparsityPattern::identity(n);
  for (int i = 0; i + 1 < n; ++i) {
    g.set(i, i + 1);
    g.set(i + 1, i);
  }
  return g;
}

struct SfSpaces {
  ConstraintSpace s_r, s_m;
};

SfSpaces build_sf_spaces(const PlantModel& p, int d, int T, const std::string& h,
                         double tau) {
  auto pair = build_dT_localized(p.A, p.B2, d, T, parse_ratio(h));
  if (tau > 0.0) {
    if (p.nu() != p.n_nodes())
      throw std::runtime_error("--tau requires one actuator per node");
    const std::vector<int> state_nodes = p.state_nodes();
    std::vector<int> input_nodes(static_cast<std::size_t>(p.nu()));
    std::iota(input_nodes.begin(), input_nodes.end(), 0);
    pair.first = intersect(pair.first,
                           comm_delay_space(p.graph, tau, T, state_nodes, state_nodes));
    pair.second = intersect(pair.second,
                            comm_delay_space(p.graph, tau, T, input_nodes, state_nodes));
  }
  return {std::move(pair.first), std::move(pair.second)};
}

struct OfSpaces {
  ConstraintSpace s_r, s_n, s_m, s_l;
};

// Full measurements let the sensor-side spaces mirror the state-side ones;
// L shares M's locality at every lag including zero.
OfSpaces build_of_spaces(const PlantModel& p, int d, int T, const std::string& h,
                         double tau) {
  if (p.ny() != p.nx())
    throw std::runtime_error("output feedback locality here requires ny == nx");
  SfSpaces sf = build_sf_spaces(p, d, T, h, tau);
  ConstraintSpace s_l(T, p.nu(), p.ny());
  for (int k = 0; k <= T; ++k) s_l.comp(k) = sf.s_m.comp(k == 0 ? 1 : k);
  return {sf.s_r, sf.s_r, sf.s_m, std::move(s_l)};
}

LlqrProblem make_lqr_problem(const PlantModel& p, const SfSpaces& sp, int workers) {
  LlqrProblem prob;
  prob.A = p.A;
  prob.B2 = p.B2;
  prob.S_R = sp.s_r;
  prob.S_M = sp.s_m;
  prob.Qx = p.C1.transpose() * p.C1;
  prob.Ru = p.D12.transpose() * p.D12;
  prob.noise_cov = p.B1 * p.B1.transpose();
  prob.workers = workers;
  return prob;
}

double centralized_h2_sq(const PlantModel& p) {
  const DareSolution dare = dare_solve(p.A, p.B2, p.C1.transpose() * p.C1,
                                       p.D12.transpose() * p.D12);
  if (!dare.converged || !dare.closed_loop_stable)
    throw std::runtime_error("centralized riccati recursion did not converge");
  return (dare.P * p.B1 * p.B1.transpose()).trace();
}

void require_converged(const AdmmState& st, const std::string& what) {
  if (st.status == AdmmStatus::converged) return;
  std::ostringstream msg;
  msg << what << ": admm " << admm_status_name(st.status) << " after " << st.iterations
      << " iterations";
  if (!st.primal_hist.empty())
    msg << " (primal " << format_double(st.primal_hist.back()) << ", dual "
        << format_double(st.dual_hist.back()) << ")";
  throw std::runtime_error(msg.str());
}

// ---- gen-plant ----

struct GenArgs {
  std::string kind = "random-chain";
  int n = 4;
  int mesh_k = 3;
  std::string mesh_mode = "spanning-tree";
  double drop_probability = 0.25;
  double diag = 0.5;
  double coupling = 0.2;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out;
  bool allow_large = false;
};

int run_gen_plant(const GenArgs& a) {
  if (a.kind != "chain" && !a.seed_given)
    throw std::runtime_error("randomized plant kinds require an explicit --seed");
  PlantModel p;
  if (a.kind == "chain") {
    p = build_chain(a.n, a.diag, a.coupling);
  } else if (a.kind == "random-chain") {
    p = build_random_chain(a.n, a.seed);
  } else if (a.kind == "swing-chain") {
    p = build_swing_plant(path_pattern(a.n), a.seed);
  } else if (a.kind == "swing-mesh") {
    MeshMode mode;
    if (a.mesh_mode == "spanning-tree")
      mode = MeshMode::spanning_tree;
    else if (a.mesh_mode == "edge-drop")
      mode = MeshMode::edge_drop;
    else
      throw std::runtime_error("unknown mesh-mode: " + a.mesh_mode);
    p = build_swing_plant(build_mesh(a.mesh_k, mode, a.seed, a.drop_probability), a.seed);
  } else {
    throw std::runtime_error("unknown plant kind: " + a.kind);
  }
  if (p.nx() > 2000 && !a.allow_large)
    throw std::runtime_error("generated plant exceeds 2000 states; pass --allow-large");
  save_plant(a.out, p);
  std::cout << "wrote " << a.out << ": " << p.nx() << " states, " << p.nu()
            << " inputs, " << p.n_nodes() << " nodes\n";
  return 0;
}

// ---- synth-sf / feas ----

struct SynthSfArgs {
  std::string plant, h = "2", out;
  int d = 1, T = 5, workers = 1;
  double tau = 0.0;
  bool allow_large = false;
};

int run_synth_sf(const SynthSfArgs& a) {
  const PlantModel p = load_plant_checked(a.plant, a.allow_large);
  const SfSpaces sp = build_sf_spaces(p, a.d, a.T, a.h, a.tau);
  const SfResult res = llqr_solve(make_lqr_problem(p, sp, a.workers));
  if (res.status != SolveStatus::feasible)
    throw InfeasibleError("state feedback synthesis: column " +
                          std::to_string(res.failing_column) + " infeasible");
  Json out;
  out["command"] = "synth-sf";
  out["params"] = Json{{"d", a.d}, {"T", a.T}, {"h", a.h}, {"tau", a.tau}};
  out["plant"] = p;
  out["spaces"] = Json{{"S_R", sp.s_r}, {"S_M", sp.s_m}};
  out["result"] = res;
  save_json(a.out, out);
  std::cout << "objective " << format_double(res.objective) << ", worst residual "
            << format_double(res.worst_residual) << ", wrote " << a.out << "\n";
  return 0;
}

int run_feas(const SynthSfArgs& a) {
  const PlantModel p = load_plant_checked(a.plant, a.allow_large);
  const SfSpaces sp = build_sf_spaces(p, a.d, a.T, a.h, a.tau);
  const LocalizabilityReport rep = is_localizable(p.A, p.B2, sp.s_r, sp.s_m);
  if (!a.out.empty()) {
    Json out;
    out["command"] = "feas";
    out["params"] = Json{{"d", a.d}, {"T", a.T}, {"h", a.h}, {"tau", a.tau}};
    out["localizable"] = rep.localizable;
    out["failing_column"] = rep.failing_column;
    out["worst_residual"] = rep.worst_residual;
    save_json(a.out, out);
  }
  if (!rep.localizable)
    throw InfeasibleError("column " + std::to_string(rep.failing_column) +
                          " infeasible (residual " + format_double(rep.worst_residual) +
                          ")");
  std::cout << "localizable with d=" << a.d << ", T=" << a.T << "\n";
  return 0;
}

// ---- synth-of ----

struct SynthOfArgs {
  std::string plant, h = "2", out, residuals_out;
  int d = 1, T = 5, max_iter = 5000, workers = 1;
  double tau = 0.0, rho = 1.0, eps_pri = 1e-6, eps_dual = 1e-6;
  double mu0 = 0.0, lambda0 = 0.0, gamma = 0.0;
  bool allow_large = false;
};

AdmmConfig make_admm_config(const SynthOfArgs& a) {
  AdmmConfig cfg;
  cfg.rho = a.rho;
  cfg.eps_pri = a.eps_pri;
  cfg.eps_dual = a.eps_dual;
  cfg.max_iter = a.max_iter;
  cfg.workers = a.workers;
  return cfg;
}

OfProblem make_of_problem(const PlantModel& p, const OfSpaces& sp, const SynthOfArgs& a) {
  OfProblem prob;
  prob.plant = p;
  prob.S_R = sp.s_r;
  prob.S_N = sp.s_n;
  prob.S_M = sp.s_m;
  prob.S_L = sp.s_l;
  if (a.mu0 > 0.0) prob.reg.mu = Eigen::VectorXd::Constant(p.nu(), a.mu0);
  if (a.lambda0 > 0.0) prob.reg.lambda = Eigen::VectorXd::Constant(p.ny(), a.lambda0);
  if (a.gamma > 0.0) prob.gamma = a.gamma;
  return prob;
}

int run_synth_of(const SynthOfArgs& a) {
  const PlantModel p = load_plant_checked(a.plant, a.allow_large);
  const OfSpaces sp = build_of_spaces(p, a.d, a.T, a.h, a.tau);
  const OfProblem prob = make_of_problem(p, sp, a);
  auto [resp, state] = admm_solve(prob, make_admm_config(a));
  if (!a.residuals_out.empty()) save_csv(a.residuals_out, residuals_to_csv(state));
  require_converged(state, "synth-of");
  const double h2_sq = closed_loop_h2_sq(p, resp);
  const double residual = of_residual(p.A, p.B2, p.C2, resp).max_norm();

  Json out;
  out["command"] = "synth-of";
  out["params"] = Json{{"d", a.d},           {"T", a.T},
                       {"h", a.h},           {"tau", a.tau},
                       {"rho", a.rho},       {"eps_pri", a.eps_pri},
                       {"eps_dual", a.eps_dual}, {"max_iter", a.max_iter},
                       {"mu0", a.mu0},       {"lambda0", a.lambda0},
                       {"gamma", a.gamma}};
  out["plant"] = p;
  out["spaces"] = Json{{"S_R", sp.s_r}, {"S_N", sp.s_n}, {"S_M", sp.s_m}, {"S_L", sp.s_l}};
  out["response"] = resp;
  out["objective"] = h2_sq;
  out["residual"] = residual;
  out["admm"] = state;
  save_json(a.out, out);
  std::cout << "h2^2 " << format_double(h2_sq) << ", residual "
            << format_double(residual) << ", " << state.iterations
            << " iterations, wrote " << a.out << "\n";
  return 0;
}

// ---- simulate ----

struct SimArgs {
  std::string plant, controller, out, scenario_out;
  int steps = 50;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int impulse_node = -1, impulse_state = -1;
  bool awgn_process = false, awgn_sensor = false;
  bool allow_large = false;
};

struct LoadedController {
  bool output_feedback = false;
  FirMatrix R, M;
  SystemResponse resp;
};

// Artifacts re-prove themselves on load: achievability against the embedded
// nominal plant and membership in the embedded spaces.
LoadedController load_controller(const std::string& path) {
  const Json j = load_json(path);
  LoadedController c;
  const PlantModel nominal = field_as<PlantModel>(j, "plant");
  const Json& spaces = require_field(j, "spaces");
  if (j.contains("result")) {
    const SfResult res = field_as<SfResult>(j, "result");
    if (res.status != SolveStatus::feasible)
      throw JsonError("controller artifact records an infeasible synthesis");
    const double resid = sf_residual(nominal.A, nominal.B2, res.R, res.M).h2_norm();
    if (resid > 1e-6)
      throw JsonError("controller artifact fails achievability re-validation: residual " +
                      format_double(resid));
    if (!membership(res.R, field_as<ConstraintSpace>(spaces, "S_R")) ||
        !membership(res.M, field_as<ConstraintSpace>(spaces, "S_M")))
      throw JsonError("controller artifact violates its constraint spaces");
    c.R = res.R;
    c.M = res.M;
    return c;
  }
  if (j.contains("response")) {
    const SystemResponse resp = field_as<SystemResponse>(j, "response");
    const double resid =
        of_residual(nominal.A, nominal.B2, nominal.C2, resp).max_norm();
    if (resid > 1e-3)
      throw JsonError("controller artifact fails achievability re-validation: residual " +
                      format_double(resid));
    if (!membership(resp.R, field_as<ConstraintSpace>(spaces, "S_R")) ||
        !membership(resp.N, field_as<ConstraintSpace>(spaces, "S_N")) ||
        !membership(resp.M, field_as<ConstraintSpace>(spaces, "S_M")) ||
        !membership(resp.L, field_as<ConstraintSpace>(spaces, "S_L")))
      throw JsonError("controller artifact violates its constraint spaces");
    c.output_feedback = true;
    c.resp = resp;
    return c;
  }
  throw JsonError("controller file is neither a synth-sf nor a synth-of artifact");
}

int run_simulate(const SimArgs& a) {
  const PlantModel p = load_plant_checked(a.plant, a.allow_large);
  const LoadedController ctrl = load_controller(a.controller);
  if ((a.awgn_process || a.awgn_sensor) && !a.seed_given)
    throw std::runtime_error("stochastic runs require an explicit --seed");

  Injections inj;
  inj.seed = a.seed;
  inj.awgn_process = a.awgn_process;
  inj.awgn_sensor = a.awgn_sensor;
  if (a.impulse_node >= 0) {
    const std::vector<int> nodes = p.state_nodes();
    Eigen::VectorXd v = Eigen::VectorXd::Zero(p.nx());
    for (int i = 0; i < p.nx(); ++i)
      if (nodes[static_cast<std::size_t>(i)] == a.impulse_node) v(i) = 1.0;
    if (v.cwiseAbs().maxCoeff() == 0.0)
      throw std::runtime_error("impulse node out of range");
    inj.dx = Signal{std::move(v)};
  }
  if (a.impulse_state >= 0) {
    if (a.impulse_state >= p.nx()) throw std::runtime_error("impulse state out of range");
    if (inj.dx.empty()) inj.dx = Signal{Eigen::VectorXd::Zero(p.nx())};
    inj.dx[0](a.impulse_state) = 1.0;
  }

  SimulationTrace tr;
  if (ctrl.output_feedback) {
    OfController oc(ctrl.resp);
    tr = simulate(p, oc, inj, a.steps);
  } else {
    SfController sc(ctrl.R, ctrl.M);
    tr = simulate(p, sc, inj, a.steps);
  }
  save_csv(a.out, trace_to_csv(tr));
  if (!a.scenario_out.empty()) {
    Json sc;
    sc["plant"] = a.plant;
    sc["controller"] = a.controller;
    sc["injections"] = Json{{"impulse_node", a.impulse_node},
                            {"impulse_state", a.impulse_state},
                            {"awgn_process", a.awgn_process},
                            {"awgn_sensor", a.awgn_sensor}};
    sc["horizon"] = a.steps;
    sc["seed"] = a.seed;
    save_json(a.scenario_out, sc);
  }
  std::cout << "simulated " << a.steps << " steps; max state norm "
            << format_double(max_state_norm(tr)) << ", wrote " << a.out << "\n";
  return 0;
}

// ---- sweep-T / compare-centralized ----

struct SweepArgs {
  std::string plant, h = "2", out;
  int d = 1, t_min = 3, t_max = 20, workers = 1;
  double tau = 0.0;
  bool allow_large = false;
};

int run_sweep_t(const SweepArgs& a) {
  if (a.t_min < 1 || a.t_max < a.t_min)
    throw std::runtime_error("sweep-T range must satisfy 1 <= T-min <= T-max");
  const PlantModel p = load_plant_checked(a.plant, a.allow_large);
  const double cent = std::sqrt(centralized_h2_sq(p));
  CsvTable t;
  t.header = {"T", "localized_h2", "centralized_h2", "ratio"};
  for (int T = a.t_min; T <= a.t_max; ++T) {
    const SfSpaces sp = build_sf_spaces(p, a.d, T, a.h, a.tau);
    const SfResult res = llqr_solve(make_lqr_problem(p, sp, a.workers));
    if (res.status != SolveStatus::feasible) {
      std::cerr << "T=" << T << " infeasible; row skipped\n";
      continue;
    }
    const double loc = std::sqrt(res.objective);
    t.rows.push_back({static_cast<double>(T), loc, cent, loc / cent});
  }
  if (t.rows.empty()) throw InfeasibleError("no feasible horizon in the requested range");
  save_csv(a.out, t);
  std::cout << "wrote " << a.out << " (" << t.rows.size() << " rows)\n";
  return 0;
}

struct CompareArgs {
  std::string plant, h = "2", out, format = "json";
  int d = 1, T = 5, workers = 1;
  double tau = 0.0;
  bool allow_large = false;
};

int run_compare_centralized(const CompareArgs& a) {
  const PlantModel p = load_plant_checked(a.plant, a.allow_large);
  const SfSpaces sp = build_sf_spaces(p, a.d, a.T, a.h, a.tau);
  const SfResult res = llqr_solve(make_lqr_problem(p, sp, a.workers));
  if (res.status != SolveStatus::feasible)
    throw InfeasibleError("localized synthesis: column " +
                          std::to_string(res.failing_column) + " infeasible");
  const double loc = std::sqrt(res.objective);
  const double cent = std::sqrt(centralized_h2_sq(p));
  if (!a.out.empty()) {
    if (a.format == "json") {
      Json out;
      out["command"] = "compare-centralized";
      out["params"] = Json{{"d", a.d}, {"T", a.T}, {"h", a.h}, {"tau", a.tau}};
      out["localized_h2"] = loc;
      out["centralized_h2"] = cent;
      out["ratio"] = loc / cent;
      save_json(a.out, out);
    } else if (a.format == "csv") {
      CsvTable t;
      t.header = {"localized_h2", "centralized_h2", "ratio"};
      t.rows.push_back({loc, cent, loc / cent});
      save_csv(a.out, t);
    } else {
      throw std::runtime_error("unknown format: " + a.format);
    }
  }
  std::cout << "localized " << format_double(loc) << ", centralized "
            << format_double(cent) << ", ratio " << format_double(loc / cent) << "\n";
  return 0;
}

// ---- regularize ----

struct RegArgs {
  std::string plant, h = "2", out;
  int d = 1, T = 5, max_iter = 5000, workers = 1, reweight_rounds = 3;
  double tau = 0.0, rho = 1.0, eps_pri = 1e-6, eps_dual = 1e-6;
  double mu0 = 0.0, lambda0 = 0.0, threshold = 0.02;
  bool allow_large = false;
};

SparsityPattern keep_pattern_cols(const SparsityPattern& p, const std::vector<int>& keep) {
  SparsityPattern out(p.rows(), static_cast<int>(keep.size()));
  for (int i = 0; i < p.rows(); ++i)
    for (std::size_t c = 0; c < keep.size(); ++c)
      if (p.at(i, keep[c])) out.set(i, static_cast<int>(c));
  return out;
}

ConstraintSpace keep_space_cols(const ConstraintSpace& s, const std::vector<int>& keep) {
  std::vector<SparsityPattern> comps;
  for (int k = 0; k <= s.horizon(); ++k)
    comps.push_back(keep_pattern_cols(s.comp(k), keep));
  return ConstraintSpace::from_components(std::move(comps));
}

Eigen::MatrixXd keep_matrix_rows(const Eigen::MatrixXd& m, const std::vector<int>& keep) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(keep.size()), m.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(keep[i]);
  return out;
}

int run_regularize(const RegArgs& a) {
  if (a.reweight_rounds < 1) throw std::runtime_error("--reweight-rounds must be >= 1");
  if (a.mu0 <= 0.0 && a.lambda0 <= 0.0)
    throw std::runtime_error("regularize needs --mu0 or --lambda0 positive");
  const PlantModel p = load_plant_checked(a.plant, a.allow_large);
  const OfSpaces sp = build_of_spaces(p, a.d, a.T, a.h, a.tau);
  SynthOfArgs base;
  base.rho = a.rho;
  base.eps_pri = a.eps_pri;
  base.eps_dual = a.eps_dual;
  base.max_iter = a.max_iter;
  base.workers = a.workers;
  const AdmmConfig cfg = make_admm_config(base);

  auto [base_resp, base_state] =
      llqg_solve(p, sp.s_r, sp.s_n, sp.s_m, sp.s_l, cfg);
  require_converged(base_state, "regularize baseline");
  const double base_cost = closed_loop_h2_sq(p, base_resp);

  OfProblem prob;
  prob.plant = p;
  prob.S_R = sp.s_r;
  prob.S_N = sp.s_n;
  prob.S_M = sp.s_m;
  prob.S_L = sp.s_l;
  if (a.mu0 > 0.0) prob.reg.mu = Eigen::VectorXd::Constant(p.nu(), a.mu0);
  if (a.lambda0 > 0.0) prob.reg.lambda = Eigen::VectorXd::Constant(p.ny(), a.lambda0);

  SystemResponse resp = base_resp;
  for (int round = 0; round < a.reweight_rounds; ++round) {
    auto [r, st] = h2_joint_reg_solve(prob, cfg);
    require_converged(st, "regularize round " + std::to_string(round));
    resp = r;
    // Reciprocal norms times the original prices keep the pricing intact.
    const RegularizerWeights re = reweight_l1(prob.reg, resp);
    if (a.mu0 > 0.0) prob.reg.mu = a.mu0 * re.mu;
    if (a.lambda0 > 0.0) prob.reg.lambda = a.lambda0 * re.lambda;
  }

  const FirMatrix nl = fir_vcat(resp.N, resp.L);
  const FirMatrix ml = fir_hcat(resp.M, resp.L);
  std::vector<double> sensor_norms, actuator_norms;
  std::vector<int> kept_sensors, removed_sensors, kept_actuators, removed_actuators;
  for (int j = 0; j < p.ny(); ++j) {
    sensor_norms.push_back(nl.col_h2_norm(j));
    if (a.lambda0 > 0.0 && sensor_norms.back() < a.threshold)
      removed_sensors.push_back(j);
    else
      kept_sensors.push_back(j);
  }
  for (int i = 0; i < p.nu(); ++i) {
    actuator_norms.push_back(ml.row_h2_norm(i));
    if (a.mu0 > 0.0 && actuator_norms.back() < a.threshold)
      removed_actuators.push_back(i);
    else
      kept_actuators.push_back(i);
  }

  double final_cost = base_cost;
  if (!removed_sensors.empty() || !removed_actuators.empty()) {
    PlantModel pruned = p;
    pruned.C2 = keep_matrix_rows(p.C2, kept_sensors);
    pruned.D21 = keep_matrix_rows(p.D21, kept_sensors);
    Eigen::MatrixXd b2(p.nx(), static_cast<Eigen::Index>(kept_actuators.size()));
    Eigen::MatrixXd d12(p.C1.rows(), static_cast<Eigen::Index>(kept_actuators.size()));
    for (std::size_t i = 0; i < kept_actuators.size(); ++i) {
      b2.col(static_cast<Eigen::Index>(i)) = p.B2.col(kept_actuators[i]);
      d12.col(static_cast<Eigen::Index>(i)) = p.D12.col(kept_actuators[i]);
    }
    pruned.B2 = b2;
    pruned.D12 = d12;

    std::vector<SparsityPattern> m_comps;
    for (int k = 0; k <= sp.s_m.horizon(); ++k) {
      SparsityPattern full = sp.s_m.comp(k);
      SparsityPattern kept(static_cast<int>(kept_actuators.size()), full.cols());
      for (std::size_t i = 0; i < kept_actuators.size(); ++i)
        for (int c = 0; c < full.cols(); ++c)
          if (full.at(kept_actuators[i], c)) kept.set(static_cast<int>(i), c);
      m_comps.push_back(std::move(kept));
    }
    const ConstraintSpace s_m2 = ConstraintSpace::from_components(std::move(m_comps));
    std::vector<SparsityPattern> l_comps;
    for (int k = 0; k <= sp.s_l.horizon(); ++k) {
      SparsityPattern full = keep_pattern_cols(sp.s_l.comp(k), kept_sensors);
      SparsityPattern kept(static_cast<int>(kept_actuators.size()), full.cols());
      for (std::size_t i = 0; i < kept_actuators.size(); ++i)
        for (int c = 0; c < full.cols(); ++c)
          if (full.at(kept_actuators[i], c)) kept.set(static_cast<int>(i), c);
      l_comps.push_back(std::move(kept));
    }
    const ConstraintSpace s_l2 = ConstraintSpace::from_components(std::move(l_comps));
    const ConstraintSpace s_n2 = keep_space_cols(sp.s_n, kept_sensors);

    auto [final_resp, final_state] =
        llqg_solve(pruned, sp.s_r, s_n2, s_m2, s_l2, cfg);
    if (final_state.status != AdmmStatus::converged)
      throw InfeasibleError("resynthesis after pruning did not converge (" +
                            std::string(admm_status_name(final_state.status)) + ")");
    final_cost = closed_loop_h2_sq(pruned, final_resp);
  }

  Json out;
  out["command"] = "regularize";
  out["params"] = Json{{"d", a.d},     {"T", a.T},
                       {"h", a.h},     {"tau", a.tau},
                       {"mu0", a.mu0}, {"lambda0", a.lambda0},
                       {"reweight_rounds", a.reweight_rounds},
                       {"threshold", a.threshold}};
  out["base_cost"] = base_cost;
  out["final_cost"] = final_cost;
  out["cost_ratio"] = final_cost / base_cost;
  out["sensor_norms"] = sensor_norms;
  out["actuator_norms"] = actuator_norms;
  out["removed_sensors"] = removed_sensors;
  out["removed_actuators"] = removed_actuators;
  save_json(a.out, out);
  std::cout << "removed " << removed_sensors.size() << " sensors, "
            << removed_actuators.size() << " actuators; cost ratio "
            << format_double(final_cost / base_cost) << ", wrote " << a.out << "\n";
  return 0;
}

// ---- tradeoff-l1 ----

struct TradeoffArgs {
  std::string plant, h = "2", out;
  int d = 1, T = 5, max_iter = 5000, workers = 1;
  double tau = 0.0, rho = 1.0, eps_pri = 1e-6, eps_dual = 1e-6;
  std::vector<double> gammas;
  bool allow_large = false;
};

int run_tradeoff_l1(const TradeoffArgs& a) {
  if (a.gammas.empty()) throw std::runtime_error("tradeoff-l1 needs at least one --gamma");
  const PlantModel p = load_plant_checked(a.plant, a.allow_large);
  const OfSpaces sp = build_of_spaces(p, a.d, a.T, a.h, a.tau);
  std::vector<double> gammas = a.gammas;
  std::sort(gammas.begin(), gammas.end(), std::greater<double>());

  SynthOfArgs cfg_args;
  cfg_args.rho = a.rho;
  cfg_args.eps_pri = a.eps_pri;
  cfg_args.eps_dual = a.eps_dual;
  cfg_args.max_iter = a.max_iter;
  cfg_args.workers = a.workers;
  const AdmmConfig cfg = make_admm_config(cfg_args);

  CsvTable t;
  t.header = {"gamma", "h2", "l1"};
  for (double gamma : gammas) {
    OfProblem prob;
    prob.plant = p;
    prob.S_R = sp.s_r;
    prob.S_N = sp.s_n;
    prob.S_M = sp.s_m;
    prob.S_L = sp.s_l;
    prob.gamma = gamma;
    auto [resp, st] = mixed_h2_l1_solve(prob, cfg);
    require_converged(st, "tradeoff-l1 at gamma " + format_double(gamma));
    t.rows.push_back({gamma, std::sqrt(closed_loop_h2_sq(p, resp)),
                      join_response(resp).l1_induced_norm()});
  }
  save_csv(a.out, t);
  std::cout << "wrote " << a.out << " (" << t.rows.size() << " rows)\n";
  return 0;
}

// ---- emit-plot ----

struct PlotArgs {
  std::string in, kind, out_prefix;
};

void write_dat(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "#";
  for (const auto& h : header) out << " " << h;
  out << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i)
      out << (i ? " " : "") << format_double(row[i]);
    out << "\n";
  }
}

int run_emit_plot(const PlotArgs& a) {
  const CsvTable t = load_csv(a.in);
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::string plot_lines;
  const std::string dat = a.out_prefix + ".dat";
  if (a.kind == "sweep-T") {
    header = {"T", "normalized_h2"};
    for (const auto& r : t.rows) {
      if (r.size() < 4) throw std::runtime_error("sweep-T input needs 4 columns");
      rows.push_back({r[0], r[3]});
    }
    plot_lines = "plot '" + dat + "' using 1:2 with linespoints title 'normalized H2'\n";
  } else if (a.kind == "tradeoff") {
    header = {"gamma", "h2", "l1"};
    for (const auto& r : t.rows) {
      if (r.size() < 3) throw std::runtime_error("tradeoff input needs 3 columns");
      rows.push_back({r[0], r[1], r[2]});
    }
    plot_lines = "plot '" + dat + "' using 3:2 with linespoints title 'H2 vs L1'\n";
  } else if (a.kind == "residuals") {
    header = {"iter", "primal", "dual"};
    for (const auto& r : t.rows) {
      if (r.size() < 3) throw std::runtime_error("residuals input needs 3 columns");
      rows.push_back({r[0], r[1], r[2]});
    }
    plot_lines = "set logscale y\nplot '" + dat +
                 "' using 1:2 with lines title 'primal', '" + dat +
                 "' using 1:3 with lines title 'dual'\n";
  } else {
    throw std::runtime_error("unknown plot kind: " + a.kind);
  }
  write_dat(dat, header, rows);
  std::ofstream gp(a.out_prefix + ".gp");
  if (!gp) throw std::runtime_error("cannot open for writing: " + a.out_prefix + ".gp");
  gp << "# gnuplot stub for " << a.kind << "\n" << plot_lines;
  std::cout << "wrote " << dat << " and " << a.out_prefix << ".gp\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"localized system level synthesis toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "config file (TOML or JSON); flags override");
  app.config_formatter(std::make_shared<FlexConfig>());

  const auto env = [](const char* name) { return std::string("SLSKIT_") + name; };

  GenArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-plant", "generate a plant model file");
  gen_cmd->add_option("--kind", gen.kind, "chain|random-chain|swing-chain|swing-mesh")
      ->envname(env("KIND"));
  gen_cmd->add_option("--n", gen.n, "chain length in nodes")->envname(env("N"));
  gen_cmd->add_option("--mesh-k", gen.mesh_k, "mesh side length")->envname(env("MESH_K"));
  gen_cmd->add_option("--mesh-mode", gen.mesh_mode, "spanning-tree|edge-drop")
      ->envname(env("MESH_MODE"));
  gen_cmd->add_option("--drop-probability", gen.drop_probability, "edge-drop probability")
      ->envname(env("DROP_PROBABILITY"));
  gen_cmd->add_option("--diag", gen.diag, "chain self coupling")->envname(env("DIAG"));
  gen_cmd->add_option("--coupling", gen.coupling, "chain neighbor coupling")
      ->envname(env("COUPLING"));
  CLI::Option* gen_seed =
      gen_cmd->add_option("--seed", gen.seed, "generator seed")->envname(env("SEED"));
  gen_cmd->add_option("--out", gen.out, "output plant json")
      ->required()
      ->envname(env("OUT"));
  gen_cmd->add_flag("--allow-large", gen.allow_large, "permit more than 2000 states");

  const auto add_sf_opts = [&](CLI::App* cmd, auto& args) {
    // The long option --h shadows the default -h short help flag.
    cmd->set_help_flag("--help", "print help");
    cmd->add_option("--plant", args.plant, "plant json file")
        ->required()
        ->envname(env("PLANT"));
    cmd->add_option("--d", args.d, "locality radius in hops")->envname(env("D"));
    cmd->add_option("--T", args.T, "FIR horizon")->envname(env("T"));
    cmd->add_option("--h", args.h, "propagation ratio, e.g. 2 or 3/2")->envname(env("H"));
    cmd->add_option("--tau", args.tau, "communication delay per hop, 0 = off")
        ->envname(env("TAU"));
    cmd->add_option("--workers", args.workers, "solver worker threads")
        ->envname(env("WORKERS"));
    cmd->add_flag("--allow-large", args.allow_large, "permit more than 2000 states");
  };
  const auto add_admm_opts = [&](CLI::App* cmd, auto& args) {
    cmd->add_option("--rho", args.rho, "admm penalty")->envname(env("RHO"));
    cmd->add_option("--eps-pri", args.eps_pri, "primal tolerance")->envname(env("EPS_PRI"));
    cmd->add_option("--eps-dual", args.eps_dual, "dual tolerance")->envname(env("EPS_DUAL"));
    cmd->add_option("--max-iter", args.max_iter, "admm iteration cap")
        ->envname(env("MAX_ITER"));
  };

  SynthSfArgs ssf;
  CLI::App* ssf_cmd = app.add_subcommand("synth-sf", "localized state feedback synthesis");
  add_sf_opts(ssf_cmd, ssf);
  ssf_cmd->add_option("--out", ssf.out, "result json")->required()->envname(env("OUT"));

  SynthSfArgs feas;
  CLI::App* feas_cmd = app.add_subcommand("feas", "localizability feasibility check");
  add_sf_opts(feas_cmd, feas);
  feas_cmd->add_option("--out", feas.out, "optional report json")->envname(env("OUT"));

  SynthOfArgs sof;
  CLI::App* sof_cmd = app.add_subcommand("synth-of", "localized output feedback synthesis");
  add_sf_opts(sof_cmd, sof);
  add_admm_opts(sof_cmd, sof);
  sof_cmd->add_option("--mu0", sof.mu0, "uniform actuator weight")->envname(env("MU0"));
  sof_cmd->add_option("--lambda0", sof.lambda0, "uniform sensor weight")
      ->envname(env("LAMBDA0"));
  sof_cmd->add_option("--gamma", sof.gamma, "row l1 bound, 0 = off")->envname(env("GAMMA"));
  sof_cmd->add_option("--out", sof.out, "result json")->required()->envname(env("OUT"));
  sof_cmd->add_option("--residuals-out", sof.residuals_out, "admm residual csv");

  SimArgs sim;
  CLI::App* sim_cmd = app.add_subcommand("simulate", "closed loop simulation");
  sim_cmd->add_option("--plant", sim.plant, "plant json file")
      ->required()
      ->envname(env("PLANT"));
  sim_cmd->add_option("--controller", sim.controller, "synth result json")
      ->required()
      ->envname(env("CONTROLLER"));
  sim_cmd->add_option("--steps", sim.steps, "simulation steps")->envname(env("STEPS"));
  CLI::Option* sim_seed =
      sim_cmd->add_option("--seed", sim.seed, "noise seed")->envname(env("SEED"));
  sim_cmd->add_option("--impulse-node", sim.impulse_node, "unit impulse on a node's states");
  sim_cmd->add_option("--impulse-state", sim.impulse_state, "unit impulse on one state");
  sim_cmd->add_flag("--awgn", sim.awgn_process, "seeded process noise through B1");
  sim_cmd->add_flag("--awgn-sensor", sim.awgn_sensor, "seeded sensor noise through D21");
  sim_cmd->add_option("--out", sim.out, "trace csv")->required()->envname(env("OUT"));
  sim_cmd->add_option("--scenario-out", sim.scenario_out, "scenario json");
  sim_cmd->add_flag("--allow-large", sim.allow_large, "permit more than 2000 states");

  SweepArgs sweep;
  CLI::App* sweep_cmd = app.add_subcommand("sweep-T", "horizon sweep against centralized");
  sweep_cmd->set_help_flag("--help", "print help");
  sweep_cmd->add_option("--plant", sweep.plant, "plant json file")
      ->required()
      ->envname(env("PLANT"));
  sweep_cmd->add_option("--d", sweep.d, "locality radius in hops")->envname(env("D"));
  sweep_cmd->add_option("--h", sweep.h, "propagation ratio")->envname(env("H"));
  sweep_cmd->add_option("--tau", sweep.tau, "communication delay per hop")->envname(env("TAU"));
  sweep_cmd->add_option("--T-min", sweep.t_min, "first horizon")->envname(env("T_MIN"));
  sweep_cmd->add_option("--T-max", sweep.t_max, "last horizon")->envname(env("T_MAX"));
  sweep_cmd->add_option("--workers", sweep.workers, "solver worker threads")
      ->envname(env("WORKERS"));
  sweep_cmd->add_option("--out", sweep.out, "sweep csv")->required()->envname(env("OUT"));
  sweep_cmd->add_flag("--allow-large", sweep.allow_large, "permit more than 2000 states");

  CompareArgs cmp;
  CLI::App* cmp_cmd =
      app.add_subcommand("compare-centralized", "localized vs centralized H2");
  add_sf_opts(cmp_cmd, cmp);
  cmp_cmd->add_option("--out", cmp.out, "optional report file")->envname(env("OUT"));
  cmp_cmd->add_option("--format", cmp.format, "json|csv")->envname(env("FORMAT"));

  RegArgs reg;
  CLI::App* reg_cmd =
      app.add_subcommand("regularize", "reweighted sensor/actuator sparsification");
  add_sf_opts(reg_cmd, reg);
  add_admm_opts(reg_cmd, reg);
  reg_cmd->add_option("--mu0", reg.mu0, "actuator price")->envname(env("MU0"));
  reg_cmd->add_option("--lambda0", reg.lambda0, "sensor price")->envname(env("LAMBDA0"));
  reg_cmd->add_option("--reweight-rounds", reg.reweight_rounds, "reweighting rounds")
      ->envname(env("REWEIGHT_ROUNDS"));
  reg_cmd->add_option("--threshold", reg.threshold, "removal norm threshold")
      ->envname(env("THRESHOLD"));
  reg_cmd->add_option("--out", reg.out, "report json")->required()->envname(env("OUT"));

  TradeoffArgs tradeoff;
  CLI::App* tr_cmd = app.add_subcommand("tradeoff-l1", "H2 versus L1 gamma sweep");
  add_sf_opts(tr_cmd, tradeoff);
  add_admm_opts(tr_cmd, tradeoff);
  tr_cmd->add_option("--gamma", tradeoff.gammas, "l1 bound sweep points")
      ->required()
      ->delimiter(',')
      ->envname(env("GAMMA"));
  tr_cmd->add_option("--out", tradeoff.out, "tradeoff csv")->required()->envname(env("OUT"));

  PlotArgs plot;
  CLI::App* plot_cmd = app.add_subcommand("emit-plot", "turn result csv into plot data");
  plot_cmd->add_option("--in", plot.in, "input csv")->required();
  plot_cmd->add_option("--kind", plot.kind, "sweep-T|tradeoff|residuals")->required();
  plot_cmd->add_option("--out", plot.out_prefix, "output prefix (.dat/.gp)")
      ->required()
      ->envname(env("OUT"));

  for (CLI::App* sub : app.get_subcommands([](CLI::App*) { return true; })) {
    sub->configurable();
    sub->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  gen.seed_given = gen_seed->count() > 0;
  sim.seed_given = sim_seed->count() > 0;

  try {
    if (*gen_cmd) return run_gen_plant(gen);
    if (*ssf_cmd) return run_synth_sf(ssf);
    if (*feas_cmd) return run_feas(feas);
    if (*sof_cmd) return run_synth_of(sof);
    if (*sim_cmd) return run_simulate(sim);
    if (*sweep_cmd) return run_sweep_t(sweep);
    if (*cmp_cmd) return run_compare_centralized(cmp);
    if (*reg_cmd) return run_regularize(reg);
    if (*tr_cmd) return run_tradeoff_l1(tradeoff);
    if (*plot_cmd) return run_emit_plot(plot);
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return 2;
  } catch (const AdmmCellError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
