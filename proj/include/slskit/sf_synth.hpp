#pragma once

#include <Eigen/Core>
#include <Eigen/QR>

#include <algorithm>
#include <atomic>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <thread>
#include <vector>

#include "fir.hpp"
#include "numeric.hpp"
#include "plant.hpp"
#include "sparsity.hpp"

namespace slskit {

/// Noise cells: connected components of the noise covariance support. Columns
/// in different cells decouple in the synthesis objective and constraints.
inline std::vector<std::vector<int>> partition_by_noise(const Eigen::MatrixXd& cov) {
  const int n = static_cast<int>(cov.rows());
  if (cov.cols() != n) throw std::invalid_argument("partition_by_noise: square required");
  std::vector<int> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] =
          parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  };
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (cov(i, j) != 0.0 || cov(j, i) != 0.0) parent[static_cast<std::size_t>(find(i))] = find(j);
  std::vector<std::vector<int>> cells(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) cells[static_cast<std::size_t>(find(i))].push_back(i);
  std::vector<std::vector<int>> out;
  for (auto& c : cells)
    if (!c.empty()) out.push_back(std::move(c));
  std::sort(out.begin(), out.end(),
            [](const std::vector<int>& a, const std::vector<int>& b) { return a[0] < b[0]; });
  return out;
}

/// One decoupled synthesis cell: the restricted variables and equations of the
/// dynamics constraint for a group of response columns.
///
/// Per column j the active variable rows are the union of allowed rows across
/// spectral components; the active equation rows are those where some term can
/// be nonzero (allowed state rows, their dynamics images, the actuation image,
/// and the right hand side row). All other equation rows read 0 = 0 exactly, so
/// dropping them changes nothing.
struct CellProblem {
  struct Var {
    int cell_col;  ///< index into cols
    int part;      ///< 0 = state block, 1 = input block
    int k;         ///< spectral component
    int row;       ///< global row index within the part
  };

  std::vector<int> cols;                ///< global column indices
  std::vector<int> rhs_rows;            ///< identity row per column, -1 for zero rhs
  int n1 = 0, n2 = 0, horizon = 0;
  std::vector<std::vector<int>> sx, su, t;  ///< per-column active sets
  std::vector<Var> vars;
  Eigen::MatrixXd G;
  Eigen::VectorXd b;
  Eigen::MatrixXd H;  ///< quadratic objective, objective = v' H v

  int find_var(int cell_col, int part, int k, int row) const {
    for (std::size_t v = 0; v < vars.size(); ++v)
      if (vars[v].cell_col == cell_col && vars[v].part == part && vars[v].k == k &&
          vars[v].row == row)
        return static_cast<int>(v);
    return -1;
  }
};

/// Quadratic weights of the synthesis objective: sum_k tr(Wc X_k' diag(Qx, Ru) X_k)
/// over the cell columns, with Wc the noise coupling restricted to the cell.
struct CellWeights {
  Eigen::MatrixXd Qx;  ///< state block weight, n1 x n1 psd
  Eigen::MatrixXd Ru;  ///< input block weight, n2 x n2 psd
  Eigen::MatrixXd Wc;  ///< column coupling, |cell| x |cell| psd
};

inline CellProblem build_cell_problem(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                      const ConstraintSpace& sx_space,
                                      const ConstraintSpace& su_space,
                                      const std::vector<int>& cols,
                                      const std::vector<int>& rhs_rows,
                                      const CellWeights& w, bool reduced = true) {
  const int n1 = static_cast<int>(a.rows());
  const int n2 = static_cast<int>(b.cols());
  if (sx_space.rows() != n1 || su_space.rows() != n2)
    throw std::invalid_argument("build_cell_problem: space dims mismatch");
  if (!sx_space.comp(0).empty())
    throw std::invalid_argument("build_cell_problem: state block must be strictly proper");
  if (cols.size() != rhs_rows.size())
    throw std::invalid_argument("build_cell_problem: rhs per column required");
  const int T = std::max(sx_space.horizon(), su_space.horizon());

  CellProblem cp;
  cp.cols = cols;
  cp.rhs_rows = rhs_rows;
  cp.n1 = n1;
  cp.n2 = n2;
  cp.horizon = T;

  std::vector<std::vector<char>> var_zero_constrained;  // unreduced bookkeeping
  for (std::size_t c = 0; c < cols.size(); ++c) {
    const int j = cols[c];
    std::vector<char> in_sx(static_cast<std::size_t>(n1), 0), in_su(static_cast<std::size_t>(n2), 0);
    for (int k = 0; k <= T; ++k) {
      for (int i : sx_space.comp_or_zero(k).col_rows(j)) in_sx[static_cast<std::size_t>(i)] = 1;
      for (int i : su_space.comp_or_zero(k).col_rows(j)) in_su[static_cast<std::size_t>(i)] = 1;
    }
    std::vector<int> sx, su;
    for (int i = 0; i < n1; ++i)
      if (reduced ? in_sx[static_cast<std::size_t>(i)] : true) sx.push_back(i);
    for (int i = 0; i < n2; ++i)
      if (reduced ? in_su[static_cast<std::size_t>(i)] : true) su.push_back(i);

    std::vector<char> in_t(static_cast<std::size_t>(n1), 0);
    if (reduced) {
      for (int i : sx) in_t[static_cast<std::size_t>(i)] = 1;
      for (int i = 0; i < n1; ++i) {
        for (int m : sx)
          if (a(i, m) != 0.0) in_t[static_cast<std::size_t>(i)] = 1;
        for (int u : su)
          if (b(i, u) != 0.0) in_t[static_cast<std::size_t>(i)] = 1;
      }
      if (rhs_rows[c] >= 0) in_t[static_cast<std::size_t>(rhs_rows[c])] = 1;
    } else {
      std::fill(in_t.begin(), in_t.end(), 1);
    }
    std::vector<int> t;
    for (int i = 0; i < n1; ++i)
      if (in_t[static_cast<std::size_t>(i)]) t.push_back(i);

    cp.sx.push_back(std::move(sx));
    cp.su.push_back(std::move(su));
    cp.t.push_back(std::move(t));
  }

  // Variables: state entries for k >= 1 over sx, input entries for k >= 0 over su,
  // restricted to the allowed pattern when reducing. Without reduction every
  // candidate entry becomes a variable and disallowed ones get zero equations.
  std::vector<char> zero_constrained;
  for (std::size_t c = 0; c < cols.size(); ++c) {
    const int j = cols[c];
    for (int k = 1; k <= T; ++k)
      for (int i : cp.sx[c]) {
        const bool allowed = sx_space.comp_or_zero(k).at(i, j);
        if (!allowed && reduced) continue;
        cp.vars.push_back({static_cast<int>(c), 0, k, i});
        zero_constrained.push_back(allowed ? 0 : 1);
      }
    for (int k = 0; k <= T; ++k)
      for (int i : cp.su[c]) {
        const bool allowed = su_space.comp_or_zero(k).at(i, j);
        if (!allowed && reduced) continue;
        cp.vars.push_back({static_cast<int>(c), 1, k, i});
        zero_constrained.push_back(allowed ? 0 : 1);
      }
  }
  const int nv = static_cast<int>(cp.vars.size());

  int n_rows = 0;
  for (std::size_t c = 0; c < cols.size(); ++c)
    n_rows += (T + 1) * static_cast<int>(cp.t[c].size());
  if (!reduced)
    for (char z : zero_constrained) n_rows += z ? 1 : 0;

  cp.G = Eigen::MatrixXd::Zero(n_rows, nv);
  cp.b = Eigen::VectorXd::Zero(n_rows);

  // Fast var lookup: (cell_col, part, k, row) -> var id.
  std::vector<int> lut(cols.size() * 2 * static_cast<std::size_t>(T + 1) *
                           static_cast<std::size_t>(std::max(n1, n2)),
                       -1);
  auto lut_at = [&](int c, int part, int k, int row) -> int& {
    return lut[((static_cast<std::size_t>(c) * 2 + static_cast<std::size_t>(part)) *
                    static_cast<std::size_t>(T + 1) +
                static_cast<std::size_t>(k)) *
                   static_cast<std::size_t>(std::max(n1, n2)) +
               static_cast<std::size_t>(row)];
  };
  for (int v = 0; v < nv; ++v) {
    const auto& var = cp.vars[static_cast<std::size_t>(v)];
    lut_at(var.cell_col, var.part, var.k, var.row) = v;
  }

  int row_id = 0;
  for (std::size_t c = 0; c < cols.size(); ++c) {
    for (int k = 0; k <= T; ++k)
      for (int i : cp.t[c]) {
        if (k + 1 <= T) {
          const int v = lut_at(static_cast<int>(c), 0, k + 1, i);
          if (v >= 0) cp.G(row_id, v) += 1.0;
        }
        if (k >= 1)
          for (int m : cp.sx[c])
            if (a(i, m) != 0.0) {
              const int v = lut_at(static_cast<int>(c), 0, k, m);
              if (v >= 0) cp.G(row_id, v) -= a(i, m);
            }
        for (int u : cp.su[c])
          if (b(i, u) != 0.0) {
            const int v = lut_at(static_cast<int>(c), 1, k, u);
            if (v >= 0) cp.G(row_id, v) -= b(i, u);
          }
        if (k == 0 && i == rhs_rows[c]) cp.b(row_id) = 1.0;
        ++row_id;
      }
  }
  if (!reduced)
    for (int v = 0; v < nv; ++v)
      if (zero_constrained[static_cast<std::size_t>(v)]) {
        cp.G(row_id, v) = 1.0;
        ++row_id;
      }

  // Objective: couples variables sharing part and component through the row
  // weight, and columns through the noise coupling.
  const Eigen::MatrixXd& wc = w.Wc;
  if (wc.rows() != static_cast<int>(cols.size()))
    throw std::invalid_argument("build_cell_problem: Wc must match the cell size");
  cp.H = Eigen::MatrixXd::Zero(nv, nv);
  for (int v1 = 0; v1 < nv; ++v1) {
    const auto& a1 = cp.vars[static_cast<std::size_t>(v1)];
    for (int v2 = 0; v2 < nv; ++v2) {
      const auto& a2 = cp.vars[static_cast<std::size_t>(v2)];
      if (a1.part != a2.part || a1.k != a2.k) continue;
      const Eigen::MatrixXd& wpart = a1.part == 0 ? w.Qx : w.Ru;
      const double entry = wpart(a1.row, a2.row) * wc(a1.cell_col, a2.cell_col);
      if (entry != 0.0) cp.H(v1, v2) = entry;
    }
  }
  return cp;
}

struct QpSolution {
  Eigen::VectorXd v;
  double objective = 0.0;
  double residual = 0.0;
  bool feasible = false;
};

/// Feasibility of G v = b alone, by rank revealing least squares.
inline QpSolution solve_feasibility(const CellProblem& cp,
                                    const NumericPolicy& policy = default_policy()) {
  QpSolution sol;
  if (cp.vars.empty()) {
    sol.residual = cp.b.norm();
    sol.feasible = feasible_residual(sol.residual, cp.b.norm(), policy);
    return sol;
  }
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(cp.G);
  sol.v = cod.solve(cp.b);
  sol.residual = (cp.G * sol.v - cp.b).norm();
  sol.feasible = feasible_residual(sol.residual, cp.b.norm(), policy);
  return sol;
}

/// Minimize v' H v subject to G v = b through the stationarity system; singular
/// but consistent systems get the minimum norm solution.
inline QpSolution solve_equality_qp(const CellProblem& cp,
                                    const NumericPolicy& policy = default_policy()) {
  const int nv = static_cast<int>(cp.vars.size());
  const int nc = static_cast<int>(cp.G.rows());
  if (nv == 0) return solve_feasibility(cp, policy);
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(nv + nc, nv + nc);
  kkt.topLeftCorner(nv, nv) = 2.0 * cp.H;
  kkt.topRightCorner(nv, nc) = cp.G.transpose();
  kkt.bottomLeftCorner(nc, nv) = cp.G;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nv + nc);
  rhs.tail(nc) = cp.b;

  QpSolution sol;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(kkt);
  const Eigen::VectorXd z = cod.solve(rhs);
  sol.v = z.head(nv);
  sol.residual = (cp.G * sol.v - cp.b).norm();
  sol.feasible = feasible_residual(sol.residual, cp.b.norm(), policy);
  if (!sol.feasible) {
    // The stationarity system can mask pure feasibility; retest directly.
    QpSolution feas = solve_feasibility(cp, policy);
    if (feas.feasible) {
      throw std::runtime_error("solve_equality_qp: stationarity system inconsistent on a "
                               "feasible cell");
    }
    sol.residual = feas.residual;
    return sol;
  }
  sol.objective = sol.v.dot(cp.H * sol.v);
  return sol;
}

enum class SolveStatus { feasible, infeasible };

/// Localized state feedback synthesis result. R and M live at the shared
/// horizon with component 0 zero; objective is the squared closed-loop H2 cost.
struct SfResult {
  FirMatrix R;
  FirMatrix M;
  double objective = 0.0;
  std::vector<double> per_column_objectives;
  SolveStatus status = SolveStatus::infeasible;
  int failing_column = -1;
  double worst_residual = 0.0;
};

struct LlqrProblem {
  Eigen::MatrixXd A, B2;
  ConstraintSpace S_R, S_M;
  Eigen::MatrixXd Qx, Ru;        ///< objective row weights; empty = identity
  Eigen::MatrixXd noise_cov;     ///< disturbance covariance B1 B1'; empty = identity
  int workers = 1;
  bool reduced = true;
};

namespace detail {

inline Eigen::MatrixXd or_identity(const Eigen::MatrixXd& m, int n) {
  if (m.size() == 0) return Eigen::MatrixXd::Identity(n, n);
  if (m.rows() != n || m.cols() != n) throw std::invalid_argument("weight dims mismatch");
  return m;
}

template <typename Fn>
void parallel_over(int count, int workers, Fn&& fn) {
  workers = std::max(1, std::min(workers, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&]() {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  for (auto& th : pool) th.join();
}

}  // namespace detail

/// Column-separated localized synthesis: per noise cell, reduce to the active
/// sets, solve the equality constrained quadratic program, scatter back.
inline SfResult llqr_solve(const LlqrProblem& prob,
                           const NumericPolicy& policy = default_policy()) {
  const int nx = static_cast<int>(prob.A.rows());
  const int nu = static_cast<int>(prob.B2.cols());
  const int T = std::max(prob.S_R.horizon(), prob.S_M.horizon());
  const Eigen::MatrixXd qx = detail::or_identity(prob.Qx, nx);
  const Eigen::MatrixXd ru = detail::or_identity(prob.Ru, nu);
  const Eigen::MatrixXd cov = detail::or_identity(prob.noise_cov, nx);

  SfResult res;
  res.R = FirMatrix(nx, nx, T);
  res.M = FirMatrix(nu, nx, T);
  res.per_column_objectives.assign(static_cast<std::size_t>(nx), 0.0);

  const std::vector<std::vector<int>> cells = partition_by_noise(cov);
  struct CellOut {
    CellProblem cp;
    QpSolution sol;
  };
  std::vector<CellOut> outs(cells.size());

  detail::parallel_over(static_cast<int>(cells.size()), prob.workers, [&](int ci) {
    const std::vector<int>& cell = cells[static_cast<std::size_t>(ci)];
    Eigen::MatrixXd wc(cell.size(), cell.size());
    for (std::size_t x = 0; x < cell.size(); ++x)
      for (std::size_t y = 0; y < cell.size(); ++y)
        wc(static_cast<int>(x), static_cast<int>(y)) =
            cov(cell[x], cell[y]);
    CellWeights w{qx, ru, wc};
    outs[static_cast<std::size_t>(ci)].cp = build_cell_problem(
        prob.A, prob.B2, prob.S_R, prob.S_M, cell, cell, w, prob.reduced);
    outs[static_cast<std::size_t>(ci)].sol =
        solve_equality_qp(outs[static_cast<std::size_t>(ci)].cp, policy);
  });

  res.status = SolveStatus::feasible;
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    const CellOut& out = outs[ci];
    res.worst_residual = std::max(res.worst_residual, out.sol.residual);
    if (!out.sol.feasible) {
      res.status = SolveStatus::infeasible;
      if (res.failing_column < 0) res.failing_column = cells[ci][0];
      continue;
    }
    res.objective += out.sol.objective;
    for (std::size_t v = 0; v < out.cp.vars.size(); ++v) {
      const auto& var = out.cp.vars[v];
      FirMatrix& target = var.part == 0 ? res.R : res.M;
      target.coeff(var.k)(var.row, out.cp.cols[static_cast<std::size_t>(var.cell_col)]) =
          out.sol.v(static_cast<int>(v));
    }
    // Attribute v' H v to columns by the row index of each product term; cross
    // column couplings split symmetrically, so the attributions sum exactly.
    for (std::size_t v1 = 0; v1 < out.cp.vars.size(); ++v1)
      for (std::size_t v2 = 0; v2 < out.cp.vars.size(); ++v2) {
        if (out.cp.H(static_cast<int>(v1), static_cast<int>(v2)) == 0.0) continue;
        const auto& a1 = out.cp.vars[v1];
        res.per_column_objectives[static_cast<std::size_t>(
            out.cp.cols[static_cast<std::size_t>(a1.cell_col)])] +=
            out.sol.v(static_cast<int>(v1)) *
            out.cp.H(static_cast<int>(v1), static_cast<int>(v2)) *
            out.sol.v(static_cast<int>(v2));
      }
  }
  if (res.status == SolveStatus::infeasible) {
    res.objective = 0.0;
    std::fill(res.per_column_objectives.begin(), res.per_column_objectives.end(), 0.0);
  }
  return res;
}

/// Feasibility of the localized constraint set, column by column.
struct LocalizabilityReport {
  bool localizable = false;
  int failing_column = -1;
  double worst_residual = 0.0;
};

inline LocalizabilityReport is_localizable(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b2,
                                           const ConstraintSpace& s_r,
                                           const ConstraintSpace& s_m,
                                           const NumericPolicy& policy = default_policy()) {
  const int nx = static_cast<int>(a.rows());
  LocalizabilityReport rep;
  rep.localizable = true;
  CellWeights unit{Eigen::MatrixXd::Identity(nx, nx),
                   Eigen::MatrixXd::Identity(b2.cols(), b2.cols()),
                   Eigen::MatrixXd::Identity(1, 1)};
  for (int j = 0; j < nx; ++j) {
    CellProblem cp = build_cell_problem(a, b2, s_r, s_m, {j}, {j}, unit, true);
    QpSolution sol = solve_feasibility(cp, policy);
    rep.worst_residual = std::max(rep.worst_residual, sol.residual);
    if (!sol.feasible) {
      rep.localizable = false;
      if (rep.failing_column < 0) rep.failing_column = j;
    }
  }
  return rep;
}

/// Deadbeat controllability: can every state impulse be returned to zero in T
/// steps? Equivalent to A^T lying columnwise in the range of the T step
/// reachability map.
inline bool t_step_controllable(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b2, int T,
                                const NumericPolicy& policy = default_policy()) {
  if (T < 1) throw std::invalid_argument("t_step_controllable: T >= 1");
  const int n = static_cast<int>(a.rows());
  Eigen::MatrixXd at = Eigen::MatrixXd::Identity(n, n);
  for (int k = 0; k < T; ++k) at = a * at;
  if (b2.cols() == 0) return at.norm() <= policy.feas_tol;
  Eigen::MatrixXd reach(n, static_cast<int>(b2.cols()) * T);
  Eigen::MatrixXd apow = Eigen::MatrixXd::Identity(n, n);
  for (int k = 0; k < T; ++k) {
    reach.middleCols(k * static_cast<int>(b2.cols()), static_cast<int>(b2.cols())) = apow * b2;
    apow = a * apow;
  }
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(reach);
  const Eigen::MatrixXd sol = cod.solve(-at);
  const double residual = (reach * sol + at).norm();
  return feasible_residual(residual, at.norm(), policy);
}

/// Dual notion for estimation through the transposed data.
inline bool t_step_observable(const Eigen::MatrixXd& a, const Eigen::MatrixXd& c2, int T,
                              const NumericPolicy& policy = default_policy()) {
  return t_step_controllable(a.transpose(), c2.transpose(), T, policy);
}

inline ConstraintSpace transpose_space(const ConstraintSpace& s) {
  std::vector<SparsityPattern> comps;
  for (int k = 0; k <= s.horizon(); ++k) comps.push_back(pattern_transpose(s.comp(k)));
  return ConstraintSpace::from_components(std::move(comps));
}

/// Localized estimation synthesis result: state and sensor error maps.
struct LdkfResult {
  FirMatrix R;
  FirMatrix N;
  double objective = 0.0;
  SolveStatus status = SolveStatus::infeasible;
  int failing_row = -1;
};

/// Localized distributed estimation: the transpose dual of llqr_solve on
/// (A', C2') with the error maps transposed back. Weights default to identity;
/// pass B1 B1' and D21 D21' to match a plant's noise model (their cross terms
/// must vanish).
inline LdkfResult ldkf_solve(const Eigen::MatrixXd& a, const Eigen::MatrixXd& c2,
                             const ConstraintSpace& s_r, const ConstraintSpace& s_n,
                             const Eigen::MatrixXd& state_noise_w = {},
                             const Eigen::MatrixXd& sensor_noise_w = {}, int workers = 1,
                             const NumericPolicy& policy = default_policy()) {
  LlqrProblem dual;
  dual.A = a.transpose();
  dual.B2 = c2.transpose();
  dual.S_R = transpose_space(s_r);
  dual.S_M = transpose_space(s_n);
  dual.Qx = detail::or_identity(state_noise_w, static_cast<int>(a.rows()));
  dual.Ru = detail::or_identity(sensor_noise_w, static_cast<int>(c2.rows()));
  dual.workers = workers;
  SfResult sr = llqr_solve(dual, policy);
  LdkfResult out;
  out.R = fir_transpose(sr.R);
  out.N = fir_transpose(sr.M);
  out.objective = sr.objective;
  out.status = sr.status;
  out.failing_row = sr.failing_column;
  return out;
}

}  // namespace slskit
