#pragma once

#include <Eigen/Core>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "fir.hpp"
#include "numeric.hpp"
#include "plant.hpp"
#include "sf_synth.hpp"
#include "sparsity.hpp"

namespace slskit {

/// Shrinks a vector toward zero as a group: max(0, 1 - kappa/|p|) p.
inline Eigen::VectorXd group_soft_threshold(const Eigen::VectorXd& p, double kappa) {
  if (kappa < 0.0) throw std::invalid_argument("group_soft_threshold: kappa >= 0");
  const double norm = p.norm();
  if (norm <= kappa || norm == 0.0) return Eigen::VectorXd::Zero(p.size());
  return (1.0 - kappa / norm) * p;
}

/// Euclidean projection onto the l1 ball of radius gamma, by sort and threshold.
inline Eigen::VectorXd project_l1_ball(const Eigen::VectorXd& v, double gamma) {
  if (gamma <= 0.0) throw std::invalid_argument("project_l1_ball: gamma > 0");
  if (v.cwiseAbs().sum() <= gamma) return v;
  std::vector<double> mags(static_cast<std::size_t>(v.size()));
  for (int i = 0; i < v.size(); ++i) mags[static_cast<std::size_t>(i)] = std::abs(v(i));
  std::sort(mags.begin(), mags.end(), std::greater<double>());
  double cumulative = 0.0, tau = 0.0;
  for (std::size_t r = 0; r < mags.size(); ++r) {
    cumulative += mags[r];
    const double candidate = (cumulative - gamma) / static_cast<double>(r + 1);
    if (candidate < mags[r]) tau = candidate;
  }
  Eigen::VectorXd out(v.size());
  for (int i = 0; i < v.size(); ++i) {
    const double mag = std::max(std::abs(v(i)) - tau, 0.0);
    out(i) = v(i) < 0.0 ? -mag : mag;
  }
  return out;
}

/// Weighted sum of control-row H2 norms of the response.
inline double actuator_norm(const SystemResponse& resp, const Eigen::VectorXd& mu) {
  const FirMatrix ml = fir_hcat(resp.M, resp.L);
  if (mu.size() != ml.rows()) throw std::invalid_argument("actuator_norm: weight count");
  double s = 0.0;
  for (int i = 0; i < ml.rows(); ++i) s += mu(i) * ml.row_h2_norm(i);
  return s;
}

/// Weighted sum of sensor-column H2 norms of the response.
inline double sensor_norm(const SystemResponse& resp, const Eigen::VectorXd& lambda) {
  const FirMatrix nl = fir_vcat(resp.N, resp.L);
  if (lambda.size() != nl.cols()) throw std::invalid_argument("sensor_norm: weight count");
  double s = 0.0;
  for (int j = 0; j < nl.cols(); ++j) s += lambda(j) * nl.col_h2_norm(j);
  return s;
}

/// Group regularizer weights for sensor/actuator sparsification.
struct RegularizerWeights {
  Eigen::VectorXd mu;      ///< per actuator; empty = all zero
  Eigen::VectorXd lambda;  ///< per sensor; empty = all zero
  double epsilon = 1e-3;   ///< reweighting floor
};

/// Reciprocal-norm update of the group weights from the current response.
inline RegularizerWeights reweight_l1(const RegularizerWeights& w, const SystemResponse& resp) {
  if (w.epsilon <= 0.0) throw std::invalid_argument("reweight_l1: epsilon > 0");
  const FirMatrix ml = fir_hcat(resp.M, resp.L);
  const FirMatrix nl = fir_vcat(resp.N, resp.L);
  RegularizerWeights out = w;
  out.mu.resize(ml.rows());
  for (int i = 0; i < ml.rows(); ++i) out.mu(i) = 1.0 / (ml.row_h2_norm(i) + w.epsilon);
  out.lambda.resize(nl.cols());
  for (int j = 0; j < nl.cols(); ++j) out.lambda(j) = 1.0 / (nl.col_h2_norm(j) + w.epsilon);
  return out;
}

/// Which split side carries the quadratic cost. Sensor weights always live on
/// the column side and actuator weights on the row side; only the quadratic is
/// assignable, mirroring which of the noise/output weights is structured.
enum class H2Side { column, row };

struct OfProblem {
  PlantModel plant;
  ConstraintSpace S_R, S_N, S_M, S_L;
  RegularizerWeights reg;
  /// Row l1 bound on the stacked response; infinity disables the constraint.
  double gamma = std::numeric_limits<double>::infinity();
  H2Side h2_side = H2Side::column;
};

struct AdmmConfig {
  double rho = 1.0;
  double eps_pri = 1e-6;
  double eps_dual = 1e-6;
  int max_iter = 5000;
  int workers = 1;
  /// Called after each iteration with (iter, phi, psi, lambda).
  std::function<void(int, const FirMatrix&, const FirMatrix&, const FirMatrix&)> observer;
};

enum class AdmmStatus { converged, maxed, diverged };

struct AdmmState {
  FirMatrix phi, psi, lam;  ///< stacked (nx+nu) x (nx+ny) iterates
  int iterations = 0;
  std::vector<double> primal_hist, dual_hist, objective_hist;
  AdmmStatus status = AdmmStatus::maxed;
  long cache_hits = 0;
  long cache_misses = 0;
};

/// A proximal subproblem failed: the named cell's constraints could not be met.
class AdmmCellError : public std::runtime_error {
 public:
  AdmmCellError(std::string side, int cell, const std::string& what)
      : std::runtime_error(side + " cell " + std::to_string(cell) + ": " + what),
        side_(std::move(side)),
        cell_(cell) {}
  const std::string& side() const { return side_; }
  int cell() const { return cell_; }

 private:
  std::string side_;
  int cell_;
};

/// Cached stationarity-system factorization of one proximal cell at fixed rho.
/// apply() evaluates the affine proximal map; the factorization is built once.
class ProxKkt {
 public:
  ProxKkt(const CellProblem& cp, double rho) : cp_(&cp), rho_(rho) {
    const int nv = static_cast<int>(cp.vars.size());
    const int nc = static_cast<int>(cp.G.rows());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(nv + nc, nv + nc);
    kkt.topLeftCorner(nv, nv) = 2.0 * cp.H + rho * Eigen::MatrixXd::Identity(nv, nv);
    kkt.topRightCorner(nv, nc) = cp.G.transpose();
    kkt.bottomLeftCorner(nc, nv) = cp.G;
    fac_.compute(kkt);
  }

  Eigen::VectorXd apply(const Eigen::VectorXd& t) const {
    const int nv = static_cast<int>(cp_->vars.size());
    const int nc = static_cast<int>(cp_->G.rows());
    Eigen::VectorXd rhs(nv + nc);
    rhs.head(nv) = rho_ * t;
    rhs.tail(nc) = cp_->b;
    return fac_.solve(rhs).head(nv);
  }

  double rho() const { return rho_; }

 private:
  const CellProblem* cp_;
  double rho_;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> fac_;
};

namespace detail {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// One side of the duplicate-variable split: a family of decoupled proximal
/// cells over the stacked response, with lazily built cached factorizations.
struct SideSolver {
  enum class Kind { affine, shrink, ball };

  struct Cell {
    CellProblem cp;
    Kind kind = Kind::affine;
    double iso_w = 0.0;    ///< isotropic quadratic coefficient for shrink cells
    double group_w = 0.0;  ///< group norm weight
    double gamma = kInf;
    Eigen::VectorXd mu;  ///< warm-started ball dual across outer iterations
    // Newton piece cache: the dual Hessian only changes when the active
    // face does, and the face freezes as the outer loop converges.
    std::vector<Eigen::Index> ball_act;
    bool ball_inside = false;
    std::unique_ptr<Eigen::LDLT<Eigen::MatrixXd>> ball_fac;
    std::unique_ptr<ProxKkt> kkt;
    std::unique_ptr<Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>> gfac;
    double cached_rho = -1.0;
    // Per cell so concurrent workers never share a counter.
    long hits = 0;
    long misses = 0;
  };

  std::string name;
  bool transposed = false;  ///< row side addresses the stacked response transposed
  int stack_offset = 0;     ///< first control row / sensor column in stacked coords
  std::vector<Cell> cells;

  long total_hits() const {
    long s = 0;
    for (const Cell& c : cells) s += c.hits;
    return s;
  }
  long total_misses() const {
    long s = 0;
    for (const Cell& c : cells) s += c.misses;
    return s;
  }

  void entry_of(const CellProblem::Var& var, int global_col, int& i, int& j) const {
    const int within = var.part == 0 ? var.row : stack_offset + var.row;
    if (transposed) {
      i = global_col;
      j = within;
    } else {
      i = within;
      j = global_col;
    }
  }

  FirMatrix prox(const FirMatrix& target, double rho, int workers,
                 const NumericPolicy& policy) {
    FirMatrix out(target.rows(), target.cols(), target.horizon());
    parallel_over(static_cast<int>(cells.size()), workers, [&](int ci) {
      Cell& cell = cells[static_cast<std::size_t>(ci)];
      const CellProblem& cp = cell.cp;
      const int nv = static_cast<int>(cp.vars.size());
      if (nv == 0) {
        if (cp.b.norm() > policy.feas_tol)
          throw AdmmCellError(name, ci, "empty cell with nonzero right hand side");
        return;
      }
      Eigen::VectorXd t(nv);
      for (int vi = 0; vi < nv; ++vi) {
        const CellProblem::Var& var = cp.vars[static_cast<std::size_t>(vi)];
        int i, j;
        entry_of(var, cp.cols[static_cast<std::size_t>(var.cell_col)], i, j);
        t(vi) = target.coeff(var.k)(i, j);
      }

      ensure_factorization(cell, rho);
      Eigen::VectorXd v;
      switch (cell.kind) {
        case Kind::affine: {
          v = cell.kkt->apply(t);
          const double residual = (cp.G * v - cp.b).norm();
          if (!feasible_residual(residual, cp.b.norm(), policy))
            throw AdmmCellError(name, ci, "affine constraints unsatisfiable");
          break;
        }
        case Kind::shrink: {
          const double scale = rho / (2.0 * cell.iso_w + rho);
          const Eigen::VectorXd shifted = scale * t;
          const Eigen::VectorXd projected = shifted - cell.gfac->solve(cp.G * shifted);
          v = group_soft_threshold(projected, cell.group_w / (2.0 * cell.iso_w + rho));
          break;
        }
        case Kind::ball: {
          v = ball_project(cell, t, policy, ci);
          break;
        }
      }
      for (int vi = 0; vi < nv; ++vi) {
        const CellProblem::Var& var = cp.vars[static_cast<std::size_t>(vi)];
        int i, j;
        entry_of(var, cp.cols[static_cast<std::size_t>(var.cell_col)], i, j);
        out.coeff(var.k)(i, j) = v(vi);
      }
    });
    return out;
  }

 private:
  static void ensure_factorization(Cell& cell, double rho) {
    const bool fresh = cell.cached_rho != rho ||
                       (cell.kind == Kind::affine ? cell.kkt == nullptr
                                                  : cell.gfac == nullptr);
    if (!fresh) {
      ++cell.hits;
      return;
    }
    ++cell.misses;
    if (cell.kind == Kind::affine) {
      cell.kkt = std::make_unique<ProxKkt>(cell.cp, rho);
    } else {
      cell.gfac =
          std::make_unique<Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>>(
              cell.cp.G);
    }
    cell.cached_rho = rho;
  }

  // When the ball binds, the sets touch tangentially and convergence is
  // linear with a rate near one, so the round budget must be generous; the
  // step tolerance only has to undercut the outer loop's residual scale.
  Eigen::VectorXd dykstra(const Cell& cell, const Eigen::VectorXd& t,
                          const NumericPolicy& policy, int ci) const {
    const CellProblem& cp = cell.cp;
    Eigen::VectorXd x = t;
    Eigen::VectorXd p = Eigen::VectorXd::Zero(t.size());
    Eigen::VectorXd q = Eigen::VectorXd::Zero(t.size());
    const double tol = 1e-10 * (1.0 + t.norm());
    const int max_rounds = 200000;
    for (int round = 0; round < max_rounds; ++round) {
      const Eigen::VectorXd xp = x + p;
      const Eigen::VectorXd y = xp - cell.gfac->solve(cp.G * xp - cp.b);
      p = xp - y;
      const Eigen::VectorXd yq = y + q;
      const Eigen::VectorXd xn = project_l1_ball(yq, cell.gamma);
      q = yq - xn;
      const double step = (xn - x).norm();
      x = xn;
      if (step <= tol && feasible_residual((cp.G * x - cp.b).norm(), cp.b.norm(), policy))
        return x;
    }
    if (feasible_residual((cp.G * x - cp.b).norm(), cp.b.norm(), policy)) return x;
    throw AdmmCellError(name, ci, "l1 ball and affine constraints did not intersect");
  }

  // Projection onto {G v = b} intersected with the l1 ball through the
  // equality dual: for multiplier mu the inner minimizer is the ball
  // projection of t - G' mu, and the dual function is concave with
  // gradient G x(mu) - b and generalized Hessian -G D G', D the
  // projection's tangent map (identity inside the ball, the active-face
  // projector I - ss'/|A| on the support otherwise). Damped semismooth
  // Newton ascent on the dual handles deep tangential binding that
  // starves alternating projection; the multiplier warm-starts across
  // outer iterations and dykstra stays as the fallback.
  Eigen::VectorXd ball_project(Cell& cell, const Eigen::VectorXd& t,
                               const NumericPolicy& policy, int ci) const {
    const CellProblem& cp = cell.cp;
    const Eigen::Index m = cp.G.rows();
    if (m == 0) return project_l1_ball(t, cell.gamma);
    if (cell.mu.size() != m) cell.mu = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd mu = cell.mu;
    const double tol = policy.feas_tol * (1.0 + cp.b.norm());
    Eigen::VectorXd x, r;
    double dual = 0.0;
    const auto eval = [&](const Eigen::VectorXd& at) {
      x = project_l1_ball(t - cp.G.transpose() * at, cell.gamma);
      r = cp.G * x - cp.b;
      dual = 0.5 * (x - t).squaredNorm() + at.dot(r);
    };
    eval(mu);
    int used = 0;
    for (; used < 200 && r.norm() > tol; ++used) {
      const Eigen::VectorXd v = t - cp.G.transpose() * mu;
      const bool inside = v.lpNorm<1>() <= cell.gamma;
      std::vector<Eigen::Index> act;  ///< signed support: +-(i + 1) for sign(x_i)
      if (!inside) {
        for (Eigen::Index i = 0; i < x.size(); ++i)
          if (x(i) != 0.0) act.push_back(x(i) > 0.0 ? i + 1 : -(i + 1));
        if (act.empty()) break;
      }
      // A stale damping level only perturbs the piece's positive definite
      // system, so a cached factor still yields an ascent direction.
      if (!cell.ball_fac || inside != cell.ball_inside || act != cell.ball_act) {
        Eigen::MatrixXd h;
        if (inside) {
          h = cp.G * cp.G.transpose();
        } else {
          Eigen::MatrixXd ga(m, static_cast<Eigen::Index>(act.size()));
          Eigen::VectorXd gs = Eigen::VectorXd::Zero(m);
          for (std::size_t a = 0; a < act.size(); ++a) {
            const Eigen::Index i = (act[a] > 0 ? act[a] : -act[a]) - 1;
            ga.col(static_cast<Eigen::Index>(a)) = cp.G.col(i);
            gs += (act[a] > 0 ? 1.0 : -1.0) * cp.G.col(i);
          }
          h = ga * ga.transpose() -
              (1.0 / static_cast<double>(act.size())) * gs * gs.transpose();
        }
        h.diagonal().array() +=
            (1e-12 + 1e-2 * r.norm()) * (1.0 + h.diagonal().cwiseAbs().maxCoeff());
        cell.ball_fac = std::make_unique<Eigen::LDLT<Eigen::MatrixXd>>(h);
        cell.ball_inside = inside;
        cell.ball_act = std::move(act);
      }
      Eigen::VectorXd dir = cell.ball_fac->solve(r);
      double slope = dir.dot(r);
      if (!(slope > 0.0)) {
        dir = r;
        slope = r.squaredNorm();
      }
      const double base = dual;
      double alpha = 1.0;
      for (; alpha > 1e-14; alpha *= 0.5) {
        eval(mu + alpha * dir);
        if (dual >= base + 1e-4 * alpha * slope) break;
      }
      if (alpha <= 1e-14) {
        eval(mu);
        break;
      }
      mu += alpha * dir;
    }
#ifdef SLSKIT_BALL_DEBUG
    std::fprintf(stderr, "[ball %s %d] newton %d r %.3e tol %.3e%s\n", name.c_str(),
                 ci, used, r.norm(), tol,
                 feasible_residual(r.norm(), cp.b.norm(), policy) ? "" : " FALLBACK");
#endif
    if (feasible_residual(r.norm(), cp.b.norm(), policy)) {
      cell.mu = mu;
      return x;
    }
    return dykstra(cell, t, policy, ci);
  }
};

/// Quadratic data of one side: per-row-part weights, column coupling, per
/// column group weights and the shared l1 bound.
struct SideObjective {
  bool has_h2 = false;
  Eigen::MatrixXd qx, ru, w;
  Eigen::VectorXd group;  ///< per problem column, 0 = no group term
  double gamma = kInf;
};

inline SideSolver build_side(std::string name, bool transposed, int stack_offset,
                             const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                             const ConstraintSpace& sx, const ConstraintSpace& su,
                             int first_rhs_cols, const SideObjective& obj) {
  const int n_cols = sx.cols();
  SideSolver side;
  side.name = std::move(name);
  side.transposed = transposed;
  side.stack_offset = stack_offset;

  std::vector<std::vector<int>> cells;
  if (obj.has_h2) {
    cells = partition_by_noise(obj.w);
  } else {
    for (int j = 0; j < n_cols; ++j) cells.push_back({j});
  }

  const int n1 = sx.rows();
  const int n2 = su.rows();
  const Eigen::MatrixXd zero_qx = Eigen::MatrixXd::Zero(n1, n1);
  const Eigen::MatrixXd zero_ru = Eigen::MatrixXd::Zero(n2, n2);
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    const std::vector<int>& cols = cells[ci];
    std::vector<int> rhs;
    for (int j : cols) rhs.push_back(j < first_rhs_cols ? j : -1);
    Eigen::MatrixXd wc;
    if (obj.has_h2) {
      wc.resize(cols.size(), cols.size());
      for (std::size_t x = 0; x < cols.size(); ++x)
        for (std::size_t y = 0; y < cols.size(); ++y)
          wc(static_cast<int>(x), static_cast<int>(y)) = obj.w(cols[x], cols[y]);
    } else {
      wc = Eigen::MatrixXd::Zero(cols.size(), cols.size());
    }
    CellWeights weights{obj.has_h2 ? obj.qx : zero_qx, obj.has_h2 ? obj.ru : zero_ru, wc};
    SideSolver::Cell cell;
    cell.cp = build_cell_problem(a, b, sx, su, cols, rhs, weights, true);

    double group_w = 0.0;
    for (int j : cols) group_w = std::max(group_w, obj.group.size() ? obj.group(j) : 0.0);
    const bool has_ball = std::isfinite(obj.gamma);
    if (group_w > 0.0) {
      if (cols.size() != 1 || rhs[0] >= 0)
        throw std::invalid_argument(
            "group regularizer requires a decoupled homogeneous cell");
      if (has_ball)
        throw std::invalid_argument("group regularizer and l1 bound cannot share a cell");
      const int nv = static_cast<int>(cell.cp.vars.size());
      double iso = 0.0;
      if (nv > 0) {
        iso = cell.cp.H(0, 0);
        if (!cell.cp.H.isApprox(iso * Eigen::MatrixXd::Identity(nv, nv), 1e-12))
          throw std::invalid_argument(
              "group regularizer requires an isotropic quadratic; use identity "
              "output weights");
      }
      cell.kind = SideSolver::Kind::shrink;
      cell.iso_w = iso;
      cell.group_w = group_w;
    } else if (has_ball) {
      if (obj.has_h2)
        throw std::invalid_argument("l1 bound must live on the projection-only side");
      cell.kind = SideSolver::Kind::ball;
      cell.gamma = obj.gamma;
    } else {
      cell.kind = SideSolver::Kind::affine;
    }
    side.cells.push_back(std::move(cell));
  }
  return side;
}

inline void require_orthogonal(const Eigen::MatrixXd& left, const Eigen::MatrixXd& right,
                               const char* what) {
  if ((left * right.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw std::invalid_argument(std::string(what) +
                                ": cross weighting is not supported");
}

}  // namespace detail

/// Squared weighted H2 norm of a stacked response: sum_k tr(W F_k' Blk F_k).
inline double stacked_h2_sq(const FirMatrix& f, const Eigen::MatrixXd& blk,
                            const Eigen::MatrixXd& w) {
  double s = 0.0;
  for (int k = 0; k <= f.horizon(); ++k)
    s += (f.coeff(k).transpose() * blk * f.coeff(k) * w).trace();
  return s;
}

/// Pure quadratic closed loop cost of a response under the plant's own
/// performance and noise weights, without any regularizer terms.
inline double closed_loop_h2_sq(const PlantModel& p, const SystemResponse& resp) {
  const int nx = static_cast<int>(p.A.rows());
  const int nu = static_cast<int>(p.B2.cols());
  const int ny = static_cast<int>(p.C2.rows());
  Eigen::MatrixXd blk = Eigen::MatrixXd::Zero(nx + nu, nx + nu);
  blk.topLeftCorner(nx, nx) = p.C1.transpose() * p.C1;
  blk.bottomRightCorner(nu, nu) = p.D12.transpose() * p.D12;
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(nx + ny, nx + ny);
  w.topLeftCorner(nx, nx) = p.B1 * p.B1.transpose();
  w.bottomRightCorner(ny, ny) = p.D21 * p.D21.transpose();
  return stacked_h2_sq(join_response(resp), blk, w);
}

/// Localized output feedback synthesis by the duplicate-variable splitting:
/// row-constrained and column-constrained copies of the stacked response are
/// driven together, each step solving decoupled local proximal cells.
inline std::pair<SystemResponse, AdmmState> admm_solve(const OfProblem& prob,
                                                       const AdmmConfig& cfg,
                                                       const NumericPolicy& policy =
                                                           default_policy()) {
  const PlantModel& p = prob.plant;
  const int nx = static_cast<int>(p.A.rows());
  const int nu = static_cast<int>(p.B2.cols());
  const int ny = static_cast<int>(p.C2.rows());
  if (cfg.rho <= 0.0 || cfg.eps_pri <= 0.0 || cfg.eps_dual <= 0.0 || cfg.max_iter < 1)
    throw std::invalid_argument("admm_solve: config must be positive");
  if (prob.gamma <= 0.0) throw std::invalid_argument("admm_solve: gamma > 0 required");
  if (prob.S_R.rows() != nx || prob.S_R.cols() != nx || prob.S_N.rows() != nx ||
      prob.S_N.cols() != ny || prob.S_M.rows() != nu || prob.S_M.cols() != nx ||
      prob.S_L.rows() != nu || prob.S_L.cols() != ny)
    throw std::invalid_argument("admm_solve: constraint space shapes do not match plant");

  Eigen::VectorXd mu = prob.reg.mu.size() ? prob.reg.mu : Eigen::VectorXd::Zero(nu);
  Eigen::VectorXd lambda =
      prob.reg.lambda.size() ? prob.reg.lambda : Eigen::VectorXd::Zero(ny);
  if (mu.size() != nu || lambda.size() != ny)
    throw std::invalid_argument("admm_solve: regularizer weight counts");
  const double mu_max = mu.size() ? mu.maxCoeff() : 0.0;
  const double lambda_max = lambda.size() ? lambda.maxCoeff() : 0.0;
  if ((mu.size() && mu.minCoeff() < 0.0) || (lambda.size() && lambda.minCoeff() < 0.0))
    throw std::invalid_argument("admm_solve: weights must be nonnegative");
  if (std::isfinite(prob.gamma) && (mu_max > 0.0 || lambda_max > 0.0))
    throw std::invalid_argument(
        "admm_solve: the l1 bound and group regularizers cannot be combined");

  detail::require_orthogonal(p.C1.transpose(), p.D12.transpose(), "admm_solve: C1'D12");
  const Eigen::MatrixXd qx = p.C1.transpose() * p.C1;
  const Eigen::MatrixXd ru = p.D12.transpose() * p.D12;
  Eigen::MatrixXd w_cols = Eigen::MatrixXd::Zero(nx + ny, nx + ny);
  w_cols.topLeftCorner(nx, nx) = p.B1 * p.B1.transpose();
  w_cols.bottomRightCorner(ny, ny) = p.D21 * p.D21.transpose();
  Eigen::MatrixXd w_rows = Eigen::MatrixXd::Zero(nx + nu, nx + nu);
  w_rows.topLeftCorner(nx, nx) = qx;
  w_rows.bottomRightCorner(nu, nu) = ru;

  // Column side: the forward dynamics constraint over stacked columns.
  detail::SideObjective col_obj;
  col_obj.group = Eigen::VectorXd::Zero(nx + ny);
  col_obj.group.tail(ny) = lambda;
  // Row side: the information-flow constraint over stacked rows, transposed.
  detail::SideObjective row_obj;
  row_obj.group = Eigen::VectorXd::Zero(nx + nu);
  row_obj.group.tail(nu) = mu;
  row_obj.gamma = prob.gamma;
  if (prob.h2_side == H2Side::column) {
    col_obj.has_h2 = true;
    col_obj.qx = qx;
    col_obj.ru = ru;
    col_obj.w = w_cols;
  } else {
    row_obj.has_h2 = true;
    row_obj.qx = p.B1 * p.B1.transpose();
    row_obj.ru = p.D21 * p.D21.transpose();
    row_obj.w = w_rows;
  }

  const ConstraintSpace sx_col = space_hcat(prob.S_R, prob.S_N);
  const ConstraintSpace su_col = space_hcat(prob.S_M, prob.S_L);
  const ConstraintSpace sx_row =
      space_hcat(transpose_space(prob.S_R), transpose_space(prob.S_M));
  const ConstraintSpace su_row =
      space_hcat(transpose_space(prob.S_N), transpose_space(prob.S_L));
  const ConstraintSpace stacked_space = space_vcat(sx_col, su_col);
  const int T = stacked_space.horizon();

  detail::SideSolver col_side = detail::build_side("column", false, nx, p.A, p.B2, sx_col,
                                                   su_col, nx, col_obj);
  detail::SideSolver row_side =
      detail::build_side("row", true, nx, p.A.transpose(), p.C2.transpose(), sx_row,
                         su_row, nx, row_obj);

  AdmmState state;
  state.phi = FirMatrix(nx + nu, nx + ny, T);
  state.psi = FirMatrix(nx + nu, nx + ny, T);
  state.lam = FirMatrix(nx + nu, nx + ny, T);

  for (int iter = 1; iter <= cfg.max_iter; ++iter) {
    state.phi = row_side.prox(fir_sub(state.psi, state.lam), cfg.rho, cfg.workers, policy);
    const FirMatrix psi_prev = state.psi;
    state.psi = col_side.prox(fir_add(state.phi, state.lam), cfg.rho, cfg.workers, policy);
    state.lam = fir_add(state.lam, fir_sub(state.phi, state.psi));
    state.iterations = iter;

    const double primal = fir_sub(state.phi, state.psi).h2_norm();
    const double dual = fir_sub(state.psi, psi_prev).h2_norm();
    state.primal_hist.push_back(primal);
    state.dual_hist.push_back(dual);
    const SystemResponse snap = split_response(state.psi, nx, nu, ny);
    state.objective_hist.push_back(stacked_h2_sq(state.psi, w_rows, w_cols) +
                                   actuator_norm(split_response(state.phi, nx, nu, ny), mu) +
                                   sensor_norm(snap, lambda));
    if (cfg.observer) cfg.observer(iter, state.phi, state.psi, state.lam);

    if (primal < cfg.eps_pri && dual < cfg.eps_dual) {
      state.status = AdmmStatus::converged;
      break;
    }
    const std::size_t n = state.primal_hist.size();
    if (primal > 1e6 ||
        (n > 200 && primal > 10.0 * state.primal_hist[n - 201] &&
         state.primal_hist[n - 201] > 0.0)) {
      state.status = AdmmStatus::diverged;
      break;
    }
  }
  state.cache_hits = col_side.total_hits() + row_side.total_hits();
  state.cache_misses = col_side.total_misses() + row_side.total_misses();

  const FirMatrix clean = zero_outside(state.psi, stacked_space);
  return {split_response(clean, nx, nu, ny), std::move(state)};
}

/// Localized quadratic-Gaussian synthesis: the plain objective, no regularizers.
inline std::pair<SystemResponse, AdmmState> llqg_solve(const PlantModel& plant,
                                                       const ConstraintSpace& s_r,
                                                       const ConstraintSpace& s_n,
                                                       const ConstraintSpace& s_m,
                                                       const ConstraintSpace& s_l,
                                                       const AdmmConfig& cfg = {}) {
  OfProblem prob;
  prob.plant = plant;
  prob.S_R = s_r;
  prob.S_N = s_n;
  prob.S_M = s_m;
  prob.S_L = s_l;
  return admm_solve(prob, cfg);
}

/// Quadratic objective with joint sensor/actuator group regularization.
inline std::pair<SystemResponse, AdmmState> h2_joint_reg_solve(const OfProblem& prob,
                                                               const AdmmConfig& cfg = {}) {
  if (std::isfinite(prob.gamma))
    throw std::invalid_argument("h2_joint_reg_solve: gamma not supported here");
  return admm_solve(prob, cfg);
}

/// Quadratic objective under a worst-case row l1 bound.
inline std::pair<SystemResponse, AdmmState> mixed_h2_l1_solve(const OfProblem& prob,
                                                              const AdmmConfig& cfg = {}) {
  if ((prob.reg.mu.size() && prob.reg.mu.maxCoeff() > 0.0) ||
      (prob.reg.lambda.size() && prob.reg.lambda.maxCoeff() > 0.0))
    throw std::invalid_argument("mixed_h2_l1_solve: group weights not supported here");
  return admm_solve(prob, cfg);
}

}  // namespace slskit
