#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <stdexcept>
#include <utility>
#include <vector>

#include "numeric.hpp"
#include "sparsity.hpp"

namespace slskit {

/// Matrix FIR transfer function in 1/z: G(z) = sum_{k=0}^{T} G[k] z^-k.
/// Strictly proper objects simply keep G[0] = 0.
class FirMatrix {
 public:
  FirMatrix() = default;
  FirMatrix(int rows, int cols, int horizon)
      : coeffs_(static_cast<std::size_t>(horizon) + 1, Eigen::MatrixXd::Zero(rows, cols)) {
    if (rows < 0 || cols < 0 || horizon < 0)
      throw std::invalid_argument("FirMatrix: nonnegative dims and horizon required");
  }

  static FirMatrix from_coeffs(std::vector<Eigen::MatrixXd> coeffs) {
    if (coeffs.empty()) throw std::invalid_argument("FirMatrix: need at least one coefficient");
    FirMatrix f;
    for (const auto& c : coeffs)
      if (c.rows() != coeffs.front().rows() || c.cols() != coeffs.front().cols())
        throw std::invalid_argument("FirMatrix: coefficient dims differ");
    f.coeffs_ = std::move(coeffs);
    return f;
  }

  /// Single term m z^-k.
  static FirMatrix single(const Eigen::MatrixXd& m, int k) {
    FirMatrix f(static_cast<int>(m.rows()), static_cast<int>(m.cols()), k);
    f.coeff(k) = m;
    return f;
  }

  static FirMatrix identity(int n) { return single(Eigen::MatrixXd::Identity(n, n), 0); }

  int rows() const { return static_cast<int>(coeffs_.front().rows()); }
  int cols() const { return static_cast<int>(coeffs_.front().cols()); }
  int horizon() const { return static_cast<int>(coeffs_.size()) - 1; }

  const Eigen::MatrixXd& coeff(int k) const { return coeffs_.at(static_cast<std::size_t>(k)); }
  Eigen::MatrixXd& coeff(int k) { return coeffs_.at(static_cast<std::size_t>(k)); }

  Eigen::MatrixXd coeff_or_zero(int k) const {
    if (k < 0 || k > horizon()) return Eigen::MatrixXd::Zero(rows(), cols());
    return coeffs_[static_cast<std::size_t>(k)];
  }

  /// Pad with zero coefficients up to the given horizon (never truncates).
  FirMatrix padded(int horizon) const {
    if (horizon < this->horizon()) throw std::invalid_argument("padded: smaller horizon");
    FirMatrix out(rows(), cols(), horizon);
    for (int k = 0; k <= this->horizon(); ++k) out.coeff(k) = coeff(k);
    return out;
  }

  /// Drop trailing exactly-zero coefficients, keeping at least component 0.
  FirMatrix trimmed() const {
    int t = horizon();
    while (t > 0 && coeff(t).isZero(0.0)) --t;
    FirMatrix out(rows(), cols(), t);
    for (int k = 0; k <= t; ++k) out.coeff(k) = coeff(k);
    return out;
  }

  /// Per-coefficient block copy.
  FirMatrix block(int i0, int j0, int r, int c) const {
    FirMatrix out(r, c, horizon());
    for (int k = 0; k <= horizon(); ++k) out.coeff(k) = coeff(k).block(i0, j0, r, c);
    return out;
  }

  void set_block(int i0, int j0, const FirMatrix& sub) {
    if (sub.horizon() > horizon()) throw std::invalid_argument("set_block: horizon overflow");
    for (int k = 0; k <= sub.horizon(); ++k)
      coeff(k).block(i0, j0, sub.rows(), sub.cols()) = sub.coeff(k);
  }

  bool is_zero() const {
    for (const auto& c : coeffs_)
      if (!c.isZero(0.0)) return false;
    return true;
  }

  /// Sum of squared coefficient entries: the squared H2 norm seen as a map from
  /// unit white noise.
  double h2_norm_sq() const {
    double s = 0.0;
    for (const auto& c : coeffs_) s += c.squaredNorm();
    return s;
  }

  double h2_norm() const { return std::sqrt(h2_norm_sq()); }

  /// Sum of absolute values over every coefficient entry.
  double el1_norm() const {
    double s = 0.0;
    for (const auto& c : coeffs_) s += c.cwiseAbs().sum();
    return s;
  }

  /// Worst row absolute coefficient sum: peak output for unit peak input.
  double l1_induced_norm() const {
    double worst = 0.0;
    for (int i = 0; i < rows(); ++i) worst = std::max(worst, row_abs_sum(i));
    return worst;
  }

  /// Absolute coefficient sum of one row.
  double row_abs_sum(int i) const {
    double row = 0.0;
    for (const auto& c : coeffs_) row += c.row(i).cwiseAbs().sum();
    return row;
  }

  double row_h2_norm(int i) const {
    double s = 0.0;
    for (const auto& c : coeffs_) s += c.row(i).squaredNorm();
    return std::sqrt(s);
  }

  double col_h2_norm(int j) const {
    double s = 0.0;
    for (const auto& c : coeffs_) s += c.col(j).squaredNorm();
    return std::sqrt(s);
  }

  double max_abs() const {
    double m = 0.0;
    for (const auto& c : coeffs_)
      if (c.size() > 0) m = std::max(m, c.cwiseAbs().maxCoeff());
    return m;
  }

 private:
  std::vector<Eigen::MatrixXd> coeffs_;
};

inline void check_same_shape(const FirMatrix& a, const FirMatrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

inline FirMatrix fir_add(const FirMatrix& a, const FirMatrix& b) {
  check_same_shape(a, b, "fir_add");
  FirMatrix out(a.rows(), a.cols(), std::max(a.horizon(), b.horizon()));
  for (int k = 0; k <= out.horizon(); ++k) out.coeff(k) = a.coeff_or_zero(k) + b.coeff_or_zero(k);
  return out;
}

inline FirMatrix fir_sub(const FirMatrix& a, const FirMatrix& b) {
  check_same_shape(a, b, "fir_sub");
  FirMatrix out(a.rows(), a.cols(), std::max(a.horizon(), b.horizon()));
  for (int k = 0; k <= out.horizon(); ++k) out.coeff(k) = a.coeff_or_zero(k) - b.coeff_or_zero(k);
  return out;
}

inline FirMatrix fir_scale(const FirMatrix& a, double s) {
  FirMatrix out(a.rows(), a.cols(), a.horizon());
  for (int k = 0; k <= a.horizon(); ++k) out.coeff(k) = s * a.coeff(k);
  return out;
}

/// Convolution product; horizon is the exact sum of horizons.
inline FirMatrix fir_mul(const FirMatrix& a, const FirMatrix& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("fir_mul: inner dim mismatch");
  FirMatrix out(a.rows(), b.cols(), a.horizon() + b.horizon());
  for (int i = 0; i <= a.horizon(); ++i)
    for (int j = 0; j <= b.horizon(); ++j) out.coeff(i + j) += a.coeff(i) * b.coeff(j);
  return out;
}

inline FirMatrix fir_transpose(const FirMatrix& a) {
  FirMatrix out(a.cols(), a.rows(), a.horizon());
  for (int k = 0; k <= a.horizon(); ++k) out.coeff(k) = a.coeff(k).transpose();
  return out;
}

inline FirMatrix left_mul(const Eigen::MatrixXd& m, const FirMatrix& a) {
  if (m.cols() != a.rows()) throw std::invalid_argument("left_mul: dim mismatch");
  FirMatrix out(static_cast<int>(m.rows()), a.cols(), a.horizon());
  for (int k = 0; k <= a.horizon(); ++k) out.coeff(k) = m * a.coeff(k);
  return out;
}

inline FirMatrix right_mul(const FirMatrix& a, const Eigen::MatrixXd& m) {
  if (a.cols() != m.rows()) throw std::invalid_argument("right_mul: dim mismatch");
  FirMatrix out(a.rows(), static_cast<int>(m.cols()), a.horizon());
  for (int k = 0; k <= a.horizon(); ++k) out.coeff(k) = a.coeff(k) * m;
  return out;
}

/// Multiply by z^-s.
inline FirMatrix fir_delay(const FirMatrix& a, int s) {
  if (s < 0) throw std::invalid_argument("fir_delay: s >= 0 required");
  FirMatrix out(a.rows(), a.cols(), a.horizon() + s);
  for (int k = 0; k <= a.horizon(); ++k) out.coeff(k + s) = a.coeff(k);
  return out;
}

/// Multiply by z^+s; the s leading coefficients must be exactly zero.
inline FirMatrix fir_advance(const FirMatrix& a, int s) {
  if (s < 0) throw std::invalid_argument("fir_advance: s >= 0 required");
  if (s > a.horizon()) throw std::invalid_argument("fir_advance: beyond horizon");
  for (int k = 0; k < s; ++k)
    if (!a.coeff(k).isZero(0.0)) throw std::invalid_argument("fir_advance: nonzero leading term");
  FirMatrix out(a.rows(), a.cols(), a.horizon() - s);
  for (int k = 0; k <= out.horizon(); ++k) out.coeff(k) = a.coeff(k + s);
  return out;
}

inline FirMatrix fir_vcat(const FirMatrix& top, const FirMatrix& bottom) {
  if (top.cols() != bottom.cols()) throw std::invalid_argument("fir_vcat: col mismatch");
  FirMatrix out(top.rows() + bottom.rows(), top.cols(), std::max(top.horizon(), bottom.horizon()));
  for (int k = 0; k <= out.horizon(); ++k) {
    out.coeff(k).topRows(top.rows()) = top.coeff_or_zero(k);
    out.coeff(k).bottomRows(bottom.rows()) = bottom.coeff_or_zero(k);
  }
  return out;
}

inline FirMatrix fir_hcat(const FirMatrix& left, const FirMatrix& right) {
  if (left.rows() != right.rows()) throw std::invalid_argument("fir_hcat: row mismatch");
  FirMatrix out(left.rows(), left.cols() + right.cols(), std::max(left.horizon(), right.horizon()));
  for (int k = 0; k <= out.horizon(); ++k) {
    out.coeff(k).leftCols(left.cols()) = left.coeff_or_zero(k);
    out.coeff(k).rightCols(right.cols()) = right.coeff_or_zero(k);
  }
  return out;
}

inline double max_abs_diff(const FirMatrix& a, const FirMatrix& b) {
  return fir_sub(a, b).max_abs();
}

/// Largest magnitude outside the allowed pattern (components beyond the space
/// horizon count in full).
inline double max_outside(const FirMatrix& f, const ConstraintSpace& space) {
  if (f.rows() != space.rows() || f.cols() != space.cols())
    throw std::invalid_argument("max_outside: shape mismatch");
  double worst = 0.0;
  for (int k = 0; k <= f.horizon(); ++k) {
    const SparsityPattern allowed = space.comp_or_zero(k);
    for (int i = 0; i < f.rows(); ++i)
      for (int j = 0; j < f.cols(); ++j)
        if (!allowed.at(i, j)) worst = std::max(worst, std::abs(f.coeff(k)(i, j)));
  }
  return worst;
}

/// True when the transfer function lies in the constraint space up to tol.
inline bool membership(const FirMatrix& f, const ConstraintSpace& space,
                       double tol = default_policy().abs_tol) {
  return max_outside(f, space) <= tol;
}

/// Copy with entries outside the allowed pattern forced to exact zero.
inline FirMatrix zero_outside(const FirMatrix& f, const ConstraintSpace& space) {
  FirMatrix out = f;
  for (int k = 0; k <= f.horizon(); ++k) {
    const SparsityPattern allowed = space.comp_or_zero(k);
    for (int i = 0; i < f.rows(); ++i)
      for (int j = 0; j < f.cols(); ++j)
        if (!allowed.at(i, j)) out.coeff(k)(i, j) = 0.0;
  }
  return out;
}

/// Closed-loop response maps for state feedback (disturbance to state and input).
struct SfResponse {
  FirMatrix R;
  FirMatrix M;
};

/// Closed-loop response maps for output feedback, blockwise
/// [state-from-process  state-from-sensor; input-from-process  input-from-sensor].
struct SystemResponse {
  FirMatrix R;
  FirMatrix N;
  FirMatrix M;
  FirMatrix L;
};

inline FirMatrix join_response(const SystemResponse& r) {
  return fir_vcat(fir_hcat(r.R, r.N), fir_hcat(r.M, r.L));
}

inline SystemResponse split_response(const FirMatrix& f, int nx, int nu, int ny) {
  if (f.rows() != nx + nu || f.cols() != nx + ny)
    throw std::invalid_argument("split_response: shape mismatch");
  return SystemResponse{f.block(0, 0, nx, nx), f.block(0, nx, nx, ny),
                        f.block(nx, 0, nu, nx), f.block(nx, nx, nu, ny)};
}

/// Coefficients of (zI - A) X - B U for strictly proper X: component k is
/// X[k+1] - A X[k] - B U[k], defined for k = 0..max horizon.
inline FirMatrix dynamics_lhs(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                              const FirMatrix& x, const FirMatrix& u) {
  if (!x.coeff(0).isZero(0.0))
    throw std::invalid_argument("dynamics_lhs: X must be strictly proper");
  const int T = std::max(x.horizon(), u.horizon());
  FirMatrix out(x.rows(), x.cols(), T);
  for (int k = 0; k <= T; ++k)
    out.coeff(k) = x.coeff_or_zero(k + 1) - a * x.coeff_or_zero(k) - b * u.coeff_or_zero(k);
  return out;
}

/// Coefficients of X (zI - A) - Y C for strictly proper X: component k is
/// X[k+1] - X[k] A - Y[k] C.
inline FirMatrix dynamics_lhs_right(const Eigen::MatrixXd& a, const Eigen::MatrixXd& c,
                                    const FirMatrix& x, const FirMatrix& y) {
  if (!x.coeff(0).isZero(0.0))
    throw std::invalid_argument("dynamics_lhs_right: X must be strictly proper");
  const int T = std::max(x.horizon(), y.horizon());
  FirMatrix out(x.rows(), x.cols(), T);
  for (int k = 0; k <= T; ++k)
    out.coeff(k) = x.coeff_or_zero(k + 1) - x.coeff_or_zero(k) * a - y.coeff_or_zero(k) * c;
  return out;
}

/// Residual of the state feedback achievability equations: (zI - A) R - B2 M - I.
/// Zero exactly when the pair (R, M) is a valid closed-loop response.
inline FirMatrix sf_residual(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b2,
                             const FirMatrix& r, const FirMatrix& m) {
  FirMatrix lhs = dynamics_lhs(a, b2, r, m);
  lhs.coeff(0) -= Eigen::MatrixXd::Identity(lhs.rows(), lhs.cols());
  return lhs;
}

/// Residuals of both output feedback achievability equations.
struct OfResidual {
  FirMatrix column_eq;  ///< (zI - A) [R N] - B2 [M L] - [I 0]
  FirMatrix row_eq;     ///< [R; M] (zI - A) - [N; L] C2 - [I; 0]
  double max_norm() const { return std::max(column_eq.h2_norm(), row_eq.h2_norm()); }
};

inline OfResidual of_residual(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b2,
                              const Eigen::MatrixXd& c2, const SystemResponse& resp) {
  const int nx = static_cast<int>(a.rows());
  FirMatrix col_x = sf_residual(a, b2, resp.R, resp.M);
  FirMatrix col_y = dynamics_lhs(a, b2, resp.N, resp.L);
  FirMatrix row_x = dynamics_lhs_right(a, c2, resp.R, resp.N);
  row_x.coeff(0) -= Eigen::MatrixXd::Identity(nx, nx);
  FirMatrix row_u = dynamics_lhs_right(a, c2, resp.M, resp.L);
  return OfResidual{fir_hcat(col_x, col_y), fir_vcat(row_x, row_u)};
}

/// Output feedback response from a state feedback pair (R1, M1) and a state
/// estimation pair (R2, N2). Declared horizon is T1 + T2 + 1; the top corner of
/// the first state coefficient is the identity whenever the inputs are valid.
inline SystemResponse compose_of_from_sf_est(const FirMatrix& r1, const FirMatrix& m1,
                                             const FirMatrix& r2, const FirMatrix& n2,
                                             const Eigen::MatrixXd& a) {
  const int T = r1.horizon() + std::max(r2.horizon(), n2.horizon()) + 1;
  const Eigen::MatrixXd zero_b = Eigen::MatrixXd::Zero(a.rows(), 1);
  const FirMatrix zero_u(static_cast<int>(a.rows()), 1, 0);
  // (zI - A) R2 and (zI - A) N2, both proper because R2, N2 are strictly proper.
  FirMatrix g2 = dynamics_lhs(a, zero_b, r2, FirMatrix(1, static_cast<int>(r2.cols()), 0));
  FirMatrix gn = dynamics_lhs(a, zero_b, n2, FirMatrix(1, static_cast<int>(n2.cols()), 0));
  SystemResponse out{
      fir_sub(fir_add(r1, r2), fir_mul(r1, g2)).padded(T),
      fir_sub(n2, fir_mul(r1, gn)).padded(T),
      fir_sub(m1, fir_mul(m1, g2)).padded(T),
      fir_scale(fir_mul(m1, gn), -1.0).padded(T),
  };
  return out;
}

/// Output feedback response from a state feedback pair when C2 is invertible:
/// N = (R (zI - A) - I) C2^-1 and L = M (zI - A) C2^-1.
inline SystemResponse of_from_sf_via_inverse(const FirMatrix& r, const FirMatrix& m,
                                             const Eigen::MatrixXd& a,
                                             const Eigen::MatrixXd& c2) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(c2);
  if (!lu.isInvertible()) throw std::invalid_argument("of_from_sf_via_inverse: C2 singular");
  const Eigen::MatrixXd c2inv = lu.inverse();
  const int nx = static_cast<int>(a.rows());
  FirMatrix rz = dynamics_lhs_right(a, Eigen::MatrixXd::Zero(1, nx), r,
                                    FirMatrix(static_cast<int>(r.rows()), 1, 0));
  rz.coeff(0) -= Eigen::MatrixXd::Identity(nx, nx);
  FirMatrix mz = dynamics_lhs_right(a, Eigen::MatrixXd::Zero(1, nx), m,
                                    FirMatrix(static_cast<int>(m.rows()), 1, 0));
  const int T = std::max(r.horizon(), m.horizon());
  return SystemResponse{r.padded(T), right_mul(rz, c2inv).padded(T), m.padded(T),
                        right_mul(mz, c2inv).padded(T)};
}

/// Stability of (I + D)^-1 for strictly proper FIR D, decided through the block
/// companion form of the monic matrix polynomial z^T I + sum_k D[k] z^(T-k).
struct StabilityReport {
  bool stable = false;
  double radius = 0.0;  ///< spectral radius of the companion form
};

inline StabilityReport inverse_stability(const FirMatrix& d, double margin = 0.001) {
  if (!d.coeff(0).isZero(0.0))
    throw std::invalid_argument("inverse_stability: D must be strictly proper");
  if (d.rows() != d.cols()) throw std::invalid_argument("inverse_stability: square required");
  const FirMatrix trimmed = d.trimmed();
  const int n = trimmed.rows();
  const int T = trimmed.horizon();
  if (T == 0) return StabilityReport{true, 0.0};

  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(n * T, n * T);
  for (int k = 1; k <= T; ++k)
    companion.block(0, (k - 1) * n, n, n) = -trimmed.coeff(k);
  for (int b = 1; b < T; ++b)
    companion.block(b * n, (b - 1) * n, n, n) = Eigen::MatrixXd::Identity(n, n);

  Eigen::EigenSolver<Eigen::MatrixXd> es(companion, false);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("inverse_stability: eigensolver failed");
  const double radius = es.eigenvalues().cwiseAbs().maxCoeff();
  return StabilityReport{radius < 1.0 - margin, radius};
}

/// Discrete algebraic Riccati solution by damped value iteration.
struct DareOptions {
  int max_iter = 100000;
  double damping = 1.0;  ///< step fraction toward the fixed point map
};

struct DareSolution {
  Eigen::MatrixXd P;  ///< stabilizing cost-to-go matrix
  Eigen::MatrixXd K;  ///< optimal gain, u = -K x
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
  bool closed_loop_stable = false;
  /// Squared noise-to-cost transfer for unit noise on every state: trace(P).
  double cost_per_unit_noise = 0.0;
};

inline DareSolution dare_solve(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                               const Eigen::MatrixXd& q, const Eigen::MatrixXd& rw,
                               const DareOptions& opts = {},
                               const NumericPolicy& policy = default_policy()) {
  const int n = static_cast<int>(a.rows());
  if (q.rows() != n || q.cols() != n) throw std::invalid_argument("dare_solve: Q shape");
  if (rw.rows() != b.cols() || rw.cols() != b.cols())
    throw std::invalid_argument("dare_solve: R shape");
  if (opts.damping <= 0.0 || opts.damping > 1.0)
    throw std::invalid_argument("dare_solve: damping in (0, 1] required");

  DareSolution sol;
  Eigen::MatrixXd p = q;
  for (int it = 0; it < opts.max_iter; ++it) {
    Eigen::MatrixXd gram = rw + b.transpose() * p * b;
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("dare_solve: input cost gram matrix not positive definite");
    const Eigen::MatrixXd bpa = b.transpose() * p * a;
    const Eigen::MatrixXd next =
        q + a.transpose() * p * a - bpa.transpose() * llt.solve(bpa);
    const double res = (next - p).norm();
    p = p + opts.damping * (next - p);
    sol.iterations = it + 1;
    sol.residual = res;
    if (res <= policy.riccati_tol) {
      sol.converged = true;
      break;
    }
  }

  sol.P = 0.5 * (p + p.transpose());
  Eigen::MatrixXd gram = rw + b.transpose() * sol.P * b;
  sol.K = Eigen::LLT<Eigen::MatrixXd>(gram).solve(b.transpose() * sol.P * a);
  Eigen::EigenSolver<Eigen::MatrixXd> es(a - b * sol.K, false);
  sol.closed_loop_stable =
      es.info() == Eigen::Success && es.eigenvalues().cwiseAbs().maxCoeff() < 1.0;
  sol.cost_per_unit_noise = sol.P.trace();
  return sol;
}

/// Squared H2 cost of the optimal centralized controller for noise entering
/// through B1: trace(B1' P B1).
inline double lqr_h2_cost(const DareSolution& sol, const Eigen::MatrixXd& b1) {
  return (b1.transpose() * sol.P * b1).trace();
}

}  // namespace slskit
