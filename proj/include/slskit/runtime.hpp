#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <stdexcept>
#include <string>
#include <vector>

#include "fir.hpp"
#include "numeric.hpp"
#include "plant.hpp"
#include "rng.hpp"

namespace slskit {

/// Realization of the state feedback response pair as a causal controller.
/// Internally the reference recursion consumes R[2..T] and the control sum
/// consumes M[1..T]; both histories are exact FIFO rings of length T.
class SfController {
 public:
  SfController(FirMatrix r, FirMatrix m) : R_(std::move(r)), M_(std::move(m)) {
    if (R_.rows() != R_.cols() || M_.cols() != R_.cols())
      throw std::invalid_argument("sf controller: dimension mismatch");
    if (!R_.coeff(0).isZero(0.0) || !M_.coeff(0).isZero(0.0))
      throw std::invalid_argument("sf controller: R and M must be strictly proper");
    T_ = std::max(R_.horizon(), M_.horizon());
    reset();
  }

  int nx() const { return R_.rows(); }
  int nu() const { return M_.rows(); }
  int horizon() const { return T_; }

  void reset() {
    x_r_ = Eigen::VectorXd::Zero(nx());
    w_e_ = Eigen::VectorXd::Zero(nx());
    hist_a_.assign(static_cast<std::size_t>(T_), Eigen::VectorXd::Zero(nx()));
    hist_b_.assign(static_cast<std::size_t>(T_), Eigen::VectorXd::Zero(nx()));
  }

  /// One control step at the measured state, with optional perturbations on
  /// the reference recursion input (v_R) and the control sum input (v_M).
  Eigen::VectorXd step(const Eigen::VectorXd& x_meas,
                       const Eigen::VectorXd& v_r = Eigen::VectorXd(),
                       const Eigen::VectorXd& v_m = Eigen::VectorXd()) {
    if (x_meas.size() != nx()) throw std::invalid_argument("sf step: state dimension");
    w_e_ = x_meas - x_r_;
    Eigen::VectorXd a = w_e_;
    if (v_r.size()) a += v_r;
    Eigen::VectorXd b = w_e_;
    if (v_m.size()) b += v_m;

    Eigen::VectorXd u = M_.coeff_or_zero(1) * b;
    for (int tau = 1; tau <= T_ - 1; ++tau)
      u += M_.coeff_or_zero(tau + 1) * hist_b_[static_cast<std::size_t>(tau - 1)];
    Eigen::VectorXd next_ref = R_.coeff_or_zero(2) * a;
    for (int tau = 1; tau <= T_ - 2; ++tau)
      next_ref += R_.coeff_or_zero(tau + 2) * hist_a_[static_cast<std::size_t>(tau - 1)];

    hist_a_.push_front(std::move(a));
    hist_a_.pop_back();
    hist_b_.push_front(std::move(b));
    hist_b_.pop_back();
    x_r_ = std::move(next_ref);
    return u;
  }

  /// Disturbance estimate w_e of the latest step.
  const Eigen::VectorXd& last_error() const { return w_e_; }
  /// Internal reference x_r the next measurement will be compared against.
  const Eigen::VectorXd& reference() const { return x_r_; }

 private:
  FirMatrix R_, M_;
  int T_ = 0;
  Eigen::VectorXd x_r_, w_e_;
  std::deque<Eigen::VectorXd> hist_a_, hist_b_;
};

/// Realization of an output feedback response as a causal controller carrying
/// the internal state beta. Stores the four proper transfer parts
/// z(I - zR), -zN, zM and L; the z coefficient I - R[1] of the first one
/// vanishes for any achievable response and is dropped.
class OfController {
 public:
  explicit OfController(const SystemResponse& resp) {
    const int nx = resp.R.rows();
    const int nu = resp.M.rows();
    const int ny = resp.N.cols();
    if (resp.R.cols() != nx || resp.N.rows() != nx || resp.M.cols() != nx ||
        resp.L.rows() != nu || resp.L.cols() != ny)
      throw std::invalid_argument("of controller: dimension mismatch");
    if (!resp.R.coeff(0).isZero(0.0) || !resp.N.coeff(0).isZero(0.0) ||
        !resp.M.coeff(0).isZero(0.0))
      throw std::invalid_argument("of controller: R, N, M must be strictly proper");

    const int tr = std::max(resp.R.horizon() - 2, 0);
    rtp_ = FirMatrix(nx, nx, tr);
    for (int k = 0; k <= tr; ++k) rtp_.coeff(k) = -resp.R.coeff_or_zero(k + 2);
    const int tn = std::max(resp.N.horizon() - 1, 0);
    ntil_ = FirMatrix(nx, ny, tn);
    for (int k = 0; k <= tn; ++k) ntil_.coeff(k) = -resp.N.coeff_or_zero(k + 1);
    const int tm = std::max(resp.M.horizon() - 1, 0);
    mtil_ = FirMatrix(nu, nx, tm);
    for (int k = 0; k <= tm; ++k) mtil_.coeff(k) = resp.M.coeff_or_zero(k + 1);
    l_ = resp.L;
    reset();
  }

  int nx() const { return rtp_.rows(); }
  int nu() const { return mtil_.rows(); }
  int ny() const { return l_.cols(); }

  void reset() {
    beta_ = Eigen::VectorXd::Zero(nx());
    const int nb = std::max(mtil_.horizon(), rtp_.horizon());
    const int nyh = std::max(l_.horizon(), ntil_.horizon());
    hist_beta_.assign(static_cast<std::size_t>(nb), Eigen::VectorXd::Zero(nx()));
    hist_y_.assign(static_cast<std::size_t>(nyh), Eigen::VectorXd::Zero(ny()));
  }

  /// Internal state beta the upcoming step will use.
  const Eigen::VectorXd& beta() const { return beta_; }

  /// One control step at the measured output, with an optional perturbation
  /// added to the next internal state.
  Eigen::VectorXd step(const Eigen::VectorXd& y_meas,
                       const Eigen::VectorXd& d_beta = Eigen::VectorXd()) {
    if (y_meas.size() != ny()) throw std::invalid_argument("of step: output dimension");

    Eigen::VectorXd u = mtil_.coeff(0) * beta_ + l_.coeff(0) * y_meas;
    for (int tau = 1; tau <= mtil_.horizon(); ++tau)
      u += mtil_.coeff(tau) * hist_beta_[static_cast<std::size_t>(tau - 1)];
    for (int tau = 1; tau <= l_.horizon(); ++tau)
      u += l_.coeff(tau) * hist_y_[static_cast<std::size_t>(tau - 1)];

    Eigen::VectorXd next = rtp_.coeff(0) * beta_ + ntil_.coeff(0) * y_meas;
    for (int tau = 1; tau <= rtp_.horizon(); ++tau)
      next += rtp_.coeff(tau) * hist_beta_[static_cast<std::size_t>(tau - 1)];
    for (int tau = 1; tau <= ntil_.horizon(); ++tau)
      next += ntil_.coeff(tau) * hist_y_[static_cast<std::size_t>(tau - 1)];
    if (d_beta.size()) next += d_beta;

    if (!hist_beta_.empty()) {
      hist_beta_.push_front(beta_);
      hist_beta_.pop_back();
    }
    if (!hist_y_.empty()) {
      hist_y_.push_front(y_meas);
      hist_y_.pop_back();
    }
    beta_ = std::move(next);
    return u;
  }

 private:
  FirMatrix rtp_, ntil_, mtil_, l_;
  Eigen::VectorXd beta_;
  std::deque<Eigen::VectorXd> hist_beta_, hist_y_;
};

/// One control step of the state feedback realization.
inline Eigen::VectorXd sf_step(SfController& ctrl, const Eigen::VectorXd& x_meas,
                               const Eigen::VectorXd& v_r = Eigen::VectorXd(),
                               const Eigen::VectorXd& v_m = Eigen::VectorXd()) {
  return ctrl.step(x_meas, v_r, v_m);
}

/// One control step of the output feedback realization.
inline Eigen::VectorXd of_step(OfController& ctrl, const Eigen::VectorXd& y_meas,
                               const Eigen::VectorXd& d_beta = Eigen::VectorXd()) {
  return ctrl.step(y_meas, d_beta);
}

/// One perturbation channel as a per-step sequence; steps beyond the stored
/// length read as zero.
using Signal = std::vector<Eigen::VectorXd>;

/// Unit impulse on one entry at one step.
inline Signal impulse_at(int dim, int entry, int step = 0) {
  if (entry < 0 || entry >= dim) throw std::invalid_argument("impulse_at: entry range");
  Signal s(static_cast<std::size_t>(step) + 1, Eigen::VectorXd::Zero(dim));
  s[static_cast<std::size_t>(step)](entry) = 1.0;
  return s;
}

/// Deterministic sequences plus optional seeded white noise. dx adds to the
/// state update, dy to the measurement, du to the applied input; v_R, v_M
/// and d_beta feed the controller internals and v_A enters the update
/// through A.
struct Injections {
  Signal dx, dy, du, v_R, v_M, v_A, d_beta;
  bool awgn_process = false;  ///< adds B1 times a standard normal draw to dx
  bool awgn_sensor = false;   ///< adds D21 times a standard normal draw to dy
  std::uint64_t seed = 0;
};

/// Complete record of one closed loop run; every vector holds one entry per
/// simulated step, with x holding the pre-update state of each step.
struct SimulationTrace {
  std::vector<Eigen::VectorXd> x, u, y;
  std::vector<Eigen::VectorXd> internal;  ///< w_e (state feedback) or beta
  std::vector<Eigen::VectorXd> dx, dy, du, v_R, v_M, v_A, d_beta;
  int horizon = 0;  ///< number of steps
};

/// Largest state norm along a trace; compare against a divergence threshold.
inline double max_state_norm(const SimulationTrace& tr) {
  double worst = 0.0;
  for (const Eigen::VectorXd& v : tr.x) worst = std::max(worst, v.norm());
  return worst;
}

namespace detail {

inline Eigen::VectorXd signal_at(const Signal& s, int k, int dim, const char* name) {
  if (k < static_cast<int>(s.size())) {
    const Eigen::VectorXd& v = s[static_cast<std::size_t>(k)];
    if (v.size() != dim)
      throw std::invalid_argument(std::string(name) + ": injection dimension mismatch");
    return v;
  }
  return Eigen::VectorXd::Zero(dim);
}

inline Eigen::VectorXd normal_vec(CounterRng& rng, int dim) {
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v(i) = rng.normal();
  return v;
}

inline void require_empty(const Signal& s, const char* what) {
  if (!s.empty())
    throw std::invalid_argument(std::string(what) + ": channel not applicable here");
}

}  // namespace detail

/// Closed loop run of the state feedback controller: the controller measures
/// x + dy, the plant applies u + du and the update takes dx and A v_A.
inline SimulationTrace simulate(const PlantModel& p, SfController& ctrl,
                                const Injections& inj, int steps) {
  if (steps < 0) throw std::invalid_argument("simulate: steps >= 0");
  if (ctrl.nx() != p.nx() || ctrl.nu() != p.nu())
    throw std::invalid_argument("simulate: controller does not fit the plant");
  detail::require_empty(inj.d_beta, "simulate sf: d_beta");
  const int nx = p.nx();
  const int nu = p.nu();
  CounterRng rng(inj.seed);

  SimulationTrace tr;
  tr.horizon = steps;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(nx);
  for (int k = 0; k < steps; ++k) {
    Eigen::VectorXd dx = detail::signal_at(inj.dx, k, nx, "dx");
    if (inj.awgn_process) dx += p.B1 * detail::normal_vec(rng, static_cast<int>(p.B1.cols()));
    Eigen::VectorXd dy = detail::signal_at(inj.dy, k, nx, "dy");
    if (inj.awgn_sensor) {
      if (p.D21.rows() != nx)
        throw std::invalid_argument("simulate sf: sensor noise needs square D21");
      dy += p.D21 * detail::normal_vec(rng, static_cast<int>(p.D21.cols()));
    }
    const Eigen::VectorXd du = detail::signal_at(inj.du, k, nu, "du");
    const Eigen::VectorXd vr = detail::signal_at(inj.v_R, k, nx, "v_R");
    const Eigen::VectorXd vm = detail::signal_at(inj.v_M, k, nx, "v_M");
    const Eigen::VectorXd va = detail::signal_at(inj.v_A, k, nx, "v_A");

    const Eigen::VectorXd y = x + dy;
    const Eigen::VectorXd u = ctrl.step(y, vr, vm) + du;

    tr.x.push_back(x);
    tr.u.push_back(u);
    tr.y.push_back(y);
    tr.internal.push_back(ctrl.last_error());
    tr.dx.push_back(dx);
    tr.dy.push_back(dy);
    tr.du.push_back(du);
    tr.v_R.push_back(vr);
    tr.v_M.push_back(vm);
    tr.v_A.push_back(va);
    tr.d_beta.push_back(Eigen::VectorXd::Zero(0));

    x = p.A * x + p.B2 * u + dx + p.A * va;
  }
  return tr;
}

/// Closed loop run of the output feedback controller: y = C2 x + dy, the
/// plant applies u + du and d_beta perturbs the controller state.
inline SimulationTrace simulate(const PlantModel& p, OfController& ctrl,
                                const Injections& inj, int steps) {
  if (steps < 0) throw std::invalid_argument("simulate: steps >= 0");
  if (ctrl.nx() != p.nx() || ctrl.nu() != p.nu() || ctrl.ny() != p.ny())
    throw std::invalid_argument("simulate: controller does not fit the plant");
  detail::require_empty(inj.v_R, "simulate of: v_R");
  detail::require_empty(inj.v_M, "simulate of: v_M");
  detail::require_empty(inj.v_A, "simulate of: v_A");
  const int nx = p.nx();
  const int nu = p.nu();
  const int ny = p.ny();
  CounterRng rng(inj.seed);

  SimulationTrace tr;
  tr.horizon = steps;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(nx);
  for (int k = 0; k < steps; ++k) {
    Eigen::VectorXd dx = detail::signal_at(inj.dx, k, nx, "dx");
    if (inj.awgn_process) dx += p.B1 * detail::normal_vec(rng, static_cast<int>(p.B1.cols()));
    Eigen::VectorXd dy = detail::signal_at(inj.dy, k, ny, "dy");
    if (inj.awgn_sensor) dy += p.D21 * detail::normal_vec(rng, static_cast<int>(p.D21.cols()));
    const Eigen::VectorXd du = detail::signal_at(inj.du, k, nu, "du");
    const Eigen::VectorXd db = detail::signal_at(inj.d_beta, k, nx, "d_beta");

    const Eigen::VectorXd y = p.C2 * x + dy;
    tr.internal.push_back(ctrl.beta());
    const Eigen::VectorXd u = ctrl.step(y, db) + du;

    tr.x.push_back(x);
    tr.u.push_back(u);
    tr.y.push_back(y);
    tr.dx.push_back(dx);
    tr.dy.push_back(dy);
    tr.du.push_back(du);
    tr.v_R.push_back(Eigen::VectorXd::Zero(0));
    tr.v_M.push_back(Eigen::VectorXd::Zero(0));
    tr.v_A.push_back(Eigen::VectorXd::Zero(0));
    tr.d_beta.push_back(db);

    x = p.A * x + p.B2 * u + dx;
  }
  return tr;
}

/// Open loop run: the applied input is the du channel alone.
inline SimulationTrace simulate(const PlantModel& p, const Injections& inj, int steps) {
  if (steps < 0) throw std::invalid_argument("simulate: steps >= 0");
  const int nx = p.nx();
  const int nu = p.nu();
  const int ny = p.ny();
  CounterRng rng(inj.seed);

  SimulationTrace tr;
  tr.horizon = steps;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(nx);
  for (int k = 0; k < steps; ++k) {
    Eigen::VectorXd dx = detail::signal_at(inj.dx, k, nx, "dx");
    if (inj.awgn_process) dx += p.B1 * detail::normal_vec(rng, static_cast<int>(p.B1.cols()));
    Eigen::VectorXd dy = detail::signal_at(inj.dy, k, ny, "dy");
    if (inj.awgn_sensor) dy += p.D21 * detail::normal_vec(rng, static_cast<int>(p.D21.cols()));
    const Eigen::VectorXd u = detail::signal_at(inj.du, k, nu, "du");

    tr.x.push_back(x);
    tr.u.push_back(u);
    tr.y.push_back(p.C2 * x + dy);
    tr.internal.push_back(Eigen::VectorXd::Zero(0));
    tr.dx.push_back(dx);
    tr.dy.push_back(dy);
    tr.du.push_back(u);
    tr.v_R.push_back(Eigen::VectorXd::Zero(0));
    tr.v_M.push_back(Eigen::VectorXd::Zero(0));
    tr.v_A.push_back(Eigen::VectorXd::Zero(0));
    tr.d_beta.push_back(Eigen::VectorXd::Zero(0));

    x = p.A * x + p.B2 * u + dx;
  }
  return tr;
}

/// The 18 closed loop maps from perturbation channels to internal variables,
/// built once by transfer algebra and once by impulse simulation so the table
/// is self-verifying. Rows: w_e, x, u. Columns: w, v_x, v_u, v_R, v_M, v_A.
struct PerturbationMaps {
  std::array<std::array<FirMatrix, 6>, 3> analytic;
  std::array<std::array<FirMatrix, 6>, 3> simulated;
  double max_deviation = 0.0;

  static const char* row_name(int r) {
    static const char* names[3] = {"w_e", "x", "u"};
    return names[r];
  }
  static const char* col_name(int c) {
    static const char* names[6] = {"w", "v_x", "v_u", "v_R", "v_M", "v_A"};
    return names[c];
  }
};

namespace detail {

inline FirMatrix const_fir(const Eigen::MatrixXd& m) {
  FirMatrix f(static_cast<int>(m.rows()), static_cast<int>(m.cols()), 0);
  f.coeff(0) = m;
  return f;
}

}  // namespace detail

inline PerturbationMaps perturbation_maps(const PlantModel& p, const FirMatrix& r,
                                          const FirMatrix& m,
                                          const NumericPolicy& policy = default_policy()) {
  const int nx = p.nx();
  const int nu = p.nu();
  const double res = sf_residual(p.A, p.B2, r, m).h2_norm();
  if (!feasible_residual(res, 1.0, policy))
    throw std::invalid_argument("perturbation_maps: response fails achievability");

  // rt = zR - I and mt = zM; both drop one delay off the response.
  FirMatrix rt = fir_advance(r, 1);
  rt.coeff(0) -= Eigen::MatrixXd::Identity(nx, nx);
  const FirMatrix mt = fir_advance(m, 1);

  const FirMatrix i_x = detail::const_fir(Eigen::MatrixXd::Identity(nx, nx));
  const FirMatrix i_u = detail::const_fir(Eigen::MatrixXd::Identity(nu, nu));
  const FirMatrix delay_i = fir_delay(i_x, 1);
  const FirMatrix delay_a = fir_delay(detail::const_fir(p.A), 1);
  const FirMatrix delay_b2 = fir_delay(detail::const_fir(p.B2), 1);
  const FirMatrix i_minus_da = fir_sub(i_x, delay_a);
  const FirMatrix rt_minus_ra = fir_sub(rt, right_mul(r, p.A));
  const FirMatrix mt_minus_ma = fir_sub(mt, right_mul(m, p.A));
  const FirMatrix i_plus_mb2 = fir_add(i_u, right_mul(m, p.B2));

  PerturbationMaps maps;
  maps.analytic[0] = {delay_i,
                      i_minus_da,
                      delay_b2,
                      fir_scale(fir_mul(i_minus_da, rt), -1.0),
                      fir_delay(left_mul(p.B2, mt), 1),
                      delay_a};
  maps.analytic[1] = {r,
                      rt_minus_ra,
                      right_mul(r, p.B2),
                      fir_scale(fir_mul(rt_minus_ra, rt), -1.0),
                      fir_mul(right_mul(r, p.B2), mt),
                      right_mul(r, p.A)};
  maps.analytic[2] = {m,
                      mt_minus_ma,
                      i_plus_mb2,
                      fir_scale(fir_mul(mt_minus_ma, rt), -1.0),
                      fir_mul(i_plus_mb2, mt),
                      right_mul(m, p.A)};

  const int in_dim[6] = {nx, nx, nu, nx, nu, nx};
  for (int c = 0; c < 6; ++c) {
    int horizon = 0;
    for (int rr = 0; rr < 3; ++rr)
      horizon = std::max(horizon, maps.analytic[rr][c].horizon());
    maps.simulated[0][c] = FirMatrix(nx, in_dim[c], horizon);
    maps.simulated[1][c] = FirMatrix(nx, in_dim[c], horizon);
    maps.simulated[2][c] = FirMatrix(nu, in_dim[c], horizon);

    for (int j = 0; j < in_dim[c]; ++j) {
      Injections inj;
      Signal pulse = impulse_at(in_dim[c], j);
      switch (c) {
        case 0: inj.dx = pulse; break;
        case 1: inj.dy = pulse; break;
        case 2: inj.du = pulse; break;
        case 3: inj.v_R = pulse; break;
        case 4: inj.v_M = pulse; break;
        case 5: inj.v_A = pulse; break;
      }
      SfController ctrl(r, m);
      const SimulationTrace trace = simulate(p, ctrl, inj, horizon + 1);
      for (int k = 0; k <= horizon; ++k) {
        maps.simulated[0][c].coeff(k).col(j) = trace.internal[static_cast<std::size_t>(k)];
        maps.simulated[1][c].coeff(k).col(j) = trace.x[static_cast<std::size_t>(k)];
        maps.simulated[2][c].coeff(k).col(j) = trace.u[static_cast<std::size_t>(k)];
      }
    }
    for (int rr = 0; rr < 3; ++rr)
      maps.max_deviation =
          std::max(maps.max_deviation, max_abs_diff(maps.analytic[rr][c], maps.simulated[rr][c]));
  }
  return maps;
}

/// Achievability defect of (R, M) against a possibly different plant:
/// (zI - A) R - B2 M - I. A response designed for the nominal model leaves
/// exactly the model mismatch here; the leading coefficient R[1] - I is
/// snapped to exact zero when it is numerical dust so the result stays
/// strictly proper.
inline FirMatrix compute_delta_rm(const Eigen::MatrixXd& a_true,
                                  const Eigen::MatrixXd& b2_true, const FirMatrix& r,
                                  const FirMatrix& m,
                                  const NumericPolicy& policy = default_policy()) {
  if (a_true.rows() != r.rows() || b2_true.rows() != r.rows() || b2_true.cols() != m.rows())
    throw std::invalid_argument("compute_delta_rm: dimension mismatch");
  FirMatrix delta = sf_residual(a_true, b2_true, r, m);
  if (delta.coeff(0).cwiseAbs().maxCoeff() <= policy.feas_tol)
    delta.coeff(0).setZero();
  return delta;
}

enum class RobustVerdict { stable, unstable, inconclusive };

struct RobustnessReport {
  RobustVerdict verdict = RobustVerdict::inconclusive;
  double radius = 0.0;  ///< spectral radius of the companion form
  double margin = 0.0;
};

/// Internal stability of the perturbed loop: (I + Delta)^{-1} must be stable.
/// A radius within the margin band around one is declared inconclusive
/// rather than guessed.
inline RobustnessReport robust_stability(const FirMatrix& delta, double margin = 0.001) {
  if (margin < 0.0 || margin >= 1.0)
    throw std::invalid_argument("robust_stability: margin in [0, 1)");
  const StabilityReport rep = inverse_stability(delta, margin);
  RobustnessReport out;
  out.radius = rep.radius;
  out.margin = margin;
  if (rep.radius < 1.0 - margin)
    out.verdict = RobustVerdict::stable;
  else if (rep.radius > 1.0 + margin)
    out.verdict = RobustVerdict::unstable;
  else
    out.verdict = RobustVerdict::inconclusive;
  return out;
}

}  // namespace slskit
