#include <catch2/catch_amalgamated.hpp>

#include <slskit/fir.hpp>
#include <slskit/rng.hpp>

#include <cmath>
#include <vector>

using namespace slskit;

namespace {

FirMatrix scalar_fir(const std::vector<double>& coeffs) {
  std::vector<Eigen::MatrixXd> ms;
  for (double c : coeffs) {
    Eigen::MatrixXd m(1, 1);
    m << c;
    ms.push_back(m);
  }
  return FirMatrix::from_coeffs(std::move(ms));
}

FirMatrix random_int_fir(int rows, int cols, int T, CounterRng& rng) {
  FirMatrix f(rows, cols, T);
  for (int k = 0; k <= T; ++k)
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j)
        f.coeff(k)(i, j) = static_cast<double>(rng.next_below(7)) - 3.0;
  return f;
}

// Impulse response of (I + D)^-1: g[k] = delta[k] I - sum_j D[j] g[k-j].
std::vector<Eigen::MatrixXd> inverse_impulse(const FirMatrix& d, int len) {
  const int n = d.rows();
  std::vector<Eigen::MatrixXd> g;
  for (int k = 0; k < len; ++k) {
    Eigen::MatrixXd gk = k == 0 ? Eigen::MatrixXd::Identity(n, n).eval()
                                : Eigen::MatrixXd::Zero(n, n).eval();
    for (int j = 1; j <= std::min(k, d.horizon()); ++j) gk -= d.coeff(j) * g[k - j];
    g.push_back(gk);
  }
  return g;
}

}  // namespace

TEST_CASE("norms from hand sums") {
  FirMatrix f(2, 2, 2);
  f.coeff(1) << 1.0, -2.0, 0.0, 3.0;
  f.coeff(2) << 0.5, 0.0, -1.0, 0.0;
  CHECK(f.h2_norm_sq() == Catch::Approx(1 + 4 + 9 + 0.25 + 1).epsilon(1e-15));
  // Row sums: |1|+|2|+|0.5| = 3.5 and |3|+|1| = 4.
  CHECK(f.l1_induced_norm() == Catch::Approx(4.0).epsilon(1e-15));
  CHECK(f.row_abs_sum(0) == Catch::Approx(3.5).epsilon(1e-15));
  // Element-wise sum dominates the worst row.
  CHECK(f.el1_norm() == Catch::Approx(7.5).epsilon(1e-15));
  CHECK(f.l1_induced_norm() <= f.el1_norm());
  CHECK(f.row_h2_norm(0) == Catch::Approx(std::sqrt(1 + 4 + 0.25)).epsilon(1e-15));
  CHECK(f.col_h2_norm(0) == Catch::Approx(std::sqrt(1 + 0.25 + 1)).epsilon(1e-15));
  // Squared H2 splits over columns.
  CHECK(f.h2_norm_sq() ==
        Catch::Approx(f.col_h2_norm(0) * f.col_h2_norm(0) + f.col_h2_norm(1) * f.col_h2_norm(1)));
}

TEST_CASE("scalar convolution by hand") {
  FirMatrix a = scalar_fir({1.0, 2.0});
  FirMatrix b = scalar_fir({3.0, 4.0});
  FirMatrix ab = fir_mul(a, b);
  REQUIRE(ab.horizon() == 2);
  CHECK(ab.coeff(0)(0, 0) == 3.0);
  CHECK(ab.coeff(1)(0, 0) == 10.0);
  CHECK(ab.coeff(2)(0, 0) == 8.0);
}

TEST_CASE("product algebra on random integer coefficients") {
  CounterRng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    FirMatrix a = random_int_fir(2, 3, 2, rng);
    FirMatrix b = random_int_fir(3, 2, 3, rng);
    FirMatrix c = random_int_fir(2, 2, 2, rng);
    // Associativity.
    CHECK(max_abs_diff(fir_mul(fir_mul(a, b), c), fir_mul(a, fir_mul(b, c))) == 0.0);
    // Distributivity over addition.
    FirMatrix b2 = random_int_fir(3, 2, 3, rng);
    CHECK(max_abs_diff(fir_mul(a, fir_add(b, b2)),
                       fir_add(fir_mul(a, b), fir_mul(a, b2))) == 0.0);
    // Transpose reverses order.
    CHECK(max_abs_diff(fir_transpose(fir_mul(a, b)),
                       fir_mul(fir_transpose(b), fir_transpose(a))) == 0.0);
  }
}

TEST_CASE("delay and advance round trip") {
  FirMatrix f = scalar_fir({0.0, 1.0, 2.0});
  FirMatrix d = fir_delay(f, 2);
  CHECK(d.horizon() == 4);
  CHECK(d.coeff(3)(0, 0) == 1.0);
  CHECK(max_abs_diff(fir_advance(d, 2), f) == 0.0);
  CHECK(max_abs_diff(fir_advance(f, 1), scalar_fir({1.0, 2.0})) == 0.0);
  CHECK_THROWS_AS(fir_advance(scalar_fir({1.0, 2.0}), 1), std::invalid_argument);
}

TEST_CASE("padding trimming and blocks") {
  FirMatrix f = scalar_fir({1.0, 2.0, 0.0});
  CHECK(f.trimmed().horizon() == 1);
  CHECK(f.padded(5).horizon() == 5);
  CHECK(max_abs_diff(f.padded(5).trimmed(), f.trimmed()) == 0.0);

  FirMatrix g(3, 3, 1);
  g.coeff(1) = Eigen::MatrixXd::Ones(3, 3);
  FirMatrix sub = g.block(0, 1, 2, 2);
  CHECK(sub.rows() == 2);
  CHECK(sub.coeff(1)(0, 0) == 1.0);
  FirMatrix h(3, 3, 1);
  h.set_block(1, 1, FirMatrix::single(Eigen::MatrixXd::Identity(2, 2), 1));
  CHECK(h.coeff(1)(1, 1) == 1.0);
  CHECK(h.coeff(1)(0, 0) == 0.0);
}

TEST_CASE("membership against an allowed pattern") {
  ConstraintSpace space(1, 2, 2);
  space.comp(1).set(0, 0);
  FirMatrix f(2, 2, 1);
  f.coeff(1)(0, 0) = 5.0;
  CHECK(membership(f, space));
  f.coeff(1)(1, 1) = 1e-12;
  CHECK(membership(f, space));
  CHECK(max_outside(f, space) == 1e-12);
  f.coeff(1)(1, 1) = 0.5;
  CHECK_FALSE(membership(f, space));
  FirMatrix cleaned = zero_outside(f, space);
  CHECK(cleaned.coeff(1)(1, 1) == 0.0);
  CHECK(cleaned.coeff(1)(0, 0) == 5.0);
}

TEST_CASE("state feedback residual detects the deadbeat identity") {
  Eigen::MatrixXd a(1, 1), b2(1, 1);
  a << 0.5;
  b2 << 1.0;
  FirMatrix r = scalar_fir({0.0, 1.0});
  FirMatrix m = scalar_fir({0.0, -0.5});
  CHECK(sf_residual(a, b2, r, m).max_abs() == 0.0);
  FirMatrix m_bad = scalar_fir({0.0, 0.0});
  CHECK(sf_residual(a, b2, r, m_bad).max_abs() == 0.5);
  // Residual is affine: perturbing M by delta changes the residual by -B2 delta.
  FirMatrix m_pert = scalar_fir({0.0, -0.5 + 0.25});
  CHECK(sf_residual(a, b2, r, m_pert).max_abs() == Catch::Approx(0.25));
}

TEST_CASE("output feedback residual of the zero response") {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 2);
  Eigen::MatrixXd b2 = Eigen::MatrixXd::Identity(2, 2);
  Eigen::MatrixXd c2 = Eigen::MatrixXd::Identity(2, 2);
  SystemResponse zero{FirMatrix(2, 2, 1), FirMatrix(2, 2, 1), FirMatrix(2, 2, 1),
                      FirMatrix(2, 2, 1)};
  OfResidual res = of_residual(a, b2, c2, zero);
  CHECK(res.column_eq.h2_norm() == Catch::Approx(std::sqrt(2.0)));
  CHECK(res.row_eq.h2_norm() == Catch::Approx(std::sqrt(2.0)));
}

TEST_CASE("inverse sensor map embedding satisfies both equations") {
  Eigen::MatrixXd a(1, 1), b2(1, 1), c2(1, 1);
  a << 0.5;
  b2 << 1.0;
  c2 << 1.0;
  FirMatrix r = scalar_fir({0.0, 1.0});
  FirMatrix m = scalar_fir({0.0, -0.5});
  SystemResponse resp = of_from_sf_via_inverse(r, m, a, c2);
  CHECK(resp.N.coeff(0)(0, 0) == 0.0);
  CHECK(resp.N.coeff(1)(0, 0) == Catch::Approx(-0.5));
  CHECK(resp.L.coeff(0)(0, 0) == Catch::Approx(-0.5));
  CHECK(resp.L.coeff(1)(0, 0) == Catch::Approx(0.25));
  CHECK(of_residual(a, b2, c2, resp).max_norm() <= 1e-14);
}

TEST_CASE("separation style composition of feedback and estimation pairs") {
  Eigen::MatrixXd a(1, 1);
  a << 0.5;
  Eigen::MatrixXd b2(1, 1), c2(1, 1);
  b2 << 1.0;
  c2 << 1.0;
  FirMatrix r1 = scalar_fir({0.0, 1.0});
  FirMatrix m1 = scalar_fir({0.0, -0.5});
  FirMatrix r2 = scalar_fir({0.0, 1.0});
  FirMatrix n2 = scalar_fir({0.0, -0.5});
  SystemResponse resp = compose_of_from_sf_est(r1, m1, r2, n2, a);

  // Frozen hand convolution.
  CHECK(resp.R.coeff(1)(0, 0) == Catch::Approx(1.0));
  CHECK(resp.R.coeff(2)(0, 0) == Catch::Approx(0.5));
  CHECK(resp.M.coeff(2)(0, 0) == Catch::Approx(-0.25));
  CHECK(resp.N.coeff(2)(0, 0) == Catch::Approx(-0.25));
  CHECK(resp.L.coeff(1)(0, 0) == Catch::Approx(-0.25));
  CHECK(resp.L.coeff(2)(0, 0) == Catch::Approx(0.125));
  CHECK(resp.R.horizon() == 1 + 1 + 1);
  CHECK(of_residual(a, b2, c2, resp).max_norm() <= 1e-14);

  // Degenerate memoryless plant: composition collapses to a pure delay.
  Eigen::MatrixXd a0 = Eigen::MatrixXd::Zero(1, 1);
  FirMatrix m0 = scalar_fir({0.0, 0.0});
  SystemResponse dead = compose_of_from_sf_est(r1, m0, r2, m0, a0);
  CHECK(dead.R.coeff(1)(0, 0) == Catch::Approx(1.0));
  CHECK(dead.R.coeff(2)(0, 0) == 0.0);
  CHECK(dead.M.h2_norm() == 0.0);
  CHECK(dead.N.h2_norm() == 0.0);
  CHECK(dead.L.h2_norm() == 0.0);
}

TEST_CASE("join and split of the block response") {
  FirMatrix r(2, 2, 1), n(2, 1, 1), m(1, 2, 1), l(1, 1, 1);
  r.coeff(1) << 1, 2, 3, 4;
  n.coeff(1) << 5, 6;
  m.coeff(1) << 7, 8;
  l.coeff(0) << 9;
  FirMatrix joined = join_response(SystemResponse{r, n, m, l});
  CHECK(joined.rows() == 3);
  CHECK(joined.cols() == 3);
  CHECK(joined.coeff(1)(0, 2) == 5.0);
  CHECK(joined.coeff(0)(2, 2) == 9.0);
  SystemResponse back = split_response(joined, 2, 1, 1);
  CHECK(max_abs_diff(back.R, r) == 0.0);
  CHECK(max_abs_diff(back.N, n) == 0.0);
  CHECK(max_abs_diff(back.M, m) == 0.0);
  CHECK(max_abs_diff(back.L, l) == 0.0);
}

TEST_CASE("companion stability radius on frozen cases") {
  CHECK(inverse_stability(FirMatrix(3, 3, 2)).stable);
  CHECK(inverse_stability(FirMatrix(3, 3, 2)).radius == 0.0);

  StabilityReport grow = inverse_stability(scalar_fir({0.0, -2.0}));
  CHECK_FALSE(grow.stable);
  CHECK(grow.radius == Catch::Approx(2.0).margin(1e-12));

  StabilityReport decay = inverse_stability(scalar_fir({0.0, 0.5}));
  CHECK(decay.stable);
  CHECK(decay.radius == Catch::Approx(0.5).margin(1e-12));

  // Nilpotent perturbation: all roots at the origin.
  FirMatrix nil(2, 2, 1);
  nil.coeff(1) << 0, 1, 0, 0;
  StabilityReport n = inverse_stability(nil);
  CHECK(n.stable);
  CHECK(n.radius <= 1e-8);

  CHECK_THROWS_AS(inverse_stability(scalar_fir({0.5, 0.5})), std::invalid_argument);
}

TEST_CASE("companion verdict agrees with series growth") {
  CounterRng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    FirMatrix d(2, 2, 3);
    for (int k = 1; k <= 3; ++k)
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) d.coeff(k)(i, j) = rng.uniform(-0.8, 0.8);
    StabilityReport rep = inverse_stability(d);
    if (std::abs(rep.radius - 1.0) < 0.05) continue;  // skip near-marginal draws
    std::vector<Eigen::MatrixXd> g = inverse_impulse(d, 201);
    double early = 0.0, late = 0.0;
    for (int k = 0; k < 40; ++k) early = std::max(early, g[k].cwiseAbs().maxCoeff());
    for (int k = 160; k <= 200; ++k) late = std::max(late, g[k].cwiseAbs().maxCoeff());
    if (rep.radius < 1.0) {
      CHECK(late <= std::max(1e-6, 1e-3 * early));
    } else {
      CHECK(late > 1e3 * early);
    }
  }
}

TEST_CASE("riccati baseline on frozen scalars") {
  Eigen::MatrixXd a(1, 1), b(1, 1), q(1, 1), rw(1, 1);
  a << 0.5;
  b << 1.0;
  q << 1.0;
  rw << 1.0;
  DareSolution sol = dare_solve(a, b, q, rw);
  REQUIRE(sol.converged);
  // Positive root of p^2 - 0.25 p - 1 = 0.
  const double root = (0.25 + std::sqrt(4.0625)) / 2.0;
  CHECK(sol.P(0, 0) == Catch::Approx(root).margin(1e-10));
  CHECK(sol.residual <= 1e-10);
  CHECK(sol.closed_loop_stable);
  CHECK(sol.cost_per_unit_noise == Catch::Approx(root).margin(1e-10));
  Eigen::MatrixXd b1(1, 1);
  b1 << 2.0;
  CHECK(lqr_h2_cost(sol, b1) == Catch::Approx(4.0 * root).margin(1e-9));

  // Memoryless plant: the cost-to-go is the state weight itself.
  Eigen::MatrixXd a0 = Eigen::MatrixXd::Zero(1, 1);
  DareSolution sol0 = dare_solve(a0, b, q, rw);
  CHECK(sol0.P(0, 0) == Catch::Approx(1.0).margin(1e-12));
  CHECK(sol0.K(0, 0) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("riccati on a marginally stable pair") {
  // Integrator with damping exactly at the unit circle after normalization.
  Eigen::MatrixXd a(2, 2);
  a << 1.0, 0.2, -0.1, 0.95;
  a /= Eigen::EigenSolver<Eigen::MatrixXd>(a, false).eigenvalues().cwiseAbs().maxCoeff();
  Eigen::MatrixXd b(2, 1);
  b << 0.0, 1.0;
  DareSolution sol = dare_solve(a, b, Eigen::MatrixXd::Identity(2, 2),
                                Eigen::MatrixXd::Identity(1, 1));
  CHECK(sol.converged);
  CHECK(sol.residual <= 1e-10);
  CHECK(sol.closed_loop_stable);
  Eigen::MatrixXd gram = Eigen::MatrixXd::Identity(1, 1) + b.transpose() * sol.P * b;
  Eigen::MatrixXd fixed = Eigen::MatrixXd::Identity(2, 2) + a.transpose() * sol.P * a -
                          (b.transpose() * sol.P * a).transpose() *
                              gram.inverse() * (b.transpose() * sol.P * a);
  CHECK((fixed - sol.P).norm() <= 1e-9);
}
