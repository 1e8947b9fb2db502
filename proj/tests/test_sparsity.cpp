#include <catch2/catch_amalgamated.hpp>

#include <slskit/rng.hpp>
#include <slskit/sparsity.hpp>

#include <vector>

using namespace slskit;

namespace {

// Independent oracle: boolean matrix product over 0/1 int matrices.
using BoolMat = std::vector<std::vector<int>>;

BoolMat bool_mul(const BoolMat& a, const BoolMat& b) {
  const int n = static_cast<int>(a.size());
  const int m = static_cast<int>(b[0].size());
  const int inner = static_cast<int>(b.size());
  BoolMat out(n, std::vector<int>(m, 0));
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < inner; ++k)
      if (a[i][k])
        for (int j = 0; j < m; ++j)
          if (b[k][j]) out[i][j] = 1;
  return out;
}

BoolMat to_bool(const SparsityPattern& p) {
  BoolMat out(p.rows(), std::vector<int>(p.cols(), 0));
  p.for_each_set([&](int i, int j) { out[i][j] = 1; });
  return out;
}

SparsityPattern chain_pattern(int n) {
  SparsityPattern p(n, n);
  for (int i = 0; i < n; ++i) {
    p.set(i, i);
    if (i + 1 < n) {
      p.set(i, i + 1);
      p.set(i + 1, i);
    }
  }
  return p;
}

SparsityPattern random_digraph(int n, double density, CounterRng& rng) {
  SparsityPattern p(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && rng.next_unit() < density) p.set(i, j);
  return p;
}

}  // namespace

TEST_CASE("support and thresholded support") {
  Eigen::MatrixXd m(2, 3);
  m << 0.0, 1e-12, -3.0, 0.5, 0.0, 1e-6;
  SparsityPattern exact = support(m);
  CHECK(exact.count() == 4);
  CHECK(exact.at(0, 1));
  CHECK_FALSE(exact.at(0, 0));
  SparsityPattern tol = support_tol(m, 1e-9);
  CHECK(tol.count() == 3);
  CHECK_FALSE(tol.at(0, 1));
  CHECK(tol.at(1, 2));
}

TEST_CASE("boolean product of the 3-chain closure squared is full") {
  SparsityPattern abar = chain_pattern(3);
  SparsityPattern sq = pattern_mul(abar, abar);
  CHECK(sq == SparsityPattern::ones(3, 3));
}

TEST_CASE("rectangular boolean product by hand") {
  SparsityPattern a(2, 3);
  a.set(0, 0);
  a.set(1, 2);
  SparsityPattern b(3, 2);
  b.set(0, 1);
  b.set(2, 0);
  SparsityPattern ab = pattern_mul(a, b);
  CHECK(ab.rows() == 2);
  CHECK(ab.cols() == 2);
  CHECK(ab.count() == 2);
  CHECK(ab.at(0, 1));
  CHECK(ab.at(1, 0));
}

TEST_CASE("power zero is the identity and powers match the boolean oracle") {
  CounterRng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    SparsityPattern g = closure(random_digraph(8, 0.25, rng));
    CHECK(pattern_pow(g, 0) == SparsityPattern::identity(8));
    BoolMat acc(8, std::vector<int>(8, 0));
    for (int i = 0; i < 8; ++i) acc[i][i] = 1;
    const BoolMat gb = to_bool(g);
    for (int p = 1; p <= 4; ++p) {
      acc = bool_mul(acc, gb);
      CHECK(to_bool(pattern_pow(g, p)) == acc);
    }
  }
}

TEST_CASE("distances agree with boolean powering on random digraphs") {
  CounterRng rng(29);
  for (int trial = 0; trial < 20; ++trial) {
    SparsityPattern g = random_digraph(9, 0.2, rng);
    SparsityPattern abar = closure(g);
    for (int d = 0; d <= 4; ++d) {
      SparsityPattern reach = pattern_pow(abar, d);
      for (int j = 0; j < 9; ++j) {
        std::vector<int> dist = bfs_distances(abar, j, true);
        for (int i = 0; i < 9; ++i) {
          const bool within = dist[i] >= 0 && dist[i] <= d;
          CHECK(reach.at(i, j) == within);
        }
      }
    }
  }
}

TEST_CASE("distance on a directed chain and unreachability") {
  // Influence only flows forward: 0 -> 1 -> 2.
  SparsityPattern p(3, 3);
  p.set(1, 0);
  p.set(2, 1);
  CHECK(distance(p, 0, 2).value() == 2);
  CHECK(distance(p, 0, 0).value() == 0);
  CHECK_FALSE(distance(p, 2, 0).has_value());
}

TEST_CASE("upstream and downstream sets on the 10-node reference digraph") {
  // Directed fixture (1-indexed edges): 1->2, 2->4, 3->4, 4->5, 5->6, 5->7,
  // 6->8, 6->9, 7->10. Chosen so node 5 at depth 2 sees exactly four ancestors
  // and six descendants.
  SparsityPattern g = SparsityPattern::from_edges(
      10, {{0, 1}, {1, 3}, {2, 3}, {3, 4}, {4, 5}, {4, 6}, {5, 7}, {5, 8}, {6, 9}});
  LocalityRegion r = up_down_sets(g, 4, 2);
  CHECK(r.up == std::vector<int>{1, 2, 3, 4});
  CHECK(r.down == std::vector<int>{4, 5, 6, 7, 8, 9});

  LocalityRegion r0 = up_down_sets(g, 4, 0);
  CHECK(r0.up == std::vector<int>{4});
  CHECK(r0.down == std::vector<int>{4});
}

TEST_CASE("membership duality between upstream and downstream sets") {
  CounterRng rng(43);
  for (int trial = 0; trial < 10; ++trial) {
    SparsityPattern g = random_digraph(8, 0.2, rng);
    for (int d = 0; d <= 3; ++d) {
      std::vector<LocalityRegion> regs;
      for (int j = 0; j < 8; ++j) regs.push_back(up_down_sets(g, j, d));
      for (int j = 0; j < 8; ++j)
        for (int s = 0; s < 8; ++s) {
          const bool s_down_j = std::find(regs[j].down.begin(), regs[j].down.end(), s) !=
                                regs[j].down.end();
          const bool j_up_s = std::find(regs[s].up.begin(), regs[s].up.end(), j) !=
                              regs[s].up.end();
          CHECK(s_down_j == j_up_s);
        }
    }
  }
}

TEST_CASE("banded supports against the chain closure") {
  const int n = 6;
  SparsityPattern abar = chain_pattern(n);
  SparsityPattern tridiag = abar;
  SparsityPattern penta = pattern_pow(abar, 2);
  CHECK(is_ad_sparse(tridiag, abar, 1));
  CHECK_FALSE(is_ad_sparse(penta, abar, 1));
  CHECK(is_ad_sparse(penta, abar, 2));
  SparsityPattern corner(n, n);
  corner.set(n - 1, 0);
  CHECK_FALSE(is_ad_sparse(corner, abar, 3));
  CHECK(is_ad_sparse(corner, abar, n - 1));
  CHECK(is_ad_sparse(SparsityPattern(n, n), abar, 0));
}

TEST_CASE("exact rational floor") {
  Ratio h{3, 2};
  CHECK(floor_scaled(h, 0) == 0);
  CHECK(floor_scaled(h, 1) == 1);
  CHECK(floor_scaled(h, 2) == 3);
  CHECK(floor_scaled(h, 3) == 4);
  Ratio two{2, 1};
  CHECK(floor_scaled(two, 5) == 10);
  CHECK(parse_ratio("3/2").num == 3);
  CHECK(parse_ratio("3/2").den == 2);
  CHECK(parse_ratio("2").den == 1);
  CHECK_THROWS_AS(parse_ratio("0/3"), std::invalid_argument);
  CHECK_THROWS_AS(parse_ratio("x"), std::invalid_argument);
}

TEST_CASE("localized space builder ramps at the interconnection speed") {
  const int n = 7;
  SparsityPattern abar = chain_pattern(n);
  SparsityPattern b2t = SparsityPattern::identity(n);
  const int d = 3;
  const int T = 6;
  auto [s_r, s_m] = build_dT_localized(abar, b2t, d, T, Ratio{2, 1});

  CHECK(s_r.horizon() == T);
  CHECK(s_r.comp(0).empty());
  // Exponents min(3, 2 (k - 1)) for k = 1..6: 0, 2, 3, 3, 3, 3.
  CHECK(s_r.comp(1) == SparsityPattern::identity(n));
  CHECK(s_r.comp(2) == pattern_pow(abar, 2));
  for (int k = 3; k <= T; ++k) CHECK(s_r.comp(k) == pattern_pow(abar, 3));

  // Input side gets one extra hop: min(4, 2 (k - 1)).
  CHECK(s_m.comp(0).empty());
  CHECK(s_m.comp(1) == SparsityPattern::identity(n));
  CHECK(s_m.comp(2) == pattern_pow(abar, 2));
  CHECK(s_m.comp(3) == pattern_pow(abar, 4));
  for (int k = 4; k <= T; ++k) CHECK(s_m.comp(k) == pattern_pow(abar, 4));

  DtValidation v = validate_dT(s_r, s_m, abar, SparsityPattern::identity(n), d, T);
  CHECK(v.finite_in_t);
  CHECK(v.state_d_sparse);
  CHECK(v.input_reach_bounded);
  CHECK(v.ok());
}

TEST_CASE("computation delay shifts the input space and caps at the horizon") {
  const int n = 5;
  SparsityPattern abar = chain_pattern(n);
  SparsityPattern b2t = SparsityPattern::identity(n);
  auto [s_r, s_m] = build_dT_localized(abar, b2t, 2, 4, Ratio{2, 1}, 1);
  CHECK(s_m.comp(0).empty());
  CHECK(s_m.comp(1).empty());
  CHECK(s_m.comp(2) == SparsityPattern::identity(n));
  CHECK(s_m.comp(3) == pattern_pow(abar, 2));
  CHECK(s_m.comp(4) == pattern_pow(abar, 3));
  CHECK(s_m.horizon() == 4);
  CHECK(validate_dT(s_r, s_m, abar, SparsityPattern::identity(n), 2, 4).ok());
}

TEST_CASE("localized space builder validates over a parameter sweep") {
  CounterRng rng(97);
  const std::vector<Ratio> speeds = {{3, 2}, {2, 1}, {4, 1}};
  for (int trial = 0; trial < 8; ++trial) {
    SparsityPattern g = random_digraph(6, 0.3, rng);
    SparsityPattern abar = closure(g);
    // Random per-index actuation, possibly underactuated but never empty.
    SparsityPattern b2(6, 6);
    for (int i = 0; i < 6; ++i)
      if (rng.next_unit() < 0.7) b2.set(i, i);
    b2.set(0, 0);
    SparsityPattern b2t = pattern_transpose(b2);
    for (int d = 0; d <= 4; ++d)
      for (int T : {2, 5, 9})
        for (const Ratio& h : speeds)
          for (int shift : {0, 1}) {
            auto [s_r, s_m] = build_dT_localized(abar, b2t, d, T, h, shift);
            CHECK(validate_dT(s_r, s_m, abar, b2, d, T).ok());
            // Diagonal of the first state component is always available.
            CHECK(pattern_subset(SparsityPattern::identity(6), s_r.comp(1)));
          }
  }
}

TEST_CASE("builder rejects bad parameters") {
  SparsityPattern abar = chain_pattern(3);
  SparsityPattern b2t = SparsityPattern::identity(3);
  CHECK_THROWS_AS(build_dT_localized(abar, b2t, 1, 0, Ratio{2, 1}), std::invalid_argument);
  CHECK_THROWS_AS(build_dT_localized(abar, b2t, -1, 3, Ratio{2, 1}), std::invalid_argument);
  CHECK_THROWS_AS(build_dT_localized(abar, b2t, 1, 3, Ratio{1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(build_dT_localized(abar, b2t, 1, 3, Ratio{2, 3}), std::invalid_argument);
}

TEST_CASE("builder rejects actuators spanning distant states") {
  // One actuator pushing both ends of a 6-chain cannot respect any small locality.
  SparsityPattern abar = chain_pattern(6);
  SparsityPattern b2(6, 1);
  b2.set(0, 0);
  b2.set(5, 0);
  CHECK_THROWS_AS(build_dT_localized(abar, pattern_transpose(b2), 1, 6, Ratio{2, 1}),
                  std::invalid_argument);
}

TEST_CASE("communication delay space on a 3-chain") {
  SparsityPattern g = chain_pattern(3);
  std::vector<int> nodes = {0, 1, 2};
  ConstraintSpace space = comm_delay_space(g, 1.0, 4, nodes, nodes);
  // k = 0 admits only same-node entries.
  CHECK(space.comp(0) == SparsityPattern::identity(3));
  // Two hops apart becomes available exactly at k = 2.
  CHECK_FALSE(space.comp(1).at(2, 0));
  CHECK(space.comp(2).at(2, 0));
  CHECK(space.comp(1).at(1, 0));
  CHECK(space.comp(4) == SparsityPattern::ones(3, 3));

  ConstraintSpace twice = comm_delay_space(g, 2.0, 4, nodes, nodes);
  CHECK_FALSE(twice.comp(3).at(2, 0));
  CHECK(twice.comp(4).at(2, 0));
}

TEST_CASE("communication delay never admits unreachable pairs") {
  SparsityPattern g(3, 3);
  g.set(1, 0);  // only 0 -> 1
  std::vector<int> nodes = {0, 1, 2};
  ConstraintSpace space = comm_delay_space(g, 1.0, 6, nodes, nodes);
  for (int k = 0; k <= 6; ++k) {
    CHECK_FALSE(space.comp(k).at(2, 0));
    CHECK_FALSE(space.comp(k).at(0, 1));
  }
  CHECK(space.comp(1).at(1, 0));
}

TEST_CASE("node expansion maps block structure to entries") {
  SparsityPattern nodepat(2, 2);
  nodepat.set(0, 0);
  nodepat.set(1, 0);
  nodepat.set(1, 1);
  std::vector<int> rows = node_labels({2, 1});
  CHECK(rows == std::vector<int>{0, 0, 1});
  SparsityPattern p = expand_pattern(nodepat, rows, rows);
  CHECK(p.at(0, 1));
  CHECK(p.at(2, 0));
  CHECK_FALSE(p.at(0, 2));
  CHECK(p.count() == 7);
}

TEST_CASE("constraint space set algebra") {
  ConstraintSpace a(2, 2, 2);
  a.comp(1).set(0, 0);
  a.comp(2).set(1, 1);
  ConstraintSpace b(3, 2, 2);
  b.comp(1).set(0, 0);
  b.comp(1).set(0, 1);
  b.comp(2).set(1, 1);
  CHECK(a.subset_of(b));
  CHECK_FALSE(b.subset_of(a));
  CHECK(a.comp_or_zero(5).empty());
  ConstraintSpace c = intersect(a, b);
  CHECK(c.horizon() == 2);
  CHECK(c.comp(1).at(0, 0));
  CHECK_FALSE(c.comp(1).at(0, 1));
  CHECK(c.comp(2).at(1, 1));
}

TEST_CASE("pattern transpose and closure") {
  SparsityPattern p(2, 3);
  p.set(0, 2);
  p.set(1, 0);
  SparsityPattern pt = pattern_transpose(p);
  CHECK(pt.at(2, 0));
  CHECK(pt.at(0, 1));
  CHECK(pt.count() == 2);

  SparsityPattern g(3, 3);
  g.set(0, 1);
  SparsityPattern cg = closure(g);
  CHECK(cg.count() == 4);
  CHECK(cg.at(2, 2));
}
