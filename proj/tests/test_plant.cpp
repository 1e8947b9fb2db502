#include <catch2/catch_amalgamated.hpp>

#include <slskit/json_io.hpp>
#include <slskit/plant.hpp>

#include <cstdio>
#include <string>

using namespace slskit;

namespace {

int undirected_edge_count(const SparsityPattern& g) {
  int c = 0;
  for (int i = 0; i < g.rows(); ++i)
    for (int j = i + 1; j < g.cols(); ++j)
      if (g.at(i, j) || g.at(j, i)) ++c;
  return c;
}

bool connected(const SparsityPattern& g) {
  const std::vector<int> d = bfs_distances(g, 0, true);
  for (int v : d)
    if (v < 0) return false;
  return true;
}

std::string temp_path(const char* name) {
  return std::string("/tmp/slskit_test_") + name;
}

}  // namespace

TEST_CASE("chain plant layout") {
  PlantModel p = build_chain(4, 1.0, 0.25);
  check_plant(p);
  CHECK(p.nx() == 4);
  CHECK(p.nu() == 4);
  CHECK(p.ny() == 4);
  CHECK(p.A(0, 0) == 1.0);
  CHECK(p.A(0, 1) == 0.25);
  CHECK(p.A(1, 0) == 0.25);
  CHECK(p.A(0, 2) == 0.0);
  CHECK(p.B2 == Eigen::MatrixXd::Identity(4, 4));
  CHECK(p.graph.at(0, 1));
  CHECK_FALSE(p.graph.at(0, 2));
  CHECK(p.graph.count() == 6);
  // Performance channel stacks state over input with identity weights.
  CHECK(p.C1.topRows(4) == Eigen::MatrixXd::Identity(4, 4));
  CHECK(p.D12.bottomRows(4) == Eigen::MatrixXd::Identity(4, 4));
}

TEST_CASE("seeded chains reproduce and differ across seeds") {
  PlantModel a = build_random_chain(6, 41);
  PlantModel b = build_random_chain(6, 41);
  PlantModel c = build_random_chain(6, 42);
  CHECK(a.A == b.A);
  CHECK(a.A != c.A);
  for (int i = 0; i < 6; ++i) {
    CHECK(a.A(i, i) >= 0.4);
    CHECK(a.A(i, i) <= 1.0);
  }
  CHECK(support(a.A) == support(build_chain(6, 1.0, 0.5).A));
}

TEST_CASE("mesh spanning tree is connected with exactly n - 1 edges") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    SparsityPattern g = build_mesh(3, MeshMode::spanning_tree, seed);
    CHECK(g.rows() == 9);
    CHECK(undirected_edge_count(g) == 8);
    CHECK(connected(closure(g)));
  }
  CHECK(build_mesh(3, MeshMode::spanning_tree, 5) == build_mesh(3, MeshMode::spanning_tree, 5));
}

TEST_CASE("mesh edge drop keeps the full grid at p = 0 and nothing at p = 1") {
  SparsityPattern full = build_mesh(3, MeshMode::edge_drop, 9, 0.0);
  CHECK(undirected_edge_count(full) == 12);
  SparsityPattern none = build_mesh(3, MeshMode::edge_drop, 9, 1.0);
  CHECK(none.empty());
  SparsityPattern some = build_mesh(4, MeshMode::edge_drop, 9, 0.25);
  CHECK(undirected_edge_count(some) <= 24);
  CHECK(undirected_edge_count(some) > 0);
}

TEST_CASE("oscillator discretization blocks from degenerate parameter ranges") {
  SparsityPattern g(2, 2);
  g.set(0, 1);
  g.set(1, 0);
  SwingParams sp;
  sp.coupling_min = sp.coupling_max = 1.0;
  sp.damping_min = sp.damping_max = 1.0;
  sp.inv_mass_min = sp.inv_mass_max = 1.0;
  PlantModel p = build_swing_plant(g, 123, sp);
  check_plant(p);
  REQUIRE(p.nx() == 4);
  REQUIRE(p.nu() == 2);

  Eigen::MatrixXd aii(2, 2);
  aii << 1.0, 0.2, -0.2, 0.8;
  CHECK((p.A.block(0, 0, 2, 2) - aii).norm() == 0.0);
  CHECK((p.A.block(2, 2, 2, 2) - aii).norm() == 0.0);
  Eigen::MatrixXd aij(2, 2);
  aij << 0.0, 0.0, 0.2, 0.0;
  CHECK((p.A.block(0, 2, 2, 2) - aij).norm() == 0.0);
  CHECK((p.A.block(2, 0, 2, 2) - aij).norm() == 0.0);

  CHECK(p.B2(1, 0) == 1.0);
  CHECK(p.B2(3, 1) == 1.0);
  CHECK(p.B2.sum() == 2.0);
  CHECK(p.B1(0, 0) == Catch::Approx(0.01));
  CHECK(p.B1(1, 1) == 1.0);
  CHECK(p.D21(0, 0) == Catch::Approx(0.1));
  CHECK(p.node_dims == std::vector<int>{2, 2});
}

TEST_CASE("swing draw order is seed stable") {
  SparsityPattern g = build_mesh(3, MeshMode::spanning_tree, 4);
  PlantModel a = build_swing_plant(g, 99);
  PlantModel b = build_swing_plant(g, 99);
  PlantModel c = build_swing_plant(g, 100);
  CHECK(a.A == b.A);
  CHECK(a.A != c.A);
}

TEST_CASE("spectral radius and normalization") {
  Eigen::MatrixXd a(2, 2);
  a << 0.5, 0.0, 0.0, -2.0;
  CHECK(spectral_radius(a) == Catch::Approx(2.0).margin(1e-12));

  PlantModel p = build_swing_plant(build_mesh(3, MeshMode::spanning_tree, 11), 7);
  normalize_spectral_radius(p, 1.0);
  CHECK(spectral_radius(p.A) == Catch::Approx(1.0).margin(1e-8));
  normalize_spectral_radius(p, 0.5);
  CHECK(spectral_radius(p.A) == Catch::Approx(0.5).margin(1e-8));
}

TEST_CASE("pattern serialization covers edge rows") {
  SparsityPattern p(3, 4);
  p.set(0, 0);
  p.set(0, 3);
  p.set(2, 1);
  p.set(2, 2);
  Json j = p;
  SparsityPattern back = j.get<SparsityPattern>();
  CHECK(back == p);

  CHECK(Json(SparsityPattern(2, 5)).at("rle").at(0).size() == 1);
  CHECK(Json(SparsityPattern::ones(2, 5)).get<SparsityPattern>() == SparsityPattern::ones(2, 5));
}

TEST_CASE("fir serialization is exact") {
  FirMatrix f(2, 3, 2);
  f.coeff(1)(0, 2) = 1.0 / 3.0;
  f.coeff(2)(1, 0) = -0.1234567890123456789;
  Json j = f;
  CHECK(j.at("T") == 2);
  FirMatrix back = j.get<FirMatrix>();
  CHECK(max_abs_diff(back, f) == 0.0);
}

TEST_CASE("plant round trip through disk is exact") {
  PlantModel p = build_swing_plant(build_mesh(3, MeshMode::spanning_tree, 21), 5);
  normalize_spectral_radius(p, 1.0);
  const std::string path = temp_path("plant_roundtrip.json");
  save_plant(path, p);
  PlantModel back = load_plant(path);
  CHECK(back.A == p.A);
  CHECK(back.B1 == p.B1);
  CHECK(back.B2 == p.B2);
  CHECK(back.C1 == p.C1);
  CHECK(back.C2 == p.C2);
  CHECK(back.D12 == p.D12);
  CHECK(back.D21 == p.D21);
  CHECK(back.graph == p.graph);
  CHECK(back.node_dims == p.node_dims);
  std::remove(path.c_str());
}

TEST_CASE("loading reports the missing field by name") {
  PlantModel p = build_chain(2, 1.0, 0.3);
  Json j = p;
  j.erase("B2");
  const std::string path = temp_path("plant_missing.json");
  save_json(path, j);
  try {
    load_plant(path);
    FAIL("expected a serialization error");
  } catch (const JsonError& e) {
    CHECK(std::string(e.what()).find("B2") != std::string::npos);
  }
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_plant("/nonexistent/nowhere.json"), JsonError);
}

TEST_CASE("constraint space serialization round trip") {
  auto [s_r, s_m] = build_dT_localized(closure(support(build_chain(4, 1.0, 0.3).A)),
                                       SparsityPattern::identity(4), 2, 5, Ratio{2, 1});
  Json j = s_r;
  ConstraintSpace back = j.get<ConstraintSpace>();
  CHECK(back.subset_of(s_r));
  CHECK(s_r.subset_of(back));
  Json jm = s_m;
  CHECK(jm.get<ConstraintSpace>().subset_of(s_m));
}

TEST_CASE("committed chain fixture loads with the documented dimensions") {
  PlantModel p = load_plant(std::string(SLSKIT_SOURCE_DIR) + "/tests/fixtures/swing_chain_3.json");
  CHECK(p.nx() == 6);
  CHECK(p.nu() == 3);
  CHECK(p.n_nodes() == 3);
  CHECK(spectral_radius(p.A) == Catch::Approx(1.0).margin(1e-8));
}
