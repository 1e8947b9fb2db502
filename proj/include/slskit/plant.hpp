#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <numeric>
#include <stdexcept>
#include <vector>

#include "rng.hpp"
#include "sparsity.hpp"

namespace slskit {

/// Discrete time networked plant
///   x+ = A x + B1 w + B2 u,   z = C1 x + D12 u,   y = C2 x + D21 v.
/// B1 scales per-state process noise and D21 per-measurement sensor noise; the
/// two noise channels are independent, so the joint noise input is their direct
/// sum [w; v].
struct PlantModel {
  Eigen::MatrixXd A, B1, B2, C1, C2, D12, D21;
  /// Subsystem interaction graph at node level (diagonal not required).
  SparsityPattern graph;
  /// States per subsystem; sums to the state dimension.
  std::vector<int> node_dims;

  int nx() const { return static_cast<int>(A.rows()); }
  int nu() const { return static_cast<int>(B2.cols()); }
  int ny() const { return static_cast<int>(C2.rows()); }
  int n_nodes() const { return static_cast<int>(node_dims.size()); }

  /// Node label of every state index.
  std::vector<int> state_nodes() const { return node_labels(node_dims); }
};

inline void check_plant(const PlantModel& p) {
  const int nx = p.nx();
  if (p.B2.rows() != nx || p.B1.rows() != nx || p.C2.cols() != nx)
    throw std::invalid_argument("plant: dimension mismatch around A");
  if (p.C1.cols() != nx || p.D12.rows() != p.C1.rows() || p.D12.cols() != p.B2.cols())
    throw std::invalid_argument("plant: performance channel dims");
  if (p.D21.rows() != p.C2.rows())
    throw std::invalid_argument("plant: sensor noise dims");
  int total = 0;
  for (int d : p.node_dims) {
    if (d <= 0) throw std::invalid_argument("plant: node dims must be positive");
    total += d;
  }
  if (total != nx) throw std::invalid_argument("plant: node dims must sum to nx");
  if (p.graph.rows() != static_cast<int>(p.node_dims.size()) ||
      p.graph.cols() != p.graph.rows())
    throw std::invalid_argument("plant: graph must be square over nodes");
}

/// Scalar-subsystem chain: tridiagonal A, one dedicated actuator per state.
/// Full state output with the performance channel stacking state over input.
inline PlantModel build_chain(int n, double diag, double coupling) {
  if (n < 1) throw std::invalid_argument("build_chain: n >= 1");
  PlantModel p;
  p.A = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    p.A(i, i) = diag;
    if (i + 1 < n) {
      p.A(i, i + 1) = coupling;
      p.A(i + 1, i) = coupling;
    }
  }
  p.B1 = Eigen::MatrixXd::Identity(n, n);
  p.B2 = Eigen::MatrixXd::Identity(n, n);
  p.C1 = Eigen::MatrixXd::Zero(2 * n, n);
  p.C1.topRows(n) = Eigen::MatrixXd::Identity(n, n);
  p.D12 = Eigen::MatrixXd::Zero(2 * n, n);
  p.D12.bottomRows(n) = Eigen::MatrixXd::Identity(n, n);
  p.C2 = Eigen::MatrixXd::Identity(n, n);
  p.D21 = Eigen::MatrixXd::Zero(n, n);
  p.graph = SparsityPattern(n, n);
  for (int i = 0; i + 1 < n; ++i) {
    p.graph.set(i, i + 1);
    p.graph.set(i + 1, i);
  }
  p.node_dims.assign(static_cast<std::size_t>(n), 1);
  return p;
}

/// Chain with entries drawn uniformly from fixed ranges, for seeded families of
/// test instances. Diagonal in [0.4, 1.0], couplings in [0.2, 0.8].
inline PlantModel build_random_chain(int n, std::uint64_t seed) {
  PlantModel p = build_chain(n, 1.0, 0.0);
  CounterRng rng(seed);
  for (int i = 0; i < n; ++i) p.A(i, i) = rng.uniform(0.4, 1.0);
  for (int i = 0; i + 1 < n; ++i) {
    p.A(i, i + 1) = rng.uniform(0.2, 0.8);
    p.A(i + 1, i) = rng.uniform(0.2, 0.8);
  }
  return p;
}

enum class MeshMode {
  spanning_tree,  ///< random spanning tree of the k x k grid (connected)
  edge_drop,      ///< keep each grid edge independently with probability 1 - p
};

/// Undirected interconnection pattern over a k x k grid of nodes.
inline SparsityPattern build_mesh(int k, MeshMode mode, std::uint64_t seed,
                                  double drop_probability = 0.25) {
  if (k < 1) throw std::invalid_argument("build_mesh: k >= 1");
  const int n = k * k;
  auto node = [k](int r, int c) { return r * k + c; };
  struct Edge {
    int a, b;
    double w;
  };
  std::vector<Edge> edges;
  CounterRng rng(seed);
  for (int r = 0; r < k; ++r)
    for (int c = 0; c < k; ++c) {
      if (c + 1 < k) edges.push_back({node(r, c), node(r, c + 1), rng.next_unit()});
      if (r + 1 < k) edges.push_back({node(r, c), node(r + 1, c), rng.next_unit()});
    }

  SparsityPattern g(n, n);
  if (mode == MeshMode::edge_drop) {
    for (const Edge& e : edges)
      if (e.w >= drop_probability) {
        g.set(e.a, e.b);
        g.set(e.b, e.a);
      }
    return g;
  }

  // Kruskal on random weights gives a uniform-ish random spanning tree.
  std::vector<int> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&parent](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] =
          parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  };
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) { return a.w < b.w; });
  for (const Edge& e : edges) {
    const int ra = find(e.a);
    const int rb = find(e.b);
    if (ra == rb) continue;
    parent[static_cast<std::size_t>(ra)] = rb;
    g.set(e.a, e.b);
    g.set(e.b, e.a);
  }
  return g;
}

/// Parameter ranges for the second order oscillator network.
struct SwingParams {
  double dt = 0.2;
  double coupling_min = 0.5, coupling_max = 1.0;
  double damping_min = 1.0, damping_max = 1.5;
  double inv_mass_min = 0.0, inv_mass_max = 2.0;
  double phase_noise_cov = 1e-4;   ///< process noise variance on phase states
  double freq_noise_cov = 1.0;     ///< process noise variance on frequency states
  double sensor_noise_cov = 1e-2;  ///< variance of every measurement channel
};

/// Network of coupled second order oscillators on the given undirected graph,
/// discretized with a first order matrix exponential approximation. Each node
/// carries a phase and a frequency state and one actuator on the frequency.
/// Draw order (fixed so seeds reproduce): couplings over upper-triangle edges
/// in row-major order, then damping per node, then inverse mass per node.
inline PlantModel build_swing_plant(const SparsityPattern& graph, std::uint64_t seed,
                                    const SwingParams& sp = {}) {
  if (graph.rows() != graph.cols()) throw std::invalid_argument("swing: square graph");
  const int n = graph.rows();
  CounterRng rng(seed);

  Eigen::MatrixXd coupling = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (graph.at(i, j) || graph.at(j, i)) {
        const double k_ij = rng.uniform(sp.coupling_min, sp.coupling_max);
        coupling(i, j) = k_ij;
        coupling(j, i) = k_ij;
      }
  std::vector<double> damping(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) damping[static_cast<std::size_t>(i)] = rng.uniform(sp.damping_min, sp.damping_max);
  std::vector<double> inv_mass(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    inv_mass[static_cast<std::size_t>(i)] = rng.uniform(sp.inv_mass_min, sp.inv_mass_max);

  PlantModel p;
  const int nx = 2 * n;
  p.A = Eigen::MatrixXd::Zero(nx, nx);
  p.B2 = Eigen::MatrixXd::Zero(nx, n);
  for (int i = 0; i < n; ++i) {
    const double mi = inv_mass[static_cast<std::size_t>(i)];
    const double ki = coupling.row(i).sum();
    const int r = 2 * i;
    p.A(r, r) = 1.0;
    p.A(r, r + 1) = sp.dt;
    p.A(r + 1, r) = -ki * mi * sp.dt;
    p.A(r + 1, r + 1) = 1.0 - damping[static_cast<std::size_t>(i)] * mi * sp.dt;
    for (int j = 0; j < n; ++j)
      if (j != i && coupling(i, j) != 0.0) p.A(2 * i + 1, 2 * j) = coupling(i, j) * mi * sp.dt;
    p.B2(r + 1, i) = 1.0;
  }

  p.B1 = Eigen::MatrixXd::Zero(nx, nx);
  for (int i = 0; i < n; ++i) {
    p.B1(2 * i, 2 * i) = std::sqrt(sp.phase_noise_cov);
    p.B1(2 * i + 1, 2 * i + 1) = std::sqrt(sp.freq_noise_cov);
  }
  p.C1 = Eigen::MatrixXd::Zero(nx + n, nx);
  p.C1.topRows(nx) = Eigen::MatrixXd::Identity(nx, nx);
  p.D12 = Eigen::MatrixXd::Zero(nx + n, n);
  p.D12.bottomRows(n) = Eigen::MatrixXd::Identity(n, n);
  p.C2 = Eigen::MatrixXd::Identity(nx, nx);
  p.D21 = std::sqrt(sp.sensor_noise_cov) * Eigen::MatrixXd::Identity(nx, nx);
  p.graph = graph;
  p.node_dims.assign(static_cast<std::size_t>(n), 2);
  return p;
}

/// Spectral radius of a square matrix.
inline double spectral_radius(const Eigen::MatrixXd& a) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(a, false);
  if (es.info() != Eigen::Success) throw std::runtime_error("spectral_radius: solver failed");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Rescale A so its spectral radius equals the target exactly (up to solver
/// accuracy). A zero matrix cannot be normalized.
inline void normalize_spectral_radius(PlantModel& p, double target = 1.0) {
  const double rho = spectral_radius(p.A);
  if (rho <= 0.0) throw std::invalid_argument("normalize: spectral radius is zero");
  p.A *= target / rho;
}

}  // namespace slskit
