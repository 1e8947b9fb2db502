#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace slskit {

/// Binary matrix of structural nonzeros.
/// Convention throughout: entry (i, j) set means column index j can influence row
/// index i, matching the support of a state matrix A in x+ = A x.
class SparsityPattern {
 public:
  SparsityPattern() = default;
  SparsityPattern(int rows, int cols)
      : rows_(rows), cols_(cols), bits_(static_cast<std::size_t>(rows) * cols, 0) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("pattern dims must be nonnegative");
  }

  static SparsityPattern zero(int rows, int cols) { return SparsityPattern(rows, cols); }

  static SparsityPattern identity(int n) {
    SparsityPattern p(n, n);
    for (int i = 0; i < n; ++i) p.set(i, i);
    return p;
  }

  static SparsityPattern ones(int rows, int cols) {
    SparsityPattern p(rows, cols);
    std::fill(p.bits_.begin(), p.bits_.end(), std::uint8_t{1});
    return p;
  }

  /// Build from directed edges (tail -> head): sets entry (head, tail).
  static SparsityPattern from_edges(int n, const std::vector<std::pair<int, int>>& edges,
                                    bool undirected = false) {
    SparsityPattern p(n, n);
    for (const auto& [tail, head] : edges) {
      p.set(head, tail);
      if (undirected) p.set(tail, head);
    }
    return p;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  bool at(int i, int j) const { return bits_[index(i, j)] != 0; }

  void set(int i, int j, bool value = true) { bits_[index(i, j)] = value ? 1 : 0; }

  /// Number of set entries.
  int count() const {
    int c = 0;
    for (auto b : bits_) c += b;
    return c;
  }

  bool empty() const { return count() == 0; }

  /// Row indices set in column j, ascending.
  std::vector<int> col_rows(int j) const {
    std::vector<int> out;
    for (int i = 0; i < rows_; ++i)
      if (at(i, j)) out.push_back(i);
    return out;
  }

  /// Column indices set in row i, ascending.
  std::vector<int> row_cols(int i) const {
    std::vector<int> out;
    for (int j = 0; j < cols_; ++j)
      if (at(i, j)) out.push_back(j);
    return out;
  }

  template <typename Fn>
  void for_each_set(Fn&& fn) const {
    for (int i = 0; i < rows_; ++i)
      for (int j = 0; j < cols_; ++j)
        if (at(i, j)) fn(i, j);
  }

  friend bool operator==(const SparsityPattern& a, const SparsityPattern& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.bits_ == b.bits_;
  }
  friend bool operator!=(const SparsityPattern& a, const SparsityPattern& b) { return !(a == b); }

 private:
  std::size_t index(int i, int j) const {
    if (i < 0 || i >= rows_ || j < 0 || j >= cols_) throw std::out_of_range("pattern index");
    return static_cast<std::size_t>(i) * cols_ + j;
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Exact support: every entry with nonzero stored value.
inline SparsityPattern support(const Eigen::MatrixXd& m) {
  SparsityPattern p(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j)
      if (m(i, j) != 0.0) p.set(i, j);
  return p;
}

/// Thresholded support: entries with magnitude strictly above tol.
inline SparsityPattern support_tol(const Eigen::MatrixXd& m, double tol) {
  SparsityPattern p(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j)
      if (std::abs(m(i, j)) > tol) p.set(i, j);
  return p;
}

inline void check_same_dims(const SparsityPattern& a, const SparsityPattern& b,
                            const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}

/// Union of supports.
inline SparsityPattern pattern_add(const SparsityPattern& a, const SparsityPattern& b) {
  check_same_dims(a, b, "pattern_add");
  SparsityPattern out(a.rows(), a.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j)
      if (a.at(i, j) || b.at(i, j)) out.set(i, j);
  return out;
}

/// True when every set entry of a is set in b.
inline bool pattern_subset(const SparsityPattern& a, const SparsityPattern& b) {
  check_same_dims(a, b, "pattern_subset");
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j)
      if (a.at(i, j) && !b.at(i, j)) return false;
  return true;
}

/// Boolean matrix product: (i, j) set when some k has a(i, k) and b(k, j).
inline SparsityPattern pattern_mul(const SparsityPattern& a, const SparsityPattern& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("pattern_mul: inner dim mismatch");
  SparsityPattern out(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int k = 0; k < a.cols(); ++k)
      if (a.at(i, k))
        for (int j = 0; j < b.cols(); ++j)
          if (b.at(k, j)) out.set(i, j);
  return out;
}

/// Boolean power; k = 0 gives the identity.
inline SparsityPattern pattern_pow(const SparsityPattern& a, int k) {
  if (a.rows() != a.cols()) throw std::invalid_argument("pattern_pow: square required");
  if (k < 0) throw std::invalid_argument("pattern_pow: negative power");
  SparsityPattern out = SparsityPattern::identity(a.rows());
  for (int p = 0; p < k; ++p) out = pattern_mul(out, a);
  return out;
}

inline SparsityPattern pattern_transpose(const SparsityPattern& a) {
  SparsityPattern out(a.cols(), a.rows());
  a.for_each_set([&](int i, int j) { out.set(j, i); });
  return out;
}

/// Reflexive closure: the pattern with its diagonal filled in.
inline SparsityPattern closure(const SparsityPattern& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("closure: square required");
  return pattern_add(a, SparsityPattern::identity(a.rows()));
}

/// Hop distances from source along influence edges (entry (r, v) set = edge v -> r).
/// forward follows influence; backward follows the reversed edges. -1 = unreachable.
inline std::vector<int> bfs_distances(const SparsityPattern& p, int source, bool forward) {
  if (p.rows() != p.cols()) throw std::invalid_argument("bfs_distances: square required");
  const int n = p.rows();
  std::vector<int> dist(n, -1);
  dist[source] = 0;
  std::queue<int> q;
  q.push(source);
  while (!q.empty()) {
    const int v = q.front();
    q.pop();
    for (int w = 0; w < n; ++w) {
      const bool edge = forward ? p.at(w, v) : p.at(v, w);
      if (edge && dist[w] < 0) {
        dist[w] = dist[v] + 1;
        q.push(w);
      }
    }
  }
  return dist;
}

/// Minimum hop count from one index to another; empty when unreachable.
inline std::optional<int> distance(const SparsityPattern& p, int from, int to) {
  const std::vector<int> d = bfs_distances(p, from, true);
  if (d[to] < 0) return std::nullopt;
  return d[to];
}

/// Indices at hop distance at most d upstream (can reach j) and downstream (reachable
/// from j). Both sets contain j itself and are sorted ascending.
struct LocalityRegion {
  int center = 0;
  int d = 0;
  std::vector<int> up;
  std::vector<int> down;
};

inline LocalityRegion up_down_sets(const SparsityPattern& p, int j, int d) {
  LocalityRegion r;
  r.center = j;
  r.d = d;
  const std::vector<int> fwd = bfs_distances(p, j, true);
  const std::vector<int> bwd = bfs_distances(p, j, false);
  for (int s = 0; s < p.rows(); ++s) {
    if (bwd[s] >= 0 && bwd[s] <= d) r.up.push_back(s);
    if (fwd[s] >= 0 && fwd[s] <= d) r.down.push_back(s);
  }
  return r;
}

/// True when every nonzero (i, j) of x lies within d hops downstream of j.
inline bool is_ad_sparse(const SparsityPattern& x, const SparsityPattern& a, int d) {
  if (x.rows() != a.rows() || x.cols() != a.cols() || a.rows() != a.cols())
    throw std::invalid_argument("is_ad_sparse: square pattern of matching dims required");
  for (int j = 0; j < x.cols(); ++j) {
    std::vector<int> nz = x.col_rows(j);
    if (nz.empty()) continue;
    const std::vector<int> dist = bfs_distances(a, j, true);
    for (int i : nz)
      if (dist[i] < 0 || dist[i] > d) return false;
  }
  return true;
}

/// Positive rational, used for exact floor arithmetic on the interconnection speed.
struct Ratio {
  std::int64_t num = 1;
  std::int64_t den = 1;
};

/// floor(r * k) for k >= 0 in exact integer arithmetic.
inline std::int64_t floor_scaled(const Ratio& r, std::int64_t k) {
  if (r.den <= 0 || r.num <= 0) throw std::invalid_argument("ratio must be positive");
  if (k < 0) throw std::invalid_argument("floor_scaled: negative argument");
  return (r.num * k) / r.den;
}

/// Parse "p/q" or a bare integer into a Ratio.
inline Ratio parse_ratio(const std::string& text) {
  const auto slash = text.find('/');
  Ratio r;
  try {
    if (slash == std::string::npos) {
      r.num = std::stoll(text);
      r.den = 1;
    } else {
      r.num = std::stoll(text.substr(0, slash));
      r.den = std::stoll(text.substr(slash + 1));
    }
  } catch (const std::exception&) {
    throw std::invalid_argument("cannot parse ratio: " + text);
  }
  if (r.num <= 0 || r.den <= 0) throw std::invalid_argument("ratio must be positive: " + text);
  return r;
}

/// Spatio-temporal constraint: one allowed pattern per spectral component k = 0..T.
/// Components beyond T are implicitly zero.
class ConstraintSpace {
 public:
  ConstraintSpace() = default;
  ConstraintSpace(int horizon, int rows, int cols)
      : comps_(static_cast<std::size_t>(horizon) + 1, SparsityPattern(rows, cols)) {
    if (horizon < 0) throw std::invalid_argument("horizon must be nonnegative");
  }

  static ConstraintSpace from_components(std::vector<SparsityPattern> comps) {
    if (comps.empty()) throw std::invalid_argument("need at least the k = 0 component");
    ConstraintSpace s;
    for (const auto& c : comps) check_same_dims(c, comps.front(), "constraint space");
    s.comps_ = std::move(comps);
    return s;
  }

  int horizon() const { return static_cast<int>(comps_.size()) - 1; }
  int rows() const { return comps_.front().rows(); }
  int cols() const { return comps_.front().cols(); }

  const SparsityPattern& comp(int k) const { return comps_.at(static_cast<std::size_t>(k)); }
  SparsityPattern& comp(int k) { return comps_.at(static_cast<std::size_t>(k)); }

  /// Component k, reading beyond the horizon as all-zero.
  SparsityPattern comp_or_zero(int k) const {
    if (k < 0) throw std::out_of_range("negative component");
    if (k > horizon()) return SparsityPattern(rows(), cols());
    return comps_[static_cast<std::size_t>(k)];
  }

  /// Allowed nowhere at any component?
  bool empty() const {
    for (const auto& c : comps_)
      if (!c.empty()) return false;
    return true;
  }

  /// Componentwise subset up to the larger horizon.
  bool subset_of(const ConstraintSpace& other) const {
    if (rows() != other.rows() || cols() != other.cols()) return false;
    const int hmax = std::max(horizon(), other.horizon());
    for (int k = 0; k <= hmax; ++k)
      if (!pattern_subset(comp_or_zero(k), other.comp_or_zero(k))) return false;
    return true;
  }

  /// Componentwise intersection, horizon = min of the two.
  friend ConstraintSpace intersect(const ConstraintSpace& a, const ConstraintSpace& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
      throw std::invalid_argument("intersect: dimension mismatch");
    ConstraintSpace out(std::min(a.horizon(), b.horizon()), a.rows(), a.cols());
    for (int k = 0; k <= out.horizon(); ++k) {
      a.comp(k).for_each_set([&](int i, int j) {
        if (b.comp(k).at(i, j)) out.comp(k).set(i, j);
      });
    }
    return out;
  }

 private:
  std::vector<SparsityPattern> comps_;
};

inline SparsityPattern pattern_hcat(const SparsityPattern& left, const SparsityPattern& right) {
  if (left.rows() != right.rows()) throw std::invalid_argument("pattern_hcat: row mismatch");
  SparsityPattern out(left.rows(), left.cols() + right.cols());
  left.for_each_set([&](int i, int j) { out.set(i, j); });
  right.for_each_set([&](int i, int j) { out.set(i, left.cols() + j); });
  return out;
}

/// Side-by-side constraint spaces, padded to the larger horizon.
inline ConstraintSpace space_hcat(const ConstraintSpace& left, const ConstraintSpace& right) {
  const int T = std::max(left.horizon(), right.horizon());
  std::vector<SparsityPattern> comps;
  for (int k = 0; k <= T; ++k)
    comps.push_back(pattern_hcat(left.comp_or_zero(k), right.comp_or_zero(k)));
  return ConstraintSpace::from_components(std::move(comps));
}

inline SparsityPattern pattern_vcat(const SparsityPattern& top, const SparsityPattern& bottom) {
  if (top.cols() != bottom.cols()) throw std::invalid_argument("pattern_vcat: column mismatch");
  SparsityPattern out(top.rows() + bottom.rows(), top.cols());
  top.for_each_set([&](int i, int j) { out.set(i, j); });
  bottom.for_each_set([&](int i, int j) { out.set(top.rows() + i, j); });
  return out;
}

/// Stacked constraint spaces, padded to the larger horizon.
inline ConstraintSpace space_vcat(const ConstraintSpace& top, const ConstraintSpace& bottom) {
  const int T = std::max(top.horizon(), bottom.horizon());
  std::vector<SparsityPattern> comps;
  for (int k = 0; k <= T; ++k)
    comps.push_back(pattern_vcat(top.comp_or_zero(k), bottom.comp_or_zero(k)));
  return ConstraintSpace::from_components(std::move(comps));
}

/// Locality constraint pair for state and input responses.
///
/// With abar the reflexive closure of the interconnection pattern and velocity h > 1,
/// the state space allows component k (k = 1..T) to spread min(d, floor(h (k - 1)))
/// hops, and the input space allows one extra hop through the actuation footprint,
/// min(d + 1, floor(h (k - 1 - shift))) for k = 1 + shift .. T. shift = 1 models a one
/// step computation delay; its final component is capped at the shared horizon T.
inline std::pair<ConstraintSpace, ConstraintSpace> build_dT_localized(
    const SparsityPattern& abar, const SparsityPattern& b2t, int d, int T, Ratio h,
    int shift = 0) {
  if (T < 1) throw std::invalid_argument("build_dT_localized: T >= 1 required");
  if (d < 0) throw std::invalid_argument("build_dT_localized: d >= 0 required");
  if (h.num <= h.den) throw std::invalid_argument("build_dT_localized: h > 1 required");
  if (shift != 0 && shift != 1) throw std::invalid_argument("build_dT_localized: shift in {0,1}");
  if (abar.rows() != abar.cols()) throw std::invalid_argument("abar must be square");
  if (b2t.cols() != abar.rows()) throw std::invalid_argument("b2t cols must match abar");

  std::vector<SparsityPattern> powers;
  powers.reserve(static_cast<std::size_t>(d) + 2);
  powers.push_back(SparsityPattern::identity(abar.rows()));
  for (int p = 1; p <= d + 1; ++p) powers.push_back(pattern_mul(powers.back(), abar));

  ConstraintSpace s_r(T, abar.rows(), abar.cols());
  ConstraintSpace s_m(T, b2t.rows(), abar.cols());
  for (int k = 1; k <= T; ++k) {
    const std::int64_t reach = floor_scaled(h, k - 1);
    const int er = static_cast<int>(std::min<std::int64_t>(d, reach));
    s_r.comp(k) = powers[static_cast<std::size_t>(er)];
  }
  for (int k = 1 + shift; k <= T; ++k) {
    const std::int64_t reach = floor_scaled(h, k - 1 - shift);
    const int em = static_cast<int>(std::min<std::int64_t>(d + 1, reach));
    s_m.comp(k) = pattern_mul(b2t, powers[static_cast<std::size_t>(em)]);
  }

  // The input-side bound relies on actuation being local to the index level the
  // patterns live at (use node-level patterns for multi-state subsystems).
  const SparsityPattern b2 = pattern_transpose(b2t);
  for (int k = 0; k <= T; ++k)
    if (!pattern_subset(pattern_mul(b2, s_m.comp(k)), powers.back()))
      throw std::invalid_argument(
          "build_dT_localized: actuation footprint not aligned with the interconnection "
          "pattern");
  return {std::move(s_r), std::move(s_m)};
}

/// Convenience overload taking the system matrices directly.
inline std::pair<ConstraintSpace, ConstraintSpace> build_dT_localized(
    const Eigen::MatrixXd& a, const Eigen::MatrixXd& b2, int d, int T, Ratio h,
    int shift = 0) {
  return build_dT_localized(closure(support(a)), support(b2.transpose()), d, T, h, shift);
}

/// Checks of the localized FIR constraint on a candidate space pair.
struct DtValidation {
  bool finite_in_t = false;   ///< no allowed entries beyond component T
  bool state_d_sparse = false;  ///< every state component within d hops
  bool input_reach_bounded = false;  ///< actuation image within d + 1 hops
  bool ok() const { return finite_in_t && state_d_sparse && input_reach_bounded; }
};

inline DtValidation validate_dT(const ConstraintSpace& s_r, const ConstraintSpace& s_m,
                                const SparsityPattern& abar, const SparsityPattern& b2,
                                int d, int T) {
  DtValidation v;
  v.finite_in_t = true;
  for (int k = T + 1; k <= s_r.horizon(); ++k)
    if (!s_r.comp(k).empty()) v.finite_in_t = false;
  for (int k = T + 1; k <= s_m.horizon(); ++k)
    if (!s_m.comp(k).empty()) v.finite_in_t = false;

  const SparsityPattern reach_d = pattern_pow(abar, d);
  const SparsityPattern reach_d1 = pattern_pow(abar, d + 1);
  v.state_d_sparse = true;
  for (int k = 0; k <= s_r.horizon(); ++k)
    if (!pattern_subset(s_r.comp(k), reach_d)) v.state_d_sparse = false;
  v.input_reach_bounded = true;
  for (int k = 0; k <= s_m.horizon(); ++k)
    if (!pattern_subset(pattern_mul(b2, s_m.comp(k)), reach_d1)) v.input_reach_bounded = false;
  return v;
}

/// Communication constraint: entry (i, j) first allowed once k >= tau * hops, where
/// hops is the node distance from the node of column j to the node of row i.
/// Unreachable pairs are never allowed; k = 0 admits only same-node entries.
inline ConstraintSpace comm_delay_space(const SparsityPattern& node_graph, double tau, int T,
                                        const std::vector<int>& row_nodes,
                                        const std::vector<int>& col_nodes) {
  if (tau < 0) throw std::invalid_argument("comm_delay_space: tau >= 0 required");
  const int n_nodes = node_graph.rows();
  std::vector<std::vector<int>> dist(static_cast<std::size_t>(n_nodes));
  for (int s = 0; s < n_nodes; ++s) dist[static_cast<std::size_t>(s)] = bfs_distances(node_graph, s, true);

  const int rows = static_cast<int>(row_nodes.size());
  const int cols = static_cast<int>(col_nodes.size());
  ConstraintSpace space(T, rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      const int hops = dist[static_cast<std::size_t>(col_nodes[j])][static_cast<std::size_t>(row_nodes[i])];
      if (hops < 0) continue;
      for (int k = 0; k <= T; ++k)
        if (static_cast<double>(k) + 1e-12 >= tau * hops) space.comp(k).set(i, j);
    }
  }
  return space;
}

/// Expand a node-level pattern to entry level through row/column node maps.
inline SparsityPattern expand_pattern(const SparsityPattern& node_pat,
                                      const std::vector<int>& row_nodes,
                                      const std::vector<int>& col_nodes) {
  SparsityPattern out(static_cast<int>(row_nodes.size()), static_cast<int>(col_nodes.size()));
  for (int i = 0; i < out.rows(); ++i)
    for (int j = 0; j < out.cols(); ++j)
      if (node_pat.at(row_nodes[static_cast<std::size_t>(i)], col_nodes[static_cast<std::size_t>(j)]))
        out.set(i, j);
  return out;
}

/// Per-index node labels from a vector of per-node dimensions.
inline std::vector<int> node_labels(const std::vector<int>& node_dims) {
  std::vector<int> out;
  for (std::size_t n = 0; n < node_dims.size(); ++n)
    for (int c = 0; c < node_dims[n]; ++c) out.push_back(static_cast<int>(n));
  return out;
}

}  // namespace slskit
