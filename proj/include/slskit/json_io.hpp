#pragma once

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fir.hpp"
#include "of_synth.hpp"
#include "plant.hpp"
#include "runtime.hpp"
#include "sf_synth.hpp"
#include "sparsity.hpp"

namespace slskit {

using Json = nlohmann::json;

/// Serialization failure with the offending field or file in the message.
class JsonError : public std::runtime_error {
 public:
  explicit JsonError(const std::string& what) : std::runtime_error(what) {}
};

inline const Json& require_field(const Json& j, const char* name) {
  if (!j.is_object() || !j.contains(name))
    throw JsonError(std::string("missing field: ") + name);
  return j.at(name);
}

template <typename T>
T field_as(const Json& j, const char* name) {
  try {
    return require_field(j, name).get<T>();
  } catch (const JsonError&) {
    throw;
  } catch (const std::exception& e) {
    throw JsonError(std::string("field '") + name + "' has unexpected shape: " + e.what());
  }
}

// Dense matrix as {rows, cols, data} with row-major data.
inline Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json data = Json::array();
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

inline Eigen::MatrixXd matrix_from_json(const Json& j) {
  const int rows = field_as<int>(j, "rows");
  const int cols = field_as<int>(j, "cols");
  const auto data = field_as<std::vector<double>>(j, "data");
  if (static_cast<int>(data.size()) != rows * cols)
    throw JsonError("matrix data length does not match dims");
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int c = 0; c < cols; ++c) m(i, c) = data[static_cast<std::size_t>(i * cols + c)];
  return m;
}

// Pattern rows are run-length encoded, alternating zero runs and one runs,
// always starting with the zero run (possibly of length 0).
inline void to_json(Json& j, const SparsityPattern& p) {
  Json rle = Json::array();
  for (int i = 0; i < p.rows(); ++i) {
    Json row = Json::array();
    int run = 0;
    bool current = false;
    for (int c = 0; c < p.cols(); ++c) {
      if (p.at(i, c) == current) {
        ++run;
      } else {
        row.push_back(run);
        current = !current;
        run = 1;
      }
    }
    row.push_back(run);
    rle.push_back(std::move(row));
  }
  j = Json{{"rows", p.rows()}, {"cols", p.cols()}, {"rle", std::move(rle)}};
}

inline void from_json(const Json& j, SparsityPattern& p) {
  const int rows = field_as<int>(j, "rows");
  const int cols = field_as<int>(j, "cols");
  const auto& rle = require_field(j, "rle");
  if (!rle.is_array() || static_cast<int>(rle.size()) != rows)
    throw JsonError("pattern rle must have one entry per row");
  p = SparsityPattern(rows, cols);
  for (int i = 0; i < rows; ++i) {
    int c = 0;
    bool current = false;
    for (const auto& run : rle.at(static_cast<std::size_t>(i))) {
      const int len = run.get<int>();
      if (len < 0 || c + len > cols) throw JsonError("pattern rle run overflows row");
      if (current)
        for (int s = 0; s < len; ++s) p.set(i, c + s);
      c += len;
      current = !current;
    }
    if (c != cols) throw JsonError("pattern rle row does not cover all columns");
  }
}

inline void to_json(Json& j, const ConstraintSpace& s) {
  Json comps = Json::array();
  for (int k = 0; k <= s.horizon(); ++k) comps.push_back(s.comp(k));
  j = Json{{"horizon", s.horizon()}, {"components", std::move(comps)}};
}

inline void from_json(const Json& j, ConstraintSpace& s) {
  const int horizon = field_as<int>(j, "horizon");
  const auto& comps = require_field(j, "components");
  if (!comps.is_array() || static_cast<int>(comps.size()) != horizon + 1)
    throw JsonError("constraint space needs horizon + 1 components");
  std::vector<SparsityPattern> parts;
  for (const auto& c : comps) parts.push_back(c.get<SparsityPattern>());
  s = ConstraintSpace::from_components(std::move(parts));
}

inline void to_json(Json& j, const FirMatrix& f) {
  Json coeffs = Json::array();
  for (int k = 0; k <= f.horizon(); ++k) {
    Json flat = Json::array();
    for (int i = 0; i < f.rows(); ++i)
      for (int c = 0; c < f.cols(); ++c) flat.push_back(f.coeff(k)(i, c));
    coeffs.push_back(std::move(flat));
  }
  j = Json{{"rows", f.rows()}, {"cols", f.cols()}, {"T", f.horizon()},
           {"coeffs", std::move(coeffs)}};
}

inline void from_json(const Json& j, FirMatrix& f) {
  const int rows = field_as<int>(j, "rows");
  const int cols = field_as<int>(j, "cols");
  const int T = field_as<int>(j, "T");
  const auto& coeffs = require_field(j, "coeffs");
  if (!coeffs.is_array() || static_cast<int>(coeffs.size()) != T + 1)
    throw JsonError("fir coeffs must have T + 1 entries");
  f = FirMatrix(rows, cols, T);
  for (int k = 0; k <= T; ++k) {
    const auto flat = coeffs.at(static_cast<std::size_t>(k)).get<std::vector<double>>();
    if (static_cast<int>(flat.size()) != rows * cols)
      throw JsonError("fir coefficient length does not match dims");
    for (int i = 0; i < rows; ++i)
      for (int c = 0; c < cols; ++c) f.coeff(k)(i, c) = flat[static_cast<std::size_t>(i * cols + c)];
  }
}

inline void to_json(Json& j, const SystemResponse& r) {
  j = Json{{"R", r.R}, {"N", r.N}, {"M", r.M}, {"L", r.L}};
}

inline void from_json(const Json& j, SystemResponse& r) {
  r.R = field_as<FirMatrix>(j, "R");
  r.N = field_as<FirMatrix>(j, "N");
  r.M = field_as<FirMatrix>(j, "M");
  r.L = field_as<FirMatrix>(j, "L");
}

inline void to_json(Json& j, const PlantModel& p) {
  j = Json{{"A", matrix_to_json(p.A)},     {"B1", matrix_to_json(p.B1)},
           {"B2", matrix_to_json(p.B2)},   {"C1", matrix_to_json(p.C1)},
           {"C2", matrix_to_json(p.C2)},   {"D12", matrix_to_json(p.D12)},
           {"D21", matrix_to_json(p.D21)}, {"graph", p.graph},
           {"node_dims", p.node_dims}};
}

inline void from_json(const Json& j, PlantModel& p) {
  p.A = matrix_from_json(require_field(j, "A"));
  p.B1 = matrix_from_json(require_field(j, "B1"));
  p.B2 = matrix_from_json(require_field(j, "B2"));
  p.C1 = matrix_from_json(require_field(j, "C1"));
  p.C2 = matrix_from_json(require_field(j, "C2"));
  p.D12 = matrix_from_json(require_field(j, "D12"));
  p.D21 = matrix_from_json(require_field(j, "D21"));
  p.graph = field_as<SparsityPattern>(j, "graph");
  p.node_dims = field_as<std::vector<int>>(j, "node_dims");
  check_plant(p);
}

inline void to_json(Json& j, const SfResult& r) {
  j = Json{{"R", r.R},
           {"M", r.M},
           {"objective", r.objective},
           {"per_column_objectives", r.per_column_objectives},
           {"status", r.status == SolveStatus::feasible ? "feasible" : "infeasible"},
           {"failing_column", r.failing_column},
           {"worst_residual", r.worst_residual}};
}

inline void from_json(const Json& j, SfResult& r) {
  r.R = field_as<FirMatrix>(j, "R");
  r.M = field_as<FirMatrix>(j, "M");
  r.objective = field_as<double>(j, "objective");
  r.per_column_objectives = field_as<std::vector<double>>(j, "per_column_objectives");
  const std::string status = field_as<std::string>(j, "status");
  if (status != "feasible" && status != "infeasible")
    throw JsonError("unknown solve status: " + status);
  r.status = status == "feasible" ? SolveStatus::feasible : SolveStatus::infeasible;
  r.failing_column = field_as<int>(j, "failing_column");
  r.worst_residual = field_as<double>(j, "worst_residual");
}

inline const char* admm_status_name(AdmmStatus s) {
  switch (s) {
    case AdmmStatus::converged: return "converged";
    case AdmmStatus::maxed: return "maxed";
    case AdmmStatus::diverged: return "diverged";
  }
  return "unknown";
}

/// Convergence record only; the iterates themselves stay out of artifacts.
inline void to_json(Json& j, const AdmmState& s) {
  j = Json{{"iterations", s.iterations},
           {"status", admm_status_name(s.status)},
           {"primal_hist", s.primal_hist},
           {"dual_hist", s.dual_hist},
           {"objective_hist", s.objective_hist},
           {"cache_hits", s.cache_hits},
           {"cache_misses", s.cache_misses}};
}

// Every float below is printed at 17 significant digits, enough to round-trip
// a double exactly, so equal results serialize to identical bytes.
inline std::string format_double(double v) {
  if (!std::isfinite(v)) return "null";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace detail {

inline void dump_fixed_rec(const Json& j, int depth, std::string& out) {
  const std::string pad(static_cast<std::size_t>(depth) * 2, ' ');
  const std::string inner(static_cast<std::size_t>(depth + 1) * 2, ' ');
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += inner + Json(it.key()).dump() + ": ";
        dump_fixed_rec(it.value(), depth + 1, out);
      }
      out += "\n" + pad + "}";
      return;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      out += "[\n";
      bool first = true;
      for (const auto& el : j) {
        if (!first) out += ",\n";
        first = false;
        out += inner;
        dump_fixed_rec(el, depth + 1, out);
      }
      out += "\n" + pad + "]";
      return;
    }
    case Json::value_t::number_float:
      out += format_double(j.get<double>());
      return;
    default:
      out += j.dump();
      return;
  }
}

}  // namespace detail

inline std::string dump_fixed(const Json& j) {
  std::string out;
  detail::dump_fixed_rec(j, 0, out);
  out += "\n";
  return out;
}

inline void save_json(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw JsonError("cannot open for writing: " + path);
  out << dump_fixed(j);
  if (!out) throw JsonError("write failed: " + path);
}

inline Json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw JsonError("cannot open: " + path);
  try {
    return Json::parse(in);
  } catch (const std::exception& e) {
    throw JsonError("parse error in " + path + ": " + e.what());
  }
}

inline void save_plant(const std::string& path, const PlantModel& p) {
  save_json(path, Json(p));
}

inline PlantModel load_plant(const std::string& path) {
  try {
    return load_json(path).get<PlantModel>();
  } catch (const JsonError&) {
    throw;
  } catch (const std::exception& e) {
    throw JsonError("invalid plant in " + path + ": " + e.what());
  }
}

/// Labeled numeric table; the lingua franca of sweep and trace artifacts.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline void save_csv(const std::string& path, const CsvTable& t) {
  std::ofstream out(path);
  if (!out) throw JsonError("cannot open for writing: " + path);
  for (std::size_t i = 0; i < t.header.size(); ++i)
    out << (i ? "," : "") << t.header[i];
  out << "\n";
  for (const auto& row : t.rows) {
    if (row.size() != t.header.size()) throw JsonError("csv row width mismatch");
    for (std::size_t i = 0; i < row.size(); ++i)
      out << (i ? "," : "") << format_double(row[i]);
    out << "\n";
  }
  if (!out) throw JsonError("write failed: " + path);
}

inline CsvTable load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw JsonError("cannot open: " + path);
  CsvTable t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (first) {
      t.header = std::move(cells);
      first = false;
      continue;
    }
    std::vector<double> row;
    for (const auto& c : cells) {
      try {
        row.push_back(std::stod(c));
      } catch (const std::exception&) {
        throw JsonError("non-numeric csv cell '" + c + "' in " + path);
      }
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

/// One row per step; vector channels fan out into indexed columns.
inline CsvTable trace_to_csv(const SimulationTrace& tr) {
  CsvTable t;
  t.header.push_back("step");
  const auto add_channel = [&](const char* name, const std::vector<Eigen::VectorXd>& ch) {
    const int dim = ch.empty() ? 0 : static_cast<int>(ch.front().size());
    for (int i = 0; i < dim; ++i) t.header.push_back(std::string(name) + "_" + std::to_string(i));
  };
  add_channel("x", tr.x);
  add_channel("u", tr.u);
  add_channel("y", tr.y);
  add_channel("internal", tr.internal);
  add_channel("dx", tr.dx);
  add_channel("dy", tr.dy);
  add_channel("du", tr.du);
  add_channel("v_R", tr.v_R);
  add_channel("v_M", tr.v_M);
  add_channel("v_A", tr.v_A);
  add_channel("d_beta", tr.d_beta);
  for (int k = 0; k < tr.horizon; ++k) {
    std::vector<double> row;
    row.push_back(static_cast<double>(k));
    const std::size_t i = static_cast<std::size_t>(k);
    for (const auto* ch : {&tr.x, &tr.u, &tr.y, &tr.internal, &tr.dx, &tr.dy, &tr.du,
                           &tr.v_R, &tr.v_M, &tr.v_A, &tr.d_beta})
      for (int c = 0; c < (*ch)[i].size(); ++c) row.push_back((*ch)[i](c));
    t.rows.push_back(std::move(row));
  }
  return t;
}

/// Per iteration convergence log of an ADMM run.
inline CsvTable residuals_to_csv(const AdmmState& s) {
  CsvTable t;
  t.header = {"iter", "primal", "dual", "objective"};
  for (std::size_t i = 0; i < s.primal_hist.size(); ++i)
    t.rows.push_back({static_cast<double>(i + 1), s.primal_hist[i], s.dual_hist[i],
                      i < s.objective_hist.size() ? s.objective_hist[i] : 0.0});
  return t;
}

}  // namespace slskit
