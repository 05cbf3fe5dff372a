/*
 Copyright 2026 The stochlq Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

// Instance files (JSON), per-node CSV tables and report serialization.
// The on-disk formats are described in FORMAT.md.

#pragma once

#include <cstdint>
#include <cstdio>
#include <iomanip>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "stochlq/error.hpp"
#include "stochlq/lq_model.hpp"
#include "stochlq/maximum_principle.hpp"
#include "stochlq/oracle.hpp"
#include "stochlq/spectral.hpp"

namespace stochlq::io {

using nlohmann::json;

inline constexpr int kReportSchemaVersion = 1;
inline constexpr const char* kVersion = "0.1.0";

class ValidationFailure : public Error {
 public:
  explicit ValidationFailure(std::vector<ValidationIssue> issues)
      : Error(ErrorCode::validation, summarize(issues)), issues_(std::move(issues)) {}

  [[nodiscard]] const std::vector<ValidationIssue>& issues() const noexcept { return issues_; }

 private:
  static std::string summarize(const std::vector<ValidationIssue>& issues) {
    std::string out = "invalid instance:";
    for (const auto& i : issues)
      if (i.fatal) out += "\n  " + i.path + ": " + i.message;
    return out;
  }
  std::vector<ValidationIssue> issues_;
};

struct InstanceDocument {
  LQInstance instance;
  ControlDomain domain;
};

struct ParseOptions {
  std::optional<int> depthOverride;  // resample coefficients onto a new grid
  int maxDepth = kDefaultMaxDepth;
};

namespace detail {

class Reader {
 public:
  std::vector<ValidationIssue> issues;

  void error(const std::string& path, const std::string& message) { issues.push_back({path, message, true}); }

  const json* member(const json& obj, const std::string& key, const std::string& path) {
    if (!obj.is_object() || !obj.contains(key)) {
      error(path + "/" + key, "missing required field");
      return nullptr;
    }
    return &obj.at(key);
  }

  std::optional<double> number(const json& v, const std::string& path) {
    if (!v.is_number()) {
      error(path, "expected a number");
      return std::nullopt;
    }
    return v.get<double>();
  }

  std::optional<int> integer(const json& v, const std::string& path) {
    if (!v.is_number_integer()) {
      error(path, "expected an integer");
      return std::nullopt;
    }
    return v.get<int>();
  }

  std::optional<Eigen::VectorXd> vector(const json& v, const std::string& path, Eigen::Index size) {
    if (!v.is_array()) {
      error(path, "expected an array of numbers");
      return std::nullopt;
    }
    if (static_cast<Eigen::Index>(v.size()) != size) {
      error(path, "expected " + std::to_string(size) + " entries, got " + std::to_string(v.size()));
      return std::nullopt;
    }
    Eigen::VectorXd out(size);
    for (Eigen::Index i = 0; i < size; ++i) {
      const auto x = number(v[static_cast<std::size_t>(i)], path + "/" + std::to_string(i));
      if (!x) return std::nullopt;
      out(i) = *x;
    }
    return out;
  }

  /// Row-major matrix given as an array of rows.
  std::optional<Eigen::MatrixXd> matrix(const json& v, const std::string& path, Eigen::Index rows, Eigen::Index cols) {
    if (!v.is_array() || static_cast<Eigen::Index>(v.size()) != rows) {
      error(path, "expected an array of " + std::to_string(rows) + " rows");
      return std::nullopt;
    }
    Eigen::MatrixXd out(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const auto row = vector(v[static_cast<std::size_t>(r)], path + "/" + std::to_string(r), cols);
      if (!row) return std::nullopt;
      out.row(r) = row->transpose();
    }
    return out;
  }
};

/// Interval of the original grid containing the midpoint of interval m of the new one.
inline std::size_t source_interval(int m, int newDepth, int oldDepth) {
  const double mid = (m + 0.5) / newDepth;
  const auto idx = static_cast<std::size_t>(mid * oldDepth);
  return std::min(idx, static_cast<std::size_t>(oldDepth - 1));
}

inline json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json vector_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

}  // namespace detail

/// Parses an instance document; every problem is reported with its JSON pointer.
inline InstanceDocument parse_instance(const json& doc, const ParseOptions& opts = {}) {
  detail::Reader rd;
  if (!doc.is_object()) throw ValidationFailure({{"", "instance document must be a JSON object", true}});

  std::optional<int> n, k, depth;
  std::optional<double> horizon;
  if (const auto* v = rd.member(doc, "n", "")) n = rd.integer(*v, "/n");
  if (const auto* v = rd.member(doc, "k", "")) k = rd.integer(*v, "/k");
  if (const auto* v = rd.member(doc, "T", "")) horizon = rd.number(*v, "/T");
  if (const auto* v = rd.member(doc, "depth", "")) depth = rd.integer(*v, "/depth");
  if (n && *n < 1) rd.error("/n", "state dimension must be >= 1");
  if (k && *k < 1) rd.error("/k", "control dimension must be >= 1");
  if (horizon && !(*horizon > 0.0)) rd.error("/T", "horizon must be positive");
  if (depth && *depth < 1) rd.error("/depth", "depth must be >= 1");
  if (depth && *depth > opts.maxDepth)
    rd.error("/depth", "depth exceeds the configured maximum " + std::to_string(opts.maxDepth));
  if (!rd.issues.empty()) throw ValidationFailure(rd.issues);

  const int fileDepth = *depth;
  const int treeDepth = opts.depthOverride.value_or(fileDepth);
  if (treeDepth < 1 || treeDepth > opts.maxDepth)
    throw ValidationFailure({{"/depth", "depth override " + std::to_string(treeDepth) + " is out of range", true}});

  LQInstance inst(build_tree(treeDepth, *horizon, opts.maxDepth), *n, *k);
  std::vector<IntervalCoefficients> fileIntervals(static_cast<std::size_t>(fileDepth),
                                                  IntervalCoefficients::zeros(*n, *k));

  const json* coeffs = rd.member(doc, "coefficients", "");
  if (coeffs && !coeffs->is_object()) {
    rd.error("/coefficients", "expected an object");
    coeffs = nullptr;
  }
  if (coeffs) {
    struct Field {
      const char* name;
      bool isVector;
      Eigen::Index rows, cols;
    };
    const Field fields[] = {{"A", false, *n, *n}, {"B", false, *n, *k},    {"C", false, *n, *n},
                            {"D", false, *n, *k}, {"b", true, *n, 1},      {"sigma", true, *n, 1},
                            {"Q", false, *n, *n}, {"S", false, *k, *n},    {"R", false, *k, *k}};
    for (const auto& f : fields) {
      const std::string base = std::string("/coefficients/") + f.name;
      const json* arr = rd.member(*coeffs, f.name, "/coefficients");
      if (!arr) continue;
      if (!arr->is_array() || static_cast<int>(arr->size()) != fileDepth) {
        rd.error(base, "expected an array with one entry per tree level (" + std::to_string(fileDepth) + ")");
        continue;
      }
      for (int m = 0; m < fileDepth; ++m) {
        const std::string path = base + "/" + std::to_string(m);
        const json& entry = (*arr)[static_cast<std::size_t>(m)];
        auto& c = fileIntervals[static_cast<std::size_t>(m)];
        if (f.isVector) {
          if (auto v = rd.vector(entry, path, f.rows)) (std::string(f.name) == "b" ? c.b : c.sigma) = *v;
        } else if (auto mat = rd.matrix(entry, path, f.rows, f.cols)) {
          const std::string name = f.name;
          Eigen::MatrixXd& dst = name == "A"   ? c.A
                                 : name == "B" ? c.B
                                 : name == "C" ? c.C
                                 : name == "D" ? c.D
                                 : name == "Q" ? c.Q
                                 : name == "S" ? c.S
                                               : c.R;
          dst = *mat;
        }
      }
    }
    if (const json* g = rd.member(*coeffs, "G", "/coefficients"))
      if (auto mat = rd.matrix(*g, "/coefficients/G", *n, *n)) inst.G = *mat;
  }
  if (const json* x0 = rd.member(doc, "x0", ""))
    if (auto v = rd.vector(*x0, "/x0", *n)) inst.x0 = *v;

  std::vector<HalfSpace> halfspaces;
  if (doc.contains("domain")) {
    const json& dom = doc.at("domain");
    if (!dom.is_object()) {
      rd.error("/domain", "expected an object");
    } else if (dom.contains("halfspaces")) {
      const json& hs = dom.at("halfspaces");
      if (!hs.is_array()) rd.error("/domain/halfspaces", "expected an array");
      for (std::size_t i = 0; hs.is_array() && i < hs.size(); ++i) {
        const std::string path = "/domain/halfspaces/" + std::to_string(i);
        const json* g = rd.member(hs[i], "g", path);
        const json* h = rd.member(hs[i], "h", path);
        std::optional<Eigen::VectorXd> gv;
        std::optional<double> hv;
        if (g) gv = rd.vector(*g, path + "/g", *k);
        if (h) hv = rd.number(*h, path + "/h");
        if (gv && hv) halfspaces.push_back({*gv, *hv});
      }
    }
  }
  if (!rd.issues.empty()) throw ValidationFailure(rd.issues);

  for (int m = 0; m < treeDepth; ++m)
    inst.at(m) = fileIntervals[treeDepth == fileDepth ? static_cast<std::size_t>(m)
                                                      : detail::source_interval(m, treeDepth, fileDepth)];

  ControlDomain domain(*k, std::move(halfspaces));
  auto report = validate_instance(inst, domain);
  if (!report.ok()) throw ValidationFailure(report.issues);
  symmetrize(inst);
  return {std::move(inst), std::move(domain)};
}

inline json write_instance(const LQInstance& inst, const ControlDomain& domain) {
  json coeffs = json::object();
  const char* names[] = {"A", "B", "C", "D", "b", "sigma", "Q", "S", "R"};
  for (const char* name : names) coeffs[name] = json::array();
  for (const auto& c : inst.intervals) {
    coeffs["A"].push_back(detail::matrix_json(c.A));
    coeffs["B"].push_back(detail::matrix_json(c.B));
    coeffs["C"].push_back(detail::matrix_json(c.C));
    coeffs["D"].push_back(detail::matrix_json(c.D));
    coeffs["b"].push_back(detail::vector_json(c.b));
    coeffs["sigma"].push_back(detail::vector_json(c.sigma));
    coeffs["Q"].push_back(detail::matrix_json(c.Q));
    coeffs["S"].push_back(detail::matrix_json(c.S));
    coeffs["R"].push_back(detail::matrix_json(c.R));
  }
  coeffs["G"] = detail::matrix_json(inst.G);
  json hs = json::array();
  for (const auto& s : domain.halfspaces) hs.push_back({{"g", detail::vector_json(s.g)}, {"h", s.h}});
  return {{"n", inst.n},
          {"k", inst.k},
          {"T", inst.tree.horizon()},
          {"depth", inst.tree.depth()},
          {"coefficients", std::move(coeffs)},
          {"x0", detail::vector_json(inst.x0)},
          {"domain", {{"halfspaces", std::move(hs)}}}};
}

/// FNV-1a over the canonical (sorted-key, compact) serialization.
inline std::string instance_digest(const LQInstance& inst, const ControlDomain& domain) {
  const std::string text = write_instance(inst, domain).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  std::ostringstream out;
  out << "fnv1a64:" << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

// ---------------------------------------------------------------- CSV tables

inline void write_control_csv(std::ostream& os, const AdaptedProcess& u) {
  os << "level,index";
  for (int i = 1; i <= u.dim(); ++i) os << ",u_" << i;
  os << '\n' << std::setprecision(17);
  for (int lvl = 0; lvl < u.tree().depth(); ++lvl)
    for (std::size_t j = 0; j < ScenarioTree::level_size(lvl); ++j) {
      os << lvl << ',' << j;
      for (int i = 0; i < u.dim(); ++i) os << ',' << u.at(lvl, j)(i);
      os << '\n';
    }
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  return out;
}

inline bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  std::size_t used = 0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    return false;
  }
  return used == s.size();
}

}  // namespace detail

/// Reads a control table with one row per running node: level,index,u_1..u_k.
/// Any missing, duplicate or out-of-tree row is a bad_control error.
inline AdaptedProcess read_control_csv(std::istream& is, const ScenarioTree& tree, int k) {
  auto bad = [](const std::string& what) { fail(ErrorCode::bad_control, "control file: " + what); };
  std::string line;
  if (!std::getline(is, line)) bad("empty file");
  const auto header = detail::split_csv(line);
  if (header.size() != static_cast<std::size_t>(k) + 2 || header[0] != "level" || header[1] != "index")
    bad("header must be level,index,u_1..u_" + std::to_string(k));

  AdaptedProcess u(tree, k, ProcessKind::running);
  std::vector<bool> seen(tree.running_nodes(), false);
  int row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.find_first_not_of(" \r\t") == std::string::npos) continue;
    const auto cells = detail::split_csv(line);
    const std::string where = "row " + std::to_string(row);
    if (cells.size() != header.size()) bad(where + " has " + std::to_string(cells.size()) + " columns");
    double lvl_d = 0.0, idx_d = 0.0;
    if (!detail::parse_number(cells[0], lvl_d) || !detail::parse_number(cells[1], idx_d)) bad(where + ": bad node id");
    const int lvl = static_cast<int>(lvl_d);
    const auto idx = static_cast<std::size_t>(idx_d);
    if (lvl_d != lvl || idx_d < 0 || idx_d != static_cast<double>(idx) || lvl < 0 || lvl >= tree.depth() ||
        idx >= ScenarioTree::level_size(lvl))
      bad(where + ": node (" + cells[0] + "," + cells[1] + ") is not a running node of the tree");
    const auto node = ScenarioTree::node_index(lvl, idx);
    if (seen[node]) bad(where + ": duplicate node (" + cells[0] + "," + cells[1] + ")");
    seen[node] = true;
    for (int i = 0; i < k; ++i) {
      double v = 0.0;
      if (!detail::parse_number(cells[static_cast<std::size_t>(i) + 2], v)) bad(where + ": bad control value");
      u.at(lvl, idx)(i) = v;
    }
  }
  for (std::size_t node = 0; node < seen.size(); ++node)
    if (!seen[node]) {
      const int lvl = ScenarioTree::level_of(node);
      bad("missing row for node (" + std::to_string(lvl) + "," +
          std::to_string(node - ScenarioTree::level_offset(lvl)) + ")");
    }
  return u;
}

/// One row per node of levels 0..N: level,index,time,P_r_c (row-major).
inline void write_matrix_field_csv(std::ostream& os, const ScenarioTree& tree, const MatrixField& field,
                                   const std::string& name, int maxLevel) {
  const auto rows = field.empty() ? 0 : field.front().rows();
  const auto cols = field.empty() ? 0 : field.front().cols();
  os << "level,index,time";
  for (Eigen::Index r = 1; r <= rows; ++r)
    for (Eigen::Index c = 1; c <= cols; ++c) os << ',' << name << '_' << r << '_' << c;
  os << '\n' << std::setprecision(17);
  for (int lvl = 0; lvl <= maxLevel; ++lvl)
    for (std::size_t j = 0; j < ScenarioTree::level_size(lvl); ++j) {
      const auto& m = field[ScenarioTree::node_index(lvl, j)];
      os << lvl << ',' << j << ',' << tree.time(lvl);
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) os << ',' << m(r, c);
      os << '\n';
    }
}

// ------------------------------------------------------------------ reports

inline json control_json(const AdaptedProcess& u) {
  json rows = json::array();
  for (int lvl = 0; lvl < u.tree().depth(); ++lvl)
    for (std::size_t j = 0; j < ScenarioTree::level_size(lvl); ++j)
      rows.push_back({{"level", lvl}, {"index", j}, {"u", detail::vector_json(u.at(lvl, j))}});
  return rows;
}

inline json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

inline json to_json(const SpectralReport& r) {
  return {{"lambdaMax", r.lambdaMax}, {"mu", r.mu},        {"method", to_string(r.method)},
          {"iterations", r.iterations}, {"residual", r.residual}, {"shift", r.shift}};
}

inline json to_json(const MPReport& r) {
  json out = {{"check", r.check},
              {"verdict", r.pass ? "pass" : "fail"},
              {"worstViolation", finite_or_null(r.worstViolation)},
              {"worstNode", {{"level", r.worstNode.level}, {"index", r.worstNode.index}}},
              {"worstWitness", detail::vector_json(r.worstWitness)},
              {"tolerance", r.tolerance},
              {"mu", r.mu}};
  if (r.gradients) out["gradients"] = control_json(*r.gradients);
  return out;
}

inline json to_json(const OracleResult& r) {
  json ties = json::array();
  for (const auto& t : r.ties) ties.push_back(control_json(t));
  return {{"bestCost", r.bestCost},       {"bestControl", control_json(r.bestControl)},
          {"enumerated", r.enumerated},   {"tieCount", r.tieCount},
          {"ties", std::move(ties)}};
}

inline json to_json(const EquivalenceCertificate& c) {
  json sampling = {{"pass", c.samplingPass},
                   {"binaryOptimum", c.binaryOptimum},
                   {"minSampledCost", c.minSampledCost},
                   {"samples", c.samples},
                   {"seed", c.seed}};
  if (c.samplingWitness) sampling["witness"] = control_json(*c.samplingWitness);
  return {{"verdict", c.pass() ? "pass" : "fail"},
          {"lambdaMax", c.lambdaMax},
          {"mu", c.mu},
          {"spectralMode", to_string(c.spectralMode)},
          {"binaryIdentity",
           {{"pass", c.identityPass},
            {"maxRelativeDefect", c.identityMaxDefect},
            {"worstControlCode", c.identityWitness},
            {"enumerated", c.enumerated}}},
          {"relaxedSampling", std::move(sampling)},
          {"stationarity",
           {{"pass", c.stationarityPass},
            {"worstViolation", finite_or_null(c.stationarityWorst)},
            {"worstNode", {{"level", c.stationarityWorstNode.level}, {"index", c.stationarityWorstNode.index}}}}},
          {"bestControl", control_json(c.bestControl)},
          {"warnings", c.nonBinaryVertexWarning
                           ? json::array({"relaxed control set has non-binary extreme points; "
                                          "vertex attainment does not imply binary attainment"})
                           : json::array()},
          {"nonBinaryVertexWarning", c.nonBinaryVertexWarning}};
}

struct ReportHeader {
  std::string command;
  std::string instanceDigest;
  json parameters = json::object();
};

inline json make_report(const ReportHeader& header, json results, json timings = json::object()) {
  return {{"schemaVersion", kReportSchemaVersion},
          {"version", kVersion},
          {"command", header.command},
          {"instanceDigest", header.instanceDigest},
          {"parameters", header.parameters},
          {"results", std::move(results)},
          {"timings", std::move(timings)}};
}

}  // namespace stochlq::io
