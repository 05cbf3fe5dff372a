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

// Linear-quadratic problem data on a scenario tree.
//
//   dX = (A X + B u + b) dt + (C X + D u + sigma) dW,   X(0) = x0
//   J(u) = E[ 1/2 sum_n (<Q X,X> + 2<S X,u> + <R u,u>) dt + 1/2 <G X_N, X_N> ]
//
// Coefficients are piecewise constant, one set per interval [t_n, t_{n+1}),
// and the state recursion is explicit Euler sampled at the left endpoint.
// No definiteness is assumed for Q, R or G.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stochlq/error.hpp"
#include "stochlq/tree.hpp"

namespace stochlq {

inline constexpr double kMembershipTolerance = 1e-9;
inline constexpr double kSymmetryTolerance = 1e-12;

/// Coefficients on one interval [t_n, t_{n+1}).
struct IntervalCoefficients {
  Eigen::MatrixXd A, B, C, D;  // n x n, n x k, n x n, n x k
  Eigen::VectorXd b, sigma;    // n
  Eigen::MatrixXd Q, S, R;     // n x n, k x n, k x k

  static IntervalCoefficients zeros(int n, int k) {
    return {Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, k), Eigen::MatrixXd::Zero(n, n),
            Eigen::MatrixXd::Zero(n, k), Eigen::VectorXd::Zero(n),    Eigen::VectorXd::Zero(n),
            Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(k, n), Eigen::MatrixXd::Zero(k, k)};
  }
};

struct LQInstance {
  ScenarioTree tree;
  int n;
  int k;
  std::vector<IntervalCoefficients> intervals;  // one per tree level 0..N-1
  Eigen::MatrixXd G;
  Eigen::VectorXd x0;

  /// All-zero coefficients on `tree`.
  LQInstance(ScenarioTree tree_, int stateDim, int controlDim)
      : tree(tree_),
        n(stateDim),
        k(controlDim),
        intervals(static_cast<std::size_t>(tree_.depth()), IntervalCoefficients::zeros(stateDim, controlDim)),
        G(Eigen::MatrixXd::Zero(stateDim, stateDim)),
        x0(Eigen::VectorXd::Zero(stateDim)) {
    require(stateDim >= 1 && controlDim >= 1, "state and control dimensions must be >= 1");
  }

  [[nodiscard]] const IntervalCoefficients& at(int level) const { return intervals[static_cast<std::size_t>(level)]; }
  [[nodiscard]] IntervalCoefficients& at(int level) { return intervals[static_cast<std::size_t>(level)]; }

  /// Applies the same coefficients on every interval.
  void set_all(const IntervalCoefficients& c) { std::fill(intervals.begin(), intervals.end(), c); }
};

struct HalfSpace {
  Eigen::VectorXd g;
  double h;
};

/// C = { v : <g_i, v> <= h_i }, U = C cap {0,1}^k, relaxed set C cap [0,1]^k.
struct ControlDomain {
  int k;
  std::vector<HalfSpace> halfspaces;  // empty: C = R^k

  explicit ControlDomain(int dim, std::vector<HalfSpace> hs = {}) : k(dim), halfspaces(std::move(hs)) {
    require(dim >= 1, "control dimension must be >= 1");
    for (const auto& s : halfspaces) require(s.g.size() == dim, "half-space normal has wrong dimension");
  }

  [[nodiscard]] bool in_polytope(const Eigen::VectorXd& v, double tol = kMembershipTolerance) const {
    return std::all_of(halfspaces.begin(), halfspaces.end(),
                       [&](const HalfSpace& s) { return s.g.dot(v) - s.h <= tol; });
  }

  [[nodiscard]] bool in_box(const Eigen::VectorXd& v, double tol = kMembershipTolerance) const {
    return v.size() == k && (v.array() >= -tol).all() && (v.array() <= 1.0 + tol).all();
  }

  [[nodiscard]] bool is_binary(const Eigen::VectorXd& v, double tol = kMembershipTolerance) const {
    return v.size() == k && (v.array().abs() <= tol || (v.array() - 1.0).abs() <= tol).all();
  }

  [[nodiscard]] bool in_binary_set(const Eigen::VectorXd& v, double tol = kMembershipTolerance) const {
    return is_binary(v, tol) && in_polytope(v, tol);
  }
  [[nodiscard]] bool in_relaxed_set(const Eigen::VectorXd& v, double tol = kMembershipTolerance) const {
    return in_box(v, tol) && in_polytope(v, tol);
  }
};

inline constexpr int kMaxBinaryEnumerationDim = 20;
inline constexpr int kMaxVertexEnumerationDim = 12;

/// All points of {0,1}^k inside C, lexicographically sorted.
inline std::vector<Eigen::VectorXd> enumerate_binary_vertices(const ControlDomain& domain) {
  require(domain.k <= kMaxBinaryEnumerationDim,
          "binary enumeration is capped at k = " + std::to_string(kMaxBinaryEnumerationDim));
  std::vector<Eigen::VectorXd> out;
  const std::size_t count = std::size_t{1} << domain.k;
  for (std::size_t code = 0; code < count; ++code) {
    Eigen::VectorXd v(domain.k);
    // most significant bit first gives lexicographic order
    for (int i = 0; i < domain.k; ++i) v(i) = static_cast<double>((code >> (domain.k - 1 - i)) & 1U);
    if (domain.in_polytope(v)) out.push_back(std::move(v));
  }
  return out;
}

namespace detail {

inline bool lexicographic_less(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

}  // namespace detail

/// Extreme points of C cap [0,1]^k, lexicographically sorted.
///
/// With no half-spaces this is the 2^k box corners. Otherwise every k-subset
/// of active constraints is solved and kept if feasible and nondegenerate.
inline std::vector<Eigen::VectorXd> enumerate_relaxed_vertices(const ControlDomain& domain) {
  const int k = domain.k;
  require(k <= kMaxVertexEnumerationDim,
          "vertex enumeration is capped at k = " + std::to_string(kMaxVertexEnumerationDim));
  if (domain.halfspaces.empty()) {
    ControlDomain box(k);
    return enumerate_binary_vertices(box);
  }

  // rows: half-spaces, then -v_i <= 0, then v_i <= 1
  const int m = static_cast<int>(domain.halfspaces.size()) + 2 * k;
  Eigen::MatrixXd rows(m, k);
  Eigen::VectorXd rhs(m);
  int r = 0;
  for (const auto& s : domain.halfspaces) {
    rows.row(r) = s.g.transpose();
    rhs(r++) = s.h;
  }
  for (int i = 0; i < k; ++i) {
    rows.row(r) = -Eigen::RowVectorXd::Unit(k, i);
    rhs(r++) = 0.0;
    rows.row(r) = Eigen::RowVectorXd::Unit(k, i);
    rhs(r++) = 1.0;
  }

  std::vector<Eigen::VectorXd> out;
  std::vector<int> pick(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) pick[static_cast<std::size_t>(i)] = i;
  while (true) {
    Eigen::MatrixXd sys(k, k);
    Eigen::VectorXd b(k);
    for (int i = 0; i < k; ++i) {
      sys.row(i) = rows.row(pick[static_cast<std::size_t>(i)]);
      b(i) = rhs(pick[static_cast<std::size_t>(i)]);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(sys);
    if (lu.rank() == k) {
      Eigen::VectorXd v = lu.solve(b);
      v = v.unaryExpr([](double x) { return std::abs(x) < 1e-12 ? 0.0 : x; });
      if (domain.in_relaxed_set(v)) {
        const bool seen = std::any_of(out.begin(), out.end(),
                                      [&](const Eigen::VectorXd& w) { return (w - v).cwiseAbs().maxCoeff() <= 1e-9; });
        if (!seen) out.push_back(std::move(v));
      }
    }
    // next k-combination of 0..m-1
    int i = k - 1;
    while (i >= 0 && pick[static_cast<std::size_t>(i)] == m - k + i) --i;
    if (i < 0) break;
    ++pick[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j) pick[static_cast<std::size_t>(j)] = pick[static_cast<std::size_t>(j - 1)] + 1;
  }
  std::sort(out.begin(), out.end(), detail::lexicographic_less);
  return out;
}

enum class ControlTag { binary, relaxed };

/// A running control process whose node values are verified to lie in U
/// (binary) or in the relaxed set on construction.
class ControlProcess {
 public:
  ControlProcess(AdaptedProcess values, const ControlDomain& domain, ControlTag tag)
      : values_(std::move(values)), tag_(tag) {
    require(values_.kind() == ProcessKind::running, "a control must be a running process");
    require(values_.dim() == domain.k, "control dimension does not match the domain");
    for (Eigen::Index i = 0; i < values_.values().cols(); ++i) {
      const Eigen::VectorXd v = values_.values().col(i);
      const bool ok = tag == ControlTag::binary ? domain.in_binary_set(v) : domain.in_relaxed_set(v);
      require(ok, std::string("control value at node ") + std::to_string(i) + " is outside the " +
                      (tag == ControlTag::binary ? "binary set U" : "relaxed set"));
    }
  }

  [[nodiscard]] const AdaptedProcess& values() const noexcept { return values_; }
  [[nodiscard]] ControlTag tag() const noexcept { return tag_; }

 private:
  AdaptedProcess values_;
  ControlTag tag_;
};

struct ValidationIssue {
  std::string path;  // JSON pointer into the instance document
  std::string message;
  bool fatal = true;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  [[nodiscard]] bool ok() const {
    return std::none_of(issues.begin(), issues.end(), [](const ValidationIssue& i) { return i.fatal; });
  }
};

namespace detail {

inline double symmetry_defect(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols() || m.size() == 0) return 0.0;
  return (m - m.transpose()).cwiseAbs().maxCoeff();
}

inline void check_shape(ValidationReport& report, const std::string& path, const Eigen::MatrixXd& m, Eigen::Index rows,
                        Eigen::Index cols) {
  if (m.rows() != rows || m.cols() != cols)
    report.issues.push_back({path, "expected " + std::to_string(rows) + "x" + std::to_string(cols) + ", got " +
                                       std::to_string(m.rows()) + "x" + std::to_string(m.cols())});
}

inline void check_symmetric(ValidationReport& report, const std::string& path, const Eigen::MatrixXd& m) {
  const double scale = std::max(1.0, m.size() ? m.cwiseAbs().maxCoeff() : 0.0);
  if (m.rows() == m.cols() && symmetry_defect(m) > kSymmetryTolerance * scale)
    report.issues.push_back({path, "matrix is not symmetric (defect " + std::to_string(symmetry_defect(m)) + ")"});
}

}  // namespace detail

/// Dimension, symmetry and U != empty checks; every violation is listed.
inline ValidationReport validate_instance(const LQInstance& inst, const ControlDomain& domain) {
  ValidationReport report;
  const int n = inst.n;
  const int k = inst.k;
  if (static_cast<int>(inst.intervals.size()) != inst.tree.depth())
    report.issues.push_back({"/coefficients", "coefficient arrays must have one entry per tree level"});
  for (std::size_t m = 0; m < inst.intervals.size(); ++m) {
    const auto& c = inst.intervals[m];
    const std::string idx = "/" + std::to_string(m);
    detail::check_shape(report, "/coefficients/A" + idx, c.A, n, n);
    detail::check_shape(report, "/coefficients/B" + idx, c.B, n, k);
    detail::check_shape(report, "/coefficients/C" + idx, c.C, n, n);
    detail::check_shape(report, "/coefficients/D" + idx, c.D, n, k);
    detail::check_shape(report, "/coefficients/b" + idx, c.b, n, 1);
    detail::check_shape(report, "/coefficients/sigma" + idx, c.sigma, n, 1);
    detail::check_shape(report, "/coefficients/Q" + idx, c.Q, n, n);
    detail::check_shape(report, "/coefficients/S" + idx, c.S, k, n);
    detail::check_shape(report, "/coefficients/R" + idx, c.R, k, k);
    detail::check_symmetric(report, "/coefficients/Q" + idx, c.Q);
    detail::check_symmetric(report, "/coefficients/R" + idx, c.R);
  }
  detail::check_shape(report, "/coefficients/G", inst.G, n, n);
  detail::check_symmetric(report, "/coefficients/G", inst.G);
  detail::check_shape(report, "/x0", inst.x0, n, 1);
  if (domain.k != k) report.issues.push_back({"/domain", "domain dimension differs from k"});
  if (domain.k == k && k <= kMaxBinaryEnumerationDim && enumerate_binary_vertices(domain).empty())
    report.issues.push_back({"/domain/halfspaces", "U empty: no binary point satisfies the half-spaces"});
  return report;
}

/// Replaces Q, R, G by their symmetric parts.
inline void symmetrize(LQInstance& inst) {
  for (auto& c : inst.intervals) {
    c.Q = 0.5 * (c.Q + c.Q.transpose()).eval();
    c.R = 0.5 * (c.R + c.R.transpose()).eval();
  }
  inst.G = 0.5 * (inst.G + inst.G.transpose()).eval();
}

namespace detail {

inline void require_control(const LQInstance& inst, const AdaptedProcess& u) {
  require(u.tree() == inst.tree, "control lives on a different tree than the instance");
  require(u.kind() == ProcessKind::running, "control must be a running process");
  require(u.dim() == inst.k, "control dimension " + std::to_string(u.dim()) + " differs from k = " +
                                 std::to_string(inst.k));
}

}  // namespace detail

/// Euler state recursion with the given drift/diffusion offsets and initial value.
inline Trajectory forward_state(const LQInstance& inst, const AdaptedProcess& u, const Eigen::VectorXd& x0,
                                bool withOffsets = true) {
  detail::require_control(inst, u);
  require(x0.size() == inst.n, "initial state dimension mismatch");
  const auto& tree = inst.tree;
  const double dt = tree.dt();
  Trajectory X(tree, inst.n);
  X.at(0, 0) = x0;
  for (int lvl = 0; lvl < tree.depth(); ++lvl) {
    const auto& c = inst.at(lvl);
    const auto xs = X.level(lvl);
    const auto us = u.level(lvl);
    Eigen::MatrixXd drift = c.A * xs + c.B * us;
    Eigen::MatrixXd diffusion = c.C * xs + c.D * us;
    if (withOffsets) {
      drift.colwise() += c.b;
      diffusion.colwise() += c.sigma;
    }
    auto next = X.level(lvl + 1);
    for (Eigen::Index j = 0; j < xs.cols(); ++j) {
      const Eigen::VectorXd base = xs.col(j) + dt * drift.col(j);
      next.col(2 * j) = base + tree.sqrt_dt() * diffusion.col(j);
      next.col(2 * j + 1) = base - tree.sqrt_dt() * diffusion.col(j);
    }
  }
  return X;
}

inline Trajectory forward_state(const LQInstance& inst, const AdaptedProcess& u) {
  return forward_state(inst, u, inst.x0, true);
}

/// J(u) from an explicit state trajectory.
inline double cost_of_trajectory(const LQInstance& inst, const Trajectory& X, const AdaptedProcess& u) {
  const auto& tree = inst.tree;
  double running = 0.0;
  for (int lvl = 0; lvl < tree.depth(); ++lvl) {
    const auto& c = inst.at(lvl);
    const auto xs = X.level(lvl);
    const auto us = u.level(lvl);
    const double level_sum = (xs.cwiseProduct(c.Q * xs)).sum() + 2.0 * (us.cwiseProduct(c.S * xs)).sum() +
                             (us.cwiseProduct(c.R * us)).sum();
    running += tree.running_weight(lvl) * level_sum;
  }
  const auto xT = X.level(tree.depth());
  const double terminal = ScenarioTree::path_probability(tree.depth()) * (xT.cwiseProduct(inst.G * xT)).sum();
  return 0.5 * (running + terminal);
}

inline double cost_direct(const LQInstance& inst, const AdaptedProcess& u) {
  return cost_of_trajectory(inst, forward_state(inst, u), u);
}

inline double cost_direct(const LQInstance& inst, const ControlProcess& u) { return cost_direct(inst, u.values()); }

}  // namespace stochlq
