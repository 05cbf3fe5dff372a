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

// Binary scenario trees modelling a discretized one-dimensional Brownian
// filtration on [0, T].
//
// Level n (0 <= n <= N) holds 2^n nodes. Node (n, j) branches to the "up"
// child (n+1, 2j) with increment +sqrt(dt) and to the "down" child
// (n+1, 2j+1) with increment -sqrt(dt), each with probability 1/2. Every
// expectation on the tree is therefore a finite dyadic-weighted sum.
//
// Adapted processes store one vector per node. A running process lives on
// levels 0..N-1 (one value per interval [t_n, t_{n+1})), a terminal random
// variable lives on the 2^N leaves.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stochlq/error.hpp"

namespace stochlq {

inline constexpr int kDefaultMaxDepth = 14;

class ScenarioTree {
 public:
  ScenarioTree() : ScenarioTree(1, 1.0) {}
  ScenarioTree(int depth, double horizon, int maxDepth = kDefaultMaxDepth)
      : depth_(depth), horizon_(horizon) {
    require(depth >= 1, "tree depth must be >= 1, got " + std::to_string(depth));
    require(depth <= maxDepth, "tree depth " + std::to_string(depth) + " exceeds the configured maximum " +
                                   std::to_string(maxDepth));
    require(horizon > 0.0 && std::isfinite(horizon), "tree horizon must be positive and finite");
    dt_ = horizon_ / depth_;
    sqrt_dt_ = std::sqrt(dt_);
  }

  [[nodiscard]] int depth() const noexcept { return depth_; }
  [[nodiscard]] double horizon() const noexcept { return horizon_; }
  [[nodiscard]] double dt() const noexcept { return dt_; }
  [[nodiscard]] double sqrt_dt() const noexcept { return sqrt_dt_; }

  [[nodiscard]] static std::size_t level_size(int level) noexcept { return std::size_t{1} << level; }
  /// Global index of node (level, 0) in breadth-first order.
  [[nodiscard]] static std::size_t level_offset(int level) noexcept { return level_size(level) - 1; }
  [[nodiscard]] static std::size_t node_index(int level, std::size_t j) noexcept { return level_offset(level) + j; }

  [[nodiscard]] std::size_t running_nodes() const noexcept { return level_size(depth_) - 1; }
  [[nodiscard]] std::size_t leaves() const noexcept { return level_size(depth_); }
  [[nodiscard]] std::size_t total_nodes() const noexcept { return level_size(depth_ + 1) - 1; }

  /// Probability of reaching any single node on `level`: exactly 2^-level.
  [[nodiscard]] static double path_probability(int level) noexcept { return std::ldexp(1.0, -level); }
  /// Measure of a running node in the L^2(dt x dP) pairing.
  [[nodiscard]] double running_weight(int level) const noexcept { return path_probability(level) * dt_; }
  [[nodiscard]] double time(int level) const noexcept { return level * dt_; }

  /// Brownian increment on the branch leading into child index `j` of a level.
  [[nodiscard]] double increment(std::size_t childIndex) const noexcept {
    return (childIndex % 2 == 0) ? sqrt_dt_ : -sqrt_dt_;
  }

  /// Level of a breadth-first global index.
  [[nodiscard]] static int level_of(std::size_t globalIndex) noexcept {
    int level = 0;
    while (level_offset(level + 1) <= globalIndex) ++level;
    return level;
  }

  friend bool operator==(const ScenarioTree& a, const ScenarioTree& b) noexcept {
    return a.depth_ == b.depth_ && a.horizon_ == b.horizon_;
  }

 private:
  int depth_;
  double horizon_;
  double dt_{};
  double sqrt_dt_{};
};

inline ScenarioTree build_tree(int depth, double horizon, int maxDepth = kDefaultMaxDepth) {
  return ScenarioTree(depth, horizon, maxDepth);
}

enum class ProcessKind { running, terminal };

/// Tree-indexed vector process; column i is the value at node i.
class AdaptedProcess {
 public:
  AdaptedProcess() : AdaptedProcess(ScenarioTree(), 1, ProcessKind::running) {}
  AdaptedProcess(ScenarioTree tree, int dim, ProcessKind kind)
      : tree_(tree), kind_(kind), values_(Eigen::MatrixXd::Zero(dim, node_count(tree, kind))) {
    require(dim >= 1, "process dimension must be >= 1");
  }

  AdaptedProcess(ScenarioTree tree, ProcessKind kind, Eigen::MatrixXd values)
      : tree_(tree), kind_(kind), values_(std::move(values)) {
    require(values_.rows() >= 1, "process dimension must be >= 1");
    require(static_cast<std::size_t>(values_.cols()) == node_count(tree, kind),
            "process value count does not match the tree");
  }

  static AdaptedProcess constant(ScenarioTree tree, const Eigen::VectorXd& value, ProcessKind kind) {
    AdaptedProcess out(tree, static_cast<int>(value.size()), kind);
    out.values_.colwise() = value;
    return out;
  }

  [[nodiscard]] static std::size_t node_count(const ScenarioTree& tree, ProcessKind kind) noexcept {
    return kind == ProcessKind::running ? tree.running_nodes() : tree.leaves();
  }

  [[nodiscard]] const ScenarioTree& tree() const noexcept { return tree_; }
  [[nodiscard]] ProcessKind kind() const noexcept { return kind_; }
  [[nodiscard]] int dim() const noexcept { return static_cast<int>(values_.rows()); }
  [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(values_.cols()); }

  [[nodiscard]] const Eigen::MatrixXd& values() const noexcept { return values_; }
  [[nodiscard]] Eigen::MatrixXd& values() noexcept { return values_; }

  /// Values on one tree level as a dim x 2^level block.
  [[nodiscard]] auto level(int n) {
    return values_.middleCols(static_cast<Eigen::Index>(first_column(n)),
                              static_cast<Eigen::Index>(ScenarioTree::level_size(n)));
  }
  [[nodiscard]] auto level(int n) const {
    return values_.middleCols(static_cast<Eigen::Index>(first_column(n)),
                              static_cast<Eigen::Index>(ScenarioTree::level_size(n)));
  }

  [[nodiscard]] auto at(int n, std::size_t j) { return values_.col(static_cast<Eigen::Index>(first_column(n) + j)); }
  [[nodiscard]] auto at(int n, std::size_t j) const {
    return values_.col(static_cast<Eigen::Index>(first_column(n) + j));
  }

  AdaptedProcess& operator+=(const AdaptedProcess& other) {
    check_compatible(other);
    values_ += other.values_;
    return *this;
  }
  AdaptedProcess& operator-=(const AdaptedProcess& other) {
    check_compatible(other);
    values_ -= other.values_;
    return *this;
  }
  AdaptedProcess& operator*=(double s) {
    values_ *= s;
    return *this;
  }
  friend AdaptedProcess operator+(AdaptedProcess a, const AdaptedProcess& b) { return a += b; }
  friend AdaptedProcess operator-(AdaptedProcess a, const AdaptedProcess& b) { return a -= b; }
  friend AdaptedProcess operator*(double s, AdaptedProcess a) { return a *= s; }

  void check_compatible(const AdaptedProcess& other) const {
    require(tree_ == other.tree_, "processes live on different trees");
    require(kind_ == other.kind_, "running/terminal process kind mismatch");
    require(dim() == other.dim(), "process dimension mismatch: " + std::to_string(dim()) + " vs " +
                                      std::to_string(other.dim()));
  }

 private:
  [[nodiscard]] std::size_t first_column(int n) const {
    if (kind_ == ProcessKind::running) {
      require(n >= 0 && n < tree_.depth(), "running process has no level " + std::to_string(n));
      return ScenarioTree::level_offset(n);
    }
    require(n == tree_.depth(), "terminal variable only lives on the leaf level");
    return 0;
  }

  ScenarioTree tree_;
  ProcessKind kind_;
  Eigen::MatrixXd values_;
};

/// Running part (levels 0..N-1) together with the terminal value at level N.
struct Trajectory {
  AdaptedProcess running;
  AdaptedProcess terminal;

  Trajectory(ScenarioTree tree, int dim)
      : running(tree, dim, ProcessKind::running), terminal(tree, dim, ProcessKind::terminal) {}

  [[nodiscard]] const ScenarioTree& tree() const noexcept { return running.tree(); }
  [[nodiscard]] int dim() const noexcept { return running.dim(); }

  [[nodiscard]] auto level(int n) { return n == tree().depth() ? terminal.level(n) : running.level(n); }
  [[nodiscard]] auto level(int n) const { return n == tree().depth() ? terminal.level(n) : running.level(n); }
  [[nodiscard]] auto at(int n, std::size_t j) { return n == tree().depth() ? terminal.at(n, j) : running.at(n, j); }
  [[nodiscard]] auto at(int n, std::size_t j) const {
    return n == tree().depth() ? terminal.at(n, j) : running.at(n, j);
  }
};

/// Matrix-valued field over every node of levels 0..N, breadth-first.
using MatrixField = std::vector<Eigen::MatrixXd>;

/// One step of E[. | F_{t_n}]: maps a dim x 2^(n+1) level block to dim x 2^n.
template <typename Derived>
Eigen::MatrixXd conditional_expectation(const Eigen::MatrixBase<Derived>& child) {
  require(child.cols() >= 2 && child.cols() % 2 == 0, "conditional expectation needs a full child level");
  const Eigen::Index parents = child.cols() / 2;
  Eigen::MatrixXd parent(child.rows(), parents);
  for (Eigen::Index j = 0; j < parents; ++j) parent.col(j) = 0.5 * (child.col(2 * j) + child.col(2 * j + 1));
  return parent;
}

struct MartingaleSplit {
  Eigen::MatrixXd mean;  ///< conditional mean on the parent level
  Eigen::MatrixXd q;     ///< coefficient of the Brownian increment
};

/// Decomposes a child level as mean + q * dW exactly, with dW = +-sqrt(dt).
template <typename Derived>
MartingaleSplit martingale_representation(const Eigen::MatrixBase<Derived>& child, double sqrtDt) {
  require(child.cols() >= 2 && child.cols() % 2 == 0, "martingale representation needs a full child level");
  const Eigen::Index parents = child.cols() / 2;
  MartingaleSplit out{Eigen::MatrixXd(child.rows(), parents), Eigen::MatrixXd(child.rows(), parents)};
  const double scale = 1.0 / (2.0 * sqrtDt);
  for (Eigen::Index j = 0; j < parents; ++j) {
    out.mean.col(j) = 0.5 * (child.col(2 * j) + child.col(2 * j + 1));
    out.q.col(j) = scale * (child.col(2 * j) - child.col(2 * j + 1));
  }
  return out;
}

/// E[xi] of a terminal variable by repeated conditioning down to the root.
inline Eigen::VectorXd expectation(const AdaptedProcess& terminal) {
  require(terminal.kind() == ProcessKind::terminal, "expectation expects a terminal variable");
  Eigen::MatrixXd level = terminal.values();
  while (level.cols() > 1) level = conditional_expectation(level);
  return level.col(0);
}

/// <u, v> = E[ sum_n <u_n, v_n> dt ] over running nodes.
inline double inner_product_running(const AdaptedProcess& u, const AdaptedProcess& v) {
  u.check_compatible(v);
  require(u.kind() == ProcessKind::running, "inner_product_running expects running processes");
  double total = 0.0;
  for (int n = 0; n < u.tree().depth(); ++n)
    total += u.tree().running_weight(n) * u.level(n).cwiseProduct(v.level(n)).sum();
  return total;
}

/// <xi, eta> = E[<xi, eta>] over leaves.
inline double inner_product_terminal(const AdaptedProcess& xi, const AdaptedProcess& eta) {
  xi.check_compatible(eta);
  require(xi.kind() == ProcessKind::terminal, "inner_product_terminal expects terminal variables");
  return ScenarioTree::path_probability(xi.tree().depth()) * xi.values().cwiseProduct(eta.values()).sum();
}

}  // namespace stochlq
