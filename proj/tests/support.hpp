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

// Reference computations shared by the test binaries. None of these reuse the
// library's tree sweeps: the path oracle walks each leaf-to-root path on its own
// and the dense maps are built one basis vector at a time.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>

#include <Eigen/Dense>

#include "stochlq/instances.hpp"
#include "stochlq/lq_model.hpp"
#include "stochlq/operators.hpp"
#include "stochlq/tree.hpp"

namespace stochlq::testing {

/// Cost by explicit enumeration of the 2^N Brownian paths.
inline double path_enumeration_cost(const LQInstance& inst, const AdaptedProcess& u) {
  const int N = inst.tree.depth();
  const double dt = inst.tree.dt();
  const double sq = std::sqrt(dt);
  const std::size_t paths = std::size_t{1} << N;
  double total = 0.0;
  for (std::size_t path = 0; path < paths; ++path) {
    Eigen::VectorXd x = inst.x0;
    double running = 0.0;
    std::size_t j = 0;
    for (int lvl = 0; lvl < N; ++lvl) {
      const auto& c = inst.at(lvl);
      const Eigen::VectorXd v = u.values().col(static_cast<Eigen::Index>((std::size_t{1} << lvl) - 1 + j));
      running += (x.dot(c.Q * x) + 2.0 * (c.S * x).dot(v) + v.dot(c.R * v)) * dt;
      // bit (N-1-lvl) of the path chooses the branch: 0 up, 1 down
      const bool down = (path >> (N - 1 - lvl)) & 1U;
      const double dw = down ? -sq : sq;
      x = x + (c.A * x + c.B * v + c.b) * dt + (c.C * x + c.D * v + c.sigma) * dw;
      j = 2 * j + (down ? 1 : 0);
    }
    total += 0.5 * running + 0.5 * x.dot(inst.G * x);
  }
  return total / static_cast<double>(paths);
}

/// Dense matrix of u -> (running state, terminal state) with x0 = 0 and no
/// offsets, columns indexed node-major like the control values.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> dense_L(const LQInstance& inst) {
  const auto k = inst.k;
  const auto cols = static_cast<Eigen::Index>(inst.tree.running_nodes()) * k;
  const auto runRows = static_cast<Eigen::Index>(inst.tree.running_nodes()) * inst.n;
  const auto termRows = static_cast<Eigen::Index>(inst.tree.leaves()) * inst.n;
  Eigen::MatrixXd L(runRows, cols), Lhat(termRows, cols);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(inst.n);
  for (Eigen::Index c = 0; c < cols; ++c) {
    AdaptedProcess e(inst.tree, k, ProcessKind::running);
    e.values()(c % k, c / k) = 1.0;
    const auto X = forward_state(inst, e, zero, false);
    L.col(c) = X.running.values().reshaped();
    Lhat.col(c) = X.terminal.values().reshaped();
  }
  return {L, Lhat};
}

/// Diagonal measure of the running pairing, per scalar entry.
inline Eigen::VectorXd running_weights(const ScenarioTree& tree, int dim) {
  Eigen::VectorXd w(static_cast<Eigen::Index>(tree.running_nodes()) * dim);
  for (int lvl = 0; lvl < tree.depth(); ++lvl)
    for (std::size_t j = 0; j < ScenarioTree::level_size(lvl); ++j)
      for (int i = 0; i < dim; ++i)
        w(static_cast<Eigen::Index>(ScenarioTree::node_index(lvl, j)) * dim + i) = tree.running_weight(lvl);
  return w;
}

inline double relative_gap(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

inline AdaptedProcess random_binary(const ScenarioTree& tree, int k, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.5);
  AdaptedProcess u(tree, k, ProcessKind::running);
  for (Eigen::Index c = 0; c < u.values().cols(); ++c)
    for (Eigen::Index i = 0; i < k; ++i) u.values()(i, c) = coin(rng) ? 1.0 : 0.0;
  return u;
}

}  // namespace stochlq::testing
