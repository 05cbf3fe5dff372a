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

#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

#include "stochlq/lq_model.hpp"

namespace stochlq {

/// Scalar benchmark: dX = u dW on [0,1], X(0) = 0, U = {0,1},
/// J(u) = E[ int (X^2 - u^2/2) dt + X(1)^2 ], i.e. Q = 2, R = -1, G = 2, D = 1.
inline LQInstance make_example5(int depth, int maxDepth = kDefaultMaxDepth) {
  LQInstance inst(build_tree(depth, 1.0, maxDepth), 1, 1);
  auto c = IntervalCoefficients::zeros(1, 1);
  c.D(0, 0) = 1.0;
  c.Q(0, 0) = 2.0;
  c.R(0, 0) = -1.0;
  inst.set_all(c);
  inst.G(0, 0) = 2.0;
  return inst;
}

inline LQInstance make_zero_instance(int depth, int n = 1, int k = 1) {
  return LQInstance(build_tree(depth, 1.0), n, k);
}

struct RandomInstanceOptions {
  int maxStateDim = 2;
  int maxControlDim = 2;
  int minDepth = 1;
  int maxDepth = 2;
  double horizon = 1.0;
};

/// Seeded random instance: entries uniform in [-1,1], Q/R/G symmetrized,
/// offsets b = sigma = 0 for roughly half the seeds, C = R^k.
inline LQInstance make_random_instance(std::uint64_t seed, const RandomInstanceOptions& opts = {}) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick_n(1, opts.maxStateDim);
  std::uniform_int_distribution<int> pick_k(1, opts.maxControlDim);
  std::uniform_int_distribution<int> pick_depth(opts.minDepth, opts.maxDepth);
  std::uniform_real_distribution<double> entry(-1.0, 1.0);
  std::bernoulli_distribution with_offsets(0.5);

  const int n = pick_n(rng);
  const int k = pick_k(rng);
  const int depth = pick_depth(rng);
  const bool offsets = with_offsets(rng);
  auto random_matrix = [&](int rows, int cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = entry(rng);
    return m;
  };
  auto random_symmetric = [&](int dim) {
    Eigen::MatrixXd m = random_matrix(dim, dim);
    return Eigen::MatrixXd(0.5 * (m + m.transpose()));
  };

  LQInstance inst(build_tree(depth, opts.horizon), n, k);
  for (auto& c : inst.intervals) {
    c.A = random_matrix(n, n);
    c.B = random_matrix(n, k);
    c.C = random_matrix(n, n);
    c.D = random_matrix(n, k);
    c.b = offsets ? Eigen::VectorXd(random_matrix(n, 1)) : Eigen::VectorXd::Zero(n);
    c.sigma = offsets ? Eigen::VectorXd(random_matrix(n, 1)) : Eigen::VectorXd::Zero(n);
    c.Q = random_symmetric(n);
    c.S = random_matrix(k, n);
    c.R = random_symmetric(k);
  }
  inst.G = random_symmetric(n);
  inst.x0 = random_matrix(n, 1);
  return inst;
}

/// Uniform random running process with entries in [lo, hi].
inline AdaptedProcess random_process(const ScenarioTree& tree, int dim, ProcessKind kind, std::mt19937_64& rng,
                                     double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> entry(lo, hi);
  AdaptedProcess out(tree, dim, kind);
  for (Eigen::Index j = 0; j < out.values().cols(); ++j)
    for (Eigen::Index i = 0; i < out.values().rows(); ++i) out.values()(i, j) = entry(rng);
  return out;
}

}  // namespace stochlq
