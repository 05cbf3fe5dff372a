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

// Spectral shift of the cost operator.
//
// With mu = -lambda_max(N), the shifted cost
//
//   J^mu(u) = J(u) + 1/2 mu <u, u> - 1/2 mu <1, u>
//
// has Hessian N + mu I <= 0, so it is concave on the relaxed control set,
// while u_i^2 = u_i makes J^mu = J on every binary control.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "stochlq/error.hpp"
#include "stochlq/instances.hpp"
#include "stochlq/lq_model.hpp"
#include "stochlq/operators.hpp"

namespace stochlq {

enum class SpectralMode { dense, power };

inline const char* to_string(SpectralMode m) { return m == SpectralMode::dense ? "dense" : "power"; }

struct SpectralReport {
  double lambdaMax = 0.0;
  double mu = 0.0;
  SpectralMode method = SpectralMode::dense;
  int iterations = 0;
  double residual = 0.0;   // |N v - lambda v| / |v|
  double shift = 0.0;      // c in the power iteration on N + c I
  Eigen::VectorXd eigenvector;  // weighted coordinates, unit norm
};

struct SpectralOptions {
  SpectralMode mode = SpectralMode::dense;
  double tol = 1e-10;
  int maxIter = 5000;
  std::uint64_t seed = 0x5eedULL;
};

namespace detail {

inline Eigen::VectorXd apply_N_weighted(const LQInstance& inst, const Eigen::VectorXd& v) {
  return to_weighted_coordinates(apply_N(inst, from_weighted_coordinates(inst.tree, inst.k, v)));
}

inline Eigen::VectorXd random_unit(Eigen::Index size, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss;
  Eigen::VectorXd v(size);
  for (Eigen::Index i = 0; i < size; ++i) v(i) = gauss(rng);
  return v / v.norm();
}

inline SpectralReport lambda_max_dense(const LQInstance& inst) {
  const auto dense = assemble_N_dense(inst);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(dense.matrix);
  require(eig.info() == Eigen::Success, "symmetric eigensolve failed");
  const Eigen::Index top = dense.matrix.rows() - 1;
  SpectralReport out;
  out.method = SpectralMode::dense;
  out.lambdaMax = eig.eigenvalues()(top);
  out.mu = -out.lambdaMax;
  out.eigenvector = eig.eigenvectors().col(top);
  out.residual = (apply_N_weighted(inst, out.eigenvector) - out.lambdaMax * out.eigenvector).norm();
  return out;
}

inline SpectralReport lambda_max_power(const LQInstance& inst, const SpectralOptions& opts) {
  const auto size = static_cast<Eigen::Index>(inst.tree.running_nodes()) * inst.k;
  std::mt19937_64 rng(opts.seed);

  double norm_estimate = 0.0;
  for (int i = 0; i < 16; ++i)
    norm_estimate = std::max(norm_estimate, apply_N_weighted(inst, random_unit(size, rng)).norm());
  SpectralReport out;
  out.method = SpectralMode::power;
  if (norm_estimate == 0.0) {
    out.eigenvector = random_unit(size, rng);
    return out;  // N = 0 on every probe; treat as the zero operator
  }
  const double c = 4.0 * norm_estimate;
  out.shift = c;

  Eigen::VectorXd v = random_unit(size, rng);
  Eigen::VectorXd Nv = apply_N_weighted(inst, v);
  double rayleigh = v.dot(Nv);
  for (int it = 1; it <= opts.maxIter; ++it) {
    Eigen::VectorXd w = Nv + c * v;
    v = w / w.norm();
    Nv = apply_N_weighted(inst, v);
    const double next = v.dot(Nv);
    const double residual = (Nv - next * v).norm();
    const double change = std::abs(next - rayleigh) / std::max(1.0, std::abs(next));
    rayleigh = next;
    out.iterations = it;
    out.residual = residual;
    if (change <= opts.tol && residual <= 10.0 * opts.tol) break;
  }
  out.lambdaMax = rayleigh;
  out.mu = -rayleigh;
  out.eigenvector = v;
  if (out.residual > 10.0 * opts.tol || !(rayleigh + c > 0.01 * c)) {
    std::ostringstream msg;
    msg << "power iteration did not converge after " << out.iterations << " iterations (residual "
        << out.residual << ")";
    fail(ErrorCode::non_convergence, msg.str());
  }
  return out;
}

}  // namespace detail

/// Largest algebraic eigenvalue of N; mu = -lambdaMax (never clamped).
inline SpectralReport lambda_max(const LQInstance& inst, const SpectralOptions& opts = {}) {
  require(opts.tol > 0.0, "spectral tolerance must be positive");
  return opts.mode == SpectralMode::dense ? detail::lambda_max_dense(inst) : detail::lambda_max_power(inst, opts);
}

inline double shifted_cost(const LQInstance& inst, const AdaptedProcess& u, double mu) {
  const AdaptedProcess ones = AdaptedProcess::constant(inst.tree, Eigen::VectorXd::Ones(inst.k), ProcessKind::running);
  return cost_direct(inst, u) + 0.5 * mu * inner_product_running(u, u) - 0.5 * mu * inner_product_running(ones, u);
}

struct ConcavityReport {
  bool pass = false;
  SpectralMode mode = SpectralMode::dense;
  double worst = 0.0;  // dense: top eigenvalue of N + mu I; sampling: worst midpoint gap
  int trials = 0;
  AdaptedProcess witness;  // direction of positive curvature when failing
};

/// Dense: top eigenvalue of N + mu I <= 1e-8. Sampling: midpoint concavity on
/// `trials` random pairs in [0,1]^k per node.
inline ConcavityReport certify_concavity(const LQInstance& inst, double mu, SpectralMode mode, int trials = 100,
                                         std::uint64_t seed = 0) {
  ConcavityReport out{false, mode, 0.0, trials, AdaptedProcess(inst.tree, inst.k, ProcessKind::running)};
  if (mode == SpectralMode::dense) {
    const auto top = detail::lambda_max_dense(inst);
    out.worst = top.lambdaMax + mu;
    out.pass = out.worst <= 1e-8;
    out.witness = from_weighted_coordinates(inst.tree, inst.k, top.eigenvector);
    return out;
  }
  require(trials >= 1, "concavity sampling needs at least one trial");
  std::mt19937_64 rng(seed);
  out.worst = -std::numeric_limits<double>::infinity();
  for (int t = 0; t < trials; ++t) {
    const auto u = random_process(inst.tree, inst.k, ProcessKind::running, rng, 0.0, 1.0);
    const auto v = random_process(inst.tree, inst.k, ProcessKind::running, rng, 0.0, 1.0);
    const auto mid = 0.5 * (u + v);
    const double gap = 0.5 * shifted_cost(inst, u, mu) + 0.5 * shifted_cost(inst, v, mu) - shifted_cost(inst, mid, mu);
    if (gap > out.worst) {
      out.worst = gap;
      out.witness = u - v;
    }
  }
  out.pass = out.worst <= 1e-9;
  return out;
}

}  // namespace stochlq
