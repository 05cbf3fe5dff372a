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

// Necessary conditions for optimality of a candidate pair (Xbar, ubar).
//
// First-order adjoint:
//   p_N = -G Xbar_N,  p_n = pbar + (A^T pbar + C^T q - Q Xbar_n - S^T ubar_n) dt
//
// Shifted Hamiltonian (sign convention: maximized along an optimal control of
// the minimization problem):
//   H^mu(x,u,p,q) = <p, A x + B u + b> + <q, C x + D u + sigma>
//                   - 1/2 [<Q x,x> + 2 <S x - mu/2 e, u> + <(R + mu I) u, u>]
//   grad_u H^mu   = B^T p + D^T q - S x + mu/2 e - (R + mu I) u
//
// At a running node the p argument is pbar = E[p_{n+1} | node]. With that
// choice grad_u H^mu = -grad J^mu exactly on the tree, so the stationarity
// test is the exact first-order condition of the discrete shifted problem.
//
// Second-order adjoint, as the exact transpose of the Euler step
// F = I + A dt + C dW:
//   P_N = -G,  P_n = E[F^T P_{n+1} F | node] - Q dt
//        = F0^T Pbar F0 + dt C^T Pbar C + dt (F0^T Lam C + C^T Lam F0) - Q dt,
// F0 = I + A dt, P_{n+1} = Pbar + Lam dW. It is the explicit scheme for
// dP = -[A^T P + P A + C^T P C + Lam C + C^T Lam - Q] dt + Lam dW plus O(dt^2)
// terms, and it makes the spike-variation check below equal to the exact
// cost change on the tree divided by the node weight.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <utility>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stochlq/error.hpp"
#include "stochlq/lq_model.hpp"
#include "stochlq/operators.hpp"
#include "stochlq/tree.hpp"

namespace stochlq {

inline constexpr double kDefaultSignTolerance = 1e-8;

using AdjointPair = BsdeSolution;

inline AdjointPair solve_first_adjoint(const LQInstance& inst, const Trajectory& Xbar, const AdaptedProcess& ubar) {
  detail::require_control(inst, ubar);
  require(Xbar.tree() == inst.tree && Xbar.dim() == inst.n, "state trajectory does not match the instance");
  AdaptedProcess xi = running_driver(inst, Xbar, &ubar);
  xi *= -1.0;
  AdaptedProcess eta = terminal_driver(inst, Xbar);
  eta *= -1.0;
  return solve_linear_bsde(inst, &xi, &eta);
}

/// Largest node-wise defect when (p, q) is substituted back into the
/// backward recursion with driver xi and terminal value eta.
inline double bsde_residual(const LQInstance& inst, const BsdeSolution& sol, const AdaptedProcess* xi,
                            const AdaptedProcess* eta) {
  const auto& tree = inst.tree;
  double worst = 0.0;
  if (eta) worst = (sol.p.terminal.values() - eta->values()).cwiseAbs().maxCoeff();
  else worst = sol.p.terminal.values().cwiseAbs().maxCoeff();
  for (int lvl = 0; lvl < tree.depth(); ++lvl) {
    const auto& c = inst.at(lvl);
    const auto next = sol.p.level(lvl + 1);
    for (std::size_t j = 0; j < ScenarioTree::level_size(lvl); ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      const Eigen::VectorXd pb = sol.pbar.at(lvl, j);
      const Eigen::VectorXd q = sol.q.at(lvl, j);
      // children must be reproduced by pbar + q dW
      worst = std::max(worst, (next.col(2 * jj) - (pb + tree.sqrt_dt() * q)).cwiseAbs().maxCoeff());
      worst = std::max(worst, (next.col(2 * jj + 1) - (pb - tree.sqrt_dt() * q)).cwiseAbs().maxCoeff());
      Eigen::VectorXd driver = c.A.transpose() * pb + c.C.transpose() * q;
      if (xi) driver += xi->at(lvl, j);
      worst = std::max(worst, (sol.p.at(lvl, j) - pb - tree.dt() * driver).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

inline double hamiltonian_mu(const LQInstance& inst, int level, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                             const Eigen::VectorXd& p, const Eigen::VectorXd& q, double mu) {
  const auto& c = inst.at(level);
  const Eigen::VectorXd e = Eigen::VectorXd::Ones(inst.k);
  const Eigen::MatrixXd Rmu = c.R + mu * Eigen::MatrixXd::Identity(inst.k, inst.k);
  return p.dot(c.A * x + c.B * u + c.b) + q.dot(c.C * x + c.D * u + c.sigma) -
         0.5 * (x.dot(c.Q * x) + 2.0 * (c.S * x - 0.5 * mu * e).dot(u) + u.dot(Rmu * u));
}

inline Eigen::VectorXd hamiltonian_mu_gradient(const LQInstance& inst, int level, const Eigen::VectorXd& x,
                                               const Eigen::VectorXd& u, const Eigen::VectorXd& p,
                                               const Eigen::VectorXd& q, double mu) {
  const auto& c = inst.at(level);
  return c.B.transpose() * p + c.D.transpose() * q - c.S * x + 0.5 * mu * Eigen::VectorXd::Ones(inst.k) -
         (c.R + mu * Eigen::MatrixXd::Identity(inst.k, inst.k)) * u;
}

/// grad_u H^mu at every running node along (Xbar, ubar, pbar, q).
inline AdaptedProcess hamiltonian_gradients(const LQInstance& inst, const Trajectory& Xbar, const AdaptedProcess& ubar,
                                            const AdjointPair& pair, double mu) {
  AdaptedProcess out(inst.tree, inst.k, ProcessKind::running);
  for (int lvl = 0; lvl < inst.tree.depth(); ++lvl)
    for (std::size_t j = 0; j < ScenarioTree::level_size(lvl); ++j)
      out.at(lvl, j) =
          hamiltonian_mu_gradient(inst, lvl, Xbar.at(lvl, j), ubar.at(lvl, j), pair.pbar.at(lvl, j), pair.q.at(lvl, j), mu);
  return out;
}

struct NodeId {
  int level = 0;
  std::size_t index = 0;
};

struct MPReport {
  std::string check;
  bool pass = true;
  double worstViolation = -std::numeric_limits<double>::infinity();
  NodeId worstNode;
  Eigen::VectorXd worstWitness;  // offending v (or unit coordinate for sign checks)
  double tolerance = kDefaultSignTolerance;
  double mu = 0.0;
  std::optional<AdaptedProcess> gradients;

  void record(double violation, int level, std::size_t index, const Eigen::VectorXd& witness) {
    if (violation > worstViolation) {
      worstViolation = violation;
      worstNode = {level, index};
      worstWitness = witness;
    }
  }
  void finish() { pass = worstViolation <= tolerance; }
};

/// <grad_u H^mu, v - ubar> <= tol at every node for every extreme point v of
/// the relaxed set; linearity in v makes the extreme points sufficient.
inline MPReport check_stationarity(const LQInstance& inst, const Trajectory& Xbar, const AdaptedProcess& ubar,
                                   const AdjointPair& pair, double mu, const ControlDomain& domain,
                                   double tol = kDefaultSignTolerance) {
  require(domain.k == inst.k, "domain dimension differs from k");
  const auto vertices = enumerate_relaxed_vertices(domain);
  MPReport report{"stationarity", true, -std::numeric_limits<double>::infinity(), {}, {}, tol, mu, {}};
  report.gradients = hamiltonian_gradients(inst, Xbar, ubar, pair, mu);
  for (int lvl = 0; lvl < inst.tree.depth(); ++lvl)
    for (std::size_t j = 0; j < ScenarioTree::level_size(lvl); ++j) {
      const Eigen::VectorXd g = report.gradients->at(lvl, j);
      const Eigen::VectorXd u = ubar.at(lvl, j);
      for (const auto& v : vertices) report.record(g.dot(v - u), lvl, j, v);
    }
  report.finish();
  return report;
}

/// Coordinate-wise sign form of stationarity for a binary control:
/// grad_i <= tol where ubar_i = 0, grad_i >= -tol where ubar_i = 1.
inline MPReport check_remark1_signs(const LQInstance& inst, const Trajectory& Xbar, const AdaptedProcess& ubar,
                                    const AdjointPair& pair, double mu, double tol = kDefaultSignTolerance) {
  const ControlDomain box(inst.k);
  for (Eigen::Index i = 0; i < ubar.values().cols(); ++i)
    require(box.is_binary(ubar.values().col(i)), "sign conditions need a binary control; node " + std::to_string(i) +
                                                     " is not binary");
  MPReport report{"remark1_signs", true, -std::numeric_limits<double>::infinity(), {}, {}, tol, mu, {}};
  report.gradients = hamiltonian_gradients(inst, Xbar, ubar, pair, mu);
  for (int lvl = 0; lvl < inst.tree.depth(); ++lvl)
    for (std::size_t j = 0; j < ScenarioTree::level_size(lvl); ++j) {
      const Eigen::VectorXd g = report.gradients->at(lvl, j);
      const Eigen::VectorXd u = ubar.at(lvl, j);
      for (int i = 0; i < inst.k; ++i) {
        const double violation = u(i) < 0.5 ? g(i) : -g(i);
        report.record(violation, lvl, j, Eigen::VectorXd::Unit(inst.k, i));
      }
    }
  report.finish();
  return report;
}

struct SecondOrderPair {
  MatrixField P;       // every node, levels 0..N; P_N = -G
  MatrixField Pbar;    // running nodes: E[P_{n+1} | node]
  MatrixField Lambda;  // running nodes: P_{n+1} = Pbar + Lambda dW
};

inline SecondOrderPair solve_second_adjoint(const LQInstance& inst, const Trajectory& Xbar, const AdaptedProcess& ubar) {
  detail::require_control(inst, ubar);
  require(Xbar.tree() == inst.tree && Xbar.dim() == inst.n, "state trajectory does not match the instance");
  const auto& tree = inst.tree;
  const auto id = Eigen::MatrixXd::Identity(inst.n, inst.n);
  SecondOrderPair out{MatrixField(tree.total_nodes()), MatrixField(tree.running_nodes()),
                      MatrixField(tree.running_nodes())};
  for (std::size_t j = 0; j < tree.leaves(); ++j) out.P[ScenarioTree::node_index(tree.depth(), j)] = -inst.G;
  for (int lvl = tree.depth() - 1; lvl >= 0; --lvl) {
    const auto& c = inst.at(lvl);
    const Eigen::MatrixXd F0 = id + tree.dt() * c.A;
    for (std::size_t j = 0; j < ScenarioTree::level_size(lvl); ++j) {
      const auto node = ScenarioTree::node_index(lvl, j);
      const auto& up = out.P[ScenarioTree::node_index(lvl + 1, 2 * j)];
      const auto& down = out.P[ScenarioTree::node_index(lvl + 1, 2 * j + 1)];
      const Eigen::MatrixXd pbar = 0.5 * (up + down);
      const Eigen::MatrixXd lam = (up - down) / (2.0 * tree.sqrt_dt());
      Eigen::MatrixXd P = F0.transpose() * pbar * F0 + tree.dt() * (c.C.transpose() * pbar * c.C) +
                          tree.dt() * (F0.transpose() * lam * c.C + c.C.transpose() * lam * F0) - tree.dt() * c.Q;
      out.P[node] = 0.5 * (P + P.transpose());
      out.Pbar[node] = pbar;
      out.Lambda[node] = lam;
    }
  }
  return out;
}

/// Curvature matrix D^T Pbar D + dt (B^T Pbar B + B^T Lam D + D^T Lam B) of
/// the spike variation at a running node.
inline Eigen::MatrixXd spike_curvature(const LQInstance& inst, int level, const SecondOrderPair& second,
                                       std::size_t node) {
  const auto& c = inst.at(level);
  const auto& pbar = second.Pbar[node];
  const auto& lam = second.Lambda[node];
  const double dt = inst.tree.dt();
  return c.D.transpose() * pbar * c.D +
         dt * (c.B.transpose() * pbar * c.B + c.B.transpose() * lam * c.D + c.D.transpose() * lam * c.B);
}

/// H^0(ubar) - H^0(v) - 1/2 (ubar - v)^T K (ubar - v) >= -tol at every node
/// and every v in U, with K from spike_curvature.
inline MPReport check_general_smp(const LQInstance& inst, const Trajectory& Xbar, const AdaptedProcess& ubar,
                                  const AdjointPair& pair, const SecondOrderPair& second, const ControlDomain& domain,
                                  double tol = kDefaultSignTolerance) {
  require(domain.k == inst.k, "domain dimension differs from k");
  const auto binary = enumerate_binary_vertices(domain);
  MPReport report{"general_smp", true, -std::numeric_limits<double>::infinity(), {}, {}, tol, 0.0, {}};
  for (int lvl = 0; lvl < inst.tree.depth(); ++lvl)
    for (std::size_t j = 0; j < ScenarioTree::level_size(lvl); ++j) {
      const auto node = ScenarioTree::node_index(lvl, j);
      const Eigen::VectorXd x = Xbar.at(lvl, j);
      const Eigen::VectorXd u = ubar.at(lvl, j);
      const Eigen::VectorXd p = pair.pbar.at(lvl, j);
      const Eigen::VectorXd q = pair.q.at(lvl, j);
      const Eigen::MatrixXd K = spike_curvature(inst, lvl, second, node);
      const double h_bar = hamiltonian_mu(inst, lvl, x, u, p, q, 0.0);
      for (const auto& v : binary) {
        const Eigen::VectorXd d = u - v;
        const double value = h_bar - hamiltonian_mu(inst, lvl, x, v, p, q, 0.0) - 0.5 * d.dot(K * d);
        report.record(-value, lvl, j, v);
      }
    }
  report.finish();
  return report;
}

enum class MsaStatus { converged, cycle, max_iterations };

inline const char* to_string(MsaStatus s) {
  switch (s) {
    case MsaStatus::converged: return "converged";
    case MsaStatus::cycle: return "cycle";
    case MsaStatus::max_iterations: return "max_iterations";
  }
  return "unknown";
}

struct MsaStep {
  int iteration;
  double cost;
  std::size_t changedNodes;
};

struct MsaResult {
  AdaptedProcess control;
  double cost;
  MsaStatus status;
  int iterations;
  std::vector<MsaStep> trace;
};

/// Successive approximations: forward state, first adjoint, then replace each
/// node value by the argmax over U of <grad_u H^mu, v> (first maximizer in
/// lexicographic order wins ties). Stops at a fixed point, on revisiting an
/// earlier control (returning the cheapest visited one) or after maxIter.
/// damping >= 0 subtracts damping/2 |v - u|^2 from the score.
inline MsaResult msa_candidate_search(const LQInstance& inst, const ControlDomain& domain, double mu, int maxIter,
                                      const std::optional<AdaptedProcess>& start = std::nullopt,
                                      double damping = 0.0) {
  require(maxIter >= 1, "MSA needs at least one iteration");
  require(damping >= 0.0, "MSA damping must be non-negative");
  require(domain.k == inst.k, "domain dimension differs from k");
  const auto binary = enumerate_binary_vertices(domain);
  require(!binary.empty(), "U is empty");
  AdaptedProcess u = start ? *start : AdaptedProcess::constant(inst.tree, binary.front(), ProcessKind::running);
  detail::require_control(inst, u);

  auto key = [](const AdaptedProcess& c) {
    return std::vector<double>(c.values().data(), c.values().data() + c.values().size());
  };
  std::map<std::vector<double>, int> visited;
  std::vector<std::pair<double, AdaptedProcess>> history;

  MsaResult result{u, 0.0, MsaStatus::max_iterations, 0, {}};
  for (int it = 1; it <= maxIter; ++it) {
    const Trajectory X = forward_state(inst, u);
    const double cost = cost_of_trajectory(inst, X, u);
    visited.emplace(key(u), it - 1);
    history.emplace_back(cost, u);

    const auto pair = solve_first_adjoint(inst, X, u);
    const auto grads = hamiltonian_gradients(inst, X, u, pair, mu);
    AdaptedProcess next(inst.tree, inst.k, ProcessKind::running);
    std::size_t changed = 0;
    for (Eigen::Index i = 0; i < next.values().cols(); ++i) {
      const Eigen::VectorXd g = grads.values().col(i);
      const Eigen::VectorXd cur = u.values().col(i);
      auto score_of = [&](const Eigen::VectorXd& v) { return g.dot(v) - 0.5 * damping * (v - cur).squaredNorm(); };
      std::size_t best = 0;
      double best_score = score_of(binary[0]);
      for (std::size_t b = 1; b < binary.size(); ++b) {
        const double score = score_of(binary[b]);
        if (score > best_score) {
          best_score = score;
          best = b;
        }
      }
      next.values().col(i) = binary[best];
      if (next.values().col(i) != u.values().col(i)) ++changed;
    }
    result.trace.push_back({it, cost, changed});
    result.iterations = it;
    if (changed == 0) {
      result.control = u;
      result.cost = cost;
      result.status = MsaStatus::converged;
      return result;
    }
    if (visited.count(key(next)) != 0) {
      result.status = MsaStatus::cycle;
      break;
    }
    u = std::move(next);
  }
  if (result.status == MsaStatus::max_iterations) {
    result.cost = cost_direct(inst, u);
    result.control = std::move(u);
    return result;
  }
  // cheapest visited control; earliest wins ties
  std::size_t best = 0;
  for (std::size_t i = 1; i < history.size(); ++i)
    if (history[i].first < history[best].first) best = i;
  result.control = history[best].second;
  result.cost = history[best].first;
  return result;
}

}  // namespace stochlq
