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

// Operator form of the cost.
//
// The state splits as X = Gamma x0 + L u + f, with terminal values
// Gamma^ x0 + L^ u + f^. Adjoints of L, L^, Gamma, Gamma^ are realized by one
// backward recursion
//
//   p_N = eta,   p_n = pbar_n + (A_n^T pbar_n + C_n^T q_n + xi_n) dt,
//
// where p_{n+1} = pbar_n + q_n dW is the exact martingale split of the next
// level. Then (L* xi + L^* eta)_n = B_n^T pbar_n + D_n^T q_n and
// Gamma* xi + Gamma^* eta = p_0. Using pbar (not p_n) in the B^T term makes
// these the exact transposes of the Euler forward map under the tree inner
// products, so every duality identity holds to rounding error.
//
// With these, J(u) = 1/2 (<N u, u> + 2 <H(x0), u> + M(x0)) where
//   N = R + L* Q L + S L + L* S^T + L^* G L^.

#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "stochlq/error.hpp"
#include "stochlq/lq_model.hpp"
#include "stochlq/tree.hpp"

namespace stochlq {

struct FundamentalMatrices {
  MatrixField phi;      // all nodes, levels 0..N
  MatrixField phi_inv;  // own Euler recursion, not a matrix inverse

  /// max over nodes of |phi * phi_inv - I|.
  [[nodiscard]] double inverse_defect() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < phi.size(); ++i) {
      const auto& m = phi[i];
      worst = std::max(worst, (m * phi_inv[i] - Eigen::MatrixXd::Identity(m.rows(), m.cols())).cwiseAbs().maxCoeff());
    }
    return worst;
  }
};

/// Euler recursions for dPhi = A Phi dt + C Phi dW and
/// dPhi^-1 = -Phi^-1 (A - C^2) dt - Phi^-1 C dW.
///
/// The inverse drifts away from phi^-1 at O(dt) and breaks down entirely
/// when |C dW| >= 1; it is only used for cross-checks.
inline FundamentalMatrices fundamental_matrices(const LQInstance& inst) {
  const auto& tree = inst.tree;
  const auto id = Eigen::MatrixXd::Identity(inst.n, inst.n);
  FundamentalMatrices fm{MatrixField(tree.total_nodes()), MatrixField(tree.total_nodes())};
  fm.phi[0] = id;
  fm.phi_inv[0] = id;
  for (int lvl = 0; lvl < tree.depth(); ++lvl) {
    const auto& c = inst.at(lvl);
    const Eigen::MatrixXd inv_drift = c.A - c.C * c.C;
    for (std::size_t j = 0; j < ScenarioTree::level_size(lvl); ++j) {
      const auto& phi = fm.phi[ScenarioTree::node_index(lvl, j)];
      const auto& inv = fm.phi_inv[ScenarioTree::node_index(lvl, j)];
      for (std::size_t child = 2 * j; child <= 2 * j + 1; ++child) {
        const double dw = tree.increment(child);
        const auto idx = ScenarioTree::node_index(lvl + 1, child);
        fm.phi[idx] = phi + (c.A * tree.dt() + c.C * dw) * phi;
        fm.phi_inv[idx] = inv - inv * (inv_drift * tree.dt() + c.C * dw);
      }
    }
  }
  return fm;
}

/// X = Gx + Lu + f on running nodes and at the terminal level.
struct StateDecomposition {
  Trajectory Gx;  // Gamma x0 (terminal part is Gamma^ x0)
  Trajectory Lu;  // L u (terminal part is L^ u)
  Trajectory f;   // response to b, sigma (terminal part is f^)

  [[nodiscard]] Trajectory total() const {
    Trajectory X = Gx;
    X.running += Lu.running;
    X.running += f.running;
    X.terminal += Lu.terminal;
    X.terminal += f.terminal;
    return X;
  }
};

/// Each part is one Euler solve; superposition of the three reproduces
/// forward_state exactly since the recursion is affine.
inline StateDecomposition decompose_state(const LQInstance& inst, const AdaptedProcess& u, const Eigen::VectorXd& x0) {
  const AdaptedProcess zero(inst.tree, inst.k, ProcessKind::running);
  const Eigen::VectorXd origin = Eigen::VectorXd::Zero(inst.n);
  return {forward_state(inst, zero, x0, false), forward_state(inst, u, origin, false),
          forward_state(inst, zero, origin, true)};
}

/// Lu rebuilt from the variation-of-constants formula
///   Lu = Phi { int Phi^-1 (B - C D) u ds + int Phi^-1 D u dW }
/// with left-point sums. Agrees with decompose_state only up to O(dt).
inline Trajectory lu_via_fundamental_matrices(const LQInstance& inst, const AdaptedProcess& u,
                                              const FundamentalMatrices& fm) {
  const auto& tree = inst.tree;
  Trajectory integral(tree, inst.n);
  Trajectory out(tree, inst.n);
  for (int lvl = 0; lvl < tree.depth(); ++lvl) {
    const auto& c = inst.at(lvl);
    for (std::size_t j = 0; j < ScenarioTree::level_size(lvl); ++j) {
      const auto& inv = fm.phi_inv[ScenarioTree::node_index(lvl, j)];
      const Eigen::VectorXd y = integral.at(lvl, j);
      const Eigen::VectorXd drift = inv * (c.B - c.C * c.D) * u.at(lvl, j);
      const Eigen::VectorXd noise = inv * c.D * u.at(lvl, j);
      for (std::size_t child = 2 * j; child <= 2 * j + 1; ++child)
        integral.at(lvl + 1, child) = y + drift * tree.dt() + noise * tree.increment(child);
    }
  }
  for (int lvl = 0; lvl <= tree.depth(); ++lvl)
    for (std::size_t j = 0; j < ScenarioTree::level_size(lvl); ++j)
      out.at(lvl, j) = fm.phi[ScenarioTree::node_index(lvl, j)] * integral.at(lvl, j);
  return out;
}

struct BsdeSolution {
  Trajectory p;          // p_0..p_N, p_N = eta
  AdaptedProcess pbar;   // E[p_{n+1} | node], running
  AdaptedProcess q;      // running
};

/// Backward recursion p_n = pbar + (A^T pbar + C^T q + xi_n) dt from p_N = eta.
/// Absent data are treated as zero.
inline BsdeSolution solve_linear_bsde(const LQInstance& inst, const AdaptedProcess* xi, const AdaptedProcess* eta) {
  const auto& tree = inst.tree;
  if (xi) {
    require(xi->tree() == tree && xi->kind() == ProcessKind::running && xi->dim() == inst.n,
            "BSDE driver must be a running n-dimensional process on the instance tree");
  }
  if (eta) {
    require(eta->tree() == tree && eta->kind() == ProcessKind::terminal && eta->dim() == inst.n,
            "BSDE terminal value must be an n-dimensional terminal variable on the instance tree");
  }
  BsdeSolution sol{Trajectory(tree, inst.n), AdaptedProcess(tree, inst.n, ProcessKind::running),
                   AdaptedProcess(tree, inst.n, ProcessKind::running)};
  if (eta) sol.p.terminal = *eta;
  for (int lvl = tree.depth() - 1; lvl >= 0; --lvl) {
    const auto& c = inst.at(lvl);
    auto split = martingale_representation(sol.p.level(lvl + 1), tree.sqrt_dt());
    Eigen::MatrixXd driver = c.A.transpose() * split.mean + c.C.transpose() * split.q;
    if (xi) driver += xi->level(lvl);
    sol.p.level(lvl) = split.mean + tree.dt() * driver;
    sol.pbar.level(lvl) = split.mean;
    sol.q.level(lvl) = split.q;
  }
  return sol;
}

inline BsdeSolution solve_linear_bsde(const LQInstance& inst, const std::optional<AdaptedProcess>& xi,
                                     const std::optional<AdaptedProcess>& eta) {
  return solve_linear_bsde(inst, xi ? &*xi : nullptr, eta ? &*eta : nullptr);
}

/// B^T pbar + D^T q node-wise: the control-space image of a BSDE solution.
inline AdaptedProcess control_image(const LQInstance& inst, const BsdeSolution& sol) {
  AdaptedProcess out(inst.tree, inst.k, ProcessKind::running);
  for (int lvl = 0; lvl < inst.tree.depth(); ++lvl) {
    const auto& c = inst.at(lvl);
    out.level(lvl) = c.B.transpose() * sol.pbar.level(lvl) + c.D.transpose() * sol.q.level(lvl);
  }
  return out;
}

struct AdjointImages {
  AdaptedProcess Lstar_xi;          // L* xi, k-dim running
  Eigen::VectorXd Gammastar_xi;     // Gamma* xi
  AdaptedProcess Lhatstar_eta;      // L^* eta
  Eigen::VectorXd Gammahatstar_eta; // Gamma^* eta
};

inline AdjointImages adjoint_apply(const LQInstance& inst, const std::optional<AdaptedProcess>& xi,
                                   const std::optional<AdaptedProcess>& eta) {
  require(xi.has_value() || eta.has_value(), "adjoint_apply needs a running driver or a terminal value");
  AdjointImages out{AdaptedProcess(inst.tree, inst.k, ProcessKind::running), Eigen::VectorXd::Zero(inst.n),
                    AdaptedProcess(inst.tree, inst.k, ProcessKind::running), Eigen::VectorXd::Zero(inst.n)};
  if (xi) {
    const auto sol = solve_linear_bsde(inst, &*xi, nullptr);
    out.Lstar_xi = control_image(inst, sol);
    out.Gammastar_xi = sol.p.at(0, 0);
  }
  if (eta) {
    const auto sol = solve_linear_bsde(inst, nullptr, &*eta);
    out.Lhatstar_eta = control_image(inst, sol);
    out.Gammahatstar_eta = sol.p.at(0, 0);
  }
  return out;
}

/// Q_n y_n (+ S_n^T u_n) node-wise, the BSDE driver induced by a state response.
inline AdaptedProcess running_driver(const LQInstance& inst, const Trajectory& y, const AdaptedProcess* u) {
  AdaptedProcess xi(inst.tree, inst.n, ProcessKind::running);
  for (int lvl = 0; lvl < inst.tree.depth(); ++lvl) {
    const auto& c = inst.at(lvl);
    xi.level(lvl) = c.Q * y.level(lvl);
    if (u) xi.level(lvl) += c.S.transpose() * u->level(lvl);
  }
  return xi;
}

inline AdaptedProcess terminal_driver(const LQInstance& inst, const Trajectory& y) {
  return AdaptedProcess(inst.tree, ProcessKind::terminal, inst.G * y.terminal.values());
}

/// N u = R u + S L u + L*(Q L u + S^T u) + L^*(G L^ u); one forward and one
/// backward sweep, the three adjoint terms merged by linearity.
inline AdaptedProcess apply_N(const LQInstance& inst, const AdaptedProcess& u) {
  detail::require_control(inst, u);
  const Trajectory y = forward_state(inst, u, Eigen::VectorXd::Zero(inst.n), false);
  const AdaptedProcess xi = running_driver(inst, y, &u);
  const AdaptedProcess eta = terminal_driver(inst, y);
  AdaptedProcess out = control_image(inst, solve_linear_bsde(inst, &xi, &eta));
  for (int lvl = 0; lvl < inst.tree.depth(); ++lvl) {
    const auto& c = inst.at(lvl);
    out.level(lvl) += c.R * u.level(lvl) + c.S * y.level(lvl);
  }
  return out;
}

struct LinearTerms {
  AdaptedProcess H;  // (L* Q + S)(Gamma x + f) + L^* G (Gamma^ x + f^)
  double M;          // <Q z, z> + E <G z_N, z_N>, z = Gamma x + f
};

inline LinearTerms linear_terms(const LQInstance& inst, const Eigen::VectorXd& x0) {
  const AdaptedProcess zero(inst.tree, inst.k, ProcessKind::running);
  const Trajectory z = forward_state(inst, zero, x0, true);
  const AdaptedProcess xi = running_driver(inst, z, nullptr);
  const AdaptedProcess eta = terminal_driver(inst, z);
  AdaptedProcess H = control_image(inst, solve_linear_bsde(inst, &xi, &eta));
  for (int lvl = 0; lvl < inst.tree.depth(); ++lvl) H.level(lvl) += inst.at(lvl).S * z.level(lvl);
  const double M = inner_product_running(xi, z.running) + inner_product_terminal(eta, z.terminal);
  return {std::move(H), M};
}

/// J(u) = 1/2 (<N u, u> + 2 <H(x0), u> + M(x0)).
inline double quadratic_functional(const LQInstance& inst, const AdaptedProcess& u, const Eigen::VectorXd& x0) {
  const auto terms = linear_terms(inst, x0);
  return 0.5 * (inner_product_running(apply_N(inst, u), u) + 2.0 * inner_product_running(terms.H, u) + terms.M);
}

inline constexpr Eigen::Index kMaxDenseDimension = 4096;

struct DenseOperator {
  Eigen::MatrixXd matrix;       // symmetrized
  double symmetry_defect = 0.0; // max |M - M^T| before symmetrization
};

/// Unit vector of the weighted basis: coordinate (node, component) scaled by
/// 1/sqrt(pathprob * dt), so the plain Euclidean structure on coefficients
/// matches the tree inner product.
inline AdaptedProcess weighted_basis_vector(const LQInstance& inst, Eigen::Index index) {
  AdaptedProcess e(inst.tree, inst.k, ProcessKind::running);
  const auto node = static_cast<std::size_t>(index / inst.k);
  const int lvl = ScenarioTree::level_of(node);
  e.values()(index % inst.k, static_cast<Eigen::Index>(node)) = 1.0 / std::sqrt(inst.tree.running_weight(lvl));
  return e;
}

/// Coefficients of a running control process in the weighted basis.
inline Eigen::VectorXd to_weighted_coordinates(const AdaptedProcess& u) {
  Eigen::VectorXd out(u.values().size());
  const auto& tree = u.tree();
  for (int lvl = 0; lvl < tree.depth(); ++lvl) {
    const double s = std::sqrt(tree.running_weight(lvl));
    for (std::size_t j = 0; j < ScenarioTree::level_size(lvl); ++j) {
      const auto node = ScenarioTree::node_index(lvl, j);
      out.segment(static_cast<Eigen::Index>(node) * u.dim(), u.dim()) = s * u.at(lvl, j);
    }
  }
  return out;
}

inline AdaptedProcess from_weighted_coordinates(const ScenarioTree& tree, int dim, const Eigen::VectorXd& coords) {
  AdaptedProcess out(tree, dim, ProcessKind::running);
  for (int lvl = 0; lvl < tree.depth(); ++lvl) {
    const double s = 1.0 / std::sqrt(tree.running_weight(lvl));
    for (std::size_t j = 0; j < ScenarioTree::level_size(lvl); ++j) {
      const auto node = ScenarioTree::node_index(lvl, j);
      out.at(lvl, j) = s * coords.segment(static_cast<Eigen::Index>(node) * dim, dim);
    }
  }
  return out;
}

/// Matrix of N in the weighted basis, one apply_N per column.
inline DenseOperator assemble_N_dense(const LQInstance& inst) {
  const auto size = static_cast<Eigen::Index>(inst.tree.running_nodes()) * inst.k;
  if (size > kMaxDenseDimension)
    fail(ErrorCode::budget_exceeded, "dense assembly of N needs dimension " + std::to_string(size) +
                                         " > cap " + std::to_string(kMaxDenseDimension));
  Eigen::MatrixXd m(size, size);
  for (Eigen::Index j = 0; j < size; ++j) m.col(j) = to_weighted_coordinates(apply_N(inst, weighted_basis_vector(inst, j)));
  DenseOperator out;
  out.symmetry_defect = (m - m.transpose()).cwiseAbs().maxCoeff();
  out.matrix = 0.5 * (m + m.transpose());
  return out;
}

}  // namespace stochlq
