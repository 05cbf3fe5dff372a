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

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "stochlq/instances.hpp"
#include "stochlq/maximum_principle.hpp"
#include "stochlq/oracle.hpp"
#include "stochlq/spectral.hpp"
#include "support.hpp"

using namespace stochlq;

namespace {

AdaptedProcess ones(const LQInstance& inst) {
  return AdaptedProcess::constant(inst.tree, Eigen::VectorXd::Ones(inst.k), ProcessKind::running);
}

AdaptedProcess zeros(const LQInstance& inst) { return AdaptedProcess(inst.tree, inst.k, ProcessKind::running); }

struct Along {
  Trajectory X;
  AdjointPair pair;
};

Along along(const LQInstance& inst, const AdaptedProcess& u) {
  Trajectory X = forward_state(inst, u);
  AdjointPair pair = solve_first_adjoint(inst, X, u);
  return {std::move(X), std::move(pair)};
}

Eigen::VectorXd vec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

}  // namespace

TEST(FirstAdjoint, Example5Optimum) {
  const auto inst = make_example5(4);
  const auto a = along(inst, zeros(inst));
  EXPECT_TRUE(a.pair.p.running.values().isZero(0.0));
  EXPECT_TRUE(a.pair.p.terminal.values().isZero(0.0));
  EXPECT_TRUE(a.pair.q.values().isZero(0.0));
}

TEST(FirstAdjoint, ConstantTerminalState) {
  LQInstance inst(build_tree(3, 1.0), 1, 1);
  inst.G(0, 0) = 1.0;
  inst.x0(0) = 0.7;
  const auto a = along(inst, zeros(inst));
  EXPECT_TRUE(a.pair.p.running.values().isConstant(-0.7));
  EXPECT_TRUE(a.pair.q.values().isZero(0.0));
}

// By hand from X(T) in {2s, 0, 0, -2s}, s = sqrt(1/2), with driver -2X.
TEST(FirstAdjoint, Example5OnesDepthTwo) {
  const auto inst = make_example5(2);
  const auto a = along(inst, ones(inst));
  const double s = std::sqrt(0.5);
  EXPECT_NEAR(a.pair.pbar.at(1, 0)(0), -2 * s, 1e-15);
  EXPECT_NEAR(a.pair.q.at(1, 0)(0), -2.0, 1e-15);
  EXPECT_NEAR(a.pair.p.at(1, 0)(0), -3 * s, 1e-15);
  EXPECT_NEAR(a.pair.p.at(1, 1)(0), 3 * s, 1e-15);
  EXPECT_NEAR(a.pair.q.at(0, 0)(0), -3.0, 1e-15);
  EXPECT_NEAR(a.pair.p.at(0, 0)(0), 0.0, 1e-15);
}

TEST(FirstAdjoint, Residual) {
  RandomInstanceOptions opts;
  opts.maxDepth = 5;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto inst = make_random_instance(seed, opts);
    std::mt19937_64 rng(seed);
    const auto u = random_process(inst.tree, inst.k, ProcessKind::running, rng, -1, 1);
    const auto X = forward_state(inst, u);
    const auto pair = solve_first_adjoint(inst, X, u);
    AdaptedProcess xi = running_driver(inst, X, &u);
    xi *= -1.0;
    AdaptedProcess eta = terminal_driver(inst, X);
    eta *= -1.0;
    EXPECT_LE(bsde_residual(inst, pair, &xi, &eta), 1e-10);
  }
}

TEST(Hamiltonian, Example5Optimum) {
  const auto inst = make_example5(4);
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(1);
  for (double u : {0.0, 0.25, 1.0, -2.0}) {
    EXPECT_NEAR(hamiltonian_mu(inst, 1, z, vec({u}), z, z, -3.0), 2 * u * u - 1.5 * u, 1e-14);
    EXPECT_NEAR(hamiltonian_mu(inst, 1, z, vec({u}), z, z, 0.0), 0.5 * u * u, 1e-14);
  }
  EXPECT_NEAR(hamiltonian_mu_gradient(inst, 0, z, z, z, z, -3.0)(0), -1.5, 1e-15);
  EXPECT_EQ(hamiltonian_mu(make_random_instance(1), 0, Eigen::VectorXd::Zero(make_random_instance(1).n),
                           Eigen::VectorXd::Zero(make_random_instance(1).k), Eigen::VectorXd::Zero(make_random_instance(1).n),
                           Eigen::VectorXd::Zero(make_random_instance(1).n), 0.0),
            0.0);
}

TEST(Hamiltonian, CancelledCurvature) {
  LQInstance inst(build_tree(1, 1.0), 2, 2);
  inst.at(0).R = -Eigen::MatrixXd::Identity(2, 2);
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(2);
  const auto g = hamiltonian_mu_gradient(inst, 0, z, vec({0.3, -4.0}), z, z, 1.0);
  EXPECT_NEAR(g(0), 0.5, 1e-15);
  EXPECT_NEAR(g(1), 0.5, 1e-15);
}

TEST(Hamiltonian, GradientMatchesCentralDifferences) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> d(-1, 1);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto inst = make_random_instance(static_cast<std::uint64_t>(trial));
    auto rv = [&](int n) {
      Eigen::VectorXd v(n);
      for (int i = 0; i < n; ++i) v(i) = d(rng);
      return v;
    };
    const Eigen::VectorXd x = rv(inst.n), u = rv(inst.k), p = rv(inst.n), q = rv(inst.n);
    const double mu = 3.0 * d(rng);
    const auto g = hamiltonian_mu_gradient(inst, 0, x, u, p, q, mu);
    const double h = 1e-6;
    for (int i = 0; i < inst.k; ++i) {
      const Eigen::VectorXd e = h * Eigen::VectorXd::Unit(inst.k, i);
      const double fd =
          (hamiltonian_mu(inst, 0, x, u + e, p, q, mu) - hamiltonian_mu(inst, 0, x, u - e, p, q, mu)) / (2 * h);
      worst = std::max(worst, std::abs(fd - g(i)));
    }
  }
  EXPECT_LE(worst, 1e-6);
}

// Node gradients are the negated derivative of the shifted cost divided by
// the node measure; central differences of the cost are exact up to rounding.
TEST(Hamiltonian, GradientIsCostDerivative) {
  RandomInstanceOptions opts;
  opts.maxDepth = 3;
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    const auto inst = make_random_instance(seed, opts);
    std::mt19937_64 rng(seed);
    const auto u = random_process(inst.tree, inst.k, ProcessKind::running, rng, 0, 1);
    const double mu = -1.3;
    const auto a = along(inst, u);
    const auto g = hamiltonian_gradients(inst, a.X, u, a.pair, mu);
    for (int lvl = 0; lvl < inst.tree.depth(); ++lvl)
      for (std::size_t j = 0; j < ScenarioTree::level_size(lvl); ++j)
        for (int i = 0; i < inst.k; ++i) {
          const double h = 1e-3;
          auto up = u, dn = u;
          up.at(lvl, j)(i) += h;
          dn.at(lvl, j)(i) -= h;
          const double dJ = (shifted_cost(inst, up, mu) - shifted_cost(inst, dn, mu)) / (2 * h);
          EXPECT_NEAR(-dJ / inst.tree.running_weight(lvl), g.at(lvl, j)(i), 1e-7);
        }
  }
}

TEST(Stationarity, Example5Optimum) {
  for (int N : {2, 4, 6}) {
    const auto inst = make_example5(N);
    const double mu = lambda_max(inst).mu;
    const auto a = along(inst, zeros(inst));
    const auto r = check_stationarity(inst, a.X, zeros(inst), a.pair, mu, ControlDomain(1));
    EXPECT_TRUE(r.pass);
    EXPECT_NEAR(r.worstViolation, 0.0, 1e-15);  // v = ubar
    ASSERT_TRUE(r.gradients.has_value());
    EXPECT_TRUE(r.gradients->values().isConstant(0.5 * mu, 1e-12));
    EXPECT_NEAR(0.5 * mu, -(3.0 - 2.0 / N) / 2.0, 1e-9);
  }
}

TEST(Stationarity, Example5OnesFails) {
  for (int N : {2, 4, 8}) {
    const auto inst = make_example5(N);
    const double mu = -(3.0 - 2.0 / N);
    const auto a = along(inst, ones(inst));
    const auto r = check_stationarity(inst, a.X, ones(inst), a.pair, mu, ControlDomain(1));
    EXPECT_FALSE(r.pass);
    EXPECT_NEAR(r.worstViolation, 1.5 - 1.0 / N, 1e-12);
    EXPECT_EQ(r.worstNode.level, 0);
    // gradient at level m is -(3/2 + dt - 2 t_{m+1})
    for (int m = 0; m < N; ++m)
      EXPECT_NEAR(r.gradients->at(m, 0)(0), -(1.5 + 1.0 / N - 2.0 * (m + 1.0) / N), 1e-12);
  }
}

TEST(Stationarity, ZeroInstance) {
  const auto inst = make_zero_instance(3);
  const auto a = along(inst, ones(inst));
  EXPECT_TRUE(check_stationarity(inst, a.X, ones(inst), a.pair, 0.0, ControlDomain(1)).pass);
}

TEST(SignConditions, Example5) {
  const auto inst = make_example5(4);
  const double mu = -(3.0 - 0.5);
  const auto opt = along(inst, zeros(inst));
  EXPECT_TRUE(check_remark1_signs(inst, opt.X, zeros(inst), opt.pair, mu).pass);

  const auto bad = along(inst, ones(inst));
  const auto r = check_remark1_signs(inst, bad.X, ones(inst), bad.pair, mu);
  EXPECT_FALSE(r.pass);
  // fails where t_{m+1} < 3/4 + dt/2, holds on the later levels
  for (int m = 0; m < 4; ++m) {
    const double g = r.gradients->at(m, 0)(0);
    if ((m + 1) * 0.25 < 0.75 + 0.125) EXPECT_LT(g, -1e-8) << m;
    else EXPECT_GE(g, -1e-8) << m;
  }
}

TEST(SignConditions, CancelledCurvatureCoordinate) {
  LQInstance inst(build_tree(1, 1.0), 1, 2);
  const double mu = 0.25;
  inst.at(0).R = -mu * Eigen::MatrixXd::Identity(2, 2);
  AdaptedProcess u(inst.tree, 2, ProcessKind::running);
  u.at(0, 0) = vec({0.0, 1.0});
  const auto a = along(inst, u);
  const auto r = check_remark1_signs(inst, a.X, u, a.pair, mu);
  EXPECT_FALSE(r.pass);
  EXPECT_NEAR(r.worstViolation, 0.5 * mu, 1e-15);
  EXPECT_EQ(r.worstWitness, Eigen::Vector2d(1, 0));
  EXPECT_TRUE(check_remark1_signs(inst, a.X, u, a.pair, mu, 0.2).pass);
}

TEST(SignConditions, RejectsRelaxedControl) {
  const auto inst = make_example5(2);
  const auto half = AdaptedProcess::constant(inst.tree, Eigen::VectorXd::Constant(1, 0.5), ProcessKind::running);
  const auto a = along(inst, half);
  EXPECT_THROW(check_remark1_signs(inst, a.X, half, a.pair, -2.0), Error);
}

TEST(SecondAdjoint, Example5) {
  for (int N : {1, 2, 4, 8}) {
    const auto inst = make_example5(N);
    const auto a = along(inst, zeros(inst));
    const auto s = solve_second_adjoint(inst, a.X, zeros(inst));
    for (int lvl = 0; lvl <= N; ++lvl)
      for (std::size_t j = 0; j < ScenarioTree::level_size(lvl); ++j) {
        const auto node = ScenarioTree::node_index(lvl, j);
        EXPECT_NEAR(s.P[node](0, 0), 2.0 * inst.tree.time(lvl) - 4.0, 1e-12);
        if (lvl < N) {
          EXPECT_EQ(s.Lambda[node](0, 0), 0.0);
        }
      }
  }
}

TEST(SecondAdjoint, TerminalOnly) {
  LQInstance inst(build_tree(3, 1.0), 2, 1);
  inst.G = Eigen::MatrixXd::Identity(2, 2);
  const auto a = along(inst, zeros(inst));
  const auto s = solve_second_adjoint(inst, a.X, zeros(inst));
  for (const auto& P : s.P) EXPECT_TRUE(P.isApprox(-Eigen::MatrixXd::Identity(2, 2)));
  for (const auto& L : s.Lambda) EXPECT_TRUE(L.isZero(0.0));
}

// dx = x dt, G = 1: P_n = (1 + dt)^2 P_{n+1} from P_2 = -1.
TEST(SecondAdjoint, GrowthRecursion) {
  LQInstance inst(build_tree(2, 1.0), 1, 1);
  auto c = IntervalCoefficients::zeros(1, 1);
  c.A(0, 0) = 1.0;
  inst.set_all(c);
  inst.G(0, 0) = 1.0;
  const auto a = along(inst, zeros(inst));
  const auto s = solve_second_adjoint(inst, a.X, zeros(inst));
  EXPECT_DOUBLE_EQ(s.P[ScenarioTree::node_index(2, 0)](0, 0), -1.0);
  EXPECT_DOUBLE_EQ(s.P[ScenarioTree::node_index(1, 0)](0, 0), -2.25);
  EXPECT_DOUBLE_EQ(s.P[0](0, 0), -5.0625);
}

// -P_0 is the Hessian of the uncontrolled cost in x0 (exact quadratic).
TEST(SecondAdjoint, RootIsCostHessian) {
  RandomInstanceOptions opts;
  opts.maxDepth = 4;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto inst = make_random_instance(seed, opts);
    for (auto& c : inst.intervals) {
      c.b.setZero();
      c.sigma.setZero();
    }
    const auto u0 = zeros(inst);
    const auto a = along(inst, u0);
    const auto s = solve_second_adjoint(inst, a.X, u0);
    Eigen::MatrixXd H(inst.n, inst.n);
    for (int i = 0; i < inst.n; ++i)
      for (int j = 0; j < inst.n; ++j) {
        auto cost_at = [&](const Eigen::VectorXd& x) {
          auto copy = inst;
          copy.x0 = x;
          return cost_direct(copy, u0);
        };
        const Eigen::VectorXd ei = Eigen::VectorXd::Unit(inst.n, i), ej = Eigen::VectorXd::Unit(inst.n, j);
        H(i, j) = cost_at(ei + ej) - cost_at(ei) - cost_at(ej) + cost_at(Eigen::VectorXd::Zero(inst.n));
      }
    EXPECT_LE((H + s.P[0]).cwiseAbs().maxCoeff(), 1e-10) << seed;
  }
}

TEST(SecondAdjoint, DeterministicCoefficientsGiveZeroLambda) {
  RandomInstanceOptions opts;
  opts.maxDepth = 4;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto inst = make_random_instance(seed, opts);
    std::mt19937_64 rng(seed);
    const auto u = stochlq::testing::random_binary(inst.tree, inst.k, rng);
    const auto a = along(inst, u);
    const auto s = solve_second_adjoint(inst, a.X, u);
    for (const auto& L : s.Lambda) EXPECT_TRUE(L.isZero(0.0));
  }
}

TEST(GeneralSmp, Example5) {
  const auto inst = make_example5(4);
  const ControlDomain dom(1);
  const auto opt = along(inst, zeros(inst));
  const auto s0 = solve_second_adjoint(inst, opt.X, zeros(inst));
  const auto r = check_general_smp(inst, opt.X, zeros(inst), opt.pair, s0, dom);
  EXPECT_TRUE(r.pass);
  EXPECT_NEAR(r.worstViolation, 0.0, 1e-15);  // v = ubar

  const auto bad = along(inst, ones(inst));
  const auto s1 = solve_second_adjoint(inst, bad.X, ones(inst));
  const auto f = check_general_smp(inst, bad.X, ones(inst), bad.pair, s1, dom);
  EXPECT_FALSE(f.pass);
  EXPECT_EQ(f.worstNode.level, 0);
  EXPECT_EQ(f.worstWitness(0), 0.0);
}

// Spike identity: J(ubar with v at one node) - J(ubar) = w * value.
TEST(GeneralSmp, SpikeValueIsExactCostChange) {
  RandomInstanceOptions opts;
  opts.maxDepth = 3;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto inst = make_random_instance(seed, opts);
    const ControlDomain dom(inst.k);
    std::mt19937_64 rng(seed);
    const auto u = stochlq::testing::random_binary(inst.tree, inst.k, rng);
    const auto a = along(inst, u);
    const auto s = solve_second_adjoint(inst, a.X, u);
    const double J = cost_direct(inst, u);
    for (int lvl = 0; lvl < inst.tree.depth(); ++lvl)
      for (std::size_t j = 0; j < ScenarioTree::level_size(lvl); ++j)
        for (const auto& v : enumerate_binary_vertices(dom)) {
          auto spiked = u;
          spiked.at(lvl, j) = v;
          const Eigen::VectorXd x = a.X.at(lvl, j), ub = u.at(lvl, j), p = a.pair.pbar.at(lvl, j),
                                q = a.pair.q.at(lvl, j), d = ub - v;
          const auto K = spike_curvature(inst, lvl, s, ScenarioTree::node_index(lvl, j));
          const double value = hamiltonian_mu(inst, lvl, x, ub, p, q, 0.0) - hamiltonian_mu(inst, lvl, x, v, p, q, 0.0) -
                               0.5 * d.dot(K * d);
          EXPECT_NEAR(cost_direct(inst, spiked) - J, inst.tree.running_weight(lvl) * value, 1e-12) << seed;
        }
  }
}

TEST(Msa, Example5FromOnes) {
  const auto inst = make_example5(2);
  const auto r = msa_candidate_search(inst, ControlDomain(1), -2.0, 10, ones(inst));
  EXPECT_EQ(r.status, MsaStatus::converged);
  EXPECT_LE(r.iterations, 2);
  EXPECT_TRUE(r.control.values().isZero(0.0));
  EXPECT_EQ(r.cost, 0.0);
}

TEST(Msa, ZeroInstanceFixedPoint) {
  const auto inst = make_zero_instance(3);
  const auto r = msa_candidate_search(inst, ControlDomain(1), 0.0, 10, ones(inst));
  // all scores tie, the lexicographically first vertex 0 wins
  EXPECT_TRUE(r.control.values().isZero(0.0));
  const auto r0 = msa_candidate_search(inst, ControlDomain(1), 0.0, 10);
  EXPECT_EQ(r0.status, MsaStatus::converged);
  EXPECT_EQ(r0.iterations, 1);
}

TEST(Msa, RandomInstancesAgainstOracle) {
  RandomInstanceOptions opts;
  opts.maxControlDim = 1;
  opts.minDepth = 2;
  opts.maxDepth = 2;
  int matches = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto inst = make_random_instance(seed, opts);
    const ControlDomain dom(1);
    const double mu = lambda_max(inst).mu;
    const auto r = msa_candidate_search(inst, dom, mu, 50);
    const auto best = brute_force_binary(inst, dom);
    if (r.status == MsaStatus::converged) {
      const auto a = along(inst, r.control);
      EXPECT_TRUE(check_stationarity(inst, a.X, r.control, a.pair, mu, dom).pass) << seed;
    }
    if (std::abs(r.cost - best.bestCost) <= 1e-12 * std::max(1.0, std::abs(best.bestCost))) ++matches;
  }
  EXPECT_GE(matches, 15);
}

TEST(Msa, MaxIterationsReturnsLastControl) {
  const auto inst = make_example5(4);
  const auto r = msa_candidate_search(inst, ControlDomain(1), -2.5, 1, ones(inst));
  EXPECT_EQ(r.status, MsaStatus::max_iterations);
  EXPECT_EQ(r.trace.size(), 1u);
  EXPECT_FALSE(r.control.values().isOnes(0.0));
  EXPECT_DOUBLE_EQ(r.cost, cost_direct(inst, r.control));
}

TEST(Msa, DampingKeepsCurrentValue) {
  const auto inst = make_example5(2);
  const auto r = msa_candidate_search(inst, ControlDomain(1), -2.0, 10, ones(inst), 100.0);
  EXPECT_TRUE(r.control.values().isOnes(0.0));
  EXPECT_THROW(msa_candidate_search(inst, ControlDomain(1), -2.0, 10, std::nullopt, -1.0), Error);
}
