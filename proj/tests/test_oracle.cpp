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

#include <gtest/gtest.h>

#include "stochlq/instances.hpp"
#include "stochlq/io.hpp"
#include "stochlq/oracle.hpp"

using namespace stochlq;

namespace {

LQInstance example5_variant(int depth, double Q, double R, double G) {
  auto inst = make_example5(depth);
  for (int m = 0; m < depth; ++m) {
    inst.at(m).Q(0, 0) = Q;
    inst.at(m).R(0, 0) = R;
  }
  inst.G(0, 0) = G;
  return inst;
}

// J(u) = sum_n dt (u^2 - u) at x = 1: the unconstrained minimum u = 1/2 is interior.
LQInstance interior_minimum(int depth) {
  LQInstance inst(build_tree(depth, 1.0), 1, 1);
  auto c = IntervalCoefficients::zeros(1, 1);
  c.R(0, 0) = 2.0;
  c.S(0, 0) = -1.0;
  inst.set_all(c);
  inst.x0(0) = 1.0;
  return inst;
}

}  // namespace

TEST(BruteForce, Example5DepthTwo) {
  const auto r = brute_force_binary(make_example5(2), ControlDomain(1));
  EXPECT_EQ(r.enumerated, 8u);
  EXPECT_EQ(r.bestCost, 0.0);
  EXPECT_TRUE(r.bestControl.values().isZero(0.0));
  EXPECT_EQ(r.tieCount, 1u);
}

TEST(BruteForce, ZeroInstanceAllTie) {
  const auto r = brute_force_binary(make_zero_instance(2), ControlDomain(1));
  EXPECT_EQ(r.enumerated, 8u);
  EXPECT_EQ(r.tieCount, 8u);
  EXPECT_EQ(r.ties.size(), 8u);
  EXPECT_TRUE(r.bestControl.values().isZero(0.0));  // first in enumeration order
}

TEST(BruteForce, TieListIsCapped) {
  const auto r = brute_force_binary(make_zero_instance(3), ControlDomain(1));
  EXPECT_EQ(r.tieCount, 128u);
  EXPECT_EQ(r.ties.size(), kMaxReportedTies);
}

TEST(BruteForce, PositiveControlWeightStillZero) {
  for (int depth : {1, 2, 3}) {
    const auto r = brute_force_binary(example5_variant(depth, 2.0, 1.0, 2.0), ControlDomain(1));
    EXPECT_TRUE(r.bestControl.values().isZero(0.0)) << depth;
    EXPECT_EQ(r.bestCost, 0.0);
  }
}

TEST(BruteForce, NegativeWeightsPreferOne) {
  const auto inst = example5_variant(1, -2.0, -1.0, -2.0);
  const auto r = brute_force_binary(inst, ControlDomain(1));
  EXPECT_EQ(r.bestControl.values()(0, 0), 1.0);
  // X_1 = +-1, so J(1) = (R + G) / 2
  EXPECT_NEAR(r.bestCost, -1.5, 1e-15);
}

TEST(BruteForce, CountIsExhaustive) {
  const ControlDomain simplex(2, {{Eigen::Vector2d(1, 1), 1.0}});
  const auto inst = make_zero_instance(2, 1, 2);
  const auto r = brute_force_binary(inst, simplex);
  EXPECT_EQ(r.enumerated, binary_control_count(inst, 3));
  EXPECT_EQ(r.enumerated, 27u);
  EXPECT_EQ(brute_force_binary(make_example5(4), ControlDomain(1)).enumerated, 32768u);
}

TEST(BruteForce, BestIsMinimumOverRandomControls) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto inst = make_random_instance(seed);
    const ControlDomain dom(inst.k);
    const auto r = brute_force_binary(inst, dom);
    std::mt19937_64 rng(seed);
    for (int i = 0; i < 20; ++i) {
      AdaptedProcess u(inst.tree, inst.k, ProcessKind::running);
      std::bernoulli_distribution coin(0.5);
      for (Eigen::Index j = 0; j < u.values().size(); ++j) u.values().data()[j] = coin(rng) ? 1.0 : 0.0;
      EXPECT_LE(r.bestCost, cost_direct(inst, u) + 1e-12) << seed;
    }
  }
}

TEST(BruteForce, BudgetRefusal) {
  try {
    brute_force_binary(make_example5(5), ControlDomain(1), 1000);
    FAIL() << "expected refusal";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::budget_exceeded);
    EXPECT_NE(std::string(e.what()).find("2147483648"), std::string::npos);
  }
  EXPECT_THROW(brute_force_binary(make_example5(8), ControlDomain(1)), Error);
}

TEST(RelaxedSampling, Example5NeverBeatsBinary) {
  const auto inst = make_example5(2);
  for (std::uint64_t seed : {0u, 1u, 7u}) {
    const auto s = sample_relaxed_box(inst, ControlDomain(1), -2.0, 10'000, seed);
    EXPECT_GE(s.minSampledCost, -1e-9) << seed;
  }
}

TEST(RelaxedSampling, Deterministic) {
  const auto inst = make_random_instance(4);
  const auto a = sample_relaxed_box(inst, ControlDomain(inst.k), -1.0, 1, 42);
  const auto b = sample_relaxed_box(inst, ControlDomain(inst.k), -1.0, 1, 42);
  EXPECT_EQ(a.minSampledCost, b.minSampledCost);
  EXPECT_EQ(a.witness.values(), b.witness.values());
}

TEST(RelaxedSampling, WithoutShiftInteriorWins) {
  const auto inst = interior_minimum(2);
  EXPECT_EQ(brute_force_binary(inst, ControlDomain(1)).bestCost, 0.0);
  EXPECT_LT(sample_relaxed_box(inst, ControlDomain(1), 0.0, 1000, 0).minSampledCost, -0.1);
  const double mu = lambda_max(inst).mu;
  EXPECT_NEAR(mu, -2.0, 1e-12);
  EXPECT_GE(sample_relaxed_box(inst, ControlDomain(1), mu, 1000, 0).minSampledCost, -1e-9);
}

TEST(RelaxedSampling, DegenerateDomainIsRefused) {
  const ControlDomain thin(1, {{Eigen::VectorXd::Ones(1), 1e-7}});
  try {
    sample_relaxed_box(make_example5(1), thin, 0.0, 10, 0);
    FAIL() << "expected refusal";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::validation);
  }
}

TEST(Equivalence, Example5) {
  for (int depth : {1, 2, 3}) {
    const auto c = equivalence_check(make_example5(depth), ControlDomain(1));
    EXPECT_TRUE(c.identityPass && c.samplingPass && c.stationarityPass) << depth;
    EXPECT_EQ(c.binaryOptimum, 0.0);
    EXPECT_NEAR(c.lambdaMax, 3.0 - 2.0 / depth, 1e-10);
    EXPECT_FALSE(c.nonBinaryVertexWarning);
  }
}

TEST(Equivalence, RandomInstances) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto inst = make_random_instance(seed);
    const auto c = equivalence_check(inst, ControlDomain(inst.k));
    EXPECT_TRUE(c.identityPass) << seed << " defect " << c.identityMaxDefect;
    EXPECT_TRUE(c.samplingPass) << seed << " " << c.minSampledCost << " < " << c.binaryOptimum;
    EXPECT_TRUE(c.stationarityPass) << seed << " worst " << c.stationarityWorst;
    EXPECT_EQ(c.enumerated, binary_control_count(inst, std::size_t{1} << inst.k));
  }
}

TEST(Equivalence, ZeroInstance) {
  const auto c = equivalence_check(make_zero_instance(2), ControlDomain(1));
  EXPECT_TRUE(c.pass());
  EXPECT_EQ(c.mu, 0.0);
  EXPECT_EQ(c.minSampledCost, 0.0);
}

TEST(Equivalence, CutCornerWarns) {
  const ControlDomain cut(2, {{Eigen::Vector2d(1, 1), 1.5}});
  const auto c = equivalence_check(make_zero_instance(1, 1, 2), cut);
  EXPECT_TRUE(c.nonBinaryVertexWarning);
  EXPECT_EQ(io::to_json(c)["warnings"].size(), 1u);
}

TEST(Equivalence, ByteIdenticalAcrossRuns) {
  const auto inst = make_random_instance(9);
  EquivalenceOptions opts;
  opts.samples = 500;
  opts.seed = 3;
  const auto a = io::to_json(equivalence_check(inst, ControlDomain(inst.k), opts)).dump();
  const auto b = io::to_json(equivalence_check(inst, ControlDomain(inst.k), opts)).dump();
  EXPECT_EQ(a, b);
}
