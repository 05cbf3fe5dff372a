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

// Ground truth by exhaustion.
//
// A binary control assigns one element of U to every running node. Controls
// are numbered as mixed-radix integers: digit i is the lexicographic index in
// U of the value at breadth-first node i, node 0 being the most significant
// digit. Enumerating in increasing order and keeping the first strict
// minimum therefore returns the lexicographically smallest optimum.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stochlq/error.hpp"
#include "stochlq/lq_model.hpp"
#include "stochlq/maximum_principle.hpp"
#include "stochlq/spectral.hpp"

namespace stochlq {

inline constexpr std::uint64_t kDefaultEnumerationBudget = 1'000'000;
inline constexpr std::size_t kMaxReportedTies = 16;
inline constexpr double kTieTolerance = 1e-12;

struct OracleResult {
  AdaptedProcess bestControl;
  double bestCost;
  std::uint64_t enumerated;
  std::vector<AdaptedProcess> ties;  // co-optimal controls, bestControl first, capped
  std::size_t tieCount;              // uncapped number of co-optimal controls
};

/// |U|^(running nodes), saturating at the largest uint64.
inline std::uint64_t binary_control_count(const LQInstance& inst, std::size_t binarySetSize) {
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < inst.tree.running_nodes(); ++i) {
    if (binarySetSize != 0 && count > std::numeric_limits<std::uint64_t>::max() / binarySetSize)
      return std::numeric_limits<std::uint64_t>::max();
    count *= binarySetSize;
  }
  return count;
}

/// Calls visit(control) for every adapted map nodes -> U in mixed-radix order.
template <typename Visitor>
std::uint64_t for_each_binary_control(const LQInstance& inst, const ControlDomain& domain, std::uint64_t budget,
                                      Visitor&& visit) {
  require(domain.k == inst.k, "domain dimension differs from k");
  const auto binary = enumerate_binary_vertices(domain);
  require(!binary.empty(), "U is empty");
  const std::uint64_t count = binary_control_count(inst, binary.size());
  if (count > budget) {
    const std::string required = count == std::numeric_limits<std::uint64_t>::max()
                                     ? std::string("more than 2^64")
                                     : std::to_string(count);
    fail(ErrorCode::budget_exceeded, "exhaustive enumeration needs " + required + " controls, budget is " +
                                         std::to_string(budget));
  }
  const auto nodes = static_cast<Eigen::Index>(inst.tree.running_nodes());
  std::vector<std::size_t> digits(static_cast<std::size_t>(nodes), 0);
  AdaptedProcess u = AdaptedProcess::constant(inst.tree, binary[0], ProcessKind::running);
  for (std::uint64_t code = 0; code < count; ++code) {
    visit(static_cast<const AdaptedProcess&>(u));
    // odometer increment, last node least significant
    for (Eigen::Index i = nodes - 1; i >= 0; --i) {
      auto& d = digits[static_cast<std::size_t>(i)];
      d = (d + 1) % binary.size();
      u.values().col(i) = binary[d];
      if (d != 0) break;
    }
  }
  return count;
}

inline OracleResult brute_force_binary(const LQInstance& inst, const ControlDomain& domain,
                                       std::uint64_t budget = kDefaultEnumerationBudget) {
  OracleResult out{AdaptedProcess(inst.tree, inst.k, ProcessKind::running),
                   std::numeric_limits<double>::infinity(), 0, {}, 0};
  out.enumerated = for_each_binary_control(inst, domain, budget, [&](const AdaptedProcess& u) {
    const double cost = cost_direct(inst, u);
    const double scale = kTieTolerance * std::max(1.0, std::abs(out.bestCost));
    if (cost < out.bestCost - scale || !std::isfinite(out.bestCost)) {
      out.bestCost = cost;
      out.bestControl = u;
      out.ties.assign(1, u);
      out.tieCount = 1;
    } else if (std::abs(cost - out.bestCost) <= scale) {
      ++out.tieCount;
      if (out.ties.size() < kMaxReportedTies) out.ties.push_back(u);
    }
  });
  return out;
}

struct RelaxedSample {
  double minSampledCost;
  AdaptedProcess witness;
  std::uint64_t draws;  // accepted + rejected node draws
};

/// Uniform samples of relaxed controls (each node uniform in the box, rejected
/// against the half-spaces), minimizing the shifted cost.
inline RelaxedSample sample_relaxed_box(const LQInstance& inst, const ControlDomain& domain, double mu, int samples,
                                        std::uint64_t seed) {
  require(samples >= 1, "need at least one sample");
  require(domain.k == inst.k, "domain dimension differs from k");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  RelaxedSample out{std::numeric_limits<double>::infinity(), AdaptedProcess(inst.tree, inst.k, ProcessKind::running), 0};
  std::uint64_t accepted = 0;
  AdaptedProcess u(inst.tree, inst.k, ProcessKind::running);
  Eigen::VectorXd v(inst.k);
  for (int s = 0; s < samples; ++s) {
    for (Eigen::Index node = 0; node < u.values().cols(); ++node) {
      while (true) {
        for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = unit(rng);
        ++out.draws;
        if (domain.in_polytope(v, 0.0)) break;
        if (out.draws >= 1000 && out.draws > 1000 * (accepted + 1))
          fail(ErrorCode::validation, "relaxed sampling rejects more than 99.9% of draws; C is degenerate");
      }
      ++accepted;
      u.values().col(node) = v;
    }
    const double cost = shifted_cost(inst, u, mu);
    if (cost < out.minSampledCost) {
      out.minSampledCost = cost;
      out.witness = u;
    }
  }
  return out;
}

struct EquivalenceOptions {
  int samples = 10'000;
  std::uint64_t seed = 0;
  std::uint64_t budget = kDefaultEnumerationBudget;
  double tol = kDefaultSignTolerance;
  double identityTolerance = 1e-11;  // relative, J^mu vs J on binary controls
  double samplingTolerance = 1e-9;
};

struct EquivalenceCertificate {
  double lambdaMax = 0.0;
  double mu = 0.0;
  SpectralMode spectralMode = SpectralMode::dense;

  // (a) J^mu = J on every binary control
  bool identityPass = false;
  double identityMaxDefect = 0.0;
  std::uint64_t identityWitness = 0;  // mixed-radix code of the worst control
  std::uint64_t enumerated = 0;

  // (b) no relaxed sample beats the binary optimum
  bool samplingPass = false;
  double binaryOptimum = 0.0;
  double minSampledCost = 0.0;
  int samples = 0;
  std::uint64_t seed = 0;
  std::optional<AdaptedProcess> samplingWitness;  // set on failure

  // (c) the binary optimum satisfies the shifted stationarity condition
  bool stationarityPass = false;
  double stationarityWorst = 0.0;
  NodeId stationarityWorstNode;

  AdaptedProcess bestControl;
  bool nonBinaryVertexWarning = false;

  [[nodiscard]] bool pass() const { return identityPass && samplingPass && stationarityPass; }
};

inline SpectralReport spectral_shift_for(const LQInstance& inst, double tol = 1e-10) {
  const auto size = static_cast<Eigen::Index>(inst.tree.running_nodes()) * inst.k;
  SpectralOptions opts;
  opts.mode = size <= kMaxDenseDimension ? SpectralMode::dense : SpectralMode::power;
  opts.tol = tol;
  return lambda_max(inst, opts);
}

inline EquivalenceCertificate equivalence_check(const LQInstance& inst, const ControlDomain& domain,
                                                const EquivalenceOptions& opts = {}) {
  const auto spectrum = spectral_shift_for(inst);
  const double mu = spectrum.mu;
  EquivalenceCertificate cert;
  cert.lambdaMax = spectrum.lambdaMax;
  cert.mu = mu;
  cert.spectralMode = spectrum.method;
  cert.bestControl = AdaptedProcess(inst.tree, inst.k, ProcessKind::running);

  for (const auto& v : enumerate_relaxed_vertices(domain))
    if (!domain.is_binary(v)) cert.nonBinaryVertexWarning = true;

  OracleResult best{AdaptedProcess(inst.tree, inst.k, ProcessKind::running),
                    std::numeric_limits<double>::infinity(), 0, {}, 0};
  std::uint64_t code = 0;
  cert.enumerated = for_each_binary_control(inst, domain, opts.budget, [&](const AdaptedProcess& u) {
    const double cost = cost_direct(inst, u);
    const double shifted = shifted_cost(inst, u, mu);
    const double defect = std::abs(shifted - cost) / std::max(1.0, std::abs(cost));
    if (defect > cert.identityMaxDefect) {
      cert.identityMaxDefect = defect;
      cert.identityWitness = code;
    }
    if (cost < best.bestCost) {
      best.bestCost = cost;
      best.bestControl = u;
    }
    ++code;
  });
  cert.identityPass = cert.identityMaxDefect <= opts.identityTolerance;
  cert.binaryOptimum = best.bestCost;
  cert.bestControl = best.bestControl;

  const auto sampled = sample_relaxed_box(inst, domain, mu, opts.samples, opts.seed);
  cert.samples = opts.samples;
  cert.seed = opts.seed;
  cert.minSampledCost = sampled.minSampledCost;
  cert.samplingPass = sampled.minSampledCost >= best.bestCost - opts.samplingTolerance;
  if (!cert.samplingPass) cert.samplingWitness = sampled.witness;

  const Trajectory X = forward_state(inst, best.bestControl);
  const auto pair = solve_first_adjoint(inst, X, best.bestControl);
  const auto report = check_stationarity(inst, X, best.bestControl, pair, mu, domain, opts.tol);
  cert.stationarityPass = report.pass;
  cert.stationarityWorst = report.worstViolation;
  cert.stationarityWorstNode = report.worstNode;
  return cert;
}

}  // namespace stochlq
