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

// stochlq command line: validate, spectrum, solve, verify, equivalence, example5.
// Exit codes: 0 ok, 2 validation, 3 non-convergence, 4 budget, 5 bad control file.

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stochlq/instances.hpp"
#include "stochlq/io.hpp"
#include "stochlq/maximum_principle.hpp"
#include "stochlq/operators.hpp"
#include "stochlq/oracle.hpp"
#include "stochlq/spectral.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stochlq;

namespace {

struct GlobalOptions {
  double tol = kDefaultSignTolerance;
  std::uint64_t seed = 0;
  std::string out;  // empty: stdout
  std::optional<int> depth;
};

class Stopwatch {
 public:
  void lap(const std::string& name) {
    const auto now = std::chrono::steady_clock::now();
    timings_[name] = std::chrono::duration<double>(now - last_).count();
    last_ = now;
  }
  [[nodiscard]] const json& timings() const { return timings_; }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
  json timings_ = json::object();
};

int max_depth_from_env() {
  const char* env = std::getenv("STOCHLQ_MAX_DEPTH");
  if (env == nullptr || *env == '\0') return kDefaultMaxDepth;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1 || v > 30) fail(ErrorCode::invalid_argument, "STOCHLQ_MAX_DEPTH must be an integer in 1..30");
  return static_cast<int>(v);
}

io::InstanceDocument load_instance(const std::string& path, const GlobalOptions& g) {
  std::ifstream in(path);
  if (!in) throw io::ValidationFailure({{"", "cannot open " + path, true}});
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw io::ValidationFailure({{"", std::string("malformed JSON: ") + e.what(), true}});
  }
  io::ParseOptions opts;
  opts.depthOverride = g.depth;
  opts.maxDepth = max_depth_from_env();
  return io::parse_instance(doc, opts);
}

json base_parameters(const GlobalOptions& g, const LQInstance& inst) {
  return {{"tol", g.tol}, {"seed", g.seed}, {"depth", inst.tree.depth()}};
}

void emit(const json& report, const std::string& out) {
  if (out.empty()) {
    std::cout << report.dump(2) << '\n';
    return;
  }
  std::ofstream f(out);
  if (!f) fail(ErrorCode::invalid_argument, "cannot write " + out);
  f << report.dump(2) << '\n';
}

std::ofstream open_sidecar(const std::string& path) {
  std::ofstream f(path);
  if (!f) fail(ErrorCode::invalid_argument, "cannot write " + path);
  return f;
}

/// Sidecar CSV path: explicit flag, else next to --out, else none.
std::optional<std::string> sidecar_path(const std::string& explicitPath, const std::string& out,
                                        const std::string& suffix) {
  if (!explicitPath.empty()) return explicitPath;
  if (!out.empty()) return out + suffix;
  return std::nullopt;
}

json without_gradients(MPReport r) {
  r.gradients.reset();
  return io::to_json(r);
}

// --------------------------------------------------------------- validate

int cmd_validate(const std::string& path, const GlobalOptions& g) {
  json results;
  int code = 0;
  std::string digest;
  json params = {{"tol", g.tol}, {"seed", g.seed}};
  try {
    const auto doc = load_instance(path, g);
    digest = io::instance_digest(doc.instance, doc.domain);
    params["depth"] = doc.instance.tree.depth();
    results = {{"valid", true}, {"n", doc.instance.n}, {"k", doc.instance.k}, {"issues", json::array()}};
  } catch (const io::ValidationFailure& e) {
    json issues = json::array();
    for (const auto& i : e.issues())
      if (i.fatal) issues.push_back({{"path", i.path}, {"message", i.message}});
    results = {{"valid", false}, {"issues", std::move(issues)}};
    std::cerr << e.what() << '\n';
    code = static_cast<int>(ErrorCode::validation);
  }
  emit(io::make_report({"validate", digest, params}, results), g.out);
  return code;
}

// --------------------------------------------------------------- spectrum

int cmd_spectrum(const std::string& path, const GlobalOptions& g, const std::string& mode, int maxIter,
                 const std::string& csv) {
  Stopwatch clock;
  const auto doc = load_instance(path, g);
  clock.lap("load");
  SpectralOptions opts;
  opts.mode = mode == "power" ? SpectralMode::power : SpectralMode::dense;
  opts.tol = g.tol;
  opts.maxIter = maxIter;
  if (g.seed != 0) opts.seed = g.seed;
  const auto report = lambda_max(doc.instance, opts);
  clock.lap("spectrum");

  json results = io::to_json(report);
  if (!csv.empty()) {
    if (opts.mode != SpectralMode::dense) fail(ErrorCode::invalid_argument, "--csv needs --mode dense");
    const auto dense = assemble_N_dense(doc.instance);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(dense.matrix, Eigen::EigenvaluesOnly);
    auto f = open_sidecar(csv);
    f << "index,eigenvalue\n" << std::setprecision(17);
    for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) f << i << ',' << eig.eigenvalues()(i) << '\n';
    results["spectrumCsv"] = csv;
    results["symmetryDefect"] = dense.symmetry_defect;
    clock.lap("spectrum_csv");
  }
  json params = base_parameters(g, doc.instance);
  params["mode"] = mode;
  params["maxIter"] = maxIter;
  emit(io::make_report({"spectrum", io::instance_digest(doc.instance, doc.domain), params}, results, clock.timings()),
       g.out);
  return 0;
}

// ------------------------------------------------------------------ solve

AdaptedProcess random_binary_control(const LQInstance& inst, const ControlDomain& domain, std::uint64_t seed) {
  const auto binary = enumerate_binary_vertices(domain);
  require(!binary.empty(), "U is empty");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, binary.size() - 1);
  AdaptedProcess u(inst.tree, inst.k, ProcessKind::running);
  for (Eigen::Index i = 0; i < u.values().cols(); ++i) u.values().col(i) = binary[pick(rng)];
  return u;
}

int cmd_solve(const std::string& path, const GlobalOptions& g, std::uint64_t budget, int msaIter, int starts,
              double damping, const std::string& controlCsv) {
  Stopwatch clock;
  const auto doc = load_instance(path, g);
  const auto& inst = doc.instance;
  clock.lap("load");
  const auto binary = enumerate_binary_vertices(doc.domain);
  require(!binary.empty(), "U is empty");
  const bool exhaustive = binary_control_count(inst, binary.size()) <= budget;
  if (!exhaustive && msaIter <= 0) {
    // let the oracle raise the budget error with the required count
    brute_force_binary(inst, doc.domain, budget);
  }
  const auto spectrum = spectral_shift_for(inst);
  clock.lap("spectrum");

  json results = {{"lambdaMax", spectrum.lambdaMax}, {"mu", spectrum.mu}};
  AdaptedProcess best;
  double bestCost = std::numeric_limits<double>::infinity();
  if (exhaustive) {
    const auto oracle = brute_force_binary(inst, doc.domain, budget);
    best = oracle.bestControl;
    bestCost = oracle.bestCost;
    results["method"] = "brute_force";
    results["enumerated"] = oracle.enumerated;
    results["tieCount"] = oracle.tieCount;
    json ties = json::array();
    for (const auto& t : oracle.ties) ties.push_back(io::control_json(t));
    results["ties"] = std::move(ties);
    clock.lap("brute_force");
  } else {
    require(starts >= 1, "--starts must be >= 1");
    json runs = json::array();
    for (int s = 0; s < starts; ++s) {
      const std::uint64_t seed = g.seed + static_cast<std::uint64_t>(s);
      std::optional<AdaptedProcess> start;
      if (seed != 0) start = random_binary_control(inst, doc.domain, seed);
      const auto msa = msa_candidate_search(inst, doc.domain, spectrum.mu, msaIter, start, damping);
      json trace = json::array();
      for (const auto& step : msa.trace)
        trace.push_back({{"iteration", step.iteration}, {"cost", step.cost}, {"changedNodes", step.changedNodes}});
      runs.push_back({{"seed", seed},
                      {"status", to_string(msa.status)},
                      {"iterations", msa.iterations},
                      {"cost", msa.cost},
                      {"trace", std::move(trace)}});
      if (msa.cost < bestCost) {
        bestCost = msa.cost;
        best = msa.control;
      }
    }
    results["method"] = "msa";
    results["msaRuns"] = std::move(runs);
    clock.lap("msa");
  }
  results["bestCost"] = bestCost;
  results["bestControl"] = io::control_json(best);

  const Trajectory X = forward_state(inst, best);
  const auto pair = solve_first_adjoint(inst, X, best);
  results["stationarity"] = without_gradients(check_stationarity(inst, X, best, pair, spectrum.mu, doc.domain, g.tol));
  clock.lap("stationarity");

  if (const auto csv = sidecar_path(controlCsv, g.out, ".control.csv")) {
    auto f = open_sidecar(*csv);
    io::write_control_csv(f, best);
    results["controlCsv"] = *csv;
  }
  json params = base_parameters(g, inst);
  params["budget"] = budget;
  params["msa"] = msaIter;
  params["starts"] = starts;
  params["damping"] = damping;
  emit(io::make_report({"solve", io::instance_digest(inst, doc.domain), params}, results, clock.timings()), g.out);
  return 0;
}

// ----------------------------------------------------------------- verify

int cmd_verify(const std::string& path, const GlobalOptions& g, const std::string& controlPath, const std::string& muArg,
               bool secondOrder, const std::string& pCsv) {
  Stopwatch clock;
  const auto doc = load_instance(path, g);
  const auto& inst = doc.instance;
  std::ifstream cin_(controlPath);
  if (!cin_) fail(ErrorCode::bad_control, "cannot open control file " + controlPath);
  const auto u = io::read_control_csv(cin_, inst.tree, inst.k);
  for (Eigen::Index i = 0; i < u.values().cols(); ++i)
    if (!doc.domain.in_binary_set(u.values().col(i)))
      fail(ErrorCode::bad_control, "control file: value at node " + std::to_string(i) + " is not in U");
  clock.lap("load");

  json results = json::object();
  double mu = 0.0;
  if (muArg == "auto") {
    const auto spectrum = spectral_shift_for(inst);
    mu = spectrum.mu;
    results["spectrum"] = io::to_json(spectrum);
  } else {
    double v = 0.0;
    if (!io::detail::parse_number(muArg, v)) fail(ErrorCode::invalid_argument, "--mu must be 'auto' or a number");
    mu = v;
  }
  results["mu"] = mu;
  clock.lap("spectrum");

  const Trajectory X = forward_state(inst, u);
  results["cost"] = cost_of_trajectory(inst, X, u);
  const auto pair = solve_first_adjoint(inst, X, u);
  const auto stationarity = check_stationarity(inst, X, u, pair, mu, doc.domain, g.tol);
  const auto signs = check_remark1_signs(inst, X, u, pair, mu, g.tol);
  results["stationarity"] = io::to_json(stationarity);
  results["remark1Signs"] = without_gradients(signs);
  bool pass = stationarity.pass && signs.pass;
  clock.lap("first_order");

  if (secondOrder) {
    const auto second = solve_second_adjoint(inst, X, u);
    const auto smp = check_general_smp(inst, X, u, pair, second, doc.domain, g.tol);
    results["generalSmp"] = io::to_json(smp);
    pass = pass && smp.pass;
    if (const auto csv = sidecar_path(pCsv, g.out, ".P.csv")) {
      auto f = open_sidecar(*csv);
      io::write_matrix_field_csv(f, inst.tree, second.P, "P", inst.tree.depth());
      results["pCsv"] = *csv;
    }
    clock.lap("second_order");
  }
  results["verdict"] = pass ? "pass" : "fail";

  json params = base_parameters(g, inst);
  params["control"] = controlPath;
  params["mu"] = muArg;
  params["secondOrder"] = secondOrder;
  emit(io::make_report({"verify", io::instance_digest(inst, doc.domain), params}, results, clock.timings()), g.out);
  return 0;
}

// ------------------------------------------------------------ equivalence

int cmd_equivalence(const std::string& path, const GlobalOptions& g, int samples, std::uint64_t budget) {
  Stopwatch clock;
  const auto doc = load_instance(path, g);
  clock.lap("load");
  EquivalenceOptions opts;
  opts.samples = samples;
  opts.seed = g.seed;
  opts.budget = budget;
  opts.tol = g.tol;
  const auto cert = equivalence_check(doc.instance, doc.domain, opts);
  clock.lap("certificate");
  json params = base_parameters(g, doc.instance);
  params["samples"] = samples;
  params["budget"] = budget;
  emit(io::make_report({"equivalence", io::instance_digest(doc.instance, doc.domain), params}, io::to_json(cert),
                       clock.timings()),
       g.out);
  return 0;
}

// --------------------------------------------------------------- example5

/// Intercept of the least-squares line through (x_i, y_i).
double intercept(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return (sy - slope * sx) / n;
}

int cmd_example5(const GlobalOptions& g, const std::vector<int>& depths, const std::string& outDir,
                 std::uint64_t budget) {
  require(!depths.empty(), "--depths needs at least one depth");
  fs::create_directories(outDir);
  Stopwatch clock;
  const int maxDepth = max_depth_from_env();
  const ControlDomain domain(1);

  struct Row {
    int depth;
    double dt, costOnes, costOnesExact, lambdaMax, gradient, hQuad, hLin, optimalCost;
  };
  std::vector<Row> rows;
  json perDepth = json::array();
  auto weights = open_sidecar((fs::path(outDir) / "weights.csv").string());
  weights << "depth,level,t_next,weight,dt\n" << std::setprecision(17);

  for (int N : depths) {
    const auto inst = make_example5(N, maxDepth);
    const auto& tree = inst.tree;
    const double dt = tree.dt();
    json entry = {{"depth", N}, {"dt", dt}};

    // weight identity on u = 1
    const auto ones = AdaptedProcess::constant(tree, Eigen::VectorXd::Ones(1), ProcessKind::running);
    double weighted = 0.0;
    for (int m = 0; m < N; ++m) {
      const double w = 1.5 - tree.time(m + 1);
      weighted += w * dt;
      weights << N << ',' << m << ',' << tree.time(m + 1) << ',' << w << ',' << dt << '\n';
    }
    const double costOnes = cost_direct(inst, ones);
    entry["weightIdentity"] = {{"costOnes", costOnes},
                               {"weightedSum", weighted},
                               {"closedForm", 1.5 - (N + 1.0) / (2.0 * N)},
                               {"defect", std::abs(costOnes - weighted)}};

    const auto spectrum = spectral_shift_for(inst);
    const double mu = spectrum.mu;
    entry["spectrum"] = io::to_json(spectrum);
    entry["spectrum"]["closedForm"] = 3.0 - 2.0 / N;

    // optimum: exhaustive when affordable, otherwise the MSA fixed point
    AdaptedProcess ubar;
    double optimalCost = 0.0;
    if (binary_control_count(inst, 2) <= budget) {
      const auto oracle = brute_force_binary(inst, domain, budget);
      ubar = oracle.bestControl;
      optimalCost = oracle.bestCost;
      entry["optimum"] = {{"source", "brute_force"}, {"enumerated", oracle.enumerated}, {"tieCount", oracle.tieCount}};
    } else {
      const auto msa = msa_candidate_search(inst, domain, mu, 50);
      ubar = msa.control;
      optimalCost = msa.cost;
      entry["optimum"] = {{"source", "msa"}, {"status", to_string(msa.status)}, {"iterations", msa.iterations}};
    }
    entry["optimum"]["cost"] = optimalCost;
    entry["optimum"]["isZero"] = ubar.values().isZero(0.0);

    const Trajectory X = forward_state(inst, ubar);
    const auto pair = solve_first_adjoint(inst, X, ubar);
    entry["firstAdjoint"] = {{"maxAbsP", std::max(pair.p.running.values().cwiseAbs().maxCoeff(),
                                                  pair.p.terminal.values().cwiseAbs().maxCoeff())},
                             {"maxAbsQ", pair.q.values().cwiseAbs().maxCoeff()}};

    const auto second = solve_second_adjoint(inst, X, ubar);
    double pErr = 0.0, lamMax = 0.0;
    const auto pPath = fs::path(outDir) / ("P_depth" + std::to_string(N) + ".csv");
    auto pcsv = open_sidecar(pPath.string());
    pcsv << "level,index,time,P_1_1,Lambda_1_1,exact\n" << std::setprecision(17);
    for (int lvl = 0; lvl <= N; ++lvl)
      for (std::size_t j = 0; j < ScenarioTree::level_size(lvl); ++j) {
        const auto node = ScenarioTree::node_index(lvl, j);
        const double P = second.P[node](0, 0);
        const double lam = lvl < N ? second.Lambda[node](0, 0) : 0.0;
        const double exact = 2.0 * tree.time(lvl) - 4.0;
        pErr = std::max(pErr, std::abs(P - exact));
        lamMax = std::max(lamMax, std::abs(lam));
        pcsv << lvl << ',' << j << ',' << tree.time(lvl) << ',' << P << ',' << lam << ',' << exact << '\n';
      }
    entry["secondAdjoint"] = {{"maxErrorVs2tMinus4", pErr}, {"maxAbsLambda", lamMax}, {"csv", pPath.string()}};

    const auto stationarity = check_stationarity(inst, X, ubar, pair, mu, domain, g.tol);
    const double gradient = stationarity.gradients->at(0, 0)(0);
    entry["stationarity"] = without_gradients(stationarity);
    entry["stationarity"]["rootGradient"] = gradient;
    entry["stationarity"]["closedForm"] = -(3.0 - 2.0 * dt) / 2.0;
    entry["generalSmp"] = io::to_json(check_general_smp(inst, X, ubar, pair, second, domain, g.tol));

    // H^mu(u) at the root along the optimum, as a quadratic in u
    auto H = [&](double v) {
      return hamiltonian_mu(inst, 0, X.at(0, 0), Eigen::VectorXd::Constant(1, v), pair.pbar.at(0, 0),
                            pair.q.at(0, 0), mu);
    };
    const double hQuad = 0.5 * (H(1.0) + H(-1.0)) - H(0.0);
    const double hLin = 0.5 * (H(1.0) - H(-1.0));
    entry["hamiltonian"] = {{"quadratic", hQuad}, {"linear", hLin}, {"constant", H(0.0)}};

    rows.push_back({N, dt, costOnes, weighted, spectrum.lambdaMax, gradient, hQuad, hLin, optimalCost});
    perDepth.push_back(std::move(entry));
    clock.lap("depth_" + std::to_string(N));
  }

  const auto costsPath = (fs::path(outDir) / "costs_by_depth.csv").string();
  auto costs = open_sidecar(costsPath);
  costs << "depth,dt,cost_ones,cost_ones_weighted,lambda_max,gradient,h_quadratic,h_linear,optimal_cost\n"
        << std::setprecision(17);
  for (const auto& r : rows)
    costs << r.depth << ',' << r.dt << ',' << r.costOnes << ',' << r.costOnesExact << ',' << r.lambdaMax << ','
          << r.gradient << ',' << r.hQuad << ',' << r.hLin << ',' << r.optimalCost << '\n';

  json extrapolation = nullptr;
  std::vector<double> dts;
  for (const auto& r : rows) dts.push_back(r.dt);
  const bool distinct = std::adjacent_find(dts.begin(), dts.end(), [](double a, double b) { return a != b; }) != dts.end();
  if (distinct) {
    auto column = [&](double Row::*field) {
      std::vector<double> y;
      for (const auto& r : rows) y.push_back(r.*field);
      return intercept(dts, y);
    };
    extrapolation = {{"costOnes", column(&Row::costOnes)},       {"lambdaMax", column(&Row::lambdaMax)},
                     {"gradient", column(&Row::gradient)},       {"hQuadratic", column(&Row::hQuad)},
                     {"hLinear", column(&Row::hLin)},            {"optimalCost", column(&Row::optimalCost)},
                     {"continuumValues", {{"costOnes", 1.0}, {"lambdaMax", 3.0}, {"gradient", -1.5},
                                          {"hQuadratic", 2.0}, {"hLinear", -1.5}}}};
    costs << "inf,0," << extrapolation["costOnes"].get<double>() << ',' << extrapolation["costOnes"].get<double>()
          << ',' << extrapolation["lambdaMax"].get<double>() << ',' << extrapolation["gradient"].get<double>() << ','
          << extrapolation["hQuadratic"].get<double>() << ',' << extrapolation["hLinear"].get<double>() << ','
          << extrapolation["optimalCost"].get<double>() << '\n';
  }

  json results = {{"depths", std::move(perDepth)},
                  {"extrapolation", std::move(extrapolation)},
                  {"csv",
                   {{"weights", (fs::path(outDir) / "weights.csv").string()}, {"costsByDepth", costsPath}}}};
  const auto inst = make_example5(depths.front(), maxDepth);
  json params = {{"tol", g.tol}, {"seed", g.seed}, {"depths", depths}, {"budget", budget}};
  const auto report = io::make_report({"example5", io::instance_digest(inst, domain), params}, results, clock.timings());
  const std::string summary = (fs::path(outDir) / "example5.json").string();
  emit(report, summary);
  std::cout << summary << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stochlq: stochastic LQ control with binary controls on scenario trees"};
  app.set_version_flag("--version", std::string(io::kVersion));
  app.require_subcommand(1);

  GlobalOptions g;
  app.add_option("--tol", g.tol, "Tolerance for sign conditions and spectral convergence")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--out", g.out, "Report path (default: stdout)");
  app.add_option("--depth", g.depth, "Resample the instance onto a tree of this depth")->check(CLI::PositiveNumber);
  // accept the global flags after the subcommand as well
  app.fallthrough();

  std::string path;
  auto* validate = app.add_subcommand("validate", "Parse and validate an instance file");
  validate->add_option("instance", path, "Instance JSON")->required();

  std::string mode = "dense", spectrumCsv;
  int maxIter = 5000;
  auto* spectrum = app.add_subcommand("spectrum", "Largest eigenvalue of the cost operator");
  spectrum->add_option("instance", path, "Instance JSON")->required();
  spectrum->add_option("--mode", mode, "dense or power")->check(CLI::IsMember({"dense", "power"}))->capture_default_str();
  spectrum->add_option("--max-iter", maxIter, "Power iteration cap")->capture_default_str();
  spectrum->add_option("--csv", spectrumCsv, "Write the full dense spectrum here");

  std::uint64_t budget = kDefaultEnumerationBudget;
  int msaIter = 0, starts = 1;
  double damping = 0.0;
  std::string controlCsv;
  auto* solve = app.add_subcommand("solve", "Optimal binary control: brute force or MSA");
  solve->add_option("instance", path, "Instance JSON")->required();
  solve->add_option("--budget", budget, "Largest number of controls to enumerate")->capture_default_str();
  solve->add_option("--msa", msaIter, "MSA iterations when enumeration exceeds the budget");
  solve->add_option("--starts", starts, "Number of MSA starts (seeds seed..seed+starts-1)")->capture_default_str();
  solve->add_option("--damping", damping, "MSA proximal weight")->capture_default_str()->check(CLI::NonNegativeNumber);
  solve->add_option("--control-csv", controlCsv, "Control sidecar path (default: <out>.control.csv)");

  std::string controlPath, muArg = "auto", pCsv;
  bool secondOrder = false;
  auto* verify = app.add_subcommand("verify", "Check necessary conditions at a given binary control");
  verify->add_option("instance", path, "Instance JSON")->required();
  verify->add_option("--control", controlPath, "Control CSV")->required();
  verify->add_option("--mu", muArg, "'auto' or a number")->capture_default_str();
  verify->add_flag("--second-order", secondOrder, "Also solve the second-order adjoint and check the general condition");
  verify->add_option("--p-csv", pCsv, "Second-order adjoint CSV path (default: <out>.P.csv)");

  int samples = 10'000;
  auto* equivalence = app.add_subcommand("equivalence", "Certificate that the shifted problem is equivalent");
  equivalence->add_option("instance", path, "Instance JSON")->required();
  equivalence->add_option("--samples", samples, "Relaxed control samples")->capture_default_str()->check(CLI::PositiveNumber);
  equivalence->add_option("--budget", budget, "Largest number of controls to enumerate")->capture_default_str();

  std::vector<int> depths = {2, 4, 8};
  std::string outDir = "example5_out";
  auto* example5 = app.add_subcommand("example5", "Scalar benchmark pipeline over several depths");
  example5->add_option("--depths", depths, "Tree depths")->delimiter(',')->capture_default_str();
  example5->add_option("--out", outDir, "Directory for CSVs and the consolidated JSON")->capture_default_str();
  example5->add_option("--budget", budget, "Largest number of controls to enumerate")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*validate) return cmd_validate(path, g);
    if (*spectrum) return cmd_spectrum(path, g, mode, maxIter, spectrumCsv);
    if (*solve) return cmd_solve(path, g, budget, msaIter, starts, damping, controlCsv);
    if (*verify) return cmd_verify(path, g, controlPath, muArg, secondOrder, pCsv);
    if (*equivalence) return cmd_equivalence(path, g, samples, budget);
    if (*example5) return cmd_example5(g, depths, outDir, budget);
  } catch (const io::ValidationFailure& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorCode::validation);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
