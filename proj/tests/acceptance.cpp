// Acceptance criteria 1-10. Prints one PASS/FAIL line per criterion; exits nonzero if any fail.
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "agc/agc.hpp"
#include "agc/cli.hpp"
#include "support.hpp"

using namespace agc;
using agc::testing::chain2;
using agc::testing::data_path;

namespace {

struct Outcome
{
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v)
{
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

struct Solved
{
  ProblemInstance inst;
  InfoDecomposition d;
  LiftedSystem sys;
  SynthesisResult result;
};

Solved solve(const ProblemInstance& p, const SynthesisOptions& o = {})
{
  Solved s{p, compute_decomposition(p, build_coupling_graphs(p)), {}, {}};
  s.sys = build_lifted(p, s.d);
  s.result = synthesize(p, s.d, s.sys, o);
  return s;
}

const Solved& fixture()
{
  static const Solved s = solve(load_instance(data_path("chain2_nonclassical.json")));
  return s;
}

Outcome decomposition_oracle()
{
  const auto t0 = Clock::now();
  std::ostringstream out, err;
  const int a = cli::run({"analyze", data_path("chain2_nonclassical.json")}, out, err);
  const std::string text = out.str();
  bool ok = a == 0;
  for (const char* line : {"N(1) = ∅\n", "C(1) = {1}\n", "N(2) = {1, 2}\n", "C(2) = ∅\n", "C = {1}; nonclassical\n"}) {
    ok = ok && text.find(line) != std::string::npos;
  }
  std::ostringstream out2;
  const int b = cli::run({"analyze", data_path("chain2_nested.json")}, out2, err);
  ok = ok && b == 0 && out2.str().find("C = ∅; partially nested\n") != std::string::npos;
  const double dt = seconds_since(t0);
  return {ok && dt < 1.0, "analyze output exact on both fixtures, " + fmt(dt) + " s"};
}

Outcome surrogate_identity()
{
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  int coupled = 0;
  for (int k = 0; k < 50; ++k) {
    const auto p = agc::testing::random_instance(rng);
    const auto d = compute_decomposition(p, build_coupling_graphs(p));
    const auto sys = build_lifted(p, d);
    coupled += d.coupled_set.empty() ? 0 : 1;
    const BlockIndex idx = p.index();
    for (int s = 0; s < 100; ++s) {
      const VectorXd u = agc::testing::random_matrix(idx.Nu(), 1, rng);
      const VectorXd w = agc::testing::random_matrix(idx.Nx(), 1, rng);
      const VectorXd x = sys.B * u + sys.L * w;
      const VectorXd r = x - sys.Btil * u - sys.Ltil * w - sys.Htil * (sys.Pi_C * x);
      worst = std::max(worst, r.norm() / std::max(x.norm(), 1e-300));
    }
  }
  const double dt = seconds_since(t0);
  return {worst <= 1e-9 && dt < 10.0, "max relative residual " + fmt(worst) + " over 5000 pairs (" +
                                        std::to_string(coupled) + "/50 instances nonclassical), " + fmt(dt) + " s"};
}

Outcome structural_invariance()
{
  const auto t0 = Clock::now();
  std::mt19937_64 rng(7);
  double worst = 0.0;
  long draws = 0;
  auto check = [&](const ProblemInstance& p) {
    const auto d = compute_decomposition(p, build_coupling_graphs(p));
    const BlockIndex idx = p.index();
    const auto QC = pattern_QC(d, idx);
    const auto YP = pattern_Y(d, idx);
    for (int k = 0; k < 200; ++k) {
      const MatrixXd Q = QC.project(agc::testing::random_matrix(QC.rows(), QC.cols(), rng));
      const MatrixXd Y = YP.project(agc::testing::random_matrix(YP.rows(), YP.cols(), rng));
      worst = std::max(worst, QC.max_off_pattern(Q * Y));
      ++draws;
    }
  };
  check(load_instance(data_path("chain2_nonclassical.json")));
  check(load_instance(data_path("chain2_nested.json")));
  int extra = 0;
  while (extra < 10) {
    const auto p = agc::testing::random_instance(rng);
    if (compute_decomposition(p, build_coupling_graphs(p)).coupled_set.empty()) { continue; }
    check(p);
    ++extra;
  }
  const double dt = seconds_since(t0);
  return {worst <= 1e-12 && dt < 5.0, "max forbidden-block magnitude of QY " + fmt(worst) + " over " +
                                        std::to_string(draws) + " draws, " + fmt(dt) + " s"};
}

Outcome row_bounds()
{
  double tight = 0.0;
  double excess = -std::numeric_limits<double>::infinity();
  double above_bound = -std::numeric_limits<double>::infinity();
  double min_slack = std::numeric_limits<double>::infinity();
  for (const auto& s : {fixture(), solve(load_instance(data_path("chain2_tight.json")))}) {
    if (!s.result.solved()) { return {false, "synthesis failed"}; }
    const auto& v = *s.result.variables;
    const auto& C = s.inst.constraints;
    const MatrixXd G = sigma_factor(s.inst.disturbance.Sigma);
    const int m = static_cast<int>(C.g.size());
    std::vector<double> bound(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
      const auto mx = row_maximizer(s.inst, v, i);
      tight = std::max(tight, std::abs(surrogate_row(s.inst, v, i, mx.w, mx.xi) - mx.bound));
      bound[static_cast<std::size_t>(i)] = mx.bound;
      min_slack = std::min(min_slack, C.g(i) - mx.bound);
    }
    Rng rng(11);
    for (int k = 0; k < 10000; ++k) {
      const bool edge = k % 2 == 0;
      const VectorXd w = edge ? sample_disturbance_boundary(G, rng) : sample_disturbance(G, rng);
      const VectorXd xi = edge ? sample_disturbance_boundary(G, rng) : sample_disturbance(G, rng);
      for (int i = 0; i < m; ++i) {
        const double row = surrogate_row(s.inst, v, i, w, xi);
        excess = std::max(excess, row - C.g(i));
        above_bound = std::max(above_bound, row - bound[static_cast<std::size_t>(i)]);
      }
    }
  }
  return {tight <= 1e-6 && excess <= 1e-6 && above_bound <= 1e-12,
          "maximizer gap " + fmt(tight) + ", smallest robust slack " + fmt(min_slack) +
            ", worst sampled row minus g " + fmt(excess) + " over 2 x 10000 pairs"};
}

Outcome minkowski_containment()
{
  double worst = 0.0;
  long n = 0;
  for (const auto& s : {fixture(), solve(load_instance(data_path("chain2_tight.json")))}) {
    if (!s.result.solved()) { return {false, "synthesis failed"}; }
    const auto& v = *s.result.variables;
    const MatrixXd G = sigma_factor(s.inst.disturbance.Sigma);
    Rng rng(12);
    for (int k = 0; k < 10000; ++k) {
      const bool edge = k % 2 == 0;
      const VectorXd w = edge ? sample_disturbance_boundary(G, rng) : sample_disturbance(G, rng);
      const VectorXd xi = edge ? sample_disturbance_boundary(G, rng) : sample_disturbance(G, rng);
      worst = std::max(worst, check_contract(*s.result.contract, s.d.project(v.xbar + v.Pw * w + v.Pxi * xi)));
      ++n;
    }
  }
  return {worst <= 1.0 + 1e-6, "worst membership " + fmt(worst) + " over " + std::to_string(n) + " points"};
}

Outcome end_to_end()
{
  const auto t0 = Clock::now();
  const Solved s = solve(load_instance(data_path("chain2_nonclassical.json")));
  if (s.result.status != conic::SolveStatus::Optimal) {
    return {false, "status " + conic::to_string(s.result.status)};
  }
  SimulationConfig cfg;
  cfg.samples = 10000;
  cfg.seed = 6;
  const auto rep = run(s.inst, s.d, s.sys, s.result, cfg);
  const double dt = seconds_since(t0);
  return {rep.constraint_violations == 0 && rep.contract_violations == 0 && dt < 60.0,
          "optimal, " + std::to_string(rep.constraint_violations) + " constraint / " +
            std::to_string(rep.contract_violations) + " contract violations in 10000 samples, worst membership " +
            fmt(rep.worst_membership) + ", " + fmt(dt) + " s"};
}

Outcome objective_consistency()
{
  const auto& s = fixture();
  if (!s.result.solved()) { return {false, "fixture did not solve"}; }
  SimulationConfig cfg;
  cfg.samples = 100000;
  cfg.seed = 7;
  const auto rep = run(s.inst, s.d, s.sys, s.result, cfg);
  const double gap = std::abs(rep.surrogate_cost_mean - s.result.objective);
  return {rep.cost_check_applicable && gap <= 3.0 * rep.surrogate_cost_se,
          "objective " + fmt(s.result.objective) + ", Monte Carlo " + fmt(rep.surrogate_cost_mean) + " +/- " +
            fmt(rep.surrogate_cost_se) + " (" + fmt(gap / rep.surrogate_cost_se) + " SE)"};
}

Outcome recovery_round_trip()
{
  const auto& s = fixture();
  if (!s.result.solved()) { return {false, "fixture did not solve"}; }
  const auto& v = *s.result.variables;
  const auto& p = *s.result.policy;
  const MatrixXd Z = contract_transform(v);
  const MatrixXd G = sigma_factor(s.inst.disturbance.Sigma);
  Rng rng(13);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const VectorXd w = sample_disturbance(G, rng);
    const VectorXd xi = sample_disturbance(G, rng);
    const VectorXd direct = v.ubar + v.Qw * w + v.Qxi * xi;
    const VectorXd recovered = p.u_open + p.Qw * w + p.Qv * (v.vbar + Z * xi);
    worst = std::max(worst, (direct - recovered).cwiseAbs().maxCoeff());
  }
  const double exact = pattern_QC(s.d, s.inst.index()).max_off_pattern(p.Qv);
  return {worst <= 1e-9 && s.result.off_pattern <= 1e-9 && exact == 0.0,
          "input map residual " + fmt(worst) + ", off-pattern before projection " + fmt(s.result.off_pattern) +
            ", after " + fmt(exact)};
}

Outcome degenerate_case()
{
  std::vector<ProblemInstance> cases{load_instance(data_path("chain2_nested.json"))};
  std::mt19937_64 rng(99);
  while (cases.size() < 6) {
    auto p = agc::testing::random_instance(rng);
    if (compute_decomposition(p, build_coupling_graphs(p)).coupled_set.empty() && p.index().Nx() <= 16) {
      cases.push_back(std::move(p));
    }
  }
  double worst = 0.0;
  int lmis = 0;
  for (const auto& p : cases) {
    const Solved s = solve(p);
    if (s.result.status != conic::SolveStatus::Optimal) {
      return {false, "synthesis status " + conic::to_string(s.result.status)};
    }
    lmis += s.result.lmi_dim;
    const double direct = agc::testing::direct_disturbance_feedback(p, s.d);
    if (!std::isfinite(direct)) { return {false, "direct program did not solve"}; }
    worst = std::max(worst, std::abs(s.result.objective - direct) / std::max(1.0, std::abs(direct)));
  }
  return {lmis == 0 && worst <= 1e-6, std::to_string(cases.size()) + " partially nested instances, no LMI, " +
                                        "max relative objective gap " + fmt(worst)};
}

Outcome conservatism()
{
  const auto& s = fixture();
  SynthesisOptions o;
  o.assembly.fix_Y_zero = true;
  const Solved r = solve(s.inst, o);
  if (!s.result.solved() || !r.result.solved()) { return {false, "synthesis failed"}; }
  const double f = s.result.objective;
  const double g = r.result.objective;
  return {f <= g + 1e-6, "free Y " + fmt(f) + ", Y = 0 " + fmt(g) + ", improvement " + fmt(g - f)};
}

}  // namespace

int main()
{
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
    {"decomposition oracle", decomposition_oracle},
    {"surrogate identity", surrogate_identity},
    {"structural invariance of QY", structural_invariance},
    {"robust row equivalence", row_bounds},
    {"Minkowski sum containment", minkowski_containment},
    {"end-to-end feasibility", end_to_end},
    {"objective consistency", objective_consistency},
    {"policy recovery round trip", recovery_round_trip},
    {"partially nested degenerate case", degenerate_case},
    {"oriented contract no worse than Y = 0", conservatism},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << k + 1 << ": " << criteria[k].first << ": " << o.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
