#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "agc/contract_sdp.hpp"
#include "agc/simulate.hpp"
#include "support.hpp"

using namespace agc;
using agc::testing::chain2;

namespace {

struct Pipeline
{
  ProblemInstance inst;
  InfoDecomposition d;
  LiftedSystem sys;
};

Pipeline pipeline(const ProblemInstance& p)
{
  Pipeline out{p, compute_decomposition(p, build_coupling_graphs(p)), {}};
  out.sys = build_lifted(p, out.d);
  return out;
}

// Solved once per binary; the fixture SDP takes a fraction of a second.
const SynthesisResult& chain2_solution()
{
  static const SynthesisResult r = synthesize(chain2(false));
  return r;
}

MatrixXd random_on_pattern(const SparsityPattern& p, std::mt19937_64& rng)
{
  const MatrixXd X = agc::testing::random_matrix(p.rows(), p.cols(), rng);
  return p.project(X);
}

}  // namespace

TEST(Assemble, LmiDimensionOnChain2)
{
  const auto pl = pipeline(chain2(false));
  const auto ap = assemble(pl.inst, pl.d, pl.sys);
  EXPECT_EQ(ap.lmi_dim, 3 + 2 * 6);
  ASSERT_EQ(ap.program.lmis.size(), 1U);
  EXPECT_EQ(ap.program.lmis[0].dim, 15);
  EXPECT_TRUE(ap.layout.has_contract());
}

TEST(Assemble, NestedInstanceHasNoContractPart)
{
  const auto pl = pipeline(chain2(true));
  const auto ap = assemble(pl.inst, pl.d, pl.sys);
  EXPECT_EQ(ap.lmi_dim, 0);
  EXPECT_TRUE(ap.program.lmis.empty());
  EXPECT_FALSE(ap.layout.has_contract());
  EXPECT_EQ(ap.layout.Pxi, -1);
  EXPECT_EQ((ap.layout.Qxi.array() >= 0).count(), 0);
  // x̄ rows and P^w rows only: no Pi_C(x̄ - v̄) and no P^xi equalities.
  EXPECT_EQ(ap.program.equalities.size(), static_cast<std::size_t>(6 + 36));
}

TEST(Assemble, SparsityByElimination)
{
  std::mt19937_64 rng(3);
  for (int k = 0; k < 20; ++k) {
    const auto pl = pipeline(agc::testing::random_instance(rng));
    const BlockIndex idx = pl.inst.index();
    const auto ap = assemble(pl.inst, pl.d, pl.sys);
    const auto qn = pattern_QN(pl.d, idx).scalar_mask();
    EXPECT_EQ(((ap.layout.Qw.array() >= 0) != qn.array()).count(), 0);
    if (ap.layout.has_contract()) {
      const auto qc = pattern_QC(pl.d, idx).scalar_mask();
      EXPECT_EQ(((ap.layout.Qxi.array() >= 0) != qc.array()).count(), 0);
      const auto ym = pattern_Y(pl.d, idx).scalar_mask();
      for (Eigen::Index c = 0; c < ym.cols(); ++c) {
        for (Eigen::Index r = 0; r < ym.rows(); ++r) {
          if (ap.layout.Y(r, c) >= 0) { EXPECT_TRUE(ym(r, c)); }
        }
      }
    }
  }
}

TEST(Assemble, RejectsMismatchedOperators)
{
  const auto pl = pipeline(chain2(false));
  const auto other = pipeline(agc::testing::chain2(false));
  LiftedSystem bad = other.sys;
  bad.Btil = MatrixXd::Zero(5, 4);
  EXPECT_THROW(assemble(pl.inst, pl.d, bad), std::logic_error);
}

TEST(Synthesize, ZeroCostNoRowsGivesZero)
{
  ProblemInstance p = chain2(false);
  p.constraints.F_x.resize(0, 6);
  p.constraints.F_u.resize(0, 4);
  p.constraints.F_w.resize(0, 6);
  p.constraints.g.resize(0);
  p.cost.R_x.setZero();
  p.cost.R_u.setZero();
  const auto r = synthesize(validate_instance(p));
  ASSERT_EQ(r.status, conic::SolveStatus::Optimal);
  EXPECT_NEAR(r.objective, 0.0, 1e-7);
  EXPECT_TRUE(r.row_slacks.empty());
  EXPECT_GE(r.variables->lambda, 1.0 - 1e-7);
}

TEST(Synthesize, Chain2Optimal)
{
  const auto& r = chain2_solution();
  ASSERT_EQ(r.status, conic::SolveStatus::Optimal);
  EXPECT_GE(r.objective, 0.0);
  EXPECT_LE(r.off_pattern, 1e-9);
  EXPECT_LE(r.max_equality_residual, 1e-7);
  const auto& v = *r.variables;
  EXPECT_GE(v.lambda, 1.0 - 1e-7);
  EXPECT_GE(v.beta, -1e-7);
  EXPECT_GE(v.lambda - v.beta, -1e-7);
  for (double s : r.row_slacks) { EXPECT_GE(s, -1e-6); }
  const auto pl = pipeline(chain2(false));
  const BlockIndex idx = pl.inst.index();
  EXPECT_EQ(pattern_QC(pl.d, idx).max_off_pattern(r.policy->Qv), 0.0);
  EXPECT_EQ(pattern_QN(pl.d, idx).max_off_pattern(r.policy->Qw), 0.0);
  // The returned objective is the objective evaluated on the recovered variables.
  EXPECT_NEAR(objective_value(v, pl.inst.disturbance.M, pl.inst.cost.R_x, pl.inst.cost.R_u), r.objective,
              1e-7 * (1.0 + r.objective));
  ASSERT_TRUE(r.contract);
  EXPECT_EQ(r.contract->dim(), 3);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(r.contract->shape);
  EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
}

TEST(Synthesize, NestedRecoveryIsDegenerate)
{
  const auto r = synthesize(chain2(true));
  ASSERT_EQ(r.status, conic::SolveStatus::Optimal);
  EXPECT_TRUE(r.policy->Qv.isZero(0.0));
  EXPECT_EQ(r.policy->u_open, r.variables->ubar);
  EXPECT_EQ(r.contract->dim(), 0);
  EXPECT_EQ(r.lmi_dim, 0);
}

TEST(Synthesize, IdenticallyViolatedRowIsInfeasible)
{
  ProblemInstance p = chain2(false);
  auto& C = p.constraints;
  const Eigen::Index m = C.g.size();
  C.F_x.conservativeResize(m + 1, Eigen::NoChange);
  C.F_u.conservativeResize(m + 1, Eigen::NoChange);
  C.F_w.conservativeResize(m + 1, Eigen::NoChange);
  C.g.conservativeResize(m + 1);
  C.F_x.row(m).setZero();
  C.F_u.row(m).setZero();
  C.F_w.row(m).setZero();
  C.g(m) = -0.5;
  const auto r = synthesize(validate_instance(p));
  EXPECT_EQ(r.status, conic::SolveStatus::Infeasible);
  EXPECT_FALSE(r.policy);
}

TEST(Synthesize, FreeOrientationNoWorseThanTranslationScaling)
{
  const auto free_y = chain2_solution();
  SynthesisOptions o;
  o.assembly.fix_Y_zero = true;
  const auto fixed = synthesize(chain2(false), o);
  ASSERT_EQ(fixed.status, conic::SolveStatus::Optimal);
  EXPECT_TRUE(fixed.variables->Y.isZero(0.0));
  EXPECT_LE(free_y.objective, fixed.objective + 1e-6);
}

TEST(Synthesize, NestedMatchesDirectDisturbanceFeedback)
{
  const auto pl = pipeline(chain2(true));
  const auto r = synthesize(pl.inst, pl.d, pl.sys);
  ASSERT_EQ(r.status, conic::SolveStatus::Optimal);
  const double direct = agc::testing::direct_disturbance_feedback(pl.inst, pl.d);
  ASSERT_TRUE(std::isfinite(direct));
  EXPECT_LE(std::abs(r.objective - direct), 1e-6 * std::max(1.0, std::abs(direct)));
}

TEST(Synthesize, BackendIndependence)
{
  if (!conic::cvxpy_available()) { GTEST_SKIP() << "cvxpy not importable"; }
  conic::BackendSettings s;
  s.backend = conic::Backend::Cvxpy;
  SynthesisOptions o;
  o.backend = s;
  for (bool nested : {false, true}) {
    const auto a = synthesize(chain2(nested));
    const auto b = synthesize(chain2(nested), o);
    ASSERT_EQ(a.status, conic::SolveStatus::Optimal);
    ASSERT_EQ(b.status, conic::SolveStatus::Optimal);
    EXPECT_EQ(b.diagnostics.backend.rfind("cvxpy", 0), 0U);
    EXPECT_LE(std::abs(a.objective - b.objective), 1e-5 * std::abs(a.objective));
  }
}

TEST(ObjectiveValue, HandExamples)
{
  SdpVariables v;
  const int Nx = 3, Nu = 2;
  v.Qw = MatrixXd::Zero(Nu, Nx);
  v.Qxi = MatrixXd::Zero(Nu, Nx);
  v.Pw = MatrixXd::Zero(Nx, Nx);
  v.Pxi = MatrixXd::Zero(Nx, Nx);
  v.ubar = VectorXd::Zero(Nu);
  v.xbar = (VectorXd(3) << 1.0, -2.0, 0.5).finished();
  MatrixXd Rx = MatrixXd::Identity(Nx, Nx);
  Rx(0, 1) = Rx(1, 0) = 0.25;
  const MatrixXd I = MatrixXd::Identity(Nx, Nx);
  EXPECT_DOUBLE_EQ(objective_value(v, I, Rx, MatrixXd::Identity(Nu, Nu)), v.xbar.dot(Rx * v.xbar));

  v.xbar.setZero();
  v.Pw = I;
  EXPECT_DOUBLE_EQ(objective_value(v, I, I, MatrixXd::Identity(Nu, Nu)), 3.0);
}

TEST(Recovery, RoundTripOnRandomSamples)
{
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> lam(1.0, 3.0);
  int tested = 0;
  for (int k = 0; k < 200 && tested < 60; ++k) {
    const auto pl = pipeline(agc::testing::random_instance(rng));
    if (pl.d.coupled_set.empty()) { continue; }
    ++tested;
    const BlockIndex idx = pl.inst.index();
    const auto QC = pattern_QC(pl.d, idx);
    SdpVariables v;
    v.Qw = random_on_pattern(pattern_QN(pl.d, idx), rng);
    v.Qxi = random_on_pattern(QC, rng);
    v.Y = random_on_pattern(pattern_Y(pl.d, idx), rng);
    v.lambda = lam(rng);
    v.ubar = agc::testing::random_matrix(idx.Nu(), 1, rng);
    v.vbar = agc::testing::random_matrix(idx.Nx(), 1, rng);
    const auto [p, off] = recover_policy(v, QC);
    // Qxi Z^{-1} stays inside Q_C.
    EXPECT_LE(off, 1e-12 * (1.0 + v.Qxi.norm()));
    const MatrixXd Z = contract_transform(v);
    EXPECT_NE(Z.determinant(), 0.0);
    EXPECT_TRUE(Z.isLowerTriangular(0.0));
    for (int s = 0; s < 5; ++s) {
      const VectorXd w = agc::testing::random_matrix(idx.Nx(), 1, rng);
      const VectorXd xi = agc::testing::random_matrix(idx.Nx(), 1, rng);
      const VectorXd direct = v.ubar + v.Qw * w + v.Qxi * xi;
      const VectorXd recovered = p.u_open + p.Qw * w + p.Qv * (v.vbar + Z * xi);
      EXPECT_LE((direct - recovered).norm(), 1e-9 * (1.0 + direct.norm()));
    }
  }
  EXPECT_GE(tested, 20);
}

TEST(Recovery, OffPatternDetected)
{
  const auto pl = pipeline(chain2(false));
  const BlockIndex idx = pl.inst.index();
  const auto QC = pattern_QC(pl.d, idx);
  SdpVariables v = *chain2_solution().variables;
  const auto mask = QC.scalar_mask();
  for (Eigen::Index c = 0; c < mask.cols(); ++c) {
    for (Eigen::Index r = 0; r < mask.rows(); ++r) {
      if (!mask(r, c)) {
        v.Qxi(r, c) = 1e-3;
        const auto [p, off] = recover_policy(v, QC);
        EXPECT_GT(off, 1e-9);
        EXPECT_EQ(QC.max_off_pattern(p.Qv), 0.0);
        return;
      }
    }
  }
  FAIL() << "Q_C has no forbidden entry on chain2";
}

TEST(Robustness, RowBoundsAreTightAndNeverExceeded)
{
  const auto& r = chain2_solution();
  const auto p = chain2(false);
  const auto& v = *r.variables;
  const MatrixXd G = sigma_factor(p.disturbance.Sigma);
  Rng rng(5);
  const int m = static_cast<int>(p.constraints.g.size());
  std::vector<RowMaximizer> maxim;
  for (int i = 0; i < m; ++i) {
    maxim.push_back(row_maximizer(p, v, i));
    const auto& mx = maxim.back();
    EXPECT_NEAR(surrogate_row(p, v, i, mx.w, mx.xi), mx.bound, 1e-6);
    EXPECT_NEAR(p.constraints.g(i) - mx.bound, r.row_slacks[static_cast<std::size_t>(i)], 1e-9);
  }
  for (int k = 0; k < 10000; ++k) {
    const VectorXd w = sample_disturbance_boundary(G, rng);
    const VectorXd xi = sample_disturbance_boundary(G, rng);
    for (int i = 0; i < m; ++i) {
      EXPECT_LE(surrogate_row(p, v, i, w, xi), maxim[static_cast<std::size_t>(i)].bound + 1e-12);
      EXPECT_LE(surrogate_row(p, v, i, w, xi), p.constraints.g(i) + 1e-6);
    }
  }
}

TEST(Robustness, MinkowskiSumInsideContract)
{
  const auto& r = chain2_solution();
  const auto pl = pipeline(chain2(false));
  const auto& v = *r.variables;
  const MatrixXd G = sigma_factor(pl.inst.disturbance.Sigma);
  Rng rng(6);
  double worst = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const bool edge = k % 2 == 0;
    const VectorXd w = edge ? sample_disturbance_boundary(G, rng) : sample_disturbance(G, rng);
    const VectorXd xi = edge ? sample_disturbance_boundary(G, rng) : sample_disturbance(G, rng);
    const VectorXd x = v.xbar + v.Pw * w + v.Pxi * xi;
    worst = std::max(worst, check_contract(*r.contract, pl.d.project(x)));
  }
  EXPECT_LE(worst, 1.0 + 1e-6);
}

TEST(Robustness, SurrogateCostMatchesObjective)
{
  const auto& r = chain2_solution();
  const auto p = chain2(false);
  const MatrixXd G = sigma_factor(p.disturbance.Sigma);
  Rng rw(7), rx(8);
  MomentAccumulator acc;
  for (int k = 0; k < 20000; ++k) {
    const VectorXd w = sample_disturbance(G, rw);
    const VectorXd xi = sample_disturbance(G, rx);
    const Rollout s = surrogate_rollout(*r.variables, w, xi);
    acc.add(quadratic_cost(s.x, s.u, p.cost.R_x, p.cost.R_u));
  }
  EXPECT_LE(std::abs(acc.mean() - r.objective), 3.0 * acc.std_error());
}
