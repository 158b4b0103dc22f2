#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SparseCore>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "agc/conic/cones.hpp"
#include "agc/conic/program.hpp"

namespace agc::conic {

struct IpmSettings
{
  double feastol = 1e-8;
  double abstol = 1e-8;
  double reltol = 1e-8;
  /// Looser thresholds that still earn an "inaccurate" verdict when iterations stall.
  double inaccurate_tol = 1e-5;
  int max_iters = 100;
  double step_fraction = 0.99;
  double regularization = 1e-10;
  int refinement_steps = 4;
};

/**
 * Linear cone program in the form handled by the interior-point method:
 *
 *   minimize c'x  s.t.  A x = b,  G x + s = h,  s in K
 *
 * The quadratic objective of a ConicProgram is moved into an extra epigraph
 * variable t with x'Qx <= t written as ||(2 F x, t - 1)|| <= t + 1, Q = F'F.
 */
struct StandardForm
{
  int n = 0;
  int original_vars = 0;
  VectorXd c;
  MatrixXd A;
  VectorXd b;
  MatrixXd G;
  VectorXd h;
  ConeDims cones;
  bool trivially_infeasible = false;
};

inline StandardForm to_standard_form(const ConicProgram& prog)
{
  StandardForm sf;
  const int n0 = prog.num_vars;
  sf.original_vars = n0;

  // Factor the quadratic form on its support only.
  MatrixXd F;
  std::vector<int> support;
  if (prog.quad.rows() == n0 && prog.quad.nonZeros() > 0) {
    std::vector<char> used(static_cast<std::size_t>(n0), 0);
    for (int k = 0; k < prog.quad.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(prog.quad, k); it; ++it) {
        if (it.value() != 0.0) {
          used[static_cast<std::size_t>(it.row())] = 1;
          used[static_cast<std::size_t>(it.col())] = 1;
        }
      }
    }
    for (int v = 0; v < n0; ++v) {
      if (used[static_cast<std::size_t>(v)]) { support.push_back(v); }
    }
    const MatrixXd dense = MatrixXd(prog.quad);
    MatrixXd Qs(support.size(), support.size());
    for (std::size_t a = 0; a < support.size(); ++a) {
      for (std::size_t b = 0; b < support.size(); ++b) { Qs(a, b) = dense(support[a], support[b]); }
    }
    Qs = 0.5 * (Qs + Qs.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(Qs);
    const double top = std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 0.0);
    std::vector<int> keep;
    for (int k = 0; k < es.eigenvalues().size(); ++k) {
      if (es.eigenvalues()(k) > 1e-13 * top) { keep.push_back(k); }
    }
    F.setZero(static_cast<Eigen::Index>(keep.size()), n0);
    for (std::size_t r = 0; r < keep.size(); ++r) {
      const double sq = std::sqrt(es.eigenvalues()(keep[r]));
      for (std::size_t a = 0; a < support.size(); ++a) {
        F(static_cast<Eigen::Index>(r), support[a]) = sq * es.eigenvectors()(static_cast<Eigen::Index>(a), keep[r]);
      }
    }
  }
  const bool epigraph = F.rows() > 0;
  sf.n = n0 + (epigraph ? 1 : 0);
  const int tvar = n0;

  sf.c = VectorXd::Zero(sf.n);
  if (prog.linear.size() == n0) { sf.c.head(n0) = prog.linear; }
  if (epigraph) { sf.c(tvar) = 1.0; }

  // Equalities a(x) = 0  ->  A x = b; empty rows are dropped or flag infeasibility.
  std::vector<const AffineExpr*> eqs;
  for (const auto& e : prog.equalities) {
    bool any = false;
    for (const auto& t : e.terms) { any = any || t.coef != 0.0; }
    if (any) {
      eqs.push_back(&e);
    } else if (std::abs(e.constant) > 1e-12) {
      sf.trivially_infeasible = true;
    }
  }
  sf.A.setZero(static_cast<Eigen::Index>(eqs.size()), sf.n);
  sf.b.resize(static_cast<Eigen::Index>(eqs.size()));
  for (std::size_t r = 0; r < eqs.size(); ++r) {
    for (const auto& t : eqs[r]->terms) { sf.A(static_cast<Eigen::Index>(r), t.var) += t.coef; }
    sf.b(static_cast<Eigen::Index>(r)) = -eqs[r]->constant;
  }

  // Cone rows, s = h - G x.
  std::vector<const SocConstraint*> scalar;
  std::vector<const SocConstraint*> cones;
  for (const auto& s : prog.socs) { (s.vector.empty() ? scalar : cones).push_back(&s); }
  sf.cones.nonneg = static_cast<int>(scalar.size());
  for (const auto* s : cones) { sf.cones.soc.push_back(static_cast<int>(s->vector.size()) + 1); }
  if (epigraph) { sf.cones.soc.push_back(static_cast<int>(F.rows()) + 2); }
  for (const auto& l : prog.lmis) {
    if (l.dim > 0) { sf.cones.psd.push_back(l.dim); }
  }
  const int m = sf.cones.size();
  sf.G.setZero(m, sf.n);
  sf.h.setZero(m);
  int row = 0;
  auto put = [&](const AffineExpr& e) {
    for (const auto& t : e.terms) { sf.G(row, t.var) -= t.coef; }
    sf.h(row) = e.constant;
    ++row;
  };
  for (const auto* s : scalar) { put(s->bound); }
  for (const auto* s : cones) {
    put(s->bound);
    for (const auto& v : s->vector) { put(v); }
  }
  if (epigraph) {
    sf.G(row, tvar) = -1.0;
    sf.h(row++) = 1.0;
    sf.G.block(row, 0, F.rows(), n0) = -2.0 * F;
    row += static_cast<int>(F.rows());
    sf.G(row, tvar) = -1.0;
    sf.h(row++) = -1.0;
  }
  for (const auto& l : prog.lmis) {
    if (l.dim == 0) { continue; }
    sf.h.segment(row, svec_size(l.dim)) = svec(l.constant);
    for (const auto& e : l.entries) {
      const double scale = (e.row == e.col) ? 1.0 : std::numbers::sqrt2;
      sf.G(row + svec_index(e.row, e.col, l.dim), e.var) -= scale * e.coef;
    }
    row += svec_size(l.dim);
  }
  return sf;
}

/**
 * Primal-dual interior-point method on the homogeneous self-dual embedding
 * with Nesterov-Todd scaling and a Mehrotra predictor-corrector step.
 *
 * Dense linear algebra throughout; intended for the desk-scale programs built
 * by the synthesis layer.
 */
class InteriorPointSolver
{
public:
  explicit InteriorPointSolver(IpmSettings settings = {}) : settings_(settings) {}

  [[nodiscard]] ConicSolution solve(const ConicProgram& prog) const
  {
    ConicSolution out;
    out.diagnostics.backend = "ipm";
    if (prog.num_vars == 0 && prog.equalities.empty() && prog.socs.empty() && prog.lmis.empty()) {
      out.status = SolveStatus::Optimal;
      out.primal = VectorXd(0);
      out.objective = prog.constant;
      return out;
    }
    const StandardForm sf = to_standard_form(prog);
    if (sf.trivially_infeasible) {
      out.status = SolveStatus::Infeasible;
      out.diagnostics.message = "inconsistent constant equality";
      return out;
    }
    Result r = run(sf);
    out.status = r.status;
    out.diagnostics.iterations = r.iterations;
    out.diagnostics.primal_residual = r.pres;
    out.diagnostics.dual_residual = r.dres;
    out.diagnostics.gap = r.gap;
    out.diagnostics.relative_gap = r.relgap;
    out.diagnostics.message = r.message;
    if (r.status == SolveStatus::Optimal || r.status == SolveStatus::Inaccurate) {
      out.primal = r.x.head(sf.original_vars);
      out.objective = prog.objective(*out.primal);
    }
    return out;
  }

private:
  struct Result
  {
    SolveStatus status = SolveStatus::Failure;
    VectorXd x;
    int iterations = 0;
    double pres = 0.0;
    double dres = 0.0;
    double gap = 0.0;
    double relgap = 0.0;
    std::string message;
  };

  /// Column support of each cone block of G, fixed across iterations.
  struct GStructure
  {
    struct Block
    {
      std::vector<int> cols;
      MatrixXd G;  // rows of the block, restricted to cols
    };
    Eigen::SparseMatrix<double> G;
    Eigen::SparseMatrix<double> Gt;
    std::vector<std::vector<std::pair<int, double>>> nonneg_rows;
    std::vector<Block> blocks;  // SOC blocks, then PSD blocks

    explicit GStructure(const StandardForm& sf)
    {
      G = sf.G.sparseView();
      G.makeCompressed();
      Gt = G.transpose();
      Gt.makeCompressed();
      const int nn = sf.cones.nonneg;
      nonneg_rows.resize(static_cast<std::size_t>(nn));
      for (int r = 0; r < nn; ++r) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(Gt, r); it; ++it) {
          nonneg_rows[static_cast<std::size_t>(r)].emplace_back(static_cast<int>(it.row()), it.value());
        }
      }
      std::vector<int> sizes(sf.cones.soc.begin(), sf.cones.soc.end());
      for (int p : sf.cones.psd) { sizes.push_back(svec_size(p)); }
      int off = nn;
      for (int len : sizes) {
        Block b;
        std::vector<char> used(static_cast<std::size_t>(sf.n), 0);
        for (int r = off; r < off + len; ++r) {
          for (Eigen::SparseMatrix<double>::InnerIterator it(Gt, r); it; ++it) {
            used[static_cast<std::size_t>(it.row())] = 1;
          }
        }
        for (int c = 0; c < sf.n; ++c) {
          if (used[static_cast<std::size_t>(c)]) { b.cols.push_back(c); }
        }
        b.G.resize(len, static_cast<Eigen::Index>(b.cols.size()));
        for (std::size_t k = 0; k < b.cols.size(); ++k) {
          b.G.col(static_cast<Eigen::Index>(k)) = sf.G.block(off, b.cols[k], len, 1);
        }
        blocks.push_back(std::move(b));
        off += len;
      }
    }
  };

  /// Solves [0 A' G'; A 0 0; G 0 -W'W] (x, y, z) = (bx, by, bz).
  class Kkt
  {
  public:
    Kkt(const StandardForm& sf, const GStructure& gs, const NtScaling& W, double reg, int refine)
        : sf_(sf), gs_(gs), W_(W), refine_(refine)
    {
      const int n = sf.n;
      const auto p = static_cast<int>(sf.A.rows());
      // G' W^-1 W^-T G, accumulated one cone block at a time over the columns it touches.
      MatrixXd K = MatrixXd::Zero(n + p, n + p);
      auto H = K.topLeftCorner(n, n);
      const VectorXd& d = W.nonneg_scale();
      for (std::size_t r = 0; r < gs.nonneg_rows.size(); ++r) {
        const double wr = 1.0 / (d(static_cast<Eigen::Index>(r)) * d(static_cast<Eigen::Index>(r)));
        for (const auto& [i, gi] : gs.nonneg_rows[r]) {
          for (const auto& [j, gj] : gs.nonneg_rows[r]) { H(i, j) += wr * gi * gj; }
        }
      }
      for (std::size_t b = 0; b < gs.blocks.size(); ++b) {
        const auto& blk = gs.blocks[b];
        const MatrixXd Gs = W.Wit_block_columns(b, blk.G);
        const MatrixXd Hb = Gs.transpose() * Gs;
        for (std::size_t l = 0; l < blk.cols.size(); ++l) {
          for (std::size_t k = 0; k < blk.cols.size(); ++k) {
            H(blk.cols[k], blk.cols[l]) += Hb(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l));
          }
        }
      }
      H.diagonal().array() += reg;
      K.topRightCorner(n, p) = sf.A.transpose();
      K.bottomLeftCorner(p, n) = sf.A;
      K.bottomRightCorner(p, p).diagonal().setConstant(-reg);
      lu_.compute(K);
    }

    void solve(const VectorXd& bx, const VectorXd& by, const VectorXd& bz, VectorXd& x, VectorXd& y, VectorXd& z) const
    {
      reduced(bx, by, bz, x, y, z);
      double last = residual_norm(bx, by, bz, x, y, z);
      for (int k = 0; k < refine_ && last > 0.0; ++k) {
        VectorXd rx = bx - sf_.A.transpose() * y - gs_.Gt * z;
        VectorXd ry = by - sf_.A * x;
        VectorXd rz = bz - gs_.G * x + W_.Wt(W_.W(z));
        VectorXd cx, cy, cz;
        reduced(rx, ry, rz, cx, cy, cz);
        VectorXd nx = x + cx, ny = y + cy, nz = z + cz;
        const double now = residual_norm(bx, by, bz, nx, ny, nz);
        if (!(now < last)) { break; }
        x = std::move(nx);
        y = std::move(ny);
        z = std::move(nz);
        last = now;
      }
    }

  private:
    // With Gs = W^-T G: x from the reduced system, then z = W^-1 W^-T (G x - bz).
    void reduced(const VectorXd& bx, const VectorXd& by, const VectorXd& bz, VectorXd& x, VectorXd& y, VectorXd& z) const
    {
      const int n = sf_.n;
      const auto p = sf_.A.rows();
      VectorXd rhs(n + p);
      rhs.head(n) = bx + gs_.Gt * W_.Winv(W_.Wit(bz));
      rhs.tail(p) = by;
      const VectorXd sol = lu_.solve(rhs);
      x = sol.head(n);
      y = sol.tail(p);
      z = W_.Winv(W_.Wit(gs_.G * x - bz));
    }

    [[nodiscard]] double residual_norm(const VectorXd& bx, const VectorXd& by, const VectorXd& bz, const VectorXd& x,
                                       const VectorXd& y, const VectorXd& z) const
    {
      const double r1 = (bx - sf_.A.transpose() * y - gs_.Gt * z).squaredNorm();
      const double r2 = (by - sf_.A * x).squaredNorm();
      const double r3 = (bz - gs_.G * x + W_.Wt(W_.W(z))).squaredNorm();
      return std::sqrt(r1 + r2 + r3);
    }

    const StandardForm& sf_;
    const GStructure& gs_;
    const NtScaling& W_;
    int refine_;
    Eigen::PartialPivLU<MatrixXd> lu_;
  };

  [[nodiscard]] Result run(const StandardForm& sf) const
  {
    const ConeOps ops(sf.cones);
    const GStructure gs(sf);
    const int n = sf.n;
    const auto p = sf.A.rows();
    const int m = sf.cones.size();
    const int degree = sf.cones.degree();
    const VectorXd e = ops.identity();

    const double resx0 = std::max(1.0, sf.c.norm());
    const double resy0 = std::max(1.0, sf.b.norm());
    const double resz0 = std::max(1.0, sf.h.norm());

    VectorXd x, y, z, s;
    double tau = 1.0;
    double kappa = 1.0;

    // Starting point: least-norm slacks and multipliers, shifted into the cone.
    {
      const NtScaling I = NtScaling::identity(sf.cones);
      const Kkt kkt(sf, gs, I, settings_.regularization, settings_.refinement_steps);
      VectorXd xd, yd, zd;
      kkt.solve(VectorXd::Zero(n), sf.b, sf.h, x, yd, zd);
      s = -zd;
      kkt.solve(-sf.c, VectorXd::Zero(p), VectorXd::Zero(m), xd, y, z);
      if (m > 0) {
        const double ts = -ops.min_eig(s);
        const double tz = -ops.min_eig(z);
        if (ts >= -1e-8 * std::max(1.0, s.norm())) { s += (1.0 + ts) * e; }
        if (tz >= -1e-8 * std::max(1.0, z.norm())) { z += (1.0 + tz) * e; }
      }
    }

    Result res;
    Result best;  // most accurate iterate seen, for stall handling
    double best_score = std::numeric_limits<double>::infinity();

    for (int iter = 0; iter <= settings_.max_iters; ++iter) {
      const VectorXd rx = sf.A.transpose() * y + sf.G.transpose() * z + tau * sf.c;
      const VectorXd ry = tau * sf.b - sf.A * x;
      const VectorXd rz = tau * sf.h - sf.G * x - s;
      const double cx = sf.c.dot(x);
      const double by = sf.b.dot(y);
      const double hz = sf.h.dot(z);
      const double rt = -cx - by - hz - kappa;
      const double gap = s.dot(z);
      const double mu = (gap + tau * kappa) / (degree + 1);

      const double pcost = cx / tau;
      const double dcost = -(by + hz) / tau;
      const double gap_scaled = gap / (tau * tau);
      double relgap = std::numeric_limits<double>::infinity();
      if (pcost < 0.0) {
        relgap = gap_scaled / -pcost;
      } else if (dcost > 0.0) {
        relgap = gap_scaled / dcost;
      }
      const double pres = std::max(ry.norm() / resy0, rz.norm() / resz0) / tau;
      const double dres = rx.norm() / resx0 / tau;

      res.iterations = iter;
      res.pres = pres;
      res.dres = dres;
      res.gap = gap_scaled;
      res.relgap = relgap;
      res.x = x / tau;

      const double score = std::max({pres, dres, std::min(gap_scaled, relgap)});
      if (score < best_score) {
        best_score = score;
        best = res;
      }

      if (pres <= settings_.feastol && dres <= settings_.feastol &&
          (gap_scaled <= settings_.abstol || relgap <= settings_.reltol)) {
        res.status = SolveStatus::Optimal;
        return res;
      }
      if (hz + by < 0.0) {
        const double pinf = (sf.A.transpose() * y + sf.G.transpose() * z).norm() / resx0 / -(hz + by);
        if (pinf <= settings_.feastol) {
          res.status = SolveStatus::Infeasible;
          res.message = "primal infeasibility certificate found";
          return res;
        }
      }
      if (cx < 0.0) {
        const double dinf = std::max((sf.A * x).norm() / resy0, (sf.G * x + s).norm() / resz0) / -cx;
        if (dinf <= settings_.feastol) {
          res.status = SolveStatus::Failure;
          res.message = "dual infeasibility certificate found (problem unbounded)";
          return res;
        }
      }
      if (iter == settings_.max_iters) { break; }

      try {
        const NtScaling W(sf.cones, s, z);
        const VectorXd& lam = W.lambda();
        const Kkt kkt(sf, gs, W, settings_.regularization, settings_.refinement_steps);

        VectorXd x1, y1, z1;
        kkt.solve(-sf.c, sf.b, sf.h, x1, y1, z1);
        const double denom = kappa / tau - (sf.c.dot(x1) + sf.b.dot(y1) + sf.h.dot(z1));

        VectorXd dx, dy, dz, ds;
        double dtau = 0.0;
        double dkappa = 0.0;
        auto direction = [&](const VectorXd& dtil, double trhs) {
          VectorXd x0, y0, z0;
          kkt.solve(-rx, ry, rz - W.Wt(dtil), x0, y0, z0);
          dtau = (-rt + trhs / tau + sf.c.dot(x0) + sf.b.dot(y0) + sf.h.dot(z0)) / denom;
          dx = x0 + dtau * x1;
          dy = y0 + dtau * y1;
          dz = z0 + dtau * z1;
          ds = W.Wt(dtil - W.W(dz));
          dkappa = (trhs - kappa * dtau) / tau;
        };
        auto max_step = [&]() {
          double a = std::min(ops.max_step(s, ds), ops.max_step(z, dz));
          if (dtau < 0.0) { a = std::min(a, -tau / dtau); }
          if (dkappa < 0.0) { a = std::min(a, -kappa / dkappa); }
          return a;
        };

        // Predictor.
        direction(-lam, -tau * kappa);
        const double alpha_aff = std::min(1.0, max_step());
        const double sigma = std::pow(1.0 - alpha_aff, 3);

        // Corrector.
        const VectorXd corr = ops.circ(W.Wit(ds), W.W(dz));
        const double corr_t = dtau * dkappa;
        const VectorXd dtil = W.lambda_div(-ops.circ(lam, lam) + sigma * mu * e - corr);
        direction(dtil, -tau * kappa + sigma * mu - corr_t);
        const double alpha = std::min(1.0, settings_.step_fraction * max_step());
        if (!(alpha > 1e-12)) { throw NumericalError("step length collapsed"); }

        x += alpha * dx;
        y += alpha * dy;
        z += alpha * dz;
        s += alpha * ds;
        tau += alpha * dtau;
        kappa += alpha * dkappa;
        if (!(tau > 0.0 && kappa > 0.0) || !x.allFinite() || !z.allFinite() || !s.allFinite()) {
          throw NumericalError("iterate became invalid");
        }
      } catch (const NumericalError& err) {
        res.message = err.what();
        break;
      }
    }

    // No clean convergence: fall back on the best iterate.
    const double tol = settings_.inaccurate_tol;
    best.message = res.message.empty() ? "iteration limit reached" : res.message;
    if (best.pres <= tol && best.dres <= tol && (best.gap <= tol || best.relgap <= tol)) {
      best.status = SolveStatus::Inaccurate;
    } else {
      best.status = SolveStatus::Failure;
    }
    return best;
  }

  IpmSettings settings_;
};

}  // namespace agc::conic
