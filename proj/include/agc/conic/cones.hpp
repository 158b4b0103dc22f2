#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace agc::conic {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Thrown when an iterate leaves the cone interior or a factorization breaks down.
class NumericalError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/**
 * Symmetric vectorization: lower triangle stacked column by column, with every
 * off-diagonal entry multiplied by sqrt(2), so that svec(A)'svec(B) = Tr(AB).
 *
 *   svec([[a, b], [b, c]]) = (a, sqrt(2) b, c)
 */
inline int svec_size(int n) { return n * (n + 1) / 2; }

inline VectorXd svec(const MatrixXd& S)
{
  const auto n = static_cast<int>(S.rows());
  VectorXd v(svec_size(n));
  int k = 0;
  for (int j = 0; j < n; ++j) {
    for (int i = j; i < n; ++i) { v(k++) = (i == j) ? S(i, j) : std::numbers::sqrt2 * S(i, j); }
  }
  return v;
}

inline MatrixXd smat(const Eigen::Ref<const VectorXd>& v, int n)
{
  MatrixXd S(n, n);
  int k = 0;
  for (int j = 0; j < n; ++j) {
    for (int i = j; i < n; ++i) {
      const double e = (i == j) ? v(k) : v(k) / std::numbers::sqrt2;
      S(i, j) = e;
      S(j, i) = e;
      ++k;
    }
  }
  return S;
}

/// Position of entry (row, col), row >= col, inside svec of an n x n matrix.
inline int svec_index(int row, int col, int n) { return col * n - col * (col - 1) / 2 + (row - col); }

/// Product cone: nonnegative orthant, then second-order cones, then PSD cones (svec form).
struct ConeDims
{
  int nonneg = 0;
  std::vector<int> soc;
  std::vector<int> psd;  // matrix orders

  [[nodiscard]] int size() const
  {
    int n = nonneg;
    for (int q : soc) { n += q; }
    for (int p : psd) { n += svec_size(p); }
    return n;
  }
  /// Barrier degree (rank of the Jordan algebra).
  [[nodiscard]] int degree() const
  {
    int d = nonneg + static_cast<int>(soc.size());
    for (int p : psd) { d += p; }
    return d;
  }
};

/// Jordan-algebra operations over a ConeDims layout.
class ConeOps
{
public:
  explicit ConeOps(ConeDims dims) : dims_(std::move(dims)) {}

  [[nodiscard]] const ConeDims& dims() const { return dims_; }

  [[nodiscard]] VectorXd identity() const
  {
    VectorXd e = VectorXd::Zero(dims_.size());
    e.head(dims_.nonneg).setOnes();
    int off = dims_.nonneg;
    for (int q : dims_.soc) {
      e(off) = 1.0;
      off += q;
    }
    for (int p : dims_.psd) {
      for (int j = 0; j < p; ++j) { e(off + svec_index(j, j, p)) = 1.0; }
      off += svec_size(p);
    }
    return e;
  }

  /// Smallest Jordan eigenvalue over all blocks (positive iff v is interior).
  [[nodiscard]] double min_eig(const VectorXd& v) const
  {
    double lo = std::numeric_limits<double>::infinity();
    if (dims_.nonneg > 0) { lo = v.head(dims_.nonneg).minCoeff(); }
    int off = dims_.nonneg;
    for (int q : dims_.soc) {
      lo = std::min(lo, v(off) - v.segment(off + 1, q - 1).norm());
      off += q;
    }
    for (int p : dims_.psd) {
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(smat(v.segment(off, svec_size(p)), p), Eigen::EigenvaluesOnly);
      lo = std::min(lo, es.eigenvalues().minCoeff());
      off += svec_size(p);
    }
    return lo;
  }

  /// Jordan product u o v.
  [[nodiscard]] VectorXd circ(const VectorXd& u, const VectorXd& v) const
  {
    VectorXd out(u.size());
    out.head(dims_.nonneg) = u.head(dims_.nonneg).cwiseProduct(v.head(dims_.nonneg));
    int off = dims_.nonneg;
    for (int q : dims_.soc) {
      out(off) = u.segment(off, q).dot(v.segment(off, q));
      out.segment(off + 1, q - 1) = u(off) * v.segment(off + 1, q - 1) + v(off) * u.segment(off + 1, q - 1);
      off += q;
    }
    for (int p : dims_.psd) {
      const int k = svec_size(p);
      const MatrixXd U = smat(u.segment(off, k), p);
      const MatrixXd V = smat(v.segment(off, k), p);
      out.segment(off, k) = svec(0.5 * (U * V + V * U));
      off += k;
    }
    return out;
  }

  /// Largest alpha >= 0 with x + alpha dx in the cone (infinity if unbounded). x must be interior.
  [[nodiscard]] double max_step(const VectorXd& x, const VectorXd& dx) const
  {
    double a = std::numeric_limits<double>::infinity();
    for (int k = 0; k < dims_.nonneg; ++k) {
      if (dx(k) < 0.0) { a = std::min(a, -x(k) / dx(k)); }
    }
    int off = dims_.nonneg;
    for (int q : dims_.soc) {
      a = std::min(a, soc_step(x.segment(off, q), dx.segment(off, q)));
      off += q;
    }
    for (int p : dims_.psd) {
      const int k = svec_size(p);
      Eigen::LLT<MatrixXd> llt(smat(x.segment(off, k), p));
      if (llt.info() != Eigen::Success) { throw NumericalError("iterate left the PSD cone"); }
      MatrixXd M = smat(dx.segment(off, k), p);
      llt.matrixL().solveInPlace(M);
      M = M.transpose().eval();
      llt.matrixL().solveInPlace(M);
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (M + M.transpose()), Eigen::EigenvaluesOnly);
      const double lo = es.eigenvalues().minCoeff();
      if (lo < 0.0) { a = std::min(a, -1.0 / lo); }
      off += k;
    }
    return a;
  }

private:
  static double soc_step(const Eigen::Ref<const VectorXd>& x, const Eigen::Ref<const VectorXd>& d)
  {
    const auto q = x.size();
    const double dn = d.tail(q - 1).norm();
    if (d(0) >= dn) { return std::numeric_limits<double>::infinity(); }
    // (x0 + a d0)^2 - ||x1 + a d1||^2 = qa a^2 + 2 qb a + qc
    const double qa = d(0) * d(0) - dn * dn;
    const double qb = x(0) * d(0) - x.tail(q - 1).dot(d.tail(q - 1));
    const double qc = x(0) * x(0) - x.tail(q - 1).squaredNorm();
    if (qc <= 0.0) { return 0.0; }
    const double disc = qb * qb - qa * qc;
    if (disc < 0.0) { return std::numeric_limits<double>::infinity(); }
    const double root = std::sqrt(disc);
    const double qq = -(qb + (qb >= 0.0 ? root : -root));
    double best = std::numeric_limits<double>::infinity();
    auto consider = [&](double r) {
      if (r > 0.0 && std::isfinite(r)) { best = std::min(best, r); }
    };
    if (qa != 0.0) { consider(qq / qa); }
    if (qq != 0.0) { consider(qc / qq); }
    return best;
  }

  ConeDims dims_;
};

/**
 * Nesterov-Todd scaling W for a primal-dual interior pair (s, z): the unique
 * W with W z = W^{-T} s =: lambda. Per block:
 *   nonneg  W = diag(sqrt(s/z))
 *   SOC     W = eta [w0, w1'; w1, I + w1 w1'/(1 + w0)]  (symmetric, w' J w = 1)
 *   PSD     W(U) = r' U r with r' Z r = r^{-1} S r^{-T} = diag(lambda)
 */
class NtScaling
{
public:
  NtScaling(const ConeDims& dims, const VectorXd& s, const VectorXd& z) : dims_(dims)
  {
    d_ = (s.head(dims.nonneg).array() / z.head(dims.nonneg).array()).sqrt();
    if (!d_.allFinite() || (dims.nonneg > 0 && d_.minCoeff() <= 0.0)) {
      throw NumericalError("nonnegative iterate left the cone");
    }
    int off = dims.nonneg;
    for (int q : dims.soc) {
      const auto sb = s.segment(off, q);
      const auto zb = z.segment(off, q);
      const double sjs = sb(0) * sb(0) - sb.tail(q - 1).squaredNorm();
      const double zjz = zb(0) * zb(0) - zb.tail(q - 1).squaredNorm();
      if (!(sjs > 0.0 && zjz > 0.0 && sb(0) > 0.0 && zb(0) > 0.0)) { throw NumericalError("SOC iterate left the cone"); }
      const VectorXd sn = sb / std::sqrt(sjs);
      VectorXd zn = zb / std::sqrt(zjz);
      const double gamma = std::sqrt(0.5 * (1.0 + sn.dot(zn)));
      zn.tail(q - 1) *= -1.0;  // J zn
      SocBlock blk;
      blk.w = (sn + zn) / (2.0 * gamma);
      blk.eta = std::pow(sjs / zjz, 0.25);
      soc_.push_back(std::move(blk));
      off += q;
    }
    for (int p : dims.psd) {
      const int k = svec_size(p);
      Eigen::LLT<MatrixXd> ls(smat(s.segment(off, k), p));
      Eigen::LLT<MatrixXd> lz(smat(z.segment(off, k), p));
      if (ls.info() != Eigen::Success || lz.info() != Eigen::Success) {
        throw NumericalError("PSD iterate left the cone");
      }
      const MatrixXd Ls = ls.matrixL();
      const MatrixXd Lz = lz.matrixL();
      Eigen::JacobiSVD<MatrixXd> svd(Lz.transpose() * Ls, Eigen::ComputeFullU | Eigen::ComputeFullV);
      const VectorXd lam = svd.singularValues();
      if (lam.minCoeff() <= 0.0) { throw NumericalError("degenerate PSD scaling"); }
      PsdBlock blk;
      blk.lambda = lam;
      blk.r = Ls * svd.matrixV() * lam.cwiseSqrt().cwiseInverse().asDiagonal();
      // r^{-1} = diag(sqrt(lam)) V' Ls^{-1}
      MatrixXd Vt = svd.matrixV().transpose();
      blk.rinv = lam.cwiseSqrt().asDiagonal() * Ls.transpose().triangularView<Eigen::Upper>().solve(Vt.transpose()).transpose();
      psd_.push_back(std::move(blk));
      off += k;
    }
    lambda_ = apply(z, Op::W);
  }

  /// Identity scaling (used for the starting point).
  static NtScaling identity(const ConeDims& dims)
  {
    const ConeOps ops(dims);
    const VectorXd e = ops.identity();
    return NtScaling(dims, e, e);
  }

  [[nodiscard]] const VectorXd& lambda() const { return lambda_; }

  [[nodiscard]] VectorXd W(const VectorXd& v) const { return apply(v, Op::W); }
  [[nodiscard]] VectorXd Wt(const VectorXd& v) const { return apply(v, Op::Wt); }
  [[nodiscard]] VectorXd Winv(const VectorXd& v) const { return apply(v, Op::Winv); }
  [[nodiscard]] VectorXd Wit(const VectorXd& v) const { return apply(v, Op::Wit); }

  /// Applies W^{-T} to every column of M.
  [[nodiscard]] MatrixXd Wit_columns(const MatrixXd& M) const
  {
    MatrixXd out(M.rows(), M.cols());
    for (Eigen::Index c = 0; c < M.cols(); ++c) { out.col(c) = apply(M.col(c), Op::Wit); }
    return out;
  }

  /// Nonnegative-orthant part of W, a diagonal.
  [[nodiscard]] const VectorXd& nonneg_scale() const { return d_; }

  /// Applies W^{-T} restricted to cone block b (SOC blocks first, then PSD) to every column of M.
  [[nodiscard]] MatrixXd Wit_block_columns(std::size_t b, const MatrixXd& M) const
  {
    MatrixXd out(M.rows(), M.cols());
    for (Eigen::Index c = 0; c < M.cols(); ++c) {
      if (b < soc_.size()) {
        out.col(c) = soc_apply(b, M.col(c), Op::Wit);
      } else {
        out.col(c) = psd_apply(b - soc_.size(), M.col(c), Op::Wit);
      }
    }
    return out;
  }

  /// Solves lambda o x = v.
  [[nodiscard]] VectorXd lambda_div(const VectorXd& v) const
  {
    VectorXd out(v.size());
    out.head(dims_.nonneg) = v.head(dims_.nonneg).cwiseQuotient(lambda_.head(dims_.nonneg));
    int off = dims_.nonneg;
    for (int q : dims_.soc) {
      const auto l = lambda_.segment(off, q);
      const auto vb = v.segment(off, q);
      const double det = l(0) * l(0) - l.tail(q - 1).squaredNorm();
      const double x0 = (l(0) * vb(0) - l.tail(q - 1).dot(vb.tail(q - 1))) / det;
      out(off) = x0;
      out.segment(off + 1, q - 1) = (vb.tail(q - 1) - x0 * l.tail(q - 1)) / l(0);
      off += q;
    }
    for (std::size_t b = 0; b < psd_.size(); ++b) {
      const int p = dims_.psd[b];
      const auto& lam = psd_[b].lambda;
      int k = 0;
      for (int j = 0; j < p; ++j) {
        for (int i = j; i < p; ++i) { out(off + k++) = v(off + svec_index(i, j, p)) * 2.0 / (lam(i) + lam(j)); }
      }
      off += svec_size(p);
    }
    return out;
  }

private:
  enum class Op { W, Wt, Winv, Wit };

  struct SocBlock
  {
    VectorXd w;
    double eta = 1.0;
  };
  struct PsdBlock
  {
    VectorXd lambda;
    MatrixXd r;
    MatrixXd rinv;
  };

  [[nodiscard]] VectorXd soc_apply(std::size_t b, const Eigen::Ref<const VectorXd>& vb, Op op) const
  {
    const auto q = vb.size();
    const bool inverse = (op == Op::Winv || op == Op::Wit);
    const auto& w = soc_[b].w;
    const double w1v1 = w.tail(q - 1).dot(vb.tail(q - 1));
    const double sgn = inverse ? -1.0 : 1.0;
    const double scale = inverse ? 1.0 / soc_[b].eta : soc_[b].eta;
    VectorXd out(q);
    out(0) = scale * (w(0) * vb(0) + sgn * w1v1);
    out.tail(q - 1) = scale * (vb.tail(q - 1) + (sgn * vb(0) + w1v1 / (1.0 + w(0))) * w.tail(q - 1));
    return out;
  }

  [[nodiscard]] VectorXd psd_apply(std::size_t b, const Eigen::Ref<const VectorXd>& vb, Op op) const
  {
    const int p = dims_.psd[b];
    const MatrixXd U = smat(vb, p);
    const auto& r = psd_[b].r;
    const auto& ri = psd_[b].rinv;
    MatrixXd R;
    switch (op) {
    case Op::W: R = r.transpose() * U * r; break;
    case Op::Wt: R = r * U * r.transpose(); break;
    case Op::Winv: R = ri.transpose() * U * ri; break;
    case Op::Wit: R = ri * U * ri.transpose(); break;
    }
    return svec(0.5 * (R + R.transpose()));
  }

  [[nodiscard]] VectorXd apply(const VectorXd& v, Op op) const
  {
    VectorXd out(v.size());
    const bool inverse = (op == Op::Winv || op == Op::Wit);
    if (inverse) {
      out.head(dims_.nonneg) = v.head(dims_.nonneg).cwiseQuotient(d_);
    } else {
      out.head(dims_.nonneg) = v.head(dims_.nonneg).cwiseProduct(d_);
    }
    int off = dims_.nonneg;
    for (std::size_t b = 0; b < soc_.size(); ++b) {
      const int q = dims_.soc[b];
      out.segment(off, q) = soc_apply(b, v.segment(off, q), op);
      off += q;
    }
    for (std::size_t b = 0; b < psd_.size(); ++b) {
      const int k = svec_size(dims_.psd[b]);
      out.segment(off, k) = psd_apply(b, v.segment(off, k), op);
      off += k;
    }
    return out;
  }

  ConeDims dims_;
  VectorXd d_;
  std::vector<SocBlock> soc_;
  std::vector<PsdBlock> psd_;
  VectorXd lambda_;
};

}  // namespace agc::conic
