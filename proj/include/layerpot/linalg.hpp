#ifndef LAYERPOT_LINALG_HPP
#define LAYERPOT_LINALG_HPP

#include "layerpot/common.hpp"

#include <Eigen/LU>
#include <Eigen/QR>

#include <random>

namespace layerpot {

enum class SolveMethod { DenseLU, Iterative };

struct LinearSolveOptions {
  SolveMethod method = SolveMethod::DenseLU;
  int restart = 60;
  double tol = 1e-10;
  int max_iterations = 2000;
  double max_condition = 1e12;
};

struct LinearSolveResult {
  CVector x;
  double residual = 0.0;   // ||Ax - b|| / ||b||
  double condition = 1.0;  // 1-norm estimate (dense path) or NaN
  int iterations = 0;
};

/// Restarted GMRES with Givens rotations.
inline LinearSolveResult gmres(const CMatrix& a, const CVector& b, int restart = 60, double tol = 1e-10,
                               int max_iterations = 2000) {
  const Eigen::Index n = a.rows();
  LinearSolveResult res;
  res.x = CVector::Zero(n);
  res.condition = std::numeric_limits<double>::quiet_NaN();
  const double bnorm = b.norm();
  if (bnorm == 0.0) return res;
  const int m = std::max(1, std::min<int>(restart, static_cast<int>(n)));
  int total = 0;
  while (total < max_iterations) {
    CVector r = b - a * res.x;
    double beta = r.norm();
    if (beta / bnorm <= tol) break;
    CMatrix v(n, m + 1);
    CMatrix h = CMatrix::Zero(m + 1, m);
    std::vector<cplx> cs(m), sn(m);
    CVector g = CVector::Zero(m + 1);
    g(0) = beta;
    v.col(0) = r / beta;
    int k = 0;
    for (; k < m && total < max_iterations; ++k, ++total) {
      CVector w = a * v.col(k);
      for (int i = 0; i <= k; ++i) {
        h(i, k) = v.col(i).dot(w);  // conjugate-linear in the first argument
        w -= h(i, k) * v.col(i);
      }
      h(k + 1, k) = w.norm();
      if (std::abs(h(k + 1, k)) > 0) v.col(k + 1) = w / h(k + 1, k);
      for (int i = 0; i < k; ++i) {
        const cplx t = std::conj(cs[i]) * h(i, k) + std::conj(sn[i]) * h(i + 1, k);
        h(i + 1, k) = -sn[i] * h(i, k) + cs[i] * h(i + 1, k);
        h(i, k) = t;
      }
      const double den = std::hypot(std::abs(h(k, k)), std::abs(h(k + 1, k)));
      if (den == 0.0) throw ConvergenceError("GMRES breakdown");
      cs[k] = h(k, k) / den;
      sn[k] = h(k + 1, k) / den;
      h(k, k) = den;
      h(k + 1, k) = 0.0;
      g(k + 1) = -sn[k] * g(k);
      g(k) = std::conj(cs[k]) * g(k);
      if (std::abs(g(k + 1)) / bnorm <= tol) {
        ++k;
        ++total;
        break;
      }
    }
    CVector y = h.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(g.head(k));
    res.x += v.leftCols(k) * y;
  }
  res.iterations = total;
  res.residual = (a * res.x - b).norm() / bnorm;
  if (res.residual > tol * 10.0)
    throw ConvergenceError("GMRES did not converge: residual " + std::to_string(res.residual) + " after " +
                           std::to_string(total) + " iterations");
  return res;
}

inline LinearSolveResult solve_linear(const CMatrix& a, const CVector& b, const LinearSolveOptions& opt = {}) {
  if (a.rows() != a.cols() || a.rows() != b.size()) throw DataError("solve_linear needs a square system");
  if (opt.method == SolveMethod::Iterative) return gmres(a, b, opt.restart, opt.tol, opt.max_iterations);
  Eigen::PartialPivLU<CMatrix> lu(a);
  LinearSolveResult res;
  const double rc = lu.rcond();
  const bool zero_pivot = a.rows() > 0 && lu.matrixLU().diagonal().cwiseAbs().minCoeff() == 0.0;
  res.condition = rc > 0 && !zero_pivot ? 1.0 / rc : std::numeric_limits<double>::infinity();
  if (!(res.condition <= opt.max_condition))
    throw ConvergenceError("matrix is singular or ill-conditioned (condition estimate " +
                           std::to_string(res.condition) + ")");
  res.x = lu.solve(b);
  if (!res.x.allFinite()) throw ConvergenceError("matrix is singular (non-finite solution)");
  const double bn = b.norm();
  res.residual = bn > 0 ? (a * res.x - b).norm() / bn : 0.0;
  res.iterations = 1;
  return res;
}

/// Minimum-norm least-squares solution of a rank-deficient square system
/// (complete orthogonal decomposition). Singular values below rank_tol times
/// the largest are dropped; `condition` is the ratio over the kept rank.
inline LinearSolveResult solve_rank_deficient(const CMatrix& a, const CVector& b, int expected_nullity = 1,
                                              double rank_tol = 1e-8) {
  if (a.rows() != a.cols() || a.rows() != b.size()) throw DataError("solve_rank_deficient needs a square system");
  Eigen::CompleteOrthogonalDecomposition<CMatrix> cod;
  cod.setThreshold(rank_tol);
  cod.compute(a);
  LinearSolveResult res;
  const Eigen::Index r = cod.rank();
  if (r < a.rows() - expected_nullity)
    throw ConvergenceError("operator has nullity " + std::to_string(a.rows() - r) + ", expected " +
                           std::to_string(expected_nullity));
  const auto diag = cod.matrixT().diagonal().head(r).cwiseAbs();
  res.condition = diag.maxCoeff() / diag.minCoeff();
  res.x = cod.solve(b);
  const double bn = b.norm();
  res.residual = bn > 0 ? (a * res.x - b).norm() / bn : 0.0;
  res.iterations = 1;
  return res;
}

/// Largest singular value of M in the weighted norm ||f||^2 = sum w |f|^2,
/// by power iteration on (W^{1/2} M W^{-1/2})^* (W^{1/2} M W^{-1/2}).
inline double weighted_operator_norm(const CMatrix& m, const std::vector<double>& w, int iterations = 200,
                                     double tol = 1e-10, unsigned seed = 7) {
  const Eigen::Index n = m.rows();
  RVector sq(n), isq(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    sq(i) = std::sqrt(w[i]);
    isq(i) = 1.0 / sq(i);
  }
  const CMatrix b = sq.asDiagonal() * m * isq.asDiagonal();
  std::mt19937 rng(seed);
  std::normal_distribution<double> nd;
  CVector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = cplx(nd(rng), nd(rng));
  v.normalize();
  double sigma = 0.0;
  for (int it = 0; it < iterations; ++it) {
    CVector u = b * v;
    CVector z = b.adjoint() * u;
    const double zn = z.norm();
    if (zn == 0.0) return 0.0;
    const double s_new = std::sqrt(zn);
    v = z / zn;
    if (std::abs(s_new - sigma) <= tol * s_new) {
      sigma = s_new;
      break;
    }
    sigma = s_new;
  }
  return sigma;
}

}  // namespace layerpot

#endif  // LAYERPOT_LINALG_HPP
