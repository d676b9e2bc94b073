#include "ezgp/linalg.hpp"

#include <cmath>
#include <cstdio>
#include <string>

namespace ezgp {

std::vector<double> nugget_ladder() {
  std::vector<double> rungs{0.0};
  for (int e = -10; e <= -4; ++e) rungs.push_back(std::pow(10.0, e));
  return rungs;
}

namespace {

bool try_factor(const MatrixXd& phi, double nugget, double floor, MatrixXd& L) {
  MatrixXd a = phi;
  a.diagonal().array() += nugget;
  Eigen::LLT<MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) return false;
  L = llt.matrixL();
  for (Index i = 0; i < L.rows(); ++i) {
    const double d = L(i, i);
    if (!std::isfinite(d) || !(d * d > floor)) return false;
  }
  return true;
}

}  // namespace

CholeskyFactor cholesky_with_nugget(const MatrixXd& phi) {
  if (phi.rows() != phi.cols()) throw ValidationError("cholesky: matrix is not square");
  if (phi.rows() == 0) throw ValidationError("cholesky: empty matrix");
  if (!phi.allFinite()) throw NotPositiveDefiniteError("cholesky: matrix has non-finite entries");
  double mean_diag = 0.0;
  for (Index i = 0; i < phi.rows(); ++i) mean_diag += phi(i, i);
  mean_diag /= static_cast<double>(phi.rows());
  if (!(mean_diag > 0.0)) throw NotPositiveDefiniteError("cholesky: nonpositive mean diagonal");

  CholeskyFactor f;
  const double floor = kPivotFloor * mean_diag;
  for (double rung : nugget_ladder()) {
    const double nugget = rung * mean_diag;
    if (try_factor(phi, nugget, floor, f.L)) {
      f.nugget = nugget;
      return f;
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "matrix not positive definite after nugget cap 1e-4 * mean(diag) = %.3g",
                1e-4 * mean_diag);
  throw NotPositiveDefiniteError(buf);
}

CholeskyFactor cholesky_with_nugget(const CovMatrix& m) {
  CholeskyFactor f = cholesky_with_nugget(m.matrix);
  f.nugget += m.nugget;
  return f;
}

double log_det(const CholeskyFactor& f) {
  double s = 0.0;
  for (Index i = 0; i < f.L.rows(); ++i) s += std::log(f.L(i, i));
  return 2.0 * s;
}

VectorXd solve(const CholeskyFactor& f, const VectorXd& b) {
  if (b.size() != f.size()) throw ValidationError("solve: dimension mismatch");
  VectorXd v = f.L.triangularView<Eigen::Lower>().solve(b);
  f.L.transpose().triangularView<Eigen::Upper>().solveInPlace(v);
  return v;
}

MatrixXd solve(const CholeskyFactor& f, const MatrixXd& b) {
  if (b.rows() != f.size()) throw ValidationError("solve: dimension mismatch");
  MatrixXd v = f.L.triangularView<Eigen::Lower>().solve(b);
  f.L.transpose().triangularView<Eigen::Upper>().solveInPlace(v);
  return v;
}

MatrixXd inverse(const CholeskyFactor& f) { return solve(f, MatrixXd(MatrixXd::Identity(f.size(), f.size()))); }

}  // namespace ezgp
