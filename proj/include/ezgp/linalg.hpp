// Stabilized dense symmetric linear algebra for covariance matrices.
#pragma once

#include "ezgp/kernels.hpp"

#include <stdexcept>

namespace ezgp {

class NotPositiveDefiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// L with L L^T = Phi + nugget * I.
struct CholeskyFactor {
  MatrixXd L;
  double nugget = 0.0;

  Index size() const { return L.rows(); }
};

/// Nugget rungs as multiples of mean(diag): 0, 1e-10, 1e-9, ..., 1e-4.
std::vector<double> nugget_ladder();

/// Factorizes Phi + nugget * I for the first rung of the ladder that succeeds.
/// A factorization counts as successful when every squared pivot exceeds
/// kPivotFloor * mean(diag); below that the solves lose all accuracy.
CholeskyFactor cholesky_with_nugget(const MatrixXd& phi);
CholeskyFactor cholesky_with_nugget(const CovMatrix& m);

inline constexpr double kPivotFloor = 1e-13;

double log_det(const CholeskyFactor& f);

/// (Phi + nugget * I)^{-1} b.
VectorXd solve(const CholeskyFactor& f, const VectorXd& b);
MatrixXd solve(const CholeskyFactor& f, const MatrixXd& b);

/// (Phi + nugget * I)^{-1}.
MatrixXd inverse(const CholeskyFactor& f);

}  // namespace ezgp
