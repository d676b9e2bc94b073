#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace ezgp;

namespace {

// Laplace expansion along the first row.
double cofactor_det(const MatrixXd& A) {
  const Index n = A.rows();
  if (n == 1) return A(0, 0);
  double det = 0.0;
  for (Index j = 0; j < n; ++j) {
    MatrixXd minor(n - 1, n - 1);
    for (Index r = 1; r < n; ++r)
      for (Index c = 0, cc = 0; c < n; ++c)
        if (c != j) minor(r - 1, cc++) = A(r, c);
    det += (j % 2 == 0 ? 1.0 : -1.0) * A(0, j) * cofactor_det(minor);
  }
  return det;
}

MatrixXd random_spd(int n, Rng& rng) {
  MatrixXd A(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) A(i, j) = rng.uniform(-1.0, 1.0);
  return A * A.transpose() + 0.5 * MatrixXd::Identity(n, n);
}

}  // namespace

TEST_CASE("identity factorizes without a nugget") {
  const CholeskyFactor f = cholesky_with_nugget(MatrixXd::Identity(4, 4));
  CHECK(f.nugget == 0.0);
  CHECK(f.L.isIdentity());
  CHECK(log_det(f) == 0.0);
  const VectorXd b = (VectorXd(4) << 1, -2, 3, 0.5).finished();
  CHECK(solve(f, b) == b);
}

TEST_CASE("singular matrix takes the first positive rung") {
  const auto ladder = nugget_ladder();
  REQUIRE(ladder.size() >= 2);
  CHECK(ladder[0] == 0.0);
  const CholeskyFactor f = cholesky_with_nugget(MatrixXd::Ones(2, 2));
  CHECK(f.nugget == doctest::Approx(ladder[1]));
  CHECK(f.nugget > 0.0);
}

TEST_CASE("negative definite matrix is rejected") {
  CHECK_THROWS_AS(cholesky_with_nugget(MatrixXd(-MatrixXd::Identity(3, 3))), NotPositiveDefiniteError);
  MatrixXd bad = MatrixXd::Identity(2, 2);
  bad(0, 0) = std::nan("");
  CHECK_THROWS_AS(cholesky_with_nugget(bad), NotPositiveDefiniteError);
}

TEST_CASE("diagonal log determinant and solve") {
  const double v = 2.5;
  const CholeskyFactor f = cholesky_with_nugget(MatrixXd(v * MatrixXd::Identity(2, 2)));
  CHECK(log_det(f) == doctest::Approx(2 * std::log(v)));
  const CholeskyFactor g = cholesky_with_nugget(MatrixXd::Constant(1, 1, 4.0));
  CHECK(solve(g, VectorXd(VectorXd::Constant(1, 4.0)))(0) == doctest::Approx(1.0));
}

TEST_CASE("log determinant matches cofactor expansion") {
  Rng rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    const MatrixXd A = random_spd(5, rng);
    const CholeskyFactor f = cholesky_with_nugget(A);
    REQUIRE(f.nugget == 0.0);
    CHECK(log_det(f) == doctest::Approx(std::log(cofactor_det(A))).epsilon(1e-9));
  }
}

TEST_CASE("solve residual and inverse") {
  Rng rng(2);
  for (int rep = 0; rep < 20; ++rep) {
    const MatrixXd A = random_spd(4, rng);
    VectorXd b(4);
    for (Index i = 0; i < 4; ++i) b(i) = rng.uniform(-3, 3);
    const CholeskyFactor f = cholesky_with_nugget(A);
    CHECK((A * solve(f, b) - b).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((A * inverse(f) - MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-9);
    const MatrixXd B = MatrixXd::Random(4, 3);
    CHECK((A * solve(f, B) - B).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("example covariance with distinct inputs needs no nugget") {
  const ProblemSchema s(2, {2, 2});
  const EzgpParams prm = EzgpParams::uniform(s, 1.0, 1.0);
  MatrixXd X(3, 2);
  X << 0.2, 0.7,
       0.5, 0.1,
       0.5, 0.1 + 1e-3;
  MatrixXi Z(3, 2);
  Z << 1, 2,
       1, 2,
       2, 1;
  CHECK(cholesky_with_nugget(assemble_cov_matrix(X, Z, prm)).nugget == 0.0);
}
