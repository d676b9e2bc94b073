// Box-constrained limited-memory quasi-Newton minimizer.
//
// Projected L-BFGS: variables pinned at a bound with the gradient pointing outward are
// frozen, the two-loop recursion runs on the remaining coordinates, and a backtracking
// Armijo search follows the projected path P(x + t d).
#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>

namespace ezgp {

struct BoxOptions {
  int max_iterations = 200;
  int memory = 10;
  double objective_tolerance = 1e-8;  // stop when f_old - f_new < tol * (1 + |f|)
  double gradient_tolerance = 1e-6;   // stop when the projected gradient inf-norm is below
  double max_step = 2.0;              // inf-norm cap on a single trial step
  int max_backtracks = 30;
};

struct BoxResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string message;
};

/// Returns f(x) and writes the gradient. May return +inf (or throw) to reject x.
using BoxObjective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

/// Projection of x onto [lower, upper].
Eigen::VectorXd project(const Eigen::VectorXd& x, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper);

/// Minimizes from x0 (projected onto the box first). The starting value must be finite.
BoxResult minimize_box(const BoxObjective& f, const Eigen::VectorXd& x0, const Eigen::VectorXd& lower,
                       const Eigen::VectorXd& upper, const BoxOptions& options = {});

}  // namespace ezgp
