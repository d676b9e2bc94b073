#include "ezgp/optimizer.hpp"

#include <cmath>
#include <deque>
#include <limits>

namespace ezgp {

using Eigen::VectorXd;

VectorXd project(const VectorXd& x, const VectorXd& lower, const VectorXd& upper) {
  return x.cwiseMax(lower).cwiseMin(upper);
}

namespace {

struct Pair {
  VectorXd s;
  VectorXd y;
};

double evaluate(const BoxObjective& f, const VectorXd& x, VectorXd& g) {
  try {
    const double v = f(x, g);
    if (!std::isfinite(v) || !g.allFinite()) return std::numeric_limits<double>::infinity();
    return v;
  } catch (const std::exception&) {
    return std::numeric_limits<double>::infinity();
  }
}

// Two-loop recursion restricted to the coordinates flagged in `free`.
VectorXd lbfgs_direction(const std::deque<Pair>& memory, const VectorXd& g, const VectorXd& free) {
  VectorXd q = g.cwiseProduct(free);
  const auto m = memory.size();
  std::vector<double> alpha(m, 0.0);
  std::vector<double> rho(m, 0.0);
  double gamma = 1.0;
  bool have_gamma = false;
  for (std::size_t idx = m; idx-- > 0;) {
    const VectorXd s = memory[idx].s.cwiseProduct(free);
    const VectorXd y = memory[idx].y.cwiseProduct(free);
    const double sy = s.dot(y);
    if (!(sy > 0.0)) continue;
    rho[idx] = 1.0 / sy;
    alpha[idx] = rho[idx] * s.dot(q);
    q -= alpha[idx] * y;
    if (!have_gamma) {
      gamma = sy / y.squaredNorm();
      have_gamma = true;
    }
  }
  VectorXd r = gamma * q;
  for (std::size_t idx = 0; idx < m; ++idx) {
    if (rho[idx] == 0.0) continue;
    const VectorXd s = memory[idx].s.cwiseProduct(free);
    const VectorXd y = memory[idx].y.cwiseProduct(free);
    const double beta = rho[idx] * y.dot(r);
    r += s * (alpha[idx] - beta);
  }
  return -r.cwiseProduct(free);
}

}  // namespace

BoxResult minimize_box(const BoxObjective& f, const VectorXd& x0, const VectorXd& lower, const VectorXd& upper,
                       const BoxOptions& options) {
  const auto n = x0.size();
  BoxResult result;
  VectorXd x = project(x0, lower, upper);
  VectorXd g(n);
  double fx = evaluate(f, x, g);
  result.evaluations = 1;
  if (!std::isfinite(fx)) {
    result.x = x;
    result.value = fx;
    result.message = "objective not finite at the starting point";
    return result;
  }

  std::deque<Pair> memory;
  VectorXd trial_g(n);
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    VectorXd free = VectorXd::Ones(n);
    VectorXd pg = g;
    for (Eigen::Index i = 0; i < n; ++i) {
      if ((x(i) <= lower(i) && g(i) > 0.0) || (x(i) >= upper(i) && g(i) < 0.0)) {
        free(i) = 0.0;
        pg(i) = 0.0;
      }
    }
    if (pg.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) {
      result.converged = true;
      result.message = "projected gradient below tolerance";
      break;
    }

    VectorXd d = memory.empty() ? VectorXd(-pg) : lbfgs_direction(memory, g, free);
    if (!(g.dot(d) < 0.0)) {
      memory.clear();
      d = -pg;
    }
    const double dmax = d.lpNorm<Eigen::Infinity>();
    if (dmax > options.max_step) d *= options.max_step / dmax;

    bool accepted = false;
    double t = 1.0;
    VectorXd xt;
    double ft = 0.0;
    for (int k = 0; k < options.max_backtracks; ++k) {
      xt = project(x + t * d, lower, upper);
      if ((xt - x).lpNorm<Eigen::Infinity>() == 0.0) break;
      ft = evaluate(f, xt, trial_g);
      ++result.evaluations;
      if (std::isfinite(ft) && ft <= fx + 1e-4 * g.dot(xt - x)) {
        accepted = true;
        break;
      }
      t *= std::isfinite(ft) ? 0.5 : 0.1;
    }
    result.iterations = iter + 1;
    if (!accepted) {
      if (!memory.empty()) {
        memory.clear();
        continue;
      }
      result.message = "line search failed";
      break;
    }

    Pair pair{xt - x, trial_g - g};
    if (pair.s.dot(pair.y) > 1e-12 * pair.y.squaredNorm()) {
      memory.push_back(std::move(pair));
      if (static_cast<int>(memory.size()) > options.memory) memory.pop_front();
    }
    const double improvement = fx - ft;
    x = xt;
    fx = ft;
    g = trial_g;
    if (improvement < options.objective_tolerance * (1.0 + std::abs(fx))) {
      result.converged = true;
      result.message = "objective improvement below tolerance";
      break;
    }
  }
  if (result.message.empty()) result.message = "iteration limit reached";
  result.x = x;
  result.value = fx;
  return result;
}

}  // namespace ezgp
