// Profile likelihood, analytical gradients and the multi-start fit driver.
#pragma once

#include "ezgp/core.hpp"
#include "ezgp/kernels.hpp"
#include "ezgp/linalg.hpp"

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace ezgp {

using ModelParams = std::variant<EzgpParams, EezgpParams, BaselineParams>;

ModelKind kind_of(const ModelParams& params);
double mean_of(const ModelParams& params);
/// Prior variance cov(w, w), identical for every w.
double total_variance(const ModelParams& params);
void validate(const ModelParams& params, const ProblemSchema& s);

CovMatrix assemble_cov_matrix(const MatrixXd& X, const MatrixXi& Z, const ModelParams& params);
VectorXd cross_covariance(const MatrixXd& X, const MatrixXi& Z, const MixedInput& w, const ModelParams& params);

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// How one optimizer coordinate maps onto its natural parameter.
enum class Transform {
  Log,    // v = exp(u), v > 0
  Logit,  // v = 1 / (1 + exp(-u)), v in (0,1)
  Angle,  // v = pi / (1 + exp(-u)), v in (0,pi)
};

/// Flat layout of the covariance parameters of one model kind (mu excluded).
struct ParameterLayout {
  ModelKind kind = ModelKind::EzGP;
  ProblemSchema schema;
  std::vector<Transform> transforms;
  std::vector<std::string> names;     // e.g. "theta(2)[1,3]"
  std::vector<std::string> families;  // "sigma2_0", "sigma2_h", "theta0", "thetaH", "theta", "tau"

  int dimension() const { return static_cast<int>(transforms.size()); }
};

ParameterLayout make_layout(ModelKind kind, const ProblemSchema& s);

/// Natural covariance parameters in layout order.
VectorXd pack(const ModelParams& params, const ProblemSchema& s);
ModelParams unpack(const ParameterLayout& layout, const VectorXd& natural, double mu = 0.0);

VectorXd to_natural(const ParameterLayout& layout, const VectorXd& u);
VectorXd to_unconstrained(const ParameterLayout& layout, const VectorXd& natural);
/// d(natural)/du for every coordinate.
VectorXd natural_jacobian(const ParameterLayout& layout, const VectorXd& u);

/// (1^T Phi^{-1} 1)^{-1} 1^T Phi^{-1} y.
double mu_hat(const CholeskyFactor& f, const VectorXd& y);

struct LikelihoodValue {
  double value = 0.0;
  double nugget = 0.0;
  double mu_hat = 0.0;
};

/// log|Phi| + y^T Phi^{-1} y - (1^T Phi^{-1} 1)^{-1} (1^T Phi^{-1} y)^2, constants dropped.
LikelihoodValue neg_profile_loglik(const ModelParams& params, const Dataset& d);

/// Gradient with respect to the natural covariance parameters, in layout order.
/// Each coordinate is tr(Phi^{-1} dPhi) - a^T dPhi a with a = Phi^{-1}(y - mu_hat 1).
VectorXd natural_gradient(const ModelParams& params, const Dataset& d);

/// Gradient with respect to the optimizer coordinates u (log / logit space).
VectorXd grad_neg_profile_loglik(const ModelParams& params, const Dataset& d);

/// dPhi/du_index as a full matrix, obtained by contracting against unit matrices.
MatrixXd covariance_derivative(const ModelParams& params, const Dataset& d, int index);

/// Objective over optimizer coordinates for one model kind and dataset.
class ProfileLikelihood {
 public:
  ProfileLikelihood(ModelKind kind, Dataset data);

  const ParameterLayout& layout() const { return layout_; }
  const Dataset& data() const { return data_; }
  ModelParams params(const VectorXd& u) const;
  double value(const VectorXd& u) const;
  double value_and_gradient(const VectorXd& u, VectorXd& grad) const;

 private:
  ModelKind kind_;
  Dataset data_;
  ParameterLayout layout_;
};

struct FitConfig {
  int starts = 8;
  int max_iterations = 200;
  double objective_tolerance = 1e-8;
  double gradient_tolerance = 1e-6;
  double theta_lower = 1e-3;
  double theta_upper = 1e3;
  double sigma2_lower = 1e-6;  // times var(y)
  double sigma2_upper = 10.0;  // times var(y)
  double logit_bound = 8.0;    // |u| bound for EC coordinates
  double angle_bound = 10.0;   // |u| bound for UC angle coordinates
  // Region sampled by the random starts (log-uniform), a sub-box of the bounds above.
  double start_theta_lower = 0.1;
  double start_theta_upper = 10.0;
  double start_sigma2_lower = 0.05;  // times var(y)
  double start_sigma2_upper = 1.0;   // times var(y)
  double start_logit = 2.0;          // |u| for EC and UC coordinates
  std::uint64_t seed = 0;
  int threads = 1;  // 0 = hardware concurrency; never changes results

  void validate() const;
};

/// Box bounds in optimizer coordinates.
struct Bounds {
  VectorXd lower;
  VectorXd upper;
};

Bounds make_bounds(const ParameterLayout& layout, double var_y, const FitConfig& cfg);

/// Canonical start: every theta 1, variances splitting var(y) evenly, EC c = 0.5, UC angles pi/2.
VectorXd canonical_start(const ParameterLayout& layout, double var_y, const Bounds& bounds);

/// Start `index` >= 1: log-uniform draw inside the start region, projected onto the bounds.
VectorXd random_start(const ParameterLayout& layout, double var_y, const FitConfig& cfg, const Bounds& bounds,
                      std::uint64_t seed);

struct StartTrace {
  int index = 0;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool ok = false;
  std::string message;
};

struct FittedModel {
  ModelKind kind = ModelKind::EzGP;
  ProblemSchema schema;
  ModelParams params;
  Dataset data;  // normalized training data
  CholeskyFactor chol;
  VectorXd weights;     // Phi^{-1} (y - mu 1)
  VectorXd ones_solve;  // Phi^{-1} 1
  double ones_quad = 0.0;
  double objective = 0.0;
  std::uint64_t seed = 0;
  std::vector<StartTrace> trace;

  double nugget() const { return chol.nugget; }
};

/// Builds the prediction cache for fixed parameters. mu is re-estimated by GLS.
FittedModel make_fitted_model(const Dataset& normalized, ModelParams params);

/// Multi-start bounded quasi-Newton maximum likelihood fit.
FittedModel fit(const Dataset& d, ModelKind kind, const FitConfig& cfg = {});

/// Test hook: when nonzero, grad_neg_profile_loglik adds this to coordinate 0.
void set_gradient_corruption(double delta);

}  // namespace ezgp
