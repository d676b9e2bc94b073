// Covariance functions for mixed quantitative/qualitative inputs.
//
// The EzGP covariance is a base Gaussian process over x plus, for every qualitative
// factor h, an adjustment process that is switched on only when two inputs share
// a level of z_h:
//
//   phi(w_i, w_j) = s0 * exp(-sum_k t0_k d_k^2)
//                 + sum_h sum_l I(z_ih = z_jh = l) * s_h * exp(-sum_k T_h(k,l) d_k^2)
//
// with d_k = x_ik - x_jk. EEzGP replaces the column T_h(:,l) by a single scalar per
// level, anchored at 1 for level 1. The six baseline kernels (EC, MC, UC and their
// additive AD_* counterparts) use level-correlation matrices T_j instead of indicators.
#pragma once

#include "ezgp/core.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace ezgp {

/// Smallest admissible correlation parameter.
inline constexpr double kMinTheta = 1e-6;
/// Guard band for UC hypersphere angles, kept inside [kAngleGuard, pi - kAngleGuard].
inline constexpr double kAngleGuard = 1e-6;

enum class ModelKind { EzGP, EEzGP, EC, MC, UC, AD_EC, AD_MC, AD_UC };

/// Level-correlation family for the baseline kernels.
enum class QualCorr { EC, MC, UC };

std::string to_string(ModelKind kind);
/// Accepts lower or upper case names, e.g. "ezgp", "AD_UC", "ad-uc".
ModelKind parse_model_kind(const std::string& name);
std::vector<ModelKind> all_model_kinds();
bool is_baseline(ModelKind kind);
bool is_additive(ModelKind kind);
QualCorr qual_corr_of(ModelKind kind);

/// Gaussian correlation exp(-sum_k theta_k (a_k - b_k)^2).
template <typename A, typename B, typename C>
double gauss_corr(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b, const Eigen::MatrixBase<C>& theta) {
  if (a.size() != b.size() || a.size() != theta.size())
    throw ValidationError("gauss_corr: argument lengths differ");
  if ((theta.array() <= 0.0).any()) throw ValidationError("gauss_corr: correlation parameters must be positive");
  return std::exp(-(theta.array() * (a - b).array().square()).sum());
}

struct EzgpParams {
  double mu = 0.0;
  VectorXd sigma2;             // q + 1 variances, sigma2(0) is the base process
  VectorXd theta0;             // p
  std::vector<MatrixXd> Theta; // q matrices, Theta[h] is p x m_h

  /// Every variance and correlation parameter set to one value.
  static EzgpParams uniform(const ProblemSchema& s, double sigma2, double theta);
  void validate(const ProblemSchema& s) const;
  double total_variance() const { return sigma2.sum(); }
};

struct EezgpParams {
  double mu = 0.0;
  VectorXd sigma2;              // q + 1
  VectorXd theta0;              // p
  std::vector<VectorXd> thetaH; // q vectors of length m_h, thetaH[h](0) == 1

  static EezgpParams uniform(const ProblemSchema& s, double sigma2, double theta);
  void validate(const ProblemSchema& s) const;
  double total_variance() const { return sigma2.sum(); }
  /// The equivalent EzGP parameters (thetaH replicated across the p rows).
  EzgpParams expand(int p) const;
};

/// Multiplicative-indicator covariance. Kept for demonstration only.
struct PhiStarParams {
  double sigma2 = 1.0;
  VectorXd theta0;
  std::vector<MatrixXd> Theta;
};

/// Per-factor level correlation. EC: one value c in (0,1). MC: m positive level
/// parameters. UC: m(m-1)/2 angles in (0,pi), packed row by row of the lower factor.
struct TauFactor {
  QualCorr form = QualCorr::EC;
  int levels = 2;
  VectorXd values;

  static TauFactor exchangeable(int m, double c);
  static TauFactor multiplicative(VectorXd level_params);
  static TauFactor unrestrictive(int m, VectorXd angles);
  static int parameter_count(QualCorr form, int m);
  void validate() const;
};

struct BaselineParams {
  ModelKind kind = ModelKind::EC;
  double mu = 0.0;
  VectorXd sigma2;             // 1 entry (EC/MC/UC) or q entries (AD_*)
  std::vector<VectorXd> theta; // 1 vector (EC/MC/UC) or q vectors (AD_*), each of length p
  std::vector<TauFactor> tau;  // q factors

  static BaselineParams uniform(ModelKind kind, const ProblemSchema& s, double sigma2, double theta);
  void validate(const ProblemSchema& s) const;
  double total_variance() const { return sigma2.sum(); }
};

/// Lower-triangular hypersphere factor L_j of an m x m UC correlation matrix.
MatrixXd uc_lower_factor(const VectorXd& angles, int m);
/// T_j as an m x m matrix.
MatrixXd tau_matrix(const TauFactor& f);
/// Derivatives of T_j with respect to each entry of f.values.
std::vector<MatrixXd> tau_matrix_derivatives(const TauFactor& f);
/// tau^(j) between two 1-based levels.
double tau_qual(const TauFactor& f, int l1, int l2);

double ezgp_cov(const MixedInput& a, const MixedInput& b, const EzgpParams& params);
double eezgp_cov(const MixedInput& a, const MixedInput& b, const EezgpParams& params);
double phi_star(const MixedInput& a, const MixedInput& b, const PhiStarParams& params);
double baseline_cov(const MixedInput& a, const MixedInput& b, const BaselineParams& params);

struct CovMatrix {
  MatrixXd matrix;
  double nugget = 0.0;
};

/// n x m_h dummy coding of one qualitative column.
MatrixXd expansion_matrix(const VectorXi& levels, int m);
/// B_{hl} = E_h e_l, the indicator of rows at level l (1-based).
VectorXd level_selector(const VectorXi& levels, int m, int l);

/// Schur-product assembly A_0 + sum_h sum_l (B B^T) o A_hl. The Hadamard product is
/// formed on the support of B B^T, i.e. the rows sharing level l of factor h.
CovMatrix assemble_cov_matrix(const MatrixXd& X, const MatrixXi& Z, const EzgpParams& params);
CovMatrix assemble_cov_matrix(const MatrixXd& X, const MatrixXi& Z, const EezgpParams& params);
CovMatrix assemble_cov_matrix(const MatrixXd& X, const MatrixXi& Z, const BaselineParams& params);

/// Entry-by-entry evaluation of ezgp_cov, kept as an independent reference.
MatrixXd assemble_cov_matrix_elementwise(const MatrixXd& X, const MatrixXi& Z, const EzgpParams& params);

/// Covariance between every training row and one target input.
VectorXd cross_covariance(const MatrixXd& X, const MatrixXi& Z, const MixedInput& w, const EzgpParams& params);
VectorXd cross_covariance(const MatrixXd& X, const MatrixXi& Z, const MixedInput& w, const EezgpParams& params);
VectorXd cross_covariance(const MatrixXd& X, const MatrixXi& Z, const MixedInput& w, const BaselineParams& params);

/// Identifies one covariance parameter of an EzGP model. Indices are 0-based.
struct EzgpParamRef {
  enum class Family { Sigma0, SigmaH, Theta0, ThetaH } family = Family::Sigma0;
  int h = 0;
  int k = 0;
  int l = 0;
};

/// dPhi/d(parameter) in natural units, built from the closed-form derivative of each family.
MatrixXd ezgp_cov_derivative(const MatrixXd& X, const MatrixXi& Z, const EzgpParams& params, const EzgpParamRef& ref);

/// sum_ij W_ij dPhi_ij/d(parameter) for every covariance parameter, returned in the
/// shape of the parameter struct (mu is left at 0).
EzgpParams ezgp_gradient_contraction(const MatrixXd& X, const MatrixXi& Z, const EzgpParams& params,
                                     const MatrixXd& W);
/// EEzGP version, contracting the per-k EzGP derivatives of each level.
EezgpParams eezgp_gradient_contraction(const MatrixXd& X, const MatrixXi& Z, const EezgpParams& params,
                                       const MatrixXd& W);
BaselineParams baseline_gradient_contraction(const MatrixXd& X, const MatrixXi& Z, const BaselineParams& params,
                                             const MatrixXd& W);

/// Covariance parameters excluding mu (the count reported after profiling mu out).
int covariance_parameter_count(ModelKind kind, const ProblemSchema& s);
/// Model parameters including mu.
int parameter_count(ModelKind kind, const ProblemSchema& s);

}  // namespace ezgp
