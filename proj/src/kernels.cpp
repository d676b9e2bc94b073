#include "ezgp/kernels.hpp"

#include <algorithm>
#include <cctype>
#include <numbers>

namespace ezgp {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::EzGP: return "ezgp";
    case ModelKind::EEzGP: return "eezgp";
    case ModelKind::EC: return "ec";
    case ModelKind::MC: return "mc";
    case ModelKind::UC: return "uc";
    case ModelKind::AD_EC: return "ad_ec";
    case ModelKind::AD_MC: return "ad_mc";
    case ModelKind::AD_UC: return "ad_uc";
  }
  return "unknown";
}

std::vector<ModelKind> all_model_kinds() {
  return {ModelKind::EzGP, ModelKind::EEzGP, ModelKind::EC,    ModelKind::MC,
          ModelKind::UC,   ModelKind::AD_EC, ModelKind::AD_MC, ModelKind::AD_UC};
}

ModelKind parse_model_kind(const std::string& name) {
  std::string key;
  for (char c : name) key += c == '-' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  for (ModelKind kind : all_model_kinds())
    if (to_string(kind) == key) return kind;
  std::string valid;
  for (ModelKind kind : all_model_kinds()) valid += (valid.empty() ? "" : ", ") + to_string(kind);
  throw ValidationError("unknown model kind '" + name + "'; valid kinds: " + valid);
}

bool is_baseline(ModelKind kind) { return kind != ModelKind::EzGP && kind != ModelKind::EEzGP; }

bool is_additive(ModelKind kind) {
  return kind == ModelKind::AD_EC || kind == ModelKind::AD_MC || kind == ModelKind::AD_UC;
}

QualCorr qual_corr_of(ModelKind kind) {
  switch (kind) {
    case ModelKind::EC:
    case ModelKind::AD_EC: return QualCorr::EC;
    case ModelKind::MC:
    case ModelKind::AD_MC: return QualCorr::MC;
    case ModelKind::UC:
    case ModelKind::AD_UC: return QualCorr::UC;
    default: throw ValidationError(to_string(kind) + " has no level-correlation family");
  }
}

namespace {

void check_theta(const VectorXd& theta, const std::string& what) {
  for (Index k = 0; k < theta.size(); ++k) {
    if (!(theta(k) >= kMinTheta) || !std::isfinite(theta(k)))
      throw ValidationError(what + ": correlation parameter " + std::to_string(theta(k)) + " below " +
                            std::to_string(kMinTheta));
  }
}

void check_variances(const VectorXd& sigma2, const std::string& what) {
  for (Index i = 0; i < sigma2.size(); ++i) {
    if (!(sigma2(i) >= 0.0) || !std::isfinite(sigma2(i))) throw ValidationError(what + ": variances must be >= 0");
  }
  if (!(sigma2.maxCoeff() > 0.0)) throw ValidationError(what + ": at least one variance must be positive");
}

std::vector<MatrixXd> squared_differences(const MatrixXd& X) {
  const Index n = X.rows();
  std::vector<MatrixXd> out(static_cast<std::size_t>(X.cols()));
  for (Index k = 0; k < X.cols(); ++k) {
    MatrixXd& D = out[k];
    D.resize(n, n);
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i < n; ++i) {
        const double d = X(i, k) - X(j, k);
        D(i, j) = d * d;
      }
  }
  return out;
}

MatrixXd weighted_sum(const std::vector<MatrixXd>& D2, const VectorXd& weights, Index n) {
  MatrixXd S = MatrixXd::Zero(n, n);
  for (std::size_t k = 0; k < D2.size(); ++k) S += weights(static_cast<Index>(k)) * D2[k];
  return S;
}

std::vector<std::vector<Index>> rows_by_level(const VectorXi& levels, int m) {
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(m));
  for (Index i = 0; i < levels.size(); ++i) out[static_cast<std::size_t>(levels(i) - 1)].push_back(i);
  return out;
}

template <typename XA, typename XB>
double exponent(const XA& xa, const XB& xb, const VectorXd& theta) {
  double s = 0.0;
  for (Index k = 0; k < theta.size(); ++k) {
    const double d = xa(k) - xb(k);
    s += theta(k) * d * d;
  }
  return s;
}

template <typename XA, typename ZA, typename XB, typename ZB>
double ezgp_pair(const XA& xa, const ZA& za, const XB& xb, const ZB& zb, const EzgpParams& prm) {
  double v = prm.sigma2(0) * std::exp(-exponent(xa, xb, prm.theta0));
  for (std::size_t h = 0; h < prm.Theta.size(); ++h) {
    const auto hi = static_cast<Index>(h);
    if (za(hi) != zb(hi)) continue;
    const Index l = za(hi) - 1;
    double s = 0.0;
    for (Index k = 0; k < prm.theta0.size(); ++k) {
      const double d = xa(k) - xb(k);
      s += prm.Theta[h](k, l) * d * d;
    }
    v += prm.sigma2(hi + 1) * std::exp(-s);
  }
  return v;
}

struct TauTables {
  std::vector<MatrixXd> T;
};

TauTables tau_tables(const BaselineParams& prm) {
  TauTables t;
  for (const auto& f : prm.tau) t.T.push_back(tau_matrix(f));
  return t;
}

template <typename XA, typename ZA, typename XB, typename ZB>
double baseline_pair(const XA& xa, const ZA& za, const XB& xb, const ZB& zb, const BaselineParams& prm,
                     const TauTables& tables) {
  const auto q = static_cast<Index>(prm.tau.size());
  if (!is_additive(prm.kind)) {
    double prod = 1.0;
    for (Index j = 0; j < q; ++j) prod *= tables.T[j](za(j) - 1, zb(j) - 1);
    return prm.sigma2(0) * prod * std::exp(-exponent(xa, xb, prm.theta[0]));
  }
  double v = 0.0;
  for (Index j = 0; j < q; ++j)
    v += prm.sigma2(j) * tables.T[j](za(j) - 1, zb(j) - 1) * std::exp(-exponent(xa, xb, prm.theta[j]));
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// Parameter structs

EzgpParams EzgpParams::uniform(const ProblemSchema& s, double sigma2, double theta) {
  EzgpParams prm;
  prm.sigma2 = VectorXd::Constant(s.q + 1, sigma2);
  prm.theta0 = VectorXd::Constant(s.p, theta);
  for (int m : s.levels) prm.Theta.push_back(MatrixXd::Constant(s.p, m, theta));
  return prm;
}

void EzgpParams::validate(const ProblemSchema& s) const {
  if (sigma2.size() != s.q + 1) throw ValidationError("EzGP: expected q+1 variances");
  if (theta0.size() != s.p) throw ValidationError("EzGP: expected p base correlation parameters");
  if (static_cast<int>(Theta.size()) != s.q) throw ValidationError("EzGP: expected q adjustment matrices");
  check_variances(sigma2, "EzGP");
  check_theta(theta0, "EzGP base");
  for (int h = 0; h < s.q; ++h) {
    if (Theta[h].rows() != s.p || Theta[h].cols() != s.levels[h])
      throw ValidationError("EzGP: adjustment matrix " + std::to_string(h + 1) + " must be p x m_h");
    check_theta(Eigen::Map<const VectorXd>(Theta[h].data(), Theta[h].size()), "EzGP adjustment");
  }
}

EezgpParams EezgpParams::uniform(const ProblemSchema& s, double sigma2, double theta) {
  EezgpParams prm;
  prm.sigma2 = VectorXd::Constant(s.q + 1, sigma2);
  prm.theta0 = VectorXd::Constant(s.p, theta);
  for (int m : s.levels) {
    VectorXd t = VectorXd::Constant(m, theta);
    t(0) = 1.0;
    prm.thetaH.push_back(t);
  }
  return prm;
}

void EezgpParams::validate(const ProblemSchema& s) const {
  if (sigma2.size() != s.q + 1) throw ValidationError("EEzGP: expected q+1 variances");
  if (theta0.size() != s.p) throw ValidationError("EEzGP: expected p base correlation parameters");
  if (static_cast<int>(thetaH.size()) != s.q) throw ValidationError("EEzGP: expected q level-parameter vectors");
  check_variances(sigma2, "EEzGP");
  check_theta(theta0, "EEzGP base");
  for (int h = 0; h < s.q; ++h) {
    if (thetaH[h].size() != s.levels[h]) throw ValidationError("EEzGP: level vector length must equal m_h");
    if (thetaH[h](0) != 1.0) throw ValidationError("EEzGP: first level parameter must be anchored at 1");
    check_theta(thetaH[h], "EEzGP adjustment");
  }
}

EzgpParams EezgpParams::expand(int p) const {
  EzgpParams out;
  out.mu = mu;
  out.sigma2 = sigma2;
  out.theta0 = theta0;
  for (const auto& t : thetaH) out.Theta.push_back(VectorXd::Ones(p) * t.transpose());
  return out;
}

TauFactor TauFactor::exchangeable(int m, double c) { return {QualCorr::EC, m, VectorXd::Constant(1, c)}; }

TauFactor TauFactor::multiplicative(VectorXd level_params) {
  const int m = static_cast<int>(level_params.size());
  return {QualCorr::MC, m, std::move(level_params)};
}

TauFactor TauFactor::unrestrictive(int m, VectorXd angles) { return {QualCorr::UC, m, std::move(angles)}; }

int TauFactor::parameter_count(QualCorr form, int m) {
  switch (form) {
    case QualCorr::EC: return 1;
    case QualCorr::MC: return m;
    case QualCorr::UC: return m * (m - 1) / 2;
  }
  return 0;
}

void TauFactor::validate() const {
  if (levels < 2) throw ValidationError("level correlation: at least 2 levels required");
  if (values.size() != parameter_count(form, levels))
    throw ValidationError("level correlation: expected " + std::to_string(parameter_count(form, levels)) +
                          " parameters for " + std::to_string(levels) + " levels");
  for (Index i = 0; i < values.size(); ++i) {
    const double v = values(i);
    bool ok = std::isfinite(v);
    switch (form) {
      case QualCorr::EC: ok = ok && v > 0.0 && v < 1.0; break;
      case QualCorr::MC: ok = ok && v > 0.0; break;
      case QualCorr::UC: ok = ok && v > 0.0 && v < std::numbers::pi; break;
    }
    if (!ok) throw ValidationError("level correlation: parameter " + std::to_string(v) + " outside its domain");
  }
}

BaselineParams BaselineParams::uniform(ModelKind kind, const ProblemSchema& s, double sigma2, double theta) {
  BaselineParams prm;
  prm.kind = kind;
  const int blocks = is_additive(kind) ? s.q : 1;
  prm.sigma2 = VectorXd::Constant(blocks, sigma2);
  prm.theta.assign(static_cast<std::size_t>(blocks), VectorXd::Constant(s.p, theta));
  const QualCorr form = qual_corr_of(kind);
  for (int m : s.levels) {
    switch (form) {
      case QualCorr::EC: prm.tau.push_back(TauFactor::exchangeable(m, 0.5)); break;
      case QualCorr::MC: prm.tau.push_back(TauFactor::multiplicative(VectorXd::Constant(m, theta))); break;
      case QualCorr::UC:
        prm.tau.push_back(TauFactor::unrestrictive(m, VectorXd::Constant(m * (m - 1) / 2, std::numbers::pi / 2)));
        break;
    }
  }
  return prm;
}

void BaselineParams::validate(const ProblemSchema& s) const {
  if (!is_baseline(kind)) throw ValidationError("baseline parameters carry a non-baseline kind");
  const int blocks = is_additive(kind) ? s.q : 1;
  const std::string what = to_string(kind);
  if (sigma2.size() != blocks) throw ValidationError(what + ": wrong number of variances");
  if (static_cast<int>(theta.size()) != blocks) throw ValidationError(what + ": wrong number of theta vectors");
  check_variances(sigma2, what);
  for (const auto& t : theta) {
    if (t.size() != s.p) throw ValidationError(what + ": theta vectors must have length p");
    check_theta(t, what);
  }
  if (static_cast<int>(tau.size()) != s.q) throw ValidationError(what + ": expected q level correlations");
  for (int j = 0; j < s.q; ++j) {
    if (tau[j].form != qual_corr_of(kind)) throw ValidationError(what + ": level correlation family mismatch");
    if (tau[j].levels != s.levels[j]) throw ValidationError(what + ": level correlation sized for the wrong level count");
    tau[j].validate();
  }
}

// ---------------------------------------------------------------------------
// Level correlations

MatrixXd uc_lower_factor(const VectorXd& angles, int m) {
  if (angles.size() != m * (m - 1) / 2) throw ValidationError("UC: angle table size must be m(m-1)/2");
  MatrixXd L = MatrixXd::Zero(m, m);
  L(0, 0) = 1.0;
  for (int r = 1; r < m; ++r) {
    const int offset = r * (r - 1) / 2;
    double prod = 1.0;
    for (int s = 0; s < r; ++s) {
      const double phi = std::clamp(angles(offset + s), kAngleGuard, std::numbers::pi - kAngleGuard);
      L(r, s) = prod * std::cos(phi);
      prod *= std::sin(phi);
    }
    L(r, r) = prod;
  }
  return L;
}

MatrixXd tau_matrix(const TauFactor& f) {
  const int m = f.levels;
  switch (f.form) {
    case QualCorr::EC: {
      MatrixXd T = MatrixXd::Constant(m, m, f.values(0));
      T.diagonal().setOnes();
      return T;
    }
    case QualCorr::MC: {
      MatrixXd T(m, m);
      for (Index b = 0; b < m; ++b)
        for (Index a = 0; a < m; ++a) T(a, b) = a == b ? 1.0 : std::exp(-(f.values(a) + f.values(b)));
      return T;
    }
    case QualCorr::UC: {
      const MatrixXd L = uc_lower_factor(f.values, m);
      MatrixXd T = L * L.transpose();
      T.diagonal().setOnes();
      return T;
    }
  }
  return {};
}

std::vector<MatrixXd> tau_matrix_derivatives(const TauFactor& f) {
  const int m = f.levels;
  std::vector<MatrixXd> out;
  switch (f.form) {
    case QualCorr::EC: {
      MatrixXd D = MatrixXd::Ones(m, m);
      D.diagonal().setZero();
      out.push_back(D);
      break;
    }
    case QualCorr::MC: {
      const MatrixXd T = tau_matrix(f);
      const Index size = m;
      for (Index l = 0; l < size; ++l) {
        MatrixXd D = MatrixXd::Zero(size, size);
        for (Index a = 0; a < size; ++a) {
          if (a == l) continue;
          D(a, l) = -T(a, l);
          D(l, a) = -T(l, a);
        }
        out.push_back(D);
      }
      break;
    }
    case QualCorr::UC: {
      const MatrixXd L = uc_lower_factor(f.values, m);
      for (int r = 1; r < m; ++r) {
        const int offset = r * (r - 1) / 2;
        auto angle = [&](int s) {
          return std::clamp(f.values(offset + s), kAngleGuard, std::numbers::pi - kAngleGuard);
        };
        for (int t = 0; t < r; ++t) {
          MatrixXd dL = MatrixXd::Zero(m, m);
          for (int s = 0; s <= r; ++s) {
            if (s < r && t > s) continue;
            double v = 1.0;
            for (int u = 0; u < s; ++u) v *= u == t ? std::cos(angle(u)) : std::sin(angle(u));
            if (s < r) v *= s == t ? -std::sin(angle(s)) : std::cos(angle(s));
            dL(r, s) = v;
          }
          MatrixXd D = dL * L.transpose() + L * dL.transpose();
          D.diagonal().setZero();
          out.push_back(D);
        }
      }
      break;
    }
  }
  return out;
}

double tau_qual(const TauFactor& f, int l1, int l2) {
  f.validate();
  const int m = f.levels;
  if (l1 < 1 || l1 > m || l2 < 1 || l2 > m) throw ValidationError("tau: level outside 1..m");
  if (l1 == l2) return 1.0;
  switch (f.form) {
    case QualCorr::EC: return f.values(0);
    case QualCorr::MC: return std::exp(-(f.values(l1 - 1) + f.values(l2 - 1)));
    case QualCorr::UC: {
      const MatrixXd L = uc_lower_factor(f.values, m);
      return L.row(l1 - 1).dot(L.row(l2 - 1));
    }
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Pairwise covariances

namespace {

void check_pair(const MixedInput& a, const MixedInput& b, Index p, Index q) {
  if (a.x.size() != p || b.x.size() != p || a.z.size() != q || b.z.size() != q)
    throw ValidationError("covariance: inputs do not match the parameter schema");
}

void check_levels(const MixedInput& w, const std::vector<Index>& m) {
  for (std::size_t h = 0; h < m.size(); ++h) {
    const auto hi = static_cast<Index>(h);
    if (w.z(hi) < 1 || w.z(hi) > m[h]) throw ValidationError("covariance: level outside 1..m_h");
  }
}

}  // namespace

double ezgp_cov(const MixedInput& a, const MixedInput& b, const EzgpParams& params) {
  check_pair(a, b, params.theta0.size(), static_cast<Index>(params.Theta.size()));
  std::vector<Index> m;
  for (const auto& T : params.Theta) m.push_back(T.cols());
  check_levels(a, m);
  check_levels(b, m);
  return ezgp_pair(a.x, a.z, b.x, b.z, params);
}

double eezgp_cov(const MixedInput& a, const MixedInput& b, const EezgpParams& params) {
  check_pair(a, b, params.theta0.size(), static_cast<Index>(params.thetaH.size()));
  std::vector<Index> m;
  for (const auto& t : params.thetaH) m.push_back(t.size());
  check_levels(a, m);
  check_levels(b, m);
  double v = params.sigma2(0) * std::exp(-exponent(a.x, b.x, params.theta0));
  const double dist2 = (a.x - b.x).squaredNorm();
  for (std::size_t h = 0; h < params.thetaH.size(); ++h) {
    const auto hi = static_cast<Index>(h);
    if (a.z(hi) != b.z(hi)) continue;
    v += params.sigma2(hi + 1) * std::exp(-params.thetaH[h](a.z(hi) - 1) * dist2);
  }
  return v;
}

double phi_star(const MixedInput& a, const MixedInput& b, const PhiStarParams& params) {
  check_pair(a, b, params.theta0.size(), static_cast<Index>(params.Theta.size()));
  std::vector<Index> m;
  for (const auto& T : params.Theta) m.push_back(T.cols());
  check_levels(a, m);
  check_levels(b, m);
  double s = exponent(a.x, b.x, params.theta0);
  for (std::size_t h = 0; h < params.Theta.size(); ++h) {
    const auto hi = static_cast<Index>(h);
    if (a.z(hi) != b.z(hi)) continue;
    s += exponent(a.x, b.x, VectorXd(params.Theta[h].col(a.z(hi) - 1)));
  }
  return params.sigma2 * std::exp(-s);
}

double baseline_cov(const MixedInput& a, const MixedInput& b, const BaselineParams& params) {
  if (!is_baseline(params.kind)) throw ValidationError("baseline_cov: kind is not a baseline model");
  const Index p = params.theta.empty() ? 0 : params.theta[0].size();
  check_pair(a, b, p, static_cast<Index>(params.tau.size()));
  const std::size_t blocks = is_additive(params.kind) ? params.tau.size() : 1;
  if (params.theta.size() != blocks || params.sigma2.size() != static_cast<Index>(blocks))
    throw ValidationError("baseline_cov: parameter blocks do not match kind " + to_string(params.kind));
  std::vector<Index> m;
  for (const auto& f : params.tau) {
    if (f.form != qual_corr_of(params.kind))
      throw ValidationError("baseline_cov: level correlation family does not match kind " + to_string(params.kind));
    m.push_back(f.levels);
  }
  check_levels(a, m);
  check_levels(b, m);
  return baseline_pair(a.x, a.z, b.x, b.z, params, tau_tables(params));
}

// ---------------------------------------------------------------------------
// Matrix assembly

MatrixXd expansion_matrix(const VectorXi& levels, int m) {
  MatrixXd E = MatrixXd::Zero(levels.size(), m);
  for (Index i = 0; i < levels.size(); ++i) {
    if (levels(i) < 1 || levels(i) > m) throw ValidationError("expansion_matrix: level outside 1..m");
    E(i, levels(i) - 1) = 1.0;
  }
  return E;
}

VectorXd level_selector(const VectorXi& levels, int m, int l) {
  if (l < 1 || l > m) throw ValidationError("level_selector: level outside 1..m");
  VectorXd unit = VectorXd::Zero(m);
  unit(l - 1) = 1.0;
  return expansion_matrix(levels, m) * unit;
}

CovMatrix assemble_cov_matrix(const MatrixXd& X, const MatrixXi& Z, const EzgpParams& params) {
  const Index n = X.rows();
  const auto D2 = squared_differences(X);
  CovMatrix out;
  out.matrix = params.sigma2(0) * (-weighted_sum(D2, params.theta0, n)).array().exp().matrix();
  for (std::size_t h = 0; h < params.Theta.size(); ++h) {
    const auto hi = static_cast<Index>(h);
    const double s2 = params.sigma2(hi + 1);
    const auto groups = rows_by_level(Z.col(hi), static_cast<int>(params.Theta[h].cols()));
    for (std::size_t l = 0; l < groups.size(); ++l) {
      const auto& idx = groups[l];
      if (idx.empty()) continue;
      const auto nl = static_cast<Index>(idx.size());
      MatrixXd S = MatrixXd::Zero(nl, nl);
      for (std::size_t k = 0; k < D2.size(); ++k) S += params.Theta[h](static_cast<Index>(k), static_cast<Index>(l)) * D2[k](idx, idx);
      out.matrix(idx, idx) += s2 * (-S).array().exp().matrix();
    }
  }
  return out;
}

CovMatrix assemble_cov_matrix(const MatrixXd& X, const MatrixXi& Z, const EezgpParams& params) {
  return assemble_cov_matrix(X, Z, params.expand(static_cast<int>(X.cols())));
}

CovMatrix assemble_cov_matrix(const MatrixXd& X, const MatrixXi& Z, const BaselineParams& params) {
  const Index n = X.rows();
  const TauTables tables = tau_tables(params);
  CovMatrix out;
  out.matrix.resize(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i <= j; ++i) {
      const double v = baseline_pair(X.row(i), Z.row(i), X.row(j), Z.row(j), params, tables);
      out.matrix(i, j) = v;
      out.matrix(j, i) = v;
    }
  }
  return out;
}

MatrixXd assemble_cov_matrix_elementwise(const MatrixXd& X, const MatrixXi& Z, const EzgpParams& params) {
  const Index n = X.rows();
  MatrixXd out(n, n);
  for (Index j = 0; j < n; ++j) {
    const MixedInput wj{X.row(j).transpose(), Z.row(j).transpose()};
    for (Index i = 0; i < n; ++i) out(i, j) = ezgp_cov({X.row(i).transpose(), Z.row(i).transpose()}, wj, params);
  }
  return out;
}

VectorXd cross_covariance(const MatrixXd& X, const MatrixXi& Z, const MixedInput& w, const EzgpParams& params) {
  VectorXd out(X.rows());
  for (Index i = 0; i < X.rows(); ++i) out(i) = ezgp_pair(X.row(i), Z.row(i), w.x, w.z, params);
  return out;
}

VectorXd cross_covariance(const MatrixXd& X, const MatrixXi& Z, const MixedInput& w, const EezgpParams& params) {
  return cross_covariance(X, Z, w, params.expand(static_cast<int>(X.cols())));
}

VectorXd cross_covariance(const MatrixXd& X, const MatrixXi& Z, const MixedInput& w, const BaselineParams& params) {
  const TauTables tables = tau_tables(params);
  VectorXd out(X.rows());
  for (Index i = 0; i < X.rows(); ++i) out(i) = baseline_pair(X.row(i), Z.row(i), w.x, w.z, params, tables);
  return out;
}

// ---------------------------------------------------------------------------
// Derivatives

MatrixXd ezgp_cov_derivative(const MatrixXd& X, const MatrixXi& Z, const EzgpParams& params, const EzgpParamRef& ref) {
  using Family = EzgpParamRef::Family;
  const Index n = X.rows();
  MatrixXd D = MatrixXd::Zero(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) {
      const auto xi = X.row(i);
      const auto xj = X.row(j);
      switch (ref.family) {
        case Family::Sigma0: D(i, j) = std::exp(-exponent(xi, xj, params.theta0)); break;
        case Family::SigmaH: {
          const auto h = static_cast<std::size_t>(ref.h);
          if (Z(i, ref.h) == Z(j, ref.h))
            D(i, j) = std::exp(-exponent(xi, xj, VectorXd(params.Theta[h].col(Z(i, ref.h) - 1))));
          break;
        }
        case Family::Theta0: {
          const double d = xi(ref.k) - xj(ref.k);
          D(i, j) = -params.sigma2(0) * d * d * std::exp(-exponent(xi, xj, params.theta0));
          break;
        }
        case Family::ThetaH: {
          const auto h = static_cast<std::size_t>(ref.h);
          if (Z(i, ref.h) == Z(j, ref.h) && Z(i, ref.h) == ref.l + 1) {
            const double d = xi(ref.k) - xj(ref.k);
            D(i, j) = -params.sigma2(ref.h + 1) * d * d *
                      std::exp(-exponent(xi, xj, VectorXd(params.Theta[h].col(ref.l))));
          }
          break;
        }
      }
    }
  }
  return D;
}

EzgpParams ezgp_gradient_contraction(const MatrixXd& X, const MatrixXi& Z, const EzgpParams& params,
                                     const MatrixXd& W) {
  const Index n = X.rows();
  const auto D2 = squared_differences(X);
  EzgpParams g;
  g.sigma2 = VectorXd::Zero(params.sigma2.size());
  g.theta0 = VectorXd::Zero(params.theta0.size());
  for (const auto& T : params.Theta) g.Theta.push_back(MatrixXd::Zero(T.rows(), T.cols()));

  const MatrixXd E0 = (-weighted_sum(D2, params.theta0, n)).array().exp().matrix();
  const MatrixXd WE0 = W.cwiseProduct(E0);
  g.sigma2(0) = WE0.sum();
  for (std::size_t k = 0; k < D2.size(); ++k)
    g.theta0(static_cast<Index>(k)) = -params.sigma2(0) * WE0.cwiseProduct(D2[k]).sum();

  for (std::size_t h = 0; h < params.Theta.size(); ++h) {
    const auto hi = static_cast<Index>(h);
    const double s2 = params.sigma2(hi + 1);
    const auto groups = rows_by_level(Z.col(hi), static_cast<int>(params.Theta[h].cols()));
    for (std::size_t l = 0; l < groups.size(); ++l) {
      const auto& idx = groups[l];
      if (idx.empty()) continue;
      const auto li = static_cast<Index>(l);
      const auto nl = static_cast<Index>(idx.size());
      MatrixXd S = MatrixXd::Zero(nl, nl);
      for (std::size_t k = 0; k < D2.size(); ++k) S += params.Theta[h](static_cast<Index>(k), li) * D2[k](idx, idx);
      const MatrixXd WE = MatrixXd(W(idx, idx)).cwiseProduct((-S).array().exp().matrix());
      g.sigma2(hi + 1) += WE.sum();
      for (std::size_t k = 0; k < D2.size(); ++k)
        g.Theta[h](static_cast<Index>(k), li) = -s2 * WE.cwiseProduct(MatrixXd(D2[k](idx, idx))).sum();
    }
  }
  return g;
}

EezgpParams eezgp_gradient_contraction(const MatrixXd& X, const MatrixXi& Z, const EezgpParams& params,
                                       const MatrixXd& W) {
  const EzgpParams full = ezgp_gradient_contraction(X, Z, params.expand(static_cast<int>(X.cols())), W);
  EezgpParams g;
  g.sigma2 = full.sigma2;
  g.theta0 = full.theta0;
  for (const auto& T : full.Theta) g.thetaH.push_back(T.colwise().sum().transpose());
  return g;
}

BaselineParams baseline_gradient_contraction(const MatrixXd& X, const MatrixXi& Z, const BaselineParams& params,
                                             const MatrixXd& W) {
  const Index n = X.rows();
  const auto q = static_cast<Index>(params.tau.size());
  const bool additive = is_additive(params.kind);

  std::vector<MatrixXd> T;
  std::vector<std::vector<MatrixXd>> dT;
  for (const auto& f : params.tau) {
    T.push_back(tau_matrix(f));
    dT.push_back(tau_matrix_derivatives(f));
  }

  BaselineParams g = params;
  g.mu = 0.0;
  g.sigma2.setZero();
  for (auto& t : g.theta) t.setZero();
  for (auto& f : g.tau) f.values.setZero();

  const Index p = X.cols();
  std::vector<double> tau_val(static_cast<std::size_t>(q));
  std::vector<double> others(static_cast<std::size_t>(q));
  VectorXd d2(p);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i <= j; ++i) {
      const double w = i == j ? W(i, i) : W(i, j) + W(j, i);
      if (w == 0.0) continue;
      for (Index k = 0; k < p; ++k) {
        const double d = X(i, k) - X(j, k);
        d2(k) = d * d;
      }
      for (Index h = 0; h < q; ++h) tau_val[h] = T[h](Z(i, h) - 1, Z(j, h) - 1);
      if (!additive) {
        const double R = std::exp(-params.theta[0].dot(d2));
        double prefix = 1.0;
        for (Index h = 0; h < q; ++h) {
          others[h] = prefix;
          prefix *= tau_val[h];
        }
        double suffix = 1.0;
        for (Index h = q - 1; h >= 0; --h) {
          others[h] *= suffix;
          suffix *= tau_val[h];
        }
        const double prod = prefix;
        const double value = params.sigma2(0) * prod * R;
        g.sigma2(0) += w * prod * R;
        g.theta[0] -= w * value * d2;
        for (Index h = 0; h < q; ++h) {
          const double scale = w * params.sigma2(0) * R * others[h];
          auto& gv = g.tau[h].values;
          for (Index r = 0; r < gv.size(); ++r) gv(r) += scale * dT[h][r](Z(i, h) - 1, Z(j, h) - 1);
        }
      } else {
        for (Index h = 0; h < q; ++h) {
          const double R = std::exp(-params.theta[h].dot(d2));
          g.sigma2(h) += w * tau_val[h] * R;
          g.theta[h] -= w * params.sigma2(h) * tau_val[h] * R * d2;
          const double scale = w * params.sigma2(h) * R;
          auto& gv = g.tau[h].values;
          for (Index r = 0; r < gv.size(); ++r) gv(r) += scale * dT[h][r](Z(i, h) - 1, Z(j, h) - 1);
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------

int covariance_parameter_count(ModelKind kind, const ProblemSchema& s) {
  const int p = s.p;
  const int q = s.q;
  const int sum_m = s.total_levels();
  switch (kind) {
    case ModelKind::EzGP: return 1 + p + q + p * sum_m;
    case ModelKind::EEzGP: return 1 + p + sum_m;
    default: break;
  }
  int tau = 0;
  for (int m : s.levels) tau += TauFactor::parameter_count(qual_corr_of(kind), m);
  return is_additive(kind) ? q + q * p + tau : 1 + p + tau;
}

int parameter_count(ModelKind kind, const ProblemSchema& s) { return 1 + covariance_parameter_count(kind, s); }

}  // namespace ezgp
