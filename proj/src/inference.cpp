#include "ezgp/inference.hpp"

#include "ezgp/optimizer.hpp"
#include "ezgp/random.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <thread>

namespace ezgp {

namespace {

std::atomic<double> g_gradient_corruption{0.0};

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

double sigmoid(double u) { return u >= 0.0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u)); }

double logit(double v) { return std::log(v) - std::log1p(-v); }

}  // namespace

ModelKind kind_of(const ModelParams& params) {
  return std::visit(overloaded{[](const EzgpParams&) { return ModelKind::EzGP; },
                               [](const EezgpParams&) { return ModelKind::EEzGP; },
                               [](const BaselineParams& b) { return b.kind; }},
                    params);
}

double mean_of(const ModelParams& params) {
  return std::visit([](const auto& p) { return p.mu; }, params);
}

double total_variance(const ModelParams& params) {
  return std::visit([](const auto& p) { return p.total_variance(); }, params);
}

void validate(const ModelParams& params, const ProblemSchema& s) {
  std::visit([&](const auto& p) { p.validate(s); }, params);
}

CovMatrix assemble_cov_matrix(const MatrixXd& X, const MatrixXi& Z, const ModelParams& params) {
  return std::visit([&](const auto& p) { return assemble_cov_matrix(X, Z, p); }, params);
}

VectorXd cross_covariance(const MatrixXd& X, const MatrixXi& Z, const MixedInput& w, const ModelParams& params) {
  return std::visit([&](const auto& p) { return cross_covariance(X, Z, w, p); }, params);
}

// ---------------------------------------------------------------------------
// Layout

ParameterLayout make_layout(ModelKind kind, const ProblemSchema& s) {
  s.validate();
  ParameterLayout L;
  L.kind = kind;
  L.schema = s;
  auto add = [&](Transform t, std::string name, std::string family) {
    L.transforms.push_back(t);
    L.names.push_back(std::move(name));
    L.families.push_back(std::move(family));
  };
  const auto idx = [](int i) { return std::to_string(i + 1); };

  if (kind == ModelKind::EzGP || kind == ModelKind::EEzGP) {
    add(Transform::Log, "sigma2(0)", "sigma2_0");
    for (int h = 0; h < s.q; ++h) add(Transform::Log, "sigma2(" + idx(h) + ")", "sigma2_h");
    for (int k = 0; k < s.p; ++k) add(Transform::Log, "theta(0)[" + idx(k) + "]", "theta0");
    for (int h = 0; h < s.q; ++h) {
      if (kind == ModelKind::EzGP) {
        for (int l = 0; l < s.levels[h]; ++l)
          for (int k = 0; k < s.p; ++k)
            add(Transform::Log, "theta(" + idx(h) + ")[" + idx(k) + "," + idx(l) + "]", "thetaH");
      } else {
        for (int l = 1; l < s.levels[h]; ++l)
          add(Transform::Log, "theta(" + idx(h) + ")[" + idx(l) + "]", "thetaH");
      }
    }
    return L;
  }

  const int blocks = is_additive(kind) ? s.q : 1;
  for (int b = 0; b < blocks; ++b) add(Transform::Log, "sigma2(" + idx(b) + ")", "sigma2");
  for (int b = 0; b < blocks; ++b)
    for (int k = 0; k < s.p; ++k) add(Transform::Log, "theta(" + idx(b) + ")[" + idx(k) + "]", "theta");
  const QualCorr form = qual_corr_of(kind);
  for (int h = 0; h < s.q; ++h) {
    const int m = s.levels[h];
    switch (form) {
      case QualCorr::EC: add(Transform::Logit, "c(" + idx(h) + ")", "tau"); break;
      case QualCorr::MC:
        for (int l = 0; l < m; ++l) add(Transform::Log, "tau(" + idx(h) + ")[" + idx(l) + "]", "tau");
        break;
      case QualCorr::UC:
        for (int r = 1; r < m; ++r)
          for (int c = 0; c < r; ++c)
            add(Transform::Angle, "angle(" + idx(h) + ")[" + idx(r) + "," + idx(c) + "]", "tau");
        break;
    }
  }
  return L;
}

VectorXd pack(const ModelParams& params, const ProblemSchema& s) {
  std::vector<double> v;
  std::visit(overloaded{[&](const EzgpParams& p) {
                          for (Index i = 0; i < p.sigma2.size(); ++i) v.push_back(p.sigma2(i));
                          for (Index k = 0; k < p.theta0.size(); ++k) v.push_back(p.theta0(k));
                          for (int h = 0; h < s.q; ++h)
                            for (Index l = 0; l < p.Theta[h].cols(); ++l)
                              for (Index k = 0; k < p.Theta[h].rows(); ++k) v.push_back(p.Theta[h](k, l));
                        },
                        [&](const EezgpParams& p) {
                          for (Index i = 0; i < p.sigma2.size(); ++i) v.push_back(p.sigma2(i));
                          for (Index k = 0; k < p.theta0.size(); ++k) v.push_back(p.theta0(k));
                          for (int h = 0; h < s.q; ++h)
                            for (Index l = 1; l < p.thetaH[h].size(); ++l) v.push_back(p.thetaH[h](l));
                        },
                        [&](const BaselineParams& p) {
                          for (Index i = 0; i < p.sigma2.size(); ++i) v.push_back(p.sigma2(i));
                          for (const auto& t : p.theta)
                            for (Index k = 0; k < t.size(); ++k) v.push_back(t(k));
                          for (const auto& f : p.tau)
                            for (Index r = 0; r < f.values.size(); ++r) v.push_back(f.values(r));
                        }},
             params);
  return Eigen::Map<VectorXd>(v.data(), static_cast<Index>(v.size()));
}

ModelParams unpack(const ParameterLayout& layout, const VectorXd& natural, double mu) {
  const ProblemSchema& s = layout.schema;
  if (natural.size() != layout.dimension())
    throw ValidationError("unpack: expected " + std::to_string(layout.dimension()) + " parameters, got " +
                          std::to_string(natural.size()));
  Index pos = 0;
  auto take = [&]() { return natural(pos++); };
  auto take_vec = [&](Index n) {
    VectorXd v(n);
    for (Index i = 0; i < n; ++i) v(i) = take();
    return v;
  };

  if (layout.kind == ModelKind::EzGP) {
    EzgpParams p;
    p.mu = mu;
    p.sigma2 = take_vec(s.q + 1);
    p.theta0 = take_vec(s.p);
    for (int h = 0; h < s.q; ++h) {
      MatrixXd T(s.p, s.levels[h]);
      for (int l = 0; l < s.levels[h]; ++l)
        for (int k = 0; k < s.p; ++k) T(k, l) = take();
      p.Theta.push_back(std::move(T));
    }
    return p;
  }
  if (layout.kind == ModelKind::EEzGP) {
    EezgpParams p;
    p.mu = mu;
    p.sigma2 = take_vec(s.q + 1);
    p.theta0 = take_vec(s.p);
    for (int h = 0; h < s.q; ++h) {
      VectorXd t(s.levels[h]);
      t(0) = 1.0;
      for (int l = 1; l < s.levels[h]; ++l) t(l) = take();
      p.thetaH.push_back(std::move(t));
    }
    return p;
  }
  BaselineParams p;
  p.kind = layout.kind;
  p.mu = mu;
  const int blocks = is_additive(layout.kind) ? s.q : 1;
  p.sigma2 = take_vec(blocks);
  for (int b = 0; b < blocks; ++b) p.theta.push_back(take_vec(s.p));
  const QualCorr form = qual_corr_of(layout.kind);
  for (int h = 0; h < s.q; ++h) {
    const int m = s.levels[h];
    VectorXd v = take_vec(TauFactor::parameter_count(form, m));
    p.tau.push_back(TauFactor{form, m, std::move(v)});
  }
  return p;
}

VectorXd to_natural(const ParameterLayout& layout, const VectorXd& u) {
  if (u.size() != layout.dimension()) throw ValidationError("to_natural: dimension mismatch");
  VectorXd v(u.size());
  for (Index i = 0; i < u.size(); ++i) {
    switch (layout.transforms[i]) {
      case Transform::Log: v(i) = std::exp(u(i)); break;
      case Transform::Logit: v(i) = sigmoid(u(i)); break;
      case Transform::Angle: v(i) = std::numbers::pi * sigmoid(u(i)); break;
    }
  }
  return v;
}

VectorXd to_unconstrained(const ParameterLayout& layout, const VectorXd& natural) {
  if (natural.size() != layout.dimension()) throw ValidationError("to_unconstrained: dimension mismatch");
  VectorXd u(natural.size());
  for (Index i = 0; i < natural.size(); ++i) {
    const double v = natural(i);
    switch (layout.transforms[i]) {
      case Transform::Log:
        if (!(v > 0.0)) throw ValidationError("parameter " + layout.names[i] + " must be positive");
        u(i) = std::log(v);
        break;
      case Transform::Logit:
        if (!(v > 0.0 && v < 1.0)) throw ValidationError("parameter " + layout.names[i] + " must lie in (0,1)");
        u(i) = logit(v);
        break;
      case Transform::Angle:
        if (!(v > 0.0 && v < std::numbers::pi))
          throw ValidationError("parameter " + layout.names[i] + " must lie in (0,pi)");
        u(i) = logit(v / std::numbers::pi);
        break;
    }
  }
  return u;
}

VectorXd natural_jacobian(const ParameterLayout& layout, const VectorXd& u) {
  VectorXd j(u.size());
  for (Index i = 0; i < u.size(); ++i) {
    switch (layout.transforms[i]) {
      case Transform::Log: j(i) = std::exp(u(i)); break;
      case Transform::Logit: {
        const double s = sigmoid(u(i));
        j(i) = s * (1.0 - s);
        break;
      }
      case Transform::Angle: {
        const double s = sigmoid(u(i));
        j(i) = std::numbers::pi * s * (1.0 - s);
        break;
      }
    }
  }
  return j;
}

// ---------------------------------------------------------------------------
// Likelihood

double mu_hat(const CholeskyFactor& f, const VectorXd& y) {
  if (y.size() != f.size()) throw ValidationError("mu_hat: dimension mismatch");
  const VectorXd ones = VectorXd::Ones(y.size());
  const VectorXd a = solve(f, ones);
  return a.dot(y) / a.dot(ones);
}

namespace {

struct Evaluation {
  LikelihoodValue value;
  VectorXd gradient;  // natural coordinates
};

void check_dataset(const ModelParams& params, const Dataset& d) {
  if (d.size() < 1) throw ValidationError("likelihood: empty dataset");
  validate(params, d.schema);
}

ModelParams contraction(const ModelParams& params, const Dataset& d, const MatrixXd& W) {
  return std::visit(overloaded{[&](const EzgpParams& p) -> ModelParams {
                                 return ezgp_gradient_contraction(d.X, d.Z, p, W);
                               },
                               [&](const EezgpParams& p) -> ModelParams {
                                 return eezgp_gradient_contraction(d.X, d.Z, p, W);
                               },
                               [&](const BaselineParams& p) -> ModelParams {
                                 return baseline_gradient_contraction(d.X, d.Z, p, W);
                               }},
                    params);
}

Evaluation evaluate(const ModelParams& params, const Dataset& d, bool want_gradient) {
  check_dataset(params, d);
  const CovMatrix cov = assemble_cov_matrix(d.X, d.Z, params);
  const CholeskyFactor f = cholesky_with_nugget(cov);
  const Index n = d.size();
  const VectorXd ones = VectorXd::Ones(n);
  const VectorXd a1 = solve(f, ones);
  const VectorXd ay = solve(f, d.y);
  const double q11 = ones.dot(a1);
  const double q1y = ones.dot(ay);
  Evaluation e;
  e.value.mu_hat = q1y / q11;
  e.value.nugget = f.nugget;
  e.value.value = log_det(f) + d.y.dot(ay) - q1y * q1y / q11;
  if (!want_gradient) return e;

  const VectorXd alpha = ay - e.value.mu_hat * a1;
  const MatrixXd W = inverse(f) - alpha * alpha.transpose();
  const ModelParams g = contraction(params, d, W);
  e.gradient = pack(g, d.schema);
  return e;
}

VectorXd chain_to_unconstrained(const ParameterLayout& layout, const ModelParams& params, const VectorXd& natural_grad) {
  const VectorXd u = to_unconstrained(layout, pack(params, layout.schema));
  return natural_grad.cwiseProduct(natural_jacobian(layout, u));
}

}  // namespace

LikelihoodValue neg_profile_loglik(const ModelParams& params, const Dataset& d) {
  return evaluate(params, d, false).value;
}

VectorXd natural_gradient(const ModelParams& params, const Dataset& d) { return evaluate(params, d, true).gradient; }

VectorXd grad_neg_profile_loglik(const ModelParams& params, const Dataset& d) {
  const ParameterLayout layout = make_layout(kind_of(params), d.schema);
  VectorXd g = chain_to_unconstrained(layout, params, natural_gradient(params, d));
  const double delta = g_gradient_corruption.load();
  if (delta != 0.0 && g.size() > 0) g(0) += delta;
  return g;
}

MatrixXd covariance_derivative(const ModelParams& params, const Dataset& d, int index) {
  check_dataset(params, d);
  const ParameterLayout layout = make_layout(kind_of(params), d.schema);
  if (index < 0 || index >= layout.dimension()) throw ValidationError("covariance_derivative: index out of range");
  const double jac = natural_jacobian(layout, to_unconstrained(layout, pack(params, d.schema)))(index);
  const Index n = d.size();
  MatrixXd D(n, n);
  MatrixXd W = MatrixXd::Zero(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i <= j; ++i) {
      W(i, j) = 1.0;
      const double v = pack(contraction(params, d, W), d.schema)(index) * jac;
      W(i, j) = 0.0;
      D(i, j) = v;
      D(j, i) = v;
    }
  }
  return D;
}

void set_gradient_corruption(double delta) { g_gradient_corruption.store(delta); }

// ---------------------------------------------------------------------------
// Objective

ProfileLikelihood::ProfileLikelihood(ModelKind kind, Dataset data)
    : kind_(kind), data_(std::move(data)), layout_(make_layout(kind, data_.schema)) {
  data_.validate();
}

ModelParams ProfileLikelihood::params(const VectorXd& u) const { return unpack(layout_, to_natural(layout_, u)); }

double ProfileLikelihood::value(const VectorXd& u) const { return neg_profile_loglik(params(u), data_).value; }

double ProfileLikelihood::value_and_gradient(const VectorXd& u, VectorXd& grad) const {
  const ModelParams p = params(u);
  const Evaluation e = evaluate(p, data_, true);
  grad = e.gradient.cwiseProduct(natural_jacobian(layout_, u));
  const double delta = g_gradient_corruption.load();
  if (delta != 0.0 && grad.size() > 0) grad(0) += delta;
  return e.value.value;
}

// ---------------------------------------------------------------------------
// Fit driver

void FitConfig::validate() const {
  if (starts < 1) throw ValidationError("fit: starts must be at least 1");
  if (max_iterations < 1) throw ValidationError("fit: max iterations must be at least 1");
  if (!(objective_tolerance >= 0.0) || !(gradient_tolerance >= 0.0))
    throw ValidationError("fit: tolerances must be nonnegative");
  auto positive_range = [](double lo, double hi, const char* what) {
    if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo > 0.0) || !(lo < hi))
      throw ValidationError(std::string("fit: ") + what + " bounds must be finite, positive and increasing");
  };
  positive_range(theta_lower, theta_upper, "theta");
  positive_range(sigma2_lower, sigma2_upper, "sigma2");
  if (!std::isfinite(logit_bound) || !(logit_bound > 0.0)) throw ValidationError("fit: logit bound must be positive");
  if (!std::isfinite(angle_bound) || !(angle_bound > 0.0)) throw ValidationError("fit: angle bound must be positive");
  positive_range(start_theta_lower, start_theta_upper, "start theta");
  positive_range(start_sigma2_lower, start_sigma2_upper, "start sigma2");
  if (start_theta_lower < theta_lower || start_theta_upper > theta_upper)
    throw ValidationError("fit: start theta region must lie inside the theta bounds");
  if (start_sigma2_lower < sigma2_lower || start_sigma2_upper > sigma2_upper)
    throw ValidationError("fit: start sigma2 region must lie inside the sigma2 bounds");
  if (!std::isfinite(start_logit) || !(start_logit > 0.0)) throw ValidationError("fit: start logit must be positive");
  if (threads < 0) throw ValidationError("fit: threads must be nonnegative");
}

Bounds make_bounds(const ParameterLayout& layout, double var_y, const FitConfig& cfg) {
  const double v = var_y > 0.0 ? var_y : 1.0;
  Bounds b;
  b.lower.resize(layout.dimension());
  b.upper.resize(layout.dimension());
  for (int i = 0; i < layout.dimension(); ++i) {
    const std::string& fam = layout.families[i];
    switch (layout.transforms[i]) {
      case Transform::Log:
        if (fam.rfind("sigma2", 0) == 0) {
          b.lower(i) = std::log(cfg.sigma2_lower * v);
          b.upper(i) = std::log(cfg.sigma2_upper * v);
        } else {
          b.lower(i) = std::log(cfg.theta_lower);
          b.upper(i) = std::log(cfg.theta_upper);
        }
        break;
      case Transform::Logit:
        b.lower(i) = -cfg.logit_bound;
        b.upper(i) = cfg.logit_bound;
        break;
      case Transform::Angle:
        b.lower(i) = -cfg.angle_bound;
        b.upper(i) = cfg.angle_bound;
        break;
    }
  }
  return b;
}

VectorXd canonical_start(const ParameterLayout& layout, double var_y, const Bounds& bounds) {
  const double v = var_y > 0.0 ? var_y : 1.0;
  int variances = 0;
  for (const auto& fam : layout.families)
    if (fam.rfind("sigma2", 0) == 0) ++variances;
  VectorXd u = VectorXd::Zero(layout.dimension());
  for (int i = 0; i < layout.dimension(); ++i)
    if (layout.families[i].rfind("sigma2", 0) == 0) u(i) = std::log(v / variances);
  return project(u, bounds.lower, bounds.upper);
}

VectorXd random_start(const ParameterLayout& layout, double var_y, const FitConfig& cfg, const Bounds& bounds,
                      std::uint64_t seed) {
  const double v = var_y > 0.0 ? var_y : 1.0;
  Rng rng(seed);
  VectorXd u(layout.dimension());
  for (int i = 0; i < layout.dimension(); ++i) {
    if (layout.transforms[i] != Transform::Log)
      u(i) = rng.uniform(-cfg.start_logit, cfg.start_logit);
    else if (layout.families[i].rfind("sigma2", 0) == 0)
      u(i) = rng.uniform(std::log(cfg.start_sigma2_lower * v), std::log(cfg.start_sigma2_upper * v));
    else
      u(i) = rng.uniform(std::log(cfg.start_theta_lower), std::log(cfg.start_theta_upper));
  }
  return project(u, bounds.lower, bounds.upper);
}

FittedModel make_fitted_model(const Dataset& normalized, ModelParams params) {
  normalized.validate();
  validate(params, normalized.schema);
  FittedModel m;
  m.kind = kind_of(params);
  m.schema = normalized.schema;
  m.data = normalized;
  m.chol = cholesky_with_nugget(assemble_cov_matrix(normalized.X, normalized.Z, params));
  const Index n = normalized.size();
  const VectorXd ones = VectorXd::Ones(n);
  m.ones_solve = solve(m.chol, ones);
  m.ones_quad = ones.dot(m.ones_solve);
  const VectorXd ay = solve(m.chol, normalized.y);
  const double mu = ones.dot(ay) / m.ones_quad;
  std::visit([&](auto& p) { p.mu = mu; }, params);
  m.params = std::move(params);
  m.weights = solve(m.chol, VectorXd(normalized.y - mu * ones));
  const double q1y = ones.dot(ay);
  m.objective = log_det(m.chol) + normalized.y.dot(ay) - q1y * q1y / m.ones_quad;
  return m;
}

FittedModel fit(const Dataset& d, ModelKind kind, const FitConfig& cfg) {
  cfg.validate();
  d.validate();
  if (d.size() < 2) throw ValidationError("fit: at least 2 observations required");
  const Dataset data = normalize_quantitative(d);
  const ProfileLikelihood objective(kind, data);
  const ParameterLayout& layout = objective.layout();
  const double var_y = sample_variance(data.y);
  const Bounds bounds = make_bounds(layout, var_y, cfg);

  BoxOptions options;
  options.max_iterations = cfg.max_iterations;
  options.objective_tolerance = cfg.objective_tolerance;
  options.gradient_tolerance = cfg.gradient_tolerance;

  const int starts = cfg.starts;
  std::vector<StartTrace> traces(static_cast<std::size_t>(starts));
  std::vector<VectorXd> finals(static_cast<std::size_t>(starts));

  auto run_start = [&](int s) {
    StartTrace& tr = traces[static_cast<std::size_t>(s)];
    tr.index = s;
    VectorXd u0;
    if (s == 0) {
      u0 = canonical_start(layout, var_y, bounds);
    } else {
      u0 = random_start(layout, var_y, cfg, bounds, derive_seed({cfg.seed, static_cast<std::uint64_t>(s)}));
    }
    const BoxObjective f = [&](const VectorXd& u, VectorXd& g) { return objective.value_and_gradient(u, g); };
    try {
      VectorXd g0;
      tr.initial_objective = objective.value_and_gradient(u0, g0);
    } catch (const std::exception& e) {
      tr.initial_objective = std::numeric_limits<double>::infinity();
      tr.message = e.what();
      return;
    }
    const BoxResult r = minimize_box(f, u0, bounds.lower, bounds.upper, options);
    tr.final_objective = r.value;
    tr.iterations = r.iterations;
    tr.evaluations = r.evaluations;
    tr.message = r.message;
    tr.ok = std::isfinite(r.value);
    finals[static_cast<std::size_t>(s)] = r.x;
  };

  int threads = cfg.threads == 0 ? static_cast<int>(std::thread::hardware_concurrency()) : cfg.threads;
  threads = std::clamp(threads, 1, starts);
  if (threads == 1) {
    for (int s = 0; s < starts; ++s) run_start(s);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&]() {
        for (int s = next++; s < starts; s = next++) run_start(s);
      });
    for (auto& th : pool) th.join();
  }

  int best = -1;
  for (int s = 0; s < starts; ++s) {
    const auto& tr = traces[static_cast<std::size_t>(s)];
    if (!tr.ok) continue;
    if (best < 0 || tr.final_objective < traces[static_cast<std::size_t>(best)].final_objective) best = s;
  }
  if (best < 0) {
    std::ostringstream msg;
    msg << "fit: every start failed for " << to_string(kind);
    for (const auto& tr : traces) msg << "\n  start " << tr.index << ": " << tr.message;
    throw FitError(msg.str());
  }

  FittedModel m = make_fitted_model(data, objective.params(finals[static_cast<std::size_t>(best)]));
  m.seed = cfg.seed;
  m.trace = std::move(traces);
  return m;
}

}  // namespace ezgp
