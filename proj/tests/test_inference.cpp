#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace ezgp;
using ezgp::testing::random_dataset;
using ezgp::testing::random_ezgp;

namespace {

Dataset two_far_points(double y1, double y2) {
  Dataset d;
  d.schema = ProblemSchema(1, {2});
  d.X = (MatrixXd(2, 1) << 0.0, 1.0).finished();
  d.Z = (MatrixXi(2, 1) << 1, 2).finished();
  d.y = (VectorXd(2) << y1, y2).finished();
  return d;
}

// Objective recomputed from an explicit inverse.
double explicit_objective(const MatrixXd& Phi, const VectorXd& y) {
  const MatrixXd inv = Phi.inverse();
  const VectorXd ones = VectorXd::Ones(y.size());
  const double mu = ones.dot(inv * y) / ones.dot(inv * ones);
  const VectorXd r = y - mu * ones;
  return std::log(Phi.determinant()) + r.dot(inv * r);
}

VectorXd interior_point(const ParameterLayout& layout, const Dataset& d, std::uint64_t seed) {
  const FitConfig cfg;
  const double var_y = sample_variance(d.y);
  return random_start(layout, var_y, cfg, make_bounds(layout, var_y, cfg), seed);
}

// Fourth-order central difference.
double five_point(const ProfileLikelihood& pl, const VectorXd& u, int i) {
  const double h = 1e-4;
  auto at = [&](double t) {
    VectorXd v = u;
    v(i) += t;
    return pl.value(v);
  };
  return (at(-2 * h) - 8 * at(-h) + 8 * at(h) - at(2 * h)) / (12 * h);
}

}  // namespace

TEST_CASE("generalized least squares mean") {
  const VectorXd y = (VectorXd(3) << 1.0, 2.0, 6.0).finished();
  CHECK(mu_hat(cholesky_with_nugget(MatrixXd::Identity(3, 3)), y) == doctest::Approx(3.0));
  CHECK(mu_hat(cholesky_with_nugget(MatrixXd(7.0 * MatrixXd::Identity(3, 3))), y) == doctest::Approx(3.0));

  Rng rng(3);
  for (int rep = 0; rep < 10; ++rep) {
    MatrixXd A = MatrixXd::Random(3, 3);
    A = A * A.transpose() + MatrixXd::Identity(3, 3);
    const VectorXd v = VectorXd::Random(3);
    // Explicit inverse through the adjugate.
    MatrixXd adj(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const int r0 = (j + 1) % 3, r1 = (j + 2) % 3, c0 = (i + 1) % 3, c1 = (i + 2) % 3;
        adj(i, j) = A(r0, c0) * A(r1, c1) - A(r0, c1) * A(r1, c0);
      }
    const double det = A.row(0).dot(adj.col(0));
    const MatrixXd inv = adj / det;
    const VectorXd ones = VectorXd::Ones(3);
    const double expected = ones.dot(inv * v) / ones.dot(inv * ones);
    CHECK(mu_hat(cholesky_with_nugget(A), v) == doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("profile likelihood closed forms") {
  const ProblemSchema s(1, {2});
  EzgpParams prm = EzgpParams::uniform(s, 0.75, 1e3);
  const Dataset d = two_far_points(1.0, 4.0);
  const double v = prm.total_variance();
  const auto lv = neg_profile_loglik(prm, d);
  CHECK(lv.nugget == 0.0);
  CHECK(lv.mu_hat == doctest::Approx(2.5));
  CHECK(lv.value == doctest::Approx(2 * std::log(v) + 9.0 / (2 * v)).epsilon(1e-12));

  Dataset one = d.subset({0});
  CHECK(neg_profile_loglik(prm, one).value == doctest::Approx(std::log(prm.total_variance())));
}

TEST_CASE("profile likelihood equals the residual form") {
  Rng rng(4);
  for (int rep = 0; rep < 10; ++rep) {
    const ProblemSchema s(2, {2, 3});
    const Dataset d = random_dataset(s, 5, rng);
    const EzgpParams prm = random_ezgp(s, rng);
    const auto lv = neg_profile_loglik(prm, d);
    REQUIRE(lv.nugget == 0.0);
    const MatrixXd Phi = assemble_cov_matrix_elementwise(d.X, d.Z, prm);
    CHECK(lv.value == doctest::Approx(explicit_objective(Phi, d.y)).epsilon(1e-9));
  }
}

TEST_CASE("layouts match the parameter counts") {
  Rng rng(5);
  for (int rep = 0; rep < 10; ++rep) {
    const ProblemSchema s = ezgp::testing::random_schema(rng, 3, 3, 4);
    for (ModelKind k : all_model_kinds()) {
      const ParameterLayout layout = make_layout(k, s);
      CHECK(layout.dimension() == covariance_parameter_count(k, s));
      CHECK(layout.names.size() == layout.transforms.size());
      CHECK(layout.families.size() == layout.transforms.size());
    }
  }
}

TEST_CASE("pack and unpack are inverse") {
  Rng rng(6);
  const ProblemSchema s(2, {3, 2});
  const Dataset d = random_dataset(s, 6, rng);
  for (ModelKind k : all_model_kinds()) {
    const ParameterLayout layout = make_layout(k, s);
    const VectorXd u = interior_point(layout, d, 99);
    const VectorXd natural = to_natural(layout, u);
    const ModelParams prm = unpack(layout, natural, 0.25);
    CHECK(kind_of(prm) == k);
    CHECK(mean_of(prm) == 0.25);
    CHECK(pack(prm, s).isApprox(natural, 1e-14));
    CHECK(to_unconstrained(layout, natural).isApprox(u, 1e-10));
    CHECK_NOTHROW(validate(prm, s));
  }
}

TEST_CASE("transform jacobian matches finite differences") {
  Rng rng(7);
  const ProblemSchema s(1, {3, 3});
  const Dataset d = random_dataset(s, 6, rng);
  for (ModelKind k : {ModelKind::EzGP, ModelKind::AD_EC, ModelKind::UC}) {
    const ParameterLayout layout = make_layout(k, s);
    const VectorXd u = interior_point(layout, d, 5);
    const VectorXd J = natural_jacobian(layout, u);
    for (int i = 0; i < layout.dimension(); ++i) {
      VectorXd up = u, dn = u;
      up(i) += 1e-6;
      dn(i) -= 1e-6;
      const double fd = (to_natural(layout, up)(i) - to_natural(layout, dn)(i)) / 2e-6;
      CHECK(J(i) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("analytical gradients match central differences for every kind") {
  Rng rng(8);
  for (ModelKind k : all_model_kinds()) {
    for (int rep = 0; rep < 3; ++rep) {
      const ProblemSchema s = ezgp::testing::random_schema(rng, 3, 3, 3);
      const Dataset d = random_dataset(s, 6, rng);
      const ProfileLikelihood pl(k, d);
      const VectorXd u = interior_point(pl.layout(), d, derive_seed({7, static_cast<std::uint64_t>(rep)}));
      VectorXd g;
      pl.value_and_gradient(u, g);
      for (int i = 0; i < pl.layout().dimension(); ++i) {
        const double fd = five_point(pl, u, i);
        const double diff = std::abs(fd - g(i));
        INFO(to_string(k), " ", pl.layout().names[static_cast<std::size_t>(i)], " fd ", fd, " analytic ", g(i));
        CHECK((diff <= 1e-8 || diff <= 1e-5 * std::max(std::abs(fd), std::abs(g(i)))));
      }
    }
  }
}

TEST_CASE("natural gradient matches differences in natural units") {
  Rng rng(9);
  const ProblemSchema s(2, {2, 2});
  const Dataset d = random_dataset(s, 6, rng);
  const EzgpParams prm = random_ezgp(s, rng);
  const VectorXd g = natural_gradient(prm, d);
  const ParameterLayout layout = make_layout(ModelKind::EzGP, s);
  const VectorXd v = pack(prm, s);
  for (int i = 0; i < layout.dimension(); ++i) {
    VectorXd up = v, dn = v;
    const double h = 1e-6 * std::max(1.0, v(i));
    up(i) += h;
    dn(i) -= h;
    const double fd = (neg_profile_loglik(unpack(layout, up), d).value - neg_profile_loglik(unpack(layout, dn), d).value) / (2 * h);
    CHECK(g(i) == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("covariance derivative in optimizer coordinates") {
  Rng rng(10);
  const ProblemSchema s(1, {3});
  const Dataset d = random_dataset(s, 5, rng);
  for (ModelKind k : {ModelKind::EEzGP, ModelKind::MC}) {
    const ParameterLayout layout = make_layout(k, s);
    const VectorXd u = interior_point(layout, d, 3);
    const ModelParams prm = unpack(layout, to_natural(layout, u));
    for (int i = 0; i < layout.dimension(); ++i) {
      VectorXd up = u, dn = u;
      up(i) += 1e-6;
      dn(i) -= 1e-6;
      const MatrixXd fd = (assemble_cov_matrix(d.X, d.Z, unpack(layout, to_natural(layout, up))).matrix -
                           assemble_cov_matrix(d.X, d.Z, unpack(layout, to_natural(layout, dn))).matrix) /
                          2e-6;
      CHECK((fd - covariance_derivative(prm, d, i)).cwiseAbs().maxCoeff() < 1e-7);
    }
  }
}

TEST_CASE("gradient corruption hook is visible and resettable") {
  Rng rng(11);
  const Dataset d = random_dataset(ProblemSchema(1, {2}), 5, rng);
  const ProfileLikelihood pl(ModelKind::EzGP, d);
  const VectorXd u = interior_point(pl.layout(), d, 1);
  VectorXd g0, g1;
  pl.value_and_gradient(u, g0);
  set_gradient_corruption(0.5);
  pl.value_and_gradient(u, g1);
  set_gradient_corruption(0.0);
  CHECK(g1(0) == doctest::Approx(g0(0) + 0.5));
  CHECK(g1.tail(g1.size() - 1) == g0.tail(g0.size() - 1));
}

TEST_CASE("starts respect the bounds") {
  Rng rng(12);
  const ProblemSchema s(2, {3, 3});
  const Dataset d = random_dataset(s, 8, rng);
  const FitConfig cfg;
  for (ModelKind k : all_model_kinds()) {
    const ParameterLayout layout = make_layout(k, s);
    const double var_y = sample_variance(d.y);
    const Bounds b = make_bounds(layout, var_y, cfg);
    const VectorXd c = canonical_start(layout, var_y, b);
    CHECK((c.array() >= b.lower.array()).all());
    CHECK((c.array() <= b.upper.array()).all());
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const VectorXd r = random_start(layout, var_y, cfg, b, seed);
      CHECK((r.array() >= b.lower.array()).all());
      CHECK((r.array() <= b.upper.array()).all());
      CHECK(r == random_start(layout, var_y, cfg, b, seed));
    }
  }
}

TEST_CASE("fit config validation") {
  FitConfig cfg;
  cfg.starts = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  cfg.theta_lower = 10.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  cfg.threads = -1;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("fit improves on every start and is thread independent") {
  Rng rng(13);
  const ProblemSchema s(2, {2, 2});
  Dataset d = random_dataset(s, 16, rng);
  for (Index i = 0; i < d.size(); ++i) d.y(i) = std::sin(4 * d.X(i, 0)) + d.Z(i, 0) * d.X(i, 1);
  FitConfig cfg;
  cfg.starts = 4;
  cfg.seed = 21;
  cfg.threads = 1;
  const FittedModel a = fit(d, ModelKind::EzGP, cfg);
  cfg.threads = 3;
  const FittedModel b = fit(d, ModelKind::EzGP, cfg);
  CHECK(a.objective == b.objective);
  CHECK(pack(a.params, s) == pack(b.params, s));
  REQUIRE(a.trace.size() == 4);
  double best = a.trace[0].final_objective;
  for (const auto& t : a.trace) {
    CHECK(t.ok);
    CHECK(t.final_objective <= t.initial_objective);
    best = std::min(best, t.final_objective);
  }
  CHECK(a.objective == doctest::Approx(best).epsilon(1e-9));
  CHECK(a.seed == 21);
}

TEST_CASE("fit rejects degenerate input") {
  Rng rng(14);
  const Dataset d = random_dataset(ProblemSchema(1, {2}), 1, rng);
  CHECK_THROWS_AS(fit(d, ModelKind::EzGP), ValidationError);
}
