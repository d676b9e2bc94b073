#include "support.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>

using namespace ezgp;
using ezgp::testing::random_dataset;
using ezgp::testing::random_eezgp;
using ezgp::testing::random_ezgp;

namespace {

MixedInput input(std::initializer_list<double> x, std::initializer_list<int> z) {
  MixedInput w;
  w.x.resize(static_cast<Index>(x.size()));
  w.z.resize(static_cast<Index>(z.size()));
  Index i = 0;
  for (double v : x) w.x(i++) = v;
  i = 0;
  for (int v : z) w.z(i++) = v;
  return w;
}

// Straight transcription of the additive-indicator covariance, loop by loop.
double oracle_ezgp(const MixedInput& a, const MixedInput& b, const EzgpParams& prm) {
  double base = 0.0;
  for (Index k = 0; k < a.x.size(); ++k) base += prm.theta0(k) * std::pow(a.x(k) - b.x(k), 2);
  double v = prm.sigma2(0) * std::exp(-base);
  for (std::size_t h = 0; h < prm.Theta.size(); ++h) {
    const auto hi = static_cast<Index>(h);
    for (int l = 1; l <= prm.Theta[h].cols(); ++l) {
      if (a.z(hi) != l || b.z(hi) != l) continue;
      double e = 0.0;
      for (Index k = 0; k < a.x.size(); ++k) e += prm.Theta[h](k, l - 1) * std::pow(a.x(k) - b.x(k), 2);
      v += prm.sigma2(hi + 1) * std::exp(-e);
    }
  }
  return v;
}

// Example 1: two quantitative and two qualitative factors.
struct ExampleOne {
  MixedInput w1, w2, w3;
  ExampleOne(double a, double b, double c, double d)
      : w1(input({a, b}, {1, 2})), w2(input({c, d}, {1, 2})), w3(input({c, d}, {2, 1})) {}
};

}  // namespace

TEST_CASE("gaussian correlation") {
  const VectorXd zero = VectorXd::Zero(1);
  const VectorXd one = VectorXd::Ones(1);
  CHECK(gauss_corr(zero, zero, one) == 1.0);
  CHECK(gauss_corr(zero, one, one) == doctest::Approx(0.3678794).epsilon(1e-7));
  CHECK_THROWS_AS(gauss_corr(zero, one, VectorXd::Zero(1)), ValidationError);
}

TEST_CASE("model kind names") {
  for (ModelKind k : all_model_kinds()) CHECK(parse_model_kind(to_string(k)) == k);
  CHECK(parse_model_kind("AD-UC") == ModelKind::AD_UC);
  CHECK(parse_model_kind("EEzGP") == ModelKind::EEzGP);
  CHECK_THROWS_AS(parse_model_kind("gp"), ValidationError);
  CHECK(all_model_kinds().size() == 8);
}

TEST_CASE("ezgp covariance on the two-factor example") {
  const ProblemSchema s(2, {2, 2});
  const EzgpParams prm = EzgpParams::uniform(s, 1.0, 1.0);
  const ExampleOne ex(1, 0, 0, 0);
  const double e1 = std::exp(-1.0);
  CHECK(ezgp_cov(ex.w1, ex.w2, prm) == doctest::Approx(3 * e1).epsilon(1e-12));
  CHECK(ezgp_cov(ex.w1, ex.w2, prm) == doctest::Approx(1.1036383).epsilon(1e-7));
  CHECK(ezgp_cov(ex.w1, ex.w3, prm) == doctest::Approx(e1).epsilon(1e-12));
  CHECK(ezgp_cov(ex.w1, ex.w1, prm) == doctest::Approx(3.0));
}

TEST_CASE("ezgp covariance agrees with a loop transcription") {
  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const ProblemSchema s = ezgp::testing::random_schema(rng, 3, 3, 4);
    const EzgpParams prm = random_ezgp(s, rng);
    const Dataset d = random_dataset(s, 6, rng);
    for (Index i = 0; i < d.size(); ++i)
      for (Index j = 0; j < d.size(); ++j)
        CHECK(ezgp_cov(d.input(i), d.input(j), prm) ==
              doctest::Approx(oracle_ezgp(d.input(i), d.input(j), prm)).epsilon(1e-13));
  }
}

TEST_CASE("constant variance and match monotonicity") {
  Rng rng(5);
  const ProblemSchema s(2, {3, 3});
  for (int rep = 0; rep < 20; ++rep) {
    const EzgpParams prm = random_ezgp(s, rng);
    const Dataset d = random_dataset(s, 4, rng);
    for (Index i = 0; i < d.size(); ++i) CHECK(ezgp_cov(d.input(i), d.input(i), prm) == doctest::Approx(prm.sigma2.sum()));
    const MixedInput a = input({rng.uniform(), rng.uniform()}, {1, 2});
    const VectorXd x = (VectorXd(2) << rng.uniform(), rng.uniform()).finished();
    const double none = ezgp_cov(a, {x, (VectorXi(2) << 2, 3).finished()}, prm);
    const double one = ezgp_cov(a, {x, (VectorXi(2) << 1, 3).finished()}, prm);
    const double both = ezgp_cov(a, {x, (VectorXi(2) << 1, 2).finished()}, prm);
    CHECK(none <= one);
    CHECK(one <= both);
  }
}

TEST_CASE("eezgp covariance") {
  const ProblemSchema s(1, {2});
  const EezgpParams prm = EezgpParams::uniform(s, 1.0, 1.0);
  const MixedInput a = input({0.0}, {1});
  const MixedInput b = input({1.0}, {1});
  CHECK(eezgp_cov(a, b, prm) == doctest::Approx(0.7357589).epsilon(1e-7));
  CHECK(eezgp_cov(a, a, prm) == doctest::Approx(2.0));

  Rng rng(7);
  const ProblemSchema t(3, {2, 3});
  const EezgpParams r = random_eezgp(t, rng);
  const EzgpParams wide = r.expand(t.p);
  const Dataset d = random_dataset(t, 5, rng);
  for (Index i = 0; i < d.size(); ++i)
    for (Index j = 0; j < d.size(); ++j)
      CHECK(eezgp_cov(d.input(i), d.input(j), r) == doctest::Approx(oracle_ezgp(d.input(i), d.input(j), wide)));

  EezgpParams bad = r;
  bad.thetaH[0](0) = 2.0;
  CHECK_THROWS_AS(bad.validate(t), ValidationError);
}

TEST_CASE("multiplicative indicator covariance") {
  PhiStarParams prm;
  prm.sigma2 = 1.0;
  prm.theta0 = VectorXd::Ones(2);
  prm.Theta = {MatrixXd::Ones(2, 2), MatrixXd::Ones(2, 2)};
  const ExampleOne ex(1, 0, 0, 0);
  CHECK(phi_star(ex.w1, ex.w2, prm) == doctest::Approx(0.0497871).epsilon(1e-6));
  CHECK(phi_star(ex.w1, ex.w2, prm) == doctest::Approx(std::exp(-3.0)).epsilon(1e-12));
  CHECK(phi_star(ex.w1, ex.w3, prm) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  const MixedInput same_x = input({1, 0}, {2, 1});
  CHECK(phi_star(ex.w1, same_x, prm) == doctest::Approx(1.0));
}

TEST_CASE("level correlation functions") {
  const TauFactor ec = TauFactor::exchangeable(3, 0.3);
  CHECK(tau_qual(ec, 1, 2) == doctest::Approx(0.3));
  CHECK(tau_qual(ec, 3, 3) == 1.0);

  const TauFactor uc = TauFactor::unrestrictive(2, VectorXd::Constant(1, std::numbers::pi / 3));
  CHECK(tau_qual(uc, 2, 1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(tau_qual(uc, 1, 1) == 1.0);
  const TauFactor right = TauFactor::unrestrictive(2, VectorXd::Constant(1, std::numbers::pi / 2));
  CHECK(tau_matrix(right).isApprox(MatrixXd::Identity(2, 2), 1e-12));

  const TauFactor mc = TauFactor::multiplicative((VectorXd(3) << 0.1, 0.2, 0.4).finished());
  CHECK(tau_qual(mc, 1, 3) == doctest::Approx(std::exp(-0.5)));
  CHECK(tau_qual(mc, 2, 2) == 1.0);

  CHECK_THROWS_AS(TauFactor::exchangeable(3, 1.2).validate(), ValidationError);
  CHECK_THROWS_AS(TauFactor::unrestrictive(3, VectorXd::Ones(2)).validate(), ValidationError);
}

TEST_CASE("unrestrictive correlation matrices are valid correlations") {
  Rng rng(17);
  for (int rep = 0; rep < 50; ++rep) {
    const int m = 2 + static_cast<int>(rng.below(4));
    VectorXd angles(m * (m - 1) / 2);
    for (Index i = 0; i < angles.size(); ++i) angles(i) = rng.uniform(0.01, std::numbers::pi - 0.01);
    const MatrixXd L = uc_lower_factor(angles, m);
    CHECK(L(0, 0) == 1.0);
    CHECK((L * L.transpose()).diagonal().isOnes(1e-12));
    const MatrixXd T = tau_matrix(TauFactor::unrestrictive(m, angles));
    CHECK(T.diagonal().isOnes());
    CHECK(Eigen::SelfAdjointEigenSolver<MatrixXd>(T).eigenvalues().minCoeff() > -1e-12);
  }
}

TEST_CASE("level correlation derivatives match finite differences") {
  Rng rng(23);
  std::vector<TauFactor> factors = {
      TauFactor::exchangeable(3, 0.4),
      TauFactor::multiplicative((VectorXd(3) << 0.3, 1.1, 0.7).finished()),
  };
  VectorXd angles(6);
  for (Index i = 0; i < 6; ++i) angles(i) = rng.uniform(0.3, 2.8);
  factors.push_back(TauFactor::unrestrictive(4, angles));
  for (const auto& f : factors) {
    const auto dT = tau_matrix_derivatives(f);
    REQUIRE(dT.size() == static_cast<std::size_t>(f.values.size()));
    for (Index i = 0; i < f.values.size(); ++i) {
      const double h = 1e-6;
      TauFactor up = f, dn = f;
      up.values(i) += h;
      dn.values(i) -= h;
      const MatrixXd fd = (tau_matrix(up) - tau_matrix(dn)) / (2 * h);
      CHECK((fd - dT[static_cast<std::size_t>(i)]).cwiseAbs().maxCoeff() < 1e-8);
    }
  }
}

TEST_CASE("baseline covariance") {
  const ProblemSchema s(1, {3, 3});
  BaselineParams ec = BaselineParams::uniform(ModelKind::EC, s, 2.0, 1.0);
  const MixedInput a = input({0.2}, {1, 1});
  CHECK(baseline_cov(a, input({0.2}, {2, 3}), ec) == doctest::Approx(0.25 * 2.0));
  CHECK(baseline_cov(a, input({0.7}, {1, 1}), ec) == doctest::Approx(2.0 * std::exp(-0.25)));

  BaselineParams ad = BaselineParams::uniform(ModelKind::AD_MC, s, 1.0, 1.0);
  ad.sigma2 << 0.5, 1.5;
  CHECK(baseline_cov(a, a, ad) == doctest::Approx(2.0));
  // Additive form: each factor contributes sigma_j^2 tau_j R_j.
  const MixedInput b = input({0.5}, {1, 2});
  const double t2 = std::exp(-(1.0 + 1.0));
  CHECK(baseline_cov(a, b, ad) == doctest::Approx(0.5 * std::exp(-0.09) + 1.5 * t2 * std::exp(-0.09)));

  ec.tau[0] = TauFactor::multiplicative(VectorXd::Ones(3));
  CHECK_THROWS_AS(baseline_cov(a, a, ec), ValidationError);
}

TEST_CASE("expansion matrices from the four-run example") {
  const VectorXi z = (VectorXi(4) << 1, 2, 3, 2).finished();
  const MatrixXd E = expansion_matrix(z, 3);
  CHECK(E.rowwise().sum().isOnes());
  const VectorXd B = level_selector(z, 3, 2);
  CHECK(B == (VectorXd(4) << 0, 1, 0, 1).finished());
  MatrixXd expected = MatrixXd::Zero(4, 4);
  expected(1, 1) = expected(1, 3) = expected(3, 1) = expected(3, 3) = 1.0;
  CHECK((B * B.transpose()) == expected);
}

TEST_CASE("schur assembly equals elementwise assembly") {
  Rng rng(29);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const ProblemSchema s = ezgp::testing::random_schema(rng, 3, 3, 4);
    const int n = 1 + static_cast<int>(rng.below(20));
    const Dataset d = random_dataset(s, n, rng);
    const EzgpParams prm = random_ezgp(s, rng);
    const CovMatrix c = assemble_cov_matrix(d.X, d.Z, prm);
    const MatrixXd e = assemble_cov_matrix_elementwise(d.X, d.Z, prm);
    worst = std::max(worst, (c.matrix - e).cwiseAbs().maxCoeff());
    if (n == 1) CHECK(c.matrix(0, 0) == doctest::Approx(prm.sigma2.sum()));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("baseline and eezgp matrices agree with pairwise evaluation") {
  Rng rng(31);
  const ProblemSchema s(2, {3, 2});
  const Dataset d = random_dataset(s, 7, rng);
  for (ModelKind k : all_model_kinds()) {
    if (!is_baseline(k)) continue;
    const BaselineParams prm = BaselineParams::uniform(k, s, 1.3, 0.8);
    const MatrixXd M = assemble_cov_matrix(d.X, d.Z, prm).matrix;
    const MixedInput w = d.input(2);
    const VectorXd r = cross_covariance(d.X, d.Z, w, prm);
    for (Index i = 0; i < d.size(); ++i) {
      CHECK(r(i) == doctest::Approx(M(i, 2)));
      for (Index j = 0; j < d.size(); ++j) CHECK(M(i, j) == doctest::Approx(baseline_cov(d.input(i), d.input(j), prm)));
    }
  }
  const EezgpParams ee = random_eezgp(s, rng);
  const MatrixXd M = assemble_cov_matrix(d.X, d.Z, ee).matrix;
  for (Index i = 0; i < d.size(); ++i)
    for (Index j = 0; j < d.size(); ++j) CHECK(M(i, j) == doctest::Approx(eezgp_cov(d.input(i), d.input(j), ee)));
}

TEST_CASE("ezgp covariance derivatives match finite differences") {
  Rng rng(37);
  const ProblemSchema s(2, {2, 3});
  const Dataset d = random_dataset(s, 6, rng);
  const EzgpParams prm = random_ezgp(s, rng);
  using F = EzgpParamRef::Family;
  std::vector<EzgpParamRef> refs = {{F::Sigma0, 0, 0, 0}, {F::SigmaH, 1, 0, 0}, {F::Theta0, 0, 1, 0},
                                    {F::ThetaH, 0, 0, 1}, {F::ThetaH, 1, 1, 2}};
  const double h = 1e-6;
  for (const auto& ref : refs) {
    EzgpParams up = prm, dn = prm;
    auto bump = [&](EzgpParams& p, double delta) {
      switch (ref.family) {
        case F::Sigma0: p.sigma2(0) += delta; break;
        case F::SigmaH: p.sigma2(ref.h + 1) += delta; break;
        case F::Theta0: p.theta0(ref.k) += delta; break;
        case F::ThetaH: p.Theta[static_cast<std::size_t>(ref.h)](ref.k, ref.l) += delta; break;
      }
    };
    bump(up, h);
    bump(dn, -h);
    const MatrixXd fd = (assemble_cov_matrix_elementwise(d.X, d.Z, up) - assemble_cov_matrix_elementwise(d.X, d.Z, dn)) / (2 * h);
    const MatrixXd an = ezgp_cov_derivative(d.X, d.Z, prm, ref);
    CHECK((fd - an).cwiseAbs().maxCoeff() < 1e-8);
    if (ref.family == F::Sigma0) CHECK(an.diagonal().isOnes());
  }
}

TEST_CASE("gradient contraction equals the trace against finite-difference derivatives") {
  Rng rng(41);
  const ProblemSchema s(2, {2, 2});
  const Dataset d = random_dataset(s, 5, rng);
  const EzgpParams prm = random_ezgp(s, rng);
  MatrixXd W = MatrixXd::Random(5, 5);
  W = (W + W.transpose()).eval();
  const EzgpParams c = ezgp_gradient_contraction(d.X, d.Z, prm, W);
  const double h = 1e-6;
  auto contract = [&](EzgpParams up, EzgpParams dn) {
    const MatrixXd fd = (assemble_cov_matrix_elementwise(d.X, d.Z, up) - assemble_cov_matrix_elementwise(d.X, d.Z, dn)) / (2 * h);
    return (W.array() * fd.array()).sum();
  };
  {
    EzgpParams up = prm, dn = prm;
    up.sigma2(2) += h;
    dn.sigma2(2) -= h;
    CHECK(c.sigma2(2) == doctest::Approx(contract(up, dn)).epsilon(1e-6));
  }
  {
    EzgpParams up = prm, dn = prm;
    up.theta0(1) += h;
    dn.theta0(1) -= h;
    CHECK(c.theta0(1) == doctest::Approx(contract(up, dn)).epsilon(1e-6));
  }
  {
    EzgpParams up = prm, dn = prm;
    up.Theta[1](0, 1) += h;
    dn.Theta[1](0, 1) -= h;
    CHECK(c.Theta[1](0, 1) == doctest::Approx(contract(up, dn)).epsilon(1e-6));
  }
}

TEST_CASE("parameter counts") {
  const ProblemSchema s(9, std::vector<int>(9, 3));
  CHECK(parameter_count(ModelKind::EEzGP, s) == 2 + 9 + 27);
  CHECK(parameter_count(ModelKind::EEzGP, s) == 38);
  CHECK(covariance_parameter_count(ModelKind::EEzGP, s) == 37);
  const ProblemSchema t(3, {3, 3, 3});
  CHECK(parameter_count(ModelKind::EzGP, t) == 2 + 3 + 3 + 3 * 9);
  CHECK(parameter_count(ModelKind::EC, t) == 1 + 1 + 3 + 3);
  CHECK(parameter_count(ModelKind::MC, t) == 1 + 1 + 3 + 9);
  CHECK(parameter_count(ModelKind::UC, t) == 1 + 1 + 3 + 9);
  CHECK(parameter_count(ModelKind::AD_EC, t) == 1 + 3 + 9 + 3);
}
