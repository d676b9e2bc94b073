// Shared fixtures for the unit and acceptance tests.
#pragma once

#include "ezgp/inference.hpp"
#include "ezgp/random.hpp"

#include <filesystem>
#include <string>

#include <unistd.h>

namespace ezgp::testing {

inline ProblemSchema random_schema(Rng& rng, int max_p, int max_q, int max_m) {
  const int p = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_p)));
  const int q = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_q)));
  std::vector<int> levels(static_cast<std::size_t>(q));
  for (int& m : levels) m = 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_m - 1)));
  return ProblemSchema(p, levels);
}

inline Dataset random_dataset(const ProblemSchema& s, int n, Rng& rng) {
  Dataset d;
  d.schema = s;
  d.X.resize(n, s.p);
  d.Z.resize(n, s.q);
  d.y.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < s.p; ++k) d.X(i, k) = rng.uniform();
    for (int h = 0; h < s.q; ++h)
      d.Z(i, h) = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(s.levels[static_cast<std::size_t>(h)])));
    d.y(i) = rng.uniform(-1.0, 1.0);
  }
  return d;
}

inline EzgpParams random_ezgp(const ProblemSchema& s, Rng& rng, double theta_lo = 0.1, double theta_hi = 5.0) {
  EzgpParams prm;
  prm.sigma2.resize(s.q + 1);
  for (int i = 0; i <= s.q; ++i) prm.sigma2(i) = rng.uniform(0.2, 2.0);
  prm.theta0.resize(s.p);
  for (int k = 0; k < s.p; ++k) prm.theta0(k) = rng.uniform(theta_lo, theta_hi);
  for (int m : s.levels) {
    MatrixXd T(s.p, m);
    for (int k = 0; k < s.p; ++k)
      for (int l = 0; l < m; ++l) T(k, l) = rng.uniform(theta_lo, theta_hi);
    prm.Theta.push_back(T);
  }
  return prm;
}

inline EezgpParams random_eezgp(const ProblemSchema& s, Rng& rng) {
  EezgpParams prm;
  prm.sigma2.resize(s.q + 1);
  for (int i = 0; i <= s.q; ++i) prm.sigma2(i) = rng.uniform(0.2, 2.0);
  prm.theta0.resize(s.p);
  for (int k = 0; k < s.p; ++k) prm.theta0(k) = rng.uniform(0.1, 5.0);
  for (int m : s.levels) {
    VectorXd t(m);
    t(0) = 1.0;
    for (int l = 1; l < m; ++l) t(l) = rng.uniform(0.1, 5.0);
    prm.thetaH.push_back(t);
  }
  return prm;
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("ezgp_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(reinterpret_cast<std::uintptr_t>(this) % 100000));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace ezgp::testing
