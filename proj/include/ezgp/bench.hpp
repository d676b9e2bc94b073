// Test functions, experimental designs, accuracy metrics and the replication harness.
#pragma once

#include "ezgp/inference.hpp"
#include "ezgp/predict.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace ezgp {

/// y = f_i(x) * (g_j(x) + h_k(x)) on [0,1]^3 with levels i, j, k in {1,2,3}.
double testfun_ex4(const VectorXd& x, int i, int j, int k);

/// Six-term sum of f, g, h compositions over x in [0,1]^9. levels = (i1,i2,i3,j1,j2,j3,k1,k2,k3).
double testfun_ex5(const VectorXd& x, const VectorXi& levels);

/// Exponents / frequencies minus one, (r1, r2, r3), for group l and level s (both 1-based).
std::array<int, 3> ex5_orders(int l, int s);

/// n x p Latin hypercube on [0,1]: one point per stratum per column, uniform within stratum.
MatrixXd latin_hypercube(int n, int p, std::uint64_t seed);

/// Every level combination in lexicographic order (last factor fastest), repeated `replicates` times.
MatrixXi factorial_design(const std::vector<int>& levels, int replicates = 1);

/// 243-run, nine-factor, three-level regular fraction. Base factors A..E, generators
/// F = B+2D+2E, G = A+B+C+E, H = A+2B+2C+E, J = A+2B+C+D+E (mod 3). Levels are 1-based.
MatrixXi fractional_factorial_243();

double rmse(const VectorXd& pred, const VectorXd& actual);

enum class NseForm {
  PredictionMean,  // denominator sum (pred - mean(pred))^2
  ObservedMean,    // conventional: sum (actual - mean(actual))^2
};

/// 1 - sum (pred - actual)^2 / denominator.
double nse(const VectorXd& pred, const VectorXd& actual, NseForm form = NseForm::PredictionMean);

struct BenchData {
  Dataset train;
  std::vector<MixedInput> test;
  VectorXd test_y;
};

/// Train/test designs of one replication. Example 4: 81 / 1215 rows; example 5: 243 / 1215;
/// example 6: 19,683 / 100 with a single random level combination for the targets.
BenchData make_bench_data(int example, int rep, std::uint64_t seed);

std::vector<ModelKind> default_bench_models(int example);

struct BenchConfig {
  int example = 4;
  int reps = 10;
  std::vector<ModelKind> models;  // empty means default_bench_models(example)
  FitConfig fit;
  NseForm nse_form = NseForm::PredictionMean;
  int n_s = 7;   // example 6 only
  int threads = 1;  // cells run concurrently; results do not depend on it
};

struct BenchResult {
  int example = 0;
  ModelKind kind = ModelKind::EzGP;
  int rep = 0;
  double rmse = 0.0;
  double nse = 0.0;
  double seconds = 0.0;
  std::size_t train_size = 0;  // key-subset size for example 6
  std::size_t test_size = 0;
  bool ok = false;
  std::string error;
};

/// Label used in result tables: the kind name, or "lezgp" / "lezgp_ezgp" for example 6.
std::string bench_label(int example, ModelKind kind);

/// Results ordered by replication, then by model in the requested order.
std::vector<BenchResult> run_benchmark(const BenchConfig& cfg);

/// `example,model,rep,rmse,nse,seconds`. Seconds are written as 0 unless include_timing.
void write_results_csv(std::ostream& os, const std::vector<BenchResult>& results, bool include_timing = false);

struct ResultRow {
  int example = 0;
  std::string model;
  int rep = 0;
  double rmse = 0.0;
  double nse = 0.0;
  double seconds = 0.0;
};

std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);
std::vector<ResultRow> to_rows(const std::vector<BenchResult>& results);

struct ModelSummary {
  std::string model;
  int count = 0;
  double rmse_median = 0.0, rmse_mean = 0.0, rmse_sd = 0.0;
  double nse_median = 0.0, nse_mean = 0.0, nse_sd = 0.0;
};

/// Per-model statistics in order of first appearance. Rows with non-finite metrics are skipped.
std::vector<ModelSummary> summarize(const std::vector<ResultRow>& rows);
void write_summary(std::ostream& os, const std::vector<ModelSummary>& summary);

double median(std::vector<double> v);

}  // namespace ezgp
