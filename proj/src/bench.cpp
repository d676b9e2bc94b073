#include "ezgp/bench.hpp"

#include "ezgp/lezgp.hpp"
#include "ezgp/random.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

namespace ezgp {

namespace {

void check_level(int v, const char* what) {
  if (v < 1 || v > 3) throw ValidationError(std::string(what) + ": level " + std::to_string(v) + " outside 1..3");
}

// f_s^(l), g_s^(l), h_s^(l) of the nine-factor test function.
double f5(int l, int s, double a, double b, double c) {
  const auto r = ex5_orders(l, s);
  return std::pow(a, r[0] + 1) + std::pow(b, r[1] + 1) + std::pow(c, r[2] + 1);
}

double g5(int l, int s, double a, double b, double c) {
  const auto r = ex5_orders(l, s);
  return std::cos((r[1] + 1) * a) + std::cos((r[0] + 1) * b) + std::cos((r[2] + 1) * c);
}

double h5(int l, int s, double a, double b, double c) {
  const auto r = ex5_orders(l, s);
  return std::sin((r[2] + 1) * a) + std::sin((r[1] + 1) * b) + std::sin((r[0] + 1) * c);
}

}  // namespace

double testfun_ex4(const VectorXd& x, int i, int j, int k) {
  if (x.size() != 3) throw ValidationError("testfun_ex4: x must have 3 entries");
  check_level(i, "testfun_ex4");
  check_level(j, "testfun_ex4");
  check_level(k, "testfun_ex4");
  const double x1 = x(0), x2 = x(1), x3 = x(2);
  double f = 0.0;
  switch (i) {
    case 1: f = x1 + x2 * x2 + x3 * x3 * x3; break;
    case 2: f = x1 * x1 + x2 + x3 * x3 * x3; break;
    default: f = x1 * x1 * x1 + x2 * x2 + x3; break;
  }
  double g = 0.0;
  switch (j) {
    case 1: g = std::cos(x1) + std::cos(2 * x2) + std::cos(3 * x3); break;
    case 2: g = std::cos(3 * x1) + std::cos(2 * x2) + std::cos(x3); break;
    default: g = std::cos(2 * x1) + std::cos(x2) + std::cos(3 * x3); break;
  }
  double h = 0.0;
  switch (k) {
    case 1: h = std::sin(x1) + std::sin(2 * x2) + std::sin(3 * x3); break;
    case 2: h = std::sin(3 * x1) + std::sin(2 * x2) + std::sin(x3); break;
    default: h = std::sin(2 * x1) + std::sin(x2) + std::sin(3 * x3); break;
  }
  return f * (g + h);
}

std::array<int, 3> ex5_orders(int l, int s) {
  return {(s + l + 1) % 3, (s + l + 2) % 3, (s + l) % 3};
}

double testfun_ex5(const VectorXd& x, const VectorXi& z) {
  if (x.size() != 9) throw ValidationError("testfun_ex5: x must have 9 entries");
  if (z.size() != 9) throw ValidationError("testfun_ex5: levels must have 9 entries");
  for (Index h = 0; h < 9; ++h) check_level(z(h), "testfun_ex5");
  const int i1 = z(0), i2 = z(1), i3 = z(2), j1 = z(3), j2 = z(4), j3 = z(5), k1 = z(6), k2 = z(7), k3 = z(8);
  const double* v = x.data();
  return f5(1, i1, v[0], v[1], v[2]) * g5(1, j1, v[0], v[1], v[2]) +
         f5(2, i2, v[3], v[4], v[5]) * g5(2, j2, v[3], v[4], v[5]) +
         f5(3, i3, v[6], v[7], v[8]) * g5(3, j3, v[6], v[7], v[8]) +
         f5(1, i1, v[6], v[7], v[8]) * h5(1, k1, v[6], v[7], v[8]) +
         f5(2, i2, v[3], v[4], v[5]) * h5(2, k2, v[3], v[4], v[5]) +
         f5(3, i3, v[0], v[1], v[2]) * h5(3, k3, v[0], v[1], v[2]);
}

MatrixXd latin_hypercube(int n, int p, std::uint64_t seed) {
  if (n < 1) throw ValidationError("latin_hypercube: n must be at least 1");
  if (p < 0) throw ValidationError("latin_hypercube: p must be nonnegative");
  Rng rng(seed);
  MatrixXd D(n, p);
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int k = 0; k < p; ++k) {
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    for (int i = 0; i < n; ++i) D(i, k) = (perm[static_cast<std::size_t>(i)] + rng.uniform()) / n;
  }
  return D;
}

MatrixXi factorial_design(const std::vector<int>& levels, int replicates) {
  if (replicates < 0) throw ValidationError("factorial_design: replicates must be nonnegative");
  double rows = replicates;
  for (int m : levels) {
    if (m < 2) throw ValidationError("factorial_design: every factor needs at least 2 levels");
    rows *= m;
  }
  if (rows > 1e6) throw ValidationError("factorial_design: more than 1e6 rows requested");
  const auto q = static_cast<Index>(levels.size());
  Index cells = 1;
  for (int m : levels) cells *= m;
  MatrixXi D(cells * replicates, q);
  for (Index c = 0; c < cells; ++c) {
    Index rem = c;
    for (Index h = q - 1; h >= 0; --h) {
      D(c, h) = static_cast<int>(rem % levels[static_cast<std::size_t>(h)]) + 1;
      rem /= levels[static_cast<std::size_t>(h)];
    }
  }
  for (int r = 1; r < replicates; ++r) D.middleRows(r * cells, cells) = D.topRows(cells);
  return D;
}

MatrixXi fractional_factorial_243() {
  const MatrixXi base = factorial_design({3, 3, 3, 3, 3});
  // Coefficients on (A,B,C,D,E) of the generated columns F, G, H, J.
  const int gen[4][5] = {{0, 1, 0, 2, 2}, {1, 1, 1, 0, 1}, {1, 2, 2, 0, 1}, {1, 2, 1, 1, 1}};
  MatrixXi D(243, 9);
  D.leftCols(5) = base;
  for (Index r = 0; r < 243; ++r) {
    for (int g = 0; g < 4; ++g) {
      int s = 0;
      for (int c = 0; c < 5; ++c) s += gen[g][c] * (base(r, c) - 1);
      D(r, 5 + g) = s % 3 + 1;
    }
  }
  return D;
}

double rmse(const VectorXd& pred, const VectorXd& actual) {
  if (pred.size() != actual.size()) throw ValidationError("rmse: length mismatch");
  if (pred.size() == 0) throw ValidationError("rmse: empty input");
  return std::sqrt((pred - actual).squaredNorm() / static_cast<double>(pred.size()));
}

double nse(const VectorXd& pred, const VectorXd& actual, NseForm form) {
  if (pred.size() != actual.size()) throw ValidationError("nse: length mismatch");
  if (pred.size() < 2) throw ValidationError("nse: at least 2 points required");
  const VectorXd& ref = form == NseForm::PredictionMean ? pred : actual;
  const double denom = (ref.array() - ref.mean()).square().sum();
  if (!(denom > 0.0))
    throw ValidationError(form == NseForm::PredictionMean ? "nse: all predictions are equal"
                                                          : "nse: all actual values are equal");
  return 1.0 - (pred - actual).squaredNorm() / denom;
}

// ---------------------------------------------------------------------------
// Replication data

namespace {

enum Stream : std::uint64_t { TrainX = 1, TestX = 2, TestZ = 3 };

std::uint64_t stream_seed(std::uint64_t seed, int example, int rep, std::uint64_t stream) {
  return derive_seed({seed, static_cast<std::uint64_t>(example), static_cast<std::uint64_t>(rep), stream});
}

double evaluate(int example, const VectorXd& x, const VectorXi& z) {
  return example == 4 ? testfun_ex4(x, z(0), z(1), z(2)) : testfun_ex5(x, z);
}

Dataset make_dataset(int example, const MatrixXd& X, const MatrixXi& Z) {
  Dataset d;
  d.schema = ProblemSchema(static_cast<int>(X.cols()), std::vector<int>(static_cast<std::size_t>(Z.cols()), 3));
  d.X = X;
  d.Z = Z;
  d.y.resize(X.rows());
  for (Index i = 0; i < X.rows(); ++i) d.y(i) = evaluate(example, X.row(i).transpose(), Z.row(i).transpose());
  return d;
}

VectorXi decode_base3(Index code, int q) {
  VectorXi z(q);
  for (int h = q - 1; h >= 0; --h) {
    z(h) = static_cast<int>(code % 3) + 1;
    code /= 3;
  }
  return z;
}

}  // namespace

BenchData make_bench_data(int example, int rep, std::uint64_t seed) {
  BenchData b;
  MatrixXi train_z;
  MatrixXi test_z;
  int p = 9;
  int n_test = 1215;
  switch (example) {
    case 4: {
      p = 3;
      train_z = factorial_design({3, 3, 3}, 3);
      test_z = factorial_design({3, 3, 3}, 45);
      break;
    }
    case 5: {
      train_z = fractional_factorial_243();
      Rng rng(stream_seed(seed, example, rep, TestZ));
      std::vector<Index> codes(19683);
      std::iota(codes.begin(), codes.end(), Index{0});
      // Partial Fisher-Yates: the first n_test entries are a uniform sample without replacement.
      for (int i = 0; i < n_test; ++i)
        std::swap(codes[static_cast<std::size_t>(i)],
                  codes[static_cast<std::size_t>(i) + rng.below(static_cast<std::uint64_t>(19683 - i))]);
      test_z.resize(n_test, 9);
      for (int i = 0; i < n_test; ++i) test_z.row(i) = decode_base3(codes[static_cast<std::size_t>(i)], 9).transpose();
      break;
    }
    case 6: {
      n_test = 100;
      train_z = factorial_design(std::vector<int>(9, 3));
      Rng rng(stream_seed(seed, example, rep, TestZ));
      const VectorXi z = decode_base3(static_cast<Index>(rng.below(19683)), 9);
      test_z = z.transpose().replicate(n_test, 1);
      break;
    }
    default: throw ValidationError("benchmark: example must be 4, 5 or 6, got " + std::to_string(example));
  }
  const MatrixXd train_x = latin_hypercube(static_cast<int>(train_z.rows()), p, stream_seed(seed, example, rep, TrainX));
  const MatrixXd test_x = latin_hypercube(n_test, p, stream_seed(seed, example, rep, TestX));
  b.train = make_dataset(example, train_x, train_z);
  const Dataset test = make_dataset(example, test_x, test_z);
  b.test_y = test.y;
  for (Index i = 0; i < test.size(); ++i) b.test.push_back(test.input(i));
  return b;
}

std::vector<ModelKind> default_bench_models(int example) {
  switch (example) {
    case 4: return all_model_kinds();
    case 5: {
      std::vector<ModelKind> v;
      for (ModelKind k : all_model_kinds())
        if (k != ModelKind::EzGP) v.push_back(k);
      return v;
    }
    case 6: return {ModelKind::EEzGP};
    default: throw ValidationError("benchmark: example must be 4, 5 or 6, got " + std::to_string(example));
  }
}

std::string bench_label(int example, ModelKind kind) {
  if (example != 6) return to_string(kind);
  return kind == ModelKind::EEzGP ? "lezgp" : "lezgp_" + to_string(kind);
}

std::vector<BenchResult> run_benchmark(const BenchConfig& cfg) {
  if (cfg.example < 4 || cfg.example > 6)
    throw ValidationError("benchmark: example must be 4, 5 or 6, got " + std::to_string(cfg.example));
  if (cfg.reps < 0) throw ValidationError("benchmark: reps must be nonnegative");
  cfg.fit.validate();
  const std::vector<ModelKind> models = cfg.models.empty() ? default_bench_models(cfg.example) : cfg.models;
  if (cfg.example == 6)
    for (ModelKind k : models)
      if (k != ModelKind::EzGP && k != ModelKind::EEzGP)
        throw ValidationError("benchmark: example 6 runs the localized method with ezgp or eezgp only");

  const int reps = cfg.reps;
  const auto nm = static_cast<int>(models.size());
  std::vector<BenchResult> results(static_cast<std::size_t>(reps * nm));
  std::vector<BenchData> data(static_cast<std::size_t>(reps));
  for (int r = 0; r < reps; ++r) data[static_cast<std::size_t>(r)] = make_bench_data(cfg.example, r, cfg.fit.seed);

  auto run_cell = [&](int cell) {
    const int r = cell / nm;
    const ModelKind kind = models[static_cast<std::size_t>(cell % nm)];
    const BenchData& bd = data[static_cast<std::size_t>(r)];
    BenchResult& res = results[static_cast<std::size_t>(cell)];
    res.example = cfg.example;
    res.kind = kind;
    res.rep = r;
    res.train_size = static_cast<std::size_t>(bd.train.size());
    res.test_size = bd.test.size();
    FitConfig fc = cfg.fit;
    fc.seed = derive_seed({cfg.fit.seed, static_cast<std::uint64_t>(cfg.example), static_cast<std::uint64_t>(r),
                           static_cast<std::uint64_t>(kind)});
    fc.threads = 1;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      std::vector<PredictionResult> pred;
      if (cfg.example == 6) {
        LezgpOutput out = lezgp_run(bd.train, bd.test, cfg.n_s, kind, fc);
        res.train_size = out.plan.groups.empty() ? 0 : out.plan.groups.front().subset.size();
        pred = std::move(out.predictions);
      } else {
        const FittedModel m = fit(bd.train, kind, fc);
        pred = predict_batch(m, bd.test);
      }
      VectorXd mean(static_cast<Index>(pred.size()));
      for (std::size_t i = 0; i < pred.size(); ++i) mean(static_cast<Index>(i)) = pred[i].mean;
      res.rmse = rmse(mean, bd.test_y);
      res.nse = nse(mean, bd.test_y, cfg.nse_form);
      res.ok = true;
    } catch (const std::exception& e) {
      res.rmse = std::numeric_limits<double>::quiet_NaN();
      res.nse = std::numeric_limits<double>::quiet_NaN();
      res.error = e.what();
    }
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  const int cells = reps * nm;
  int threads = cfg.threads == 0 ? static_cast<int>(std::thread::hardware_concurrency()) : cfg.threads;
  threads = std::clamp(threads, 1, std::max(cells, 1));
  if (threads == 1) {
    for (int c = 0; c < cells; ++c) run_cell(c);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&]() {
        for (int c = next++; c < cells; c = next++) run_cell(c);
      });
    for (auto& th : pool) th.join();
  }
  return results;
}

// ---------------------------------------------------------------------------
// Tables

std::vector<ResultRow> to_rows(const std::vector<BenchResult>& results) {
  std::vector<ResultRow> rows;
  for (const auto& r : results) rows.push_back({r.example, bench_label(r.example, r.kind), r.rep, r.rmse, r.nse, r.seconds});
  return rows;
}

void write_results_csv(std::ostream& os, const std::vector<BenchResult>& results, bool include_timing) {
  os << "example,model,rep,rmse,nse,seconds\n";
  for (const auto& r : to_rows(results))
    os << r.example << ',' << r.model << ',' << r.rep << ',' << format_double(r.rmse) << ','
       << format_double(r.nse) << ',' << (include_timing ? format_double(r.seconds) : std::string("0")) << '\n';
}

std::vector<ResultRow> read_results_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::string line;
  std::vector<ResultRow> rows;
  int lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != "example,model,rep,rmse,nse,seconds")
        throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                              ": expected header example,model,rep,rmse,nse,seconds");
      header = true;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 6)
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": expected 6 fields");
    try {
      rows.push_back({std::stoi(f[0]), f[1], std::stoi(f[2]), std::stod(f[3]), std::stod(f[4]), std::stod(f[5])});
    } catch (const std::exception&) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  if (!header) throw ValidationError(path.string() + ": missing header");
  return rows;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace {

void describe(const std::vector<double>& v, double& med, double& mean, double& sd) {
  med = median(v);
  mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
}

}  // namespace

std::vector<ModelSummary> summarize(const std::vector<ResultRow>& rows) {
  std::vector<std::string> order;
  for (const auto& r : rows)
    if (std::find(order.begin(), order.end(), r.model) == order.end()) order.push_back(r.model);
  std::vector<ModelSummary> out;
  for (const auto& name : order) {
    std::vector<double> e, s;
    for (const auto& r : rows)
      if (r.model == name && std::isfinite(r.rmse) && std::isfinite(r.nse)) {
        e.push_back(r.rmse);
        s.push_back(r.nse);
      }
    ModelSummary m;
    m.model = name;
    m.count = static_cast<int>(e.size());
    if (!e.empty()) {
      describe(e, m.rmse_median, m.rmse_mean, m.rmse_sd);
      describe(s, m.nse_median, m.nse_mean, m.nse_sd);
    } else {
      m.rmse_median = m.rmse_mean = m.rmse_sd = std::numeric_limits<double>::quiet_NaN();
      m.nse_median = m.nse_mean = m.nse_sd = std::numeric_limits<double>::quiet_NaN();
    }
    out.push_back(m);
  }
  return out;
}

void write_summary(std::ostream& os, const std::vector<ModelSummary>& summary) {
  os << std::left << std::setw(12) << "model" << std::right << std::setw(4) << "n" << std::setw(12) << "rmse_med"
     << std::setw(12) << "rmse_mean" << std::setw(12) << "rmse_sd" << std::setw(12) << "nse_med" << std::setw(12)
     << "nse_mean" << std::setw(12) << "nse_sd" << '\n';
  os << std::fixed << std::setprecision(5);
  for (const auto& m : summary)
    os << std::left << std::setw(12) << m.model << std::right << std::setw(4) << m.count << std::setw(12)
       << m.rmse_median << std::setw(12) << m.rmse_mean << std::setw(12) << m.rmse_sd << std::setw(12)
       << m.nse_median << std::setw(12) << m.nse_mean << std::setw(12) << m.nse_sd << '\n';
  os << std::defaultfloat;
}

}  // namespace ezgp
