#include "cli.hpp"

#include "ezgp/bench.hpp"
#include "ezgp/lezgp.hpp"
#include "ezgp/predict.hpp"
#include "ezgp/random.hpp"
#include "ezgp/serialize.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

namespace ezgp {

namespace {

class GradientCheckFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FitFlags {
  int starts = 8;
  int max_iterations = 200;
  double tolerance = 1e-8;
  std::uint64_t seed = 0;
  int threads = 1;

  FitConfig config() const {
    FitConfig c;
    c.starts = starts;
    c.max_iterations = max_iterations;
    c.objective_tolerance = tolerance;
    c.seed = seed;
    c.threads = threads;
    return c;
  }
};

void add_fit_flags(CLI::App* cmd, FitFlags& f) {
  cmd->add_option("--starts", f.starts, "Optimizer starts")->envname("EZGP_STARTS")->capture_default_str();
  cmd->add_option("--max-iter", f.max_iterations, "Iterations per start")->capture_default_str();
  cmd->add_option("--tol", f.tolerance, "Relative objective tolerance")->capture_default_str();
  cmd->add_option("--seed", f.seed, "Random seed")->envname("EZGP_SEED")->capture_default_str();
  cmd->add_option("--threads", f.threads, "Worker threads, 0 for all cores")
      ->envname("EZGP_THREADS")
      ->capture_default_str();
}

std::string elapsed(std::chrono::steady_clock::time_point t0) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2)
    << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << "s";
  return s.str();
}

ProblemSchema resolve_schema(const std::string& flag, const std::string& path, std::ostream& err) {
  if (flag.empty()) return infer_schema(path);
  const ProblemSchema s = ProblemSchema::parse(flag);
  ProblemSchema inferred;
  bool have = true;
  try {
    inferred = infer_schema(path);
  } catch (const ValidationError&) {
    have = false;
  }
  if (have && !(inferred == s))
    err << "warning: --schema " << s.to_string() << " differs from the schema inferred from " << path << " ("
        << inferred.to_string() << "); using the flag\n";
  return s;
}

void check_writable(const std::string& path) {
  if (path.empty() || path == "-") return;
  const std::filesystem::path p(path);
  const auto parent = p.parent_path();
  if (!parent.empty() && !std::filesystem::is_directory(parent))
    throw ValidationError("output directory " + parent.string() + " does not exist");
}

bool is_blank_file(const std::string& path) {
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    const auto pos = line.find_first_not_of(" \t\r");
    if (pos != std::string::npos && line[pos] != '#') return false;
  }
  return true;
}

// Writes to the file, or to `out` when the path is empty or "-".
class Sink {
 public:
  Sink(const std::string& path, std::ostream& out) {
    if (path.empty() || path == "-") {
      os_ = &out;
    } else {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
      if (!*file_) throw ValidationError("cannot write " + path);
      os_ = file_.get();
    }
  }
  std::ostream& operator*() { return *os_; }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* os_ = nullptr;
};

void write_predictions(std::ostream& os, const ProblemSchema& s, const std::vector<MixedInput>& targets,
                       const std::vector<PredictionResult>& pred) {
  for (int k = 0; k < s.p; ++k) os << 'x' << k + 1 << ',';
  for (int h = 0; h < s.q; ++h) os << 'z' << h + 1 << ',';
  os << "mean,mse\n";
  for (std::size_t i = 0; i < targets.size(); ++i) {
    for (int k = 0; k < s.p; ++k) os << format_double(targets[i].x(k)) << ',';
    for (int h = 0; h < s.q; ++h) os << targets[i].z(h) << ',';
    os << format_double(pred[i].mean) << ',' << format_double(pred[i].mse) << '\n';
  }
}

void warn_extrapolation(const std::vector<PredictionResult>& pred, std::ostream& err) {
  std::size_t n = 0;
  for (const auto& r : pred) n += r.extrapolated ? 1 : 0;
  if (n) err << "warning: " << n << " target(s) lie outside the training range of the quantitative factors\n";
}

std::vector<ModelKind> parse_kind_list(const std::string& text) {
  std::vector<ModelKind> kinds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) kinds.push_back(parse_model_kind(item));
  return kinds;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError("cannot parse '" + text + "' as a comma-separated integer list");
    }
  }
  return v;
}

// ---------------------------------------------------------------------------
// Gradient check

struct FamilyReport {
  double worst = 0.0;
  int coordinate = -1;
};

int gradcheck(ModelKind kind, int p, const std::vector<int>& levels, int n, std::uint64_t seed, double corrupt,
              std::ostream& out) {
  const ProblemSchema s(p, levels);
  s.validate();
  if (n < 2) throw ValidationError("gradcheck: n must be at least 2");
  Rng rng(derive_seed({seed, 0x6772}));
  Dataset d;
  d.schema = s;
  d.X.resize(n, p);
  d.Z.resize(n, s.q);
  d.y.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < p; ++k) d.X(i, k) = rng.uniform();
    for (int h = 0; h < s.q; ++h) d.Z(i, h) = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(levels[h])));
    d.y(i) = rng.uniform(-1.0, 1.0);
  }
  const ProfileLikelihood pl(kind, d);
  const ParameterLayout& layout = pl.layout();
  FitConfig cfg;
  const double var_y = sample_variance(d.y);
  const VectorXd u =
      random_start(layout, var_y, cfg, make_bounds(layout, var_y, cfg), derive_seed({seed, 0x7061}));

  set_gradient_corruption(corrupt);
  VectorXd g;
  try {
    pl.value_and_gradient(u, g);
  } catch (...) {
    set_gradient_corruption(0.0);
    throw;
  }
  set_gradient_corruption(0.0);

  constexpr double h = 1e-6;
  std::map<std::string, FamilyReport> families;
  std::vector<std::string> order;
  int worst_index = -1;
  double worst = 0.0;
  for (int i = 0; i < layout.dimension(); ++i) {
    VectorXd up = u, dn = u;
    up(i) += h;
    dn(i) -= h;
    const double fd = (pl.value(up) - pl.value(dn)) / (2.0 * h);
    const double diff = std::abs(g(i) - fd);
    const double scale = std::max(std::abs(g(i)), std::abs(fd));
    const double rel = scale > 0.0 ? diff / scale : 0.0;
    const double excess = diff <= 1e-8 ? 0.0 : rel;
    const std::string& fam = layout.families[i];
    if (!families.count(fam)) order.push_back(fam);
    auto& r = families[fam];
    if (r.coordinate < 0 || rel > r.worst) {
      r.worst = rel;
      r.coordinate = i;
    }
    if (worst_index < 0 || excess > worst) {
      worst = excess;
      worst_index = i;
    }
  }
  out << "gradcheck " << to_string(kind) << " schema " << s.to_string() << " n " << n << " seed " << seed << '\n';
  for (const auto& fam : order) {
    const auto& r = families[fam];
    out << "  " << std::left << std::setw(10) << fam << " max relative discrepancy " << std::scientific
        << std::setprecision(3) << r.worst << std::defaultfloat << "  (" << layout.names[r.coordinate] << ")\n";
  }
  if (worst > 1e-5) {
    std::ostringstream msg;
    msg << "gradient check failed: worst coordinate " << layout.names[worst_index] << " relative discrepancy "
        << std::scientific << std::setprecision(3) << worst;
    throw GradientCheckFailure(msg.str());
  }
  out << "pass\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Demonstration of the multiplicative-indicator kernel

void demo_phistar(std::ostream& out) {
  const double a = 0.2, b = 0.7, c = 0.5, dd = 0.1;
  const MixedInput w1{(VectorXd(2) << a, b).finished(), (VectorXi(2) << 1, 2).finished()};
  const MixedInput w2{(VectorXd(2) << c, dd).finished(), (VectorXi(2) << 1, 2).finished()};
  const MixedInput w3{(VectorXd(2) << c, dd).finished(), (VectorXi(2) << 2, 1).finished()};
  const ProblemSchema s(2, {2, 2});
  const EzgpParams ez = EzgpParams::uniform(s, 1.0, 1.0);
  PhiStarParams ps;
  ps.sigma2 = 1.0;
  ps.theta0 = VectorXd::Ones(2);
  ps.Theta = {MatrixXd::Ones(2, 2), MatrixXd::Ones(2, 2)};
  const double total = ez.total_variance();
  out << "inputs: w1 = (" << a << ", " << b << " | 1, 2), w2 = (" << c << ", " << dd << " | 1, 2), w3 = (" << c
      << ", " << dd << " | 2, 1)\n";
  out << "all variance and correlation parameters set to 1\n";
  out << std::fixed << std::setprecision(6);
  out << "ezgp      cor(w1,w2) = " << ezgp_cov(w1, w2, ez) / total << "   cor(w1,w3) = " << ezgp_cov(w1, w3, ez) / total
      << '\n';
  out << "phi-star  cor(w1,w2) = " << phi_star(w1, w2, ps) / ps.sigma2 << "   cor(w1,w3) = "
      << phi_star(w1, w3, ps) / ps.sigma2 << '\n';
  out << std::defaultfloat;
  out << "w2 shares every level with w1 and w3 shares none; the multiplicative form ranks w3 closer\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gaussian-process emulation with mixed quantitative and qualitative inputs", "ezgp"};
  app.set_version_flag("--version", "ezgp 1.0.0");
  bool demo = false;
  app.add_flag("--demo-phistar", demo, "Print the multiplicative-indicator correlation demonstration and exit");

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "Fit a model and write it as JSON");
  std::string train, schema_flag, kind_name = "ezgp", model_out;
  bool standardize = false;
  FitFlags fit_flags;
  fit_cmd->add_option("--train", train, "Training CSV x1..xp,z1..zq,y")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--kind", kind_name, "Model kind")->envname("EZGP_KIND")->capture_default_str();
  fit_cmd->add_option("--schema", schema_flag, "p,q,m1,...,mq (inferred from the data when omitted)");
  fit_cmd->add_option("--out", model_out, "Model JSON path")->required();
  fit_cmd->add_flag("--standardize", standardize, "Center and scale the response before fitting");
  add_fit_flags(fit_cmd, fit_flags);

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "Predict at target inputs with a fitted model");
  std::string model_in, targets, pred_out;
  predict_cmd->add_option("--model", model_in, "Model JSON")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--targets", targets, "Target CSV x1..xp,z1..zq")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--out", pred_out, "Output CSV (standard output when omitted)");

  // lezgp
  auto* lezgp_cmd = app.add_subcommand("lezgp", "Localized prediction on key subsets");
  std::string lz_train, lz_targets, lz_schema, lz_kind = "eezgp", lz_out;
  int n_s = -1;
  FitFlags lz_flags;
  lezgp_cmd->add_option("--train", lz_train, "Training CSV")->required()->check(CLI::ExistingFile);
  lezgp_cmd->add_option("--targets", lz_targets, "Target CSV")->required()->check(CLI::ExistingFile);
  lezgp_cmd->add_option("--ns", n_s, "Tuning parameter n_s (recommended per group when omitted)");
  lezgp_cmd->add_option("--kind", lz_kind, "ezgp or eezgp")->capture_default_str();
  lezgp_cmd->add_option("--schema", lz_schema, "p,q,m1,...,mq");
  lezgp_cmd->add_option("--out", lz_out, "Output CSV (standard output when omitted)");
  add_fit_flags(lezgp_cmd, lz_flags);

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Replicate the numerical examples");
  int example = 4, reps = 10, bench_ns = 7;
  std::string models, bench_out, nse_form = "prediction";
  bool timing = false;
  FitFlags bench_flags;
  bench_cmd->add_option("--example", example, "4, 5 or 6")->required();
  bench_cmd->add_option("--reps", reps, "Replications")->capture_default_str();
  bench_cmd->add_option("--models", models, "Comma-separated model kinds (default depends on the example)");
  bench_cmd->add_option("--ns", bench_ns, "n_s for example 6")->capture_default_str();
  bench_cmd->add_option("--out", bench_out, "Results CSV (standard output when omitted)");
  bench_cmd->add_option("--nse", nse_form, "NSE denominator: mean of the predictions or of the observations")
      ->check(CLI::IsMember({"prediction", "observed"}))
      ->capture_default_str();
  bench_cmd->add_flag("--timing", timing, "Record fit seconds (otherwise written as 0)");
  add_fit_flags(bench_cmd, bench_flags);

  // summary
  auto* summary_cmd = app.add_subcommand("summary", "Per-model median/mean/sd of a results CSV");
  std::string results;
  summary_cmd->add_option("--results", results, "Results CSV")->required()->check(CLI::ExistingFile);

  // gradcheck
  auto* grad_cmd = app.add_subcommand("gradcheck", "Compare analytical and finite-difference gradients");
  std::string gc_kind = "ezgp", gc_levels = "2,2";
  int gc_p = 2, gc_q = 0, gc_n = 6;
  std::uint64_t gc_seed = 0;
  double corrupt = 0.0;
  grad_cmd->add_option("--kind", gc_kind, "Model kind")->capture_default_str();
  grad_cmd->add_option("--p", gc_p, "Quantitative factors")->capture_default_str();
  grad_cmd->add_option("--q", gc_q, "Qualitative factors (a single --m value is repeated q times)");
  grad_cmd->add_option("--m", gc_levels, "Level counts m1,...,mq")->capture_default_str();
  grad_cmd->add_option("--n", gc_n, "Runs")->capture_default_str();
  grad_cmd->add_option("--seed", gc_seed, "Random seed")->envname("EZGP_SEED")->capture_default_str();
  grad_cmd->add_option("--corrupt", corrupt)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (demo) {
      demo_phistar(out);
      return kExitOk;
    }

    if (*fit_cmd) {
      check_writable(model_out);
      const ModelKind kind = parse_model_kind(kind_name);
      const ProblemSchema s = resolve_schema(schema_flag, train, err);
      Dataset d = load_dataset(train, s);
      if (standardize) d = standardize_response(d);
      const auto t0 = std::chrono::steady_clock::now();
      const FittedModel m = fit(d, kind, fit_flags.config());
      save_model(model_out, m);
      err << "fit " << to_string(kind) << ": n=" << d.size() << " objective=" << format_double(m.objective)
          << " nugget=" << m.nugget() << " parameters=" << parameter_count(kind, s) << " ("
          << covariance_parameter_count(kind, s) << " optimized) time=" << elapsed(t0) << '\n';
      for (int k : constant_columns(m.data))
        err << "warning: quantitative column x" << k + 1 << " is constant\n";
      return kExitOk;
    }

    if (*predict_cmd) {
      check_writable(pred_out);
      const FittedModel m = load_model(model_in);
      std::vector<MixedInput> ws;
      if (!is_blank_file(targets)) ws = load_inputs(targets, m.schema);
      const auto pred = predict_batch(m, ws);
      Sink sink(pred_out, out);
      if (ws.empty() && is_blank_file(targets)) return kExitOk;
      write_predictions(*sink, m.schema, ws, pred);
      warn_extrapolation(pred, err);
      return kExitOk;
    }

    if (*lezgp_cmd) {
      check_writable(lz_out);
      const ModelKind kind = parse_model_kind(lz_kind);
      const ProblemSchema s = resolve_schema(lz_schema, lz_train, err);
      if (lezgp_cmd->count("--ns") && (n_s < 0 || n_s > s.q))
        throw ValidationError("--ns " + std::to_string(n_s) + " outside [0, " + std::to_string(s.q) + "]");
      const Dataset d = load_dataset(lz_train, s);
      const auto ws = load_inputs(lz_targets, s);
      const auto t0 = std::chrono::steady_clock::now();
      const LezgpOutput res = lezgp_run(d, ws, n_s, kind, lz_flags.config());
      for (const auto& g : res.plan.groups)
        err << "group " << format_levels(g.z) << ": n_s=" << g.n_s << ", |K_s|=" << g.subset.size()
            << ", targets=" << g.targets.size() << '\n';
      err << "lezgp " << to_string(kind) << ": " << res.plan.groups.size() << " group(s), time=" << elapsed(t0)
          << '\n';
      Sink sink(lz_out, out);
      write_predictions(*sink, s, ws, res.predictions);
      warn_extrapolation(res.predictions, err);
      return kExitOk;
    }

    if (*bench_cmd) {
      check_writable(bench_out);
      BenchConfig cfg;
      cfg.example = example;
      cfg.reps = reps;
      cfg.models = parse_kind_list(models);
      cfg.fit = bench_flags.config();
      cfg.threads = bench_flags.threads;
      cfg.n_s = bench_ns;
      cfg.nse_form = nse_form == "observed" ? NseForm::ObservedMean : NseForm::PredictionMean;
      const auto t0 = std::chrono::steady_clock::now();
      const auto res = run_benchmark(cfg);
      for (const auto& r : res)
        if (!r.ok)
          err << "warning: example " << r.example << " " << bench_label(r.example, r.kind) << " rep " << r.rep
              << " failed: " << r.error << '\n';
      {
        Sink sink(bench_out, out);
        write_results_csv(*sink, res, timing);
      }
      const bool to_file = !(bench_out.empty() || bench_out == "-");
      write_summary(to_file ? out : err, summarize(to_rows(res)));
      err << "bench example " << example << ": " << res.size() << " cell(s), time=" << elapsed(t0) << '\n';
      return kExitOk;
    }

    if (*summary_cmd) {
      write_summary(out, summarize(read_results_csv(results)));
      return kExitOk;
    }

    if (*grad_cmd) {
      std::vector<int> levels = parse_int_list(gc_levels);
      if (grad_cmd->count("--q")) {
        if (levels.size() == 1 && gc_q >= 1) levels.assign(static_cast<std::size_t>(gc_q), levels[0]);
        if (static_cast<int>(levels.size()) != gc_q)
          throw ValidationError("gradcheck: --q " + std::to_string(gc_q) + " does not match --m " + gc_levels);
      }
      return gradcheck(parse_model_kind(gc_kind), gc_p, levels, gc_n, gc_seed, corrupt, out);
    }

    err << app.help();
    return kExitValidation;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const EmptySubsetError& e) {
    err << "error: " << e.what() << '\n';
    return kExitEmptySubset;
  } catch (const GuidanceError& e) {
    err << "error: " << e.what() << '\n';
    return kExitEmptySubset;
  } catch (const FitError& e) {
    err << "error: " << e.what() << '\n';
    return kExitFit;
  } catch (const NotPositiveDefiniteError& e) {
    err << "error: " << e.what() << '\n';
    return kExitFit;
  } catch (const GradientCheckFailure& e) {
    err << "error: " << e.what() << '\n';
    return kExitGradient;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}

}  // namespace ezgp
