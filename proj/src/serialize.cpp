#include "ezgp/serialize.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace ezgp {

using nlohmann::ordered_json;

namespace {

ordered_json vector_json(const VectorXd& v) {
  ordered_json a = ordered_json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

VectorXd vector_from(const ordered_json& a) {
  VectorXd v(static_cast<Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Index>(i)) = a[i].get<double>();
  return v;
}

}  // namespace

std::string serialize_model(const FittedModel& m) {
  ordered_json j;
  j["format_version"] = kModelFormatVersion;
  j["kind"] = to_string(m.kind);
  j["schema"] = {{"p", m.schema.p}, {"q", m.schema.q}, {"levels", m.schema.levels}};

  const ParameterLayout layout = make_layout(m.kind, m.schema);
  const VectorXd values = pack(m.params, m.schema);
  ordered_json params;
  params["mu"] = mean_of(m.params);
  ordered_json named = ordered_json::array();
  for (int i = 0; i < layout.dimension(); ++i) named.push_back({{"name", layout.names[i]}, {"value", values(i)}});
  params["covariance"] = named;
  j["parameters"] = params;

  j["nugget"] = m.nugget();
  j["seed"] = m.seed;
  j["objective"] = m.objective;

  ordered_json scaling = ordered_json::array();
  for (const auto& c : m.data.scaling)
    scaling.push_back({{"offset", c.offset}, {"scale", c.scale}, {"constant", c.constant}});
  j["x_scaling"] = scaling;
  j["y_scaling"] = {{"center", m.data.response.center}, {"scale", m.data.response.scale}};

  ordered_json X = ordered_json::array();
  ordered_json Z = ordered_json::array();
  for (Index i = 0; i < m.data.size(); ++i) {
    X.push_back(vector_json(m.data.X.row(i).transpose()));
    ordered_json z = ordered_json::array();
    for (Index h = 0; h < m.data.Z.cols(); ++h) z.push_back(m.data.Z(i, h));
    Z.push_back(z);
  }
  j["training"] = {{"x", X}, {"z", Z}, {"y", vector_json(m.data.y)}};

  ordered_json trace = ordered_json::array();
  for (const auto& t : m.trace)
    trace.push_back({{"start", t.index},
                     {"ok", t.ok},
                     {"initial_objective", std::isfinite(t.initial_objective) ? ordered_json(t.initial_objective)
                                                                              : ordered_json(nullptr)},
                     {"final_objective", t.ok ? ordered_json(t.final_objective) : ordered_json(nullptr)},
                     {"iterations", t.iterations},
                     {"evaluations", t.evaluations},
                     {"message", t.message}});
  j["trace"] = trace;
  return j.dump(2) + "\n";
}

FittedModel deserialize_model(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw ValidationError(std::string("model file: ") + e.what());
  }
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion)
      throw ValidationError("model file: unsupported format_version " + std::to_string(version));
    const ModelKind kind = parse_model_kind(j.at("kind").get<std::string>());
    const auto& js = j.at("schema");
    ProblemSchema schema(js.at("p").get<int>(), js.at("levels").get<std::vector<int>>());
    if (js.at("q").get<int>() != schema.q) throw ValidationError("model file: schema q disagrees with levels");
    schema.validate();

    const ParameterLayout layout = make_layout(kind, schema);
    const auto& cov = j.at("parameters").at("covariance");
    if (static_cast<int>(cov.size()) != layout.dimension())
      throw ValidationError("model file: expected " + std::to_string(layout.dimension()) + " covariance parameters");
    VectorXd values(layout.dimension());
    for (int i = 0; i < layout.dimension(); ++i) {
      if (cov[static_cast<std::size_t>(i)].at("name").get<std::string>() != layout.names[i])
        throw ValidationError("model file: parameter " + std::to_string(i + 1) + " should be " + layout.names[i]);
      values(i) = cov[static_cast<std::size_t>(i)].at("value").get<double>();
    }
    const ModelParams params = unpack(layout, values, j.at("parameters").at("mu").get<double>());

    Dataset d;
    d.schema = schema;
    const auto& tr = j.at("training");
    const auto& X = tr.at("x");
    const auto& Z = tr.at("z");
    d.y = vector_from(tr.at("y"));
    const auto n = static_cast<Index>(d.y.size());
    if (static_cast<Index>(X.size()) != n || static_cast<Index>(Z.size()) != n)
      throw ValidationError("model file: training arrays differ in length");
    d.X.resize(n, schema.p);
    d.Z.resize(n, schema.q);
    for (Index i = 0; i < n; ++i) {
      const auto& xr = X[static_cast<std::size_t>(i)];
      const auto& zr = Z[static_cast<std::size_t>(i)];
      if (static_cast<int>(xr.size()) != schema.p || static_cast<int>(zr.size()) != schema.q)
        throw ValidationError("model file: training row " + std::to_string(i + 1) + " has the wrong width");
      for (int k = 0; k < schema.p; ++k) d.X(i, k) = xr[static_cast<std::size_t>(k)].get<double>();
      for (int h = 0; h < schema.q; ++h) d.Z(i, h) = zr[static_cast<std::size_t>(h)].get<int>();
    }
    for (const auto& c : j.at("x_scaling"))
      d.scaling.push_back({c.at("offset").get<double>(), c.at("scale").get<double>(), c.at("constant").get<bool>()});
    d.response.center = j.at("y_scaling").at("center").get<double>();
    d.response.scale = j.at("y_scaling").at("scale").get<double>();

    FittedModel m = make_fitted_model(d, params);
    // make_fitted_model re-estimates mu; keep the stored value bit-for-bit.
    std::visit([&](auto& p) { p.mu = j.at("parameters").at("mu").get<double>(); }, m.params);
    m.weights = solve(m.chol, VectorXd(d.y - mean_of(m.params) * VectorXd::Ones(n)));
    m.seed = j.at("seed").get<std::uint64_t>();
    m.objective = j.at("objective").get<double>();
    for (const auto& t : j.at("trace")) {
      StartTrace s;
      s.index = t.at("start").get<int>();
      s.ok = t.at("ok").get<bool>();
      s.initial_objective =
          t.at("initial_objective").is_null() ? std::numeric_limits<double>::infinity() : t.at("initial_objective").get<double>();
      s.final_objective = t.at("final_objective").is_null() ? 0.0 : t.at("final_objective").get<double>();
      s.iterations = t.at("iterations").get<int>();
      s.evaluations = t.at("evaluations").get<int>();
      s.message = t.at("message").get<std::string>();
      m.trace.push_back(s);
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("model file: ") + e.what());
  }
}

void save_model(const std::filesystem::path& path, const FittedModel& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << serialize_model(m);
  if (!out) throw ValidationError("failed writing " + path.string());
}

FittedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_model(ss.str());
}

}  // namespace ezgp
