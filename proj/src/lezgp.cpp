#include "ezgp/lezgp.hpp"

#include <cstdlib>
#include <map>
#include <sstream>

namespace ezgp {

int count_matching_levels(const VectorXi& z, const VectorXi& z_star) {
  if (z.size() != z_star.size()) throw ValidationError("count_matching_levels: level vectors differ in length");
  return static_cast<int>((z.array() == z_star.array()).count());
}

std::string format_levels(const VectorXi& z) {
  std::ostringstream s;
  s << '(';
  for (Index h = 0; h < z.size(); ++h) s << (h ? "," : "") << z(h);
  s << ')';
  return s.str();
}

namespace {

void check_ns(int n_s, int q) {
  if (n_s < 0 || n_s > q)
    throw ValidationError("n_s = " + std::to_string(n_s) + " outside [0, " + std::to_string(q) + "]");
}

}  // namespace

std::vector<Index> key_subset_rows(const Dataset& d, const VectorXi& z_star, int n_s) {
  check_ns(n_s, d.schema.q);
  std::vector<Index> rows;
  for (Index i = 0; i < d.size(); ++i)
    if (count_matching_levels(d.Z.row(i).transpose(), z_star) >= n_s) rows.push_back(i);
  return rows;
}

Dataset select_key_subset(const Dataset& d, const MixedInput& w_star, int n_s) {
  validate_input(d.schema, w_star, "target");
  const auto rows = key_subset_rows(d, w_star.z, n_s);
  if (rows.empty())
    throw EmptySubsetError("empty key subset for n_s = " + std::to_string(n_s) + " and levels " +
                           format_levels(w_star.z));
  return d.subset(rows);
}

std::uint64_t full_factorial_subset_size(int m, int q, int n_s) {
  if (m < 2) throw ValidationError("full_factorial_subset_size: m must be at least 2");
  if (q < 0) throw ValidationError("full_factorial_subset_size: q must be nonnegative");
  check_ns(n_s, q);
  // C(q,i) (m-1)^(q-i) summed in unsigned 64-bit; fits for m^q < 2^64.
  std::uint64_t total = 0;
  std::uint64_t binom = 1;  // C(q, i)
  for (int i = 0; i <= q; ++i) {
    if (i > 0) binom = binom * static_cast<std::uint64_t>(q - i + 1) / static_cast<std::uint64_t>(i);
    if (i < n_s) continue;
    std::uint64_t pw = 1;
    for (int e = 0; e < q - i; ++e) pw *= static_cast<std::uint64_t>(m - 1);
    total += binom * pw;
  }
  return total;
}

NsRecommendation recommend_ns_detail(const Dataset& d, const MixedInput& w_star, ModelKind kind) {
  validate_input(d.schema, w_star, "target");
  const int p = d.schema.p;
  const int q = d.schema.q;
  NsRecommendation rec;
  rec.target_size = 10 * (p + q);
  rec.parameter_count = parameter_count(kind, d.schema);
  long best_gap = 0;
  for (int n_s = q / 2 + 1; n_s <= q; ++n_s) {
    NsCandidate c;
    c.n_s = n_s;
    c.size = key_subset_rows(d, w_star.z, n_s).size();
    c.admissible = c.size > static_cast<std::size_t>(rec.parameter_count);
    rec.candidates.push_back(c);
    if (!c.admissible) continue;
    const long gap = std::labs(static_cast<long>(c.size) - rec.target_size);
    if (!rec.found || gap <= best_gap) {
      rec.found = true;
      best_gap = gap;
      rec.n_s = n_s;
      rec.size = c.size;
    }
  }
  return rec;
}

int recommend_ns(const Dataset& d, const MixedInput& w_star, ModelKind kind) {
  const NsRecommendation rec = recommend_ns_detail(d, w_star, kind);
  if (!rec.found) {
    const int q = d.schema.q;
    std::ostringstream msg;
    msg << "no n_s in (" << q / 2 << ", " << q << "] gives a key subset larger than the " << rec.parameter_count
        << " model parameters for levels " << format_levels(w_star.z) << "; try a smaller n_s";
    throw GuidanceError(msg.str());
  }
  return rec.n_s;
}

LezgpPlan make_lezgp_plan(const Dataset& d, const std::vector<MixedInput>& targets, int n_s, ModelKind kind) {
  d.validate();
  if (n_s >= 0) check_ns(n_s, d.schema.q);
  LezgpPlan plan;
  plan.n_s = n_s;
  std::map<std::vector<int>, std::size_t> index;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    try {
      validate_input(d.schema, targets[t], "target");
    } catch (const ValidationError& e) {
      throw ValidationError("target " + std::to_string(t + 1) + ": " + e.what());
    }
    const VectorXi& z = targets[t].z;
    std::vector<int> key(z.data(), z.data() + z.size());
    auto [it, inserted] = index.emplace(key, plan.groups.size());
    if (inserted) {
      LezgpGroup g;
      g.z = z;
      g.n_s = n_s >= 0 ? n_s : recommend_ns(d, targets[t], kind);
      g.subset = key_subset_rows(d, z, g.n_s);
      if (g.subset.empty())
        throw EmptySubsetError("empty key subset for n_s = " + std::to_string(g.n_s) + " and levels " +
                               format_levels(z));
      plan.groups.push_back(std::move(g));
    }
    plan.groups[it->second].targets.push_back(t);
  }
  return plan;
}

LezgpOutput lezgp_run(const Dataset& d, const std::vector<MixedInput>& targets, int n_s, ModelKind kind,
                      const FitConfig& cfg) {
  if (kind != ModelKind::EzGP && kind != ModelKind::EEzGP)
    throw ValidationError("lezgp: model kind must be ezgp or eezgp, got " + to_string(kind));
  LezgpOutput out;
  out.plan = make_lezgp_plan(d, targets, n_s, kind);
  out.predictions.resize(targets.size());
  for (const auto& g : out.plan.groups) {
    const Dataset sub = d.subset(g.subset);
    FittedModel m;
    try {
      m = fit(sub, kind, cfg);
    } catch (const FitError& e) {
      throw FitError("group " + format_levels(g.z) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError("group " + format_levels(g.z) + ": " + e.what());
    }
    for (std::size_t t : g.targets) out.predictions[t] = predict_one(m, targets[t]);
  }
  return out;
}

std::vector<PredictionResult> lezgp_predict(const Dataset& d, const std::vector<MixedInput>& targets, int n_s,
                                            ModelKind kind, const FitConfig& cfg) {
  return lezgp_run(d, targets, n_s, kind, cfg).predictions;
}

}  // namespace ezgp
