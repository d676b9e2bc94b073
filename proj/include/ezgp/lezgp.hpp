// Localized EzGP: fit on the training rows that share enough qualitative levels with a target.
#pragma once

#include "ezgp/inference.hpp"
#include "ezgp/predict.hpp"

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace ezgp {

class EmptySubsetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// No admissible tuning parameter in (q/2, q].
class GuidanceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Number of positions h with z_h == z_star_h.
int count_matching_levels(const VectorXi& z, const VectorXi& z_star);

/// Indices of rows with at least n_s matching levels, in dataset order.
std::vector<Index> key_subset_rows(const Dataset& d, const VectorXi& z_star, int n_s);

/// Rows with at least n_s matching levels. Throws EmptySubsetError when none qualify.
Dataset select_key_subset(const Dataset& d, const MixedInput& w_star, int n_s);

/// Exact key-subset size on a full m^q factorial: sum_{i=n_s}^{q} C(q,i) (m-1)^(q-i).
std::uint64_t full_factorial_subset_size(int m, int q, int n_s);

struct NsCandidate {
  int n_s = 0;
  std::size_t size = 0;
  bool admissible = false;  // size exceeds the parameter count
};

struct NsRecommendation {
  bool found = false;  // some candidate is admissible
  int n_s = 0;
  std::size_t size = 0;
  int target_size = 0;  // 10 (p + q)
  int parameter_count = 0;
  std::vector<NsCandidate> candidates;
};

/// Searches n_s in (q/2, q] for the key subset closest to 10 (p + q) rows, among those
/// larger than the parameter count of `kind`. Ties go to the larger n_s. recommend_ns throws
/// GuidanceError when no candidate is admissible.
NsRecommendation recommend_ns_detail(const Dataset& d, const MixedInput& w_star, ModelKind kind = ModelKind::EEzGP);
int recommend_ns(const Dataset& d, const MixedInput& w_star, ModelKind kind = ModelKind::EEzGP);

struct LezgpGroup {
  VectorXi z;                        // shared qualitative combination
  int n_s = 0;
  std::vector<Index> subset;         // key-subset row indices
  std::vector<std::size_t> targets;  // indices into the target list
};

struct LezgpPlan {
  int n_s = -1;  // -1 when chosen per group by recommend_ns
  std::vector<LezgpGroup> groups;  // in order of first appearance
};

/// Groups targets by qualitative combination and selects one key subset per group.
/// n_s < 0 asks for recommend_ns on every group.
LezgpPlan make_lezgp_plan(const Dataset& d, const std::vector<MixedInput>& targets, int n_s,
                          ModelKind kind = ModelKind::EEzGP);

struct LezgpOutput {
  LezgpPlan plan;
  std::vector<PredictionResult> predictions;  // target order
};

/// One fit per group on its key subset. kind must be EzGP or EEzGP.
LezgpOutput lezgp_run(const Dataset& d, const std::vector<MixedInput>& targets, int n_s, ModelKind kind,
                      const FitConfig& cfg);

std::vector<PredictionResult> lezgp_predict(const Dataset& d, const std::vector<MixedInput>& targets, int n_s,
                                            ModelKind kind = ModelKind::EEzGP, const FitConfig& cfg = {});

std::string format_levels(const VectorXi& z);

}  // namespace ezgp
