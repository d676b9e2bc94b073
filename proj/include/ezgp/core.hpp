// Problem schema, mixed quantitative/qualitative data model and CSV ingestion.
#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace ezgp {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::MatrixXi;
using Eigen::VectorXd;
using Eigen::VectorXi;

/// Input rejected by a schema or contract check.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// p quantitative factors, q qualitative factors with m_h levels each.
struct ProblemSchema {
  int p = 0;
  int q = 0;
  std::vector<int> levels;  // m_1..m_q, each >= 2

  ProblemSchema() = default;
  ProblemSchema(int p_, std::vector<int> levels_);

  void validate() const;
  int total_levels() const;  // sum_h m_h
  bool operator==(const ProblemSchema&) const = default;

  /// Parses "p,q,m1,...,mq".
  static ProblemSchema parse(const std::string& text);
  std::string to_string() const;
};

/// One design point w = (x, z). Levels are 1-based.
struct MixedInput {
  VectorXd x;
  VectorXi z;
};

/// Affine map x_norm = (x - offset) / scale for one quantitative column.
struct ColumnScaling {
  double offset = 0.0;
  double scale = 1.0;
  bool constant = false;  // column was constant in the data it was fitted on

  bool is_identity() const { return offset == 0.0 && scale == 1.0; }
  bool operator==(const ColumnScaling&) const = default;
};

/// Optional response standardization y' = (y - center) / scale.
struct ResponseScaling {
  double center = 0.0;
  double scale = 1.0;

  bool is_identity() const { return center == 0.0 && scale == 1.0; }
  bool operator==(const ResponseScaling&) const = default;
};

/// Schema plus n rows of (x, z, y). X is n x p, Z is n x q.
struct Dataset {
  ProblemSchema schema;
  MatrixXd X;
  MatrixXi Z;
  VectorXd y;
  std::vector<ColumnScaling> scaling;  // empty means identity on every column
  ResponseScaling response;

  Index size() const { return y.size(); }
  MixedInput input(Index i) const { return {X.row(i).transpose(), Z.row(i).transpose()}; }

  /// Throws ValidationError describing the first violated invariant.
  void validate() const;

  /// Maps an original-unit input into the normalized units of this dataset.
  MixedInput to_normalized(const MixedInput& w) const;

  /// Rows selected by index, order preserved, scaling carried over.
  Dataset subset(const std::vector<Index>& rows) const;
};

/// Validates a single input against a schema; `what` prefixes error messages.
void validate_input(const ProblemSchema& schema, const MixedInput& w, const std::string& what = "input");

/// Reads `x1..xp,z1..zq,y` CSV. Comment lines start with '#'.
Dataset load_dataset(const std::filesystem::path& path, const ProblemSchema& schema);

/// Reads target inputs `x1..xp,z1..zq` (a trailing `y` column is accepted and ignored).
std::vector<MixedInput> load_inputs(const std::filesystem::path& path, const ProblemSchema& schema);

/// Infers p, q and per-factor level counts from the header and the largest level seen.
ProblemSchema infer_schema(const std::filesystem::path& path);

/// Writes the dataset in original units with 17 significant digits.
void save_dataset(const std::filesystem::path& path, const Dataset& d);

/// Writes inputs only, `x1..xp,z1..zq`.
void save_inputs(const std::filesystem::path& path, const ProblemSchema& schema,
                 const std::vector<MixedInput>& inputs);

/// Maps every quantitative column onto [0,1]. Columns already inside [0,1] keep identity
/// scaling; constant columns map to 0.5 and are flagged.
Dataset normalize_quantitative(const Dataset& d);

/// Centers and scales y to unit sample standard deviation.
Dataset standardize_response(const Dataset& d);

/// Indices of columns flagged constant by normalize_quantitative.
std::vector<int> constant_columns(const Dataset& d);

/// Sample variance (n - 1 denominator); 0 for n < 2.
double sample_variance(const VectorXd& v);

/// Formats a double with 17 significant digits.
std::string format_double(double v);

}  // namespace ezgp
