#include "ezgp/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace ezgp {

ProblemSchema::ProblemSchema(int p_, std::vector<int> levels_)
    : p(p_), q(static_cast<int>(levels_.size())), levels(std::move(levels_)) {}

void ProblemSchema::validate() const {
  if (p < 1) throw ValidationError("schema: p must be at least 1");
  if (q < 1) throw ValidationError("schema: q must be at least 1");
  if (static_cast<int>(levels.size()) != q)
    throw ValidationError("schema: expected " + std::to_string(q) + " level counts, got " +
                          std::to_string(levels.size()));
  for (int h = 0; h < q; ++h) {
    if (levels[h] < 2)
      throw ValidationError("schema: factor z" + std::to_string(h + 1) + " needs at least 2 levels");
  }
}

int ProblemSchema::total_levels() const {
  int total = 0;
  for (int m : levels) total += m;
  return total;
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

bool parse_int(const std::string& text, int& out) {
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

bool parse_real(const std::string& text, double& out) {
  if (text.empty()) return false;
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> line_numbers;
};

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  CsvTable table;
  std::string line;
  int line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto cells = split(t, ',');
    for (auto& c : cells) c = trim(c);
    if (!have_header) {
      table.header = std::move(cells);
      have_header = true;
    } else {
      table.rows.push_back(std::move(cells));
      table.line_numbers.push_back(line_no);
    }
  }
  if (!have_header) throw ValidationError(path.string() + ": missing header row");
  return table;
}

std::vector<std::string> expected_header(const ProblemSchema& s, bool with_y) {
  std::vector<std::string> names;
  for (int k = 1; k <= s.p; ++k) names.push_back("x" + std::to_string(k));
  for (int h = 1; h <= s.q; ++h) names.push_back("z" + std::to_string(h));
  if (with_y) names.emplace_back("y");
  return names;
}

std::string join(const std::vector<std::string>& names) {
  std::string out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) out += ',';
    out += names[i];
  }
  return out;
}

void parse_rows(const CsvTable& table, const ProblemSchema& schema, bool with_y, const std::string& source,
                MatrixXd& X, MatrixXi& Z, VectorXd* y) {
  const auto n = static_cast<Index>(table.rows.size());
  const std::size_t width = static_cast<std::size_t>(schema.p + schema.q + (with_y ? 1 : 0));
  X.resize(n, schema.p);
  Z.resize(n, schema.q);
  if (y) y->resize(n);
  for (Index i = 0; i < n; ++i) {
    const auto& cells = table.rows[i];
    const std::string where = source + " line " + std::to_string(table.line_numbers[i]) + " (row " +
                              std::to_string(i + 1) + ")";
    if (cells.size() < width) throw ValidationError(where + ": too few columns");
    for (int k = 0; k < schema.p; ++k) {
      double v = 0;
      if (!parse_real(cells[k], v))
        throw ValidationError(where + ": non-numeric value '" + cells[k] + "' in column x" + std::to_string(k + 1));
      X(i, k) = v;
    }
    for (int h = 0; h < schema.q; ++h) {
      const auto& cell = cells[schema.p + h];
      int level = 0;
      if (!parse_int(cell, level))
        throw ValidationError(where + ": non-integer level '" + cell + "' in column z" + std::to_string(h + 1));
      if (level < 1 || level > schema.levels[h])
        throw ValidationError(where + ": level " + std::to_string(level) + " of factor z" + std::to_string(h + 1) +
                              " outside 1.." + std::to_string(schema.levels[h]));
      Z(i, h) = level;
    }
    if (y) {
      double v = 0;
      const auto& cell = cells[schema.p + schema.q];
      if (!parse_real(cell, v)) throw ValidationError(where + ": non-numeric response '" + cell + "'");
      (*y)(i) = v;
    }
  }
}

}  // namespace

ProblemSchema ProblemSchema::parse(const std::string& text) {
  std::vector<int> values;
  for (const auto& cell : split(text, ',')) {
    int v = 0;
    if (!parse_int(trim(cell), v)) throw ValidationError("schema: cannot parse '" + text + "' as p,q,m1,...,mq");
    values.push_back(v);
  }
  if (values.size() < 3) throw ValidationError("schema: expected p,q,m1,...,mq");
  const int q = values[1];
  if (q < 1 || static_cast<int>(values.size()) != 2 + q)
    throw ValidationError("schema: q=" + std::to_string(q) + " does not match the number of level counts");
  ProblemSchema s(values[0], std::vector<int>(values.begin() + 2, values.end()));
  s.validate();
  return s;
}

std::string ProblemSchema::to_string() const {
  std::string out = std::to_string(p) + "," + std::to_string(q);
  for (int m : levels) out += "," + std::to_string(m);
  return out;
}

void validate_input(const ProblemSchema& schema, const MixedInput& w, const std::string& what) {
  if (w.x.size() != schema.p)
    throw ValidationError(what + ": expected " + std::to_string(schema.p) + " quantitative values");
  if (w.z.size() != schema.q)
    throw ValidationError(what + ": expected " + std::to_string(schema.q) + " qualitative levels");
  for (int k = 0; k < schema.p; ++k) {
    if (!std::isfinite(w.x(k))) throw ValidationError(what + ": x" + std::to_string(k + 1) + " is not finite");
  }
  for (int h = 0; h < schema.q; ++h) {
    if (w.z(h) < 1 || w.z(h) > schema.levels[h])
      throw ValidationError(what + ": level " + std::to_string(w.z(h)) + " of factor z" + std::to_string(h + 1) +
                            " outside 1.." + std::to_string(schema.levels[h]));
  }
}

void Dataset::validate() const {
  schema.validate();
  if (y.size() == 0) throw ValidationError("dataset is empty");
  if (X.rows() != y.size() || Z.rows() != y.size())
    throw ValidationError("dataset: row counts of X, Z and y differ");
  if (X.cols() != schema.p || Z.cols() != schema.q) throw ValidationError("dataset: column counts differ from schema");
  if (!scaling.empty() && static_cast<int>(scaling.size()) != schema.p)
    throw ValidationError("dataset: scaling record has wrong length");
  for (Index i = 0; i < size(); ++i) validate_input(schema, input(i), "row " + std::to_string(i + 1));
}

MixedInput Dataset::to_normalized(const MixedInput& w) const {
  MixedInput out = w;
  if (scaling.empty()) return out;
  for (int k = 0; k < schema.p; ++k) out.x(k) = (w.x(k) - scaling[k].offset) / scaling[k].scale;
  return out;
}

Dataset Dataset::subset(const std::vector<Index>& rows) const {
  Dataset out;
  out.schema = schema;
  out.scaling = scaling;
  out.response = response;
  out.X = X(rows, Eigen::all);
  out.Z = Z(rows, Eigen::all);
  out.y = y(rows);
  return out;
}

Dataset load_dataset(const std::filesystem::path& path, const ProblemSchema& schema) {
  schema.validate();
  const CsvTable table = read_csv(path);
  const auto expected = expected_header(schema, true);
  if (table.header != expected)
    throw ValidationError(path.string() + ": header '" + join(table.header) + "' does not match schema, expected '" +
                          join(expected) + "'");
  if (table.rows.empty()) throw ValidationError(path.string() + ": no data rows");
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    if (table.rows[i].size() != expected.size())
      throw ValidationError(path.string() + " line " + std::to_string(table.line_numbers[i]) + ": expected " +
                            std::to_string(expected.size()) + " columns, got " + std::to_string(table.rows[i].size()));
  }
  Dataset d;
  d.schema = schema;
  parse_rows(table, schema, true, path.string(), d.X, d.Z, &d.y);
  return d;
}

std::vector<MixedInput> load_inputs(const std::filesystem::path& path, const ProblemSchema& schema) {
  schema.validate();
  const CsvTable table = read_csv(path);
  const auto plain = expected_header(schema, false);
  const auto with_y = expected_header(schema, true);
  if (table.header != with_y && table.header != plain) {
    throw ValidationError(path.string() + ": header '" + join(table.header) + "' does not match schema, expected '" +
                          join(plain) + "'");
  }
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    if (table.rows[i].size() != table.header.size())
      throw ValidationError(path.string() + " line " + std::to_string(table.line_numbers[i]) + ": expected " +
                            std::to_string(table.header.size()) + " columns");
  }
  MatrixXd X;
  MatrixXi Z;
  parse_rows(table, schema, false, path.string(), X, Z, nullptr);
  std::vector<MixedInput> out;
  out.reserve(static_cast<std::size_t>(X.rows()));
  for (Index i = 0; i < X.rows(); ++i) out.push_back({X.row(i).transpose(), Z.row(i).transpose()});
  return out;
}

ProblemSchema infer_schema(const std::filesystem::path& path) {
  const CsvTable table = read_csv(path);
  int p = 0;
  int q = 0;
  for (const auto& name : table.header) {
    if (name.size() > 1 && name[0] == 'x' && q == 0 && name == "x" + std::to_string(p + 1)) {
      ++p;
    } else if (name.size() > 1 && name[0] == 'z' && name == "z" + std::to_string(q + 1)) {
      ++q;
    } else if (name != "y") {
      throw ValidationError(path.string() + ": unexpected column '" + name + "' in header");
    }
  }
  if (p < 1 || q < 1) throw ValidationError(path.string() + ": header must name x1..xp and z1..zq columns");
  std::vector<int> levels(static_cast<std::size_t>(q), 2);
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    for (int h = 0; h < q; ++h) {
      const std::size_t col = static_cast<std::size_t>(p + h);
      int level = 0;
      if (col >= row.size() || !parse_int(row[col], level) || level < 1)
        throw ValidationError(path.string() + " line " + std::to_string(table.line_numbers[i]) +
                              ": invalid level in column z" + std::to_string(h + 1));
      levels[h] = std::max(levels[h], level);
    }
  }
  return ProblemSchema(p, std::move(levels));
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

void write_header(std::ostream& out, const ProblemSchema& s, bool with_y) { out << join(expected_header(s, with_y)) << '\n'; }

}  // namespace

void save_dataset(const std::filesystem::path& path, const Dataset& d) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  write_header(out, d.schema, true);
  for (Index i = 0; i < d.size(); ++i) {
    for (int k = 0; k < d.schema.p; ++k) {
      double v = d.X(i, k);
      if (!d.scaling.empty()) v = v * d.scaling[k].scale + d.scaling[k].offset;
      out << format_double(v) << ',';
    }
    for (int h = 0; h < d.schema.q; ++h) out << d.Z(i, h) << ',';
    out << format_double(d.y(i) * d.response.scale + d.response.center) << '\n';
  }
}

void save_inputs(const std::filesystem::path& path, const ProblemSchema& schema,
                 const std::vector<MixedInput>& inputs) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  write_header(out, schema, false);
  for (const auto& w : inputs) {
    for (int k = 0; k < schema.p; ++k) out << format_double(w.x(k)) << ',';
    for (int h = 0; h < schema.q; ++h) out << w.z(h) << (h + 1 < schema.q ? "," : "\n");
  }
}

Dataset normalize_quantitative(const Dataset& d) {
  Dataset out = d;
  if (out.scaling.empty()) out.scaling.assign(static_cast<std::size_t>(d.schema.p), ColumnScaling{});
  for (int k = 0; k < d.schema.p; ++k) {
    const double lo = d.X.col(k).minCoeff();
    const double hi = d.X.col(k).maxCoeff();
    ColumnScaling step;
    if (hi == lo) {
      step.offset = lo - 0.5;
      step.constant = true;
    } else if (lo >= 0.0 && hi <= 1.0) {
      // already normalized
    } else {
      step.offset = lo;
      step.scale = hi - lo;
    }
    out.X.col(k) = ((d.X.col(k).array() - step.offset) / step.scale).matrix();
    ColumnScaling& total = out.scaling[k];
    total.offset += step.offset * total.scale;
    total.scale *= step.scale;
    total.constant = total.constant || step.constant;
  }
  return out;
}

Dataset standardize_response(const Dataset& d) {
  Dataset out = d;
  const double mean = d.y.mean();
  double sd = std::sqrt(sample_variance(d.y));
  if (!(sd > 0.0)) sd = 1.0;
  out.y = ((d.y.array() - mean) / sd).matrix();
  out.response.center = d.response.center + mean * d.response.scale;
  out.response.scale = d.response.scale * sd;
  return out;
}

std::vector<int> constant_columns(const Dataset& d) {
  std::vector<int> out;
  for (int k = 0; k < static_cast<int>(d.scaling.size()); ++k)
    if (d.scaling[k].constant) out.push_back(k);
  return out;
}

double sample_variance(const VectorXd& v) {
  const Index n = v.size();
  if (n < 2) return 0.0;
  const double mean = v.mean();
  double ss = 0.0;
  for (Index i = 0; i < n; ++i) ss += (v(i) - mean) * (v(i) - mean);
  return ss / static_cast<double>(n - 1);
}

}  // namespace ezgp
