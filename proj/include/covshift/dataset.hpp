#pragma once

// Combined source/target dataset: covariates for every row, treatment and
// outcome only for source rows (group == 1).

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace covshift {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CombinedDataset {
  Eigen::MatrixXd covariates;                 // n x p
  std::vector<int> group;                     // 1 = source, 0 = target
  std::vector<std::optional<int>> treatment;  // source rows only
  std::vector<std::optional<double>> outcome; // source rows only
  std::vector<std::string> covariate_names;   // optional, used for CSV output

  [[nodiscard]] std::size_t size() const { return group.size(); }
  [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(covariates.cols()); }

  [[nodiscard]] std::size_t n_source() const {
    std::size_t k = 0;
    for (int g : group) k += (g == 1);
    return k;
  }
  [[nodiscard]] std::size_t n_target() const { return size() - n_source(); }

  /// q = n_source / n.
  [[nodiscard]] double source_fraction() const {
    return static_cast<double>(n_source()) / static_cast<double>(size());
  }

  [[nodiscard]] bool is_source(std::size_t i) const { return group[i] == 1; }
  [[nodiscard]] Eigen::VectorXd row(std::size_t i) const {
    return covariates.row(static_cast<Eigen::Index>(i)).transpose();
  }
};

/// Counterfactual outcomes attached to a simulated dataset. Evaluation only.
struct PotentialOutcomes {
  Eigen::VectorXd y1;
  Eigen::VectorXd y0;
};

struct Violation {
  std::optional<std::size_t> row;
  std::string rule;
};

inline std::vector<Violation> validate(const CombinedDataset& d) {
  std::vector<Violation> out;
  const std::size_t n = d.size();
  if (static_cast<std::size_t>(d.covariates.rows()) != n)
    out.push_back({std::nullopt, "covariate row count differs from group length"});
  if (d.treatment.size() != n)
    out.push_back({std::nullopt, "treatment length differs from group length"});
  if (d.outcome.size() != n)
    out.push_back({std::nullopt, "outcome length differs from group length"});
  if (!out.empty()) return out;

  std::size_t n1 = 0;
  std::size_t n0 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int g = d.group[i];
    if (g != 0 && g != 1) {
      out.push_back({i, "group must be 0 or 1"});
      continue;
    }
    if (g == 1) {
      ++n1;
      if (!d.treatment[i]) out.push_back({i, "treatment missing where group=1"});
      else if (*d.treatment[i] != 0 && *d.treatment[i] != 1)
        out.push_back({i, "treatment must be 0 or 1"});
      if (!d.outcome[i]) out.push_back({i, "outcome missing where group=1"});
      else if (!std::isfinite(*d.outcome[i])) out.push_back({i, "outcome is not finite"});
    } else {
      ++n0;
      if (d.treatment[i]) out.push_back({i, "treatment present where group=0"});
      if (d.outcome[i]) out.push_back({i, "outcome present where group=0"});
    }
    for (Eigen::Index j = 0; j < d.covariates.cols(); ++j) {
      if (!std::isfinite(d.covariates(static_cast<Eigen::Index>(i), j))) {
        out.push_back({i, "covariate is not finite (column " + std::to_string(j) + ")"});
      }
    }
  }
  if (n1 == 0) out.push_back({std::nullopt, "source domain empty"});
  if (n0 == 0) out.push_back({std::nullopt, "target domain empty"});
  return out;
}

inline std::string describe(const Violation& v) {
  if (v.row) return "row " + std::to_string(*v.row) + ": " + v.rule;
  return v.rule;
}

inline void require_valid(const CombinedDataset& d) {
  const auto report = validate(d);
  if (report.empty()) return;
  std::string msg = "invalid dataset: " + describe(report.front());
  if (report.size() > 1) msg += " (+" + std::to_string(report.size() - 1) + " more)";
  throw DatasetError(msg);
}

/// Column names used when reading a CSV. Empty covariate list means "every
/// column that is not group/treatment/outcome, in file order".
struct CsvSchema {
  std::vector<std::string> covariates;
  std::string group = "g";
  std::string treatment = "a";
  std::string outcome = "y";
};

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  for (auto& c : cells) {
    while (!c.empty() && (c.front() == ' ' || c.front() == '\t')) c.remove_prefix(1);
    while (!c.empty() && (c.back() == ' ' || c.back() == '\t' || c.back() == '\r')) c.remove_suffix(1);
  }
  return cells;
}

inline std::optional<double> parse_real(std::string_view cell) {
  double v = 0.0;
  const auto* first = cell.data();
  const auto* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || cell.empty()) return std::nullopt;
  return v;
}

inline std::optional<int> parse_binary(std::string_view cell) {
  if (cell == "0") return 0;
  if (cell == "1") return 1;
  return std::nullopt;
}

}  // namespace detail

inline CombinedDataset read_csv(std::istream& in, const CsvSchema& schema = {}) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw DatasetError("empty CSV input: missing header row");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
  const auto header_views = detail::split_csv_line(line);
  std::vector<std::string> header(header_views.begin(), header_views.end());

  auto find_col = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t k = 0; k < header.size(); ++k)
      if (header[k] == name) return k;
    return std::nullopt;
  };

  const auto g_col = find_col(schema.group);
  if (!g_col) throw DatasetError("schema mismatch: group column '" + schema.group + "' not in header");
  const auto a_col = find_col(schema.treatment);
  const auto y_col = find_col(schema.outcome);

  std::vector<std::size_t> x_cols;
  std::vector<std::string> x_names;
  if (schema.covariates.empty()) {
    for (std::size_t k = 0; k < header.size(); ++k) {
      if (k == *g_col || (a_col && k == *a_col) || (y_col && k == *y_col)) continue;
      x_cols.push_back(k);
      x_names.push_back(header[k]);
    }
  } else {
    for (const auto& name : schema.covariates) {
      const auto c = find_col(name);
      if (!c) throw DatasetError("schema mismatch: covariate column '" + name + "' not in header");
      x_cols.push_back(*c);
      x_names.push_back(name);
    }
  }
  if (x_cols.empty()) throw DatasetError("schema mismatch: no covariate columns");

  std::vector<std::vector<double>> rows;
  CombinedDataset d;
  d.covariate_names = x_names;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DatasetError("parse error at line " + std::to_string(line_no) + ": expected " +
                         std::to_string(header.size()) + " cells, found " +
                         std::to_string(cells.size()));
    }
    auto fail = [&](std::size_t col, const std::string& what) {
      return DatasetError("parse error at line " + std::to_string(line_no) + ", column '" +
                          header[col] + "': " + what);
    };
    std::vector<double> x(x_cols.size());
    for (std::size_t k = 0; k < x_cols.size(); ++k) {
      const auto v = detail::parse_real(cells[x_cols[k]]);
      if (!v) throw fail(x_cols[k], "not a number '" + std::string(cells[x_cols[k]]) + "'");
      if (!std::isfinite(*v)) throw fail(x_cols[k], "covariate is not finite");
      x[k] = *v;
    }
    const auto g = detail::parse_binary(cells[*g_col]);
    if (!g) throw fail(*g_col, "group must be literally 0 or 1");

    std::optional<int> a;
    std::optional<double> y;
    if (a_col && !cells[*a_col].empty()) {
      a = detail::parse_binary(cells[*a_col]);
      if (!a) throw fail(*a_col, "treatment must be literally 0 or 1");
    }
    if (y_col && !cells[*y_col].empty()) {
      y = detail::parse_real(cells[*y_col]);
      if (!y) throw fail(*y_col, "not a number '" + std::string(cells[*y_col]) + "'");
    }
    if (*g == 1) {
      if (!a) throw DatasetError("line " + std::to_string(line_no) + ": treatment missing where group=1");
      if (!y) throw DatasetError("line " + std::to_string(line_no) + ": outcome missing where group=1");
    } else {
      if (a) throw DatasetError("line " + std::to_string(line_no) + ": treatment present where group=0");
      if (y) throw DatasetError("line " + std::to_string(line_no) + ": outcome present where group=0");
    }
    rows.push_back(std::move(x));
    d.group.push_back(*g);
    d.treatment.push_back(a);
    d.outcome.push_back(y);
  }

  d.covariates.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(x_cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < x_cols.size(); ++j)
      d.covariates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];

  require_valid(d);
  return d;
}

inline CombinedDataset ingest_csv(const std::string& path, const CsvSchema& schema = {}) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open '" + path + "'");
  return read_csv(in, schema);
}

/// Writes the dataset in the ingest format: covariates, g, a, y. Doubles use
/// max_digits10 so a read-back is bit-identical.
inline void write_csv(std::ostream& out, const CombinedDataset& d) {
  const auto p = d.dim();
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t j = 0; j < p; ++j) {
    if (j < d.covariate_names.size()) out << d.covariate_names[j];
    else out << "x" << (j + 1);
    out << ',';
  }
  out << "g,a,y\n";
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t j = 0; j < p; ++j)
      out << d.covariates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) << ',';
    out << d.group[i] << ',';
    if (d.treatment[i]) out << *d.treatment[i];
    out << ',';
    if (d.outcome[i]) out << *d.outcome[i];
    out << '\n';
  }
}

inline void write_csv(const std::string& path, const CombinedDataset& d) {
  std::ofstream out(path);
  if (!out) throw DatasetError("cannot write '" + path + "'");
  write_csv(out, d);
}

}  // namespace covshift
