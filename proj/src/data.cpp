#include "marsnet/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "marsnet/rng.hpp"

namespace marsnet {

namespace {

bool parse_double(const std::string& cell, double& out) {
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end > begin && (end[-1] == ' ' || end[-1] == '\t' || end[-1] == '\r')) --end;
  if (begin == end) return false;
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc{} && ptr == end && std::isfinite(out);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

int RawTable::column_index(const std::string& name) const {
  auto it = std::find(column_names.begin(), column_names.end(), name);
  return it == column_names.end() ? -1 : static_cast<int>(it - column_names.begin());
}

void Dataset::validate() const {
  if (n() < 1) throw ValidationError("dataset has no rows");
  if (dim() < 1) throw ValidationError("dataset has no feature columns");
  if (targets.size() != n()) throw ValidationError("target length does not match row count");
  if (static_cast<Eigen::Index>(feature_names.size()) != dim())
    throw ValidationError("feature name count does not match feature dimension");
  if (!features.allFinite() || !targets.allFinite())
    throw ValidationError("dataset contains non-finite values");
}

RawTable load_csv(const std::string& path, bool header) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open file: " + path);

  RawTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto cells = split_line(line);
    if (table.column_names.empty() && table.rows.empty()) {
      if (header) {
        for (auto& c : cells) {
          if (!c.empty() && c.back() == '\r') c.pop_back();
        }
        table.column_names = cells;
        continue;
      }
      table.column_names.resize(cells.size());
      for (std::size_t j = 0; j < cells.size(); ++j) table.column_names[j] = "col" + std::to_string(j);
    }
    if (cells.size() != table.column_names.size()) {
      throw ValidationError("ragged row at line " + std::to_string(line_no) + ": expected " +
                            std::to_string(table.column_names.size()) + " cells, got " +
                            std::to_string(cells.size()));
    }
    table.rows.push_back(std::move(cells));
  }
  if (table.rows.empty()) throw ValidationError("no rows in " + path);

  table.column_kinds.assign(table.n_cols(), ColumnKind::Numeric);
  for (std::size_t j = 0; j < table.n_cols(); ++j) {
    double v;
    for (const auto& row : table.rows) {
      if (!parse_double(row[j], v)) {
        table.column_kinds[j] = ColumnKind::Categorical;
        break;
      }
    }
  }
  return table;
}

void save_csv(const RawTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write file: " + path);
  for (std::size_t j = 0; j < table.n_cols(); ++j) {
    if (j) out << ',';
    out << table.column_names[j];
  }
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out << ',';
      out << row[j];
    }
    out << '\n';
  }
  if (!out) throw NumericError("I/O failure writing " + path);
}

RawTable encode_categorical(const RawTable& table, const std::string& column) {
  const int idx = table.column_index(column);
  if (idx < 0) throw ValidationError("column not found: " + column);
  if (table.column_kinds[idx] == ColumnKind::Numeric)
    throw ValidationError("column is numeric, not categorical: " + column);

  std::set<std::string> categories;
  for (const auto& row : table.rows) categories.insert(row[idx]);

  RawTable out;
  for (std::size_t j = 0; j < table.n_cols(); ++j) {
    if (static_cast<int>(j) == idx) {
      for (const auto& cat : categories) {
        out.column_names.push_back(column + "=" + cat);
        out.column_kinds.push_back(ColumnKind::Numeric);
      }
    } else {
      out.column_names.push_back(table.column_names[j]);
      out.column_kinds.push_back(table.column_kinds[j]);
    }
  }
  out.rows.reserve(table.n_rows());
  for (const auto& row : table.rows) {
    std::vector<std::string> cells;
    cells.reserve(out.n_cols());
    for (std::size_t j = 0; j < table.n_cols(); ++j) {
      if (static_cast<int>(j) == idx) {
        for (const auto& cat : categories) cells.push_back(row[idx] == cat ? "1" : "0");
      } else {
        cells.push_back(row[j]);
      }
    }
    out.rows.push_back(std::move(cells));
  }
  return out;
}

Dataset to_dataset(const RawTable& table, const std::string& target_column) {
  const int target = table.column_index(target_column);
  if (target < 0) throw ValidationError("target column not found: " + target_column);

  for (std::size_t j = 0; j < table.n_cols(); ++j) {
    if (table.column_kinds[j] == ColumnKind::Categorical) {
      // Report the first offending cell for a concrete error position.
      double v;
      for (std::size_t i = 0; i < table.n_rows(); ++i) {
        if (!parse_double(table.rows[i][j], v)) {
          throw ValidationError("unparseable numeric cell at row " + std::to_string(i + 1) +
                                ", column '" + table.column_names[j] +
                                "' (encode categorical columns first)");
        }
      }
    }
  }

  const Eigen::Index n = static_cast<Eigen::Index>(table.n_rows());
  const Eigen::Index d = static_cast<Eigen::Index>(table.n_cols()) - 1;
  if (d < 1) throw ValidationError("dataset needs at least one feature column");

  Dataset data;
  data.features.resize(n, d);
  data.targets.resize(n);
  for (std::size_t j = 0; j < table.n_cols(); ++j) {
    if (static_cast<int>(j) != target) data.feature_names.push_back(table.column_names[j]);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index col = 0;
    for (std::size_t j = 0; j < table.n_cols(); ++j) {
      double v;
      parse_double(table.rows[i][j], v);
      if (static_cast<int>(j) == target) {
        data.targets[i] = v;
      } else {
        data.features(i, col++) = v;
      }
    }
  }
  data.validate();
  return data;
}

std::pair<Dataset, Scaler> normalize(const Dataset& data, const std::optional<Scaler>& scaler) {
  data.validate();
  const Eigen::Index d = data.dim();

  Scaler s;
  if (scaler) {
    if (!scaler->fitted) throw ValidationError("scaler has not been fitted");
    if (scaler->dim() != d)
      throw ValidationError("scaler dimension " + std::to_string(scaler->dim()) +
                            " does not match dataset dimension " + std::to_string(d));
    s = *scaler;
  } else {
    s.col_min.resize(d + 1);
    s.col_max.resize(d + 1);
    for (Eigen::Index j = 0; j < d; ++j) {
      s.col_min[j] = data.features.col(j).minCoeff();
      s.col_max[j] = data.features.col(j).maxCoeff();
      if (s.col_min[j] == s.col_max[j]) s.constant_columns.push_back(static_cast<int>(j));
    }
    s.col_min[d] = data.targets.minCoeff();
    s.col_max[d] = data.targets.maxCoeff();
    if (s.col_min[d] == s.col_max[d]) s.constant_columns.push_back(-1);
    s.fitted = true;
  }

  Dataset out = data;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double lo = s.col_min[j], hi = s.col_max[j];
    if (hi == lo) {
      out.features.col(j).setZero();
    } else {
      out.features.col(j) = (data.features.col(j).array() - lo) / (hi - lo);
    }
  }
  const double tlo = s.col_min[d], thi = s.col_max[d];
  if (thi == tlo) {
    out.targets.setZero();
  } else {
    out.targets = (data.targets.array() - tlo) / (thi - tlo);
  }
  return {std::move(out), std::move(s)};
}

Dataset denormalize(const Dataset& data, const Scaler& scaler) {
  if (!scaler.fitted) throw ValidationError("scaler has not been fitted");
  if (scaler.dim() != data.dim()) throw ValidationError("scaler/dataset dimension mismatch");
  const Eigen::Index d = data.dim();
  Dataset out = data;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double lo = scaler.col_min[j], hi = scaler.col_max[j];
    if (hi == lo) {
      out.features.col(j).setConstant(lo);
    } else {
      out.features.col(j) = data.features.col(j).array() * (hi - lo) + lo;
    }
  }
  const double tlo = scaler.col_min[d], thi = scaler.col_max[d];
  if (thi == tlo) {
    out.targets.setConstant(tlo);
  } else {
    out.targets = data.targets.array() * (thi - tlo) + tlo;
  }
  return out;
}

std::pair<Dataset, Dataset> split_shuffle(const Dataset& data, double train_fraction,
                                          std::uint64_t seed) {
  data.validate();
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ValidationError("train fraction must lie strictly between 0 and 1");
  const Eigen::Index n = data.n();
  if (n < 2) throw ValidationError("need at least 2 rows to split");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 gen(seed);
  shuffle_in_place(order, gen);

  const Eigen::Index n_train = static_cast<Eigen::Index>(std::floor(train_fraction * static_cast<double>(n)));
  if (n_train < 1 || n_train >= n)
    throw ValidationError("split leaves an empty partition (fraction " + std::to_string(train_fraction) +
                          " on " + std::to_string(n) + " rows)");

  auto take = [&](Eigen::Index begin, Eigen::Index count) {
    Dataset part;
    part.features.resize(count, data.dim());
    part.targets.resize(count);
    part.feature_names = data.feature_names;
    for (Eigen::Index i = 0; i < count; ++i) {
      const Eigen::Index src = order[static_cast<std::size_t>(begin + i)];
      part.features.row(i) = data.features.row(src);
      part.targets[i] = data.targets[src];
    }
    return part;
  };
  return {take(0, n_train), take(n_train, n - n_train)};
}

}  // namespace marsnet
