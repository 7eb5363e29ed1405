#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "marsnet/common.hpp"

namespace marsnet {

enum class ColumnKind { Numeric, Categorical };

// Parsed CSV contents before any encoding. Cells are kept as text so that
// categorical columns survive until encode_categorical runs.
struct RawTable {
  std::vector<std::string> column_names;
  std::vector<ColumnKind> column_kinds;
  std::vector<std::vector<std::string>> rows;

  std::size_t n_rows() const { return rows.size(); }
  std::size_t n_cols() const { return column_names.size(); }
  int column_index(const std::string& name) const;  // -1 if absent
};

struct Dataset {
  Eigen::MatrixXd features;  // N x d
  Eigen::VectorXd targets;   // N
  std::vector<std::string> feature_names;

  Eigen::Index n() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }
  void validate() const;  // throws ValidationError on any broken invariant
};

// Per-column min/max over features and target (target is the last slot).
struct Scaler {
  Eigen::VectorXd col_min;  // size d+1
  Eigen::VectorXd col_max;  // size d+1
  std::vector<int> constant_columns;  // columns squashed to 0 (min == max); -1 denotes the target
  bool fitted = false;

  Eigen::Index dim() const { return fitted ? col_min.size() - 1 : 0; }
};

// Reads a comma-separated file. With header=false columns are named
// col0..colK-1. A column is Numeric when every cell parses as a finite
// double, Categorical otherwise.
RawTable load_csv(const std::string& path, bool header = true);

// Writes a RawTable back out (header always emitted). Used by the synthetic
// dataset generator and by tests.
void save_csv(const RawTable& table, const std::string& path);

// Replaces one categorical column by k one-hot indicator columns (k =
// distinct category count, categories in sorted order), in place of the
// original column. Indicator columns are named "<column>=<category>".
RawTable encode_categorical(const RawTable& table, const std::string& column);

// Splits a fully numeric table into features and target.
Dataset to_dataset(const RawTable& table, const std::string& target_column);

// Min-max normalization of features and target to [0,1]. Without a scaler,
// fits on `data` and returns the fitted scaler; with one, transform-only
// (values outside the fitted range map outside [0,1], which is expected for
// test data). Constant columns map to 0 and are recorded on the scaler.
std::pair<Dataset, Scaler> normalize(const Dataset& data,
                                     const std::optional<Scaler>& scaler = std::nullopt);

// Inverse of normalize's transform. Constant columns map back to their
// fitted value.
Dataset denormalize(const Dataset& data, const Scaler& scaler);

// Deterministic shuffle + split. Train gets floor(train_fraction * N) rows.
std::pair<Dataset, Dataset> split_shuffle(const Dataset& data, double train_fraction,
                                          std::uint64_t seed);

}  // namespace marsnet
