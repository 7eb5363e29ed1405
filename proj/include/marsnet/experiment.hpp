#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "marsnet/convert.hpp"
#include "marsnet/data.hpp"
#include "marsnet/mars.hpp"
#include "marsnet/network.hpp"

namespace marsnet {

struct DatasetManifest {
  // "abalone" or "winequality": picks the builtin generator when csv_path is
  // empty and supplies target/categorical defaults either way.
  std::string name = "abalone";
  std::string csv_path;
  std::string target_column;
  std::vector<std::string> categorical_columns;
  bool header = true;
  double train_fraction = 0.7;
  std::uint64_t split_seed = 13;

  void validate() const;
};

struct PreparedData {
  Dataset train;
  Dataset test;
  Scaler scaler;
};

// Load (or generate), one-hot encode, split, then min-max normalize with the
// scaler fitted on the training split only.
PreparedData prepare_dataset(const DatasetManifest& manifest);

struct ExperimentConfig {
  DatasetManifest data;
  FitConfig fit;
  TrainConfig train;
  // Hidden widths of the training shape; empty keeps the raw converted shape
  // (d -> M -> 1). Input/output widths are always taken from the converted
  // network.
  std::vector<Eigen::Index> hidden_widths;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  double jitter = 0.0;
  std::string output_dir = "reports";

  void validate() const;
};

// Key-value config with [data], [fit], [train], and [experiment] sections;
// the format is documented in the README. Unknown keys are rejected.
ExperimentConfig load_experiment_config(const std::string& path);

struct ArmResult {
  double before_test_mse = 0.0;
  double after_test_mse = 0.0;
  TrainHistory history;
  bool diverged = false;
  std::string failure;
};

struct SeedResult {
  std::uint64_t seed = 0;
  ArmResult converted;
  ArmResult random;
  ShiftReport shift;  // converted arm, initial vs trained
  DenseNetwork converted_initial;
  DenseNetwork converted_trained;
  DenseNetwork random_initial;
  DenseNetwork random_trained;
};

struct ExperimentReport {
  MarsModel model;
  double fit_seconds = 0.0;
  double mars_test_mse = 0.0;
  ConversionReport conversion;
  FeatureImportance importance;
  std::vector<std::string> feature_names;
  std::vector<SeedResult> seeds;
};

// Fits once, then per seed trains a converted-init and a random-init network
// of identical shape on identical batch sequences. Divergence in one arm is
// recorded and the run continues.
ExperimentReport run_comparison(const ExperimentConfig& config);

struct TimingTable {
  double fit_seconds = 0.0;
  int epochs = 0;
  double converted_total_seconds = 0.0;
  double converted_per_epoch = 0.0;
  double random_total_seconds = 0.0;
  double random_per_epoch = 0.0;
  double fit_to_epoch_ratio = 0.0;  // fit_seconds / converted_per_epoch
};

// Single-threaded wall clock; one warm-up fit and one warm-up epoch are run
// and discarded before measuring.
TimingTable run_timing(const ExperimentConfig& config);

struct ScalingTable {
  std::vector<Eigen::Index> sizes;
  std::vector<double> seconds;
  double slope = 0.0;  // fitted log-log slope of seconds vs N
};

// Fits on deterministic subsamples of each size (d and the fit config held
// fixed) and reports the wall-clock trend; each size takes the fastest of
// `repeats` runs.
ScalingTable run_scaling(const std::vector<Eigen::Index>& sizes, const ExperimentConfig& config,
                         int repeats = 3);

// Writes loss curves, error and timing tables, shift and importance reports,
// and the serialized models into `dir`. Pure function of the report: re-runs
// reproduce identical bytes.
void emit_reports(const ExperimentReport& report, const std::string& dir);

void write_timing_csv(const TimingTable& table, const std::string& path);
void write_scaling_csv(const ScalingTable& table, const std::string& path);

}  // namespace marsnet
