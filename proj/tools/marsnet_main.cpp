#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "marsnet/convert.hpp"
#include "marsnet/data.hpp"
#include "marsnet/experiment.hpp"
#include "marsnet/lattice.hpp"
#include "marsnet/mars.hpp"
#include "marsnet/network.hpp"
#include "marsnet/parallel.hpp"
#include "marsnet/serialize.hpp"
#include "marsnet/synthetic.hpp"

namespace {

using namespace marsnet;

std::vector<Eigen::Index> parse_widths(const std::string& text) {
  std::vector<Eigen::Index> widths;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    widths.push_back(static_cast<Eigen::Index>(std::stoll(item)));
  }
  if (widths.empty()) throw ValidationError("empty width list");
  return widths;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    seeds.push_back(static_cast<std::uint64_t>(std::stoull(item)));
  }
  if (seeds.empty()) throw ValidationError("empty seed list");
  return seeds;
}

struct TableOptions {
  std::string data_path;
  std::string target;
  std::vector<std::string> categorical;
  bool no_header = false;
  bool no_normalize = false;
};

void add_table_options(CLI::App* cmd, TableOptions& opts, bool target_required = true) {
  cmd->add_option("--data", opts.data_path, "input CSV path")->required();
  auto* t = cmd->add_option("--target", opts.target, "target column name");
  if (target_required) t->required();
  cmd->add_option("--categorical", opts.categorical, "categorical columns to one-hot encode");
  cmd->add_flag("--no-header", opts.no_header, "CSV has no header row");
  cmd->add_flag("--no-normalize", opts.no_normalize, "skip min-max normalization");
}

Dataset load_table_dataset(const TableOptions& opts) {
  RawTable table = load_csv(opts.data_path, !opts.no_header);
  for (const std::string& column : opts.categorical) table = encode_categorical(table, column);
  Dataset data = to_dataset(table, opts.target);
  if (!opts.no_normalize) data = normalize(data, std::nullopt).first;
  return data;
}

// Shared plumbing for compare/timing/scaling: defaults <- preset <- config
// file <- individual flags.
struct ExperimentCli {
  std::string config_path;
  std::string preset;
  std::string dataset_name;
  std::string csv_path;
  std::string target;
  std::vector<std::string> categorical;
  bool no_header = false;
  double train_fraction = -1.0;
  std::int64_t split_seed = -1;
  int max_basis = -1;
  double penalty = -1.0;
  int knot_subsample = -1;
  double mars_fraction = -1.0;
  int fast_update = -1;
  int epochs = -1;
  int batch_size = -1;
  double learning_rate = -1.0;
  std::string seeds_text;
  std::string hidden_widths_text;
  double jitter = -1.0;
  std::string out_dir;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config file (key-value sections)");
    cmd->add_option("--preset", preset,
                    "tuned defaults for a builtin dataset: abalone or winequality");
    cmd->add_option("--dataset", dataset_name, "builtin dataset name");
    cmd->add_option("--data", csv_path, "CSV path overriding the builtin generator");
    cmd->add_option("--target", target, "target column");
    cmd->add_option("--categorical", categorical, "categorical columns");
    cmd->add_flag("--no-header", no_header, "CSV has no header row");
    cmd->add_option("--train-fraction", train_fraction, "train split fraction");
    cmd->add_option("--split-seed", split_seed, "seed for the train/test shuffle");
    cmd->add_option("--max-basis", max_basis, "spline basis budget");
    cmd->add_option("--penalty", penalty, "knot penalty in the model-selection criterion");
    cmd->add_option("--knot-subsample", knot_subsample, "cap candidate knots per dimension");
    cmd->add_option("--mars-fraction", mars_fraction, "fraction of training rows the fit uses");
    cmd->add_option("--fast-update", fast_update,
                    "1 = incremental candidate scoring, 0 = full refits");
    cmd->add_option("--epochs", epochs, "training epochs");
    cmd->add_option("--batch-size", batch_size, "mini-batch size");
    cmd->add_option("--lr", learning_rate, "SGD learning rate");
    cmd->add_option("--seeds", seeds_text, "comma-separated comparison seeds");
    cmd->add_option("--hidden-widths", hidden_widths_text,
                    "comma-separated hidden widths for reshaping (e.g. 64,64)");
    cmd->add_option("--jitter", jitter, "noise scale for widened units' incoming weights");
    cmd->add_option("--out-dir", out_dir, "report output directory");
  }

  ExperimentConfig build() const {
    ExperimentConfig config;
    if (!config_path.empty()) config = load_experiment_config(config_path);
    else if (!preset.empty()) apply_preset(config, preset);
    if (!dataset_name.empty()) config.data.name = dataset_name;
    if (!csv_path.empty()) config.data.csv_path = csv_path;
    if (!target.empty()) config.data.target_column = target;
    if (!categorical.empty()) config.data.categorical_columns = categorical;
    if (no_header) config.data.header = false;
    if (train_fraction >= 0.0) config.data.train_fraction = train_fraction;
    if (split_seed >= 0) config.data.split_seed = static_cast<std::uint64_t>(split_seed);
    if (max_basis >= 0) config.fit.max_basis = max_basis;
    if (penalty >= 0.0) config.fit.gcv_knot_penalty = penalty;
    if (knot_subsample >= 0) config.fit.knot_subsample = knot_subsample;
    if (mars_fraction >= 0.0) config.fit.mars_train_fraction = mars_fraction;
    if (fast_update >= 0) config.fit.fast_update = fast_update != 0;
    if (epochs >= 0) config.train.epochs = epochs;
    if (batch_size >= 0) config.train.batch_size = batch_size;
    if (learning_rate >= 0.0) config.train.learning_rate = learning_rate;
    if (!seeds_text.empty()) config.seeds = parse_seeds(seeds_text);
    if (!hidden_widths_text.empty()) config.hidden_widths = parse_widths(hidden_widths_text);
    if (jitter >= 0.0) config.jitter = jitter;
    if (!out_dir.empty()) config.output_dir = out_dir;
    return config;
  }

  static void apply_preset(ExperimentConfig& config, const std::string& name) {
    if (name != "abalone" && name != "winequality" && name != "wine")
      throw ValidationError("unknown preset: " + name);
    config.data.name = name == "wine" ? "winequality" : name;
    config.fit.max_basis = 20;
    config.fit.gcv_knot_penalty = 3.0;
    config.fit.knot_subsample = 32;
    config.fit.mars_train_fraction = 0.25;
    config.fit.fast_update = true;
    config.train.epochs = 50;
    config.train.batch_size = 32;
    config.train.learning_rate = 0.01;
  }
};

int run_cli(int argc, char** argv) {
  CLI::App app{"spline-to-network conversion toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  int threads = 1;
  app.add_option("--threads", threads, "worker threads for parallel kernels (default 1)")
      ->each([](const std::string& s) { set_max_threads(std::stoi(s)); });

  // ---- gen-data ----
  auto* gen = app.add_subcommand("gen-data", "write a builtin synthetic dataset as CSV");
  std::string gen_dataset, gen_out;
  std::uint64_t gen_seed = 0;
  gen->add_option("--dataset", gen_dataset, "abalone or winequality")->required();
  gen->add_option("--out", gen_out, "output CSV path")->required();
  gen->add_option("--seed", gen_seed, "generator seed (0 = canonical)");
  gen->callback([&] {
    RawTable table;
    if (gen_dataset == "abalone") {
      table = gen_seed ? synth_abalone_like(gen_seed) : synth_abalone_like();
    } else if (gen_dataset == "winequality" || gen_dataset == "wine") {
      table = gen_seed ? synth_wine_like(gen_seed) : synth_wine_like();
    } else {
      throw ValidationError("unknown dataset: " + gen_dataset);
    }
    save_csv(table, gen_out);
    std::cout << "wrote " << table.n_rows() << " rows to " << gen_out << "\n";
  });

  // ---- fit ----
  auto* fit_cmd = app.add_subcommand("fit", "fit a spline model on a CSV");
  TableOptions fit_table;
  add_table_options(fit_cmd, fit_table);
  FitConfig fit_config;
  std::string fit_out;
  std::uint64_t fit_seed = 0;
  fit_cmd->add_option("--max-basis", fit_config.max_basis, "basis budget");
  fit_cmd->add_option("--penalty", fit_config.gcv_knot_penalty, "knot penalty");
  fit_cmd->add_option("--knot-subsample", fit_config.knot_subsample,
                      "cap candidate knots per dimension");
  fit_cmd->add_option("--fraction", fit_config.mars_train_fraction,
                      "fraction of rows used by the fit");
  fit_cmd->add_flag("--fast-update", fit_config.fast_update, "incremental candidate scoring");
  fit_cmd->add_option("--seed", fit_seed, "accepted for uniformity; the fit is deterministic");
  fit_cmd->add_option("--out", fit_out, "output model JSON")->required();
  fit_cmd->callback([&] {
    (void)fit_seed;
    const Dataset data = load_table_dataset(fit_table);
    const FitResult result = fit_mars(data, fit_config);
    save_json(model_to_json(result.model), fit_out);
    std::cout << "terms=" << result.model.size() << " fit_seconds=" << result.fit_seconds;
    const auto best = std::min_element(
        result.model.gcv_trail.begin(), result.model.gcv_trail.end(),
        [](const GcvRecord& a, const GcvRecord& b) {
          return std::make_pair(a.gcv, a.model_size) < std::make_pair(b.gcv, b.model_size);
        });
    if (best != result.model.gcv_trail.end()) std::cout << " gcv=" << best->gcv;
    std::cout << " -> " << fit_out << "\n";
  });

  // ---- convert ----
  auto* conv_cmd = app.add_subcommand("convert", "convert a model JSON to a network JSON");
  std::string conv_model, conv_out, conv_report;
  conv_cmd->add_option("--model", conv_model, "model JSON path")->required();
  conv_cmd->add_option("--out", conv_out, "output network JSON")->required();
  conv_cmd->add_option("--report", conv_report, "also write the conversion report JSON");
  conv_cmd->callback([&] {
    const MarsModel model = model_from_json(load_json(conv_model));
    const ConvertedModel converted = mars_to_network(model);
    save_json(network_to_json(converted.network), conv_out);
    if (!conv_report.empty())
      save_json(conversion_report_to_json(converted.report), conv_report);
    std::cout << "hidden_width=" << converted.report.hidden_width
              << " max_abs_deviation=" << converted.report.max_abs_deviation << " -> " << conv_out
              << "\n";
  });

  // ---- reshape ----
  auto* resh_cmd = app.add_subcommand("reshape", "grow a network to a larger shape");
  std::string resh_net, resh_widths, resh_out;
  double resh_jitter = 0.0;
  std::uint64_t resh_seed = 0;
  resh_cmd->add_option("--net", resh_net, "network JSON path")->required();
  resh_cmd->add_option("--widths", resh_widths, "full width list, e.g. 10,64,64,1")->required();
  resh_cmd->add_option("--jitter", resh_jitter, "noise scale for new units' incoming weights");
  resh_cmd->add_option("--seed", resh_seed, "jitter seed");
  resh_cmd->add_option("--out", resh_out, "output network JSON")->required();
  resh_cmd->callback([&] {
    const DenseNetwork net = network_from_json(load_json(resh_net));
    const DenseNetwork grown = reshape_to(net, parse_widths(resh_widths), resh_jitter, resh_seed);
    save_json(network_to_json(grown), resh_out);
    std::cout << "layers=" << grown.layers.size() << " -> " << resh_out << "\n";
  });

  // ---- train ----
  auto* train_cmd = app.add_subcommand("train", "train a network on a CSV");
  TableOptions train_table;
  add_table_options(train_cmd, train_table);
  TrainConfig train_config;
  train_config.epochs = 50;
  std::string train_net_path, train_out, train_history;
  train_cmd->add_option("--epochs", train_config.epochs, "training epochs");
  train_cmd->add_option("--batch-size", train_config.batch_size, "mini-batch size");
  train_cmd->add_option("--lr", train_config.learning_rate, "SGD learning rate");
  train_cmd->add_option("--seed", train_config.seed, "batch shuffle seed");
  train_cmd->add_option("--net", train_net_path, "network JSON path")->required();
  train_cmd->add_option("--out", train_out, "output network JSON")->required();
  train_cmd->add_option("--history", train_history, "write per-epoch loss CSV here");
  train_cmd->callback([&] {
    DenseNetwork net = network_from_json(load_json(train_net_path));
    const Dataset data = load_table_dataset(train_table);
    const TrainHistory history = train(net, data.features, data.targets, train_config);
    save_json(network_to_json(net), train_out);
    if (!train_history.empty()) write_train_history_csv(history, train_history);
    if (!history.epochs.empty())
      std::cout << "final_loss=" << history.epochs.back().train_loss << " ";
    std::cout << "epochs=" << history.epochs.size() << " -> " << train_out << "\n";
  });

  // ---- compile-pwl ----
  auto* pwl_cmd = app.add_subcommand("compile-pwl", "compile a lattice PWL JSON into a network");
  std::string pwl_in, pwl_out;
  pwl_cmd->add_option("--lattice", pwl_in, "lattice JSON path")->required();
  pwl_cmd->add_option("--out", pwl_out, "output network JSON")->required();
  pwl_cmd->callback([&] {
    const LatticePwl lattice = lattice_from_json(load_json(pwl_in));
    const CompiledLattice compiled = compile_lattice(lattice);
    save_json(network_to_json(compiled.network), pwl_out);
    std::cout << "gadget_stages=" << compiled.report.gadget_stages
              << " depth_bound=" << compiled.report.depth_bound << " -> " << pwl_out << "\n";
  });

  // ---- compare ----
  auto* cmp_cmd = app.add_subcommand(
      "compare", "fit, convert, and train converted vs random initializations");
  ExperimentCli cmp_cli;
  cmp_cli.attach(cmp_cmd);
  cmp_cmd->callback([&] {
    const ExperimentConfig config = cmp_cli.build();
    const ExperimentReport report = run_comparison(config);
    emit_reports(report, config.output_dir);
    std::cout << "fit_seconds=" << report.fit_seconds << " terms=" << report.model.size()
              << " mars_test_mse=" << report.mars_test_mse << "\n";
    for (const SeedResult& s : report.seeds) {
      std::cout << "seed=" << s.seed << " converted " << s.converted.before_test_mse << " -> "
                << s.converted.after_test_mse << " | random " << s.random.before_test_mse
                << " -> " << s.random.after_test_mse << (s.converted.diverged ? " [converted diverged]" : "")
                << (s.random.diverged ? " [random diverged]" : "") << "\n";
    }
    std::cout << "reports in " << config.output_dir << "\n";
  });

  // ---- timing ----
  auto* time_cmd = app.add_subcommand("timing", "single-threaded fit vs epoch wall clock");
  ExperimentCli time_cli;
  time_cli.attach(time_cmd);
  time_cmd->callback([&] {
    const ExperimentConfig config = time_cli.build();
    const TimingTable table = run_timing(config);
    std::filesystem::create_directories(config.output_dir);
    write_timing_csv(table, (std::filesystem::path(config.output_dir) / "timing_summary.csv").string());
    std::cout << "fit_seconds=" << table.fit_seconds
              << " converted_per_epoch=" << table.converted_per_epoch
              << " random_per_epoch=" << table.random_per_epoch
              << " fit_to_epoch_ratio=" << table.fit_to_epoch_ratio << "\n";
  });

  // ---- scaling ----
  auto* scale_cmd = app.add_subcommand("scaling", "fit wall clock versus sample count");
  ExperimentCli scale_cli;
  std::string sizes_text = "500,1000,2000,4000";
  int repeats = 3;
  scale_cli.attach(scale_cmd);
  scale_cmd->add_option("--sizes", sizes_text, "comma-separated subsample sizes");
  scale_cmd->add_option("--repeats", repeats, "timed repetitions per size (fastest wins)");
  scale_cmd->callback([&] {
    const ExperimentConfig config = scale_cli.build();
    const ScalingTable table = run_scaling(parse_widths(sizes_text), config, repeats);
    std::filesystem::create_directories(config.output_dir);
    write_scaling_csv(table, (std::filesystem::path(config.output_dir) / "scaling.csv").string());
    std::cout << "slope=" << table.slope << "\n";
    for (std::size_t i = 0; i < table.sizes.size(); ++i) {
      std::cout << "n=" << table.sizes[i] << " seconds=" << table.seconds[i] << "\n";
    }
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const marsnet::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const marsnet::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 3;
  }
}
