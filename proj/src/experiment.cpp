#include "marsnet/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "marsnet/parallel.hpp"
#include "marsnet/rng.hpp"
#include "marsnet/serialize.hpp"
#include "marsnet/synthetic.hpp"

namespace marsnet {

namespace {

// Pins execution to one thread for wall-clock fidelity, restoring on exit.
class SingleThreadGuard {
 public:
  SingleThreadGuard() : prev_(max_threads()) { set_max_threads(1); }
  ~SingleThreadGuard() { set_max_threads(prev_); }
  SingleThreadGuard(const SingleThreadGuard&) = delete;
  SingleThreadGuard& operator=(const SingleThreadGuard&) = delete;

 private:
  int prev_;
};

bool is_wine(const std::string& name) { return name == "wine" || name == "winequality"; }

RawTable load_manifest_table(const DatasetManifest& m) {
  if (!m.csv_path.empty()) return load_csv(m.csv_path, m.header);
  if (m.name == "abalone") return synth_abalone_like();
  if (is_wine(m.name)) return synth_wine_like();
  throw ValidationError("unknown dataset name: " + m.name +
                        " (use 'abalone', 'winequality', or supply a csv path)");
}

std::string manifest_target(const DatasetManifest& m) {
  if (!m.target_column.empty()) return m.target_column;
  if (m.name == "abalone") return "rings";
  if (is_wine(m.name)) return "quality";
  throw ValidationError("target column required for dataset: " + m.name);
}

std::vector<std::string> manifest_categoricals(const DatasetManifest& m) {
  if (!m.categorical_columns.empty()) return m.categorical_columns;
  if (m.name == "abalone" && m.csv_path.empty()) return {"sex"};
  return m.categorical_columns;
}

double test_mse(const DenseNetwork& net, const Dataset& data) {
  return mse_loss(forward(net, data.features), data.targets);
}

double model_mse(const MarsModel& model, const Dataset& data) {
  const Eigen::VectorXd pred = eval_model(model, data.features);
  return (pred - data.targets).squaredNorm() / static_cast<double>(data.n());
}

std::vector<int> network_shape(const DenseNetwork& net) {
  std::vector<int> shape;
  shape.push_back(static_cast<int>(net.input_dim()));
  for (const Layer& layer : net.layers) shape.push_back(static_cast<int>(layer.rows()));
  return shape;
}

DenseNetwork reshape_converted(DenseNetwork net, const ExperimentConfig& config) {
  if (config.hidden_widths.empty()) return net;
  std::vector<Eigen::Index> full;
  full.push_back(net.input_dim());
  for (Eigen::Index w : config.hidden_widths) full.push_back(w);
  full.push_back(net.output_dim());
  return reshape_to(net, full, config.jitter, mix_seed(config.data.split_seed, 0x77));
}

ArmResult train_arm(DenseNetwork& net, const Dataset& train_data, const Dataset& test_data,
                    const TrainConfig& tc) {
  ArmResult arm;
  arm.before_test_mse = test_mse(net, test_data);
  try {
    arm.history = train(net, train_data.features, train_data.targets, tc);
    arm.after_test_mse = test_mse(net, test_data);
  } catch (const NumericError& e) {
    arm.diverged = true;
    arm.failure = e.what();
    arm.after_test_mse = std::numeric_limits<double>::infinity();
  }
  return arm;
}

std::string join_knots(const std::vector<double>& knots) {
  std::string out;
  for (std::size_t i = 0; i < knots.size(); ++i) {
    if (i) out += ';';
    out += format_double(knots[i]);
  }
  return out;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open file for writing: " + path);
  return out;
}

struct Aggregate {
  double mean = 0.0;
  double min = std::numeric_limits<double>::infinity();
  double max = -std::numeric_limits<double>::infinity();
};

Aggregate aggregate(const std::vector<double>& values) {
  Aggregate a;
  double sum = 0.0;
  for (double v : values) {
    sum += v;
    a.min = std::min(a.min, v);
    a.max = std::max(a.max, v);
  }
  a.mean = values.empty() ? 0.0 : sum / static_cast<double>(values.size());
  return a;
}

}  // namespace

void DatasetManifest::validate() const {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ValidationError("train_fraction must lie in (0, 1)");
  if (csv_path.empty() && !(name == "abalone" || is_wine(name)))
    throw ValidationError("unknown dataset name: " + name);
}

void ExperimentConfig::validate() const {
  data.validate();
  fit.validate();
  train.validate();
  if (seeds.empty()) throw ValidationError("at least one seed is required");
  if (jitter < 0.0) throw ValidationError("jitter must be nonnegative");
  for (Eigen::Index w : hidden_widths) {
    if (w < 1) throw ValidationError("hidden widths must be positive");
  }
}

PreparedData prepare_dataset(const DatasetManifest& manifest) {
  manifest.validate();
  RawTable table = load_manifest_table(manifest);
  for (const std::string& column : manifest_categoricals(manifest)) {
    table = encode_categorical(table, column);
  }
  const Dataset all = to_dataset(table, manifest_target(manifest));
  auto [train_raw, test_raw] = split_shuffle(all, manifest.train_fraction, manifest.split_seed);

  PreparedData out;
  auto [train_norm, scaler] = normalize(train_raw, std::nullopt);
  out.train = std::move(train_norm);
  out.scaler = scaler;
  out.test = normalize(test_raw, scaler).first;
  return out;
}

ExperimentReport run_comparison(const ExperimentConfig& config) {
  config.validate();
  const PreparedData data = prepare_dataset(config.data);

  ExperimentReport report;
  report.feature_names = data.train.feature_names;

  FitResult fit = fit_mars(data.train, config.fit);
  report.model = std::move(fit.model);
  report.fit_seconds = fit.fit_seconds;
  report.mars_test_mse = model_mse(report.model, data.test);
  report.importance = feature_importance(report.model);

  ConvertedModel converted = mars_to_network(report.model);
  report.conversion = converted.report;
  DenseNetwork base = reshape_converted(std::move(converted.network), config);
  const std::vector<int> shape = network_shape(base);

  for (std::uint64_t seed : config.seeds) {
    SeedResult result;
    result.seed = seed;
    result.converted_initial = base;
    result.random_initial = random_init(shape, mix_seed(seed, 0x5EED));

    TrainConfig tc = config.train;
    tc.seed = mix_seed(seed, 0xBA7C);  // both arms consume identical batches

    result.converted_trained = result.converted_initial;
    result.converted = train_arm(result.converted_trained, data.train, data.test, tc);

    result.random_trained = result.random_initial;
    result.random = train_arm(result.random_trained, data.train, data.test, tc);

    result.shift = parameter_shift_report(result.converted_initial, result.converted_trained);
    report.seeds.push_back(std::move(result));
  }
  return report;
}

TimingTable run_timing(const ExperimentConfig& config) {
  config.validate();
  if (config.train.epochs < 1) throw ValidationError("timing needs at least one epoch");
  SingleThreadGuard pin;

  const PreparedData data = prepare_dataset(config.data);

  fit_mars(data.train, config.fit);  // warm-up, discarded
  FitResult fit = fit_mars(data.train, config.fit);
  for (int rep = 1; rep < 3; ++rep) {
    // The fit is deterministic, so repeats only tighten the timer.
    FitResult again = fit_mars(data.train, config.fit);
    if (again.fit_seconds < fit.fit_seconds) fit = std::move(again);
  }

  ConvertedModel converted = mars_to_network(fit.model);
  DenseNetwork base = reshape_converted(std::move(converted.network), config);

  TrainConfig tc = config.train;
  tc.seed = mix_seed(config.seeds.front(), 0xBA7C);

  const auto timed_total = [&](const DenseNetwork& start) {
    TrainConfig warm = tc;
    warm.epochs = 1;
    DenseNetwork w = start;
    train(w, data.train.features, data.train.targets, warm);  // warm-up, discarded
    DenseNetwork net = start;
    const TrainHistory history = train(net, data.train.features, data.train.targets, tc);
    return history.epochs.back().seconds;
  };

  TimingTable table;
  table.fit_seconds = fit.fit_seconds;
  table.epochs = tc.epochs;
  table.converted_total_seconds = timed_total(base);
  table.converted_per_epoch = table.converted_total_seconds / tc.epochs;
  const DenseNetwork random_start = random_init(network_shape(base), mix_seed(config.seeds.front(), 0x5EED));
  table.random_total_seconds = timed_total(random_start);
  table.random_per_epoch = table.random_total_seconds / tc.epochs;
  table.fit_to_epoch_ratio = table.fit_seconds / table.converted_per_epoch;
  return table;
}

ScalingTable run_scaling(const std::vector<Eigen::Index>& sizes, const ExperimentConfig& config,
                         int repeats) {
  config.validate();
  if (sizes.size() < 3) throw ValidationError("need >= 3 points");
  for (std::size_t i = 1; i < sizes.size(); ++i) {
    if (sizes[i] <= sizes[i - 1]) throw ValidationError("sizes must be strictly increasing");
  }
  if (repeats < 1) throw ValidationError("repeats must be positive");
  SingleThreadGuard pin;

  // Normalize over the whole table, then subsample deterministically.
  RawTable table = load_manifest_table(config.data);
  for (const std::string& column : manifest_categoricals(config.data)) {
    table = encode_categorical(table, column);
  }
  Dataset all = to_dataset(table, manifest_target(config.data));
  all = normalize(all, std::nullopt).first;
  if (sizes.back() > all.n()) throw ValidationError("subsample larger than dataset");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(all.n()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 gen(config.data.split_seed);
  shuffle_in_place(order, gen);

  const auto subsample = [&](Eigen::Index n) {
    Dataset sub;
    sub.feature_names = all.feature_names;
    sub.features.resize(n, all.dim());
    sub.targets.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      sub.features.row(i) = all.features.row(order[static_cast<std::size_t>(i)]);
      sub.targets[i] = all.targets[order[static_cast<std::size_t>(i)]];
    }
    return sub;
  };

  fit_mars(subsample(sizes.front()), config.fit);  // warm-up, discarded

  ScalingTable out;
  out.sizes = sizes;
  for (Eigen::Index n : sizes) {
    const Dataset sub = subsample(n);
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < repeats; ++r) {
      best = std::min(best, fit_mars(sub, config.fit).fit_seconds);
    }
    out.seconds.push_back(best);
  }

  Eigen::MatrixXd design(static_cast<Eigen::Index>(sizes.size()), 2);
  Eigen::VectorXd logt(static_cast<Eigen::Index>(sizes.size()));
  for (Eigen::Index i = 0; i < design.rows(); ++i) {
    design(i, 0) = 1.0;
    design(i, 1) = std::log(static_cast<double>(sizes[static_cast<std::size_t>(i)]));
    logt[i] = std::log(std::max(out.seconds[static_cast<std::size_t>(i)], 1e-9));
  }
  out.slope = least_squares(design, logt).coefficients[1];
  return out;
}

void emit_reports(const ExperimentReport& report, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const auto path = [&](const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
  };

  save_json(model_to_json(report.model), path("mars_model.json"));
  save_json(conversion_report_to_json(report.conversion), path("conversion_report.json"));

  {
    auto out = open_out(path("feature_importance.csv"));
    out << "rank,dimension,name,importance,knots\n";
    int rank = 1;
    for (int dim : report.importance.ranking) {
      const auto& entry = report.importance.per_dimension[static_cast<std::size_t>(dim)];
      const std::string name = dim < static_cast<int>(report.feature_names.size())
                                   ? report.feature_names[static_cast<std::size_t>(dim)]
                                   : "";
      out << rank++ << ',' << entry.dimension << ',' << name << ','
          << format_double(entry.importance) << ',' << join_knots(entry.knots) << '\n';
    }
  }

  {
    auto out = open_out(path("error_table.csv"));
    out << "seed,converted_before,converted_after,random_before,random_after\n";
    std::vector<double> cb, ca, rb, ra;
    for (const SeedResult& s : report.seeds) {
      out << s.seed << ',' << format_double(s.converted.before_test_mse) << ','
          << format_double(s.converted.after_test_mse) << ','
          << format_double(s.random.before_test_mse) << ','
          << format_double(s.random.after_test_mse) << '\n';
      cb.push_back(s.converted.before_test_mse);
      ca.push_back(s.converted.after_test_mse);
      rb.push_back(s.random.before_test_mse);
      ra.push_back(s.random.after_test_mse);
    }
    const Aggregate acb = aggregate(cb), aca = aggregate(ca), arb = aggregate(rb),
                    ara = aggregate(ra);
    const auto row = [&](const char* label, double a, double b, double c, double d) {
      out << label << ',' << format_double(a) << ',' << format_double(b) << ','
          << format_double(c) << ',' << format_double(d) << '\n';
    };
    row("mean", acb.mean, aca.mean, arb.mean, ara.mean);
    row("min", acb.min, aca.min, arb.min, ara.min);
    row("max", acb.max, aca.max, arb.max, ara.max);
  }

  {
    auto out = open_out(path("timing.csv"));
    out << "seed,fit_seconds,converted_total,converted_per_epoch,random_total,random_per_epoch\n";
    for (const SeedResult& s : report.seeds) {
      const auto total = [](const TrainHistory& h) {
        return h.epochs.empty() ? 0.0 : h.epochs.back().seconds;
      };
      const auto per_epoch = [&](const TrainHistory& h) {
        return h.epochs.empty() ? 0.0 : total(h) / static_cast<double>(h.epochs.size());
      };
      out << s.seed << ',' << format_double(report.fit_seconds) << ','
          << format_double(total(s.converted.history)) << ','
          << format_double(per_epoch(s.converted.history)) << ','
          << format_double(total(s.random.history)) << ','
          << format_double(per_epoch(s.random.history)) << '\n';
    }
  }

  for (const SeedResult& s : report.seeds) {
    const std::string tag = "seed" + std::to_string(s.seed);
    {
      auto out = open_out(path("loss_curves_" + tag + ".csv"));
      out << "epoch,converted_loss,random_loss\n";
      const std::size_t rows =
          std::max(s.converted.history.epochs.size(), s.random.history.epochs.size());
      for (std::size_t i = 0; i < rows; ++i) {
        out << (i + 1) << ',';
        if (i < s.converted.history.epochs.size())
          out << format_double(s.converted.history.epochs[i].train_loss);
        out << ',';
        if (i < s.random.history.epochs.size())
          out << format_double(s.random.history.epochs[i].train_loss);
        out << '\n';
      }
    }
    write_shift_report_csv(s.shift, path("shift_" + tag + ".csv"));
    save_json(network_to_json(s.converted_initial), path("converted_initial_" + tag + ".json"));
    save_json(network_to_json(s.converted_trained), path("converted_trained_" + tag + ".json"));
    save_json(network_to_json(s.random_initial), path("random_initial_" + tag + ".json"));
    save_json(network_to_json(s.random_trained), path("random_trained_" + tag + ".json"));
  }
}

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> items;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

bool parse_bool(const std::string& value, int line) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ValidationError("config line " + std::to_string(line) + ": expected true/false, got '" +
                        value + "'");
}

double parse_num(const std::string& value, int line) {
  try {
    return parse_double_strict(value);
  } catch (const ValidationError&) {
    throw ValidationError("config line " + std::to_string(line) + ": expected a number, got '" +
                          value + "'");
  }
}

}  // namespace

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file: " + path);

  ExperimentConfig config;
  std::string section;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ValidationError("config line " + std::to_string(lineno) + ": unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "data" && section != "fit" && section != "train" && section != "experiment")
        throw ValidationError("config line " + std::to_string(lineno) + ": unknown section [" +
                              section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));

    const auto unknown = [&]() -> ValidationError {
      return ValidationError("config line " + std::to_string(lineno) + ": unknown key '" + key +
                             "' in section [" + section + "]");
    };

    if (section == "data") {
      if (key == "name") config.data.name = value;
      else if (key == "csv") config.data.csv_path = value;
      else if (key == "target") config.data.target_column = value;
      else if (key == "categorical") config.data.categorical_columns = split_list(value);
      else if (key == "header") config.data.header = parse_bool(value, lineno);
      else if (key == "train_fraction") config.data.train_fraction = parse_num(value, lineno);
      else if (key == "split_seed")
        config.data.split_seed = static_cast<std::uint64_t>(parse_num(value, lineno));
      else throw unknown();
    } else if (section == "fit") {
      if (key == "max_basis") config.fit.max_basis = static_cast<int>(parse_num(value, lineno));
      else if (key == "gcv_knot_penalty") config.fit.gcv_knot_penalty = parse_num(value, lineno);
      else if (key == "knot_subsample")
        config.fit.knot_subsample = static_cast<int>(parse_num(value, lineno));
      else if (key == "mars_train_fraction")
        config.fit.mars_train_fraction = parse_num(value, lineno);
      else if (key == "fast_update") config.fit.fast_update = parse_bool(value, lineno);
      else throw unknown();
    } else if (section == "train") {
      if (key == "epochs") config.train.epochs = static_cast<int>(parse_num(value, lineno));
      else if (key == "batch_size")
        config.train.batch_size = static_cast<int>(parse_num(value, lineno));
      else if (key == "learning_rate") config.train.learning_rate = parse_num(value, lineno);
      else if (key == "divergence_threshold")
        config.train.divergence_threshold = parse_num(value, lineno);
      else throw unknown();
    } else if (section == "experiment") {
      if (key == "seeds") {
        config.seeds.clear();
        for (const std::string& s : split_list(value))
          config.seeds.push_back(static_cast<std::uint64_t>(parse_num(s, lineno)));
      } else if (key == "hidden_widths") {
        config.hidden_widths.clear();
        for (const std::string& s : split_list(value))
          config.hidden_widths.push_back(static_cast<Eigen::Index>(parse_num(s, lineno)));
      } else if (key == "jitter") {
        config.jitter = parse_num(value, lineno);
      } else if (key == "output_dir") {
        config.output_dir = value;
      } else {
        throw unknown();
      }
    } else {
      throw ValidationError("config line " + std::to_string(lineno) +
                            ": key outside of any section");
    }
  }
  return config;
}

void write_timing_csv(const TimingTable& table, const std::string& path) {
  auto out = open_out(path);
  out << "fit_seconds,epochs,converted_total,converted_per_epoch,random_total,random_per_epoch,"
         "fit_to_epoch_ratio\n";
  out << format_double(table.fit_seconds) << ',' << table.epochs << ','
      << format_double(table.converted_total_seconds) << ','
      << format_double(table.converted_per_epoch) << ','
      << format_double(table.random_total_seconds) << ','
      << format_double(table.random_per_epoch) << ','
      << format_double(table.fit_to_epoch_ratio) << '\n';
}

void write_scaling_csv(const ScalingTable& table, const std::string& path) {
  auto out = open_out(path);
  out << "n,seconds\n";
  for (std::size_t i = 0; i < table.sizes.size(); ++i) {
    out << table.sizes[i] << ',' << format_double(table.seconds[i]) << '\n';
  }
  out << "slope," << format_double(table.slope) << '\n';
}

}  // namespace marsnet
