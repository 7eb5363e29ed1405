#include "marsnet/serialize.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace marsnet {

namespace {

using nlohmann::json;

// JSON has no literals for non-finite doubles, so those (reachable only in
// GCV records of degenerate fits) are written as strings.
json encode_double(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double decode_double(const json& j, const char* field) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw ValidationError(std::string("invalid numeric value for field '") + field + "'");
}

template <class Fn>
auto guarded(const char* what, Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed ") + what + ": " + e.what());
  }
}

std::string direction_name(HingeDirection d) {
  return d == HingeDirection::Positive ? "positive" : "negative";
}

HingeDirection direction_from(const std::string& s) {
  if (s == "positive") return HingeDirection::Positive;
  if (s == "negative") return HingeDirection::Negative;
  throw ValidationError("unknown hinge direction: " + s);
}

std::string activation_name(Activation a) {
  return a == Activation::ReLU ? "relu" : "identity";
}

Activation activation_from(const std::string& s) {
  if (s == "relu") return Activation::ReLU;
  if (s == "identity") return Activation::Identity;
  throw ValidationError("unknown activation: " + s);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

double parse_double_strict(const std::string& text) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto res = std::from_chars(begin, end, value);
  if (res.ec != std::errc{} || res.ptr != end)
    throw ValidationError("cannot parse number: '" + text + "'");
  return value;
}

nlohmann::json model_to_json(const MarsModel& model) {
  json terms = json::array();
  for (const MarsTerm& term : model.terms) {
    terms.push_back({{"dim", term.basis.dimension},
                     {"knot", term.basis.knot},
                     {"direction", direction_name(term.basis.direction)},
                     {"coef", term.coefficient}});
  }
  json trail = json::array();
  for (const GcvRecord& rec : model.gcv_trail) {
    trail.push_back({{"model_size", rec.model_size},
                     {"rss", rec.rss},
                     {"effective_params", rec.effective_params},
                     {"gcv", encode_double(rec.gcv)}});
  }
  return json{{"intercept", model.intercept},
              {"terms", std::move(terms)},
              {"d", model.input_dim},
              {"fit_config",
               {{"max_basis", model.config.max_basis},
                {"gcv_knot_penalty", model.config.gcv_knot_penalty},
                {"knot_subsample", model.config.knot_subsample},
                {"mars_train_fraction", model.config.mars_train_fraction},
                {"fast_update", model.config.fast_update}}},
              {"gcv_trail", std::move(trail)}};
}

MarsModel model_from_json(const nlohmann::json& j) {
  return guarded("model JSON", [&] {
    MarsModel model;
    model.intercept = j.at("intercept").get<double>();
    model.input_dim = j.at("d").get<int>();
    for (const json& t : j.at("terms")) {
      MarsTerm term;
      term.basis.dimension = t.at("dim").get<int>();
      term.basis.knot = t.at("knot").get<double>();
      term.basis.direction = direction_from(t.at("direction").get<std::string>());
      term.coefficient = t.at("coef").get<double>();
      model.terms.push_back(term);
    }
    const json& cfg = j.at("fit_config");
    model.config.max_basis = cfg.at("max_basis").get<int>();
    model.config.gcv_knot_penalty = cfg.at("gcv_knot_penalty").get<double>();
    model.config.knot_subsample = cfg.at("knot_subsample").get<int>();
    model.config.mars_train_fraction = cfg.at("mars_train_fraction").get<double>();
    model.config.fast_update = cfg.at("fast_update").get<bool>();
    for (const json& r : j.at("gcv_trail")) {
      GcvRecord rec;
      rec.model_size = r.at("model_size").get<int>();
      rec.rss = r.at("rss").get<double>();
      rec.effective_params = r.at("effective_params").get<double>();
      rec.gcv = decode_double(r.at("gcv"), "gcv");
      model.gcv_trail.push_back(rec);
    }
    return model;
  });
}

nlohmann::json network_to_json(const DenseNetwork& net) {
  json layers = json::array();
  for (const Layer& layer : net.layers) {
    json weights = json::array();
    for (Eigen::Index r = 0; r < layer.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.cols(); ++c) weights.push_back(layer.weights(r, c));
    }
    json bias = json::array();
    for (Eigen::Index r = 0; r < layer.rows(); ++r) bias.push_back(layer.bias[r]);
    layers.push_back({{"rows", layer.rows()},
                      {"cols", layer.cols()},
                      {"weights", std::move(weights)},
                      {"bias", std::move(bias)},
                      {"activation", activation_name(layer.activation)}});
  }
  return json{{"layers", std::move(layers)}};
}

DenseNetwork network_from_json(const nlohmann::json& j) {
  return guarded("network JSON", [&] {
    DenseNetwork net;
    for (const json& jl : j.at("layers")) {
      Layer layer;
      const auto rows = jl.at("rows").get<Eigen::Index>();
      const auto cols = jl.at("cols").get<Eigen::Index>();
      const json& weights = jl.at("weights");
      const json& bias = jl.at("bias");
      if (static_cast<Eigen::Index>(weights.size()) != rows * cols)
        throw ValidationError("weight count does not match rows*cols");
      if (static_cast<Eigen::Index>(bias.size()) != rows)
        throw ValidationError("bias count does not match rows");
      layer.weights.resize(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
          layer.weights(r, c) = weights[static_cast<std::size_t>(r * cols + c)].get<double>();
        }
      }
      layer.bias.resize(rows);
      for (Eigen::Index r = 0; r < rows; ++r)
        layer.bias[r] = bias[static_cast<std::size_t>(r)].get<double>();
      layer.activation = activation_from(jl.at("activation").get<std::string>());
      net.layers.push_back(std::move(layer));
    }
    net.validate();
    return net;
  });
}

nlohmann::json lattice_to_json(const LatticePwl& lattice) {
  json pieces = json::array();
  for (const auto& theta : lattice.pieces) {
    json row = json::array();
    for (Eigen::Index i = 0; i < theta.size(); ++i) row.push_back(theta[i]);
    pieces.push_back(std::move(row));
  }
  json groups = json::array();
  for (const auto& group : lattice.groups) groups.push_back(group);
  return json{{"d", lattice.d}, {"pieces", std::move(pieces)}, {"groups", std::move(groups)}};
}

LatticePwl lattice_from_json(const nlohmann::json& j) {
  return guarded("lattice JSON", [&] {
    LatticePwl lattice;
    lattice.d = j.at("d").get<int>();
    for (const json& row : j.at("pieces")) {
      Eigen::VectorXd theta(static_cast<Eigen::Index>(row.size()));
      for (Eigen::Index i = 0; i < theta.size(); ++i)
        theta[i] = row[static_cast<std::size_t>(i)].get<double>();
      lattice.pieces.push_back(std::move(theta));
    }
    for (const json& group : j.at("groups")) {
      lattice.groups.push_back(group.get<std::vector<int>>());
    }
    lattice.validate();
    return lattice;
  });
}

nlohmann::json conversion_report_to_json(const ConversionReport& report) {
  json sources = json::array();
  for (const BasisFunction& b : report.unit_sources) {
    sources.push_back(
        {{"dim", b.dimension}, {"knot", b.knot}, {"direction", direction_name(b.direction)}});
  }
  return json{{"hidden_width", report.hidden_width},
              {"unit_sources", std::move(sources)},
              {"max_abs_deviation", report.max_abs_deviation}};
}

nlohmann::json shift_report_to_json(const ShiftReport& report) {
  json layers = json::array();
  for (const LayerShift& s : report.layers) {
    layers.push_back({{"layer", s.layer},
                      {"w_delta_frobenius", s.w_delta_frobenius},
                      {"b_delta_norm", s.b_delta_norm},
                      {"relative_shift", s.relative_shift},
                      {"max_abs_change", s.max_abs_change}});
  }
  return json{{"layers", std::move(layers)}};
}

void save_json(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open file for writing: " + path);
  out << j.dump(2) << '\n';
  if (!out) throw NumericError("failed writing " + path);
}

nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open file: " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("invalid JSON in " + path + ": " + e.what());
  }
}

void write_train_history_csv(const TrainHistory& history, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open file for writing: " + path);
  out << "epoch,train_loss,seconds\n";
  for (const EpochRecord& rec : history.epochs) {
    out << rec.epoch << ',' << format_double(rec.train_loss) << ',' << format_double(rec.seconds)
        << '\n';
  }
  if (!out) throw NumericError("failed writing " + path);
}

TrainHistory read_train_history_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open file: " + path);
  TrainHistory history;
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty history file: " + path);
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 3) throw ValidationError("malformed history row in " + path);
    EpochRecord rec;
    rec.epoch = static_cast<int>(parse_double_strict(cells[0]));
    rec.train_loss = parse_double_strict(cells[1]);
    rec.seconds = parse_double_strict(cells[2]);
    history.epochs.push_back(rec);
  }
  return history;
}

void write_shift_report_csv(const ShiftReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open file for writing: " + path);
  out << "layer,w_delta_frobenius,b_delta_norm,relative_shift,max_abs_change\n";
  for (const LayerShift& s : report.layers) {
    out << s.layer << ',' << format_double(s.w_delta_frobenius) << ','
        << format_double(s.b_delta_norm) << ',' << format_double(s.relative_shift) << ','
        << format_double(s.max_abs_change) << '\n';
  }
  if (!out) throw NumericError("failed writing " + path);
}

ShiftReport read_shift_report_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open file: " + path);
  ShiftReport report;
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty shift report: " + path);
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 5) throw ValidationError("malformed shift row in " + path);
    LayerShift s;
    s.layer = static_cast<int>(parse_double_strict(cells[0]));
    s.w_delta_frobenius = parse_double_strict(cells[1]);
    s.b_delta_norm = parse_double_strict(cells[2]);
    s.relative_shift = parse_double_strict(cells[3]);
    s.max_abs_change = parse_double_strict(cells[4]);
    report.layers.push_back(s);
  }
  return report;
}

}  // namespace marsnet
