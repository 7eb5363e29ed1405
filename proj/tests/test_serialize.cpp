#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <limits>
#include <string>

#include "marsnet/serialize.hpp"

using namespace marsnet;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

MarsModel sample_model() {
  MarsModel m;
  m.input_dim = 3;
  m.intercept = 0.1 + 0.2;  // deliberately non-representable sum
  m.terms.push_back({1.0 / 3.0, {0, 0.30000000000000004, HingeDirection::Positive}});
  m.terms.push_back({-2.75, {2, -1.5, HingeDirection::Negative}});
  m.config.max_basis = 10;
  m.config.gcv_knot_penalty = 3.0;
  m.config.knot_subsample = 16;
  m.config.mars_train_fraction = 0.5;
  m.config.fast_update = true;
  m.gcv_trail.push_back({0, 12.5, 1.0, 13.0});
  m.gcv_trail.push_back({2, 1.25, 6.0, std::numeric_limits<double>::infinity()});
  return m;
}

}  // namespace

TEST_CASE("doubles round-trip through their shortest text form") {
  for (double v : {0.0, -0.0, 1.0, -1.5, 0.1, 1.0 / 3.0, 6.02e23, 5e-324,
                   std::numeric_limits<double>::max(), 0.30000000000000004}) {
    const std::string s = format_double(v);
    const double back = parse_double_strict(s);
    CHECK(std::memcmp(&back, &v, sizeof v) == 0);
  }
  CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(format_double(-std::numeric_limits<double>::infinity()) == "-inf");
  CHECK(std::isinf(parse_double_strict("inf")));
  CHECK(parse_double_strict("-inf") < 0);
  CHECK_THROWS_AS(parse_double_strict("zebra"), ValidationError);
  CHECK_THROWS_AS(parse_double_strict("1.5x"), ValidationError);
  CHECK_THROWS_AS(parse_double_strict(""), ValidationError);
}

TEST_CASE("models round-trip through JSON including an infinite trail entry") {
  const MarsModel m = sample_model();
  const nlohmann::json j = model_to_json(m);
  const MarsModel back = model_from_json(j);

  CHECK(back.input_dim == m.input_dim);
  CHECK(back.intercept == m.intercept);
  REQUIRE(back.terms.size() == m.terms.size());
  for (std::size_t i = 0; i < m.terms.size(); ++i) {
    CHECK(back.terms[i].coefficient == m.terms[i].coefficient);
    CHECK(back.terms[i].basis.dimension == m.terms[i].basis.dimension);
    CHECK(back.terms[i].basis.knot == m.terms[i].basis.knot);
    CHECK(back.terms[i].basis.direction == m.terms[i].basis.direction);
  }
  CHECK(back.config.max_basis == m.config.max_basis);
  CHECK(back.config.gcv_knot_penalty == m.config.gcv_knot_penalty);
  CHECK(back.config.knot_subsample == m.config.knot_subsample);
  CHECK(back.config.mars_train_fraction == m.config.mars_train_fraction);
  CHECK(back.config.fast_update == m.config.fast_update);
  REQUIRE(back.gcv_trail.size() == 2);
  CHECK(back.gcv_trail[0].rss == 12.5);
  CHECK(std::isinf(back.gcv_trail[1].gcv));
  CHECK(back.gcv_trail[1].model_size == 2);

  nlohmann::json broken = j;
  broken.erase("intercept");
  CHECK_THROWS_AS(model_from_json(broken), ValidationError);
}

TEST_CASE("networks round-trip through JSON bit-exactly") {
  DenseNetwork net;
  Layer h;
  h.weights.resize(2, 3);
  h.weights << 1.0 / 3.0, -0.1, 5e-324, 2.0, 0.0, -7.25;
  h.bias.resize(2);
  h.bias << 0.25, -1.0 / 7.0;
  h.activation = Activation::ReLU;
  Layer o;
  o.weights.resize(1, 2);
  o.weights << 0.1 + 0.2, 1e-300;
  o.bias.resize(1);
  o.bias << -0.0;
  o.activation = Activation::Identity;
  net.layers = {h, o};

  const DenseNetwork back = network_from_json(network_to_json(net));
  REQUIRE(back.layers.size() == 2);
  CHECK(back.layers[0].weights == net.layers[0].weights);
  CHECK(back.layers[0].bias == net.layers[0].bias);
  CHECK(back.layers[0].activation == Activation::ReLU);
  CHECK(back.layers[1].weights == net.layers[1].weights);
  CHECK(back.layers[1].activation == Activation::Identity);

  nlohmann::json j = network_to_json(net);
  j["layers"][0]["weights"].erase(0);
  CHECK_THROWS_AS(network_from_json(j), ValidationError);
}

TEST_CASE("lattices round-trip through JSON") {
  LatticePwl lat;
  lat.d = 2;
  Eigen::VectorXd t0(3), t1(3);
  t0 << 0.5, 1.0 / 3.0, -2.0;
  t1 << -0.25, 0.0, 1e-9;
  lat.pieces = {t0, t1};
  lat.groups = {{0, 1}, {1}};

  const LatticePwl back = lattice_from_json(lattice_to_json(lat));
  CHECK(back.d == 2);
  REQUIRE(back.pieces.size() == 2);
  CHECK(back.pieces[0] == lat.pieces[0]);
  CHECK(back.pieces[1] == lat.pieces[1]);
  CHECK(back.groups == lat.groups);

  nlohmann::json j = lattice_to_json(lat);
  j.erase("groups");
  CHECK_THROWS_AS(lattice_from_json(j), ValidationError);
}

TEST_CASE("report serializers expose every field") {
  ConversionReport conv;
  conv.hidden_width = 4;
  conv.max_abs_deviation = 1e-15;
  conv.unit_sources.push_back({1, 0.5, HingeDirection::Negative});
  const nlohmann::json cj = conversion_report_to_json(conv);
  CHECK(cj.at("hidden_width").get<int>() == 4);
  CHECK(cj.at("unit_sources").size() == 1);
  CHECK(cj.at("unit_sources")[0].at("dim").get<int>() == 1);
  CHECK(cj.at("unit_sources")[0].at("knot").get<double>() == 0.5);

  ShiftReport shift;
  shift.layers.push_back({0, 1.5, 0.25, 0.3, 0.9});
  const nlohmann::json sj = shift_report_to_json(shift);
  CHECK(sj.at("layers")[0].at("w_delta_frobenius").get<double>() == 1.5);
  CHECK(sj.at("layers")[0].at("max_abs_change").get<double>() == 0.9);
}

TEST_CASE("json files save and load") {
  const std::string path = temp_path("marsnet_serialize_rt.json");
  const nlohmann::json j = model_to_json(sample_model());
  save_json(j, path);
  const nlohmann::json back = load_json(path);
  CHECK(back == j);
  std::remove(path.c_str());

  CHECK_THROWS_AS(load_json(temp_path("marsnet_missing.json")), ValidationError);

  const std::string garbled = temp_path("marsnet_garbled.json");
  {
    std::FILE* f = std::fopen(garbled.c_str(), "w");
    std::fputs("{not json", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_json(garbled), ValidationError);
  std::remove(garbled.c_str());
}

TEST_CASE("train history CSV round-trips") {
  TrainHistory h;
  h.epochs.push_back({1, 0.5, 0.001});
  h.epochs.push_back({2, 0.25, 0.4});
  h.epochs.push_back({3, 1.0 / 3.0, 1.5});

  const std::string path = temp_path("marsnet_history.csv");
  write_train_history_csv(h, path);
  const TrainHistory back = read_train_history_csv(path);
  REQUIRE(back.epochs.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.epochs[i].epoch == h.epochs[i].epoch);
    CHECK(back.epochs[i].train_loss == h.epochs[i].train_loss);
    CHECK(back.epochs[i].seconds == h.epochs[i].seconds);
  }
  std::remove(path.c_str());

  CHECK_THROWS_AS(read_train_history_csv(temp_path("marsnet_no_history.csv")), ValidationError);
}

TEST_CASE("shift report CSV round-trips") {
  ShiftReport r;
  r.layers.push_back({0, 0.125, 1.0 / 3.0, 0.05, 0.25});
  r.layers.push_back({1, 0.0, 0.0, 0.0, 0.0});

  const std::string path = temp_path("marsnet_shift.csv");
  write_shift_report_csv(r, path);
  const ShiftReport back = read_shift_report_csv(path);
  REQUIRE(back.layers.size() == 2);
  CHECK(back.layers[0].layer == 0);
  CHECK(back.layers[0].w_delta_frobenius == 0.125);
  CHECK(back.layers[0].b_delta_norm == 1.0 / 3.0);
  CHECK(back.layers[0].relative_shift == 0.05);
  CHECK(back.layers[0].max_abs_change == 0.25);
  CHECK(back.layers[1].layer == 1);
  std::remove(path.c_str());
}
