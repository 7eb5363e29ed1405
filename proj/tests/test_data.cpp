#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "marsnet/data.hpp"
#include "marsnet/synthetic.hpp"

using namespace marsnet;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

RawTable small_table() {
  RawTable t;
  t.column_names = {"size", "kind", "price"};
  t.column_kinds = {ColumnKind::Numeric, ColumnKind::Categorical, ColumnKind::Numeric};
  t.rows = {
      {"1.5", "b", "10"},
      {"2.5", "a", "20"},
      {"3.5", "b", "30"},
      {"4.5", "c", "40"},
  };
  return t;
}

}  // namespace

TEST_CASE("csv round trip preserves cells and header") {
  const std::string path = temp_path("marsnet_data_rt.csv");
  const RawTable t = small_table();
  save_csv(t, path);
  const RawTable back = load_csv(path);
  REQUIRE(back.column_names == t.column_names);
  REQUIRE(back.rows == t.rows);
  CHECK(back.column_kinds[0] == ColumnKind::Numeric);
  CHECK(back.column_kinds[1] == ColumnKind::Categorical);
  CHECK(back.column_kinds[2] == ColumnKind::Numeric);
  std::remove(path.c_str());
}

TEST_CASE("headerless load names columns col0..colK-1") {
  const std::string path = temp_path("marsnet_data_nh.csv");
  {
    std::ofstream out(path);
    out << "1,2\n3,4\n";
  }
  const RawTable t = load_csv(path, false);
  REQUIRE(t.n_cols() == 2);
  CHECK(t.column_names[0] == "col0");
  CHECK(t.column_names[1] == "col1");
  CHECK(t.n_rows() == 2);
  std::remove(path.c_str());
}

TEST_CASE("load_csv rejects missing files and ragged rows") {
  CHECK_THROWS_AS(load_csv(temp_path("marsnet_no_such_file.csv")), ValidationError);
  const std::string path = temp_path("marsnet_data_ragged.csv");
  {
    std::ofstream out(path);
    out << "a,b\n1,2\n3\n";
  }
  CHECK_THROWS_AS(load_csv(path), ValidationError);
  std::remove(path.c_str());
}

TEST_CASE("encode_categorical emits sorted one-hot columns in place") {
  const RawTable enc = encode_categorical(small_table(), "kind");
  REQUIRE(enc.column_names.size() == 5);
  CHECK(enc.column_names[0] == "size");
  CHECK(enc.column_names[1] == "kind=a");
  CHECK(enc.column_names[2] == "kind=b");
  CHECK(enc.column_names[3] == "kind=c");
  CHECK(enc.column_names[4] == "price");
  CHECK(enc.rows[0][1] == "0");
  CHECK(enc.rows[0][2] == "1");
  CHECK(enc.rows[0][3] == "0");
  CHECK(enc.rows[1][1] == "1");
  CHECK(enc.rows[3][3] == "1");
  CHECK_THROWS_AS(encode_categorical(small_table(), "absent"), ValidationError);
  CHECK_THROWS_AS(encode_categorical(small_table(), "size"), ValidationError);
}

TEST_CASE("to_dataset splits features from the target") {
  const RawTable enc = encode_categorical(small_table(), "kind");
  const Dataset d = to_dataset(enc, "price");
  REQUIRE(d.n() == 4);
  REQUIRE(d.dim() == 4);
  CHECK(d.feature_names == std::vector<std::string>{"size", "kind=a", "kind=b", "kind=c"});
  CHECK(d.features(0, 0) == doctest::Approx(1.5));
  CHECK(d.targets[3] == doctest::Approx(40.0));
  CHECK_THROWS_AS(to_dataset(enc, "absent"), ValidationError);
  CHECK_THROWS_AS(to_dataset(small_table(), "price"), ValidationError);  // categorical left in
}

TEST_CASE("normalize maps fitted columns onto [0,1] and records constants") {
  Dataset d;
  d.feature_names = {"a", "flat"};
  d.features.resize(3, 2);
  d.features << 1.0, 7.0, 2.0, 7.0, 3.0, 7.0;
  d.targets.resize(3);
  d.targets << 10.0, 20.0, 30.0;

  const auto [norm, scaler] = normalize(d);
  CHECK(norm.features(0, 0) == doctest::Approx(0.0));
  CHECK(norm.features(2, 0) == doctest::Approx(1.0));
  CHECK(norm.features(1, 1) == doctest::Approx(0.0));  // constant column squashed
  CHECK(norm.targets[0] == doctest::Approx(0.0));
  CHECK(norm.targets[2] == doctest::Approx(1.0));
  REQUIRE(scaler.fitted);
  CHECK(scaler.constant_columns == std::vector<int>{1});

  // Transform-only path can leave [0,1]; that is the expected behavior for
  // unseen test rows.
  Dataset wider = d;
  wider.features(0, 0) = -1.0;
  const auto [wnorm, wscaler] = normalize(wider, scaler);
  CHECK(wnorm.features(0, 0) == doctest::Approx(-1.0));
  CHECK(wscaler.fitted);

  const Dataset back = denormalize(norm, scaler);
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    CHECK(back.features(i, 0) == doctest::Approx(d.features(i, 0)));
    CHECK(back.features(i, 1) == doctest::Approx(7.0));
    CHECK(back.targets[i] == doctest::Approx(d.targets[i]));
  }
}

TEST_CASE("split_shuffle is deterministic and exhaustive") {
  Dataset d;
  d.feature_names = {"x"};
  d.features.resize(10, 1);
  d.targets.resize(10);
  for (int i = 0; i < 10; ++i) {
    d.features(i, 0) = i;
    d.targets[i] = 100 + i;
  }

  const auto [train_a, test_a] = split_shuffle(d, 0.7, 42);
  const auto [train_b, test_b] = split_shuffle(d, 0.7, 42);
  REQUIRE(train_a.n() == 7);
  REQUIRE(test_a.n() == 3);
  CHECK(train_a.features == train_b.features);
  CHECK(test_a.targets == test_b.targets);

  // Features stay paired with their targets, and every row appears once.
  std::vector<int> seen(10, 0);
  auto absorb = [&](const Dataset& part) {
    for (Eigen::Index i = 0; i < part.n(); ++i) {
      const int id = static_cast<int>(part.features(i, 0));
      CHECK(part.targets[i] == doctest::Approx(100.0 + id));
      seen[static_cast<std::size_t>(id)] += 1;
    }
  };
  absorb(train_a);
  absorb(test_a);
  for (int c : seen) CHECK(c == 1);

  const auto [train_c, test_c] = split_shuffle(d, 0.7, 43);
  CHECK(train_c.features != train_a.features);

  CHECK_THROWS_AS(split_shuffle(d, 0.0, 1), ValidationError);
  CHECK_THROWS_AS(split_shuffle(d, 1.5, 1), ValidationError);
}

TEST_CASE("dataset validation catches broken shapes") {
  Dataset d;
  d.feature_names = {"x"};
  d.features.resize(2, 1);
  d.features << 1.0, 2.0;
  d.targets.resize(3);
  d.targets << 1.0, 2.0, 3.0;
  CHECK_THROWS_AS(d.validate(), ValidationError);
  d.targets.resize(2);
  d.targets << 1.0, std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(d.validate(), ValidationError);
}

TEST_CASE("synthetic tables match the documented shapes") {
  const RawTable ab = synth_abalone_like();
  CHECK(ab.n_rows() == 4177);
  CHECK(ab.n_cols() == 9);
  CHECK(ab.column_index("sex") == 0);
  CHECK(ab.column_index("rings") == 8);
  CHECK(ab.column_kinds[0] == ColumnKind::Categorical);

  const RawTable wine = synth_wine_like();
  CHECK(wine.n_rows() == 4898);
  CHECK(wine.n_cols() == 12);
  CHECK(wine.column_index("quality") == 11);

  // Same seed, same table.
  const RawTable ab2 = synth_abalone_like();
  CHECK(ab2.rows == ab.rows);
}
