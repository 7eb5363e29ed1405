#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <vector>

#include "marsnet/mars.hpp"
#include "marsnet/rng.hpp"

using namespace marsnet;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Mirrors the library's tie handling: GCV values this close count as equal
// and fall through to (dimension, knot) order.
double slack(double g) { return 1e-12 * (1.0 + std::abs(g)); }

Dataset make_dataset(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  Dataset d;
  d.features = X;
  d.targets = y;
  for (Eigen::Index j = 0; j < X.cols(); ++j) d.feature_names.push_back("x" + std::to_string(j));
  return d;
}

// Candidate knots for one dimension: sorted distinct values, optionally
// thinned to evenly spaced order statistics, with the maximum dropped.
std::vector<double> candidate_knots(const Eigen::MatrixXd& X, int dim, int subsample) {
  std::vector<double> vals(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) vals[static_cast<std::size_t>(i)] = X(i, dim);
  std::sort(vals.begin(), vals.end());
  vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
  if (subsample > 0 && static_cast<int>(vals.size()) > subsample) {
    const std::size_t k = static_cast<std::size_t>(subsample);
    std::vector<double> picked;
    picked.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
      picked.push_back(vals[(i * (vals.size() - 1)) / (k - 1)]);
    }
    picked.erase(std::unique(picked.begin(), picked.end()), picked.end());
    vals = std::move(picked);
  }
  if (!vals.empty()) vals.pop_back();
  return vals;
}

Eigen::VectorXd hinge(const Eigen::MatrixXd& X, int dim, double knot, HingeDirection dir) {
  Eigen::VectorXd col(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double v = X(i, dim);
    col[i] = dir == HingeDirection::Positive ? ramp(v - knot) : ramp(knot - v);
  }
  return col;
}

struct OraclePick {
  int dim = 0;
  double knot = 0.0;
};

// Exhaustive forward phase. Every surviving candidate is scored by a dense
// from-scratch least-squares refit; the minimum-GCV pair wins, near-ties
// resolved by (dimension, knot) order; growth stops when the winner fails
// to beat the current model by more than the tie slack.
std::vector<OraclePick> oracle_forward(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                       const FitConfig& config) {
  const Eigen::Index n = X.rows();
  const int d = static_cast<int>(X.cols());

  std::vector<std::vector<double>> knots_by_dim(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) {
    knots_by_dim[static_cast<std::size_t>(j)] = candidate_knots(X, j, config.knot_subsample);
  }

  Eigen::MatrixXd basis = Eigen::MatrixXd::Ones(n, 1);
  std::set<std::pair<int, double>> used;
  double current = gcv_from_rss(least_squares(basis, y).rss,
                                effective_params(0, 0, config.gcv_knot_penalty), n);

  std::vector<OraclePick> picks;
  while (static_cast<int>(used.size()) * 2 + 2 <= config.max_basis) {
    const int m = static_cast<int>(used.size()) * 2;
    const double c_after =
        effective_params(m + 2, static_cast<int>(used.size()) + 1, config.gcv_knot_penalty);

    std::vector<OraclePick> cands;
    std::vector<double> gcvs;
    for (int j = 0; j < d; ++j) {
      for (double t : knots_by_dim[static_cast<std::size_t>(j)]) {
        if (used.count({j, t})) continue;
        cands.push_back({j, t});
        if (c_after >= static_cast<double>(n)) {
          gcvs.push_back(kInf);
          continue;
        }
        Eigen::MatrixXd design(n, basis.cols() + 2);
        design.leftCols(basis.cols()) = basis;
        design.col(basis.cols()) = hinge(X, j, t, HingeDirection::Positive);
        design.col(basis.cols() + 1) = hinge(X, j, t, HingeDirection::Negative);
        gcvs.push_back(gcv_from_rss(least_squares(design, y).rss, c_after, n));
      }
    }

    double best = kInf;
    for (double g : gcvs) best = std::min(best, g);
    if (!std::isfinite(best)) break;
    const double cutoff = best + slack(best);
    std::ptrdiff_t winner = -1;
    for (std::size_t i = 0; i < gcvs.size(); ++i) {
      if (gcvs[i] > cutoff) continue;
      if (winner < 0 || cands[i].dim < cands[static_cast<std::size_t>(winner)].dim ||
          (cands[i].dim == cands[static_cast<std::size_t>(winner)].dim &&
           cands[i].knot < cands[static_cast<std::size_t>(winner)].knot)) {
        winner = static_cast<std::ptrdiff_t>(i);
      }
    }
    const double winner_gcv = gcvs[static_cast<std::size_t>(winner)];
    if (!(winner_gcv < current - slack(current))) break;

    const OraclePick chosen = cands[static_cast<std::size_t>(winner)];
    Eigen::MatrixXd next(n, basis.cols() + 2);
    next.leftCols(basis.cols()) = basis;
    next.col(basis.cols()) = hinge(X, chosen.dim, chosen.knot, HingeDirection::Positive);
    next.col(basis.cols() + 1) = hinge(X, chosen.dim, chosen.knot, HingeDirection::Negative);
    basis.swap(next);
    used.insert({chosen.dim, chosen.knot});
    picks.push_back(chosen);
    current = gcv_from_rss(least_squares(basis, y).rss, c_after, n);
  }
  return picks;
}

void check_forward_matches_oracle(const Dataset& data, FitConfig config) {
  const std::vector<OraclePick> expected = oracle_forward(data.features, data.targets, config);
  for (bool fast : {false, true}) {
    config.fast_update = fast;
    CAPTURE(fast);
    const auto trail = forward_pass(data, config);
    REQUIRE(trail.size() == expected.size() + 1);
    for (std::size_t s = 0; s < expected.size(); ++s) {
      const MarsModel& m = trail[s + 1].model;
      REQUIRE(m.size() == static_cast<int>(2 * (s + 1)));
      const MarsTerm& pos = m.terms[2 * s];
      const MarsTerm& neg = m.terms[2 * s + 1];
      CHECK(pos.basis.dimension == expected[s].dim);
      CHECK(pos.basis.knot == expected[s].knot);
      CHECK(pos.basis.direction == HingeDirection::Positive);
      CHECK(neg.basis.dimension == expected[s].dim);
      CHECK(neg.basis.knot == expected[s].knot);
      CHECK(neg.basis.direction == HingeDirection::Negative);
    }
  }
}

Dataset random_tiny_instance(std::uint64_t seed, FitConfig& config) {
  std::mt19937_64 gen(seed);
  const Eigen::Index n = 8 + static_cast<Eigen::Index>(uniform_below(gen, 13));
  const int d = 1 + static_cast<int>(uniform_below(gen, 2));

  // Quantized features force duplicate values and exact score ties.
  Eigen::MatrixXd X(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) X(i, j) = 0.125 * static_cast<double>(uniform_below(gen, 9));
  }
  Eigen::VectorXd y(n);
  if (uniform_below(gen, 2) == 0) {
    for (Eigen::Index i = 0; i < n; ++i) {
      y[i] = 0.25 * (static_cast<double>(uniform_below(gen, 9)) - 4.0);
    }
  } else {
    const double t = 0.125 * static_cast<double>(uniform_below(gen, 8));
    for (Eigen::Index i = 0; i < n; ++i) {
      y[i] = 2.0 * ramp(X(i, 0) - t) - ramp(t - X(i, 0)) +
             0.25 * (static_cast<double>(uniform_below(gen, 3)) - 1.0);
    }
  }

  config = FitConfig{};
  config.max_basis = 4;
  config.knot_subsample = uniform_below(gen, 2) == 0 ? 0 : 3;
  return make_dataset(X, y);
}

Dataset medium_instance() {
  std::mt19937_64 gen(4242);
  const Eigen::Index n = 300;
  Eigen::MatrixXd X(n, 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < 4; ++j) X(i, j) = uniform01(gen);
  }
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    y[i] = 1.5 + 2.0 * ramp(X(i, 0) - 0.4) - 3.0 * ramp(0.3 - X(i, 1)) + 0.7 * X(i, 2) +
           0.01 * normal01(gen);
  }
  return make_dataset(X, y);
}

double model_gcv(const MarsModel& model, const Dataset& data) {
  std::set<std::pair<int, double>> knots;
  for (const MarsTerm& t : model.terms) knots.insert({t.basis.dimension, t.basis.knot});
  const double rss = (data.targets - eval_model(model, data.features)).squaredNorm();
  return gcv_from_rss(
      rss, effective_params(model.size(), static_cast<int>(knots.size()), model.config.gcv_knot_penalty),
      data.n());
}

}  // namespace

TEST_CASE("ramp clamps negatives to zero") {
  CHECK(ramp(2.5) == 2.5);
  CHECK(ramp(0.0) == 0.0);
  CHECK(ramp(-1e-9) == 0.0);
}

TEST_CASE("basis and model evaluation") {
  Eigen::VectorXd x(2);
  x << 0.7, 0.2;
  CHECK(eval_basis({0, 0.5, HingeDirection::Positive}, x) == doctest::Approx(0.2));
  CHECK(eval_basis({0, 0.5, HingeDirection::Negative}, x) == doctest::Approx(0.0));
  CHECK(eval_basis({1, 0.5, HingeDirection::Negative}, x) == doctest::Approx(0.3));
  CHECK_THROWS_AS(eval_basis({5, 0.5, HingeDirection::Positive}, x), ValidationError);

  MarsModel m;
  m.intercept = 1.0;
  m.input_dim = 2;
  m.terms.push_back({2.0, {0, 0.5, HingeDirection::Positive}});
  m.terms.push_back({-1.0, {1, 0.5, HingeDirection::Negative}});
  CHECK(eval_model(m, x) == doctest::Approx(1.0 + 2.0 * 0.2 - 1.0 * 0.3));

  Eigen::MatrixXd X(3, 2);
  X << 0.7, 0.2, 0.5, 0.5, 0.0, 1.0;
  const Eigen::VectorXd batch = eval_model(m, X);
  for (Eigen::Index i = 0; i < 3; ++i) {
    CHECK(batch[i] == doctest::Approx(eval_model(m, Eigen::VectorXd(X.row(i)))));
  }
  Eigen::VectorXd wrong(3);
  wrong << 1, 2, 3;
  CHECK_THROWS_AS(eval_model(m, wrong), ValidationError);
}

TEST_CASE("effective parameter count charges per basis and per knot") {
  CHECK(effective_params(0, 0, 3.0) == doctest::Approx(1.0));
  CHECK(effective_params(2, 1, 3.0) == doctest::Approx(6.0));
  CHECK(effective_params(4, 2, 3.0) == doctest::Approx(11.0));
  CHECK(effective_params(4, 2, 0.0) == doctest::Approx(5.0));
  CHECK_THROWS_AS(effective_params(-1, 0, 3.0), ValidationError);
}

TEST_CASE("gcv worked example and failure modes") {
  // RSS 4 with C = 1 of N = 4: 4 / (1 - 1/4)^2 = 7.111...
  CHECK(gcv_from_rss(4.0, 1.0, 4) == doctest::Approx(64.0 / 9.0));
  CHECK_THROWS_AS(gcv_from_rss(1.0, 4.0, 4), NumericError);
  CHECK_THROWS_AS(gcv_from_rss(1.0, 5.0, 4), NumericError);
  CHECK_THROWS_AS(gcv_from_rss(1.0, 1.0, 0), ValidationError);

  Eigen::VectorXd t(4), p(4);
  t << 1, 2, 3, 4;
  p << 2, 1, 4, 3;  // rss = 4
  CHECK(gcv(t, p, 1.0) == doctest::Approx(64.0 / 9.0));
  Eigen::VectorXd shorter(3);
  shorter << 1, 2, 3;
  CHECK_THROWS_AS(gcv(t, shorter, 1.0), ValidationError);
}

TEST_CASE("least squares solves exact and rank-deficient systems") {
  Eigen::MatrixXd A(3, 2);
  A << 1, 0, 1, 1, 1, 2;
  Eigen::VectorXd y(3);
  y << 1, 3, 5;
  const LeastSquaresResult lsq = least_squares(A, y);
  CHECK(lsq.coefficients[0] == doctest::Approx(1.0));
  CHECK(lsq.coefficients[1] == doctest::Approx(2.0));
  CHECK(lsq.rss == doctest::Approx(0.0));
  CHECK(lsq.rank == 2);
  CHECK_FALSE(lsq.rank_deficient);

  // Second column is twice the first; minimum-norm solution is (1/5, 2/5).
  Eigen::MatrixXd B(3, 2);
  B << 1, 2, 2, 4, 3, 6;
  Eigen::VectorXd z(3);
  z << 1, 2, 3;
  const LeastSquaresResult def = least_squares(B, z);
  CHECK(def.rank_deficient);
  CHECK(def.rank == 1);
  CHECK(def.rss == doctest::Approx(0.0));
  CHECK(def.coefficients[0] == doctest::Approx(0.2));
  CHECK(def.coefficients[1] == doctest::Approx(0.4));

  Eigen::VectorXd wrong(2);
  wrong << 1, 2;
  CHECK_THROWS_AS(least_squares(A, wrong), ValidationError);
}

TEST_CASE("config validation rejects out-of-range settings") {
  FitConfig c;
  c.validate();
  c.max_basis = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = FitConfig{};
  c.gcv_knot_penalty = -0.5;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = FitConfig{};
  c.knot_subsample = 1;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = FitConfig{};
  c.mars_train_fraction = 0.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.mars_train_fraction = 1.5;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("forward phase matches the exhaustive oracle on random tiny instances") {
  for (std::uint64_t idx = 0; idx < 25; ++idx) {
    CAPTURE(idx);
    FitConfig config;
    const Dataset data = random_tiny_instance(mix_seed(777, idx), config);
    check_forward_matches_oracle(data, config);
  }
}

TEST_CASE("exact cross-dimension ties resolve to the lower dimension") {
  std::mt19937_64 gen(99);
  const Eigen::Index n = 16;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 0) = 0.25 * static_cast<double>(uniform_below(gen, 5));
    X(i, 1) = X(i, 0);  // identical columns tie every candidate across dims
    y[i] = ramp(X(i, 0) - 0.25) + 0.25 * static_cast<double>(uniform_below(gen, 3));
  }
  FitConfig config;
  config.max_basis = 4;
  const Dataset data = make_dataset(X, y);
  check_forward_matches_oracle(data, config);
  for (bool fast : {false, true}) {
    config.fast_update = fast;
    const auto trail = forward_pass(data, config);
    REQUIRE(trail.size() > 1);
    for (const auto& step : trail) {
      for (const MarsTerm& t : step.model.terms) CHECK(t.basis.dimension == 0);
    }
  }
}

TEST_CASE("incremental scoring reproduces the full-refit trail") {
  const Dataset data = medium_instance();
  FitConfig config;
  config.max_basis = 10;
  config.knot_subsample = 16;

  config.fast_update = false;
  const auto full = forward_pass(data, config);
  config.fast_update = true;
  const auto fast = forward_pass(data, config);

  REQUIRE(full.size() == fast.size());
  REQUIRE(full.size() > 2);  // the instance is designed to grow several pairs
  for (std::size_t s = 0; s < full.size(); ++s) {
    CAPTURE(s);
    const MarsModel& a = full[s].model;
    const MarsModel& b = fast[s].model;
    REQUIRE(a.size() == b.size());
    for (int k = 0; k < a.size(); ++k) {
      CHECK(a.terms[static_cast<std::size_t>(k)].basis.dimension ==
            b.terms[static_cast<std::size_t>(k)].basis.dimension);
      CHECK(a.terms[static_cast<std::size_t>(k)].basis.knot ==
            b.terms[static_cast<std::size_t>(k)].basis.knot);
      CHECK(a.terms[static_cast<std::size_t>(k)].basis.direction ==
            b.terms[static_cast<std::size_t>(k)].basis.direction);
    }
    // Once a dimension carries two knots the basis is rank deficient and the
    // coefficient vector is not unique, so compare the fitted function.
    const Eigen::VectorXd pa = eval_model(a, data.features);
    const Eigen::VectorXd pb = eval_model(b, data.features);
    CHECK((pa - pb).cwiseAbs().maxCoeff() <= 1e-7);
    CHECK(full[s].record.rss ==
          doctest::Approx(fast[s].record.rss).epsilon(1e-9));
    CHECK(full[s].record.gcv ==
          doctest::Approx(fast[s].record.gcv).epsilon(1e-9));
  }
}

TEST_CASE("pruning never worsens the unpruned GCV and records honest statistics") {
  const Dataset data = medium_instance();
  FitConfig config;
  config.max_basis = 10;
  config.knot_subsample = 16;
  config.fast_update = true;

  const auto trail = forward_pass(data, config);
  const MarsModel model = backward_prune(trail, data, config);

  const double final_gcv = model_gcv(model, data);
  CHECK(final_gcv <= trail.back().record.gcv * (1.0 + 1e-9) + 1e-12);

  // Trail layout: forward sizes ascending by pairs, then backward sizes
  // descending one basis at a time.
  REQUIRE(model.gcv_trail.size() == trail.size() + static_cast<std::size_t>(trail.back().model.size()));
  for (std::size_t i = 0; i < trail.size(); ++i) {
    CHECK(model.gcv_trail[i].model_size == static_cast<int>(2 * i));
  }
  const int m_full = trail.back().model.size();
  for (int k = 1; k <= m_full; ++k) {
    CHECK(model.gcv_trail[trail.size() + static_cast<std::size_t>(k) - 1].model_size == m_full - k);
  }

  // The reported best is the trail minimum, and its recorded RSS matches an
  // explicit refit of the returned model.
  double trail_min = kInf;
  for (const GcvRecord& r : model.gcv_trail) trail_min = std::min(trail_min, r.gcv);
  CHECK(final_gcv == doctest::Approx(trail_min).epsilon(1e-9));

  const double rss_explicit = (data.targets - eval_model(model, data.features)).squaredNorm();
  bool matched = false;
  for (const GcvRecord& r : model.gcv_trail) {
    if (r.model_size == model.size() &&
        std::abs(r.rss - rss_explicit) <= 1e-9 * (1.0 + rss_explicit)) {
      matched = true;
    }
  }
  CHECK(matched);
}

TEST_CASE("knot subsampling restricts choices to evenly spaced order statistics") {
  const Eigen::Index n = 10;
  Eigen::MatrixXd X(n, 1);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 0) = static_cast<double>(i);
    y[i] = 5.0 * ramp(static_cast<double>(i) - 7.0);
  }
  const Dataset data = make_dataset(X, y);

  FitConfig config;
  config.max_basis = 4;
  for (bool fast : {false, true}) {
    config.fast_update = fast;
    CAPTURE(fast);

    // All nine interior values available: the exact kink at 7 is found.
    config.knot_subsample = 0;
    FitResult everything = fit_mars(data, config);
    REQUIRE(everything.model.size() >= 1);
    for (const MarsTerm& t : everything.model.terms) CHECK(t.basis.knot == 7.0);

    // Thinned to order statistics {0, 3, 6, 9} minus the maximum.
    config.knot_subsample = 4;
    FitResult thinned = fit_mars(data, config);
    REQUIRE(thinned.model.size() >= 1);
    for (const MarsTerm& t : thinned.model.terms) {
      CHECK((t.basis.knot == 0.0 || t.basis.knot == 3.0 || t.basis.knot == 6.0));
    }
  }
}

TEST_CASE("train fraction fits on the leading rows only") {
  std::mt19937_64 gen(31);
  const Eigen::Index n = 40;
  Eigen::MatrixXd X(n, 1);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 0) = uniform01(gen);
    y[i] = i < 20 ? 2.0 * ramp(X(i, 0) - 0.3) : uniform_range(gen, -5.0, 5.0);
  }
  const Dataset all = make_dataset(X, y);

  Dataset head = all;
  head.features = X.topRows(20);
  head.targets = y.head(20);

  FitConfig config;
  config.max_basis = 6;
  config.fast_update = true;
  config.mars_train_fraction = 0.5;
  const FitResult frac = fit_mars(all, config);

  FitConfig full_cfg = config;
  full_cfg.mars_train_fraction = 1.0;
  const FitResult ref = fit_mars(head, full_cfg);

  REQUIRE(frac.model.size() == ref.model.size());
  for (int k = 0; k < frac.model.size(); ++k) {
    CHECK(frac.model.terms[static_cast<std::size_t>(k)].basis.dimension ==
          ref.model.terms[static_cast<std::size_t>(k)].basis.dimension);
    CHECK(frac.model.terms[static_cast<std::size_t>(k)].basis.knot ==
          ref.model.terms[static_cast<std::size_t>(k)].basis.knot);
    CHECK(frac.model.terms[static_cast<std::size_t>(k)].coefficient ==
          ref.model.terms[static_cast<std::size_t>(k)].coefficient);
  }
  CHECK(frac.model.intercept == ref.model.intercept);
}

TEST_CASE("fitting is deterministic") {
  const Dataset data = medium_instance();
  FitConfig config;
  config.max_basis = 10;
  config.knot_subsample = 16;
  config.fast_update = true;

  const FitResult a = fit_mars(data, config);
  const FitResult b = fit_mars(data, config);
  REQUIRE(a.model.size() == b.model.size());
  CHECK(a.model.intercept == b.model.intercept);
  for (int k = 0; k < a.model.size(); ++k) {
    CHECK(a.model.terms[static_cast<std::size_t>(k)].coefficient ==
          b.model.terms[static_cast<std::size_t>(k)].coefficient);
    CHECK(a.model.terms[static_cast<std::size_t>(k)].basis.knot ==
          b.model.terms[static_cast<std::size_t>(k)].basis.knot);
  }
  REQUIRE(a.model.gcv_trail.size() == b.model.gcv_trail.size());
  for (std::size_t i = 0; i < a.model.gcv_trail.size(); ++i) {
    CHECK(a.model.gcv_trail[i].gcv == b.model.gcv_trail[i].gcv);
    CHECK(a.model.gcv_trail[i].rss == b.model.gcv_trail[i].rss);
  }
}

TEST_CASE("feature importance aggregates coefficients per dimension") {
  MarsModel m;
  m.input_dim = 3;
  m.intercept = 0.5;
  m.terms.push_back({2.0, {1, 0.5, HingeDirection::Positive}});
  m.terms.push_back({-1.0, {1, 0.5, HingeDirection::Negative}});
  m.terms.push_back({0.5, {0, 0.2, HingeDirection::Positive}});

  const FeatureImportance fi = feature_importance(m);
  REQUIRE(fi.per_dimension.size() == 3);
  CHECK(fi.per_dimension[0].importance == doctest::Approx(0.5));
  CHECK(fi.per_dimension[1].importance == doctest::Approx(3.0));
  CHECK(fi.per_dimension[2].importance == doctest::Approx(0.0));
  REQUIRE(fi.per_dimension[1].knots.size() == 1);  // shared knot deduplicated
  CHECK(fi.per_dimension[1].knots[0] == doctest::Approx(0.5));
  REQUIRE(fi.ranking.size() == 3);
  CHECK(fi.ranking[0] == 1);
  CHECK(fi.ranking[1] == 0);
  CHECK(fi.ranking[2] == 2);
}
