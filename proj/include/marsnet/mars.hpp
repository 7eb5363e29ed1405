#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "marsnet/data.hpp"

namespace marsnet {

// Positive encodes R(x_j - t), Negative encodes R(t - x_j).
enum class HingeDirection { Positive, Negative };

struct BasisFunction {
  int dimension = 0;
  double knot = 0.0;
  HingeDirection direction = HingeDirection::Positive;
};

struct MarsTerm {
  double coefficient = 0.0;
  BasisFunction basis;
};

struct GcvRecord {
  int model_size = 0;          // M, non-intercept basis count
  double rss = 0.0;
  double effective_params = 0.0;  // C(M)
  double gcv = 0.0;
};

struct FitConfig {
  int max_basis = 20;               // M_max; a reflection pair needs two slots
  double gcv_knot_penalty = 3.0;
  int knot_subsample = 0;           // cap on candidate knots per dimension, 0 = all distinct values
  double mars_train_fraction = 1.0; // leading fraction of the provided data used for the fit
  bool fast_update = false;         // incremental candidate scoring; selections match full refits

  void validate() const;
};

struct MarsModel {
  double intercept = 0.0;
  std::vector<MarsTerm> terms;
  int input_dim = 0;
  FitConfig config;
  std::vector<GcvRecord> gcv_trail;  // forward sizes ascending, then backward sizes descending

  int size() const { return static_cast<int>(terms.size()); }
};

double ramp(double x);
double eval_basis(const BasisFunction& basis, const Eigen::VectorXd& x);
double eval_model(const MarsModel& model, const Eigen::VectorXd& x);
Eigen::VectorXd eval_model(const MarsModel& model, const Eigen::MatrixXd& X);

// C(M) = (M + 1) + penalty * knot_count.
double effective_params(int basis_count, int knot_count, double penalty);

// RSS / (1 - C/N)^2. Throws when C >= N.
double gcv_from_rss(double rss, double effective_params, Eigen::Index n);
double gcv(const Eigen::VectorXd& targets, const Eigen::VectorXd& predictions,
           double effective_params);

struct LeastSquaresResult {
  Eigen::VectorXd coefficients;
  double rss = 0.0;
  bool rank_deficient = false;
  Eigen::Index rank = 0;
};

// Minimum-norm least squares via a complete orthogonal decomposition.
LeastSquaresResult least_squares(const Eigen::MatrixXd& design, const Eigen::VectorXd& targets);

// One model of the forward trail together with its fit statistics.
struct CandidateModel {
  MarsModel model;
  GcvRecord record;
};

// Grows the model by reflection pairs, refitting all coefficients at every
// candidate and keeping the GCV-minimizing pair. Returns every intermediate
// model, starting from intercept-only. `fit_rows` limits the fit to the
// leading rows (0 = all); fit_mars derives it from mars_train_fraction.
std::vector<CandidateModel> forward_pass(const Dataset& train, const FitConfig& config,
                                         Eigen::Index fit_rows = 0);

// Greedy GCV pruning from the largest forward model down to intercept-only;
// returns the best model over all recorded sizes, with the combined
// forward+backward GCV trail attached.
MarsModel backward_prune(const std::vector<CandidateModel>& candidates, const Dataset& train,
                         const FitConfig& config, Eigen::Index fit_rows = 0);

struct FitResult {
  MarsModel model;
  double fit_seconds = 0.0;
};

FitResult fit_mars(const Dataset& train, const FitConfig& config);

struct FeatureImportance {
  struct Entry {
    int dimension = 0;
    double importance = 0.0;        // sum of |coefficient| over the dimension's terms
    std::vector<double> knots;      // knots chosen on this dimension, ascending
  };
  std::vector<Entry> per_dimension;  // one entry per input dimension
  std::vector<int> ranking;          // dimensions by descending importance
};

FeatureImportance feature_importance(const MarsModel& model);

}  // namespace marsnet
