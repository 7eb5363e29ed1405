#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "marsnet/common.hpp"

namespace marsnet {

enum class Activation { ReLU, Identity };

struct Layer {
  Eigen::MatrixXd weights;  // rows x cols, applied as weights * input
  Eigen::VectorXd bias;     // rows
  Activation activation = Activation::ReLU;

  Eigen::Index rows() const { return weights.rows(); }
  Eigen::Index cols() const { return weights.cols(); }
};

struct DenseNetwork {
  std::vector<Layer> layers;

  Eigen::Index input_dim() const { return layers.empty() ? 0 : layers.front().cols(); }
  Eigen::Index output_dim() const { return layers.empty() ? 0 : layers.back().rows(); }

  // Throws ValidationError on shape mismatches between consecutive layers or
  // bias/weight row disagreement.
  void validate() const;
};

struct LayerGradient {
  Eigen::MatrixXd weights;
  Eigen::VectorXd bias;
};

struct NetworkGradient {
  std::vector<LayerGradient> layers;
};

struct TrainConfig {
  int epochs = 0;
  int batch_size = 32;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;
  // Training aborts with NumericError once the epoch-end loss is non-finite
  // or exceeds this bound.
  double divergence_threshold = 1e12;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;        // 1-based
  double train_loss = 0.0;
  double seconds = 0.0;  // cumulative wall time since training started
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

// Single-sample and batch forward passes. Batch rows are samples.
Eigen::VectorXd forward(const DenseNetwork& net, const Eigen::VectorXd& x);
Eigen::MatrixXd forward(const DenseNetwork& net, const Eigen::MatrixXd& X);

// Mean over samples of the squared error summed across output components.
double mse_loss(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& targets);

// Mean-loss gradients for every parameter, computed by backpropagation with
// ReLU'(0) = 0. The reduction over samples runs over fixed 64-row chunks
// accumulated in chunk order, so results are bit-identical at any thread
// count.
NetworkGradient gradients(const DenseNetwork& net, const Eigen::MatrixXd& X,
                          const Eigen::MatrixXd& Y);

void sgd_step(DenseNetwork& net, const NetworkGradient& grad, double learning_rate);

// Plain mini-batch SGD: indices reshuffled each epoch, consecutive slices of
// batch_size (last batch may be shorter), one record per completed epoch with
// the loss over the full training set.
TrainHistory train(DenseNetwork& net, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                   const TrainConfig& config);

// Layer sizes include input and output, e.g. {8, 16, 1}. Hidden layers use
// ReLU, the output layer is affine. Weights are uniform on
// (-sqrt(2/fan_in), +sqrt(2/fan_in)), biases zero.
DenseNetwork random_init(const std::vector<int>& layer_sizes, std::uint64_t seed);

}  // namespace marsnet
