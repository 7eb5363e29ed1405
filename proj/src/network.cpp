#include "marsnet/network.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>

#include "marsnet/parallel.hpp"
#include "marsnet/rng.hpp"

namespace marsnet {

namespace {

constexpr Eigen::Index kChunkRows = 64;

Eigen::MatrixXd relu_mask(const Eigen::MatrixXd& z) {
  return (z.array() > 0.0).cast<double>().matrix();
}

Eigen::MatrixXd apply_activation(const Eigen::MatrixXd& z, Activation act) {
  if (act == Activation::Identity) return z;
  return z.cwiseMax(0.0);
}

// Forward pass over one row chunk, keeping pre-activations for backprop.
void forward_chunk(const DenseNetwork& net, const Eigen::MatrixXd& chunk,
                   std::vector<Eigen::MatrixXd>& pre, std::vector<Eigen::MatrixXd>& post) {
  const std::size_t L = net.layers.size();
  pre.resize(L);
  post.resize(L + 1);
  post[0] = chunk;
  for (std::size_t l = 0; l < L; ++l) {
    const Layer& layer = net.layers[l];
    pre[l] = post[l] * layer.weights.transpose();
    pre[l].rowwise() += layer.bias.transpose();
    post[l + 1] = apply_activation(pre[l], layer.activation);
  }
}

NetworkGradient zero_gradient(const DenseNetwork& net) {
  NetworkGradient grad;
  grad.layers.resize(net.layers.size());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    grad.layers[l].weights = Eigen::MatrixXd::Zero(net.layers[l].rows(), net.layers[l].cols());
    grad.layers[l].bias = Eigen::VectorXd::Zero(net.layers[l].rows());
  }
  return grad;
}

// Unscaled squared-error gradient sums over one chunk.
NetworkGradient chunk_gradient(const DenseNetwork& net, const Eigen::MatrixXd& X,
                               const Eigen::MatrixXd& Y, Eigen::Index begin, Eigen::Index len) {
  std::vector<Eigen::MatrixXd> pre, post;
  forward_chunk(net, X.middleRows(begin, len), pre, post);

  NetworkGradient grad = zero_gradient(net);
  const auto L = static_cast<std::ptrdiff_t>(net.layers.size());
  Eigen::MatrixXd delta = post[static_cast<std::size_t>(L)] - Y.middleRows(begin, len);
  for (std::ptrdiff_t l = L - 1; l >= 0; --l) {
    const auto ul = static_cast<std::size_t>(l);
    if (net.layers[ul].activation == Activation::ReLU) {
      delta = delta.cwiseProduct(relu_mask(pre[ul]));
    }
    grad.layers[ul].weights = delta.transpose() * post[ul];
    grad.layers[ul].bias = delta.colwise().sum().transpose();
    if (l > 0) delta = delta * net.layers[ul].weights;
  }
  return grad;
}

void accumulate(NetworkGradient& acc, const NetworkGradient& part) {
  for (std::size_t l = 0; l < acc.layers.size(); ++l) {
    acc.layers[l].weights += part.layers[l].weights;
    acc.layers[l].bias += part.layers[l].bias;
  }
}

std::vector<std::pair<Eigen::Index, Eigen::Index>> chunk_spans(Eigen::Index n) {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> spans;
  for (Eigen::Index begin = 0; begin < n; begin += kChunkRows) {
    spans.emplace_back(begin, std::min(kChunkRows, n - begin));
  }
  return spans;
}

NetworkGradient gradients_serial(const DenseNetwork& net, const Eigen::MatrixXd& X,
                                 const Eigen::MatrixXd& Y) {
  NetworkGradient acc = zero_gradient(net);
  for (const auto& [begin, len] : chunk_spans(X.rows())) {
    accumulate(acc, chunk_gradient(net, X, Y, begin, len));
  }
  return acc;
}

NetworkGradient gradients_parallel(const DenseNetwork& net, const Eigen::MatrixXd& X,
                                   const Eigen::MatrixXd& Y) {
  const auto spans = chunk_spans(X.rows());
  std::vector<NetworkGradient> parts(spans.size());
  const int threads = max_threads();
  const auto count = static_cast<std::int64_t>(spans.size());
#pragma omp parallel for schedule(static) num_threads(threads)
  for (std::int64_t i = 0; i < count; ++i) {
    const auto& [begin, len] = spans[static_cast<std::size_t>(i)];
    parts[static_cast<std::size_t>(i)] = chunk_gradient(net, X, Y, begin, len);
  }
  NetworkGradient acc = zero_gradient(net);
  for (const NetworkGradient& part : parts) accumulate(acc, part);
  return acc;
}

}  // namespace

void DenseNetwork::validate() const {
  if (layers.empty()) throw ValidationError("network has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Layer& layer = layers[l];
    if (layer.rows() < 1 || layer.cols() < 1) throw ValidationError("empty layer");
    if (layer.bias.size() != layer.rows())
      throw ValidationError("bias length does not match layer rows");
    if (l > 0 && layer.cols() != layers[l - 1].rows())
      throw ValidationError("layer input width does not match previous layer output");
  }
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ValidationError("epochs must be nonnegative");
  if (batch_size < 1) throw ValidationError("batch_size must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ValidationError("learning_rate must be positive and finite");
}

Eigen::VectorXd forward(const DenseNetwork& net, const Eigen::VectorXd& x) {
  net.validate();
  if (x.size() != net.input_dim()) throw ValidationError("input dimension mismatch");
  Eigen::VectorXd a = x;
  for (const Layer& layer : net.layers) {
    Eigen::VectorXd z = layer.weights * a + layer.bias;
    a = layer.activation == Activation::ReLU ? z.cwiseMax(0.0).eval() : z;
  }
  return a;
}

Eigen::MatrixXd forward(const DenseNetwork& net, const Eigen::MatrixXd& X) {
  net.validate();
  if (X.cols() != net.input_dim()) throw ValidationError("input dimension mismatch");
  Eigen::MatrixXd out(X.rows(), net.output_dim());
  const auto spans = chunk_spans(X.rows());
  const auto count = static_cast<std::int64_t>(spans.size());
  const int threads = max_threads();
#pragma omp parallel for schedule(static) num_threads(threads) if (threads > 1)
  for (std::int64_t i = 0; i < count; ++i) {
    const auto& [begin, len] = spans[static_cast<std::size_t>(i)];
    std::vector<Eigen::MatrixXd> pre, post;
    forward_chunk(net, X.middleRows(begin, len), pre, post);
    out.middleRows(begin, len) = post.back();
  }
  return out;
}

double mse_loss(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& targets) {
  if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols())
    throw ValidationError("prediction/target shape mismatch");
  if (predictions.rows() == 0) throw ValidationError("empty batch");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < predictions.rows(); ++i) {
    acc += (predictions.row(i) - targets.row(i)).squaredNorm();
  }
  return acc / static_cast<double>(predictions.rows());
}

NetworkGradient gradients(const DenseNetwork& net, const Eigen::MatrixXd& X,
                          const Eigen::MatrixXd& Y) {
  net.validate();
  if (X.cols() != net.input_dim()) throw ValidationError("input dimension mismatch");
  if (Y.rows() != X.rows() || Y.cols() != net.output_dim())
    throw ValidationError("target shape mismatch");
  if (X.rows() == 0) throw ValidationError("empty batch");

  NetworkGradient grad =
      max_threads() > 1 ? gradients_parallel(net, X, Y) : gradients_serial(net, X, Y);
  const double scale = 2.0 / static_cast<double>(X.rows());
  for (auto& layer : grad.layers) {
    layer.weights *= scale;
    layer.bias *= scale;
  }
  return grad;
}

void sgd_step(DenseNetwork& net, const NetworkGradient& grad, double learning_rate) {
  if (grad.layers.size() != net.layers.size()) throw ValidationError("gradient/network mismatch");
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    net.layers[l].weights -= learning_rate * grad.layers[l].weights;
    net.layers[l].bias -= learning_rate * grad.layers[l].bias;
  }
}

TrainHistory train(DenseNetwork& net, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                   const TrainConfig& config) {
  net.validate();
  config.validate();
  if (net.output_dim() != 1) throw ValidationError("training expects a scalar output network");
  if (X.cols() != net.input_dim()) throw ValidationError("input dimension mismatch");
  if (y.size() != X.rows()) throw ValidationError("target length mismatch");
  if (X.rows() == 0) throw ValidationError("empty training set");

  TrainHistory history;
  if (config.epochs == 0) return history;

  const Eigen::Index n = X.rows();
  const Eigen::MatrixXd Y = y;
  std::mt19937_64 gen(config.seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  const auto start = std::chrono::steady_clock::now();
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_in_place(order, gen);
    for (Eigen::Index begin = 0; begin < n; begin += config.batch_size) {
      const Eigen::Index len = std::min<Eigen::Index>(config.batch_size, n - begin);
      Eigen::MatrixXd xb(len, X.cols());
      Eigen::MatrixXd yb(len, 1);
      for (Eigen::Index i = 0; i < len; ++i) {
        xb.row(i) = X.row(order[static_cast<std::size_t>(begin + i)]);
        yb(i, 0) = y[order[static_cast<std::size_t>(begin + i)]];
      }
      sgd_step(net, gradients(net, xb, yb), config.learning_rate);
    }

    const double loss = mse_loss(forward(net, X), Y);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    history.epochs.push_back({epoch, loss, seconds});
    if (!std::isfinite(loss) || loss > config.divergence_threshold) {
      std::ostringstream msg;
      msg << "training diverged at epoch " << epoch << ": loss=" << loss
          << " (learning_rate=" << config.learning_rate << ", batch_size=" << config.batch_size
          << ")";
      throw NumericError(msg.str());
    }
  }
  return history;
}

DenseNetwork random_init(const std::vector<int>& layer_sizes, std::uint64_t seed) {
  if (layer_sizes.size() < 2) throw ValidationError("need at least input and output sizes");
  for (int s : layer_sizes) {
    if (s < 1) throw ValidationError("layer sizes must be positive");
  }
  DenseNetwork net;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int fan_in = layer_sizes[l];
    const int fan_out = layer_sizes[l + 1];
    const double bound = std::sqrt(2.0 / static_cast<double>(fan_in));
    std::mt19937_64 gen(mix_seed(seed, static_cast<std::uint64_t>(l)));
    Layer layer;
    layer.weights.resize(fan_out, fan_in);
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
        layer.weights(r, c) = uniform_range(gen, -bound, bound);
      }
    }
    layer.bias = Eigen::VectorXd::Zero(fan_out);
    layer.activation = (l + 2 == layer_sizes.size()) ? Activation::Identity : Activation::ReLU;
    net.layers.push_back(std::move(layer));
  }
  return net;
}

}  // namespace marsnet
