#include "marsnet/convert.hpp"

#include <cmath>

#include "marsnet/rng.hpp"

namespace marsnet {

namespace {

// Fixed probe stream for the conversion exactness check.
constexpr std::uint64_t kProbeSeed = 0x70726f6265ull;
constexpr int kProbeCount = 1000;

double probe_deviation(const MarsModel& model, const DenseNetwork& net) {
  std::mt19937_64 gen(kProbeSeed);
  Eigen::VectorXd x(model.input_dim);
  double worst = 0.0;
  for (int p = 0; p < kProbeCount; ++p) {
    for (Eigen::Index j = 0; j < x.size(); ++j) x[j] = uniform_range(gen, -2.0, 3.0);
    const double want = eval_model(model, x);
    const double got = forward(net, x)[0];
    worst = std::max(worst, std::abs(got - want));
  }
  return worst;
}

}  // namespace

ConvertedModel mars_to_network(const MarsModel& model) {
  if (model.input_dim < 1) throw ValidationError("model input dimension must be positive");
  const int m = model.size();

  DenseNetwork net;
  Layer hidden;
  Layer output;
  hidden.activation = Activation::ReLU;
  output.activation = Activation::Identity;

  const Eigen::Index width = std::max(m, 1);
  hidden.weights = Eigen::MatrixXd::Zero(width, model.input_dim);
  hidden.bias = Eigen::VectorXd::Zero(width);
  output.weights = Eigen::MatrixXd::Zero(1, width);
  output.bias = Eigen::VectorXd::Constant(1, model.intercept);

  ConversionReport report;
  report.hidden_width = static_cast<int>(width);
  for (int i = 0; i < m; ++i) {
    const MarsTerm& term = model.terms[static_cast<std::size_t>(i)];
    if (term.basis.dimension < 0 || term.basis.dimension >= model.input_dim)
      throw ValidationError("term dimension out of range");
    if (term.basis.direction == HingeDirection::Positive) {
      hidden.weights(i, term.basis.dimension) = 1.0;
      hidden.bias[i] = -term.basis.knot;
    } else {
      hidden.weights(i, term.basis.dimension) = -1.0;
      hidden.bias[i] = term.basis.knot;
    }
    output.weights(0, i) = term.coefficient;
    report.unit_sources.push_back(term.basis);
  }

  net.layers.push_back(std::move(hidden));
  net.layers.push_back(std::move(output));

  ConvertedModel out;
  out.report = std::move(report);
  out.report.max_abs_deviation = probe_deviation(model, net);
  out.network = std::move(net);
  return out;
}

DenseNetwork widen(const DenseNetwork& net, std::size_t layer_index, Eigen::Index extra,
                   double jitter, std::uint64_t seed) {
  net.validate();
  if (layer_index >= net.layers.size()) throw ValidationError("layer index out of range");
  if (layer_index + 1 == net.layers.size())
    throw ValidationError("cannot widen the output layer");
  if (extra < 0) throw ValidationError("extra units must be nonnegative");
  if (jitter < 0.0) throw ValidationError("jitter must be nonnegative");
  if (extra == 0) return net;

  const Eigen::Index old_width = net.layers[layer_index].rows();
  const Eigen::Index new_width = old_width + extra;

  DenseNetwork out = net;
  Layer& grown = out.layers[layer_index];
  Layer& next = out.layers[layer_index + 1];

  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(new_width, grown.cols());
  Eigen::VectorXd b = Eigen::VectorXd::Zero(new_width);
  w.topRows(old_width) = grown.weights;
  b.head(old_width) = grown.bias;
  if (jitter > 0.0) {
    std::mt19937_64 gen(mix_seed(seed, static_cast<std::uint64_t>(layer_index)));
    for (Eigen::Index r = old_width; r < new_width; ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = uniform_range(gen, -jitter, jitter);
    }
  }
  grown.weights = std::move(w);
  grown.bias = std::move(b);

  Eigen::MatrixXd nw = Eigen::MatrixXd::Zero(next.rows(), new_width);
  nw.leftCols(old_width) = next.weights;
  next.weights = std::move(nw);
  return out;
}

DenseNetwork deepen(const DenseNetwork& net, std::size_t position) {
  net.validate();
  if (position == 0)
    throw ValidationError("cannot insert directly after the raw input: it may be negative");
  if (position > net.layers.size()) throw ValidationError("position out of range");
  if (net.layers[position - 1].activation != Activation::ReLU)
    throw ValidationError("identity layer must follow a rectified layer");

  const Eigen::Index width = net.layers[position - 1].rows();
  Layer identity;
  identity.weights = Eigen::MatrixXd::Identity(width, width);
  identity.bias = Eigen::VectorXd::Zero(width);
  identity.activation = Activation::ReLU;

  DenseNetwork out = net;
  out.layers.insert(out.layers.begin() + static_cast<std::ptrdiff_t>(position),
                    std::move(identity));
  return out;
}

DenseNetwork reshape_to(const DenseNetwork& net, const std::vector<Eigen::Index>& target_widths,
                        double jitter, std::uint64_t seed) {
  net.validate();
  const std::size_t current_hidden = net.layers.size() - 1;
  if (current_hidden == 0) throw ValidationError("network has no hidden layer");
  if (target_widths.size() < 3)
    throw ValidationError("target shape needs input, hidden, and output widths");
  const std::size_t target_hidden = target_widths.size() - 2;
  if (target_hidden < current_hidden)
    throw ValidationError("target depth is smaller than the current depth");
  if (target_widths.front() != net.input_dim())
    throw ValidationError("target input width differs from the network");
  if (target_widths.back() != net.output_dim())
    throw ValidationError("target output width differs from the network");

  DenseNetwork out = net;
  for (std::size_t i = current_hidden; i < target_hidden; ++i) {
    out = deepen(out, current_hidden);
  }
  for (std::size_t i = 0; i < target_hidden; ++i) {
    const Eigen::Index want = target_widths[i + 1];
    const Eigen::Index have = out.layers[i].rows();
    if (want < have) throw ValidationError("target width is smaller than the current width");
    if (want > have) {
      out = widen(out, i, want - have, jitter, mix_seed(seed, static_cast<std::uint64_t>(i)));
    }
  }
  return out;
}

ShiftReport parameter_shift_report(const DenseNetwork& initial, const DenseNetwork& trained) {
  initial.validate();
  trained.validate();
  if (initial.layers.size() != trained.layers.size())
    throw ValidationError("networks have different depths");

  ShiftReport report;
  for (std::size_t l = 0; l < initial.layers.size(); ++l) {
    const Layer& a = initial.layers[l];
    const Layer& b = trained.layers[l];
    if (a.rows() != b.rows() || a.cols() != b.cols())
      throw ValidationError("networks have different layer shapes");

    LayerShift shift;
    shift.layer = static_cast<int>(l);
    const Eigen::MatrixXd dw = b.weights - a.weights;
    const Eigen::VectorXd db = b.bias - a.bias;
    shift.w_delta_frobenius = dw.norm();
    shift.b_delta_norm = db.norm();
    shift.relative_shift = shift.w_delta_frobenius / (a.weights.norm() + 1e-12);
    shift.max_abs_change = std::max(dw.cwiseAbs().maxCoeff(), db.cwiseAbs().maxCoeff());
    report.layers.push_back(shift);
  }
  return report;
}

}  // namespace marsnet
