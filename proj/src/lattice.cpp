#include "marsnet/lattice.hpp"

#include <algorithm>
#include <bit>
#include <limits>
#include <string>

#include "marsnet/common.hpp"

namespace marsnet {

namespace {

int ceil_log2(int k) {
  if (k <= 1) return 0;
  return static_cast<int>(std::bit_width(static_cast<unsigned>(k - 1)));
}

double eval_piece(const Eigen::VectorXd& theta, const Eigen::VectorXd& x) {
  return theta[0] + theta.tail(x.size()).dot(x);
}

// A logical value carried between layers: an affine functional over the
// current layer's outputs (the raw input before the first layer).
struct Wire {
  Eigen::VectorXd w;
  double b = 0.0;
};

// Accumulates one fused ReLU layer; wires for the next stage are expressed
// over the units added here.
class StageBuilder {
 public:
  explicit StageBuilder(Eigen::Index in_width) : in_width_(in_width) {}

  // ReLU(w . prev + b)
  Eigen::Index add_unit(const Eigen::VectorXd& w, double b) {
    rows_.push_back(w);
    biases_.push_back(b);
    return static_cast<Eigen::Index>(rows_.size()) - 1;
  }

  // Passthrough: value = ReLU(v) - ReLU(-v).
  Wire add_passthrough(const Wire& v) {
    const Eigen::Index p = add_unit(v.w, v.b);
    const Eigen::Index q = add_unit(-v.w, -v.b);
    Wire out;
    out.w = Eigen::VectorXd::Zero(0);  // densified later
    refs_.push_back({p, 1.0});
    refs_.push_back({q, -1.0});
    out_sizes_.push_back(2);
    return out;
  }

  // max/min of two wires through the four-unit gadget.
  Wire add_gadget(const Wire& a, const Wire& b, bool is_max) {
    const Eigen::VectorXd sum = 0.5 * (a.w + b.w);
    const double sum_b = 0.5 * (a.b + b.b);
    const Eigen::VectorXd diff = 0.5 * (a.w - b.w);
    const double diff_b = 0.5 * (a.b - b.b);
    const Eigen::Index sp = add_unit(sum, sum_b);
    const Eigen::Index sn = add_unit(-sum, -sum_b);
    const Eigen::Index tp = add_unit(diff, diff_b);
    const Eigen::Index tn = add_unit(-diff, -diff_b);
    const double sign = is_max ? 1.0 : -1.0;
    Wire out;
    out.w = Eigen::VectorXd::Zero(0);
    refs_.push_back({sp, 1.0});
    refs_.push_back({sn, -1.0});
    refs_.push_back({tp, sign});
    refs_.push_back({tn, sign});
    out_sizes_.push_back(4);
    return out;
  }

  // Emits the fused layer and rewrites the queued wires over its units.
  Layer finish(std::vector<Wire>& wires) {
    const auto width = static_cast<Eigen::Index>(rows_.size());
    Layer layer;
    layer.weights.resize(width, in_width_);
    layer.bias.resize(width);
    for (Eigen::Index r = 0; r < width; ++r) {
      layer.weights.row(r) = rows_[static_cast<std::size_t>(r)].transpose();
      layer.bias[r] = biases_[static_cast<std::size_t>(r)];
    }
    layer.activation = Activation::ReLU;

    wires.clear();
    std::size_t at = 0;
    for (int size : out_sizes_) {
      Wire wire;
      wire.w = Eigen::VectorXd::Zero(width);
      for (int k = 0; k < size; ++k) {
        wire.w[refs_[at].unit] = refs_[at].coef;
        ++at;
      }
      wires.push_back(std::move(wire));
    }
    return layer;
  }

  bool empty() const { return rows_.empty(); }

 private:
  struct Ref {
    Eigen::Index unit;
    double coef;
  };
  Eigen::Index in_width_;
  std::vector<Eigen::VectorXd> rows_;
  std::vector<double> biases_;
  std::vector<Ref> refs_;
  std::vector<int> out_sizes_;
};

// One tournament round over each bucket of wires: adjacent pairs go through
// gadgets, odd leftovers and settled buckets pass through byes.
Layer tournament_round(std::vector<std::vector<Wire>>& buckets, Eigen::Index in_width,
                       bool is_max) {
  StageBuilder stage(in_width);
  for (auto& bucket : buckets) {
    std::vector<Wire> next;
    std::size_t i = 0;
    for (; i + 1 < bucket.size(); i += 2) {
      next.push_back(stage.add_gadget(bucket[i], bucket[i + 1], is_max));
    }
    if (i < bucket.size()) next.push_back(stage.add_passthrough(bucket[i]));
    bucket = std::move(next);
  }

  // Rewrite every bucket's wires over the new layer in emission order.
  std::vector<Wire> flat;
  Layer layer = stage.finish(flat);
  std::size_t at = 0;
  for (auto& bucket : buckets) {
    for (auto& wire : bucket) wire = flat[at++];
  }
  return layer;
}

struct SplitNetwork {
  std::vector<Layer> hidden;
  Wire out;  // over the last hidden layer (or the input when hidden is empty)
};

SplitNetwork split_scalar(const DenseNetwork& net, const char* role) {
  net.validate();
  if (net.output_dim() != 1)
    throw ValidationError(std::string(role) + " operand must produce one output");
  if (net.layers.back().activation != Activation::Identity)
    throw ValidationError(std::string(role) + " operand must end in an affine layer");
  SplitNetwork split;
  for (std::size_t l = 0; l + 1 < net.layers.size(); ++l) {
    if (net.layers[l].activation != Activation::ReLU)
      throw ValidationError(std::string(role) + " operand must have rectified hidden layers");
    split.hidden.push_back(net.layers[l]);
  }
  split.out.w = net.layers.back().weights.row(0).transpose();
  split.out.b = net.layers.back().bias[0];
  return split;
}

// Adds paired-ReLU passthrough stages until the hidden depth reaches `depth`.
void pad_depth(SplitNetwork& net, std::size_t depth) {
  while (net.hidden.size() < depth) {
    Layer layer;
    layer.weights.resize(2, net.out.w.size());
    layer.weights.row(0) = net.out.w.transpose();
    layer.weights.row(1) = -net.out.w.transpose();
    layer.bias.resize(2);
    layer.bias << net.out.b, -net.out.b;
    layer.activation = Activation::ReLU;
    net.hidden.push_back(std::move(layer));
    net.out.w = Eigen::VectorXd::Zero(2);
    net.out.w << 1.0, -1.0;
    net.out.b = 0.0;
  }
}

DenseNetwork combine_scalar(const DenseNetwork& left, const DenseNetwork& right, bool is_max) {
  SplitNetwork a = split_scalar(left, "left");
  SplitNetwork b = split_scalar(right, "right");
  if (left.input_dim() != right.input_dim())
    throw ValidationError("operand input dimensions differ");
  const Eigen::Index d = left.input_dim();

  const std::size_t depth = std::max(a.hidden.size(), b.hidden.size());
  pad_depth(a, depth);
  pad_depth(b, depth);

  DenseNetwork out;
  for (std::size_t l = 0; l < depth; ++l) {
    const Layer& la = a.hidden[l];
    const Layer& lb = b.hidden[l];
    Layer fused;
    fused.activation = Activation::ReLU;
    if (l == 0) {
      // Both operands read the shared input.
      fused.weights.resize(la.rows() + lb.rows(), d);
      fused.weights.topRows(la.rows()) = la.weights;
      fused.weights.bottomRows(lb.rows()) = lb.weights;
    } else {
      fused.weights =
          Eigen::MatrixXd::Zero(la.rows() + lb.rows(), la.cols() + lb.cols());
      fused.weights.topLeftCorner(la.rows(), la.cols()) = la.weights;
      fused.weights.bottomRightCorner(lb.rows(), lb.cols()) = lb.weights;
    }
    fused.bias.resize(la.rows() + lb.rows());
    fused.bias.head(la.rows()) = la.bias;
    fused.bias.tail(lb.rows()) = lb.bias;
    out.layers.push_back(std::move(fused));
  }

  // Output functionals over the fused last layer (or the input at depth 0).
  Wire wa, wb;
  if (depth == 0) {
    wa = a.out;
    wb = b.out;
  } else {
    const Eigen::Index na = a.hidden.back().rows();
    const Eigen::Index nb = b.hidden.back().rows();
    wa.w = Eigen::VectorXd::Zero(na + nb);
    wa.w.head(na) = a.out.w;
    wa.b = a.out.b;
    wb.w = Eigen::VectorXd::Zero(na + nb);
    wb.w.tail(nb) = b.out.w;
    wb.b = b.out.b;
  }

  const Eigen::Index stage_width = depth == 0 ? d : out.layers.back().rows();
  StageBuilder stage(stage_width);
  stage.add_gadget(wa, wb, is_max);
  std::vector<Wire> wires;
  out.layers.push_back(stage.finish(wires));
  const Wire& result = wires[0];

  Layer head;
  head.weights = result.w.transpose();
  head.bias = Eigen::VectorXd::Constant(1, result.b);
  head.activation = Activation::Identity;
  out.layers.push_back(std::move(head));
  return out;
}

}  // namespace

void LatticePwl::validate() const {
  if (d < 1) throw ValidationError("lattice dimension must be positive");
  if (pieces.empty()) throw ValidationError("lattice has no pieces");
  if (groups.empty()) throw ValidationError("lattice has no groups");
  for (const auto& theta : pieces) {
    if (theta.size() != d + 1) throw ValidationError("piece coefficient length must be d+1");
    if (!theta.allFinite()) throw ValidationError("piece coefficients must be finite");
  }
  for (const auto& group : groups) {
    if (group.empty()) throw ValidationError("empty group");
    for (int j : group) {
      if (j < 0 || j >= static_cast<int>(pieces.size()))
        throw ValidationError("group references a missing piece");
    }
  }
}

double eval_lattice(const LatticePwl& lattice, const Eigen::VectorXd& x) {
  lattice.validate();
  if (x.size() != lattice.d) throw ValidationError("input dimension mismatch");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& group : lattice.groups) {
    double group_max = -std::numeric_limits<double>::infinity();
    for (int j : group) {
      group_max = std::max(group_max, eval_piece(lattice.pieces[static_cast<std::size_t>(j)], x));
    }
    best = std::min(best, group_max);
  }
  return best;
}

double max_affine_eval(const std::vector<Eigen::VectorXd>& pieces, const Eigen::VectorXd& x) {
  if (pieces.empty()) throw ValidationError("no pieces");
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& theta : pieces) {
    if (theta.size() != x.size() + 1) throw ValidationError("piece coefficient length must be d+1");
    best = std::max(best, eval_piece(theta, x));
  }
  return best;
}

DenseNetwork max_gadget(const DenseNetwork& left, const DenseNetwork& right) {
  return combine_scalar(left, right, true);
}

DenseNetwork min_gadget(const DenseNetwork& left, const DenseNetwork& right) {
  return combine_scalar(left, right, false);
}

CompiledLattice compile_lattice(const LatticePwl& lattice) {
  lattice.validate();

  CompiledLattice out;
  out.report.group_count = static_cast<int>(lattice.groups.size());
  out.report.max_group_size = 0;
  for (const auto& group : lattice.groups) {
    out.report.max_group_size = std::max(out.report.max_group_size, static_cast<int>(group.size()));
  }
  out.report.depth_bound =
      ceil_log2(out.report.group_count) + ceil_log2(out.report.max_group_size);

  // One bucket of leaf wires per group, each an affine functional of the
  // input.
  std::vector<std::vector<Wire>> buckets;
  for (const auto& group : lattice.groups) {
    std::vector<Wire> bucket;
    for (int j : group) {
      const auto& theta = lattice.pieces[static_cast<std::size_t>(j)];
      Wire wire;
      wire.w = theta.tail(lattice.d);
      wire.b = theta[0];
      bucket.push_back(std::move(wire));
    }
    buckets.push_back(std::move(bucket));
  }

  DenseNetwork net;
  Eigen::Index width = lattice.d;

  const int max_rounds = ceil_log2(out.report.max_group_size);
  for (int r = 0; r < max_rounds; ++r) {
    net.layers.push_back(tournament_round(buckets, width, true));
    width = net.layers.back().rows();
  }

  // Collapse the group winners into one bucket for the min tournament.
  std::vector<std::vector<Wire>> winners(1);
  for (auto& bucket : buckets) winners[0].push_back(std::move(bucket[0]));

  const int min_rounds = ceil_log2(out.report.group_count);
  for (int r = 0; r < min_rounds; ++r) {
    net.layers.push_back(tournament_round(winners, width, false));
    width = net.layers.back().rows();
  }

  const Wire& result = winners[0][0];
  Layer head;
  head.weights = result.w.transpose();
  head.bias = Eigen::VectorXd::Constant(1, result.b);
  head.activation = Activation::Identity;
  net.layers.push_back(std::move(head));

  out.report.gadget_stages = static_cast<int>(net.layers.size()) - 1;
  out.network = std::move(net);
  return out;
}

}  // namespace marsnet
