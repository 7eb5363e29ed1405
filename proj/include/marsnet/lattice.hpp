#pragma once

#include <Eigen/Dense>
#include <vector>

#include "marsnet/network.hpp"

namespace marsnet {

// Piecewise-linear function in lattice form: min over groups of max over the
// group's affine pieces. Each piece is a length-(d+1) vector theta evaluated
// as theta[0] + theta[1..d] . x.
struct LatticePwl {
  int d = 0;
  std::vector<Eigen::VectorXd> pieces;
  std::vector<std::vector<int>> groups;

  void validate() const;
};

double eval_lattice(const LatticePwl& lattice, const Eigen::VectorXd& x);

// Maximum of affine pieces (the single-group special case).
double max_affine_eval(const std::vector<Eigen::VectorXd>& pieces, const Eigen::VectorXd& x);

// Combines two scalar-output networks into one computing the exact max (or
// min) of their outputs:
//   (x+y)/2 + ReLU((x-y)/2) + ReLU((y-x)/2)  = max(x, y)
//   (x+y)/2 - ReLU((x-y)/2) - ReLU((y-x)/2)  = min(x, y)
// The operands run side by side; the shallower one is padded with paired-ReLU
// passthrough stages (u = ReLU(u) - ReLU(-u)) so intermediate values of any
// sign survive. Operands need rectified hidden layers and an affine output.
DenseNetwork max_gadget(const DenseNetwork& left, const DenseNetwork& right);
DenseNetwork min_gadget(const DenseNetwork& left, const DenseNetwork& right);

struct DepthReport {
  int group_count = 0;
  int max_group_size = 0;
  int gadget_stages = 0;  // ReLU layers of the compiled network
  int depth_bound = 0;    // ceil(log2 M) + ceil(log2 max|s_i|)
};

struct CompiledLattice {
  DenseNetwork network;
  DepthReport report;
};

// Compiles the lattice into a ReLU network: each group's max is built by a
// balanced pairwise tournament, the group winners are combined by a balanced
// min tournament, and gadgets at the same tournament level share one layer.
// Odd counts get passthrough byes. A single-piece lattice compiles to a
// purely affine network with zero gadget stages.
CompiledLattice compile_lattice(const LatticePwl& lattice);

}  // namespace marsnet
