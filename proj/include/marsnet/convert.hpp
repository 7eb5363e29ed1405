#pragma once

#include <cstdint>
#include <vector>

#include "marsnet/mars.hpp"
#include "marsnet/network.hpp"

namespace marsnet {

struct ConversionReport {
  int hidden_width = 0;
  // Source basis function per nonzero hidden row, in row order.
  std::vector<BasisFunction> unit_sources;
  // Largest |forward(net, x) - eval_model(m, x)| over a fixed probe sweep of
  // 1000 points uniform in [-2, 3]^d.
  double max_abs_deviation = 0.0;
};

struct ConvertedModel {
  DenseNetwork network;
  ConversionReport report;
};

// Builds the network that computes exactly the same function as the fitted
// model: one ReLU unit per hinge term (+1/-1 input weight at the term's
// dimension, bias -knot for the positive direction and +knot for the
// negative), an affine output layer carrying the term coefficients and the
// intercept. A model without terms yields a width-1 zero hidden layer so the
// shape stays valid.
ConvertedModel mars_to_network(const MarsModel& model);

// Appends `extra` units to hidden layer `layer_index` without changing the
// computed function. Incoming weights and bias of the new units are zero (or
// uniform on (-jitter, +jitter) for the incoming weights when jitter > 0);
// the next layer's new columns are always zero, so the function is preserved
// exactly either way.
DenseNetwork widen(const DenseNetwork& net, std::size_t layer_index, Eigen::Index extra,
                   double jitter = 0.0, std::uint64_t seed = 0);

// Inserts an identity ReLU layer at `position`. The preceding layer must be
// rectified: its outputs are nonnegative, so ReLU(I x) = x and the function
// is preserved exactly. position 0 (directly after the raw input, which may
// be negative) is rejected.
DenseNetwork deepen(const DenseNetwork& net, std::size_t position);

// Reshapes to the given full width sequence {input, hidden..., output} by
// inserting identity layers after the last hidden layer, then widening each
// hidden layer. Input and output widths must stay unchanged, every target
// hidden width must be at least the width it replaces, and the target depth
// at least the current depth.
DenseNetwork reshape_to(const DenseNetwork& net, const std::vector<Eigen::Index>& target_widths,
                        double jitter = 0.0, std::uint64_t seed = 0);

struct LayerShift {
  int layer = 0;
  double w_delta_frobenius = 0.0;
  double b_delta_norm = 0.0;
  double relative_shift = 0.0;  // ||dW||_F / (||W_before||_F + 1e-12)
  double max_abs_change = 0.0;  // over all weight and bias entries
};

struct ShiftReport {
  std::vector<LayerShift> layers;
};

// Per-layer parameter movement between two equally-shaped networks.
ShiftReport parameter_shift_report(const DenseNetwork& initial, const DenseNetwork& trained);

}  // namespace marsnet
