#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>

#include "biov/numkernel/layer.hpp"

namespace biov {

/// Scalar functional of a network output. Returns the value and, when `grad`
/// is non-null, writes d(value)/d(output) into it.
using ScalarLoss = std::function<double(const Tensor<double>& output, Tensor<double>* grad)>;

struct GradCheckOptions {
  double step = 1e-5;
  Mode mode = Mode::train;
  bool check_input = true;
  /// Check at most this many coordinates per tensor (evenly strided); 0 = all.
  std::size_t max_coords_per_tensor = 0;
};

struct GradReport {
  double max_rel_error = 0.0;
  std::string worst_coordinate;
  std::size_t coordinates_checked = 0;
  /// Max relative error per parameter name, plus "input".
  std::map<std::string, double> per_tensor;
};

/// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

/// Compares the analytic backward pass against central differences for every
/// trainable parameter coordinate and (optionally) every input coordinate.
/// Running statistics are never updated during the check. Throws
/// NumericalError naming the coordinate if either gradient is non-finite, and
/// KeyError if the gradient key set differs from the trainable parameters.
GradReport check_gradients(const Layer<double>& network, const ParamSet<double>& params, const Tensor<double>& input,
                           const ScalarLoss& loss, const GradCheckOptions& options = {});

/// sum(w * output) with fixed pseudo-random weights in [-1, 1].
ScalarLoss weighted_sum_loss(std::uint64_t seed);

/// 0.5 * sum(output^2)
ScalarLoss quadratic_loss();

}  // namespace biov
