#include "biov/numkernel/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "biov/core/rng.hpp"

namespace biov {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double evaluate(const Layer<double>& net, const ParamSet<double>& params, const Tensor<double>& input,
                const ScalarLoss& loss, Mode mode) {
  return loss(net.forward(params, input, mode).output, nullptr);
}

void record(GradReport& report, const std::string& tensor, std::size_t index, double analytic, double numeric) {
  const std::string coord = tensor + "[" + std::to_string(index) + "]";
  if (!std::isfinite(analytic)) throw NumericalError(coord, "analytic gradient");
  if (!std::isfinite(numeric)) throw NumericalError(coord, "numeric gradient");
  const double err = relative_error(analytic, numeric);
  auto& slot = report.per_tensor[tensor];
  slot = std::max(slot, err);
  ++report.coordinates_checked;
  if (err > report.max_rel_error || report.worst_coordinate.empty()) {
    report.max_rel_error = err;
    report.worst_coordinate = coord;
  }
}

std::size_t stride_for(std::size_t n, std::size_t cap) { return cap == 0 || n <= cap ? 1 : (n + cap - 1) / cap; }

}  // namespace

GradReport check_gradients(const Layer<double>& network, const ParamSet<double>& params, const Tensor<double>& input,
                           const ScalarLoss& loss, const GradCheckOptions& options) {
  const double h = options.step;
  auto fwd = network.forward(params, input, options.mode);
  Tensor<double> grad_out(fwd.output.shape());
  loss(fwd.output, &grad_out);
  GradMap<double> grads;
  const Tensor<double> grad_in = network.backward(params, *fwd.cache, grad_out, grads);

  for (const auto& [name, _] : params.params) {
    if (!grads.count(name)) throw KeyError(name, "trainable parameter received no gradient");
  }
  for (const auto& [name, _] : grads) {
    if (!params.params.count(name)) throw KeyError(name, "gradient for a non-trainable or unknown parameter");
  }

  GradReport report;
  ParamSet<double> probe = params;
  for (auto& [name, tensor] : probe.params) {
    const Tensor<double>& analytic = grads.at(name);
    const std::size_t step = stride_for(tensor.size(), options.max_coords_per_tensor);
    for (std::size_t i = 0; i < tensor.size(); i += step) {
      const double orig = tensor[i];
      tensor[i] = orig + h;
      const double up = evaluate(network, probe, input, loss, options.mode);
      tensor[i] = orig - h;
      const double down = evaluate(network, probe, input, loss, options.mode);
      tensor[i] = orig;
      record(report, name, i, analytic[i], (up - down) / (2.0 * h));
    }
  }

  if (options.check_input) {
    Tensor<double> x = input;
    const std::size_t step = stride_for(x.size(), options.max_coords_per_tensor);
    for (std::size_t i = 0; i < x.size(); i += step) {
      const double orig = x[i];
      x[i] = orig + h;
      const double up = evaluate(network, params, x, loss, options.mode);
      x[i] = orig - h;
      const double down = evaluate(network, params, x, loss, options.mode);
      x[i] = orig;
      record(report, "input", i, grad_in[i], (up - down) / (2.0 * h));
    }
  }
  return report;
}

ScalarLoss weighted_sum_loss(std::uint64_t seed) {
  return [seed](const Tensor<double>& out, Tensor<double>* grad) {
    Rng rng(seed);
    double value = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double w = rng.uniform(-1.0, 1.0);
      value += w * out[i];
      if (grad) (*grad)[i] = w;
    }
    return value;
  };
}

ScalarLoss quadratic_loss() {
  return [](const Tensor<double>& out, Tensor<double>* grad) {
    double value = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      value += 0.5 * out[i] * out[i];
      if (grad) (*grad)[i] = out[i];
    }
    return value;
  };
}

}  // namespace biov
