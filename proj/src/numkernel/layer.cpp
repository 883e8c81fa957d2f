#include "biov/numkernel/layer.hpp"

#include <cmath>

#include "biov/core/rng.hpp"

namespace biov {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::globalavgpool: return "globalavgpool";
    case LayerKind::dense: return "dense";
    case LayerKind::batchnorm1d: return "batchnorm1d";
    case LayerKind::batchnorm2d: return "batchnorm2d";
    case LayerKind::layernorm: return "layernorm";
    case LayerKind::patchembed: return "patchembed";
    case LayerKind::multiheadattention: return "multiheadattention";
    case LayerKind::residualadd: return "residualadd";
    case LayerKind::flatten: return "flatten";
    case LayerKind::clstoken: return "clstoken";
    case LayerKind::sequential: return "sequential";
  }
  return "unknown";
}

template <typename T>
ForwardResult<T> Layer<T>::forward(const ParamSet<T>& params, const Tensor<T>& input, Mode mode,
                                   BufferUpdates<T>* updates) const {
  Shape expected = infer_shape(input.shape());
  ForwardResult<T> result = do_forward(params, input, mode, updates);
  if (result.output.shape() != expected) {
    throw ShapeError(path_, expected, result.output.shape(), "inferred and executed output shapes differ");
  }
  if (!result.output.all_finite()) throw NumericalError(path_, "forward output");
  result.cache->owner = this;
  result.cache->mode = mode;
  result.cache->input_shape = input.shape();
  result.cache->output_shape = std::move(expected);
  return result;
}

template <typename T>
Tensor<T> Layer<T>::backward(const ParamSet<T>& params, const LayerCache<T>& cache, const Tensor<T>& grad_output,
                             GradMap<T>& grads) const {
  if (cache.owner != this) throw InvalidArgument("cache passed to layer '" + path_ + "' came from another layer");
  if (grad_output.shape() != cache.output_shape) {
    throw ShapeError(path_, cache.output_shape, grad_output.shape(), "grad_output does not match forward output");
  }
  Tensor<T> grad_input = do_backward(params, cache, grad_output, grads);
  if (grad_input.shape() != cache.input_shape) {
    throw ShapeError(path_, cache.input_shape, grad_input.shape(), "grad_input does not match forward input");
  }
  if (!grad_input.all_finite()) throw NumericalError(path_, "input gradient");
  return grad_input;
}

template <typename T>
ParamSet<T> init_params(const std::vector<ParamDecl>& decls, std::uint64_t seed) {
  ParamSet<T> out;
  Rng rng(seed);
  for (const ParamDecl& d : decls) {
    Tensor<T> t(d.shape);
    switch (d.init) {
      case Init::zeros: break;
      case Init::ones: t.fill(T{1}); break;
      case Init::kaiming_uniform: {
        const double bound = std::sqrt(6.0 / static_cast<double>(d.fan_in));
        for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
        break;
      }
      case Init::normal_small:
        for (auto& v : t.values()) v = static_cast<T>(0.02 * rng.normal());
        break;
    }
    auto& target = d.trainable ? out.params : out.buffers;
    if (!target.emplace(d.name, std::move(t)).second) throw KeyError(d.name, "declared twice");
  }
  return out;
}

template class Layer<float>;
template class Layer<double>;
template ParamSet<float> init_params<float>(const std::vector<ParamDecl>&, std::uint64_t);
template ParamSet<double> init_params<double>(const std::vector<ParamDecl>&, std::uint64_t);

}  // namespace biov
