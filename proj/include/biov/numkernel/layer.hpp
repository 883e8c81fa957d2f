#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "biov/numkernel/tensor.hpp"

namespace biov {

enum class Mode { train, eval };

enum class LayerKind {
  conv2d,
  relu,
  maxpool2d,
  globalavgpool,
  dense,
  batchnorm1d,
  batchnorm2d,
  layernorm,
  patchembed,
  multiheadattention,
  residualadd,
  flatten,
  clstoken,
  sequential,
};

std::string_view to_string(LayerKind kind);

enum class Init { kaiming_uniform, zeros, ones, normal_small };

/// A parameter or buffer a layer owns, by fully-qualified name.
struct ParamDecl {
  std::string name;
  Shape shape;
  Init init = Init::zeros;
  std::size_t fan_in = 0;
  bool trainable = true;
};

/// Trainable parameters plus non-trainable buffers (batch-norm running stats).
template <typename T>
struct ParamSet {
  std::map<std::string, Tensor<T>> params;
  std::map<std::string, Tensor<T>> buffers;

  const Tensor<T>& param(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw KeyError(name, "no such parameter");
    return it->second;
  }
  Tensor<T>& param(const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw KeyError(name, "no such parameter");
    return it->second;
  }
  const Tensor<T>& buffer(const std::string& name) const {
    auto it = buffers.find(name);
    if (it == buffers.end()) throw KeyError(name, "no such buffer");
    return it->second;
  }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& [k, v] : params) out.params.emplace(k, v.template cast<U>());
    for (const auto& [k, v] : buffers) out.buffers.emplace(k, v.template cast<U>());
    return out;
  }

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    return a.params == b.params && a.buffers == b.buffers;
  }
};

/// Gradients keyed like ParamSet::params. Backward passes accumulate into it.
template <typename T>
using GradMap = std::map<std::string, Tensor<T>>;

/// Running-statistic updates a train-mode forward wants applied to buffers.
template <typename T>
using BufferUpdates = std::map<std::string, Tensor<T>>;

template <typename T>
void accumulate_grad(GradMap<T>& grads, const std::string& name, Tensor<T> grad) {
  auto it = grads.find(name);
  if (it == grads.end()) {
    grads.emplace(name, std::move(grad));
  } else {
    it->second += grad;
  }
}

template <typename T>
void apply_buffer_updates(ParamSet<T>& params, BufferUpdates<T>&& updates) {
  for (auto& [name, value] : updates) {
    auto it = params.buffers.find(name);
    if (it == params.buffers.end()) throw KeyError(name, "buffer update for unknown buffer");
    it->second = std::move(value);
  }
}

/// Whatever a layer keeps from forward for its backward pass.
template <typename T>
struct LayerCache {
  virtual ~LayerCache() = default;
  const void* owner = nullptr;
  Mode mode = Mode::eval;
  Shape input_shape;
  Shape output_shape;
};

template <typename T>
struct ForwardResult {
  Tensor<T> output;
  std::unique_ptr<LayerCache<T>> cache;
};

/// Layer = kind + hyperparameters + the names of the parameters it reads.
/// Layers hold no parameter values and no activation state, so a layer object
/// can be shared between towers and threads. Values live in ParamSet; caches
/// are returned from forward and handed back to backward.
template <typename T>
class Layer {
 public:
  explicit Layer(std::string path) : path_(std::move(path)) {}
  virtual ~Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;

  const std::string& path() const noexcept { return path_; }
  virtual LayerKind kind() const = 0;

  /// Output shape for an input shape; throws ShapeError on mismatch.
  virtual Shape infer_shape(const Shape& input) const = 0;

  /// Parameters and buffers of this layer and all nested layers.
  virtual std::vector<ParamDecl> param_decls() const { return {}; }

  /// Shape-checked forward. In train mode, running-statistic updates are
  /// written to `updates` when it is non-null and otherwise discarded.
  ForwardResult<T> forward(const ParamSet<T>& params, const Tensor<T>& input, Mode mode,
                           BufferUpdates<T>* updates = nullptr) const;

  /// Gradient w.r.t. the input; parameter gradients are added into `grads`.
  Tensor<T> backward(const ParamSet<T>& params, const LayerCache<T>& cache, const Tensor<T>& grad_output,
                     GradMap<T>& grads) const;

  /// Eval-mode forward without a cache.
  Tensor<T> infer(const ParamSet<T>& params, const Tensor<T>& input) const {
    return forward(params, input, Mode::eval).output;
  }

 protected:
  std::string param_name(std::string_view local) const { return path_ + "." + std::string(local); }

  virtual ForwardResult<T> do_forward(const ParamSet<T>& params, const Tensor<T>& input, Mode mode,
                                      BufferUpdates<T>* updates) const = 0;
  virtual Tensor<T> do_backward(const ParamSet<T>& params, const LayerCache<T>& cache,
                                const Tensor<T>& grad_output, GradMap<T>& grads) const = 0;

 private:
  std::string path_;
};

template <typename T>
using LayerPtr = std::unique_ptr<Layer<T>>;

/// Fresh parameters for every declaration, drawn from a seeded stream.
/// Kaiming-uniform bound sqrt(6 / fan_in) for weights, zeros for biases,
/// ones for scales, N(0, 0.02^2) for token / position embeddings.
template <typename T>
ParamSet<T> init_params(const std::vector<ParamDecl>& decls, std::uint64_t seed);

}  // namespace biov
