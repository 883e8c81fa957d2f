#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "biov/numkernel/layer.hpp"

namespace biov {

inline constexpr double kNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// 2-d convolution over [N, C, H, W], square kernel. im2col + GEMM.
/// Params: weight [out, in, k, k], bias [out] (optional).
template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(std::string path, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         std::size_t stride = 1, std::size_t padding = 0, bool bias = true);
  LayerKind kind() const override { return LayerKind::conv2d; }
  Shape infer_shape(const Shape& input) const override;
  std::vector<ParamDecl> param_decls() const override;

  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }

 protected:
  ForwardResult<T> do_forward(const ParamSet<T>&, const Tensor<T>&, Mode, BufferUpdates<T>*) const override;
  Tensor<T> do_backward(const ParamSet<T>&, const LayerCache<T>&, const Tensor<T>&, GradMap<T>&) const override;

 private:
  std::size_t in_, out_, kernel_, stride_, padding_;
  bool bias_;
};

template <typename T>
class ReLU final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  LayerKind kind() const override { return LayerKind::relu; }
  Shape infer_shape(const Shape& input) const override { return input; }

 protected:
  ForwardResult<T> do_forward(const ParamSet<T>&, const Tensor<T>&, Mode, BufferUpdates<T>*) const override;
  Tensor<T> do_backward(const ParamSet<T>&, const LayerCache<T>&, const Tensor<T>&, GradMap<T>&) const override;
};

/// Max pooling over [N, C, H, W]; first maximum wins on ties.
template <typename T>
class MaxPool2d final : public Layer<T> {
 public:
  MaxPool2d(std::string path, std::size_t kernel, std::size_t stride = 0);
  LayerKind kind() const override { return LayerKind::maxpool2d; }
  Shape infer_shape(const Shape& input) const override;

 protected:
  ForwardResult<T> do_forward(const ParamSet<T>&, const Tensor<T>&, Mode, BufferUpdates<T>*) const override;
  Tensor<T> do_backward(const ParamSet<T>&, const LayerCache<T>&, const Tensor<T>&, GradMap<T>&) const override;

 private:
  std::size_t kernel_, stride_;
};

/// [N, C, H, W] -> [N, C]
template <typename T>
class GlobalAvgPool final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  LayerKind kind() const override { return LayerKind::globalavgpool; }
  Shape infer_shape(const Shape& input) const override;

 protected:
  ForwardResult<T> do_forward(const ParamSet<T>&, const Tensor<T>&, Mode, BufferUpdates<T>*) const override;
  Tensor<T> do_backward(const ParamSet<T>&, const LayerCache<T>&, const Tensor<T>&, GradMap<T>&) const override;
};

/// Affine map on the last axis: y = x W + b with W [in, out].
template <typename T>
class Dense final : public Layer<T> {
 public:
  Dense(std::string path, std::size_t in_features, std::size_t out_features, bool bias = true);
  LayerKind kind() const override { return LayerKind::dense; }
  Shape infer_shape(const Shape& input) const override;
  std::vector<ParamDecl> param_decls() const override;

 protected:
  ForwardResult<T> do_forward(const ParamSet<T>&, const Tensor<T>&, Mode, BufferUpdates<T>*) const override;
  Tensor<T> do_backward(const ParamSet<T>&, const LayerCache<T>&, const Tensor<T>&, GradMap<T>&) const override;

 private:
  std::size_t in_, out_;
  bool bias_;
};

/// Batch normalization over axis 1 of [N, C] (1d) or [N, C, H, W] (2d).
/// Train mode normalizes with batch statistics and proposes running-stat
/// updates with momentum; eval mode uses the running statistics.
template <typename T>
class BatchNorm final : public Layer<T> {
 public:
  BatchNorm(std::string path, std::size_t channels, bool spatial, double epsilon = kNormEpsilon,
            double momentum = kBatchNormMomentum);
  LayerKind kind() const override { return spatial_ ? LayerKind::batchnorm2d : LayerKind::batchnorm1d; }
  Shape infer_shape(const Shape& input) const override;
  std::vector<ParamDecl> param_decls() const override;

 protected:
  ForwardResult<T> do_forward(const ParamSet<T>&, const Tensor<T>&, Mode, BufferUpdates<T>*) const override;
  Tensor<T> do_backward(const ParamSet<T>&, const LayerCache<T>&, const Tensor<T>&, GradMap<T>&) const override;

 private:
  std::size_t channels_;
  bool spatial_;
  double epsilon_, momentum_;
};

/// Normalization over the last axis with learned scale and shift.
template <typename T>
class LayerNorm final : public Layer<T> {
 public:
  LayerNorm(std::string path, std::size_t features, double epsilon = kNormEpsilon);
  LayerKind kind() const override { return LayerKind::layernorm; }
  Shape infer_shape(const Shape& input) const override;
  std::vector<ParamDecl> param_decls() const override;

 protected:
  ForwardResult<T> do_forward(const ParamSet<T>&, const Tensor<T>&, Mode, BufferUpdates<T>*) const override;
  Tensor<T> do_backward(const ParamSet<T>&, const LayerCache<T>&, const Tensor<T>&, GradMap<T>&) const override;

 private:
  std::size_t features_;
  double epsilon_;
};

/// [N, C, H, W] -> [N, 1 + (H/P)(W/P), D]: a class token followed by one
/// linearly projected token per non-overlapping P x P patch, each plus a
/// learned position embedding.
template <typename T>
class PatchEmbed final : public Layer<T> {
 public:
  PatchEmbed(std::string path, std::size_t channels, std::size_t height, std::size_t width, std::size_t patch,
             std::size_t dim);
  LayerKind kind() const override { return LayerKind::patchembed; }
  Shape infer_shape(const Shape& input) const override;
  std::vector<ParamDecl> param_decls() const override;

  std::size_t tokens() const { return (height_ / patch_) * (width_ / patch_) + 1; }

 protected:
  ForwardResult<T> do_forward(const ParamSet<T>&, const Tensor<T>&, Mode, BufferUpdates<T>*) const override;
  Tensor<T> do_backward(const ParamSet<T>&, const LayerCache<T>&, const Tensor<T>&, GradMap<T>&) const override;

 private:
  std::size_t channels_, height_, width_, patch_, dim_;
};

/// Multi-head self-attention over [N, T, D] with Q/K/V/output projections.
template <typename T>
class MultiHeadAttention final : public Layer<T> {
 public:
  MultiHeadAttention(std::string path, std::size_t dim, std::size_t heads);
  LayerKind kind() const override { return LayerKind::multiheadattention; }
  Shape infer_shape(const Shape& input) const override;
  std::vector<ParamDecl> param_decls() const override;

 protected:
  ForwardResult<T> do_forward(const ParamSet<T>&, const Tensor<T>&, Mode, BufferUpdates<T>*) const override;
  Tensor<T> do_backward(const ParamSet<T>&, const LayerCache<T>&, const Tensor<T>&, GradMap<T>&) const override;

 private:
  std::size_t dim_, heads_;
};

/// [N, ...] -> [N, prod(...)]
template <typename T>
class Flatten final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  LayerKind kind() const override { return LayerKind::flatten; }
  Shape infer_shape(const Shape& input) const override;

 protected:
  ForwardResult<T> do_forward(const ParamSet<T>&, const Tensor<T>&, Mode, BufferUpdates<T>*) const override;
  Tensor<T> do_backward(const ParamSet<T>&, const LayerCache<T>&, const Tensor<T>&, GradMap<T>&) const override;
};

/// [N, T, D] -> [N, D], keeping token 0.
template <typename T>
class ClsToken final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  LayerKind kind() const override { return LayerKind::clstoken; }
  Shape infer_shape(const Shape& input) const override;

 protected:
  ForwardResult<T> do_forward(const ParamSet<T>&, const Tensor<T>&, Mode, BufferUpdates<T>*) const override;
  Tensor<T> do_backward(const ParamSet<T>&, const LayerCache<T>&, const Tensor<T>&, GradMap<T>&) const override;
};

/// Ordered composition of layers.
template <typename T>
class Sequential final : public Layer<T> {
 public:
  explicit Sequential(std::string path) : Layer<T>(std::move(path)) {}

  Sequential& add(LayerPtr<T> layer) {
    layers_.push_back(std::move(layer));
    return *this;
  }
  template <typename L, typename... Args>
  Sequential& emplace(Args&&... args) {
    layers_.push_back(std::make_unique<L>(std::forward<Args>(args)...));
    return *this;
  }

  LayerKind kind() const override { return LayerKind::sequential; }
  Shape infer_shape(const Shape& input) const override;
  std::vector<ParamDecl> param_decls() const override;

  std::size_t size() const { return layers_.size(); }
  const Layer<T>& at(std::size_t i) const { return *layers_.at(i); }

  /// Paths of the direct children, in execution order.
  std::vector<std::string> layer_paths() const;
  /// Index of the direct child with this path; throws KeyError listing the
  /// available paths.
  std::size_t index_of(const std::string& path) const;

  /// Forward through children [0, count) only.
  ForwardResult<T> forward_prefix(const ParamSet<T>& params, const Tensor<T>& input, std::size_t count, Mode mode,
                                  BufferUpdates<T>* updates = nullptr) const;

 protected:
  ForwardResult<T> do_forward(const ParamSet<T>&, const Tensor<T>&, Mode, BufferUpdates<T>*) const override;
  Tensor<T> do_backward(const ParamSet<T>&, const LayerCache<T>&, const Tensor<T>&, GradMap<T>&) const override;

 private:
  std::vector<LayerPtr<T>> layers_;
};

/// y = x + inner(x)
template <typename T>
class Residual final : public Layer<T> {
 public:
  Residual(std::string path, std::unique_ptr<Sequential<T>> inner);
  LayerKind kind() const override { return LayerKind::residualadd; }
  Shape infer_shape(const Shape& input) const override;
  std::vector<ParamDecl> param_decls() const override { return inner_->param_decls(); }
  const Sequential<T>& inner() const { return *inner_; }

 protected:
  ForwardResult<T> do_forward(const ParamSet<T>&, const Tensor<T>&, Mode, BufferUpdates<T>*) const override;
  Tensor<T> do_backward(const ParamSet<T>&, const LayerCache<T>&, const Tensor<T>&, GradMap<T>&) const override;

 private:
  std::unique_ptr<Sequential<T>> inner_;
};

}  // namespace biov
