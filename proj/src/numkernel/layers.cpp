#include "biov/numkernel/layers.hpp"

#include <cmath>
#include <limits>

#include "gemm.hpp"

namespace biov {

using detail::cblock;
using detail::cmat;
using detail::mblock;
using detail::mmat;

namespace {

template <typename T, typename C>
const C& cache_as(const LayerCache<T>& cache) {
  return static_cast<const C&>(cache);
}

template <typename T>
struct EmptyCache : LayerCache<T> {};

template <typename T>
ForwardResult<T> with_empty_cache(Tensor<T> out) {
  return {std::move(out), std::make_unique<EmptyCache<T>>()};
}

void require_rank(const std::string& layer, const Shape& input, std::size_t rank, const std::string& what) {
  if (input.size() != rank) throw ShapeError(layer, Shape(rank, 0), input, "expected rank " + std::to_string(rank) + " " + what);
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

template <typename T>
struct ConvCache : LayerCache<T> {
  std::vector<T> cols;  // [K, N*Ho*Wo]
};

template <typename T>
Conv2d<T>::Conv2d(std::string path, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                  std::size_t stride, std::size_t padding, bool bias)
    : Layer<T>(std::move(path)),
      in_(in_channels),
      out_(out_channels),
      kernel_(kernel),
      stride_(stride),
      padding_(padding),
      bias_(bias) {
  if (!in_ || !out_ || !kernel_ || !stride_) throw InvalidArgument("conv2d '" + this->path() + "': zero hyperparameter");
}

template <typename T>
Shape Conv2d<T>::infer_shape(const Shape& input) const {
  require_rank(this->path(), input, 4, "[N, C, H, W]");
  if (input[1] != in_) throw ShapeError(this->path(), {input[0], in_, input[2], input[3]}, input, "channel count");
  if (input[2] + 2 * padding_ < kernel_ || input[3] + 2 * padding_ < kernel_) {
    throw ShapeError(this->path(), {input[0], in_, kernel_, kernel_}, input, "spatial size smaller than kernel");
  }
  return {input[0], out_, (input[2] + 2 * padding_ - kernel_) / stride_ + 1,
          (input[3] + 2 * padding_ - kernel_) / stride_ + 1};
}

template <typename T>
std::vector<ParamDecl> Conv2d<T>::param_decls() const {
  std::vector<ParamDecl> d{{this->param_name("weight"), {out_, in_, kernel_, kernel_}, Init::kaiming_uniform,
                            in_ * kernel_ * kernel_, true}};
  if (bias_) d.push_back({this->param_name("bias"), {out_}, Init::zeros, 0, true});
  return d;
}

template <typename T>
ForwardResult<T> Conv2d<T>::do_forward(const ParamSet<T>& params, const Tensor<T>& x, Mode,
                                       BufferUpdates<T>*) const {
  const Shape os = infer_shape(x.shape());
  const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3), ho = os[2], wo = os[3];
  const std::size_t k = kernel_, kk = in_ * k * k, hw = ho * wo, l = n * hw;

  auto cache = std::make_unique<ConvCache<T>>();
  cache->cols.assign(kk * l, T{0});
  T* cols = cache->cols.data();
  const T* xp = x.data();
  for (std::size_t c = 0; c < in_; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        T* row = cols + ((c * k + ki) * k + kj) * l;
        for (std::size_t b = 0; b < n; ++b) {
          const T* plane = xp + (b * in_ + c) * h * w;
          T* dst = row + b * hw;
          for (std::size_t oh = 0; oh < ho; ++oh) {
            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride_ + ki) - static_cast<std::ptrdiff_t>(padding_);
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t ow = 0; ow < wo; ++ow) {
              const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride_ + kj) - static_cast<std::ptrdiff_t>(padding_);
              if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) continue;
              dst[oh * wo + ow] = plane[ih * w + iw];
            }
          }
        }
      }
    }
  }

  std::vector<T> out_mat(out_ * l);
  mmat(out_mat.data(), out_, l).noalias() = cmat(params.param(this->param_name("weight")).data(), out_, kk) *
                                            cmat(cols, kk, l);
  Tensor<T> y(os);
  const T* bias = bias_ ? params.param(this->param_name("bias")).data() : nullptr;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t co = 0; co < out_; ++co) {
      const T* src = out_mat.data() + co * l + b * hw;
      T* dst = y.data() + (b * out_ + co) * hw;
      const T bv = bias ? bias[co] : T{0};
      for (std::size_t j = 0; j < hw; ++j) dst[j] = src[j] + bv;
    }
  }
  return {std::move(y), std::move(cache)};
}

template <typename T>
Tensor<T> Conv2d<T>::do_backward(const ParamSet<T>& params, const LayerCache<T>& base, const Tensor<T>& g,
                                 GradMap<T>& grads) const {
  const auto& cache = cache_as<T, ConvCache<T>>(base);
  const Shape& is = cache.input_shape;
  const std::size_t n = is[0], h = is[2], w = is[3], ho = g.dim(2), wo = g.dim(3);
  const std::size_t k = kernel_, kk = in_ * k * k, hw = ho * wo, l = n * hw;

  std::vector<T> gmat(out_ * l);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t co = 0; co < out_; ++co) {
      const T* src = g.data() + (b * out_ + co) * hw;
      std::copy(src, src + hw, gmat.data() + co * l + b * hw);
    }
  }
  const auto gm = cmat(gmat.data(), out_, l);
  const auto cols = cmat(cache.cols.data(), kk, l);

  Tensor<T> dw({out_, in_, k, k});
  mmat(dw.data(), out_, kk).noalias() = gm * cols.transpose();
  accumulate_grad(grads, this->param_name("weight"), std::move(dw));
  if (bias_) {
    Tensor<T> db({out_});
    for (std::size_t co = 0; co < out_; ++co) {
      T s{0};
      const T* row = gmat.data() + co * l;
      for (std::size_t j = 0; j < l; ++j) s += row[j];
      db[co] = s;
    }
    accumulate_grad(grads, this->param_name("bias"), std::move(db));
  }

  std::vector<T> dcols(kk * l);
  mmat(dcols.data(), kk, l).noalias() = cmat(params.param(this->param_name("weight")).data(), out_, kk).transpose() * gm;

  Tensor<T> dx(is);
  for (std::size_t c = 0; c < in_; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const T* row = dcols.data() + ((c * k + ki) * k + kj) * l;
        for (std::size_t b = 0; b < n; ++b) {
          T* plane = dx.data() + (b * in_ + c) * h * w;
          const T* src = row + b * hw;
          for (std::size_t oh = 0; oh < ho; ++oh) {
            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride_ + ki) - static_cast<std::ptrdiff_t>(padding_);
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t ow = 0; ow < wo; ++ow) {
              const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride_ + kj) - static_cast<std::ptrdiff_t>(padding_);
              if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) continue;
              plane[ih * w + iw] += src[oh * wo + ow];
            }
          }
        }
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------- ReLU

template <typename T>
struct ReluCache : LayerCache<T> {
  Tensor<T> output;
};

template <typename T>
ForwardResult<T> ReLU<T>::do_forward(const ParamSet<T>&, const Tensor<T>& x, Mode, BufferUpdates<T>*) const {
  Tensor<T> y = x;
  for (auto& v : y.values()) v = v > T{0} ? v : T{0};
  auto cache = std::make_unique<ReluCache<T>>();
  cache->output = y;
  return {std::move(y), std::move(cache)};
}

template <typename T>
Tensor<T> ReLU<T>::do_backward(const ParamSet<T>&, const LayerCache<T>& base, const Tensor<T>& g, GradMap<T>&) const {
  const auto& cache = cache_as<T, ReluCache<T>>(base);
  Tensor<T> dx = g;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!(cache.output[i] > T{0})) dx[i] = T{0};
  }
  return dx;
}

// ---------------------------------------------------------------- MaxPool2d

template <typename T>
struct PoolCache : LayerCache<T> {
  std::vector<std::size_t> argmax;
};

template <typename T>
MaxPool2d<T>::MaxPool2d(std::string path, std::size_t kernel, std::size_t stride)
    : Layer<T>(std::move(path)), kernel_(kernel), stride_(stride ? stride : kernel) {
  if (!kernel_) throw InvalidArgument("maxpool2d '" + this->path() + "': zero kernel");
}

template <typename T>
Shape MaxPool2d<T>::infer_shape(const Shape& input) const {
  require_rank(this->path(), input, 4, "[N, C, H, W]");
  if (input[2] < kernel_ || input[3] < kernel_) {
    throw ShapeError(this->path(), {input[0], input[1], kernel_, kernel_}, input, "spatial size smaller than pool window");
  }
  return {input[0], input[1], (input[2] - kernel_) / stride_ + 1, (input[3] - kernel_) / stride_ + 1};
}

template <typename T>
ForwardResult<T> MaxPool2d<T>::do_forward(const ParamSet<T>&, const Tensor<T>& x, Mode, BufferUpdates<T>*) const {
  const Shape os = infer_shape(x.shape());
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3), ho = os[2], wo = os[3];
  Tensor<T> y(os);
  auto cache = std::make_unique<PoolCache<T>>();
  cache->argmax.resize(y.size());
  for (std::size_t p = 0; p < planes; ++p) {
    const T* plane = x.data() + p * h * w;
    for (std::size_t oh = 0; oh < ho; ++oh) {
      for (std::size_t ow = 0; ow < wo; ++ow) {
        std::size_t best = (oh * stride_) * w + ow * stride_;
        for (std::size_t i = 0; i < kernel_; ++i) {
          for (std::size_t j = 0; j < kernel_; ++j) {
            const std::size_t idx = (oh * stride_ + i) * w + ow * stride_ + j;
            if (plane[idx] > plane[best]) best = idx;
          }
        }
        const std::size_t o = (p * ho + oh) * wo + ow;
        y[o] = plane[best];
        cache->argmax[o] = p * h * w + best;
      }
    }
  }
  return {std::move(y), std::move(cache)};
}

template <typename T>
Tensor<T> MaxPool2d<T>::do_backward(const ParamSet<T>&, const LayerCache<T>& base, const Tensor<T>& g,
                                    GradMap<T>&) const {
  const auto& cache = cache_as<T, PoolCache<T>>(base);
  Tensor<T> dx(cache.input_shape);
  for (std::size_t o = 0; o < g.size(); ++o) dx[cache.argmax[o]] += g[o];
  return dx;
}

// ---------------------------------------------------------------- GlobalAvgPool

template <typename T>
Shape GlobalAvgPool<T>::infer_shape(const Shape& input) const {
  require_rank(this->path(), input, 4, "[N, C, H, W]");
  return {input[0], input[1]};
}

template <typename T>
ForwardResult<T> GlobalAvgPool<T>::do_forward(const ParamSet<T>&, const Tensor<T>& x, Mode, BufferUpdates<T>*) const {
  const std::size_t planes = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> y({x.dim(0), x.dim(1)});
  for (std::size_t p = 0; p < planes; ++p) {
    T s{0};
    const T* plane = x.data() + p * hw;
    for (std::size_t j = 0; j < hw; ++j) s += plane[j];
    y[p] = s / static_cast<T>(hw);
  }
  return with_empty_cache(std::move(y));
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::do_backward(const ParamSet<T>&, const LayerCache<T>& base, const Tensor<T>& g,
                                        GradMap<T>&) const {
  Tensor<T> dx(base.input_shape);
  const std::size_t hw = dx.dim(2) * dx.dim(3);
  for (std::size_t p = 0; p < g.size(); ++p) {
    const T v = g[p] / static_cast<T>(hw);
    std::fill(dx.data() + p * hw, dx.data() + (p + 1) * hw, v);
  }
  return dx;
}

// ---------------------------------------------------------------- Dense

template <typename T>
struct DenseCache : LayerCache<T> {
  Tensor<T> input;
};

template <typename T>
Dense<T>::Dense(std::string path, std::size_t in_features, std::size_t out_features, bool bias)
    : Layer<T>(std::move(path)), in_(in_features), out_(out_features), bias_(bias) {
  if (!in_ || !out_) throw InvalidArgument("dense '" + this->path() + "': zero feature count");
}

template <typename T>
Shape Dense<T>::infer_shape(const Shape& input) const {
  if (input.size() < 2 || input.back() != in_) {
    Shape expected = input.size() >= 2 ? input : Shape{0, in_};
    expected.back() = in_;
    throw ShapeError(this->path(), expected, input, "last axis must equal input features");
  }
  Shape out = input;
  out.back() = out_;
  return out;
}

template <typename T>
std::vector<ParamDecl> Dense<T>::param_decls() const {
  std::vector<ParamDecl> d{{this->param_name("weight"), {in_, out_}, Init::kaiming_uniform, in_, true}};
  if (bias_) d.push_back({this->param_name("bias"), {out_}, Init::zeros, 0, true});
  return d;
}

template <typename T>
ForwardResult<T> Dense<T>::do_forward(const ParamSet<T>& params, const Tensor<T>& x, Mode, BufferUpdates<T>*) const {
  const std::size_t rows = x.size() / in_;
  Tensor<T> y(infer_shape(x.shape()));
  auto ym = mmat(y.data(), rows, out_);
  ym.noalias() = cmat(x.data(), rows, in_) * cmat(params.param(this->param_name("weight")).data(), in_, out_);
  if (bias_) {
    const T* b = params.param(this->param_name("bias")).data();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < out_; ++j) y[r * out_ + j] += b[j];
    }
  }
  auto cache = std::make_unique<DenseCache<T>>();
  cache->input = x;
  return {std::move(y), std::move(cache)};
}

template <typename T>
Tensor<T> Dense<T>::do_backward(const ParamSet<T>& params, const LayerCache<T>& base, const Tensor<T>& g,
                                GradMap<T>& grads) const {
  const auto& cache = cache_as<T, DenseCache<T>>(base);
  const std::size_t rows = g.size() / out_;
  const auto gm = cmat(g.data(), rows, out_);
  Tensor<T> dw({in_, out_});
  mmat(dw.data(), in_, out_).noalias() = cmat(cache.input.data(), rows, in_).transpose() * gm;
  accumulate_grad(grads, this->param_name("weight"), std::move(dw));
  if (bias_) {
    Tensor<T> db({out_});
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < out_; ++j) db[j] += g[r * out_ + j];
    }
    accumulate_grad(grads, this->param_name("bias"), std::move(db));
  }
  Tensor<T> dx(cache.input_shape);
  mmat(dx.data(), rows, in_).noalias() = gm * cmat(params.param(this->param_name("weight")).data(), in_, out_).transpose();
  return dx;
}

// ---------------------------------------------------------------- BatchNorm

template <typename T>
struct NormCache : LayerCache<T> {
  Tensor<T> xhat;
  std::vector<T> inv_std;
};

template <typename T>
BatchNorm<T>::BatchNorm(std::string path, std::size_t channels, bool spatial, double epsilon, double momentum)
    : Layer<T>(std::move(path)), channels_(channels), spatial_(spatial), epsilon_(epsilon), momentum_(momentum) {
  if (!channels_) throw InvalidArgument("batchnorm '" + this->path() + "': zero channels");
}

template <typename T>
Shape BatchNorm<T>::infer_shape(const Shape& input) const {
  const std::size_t rank = spatial_ ? 4 : 2;
  if (input.size() != rank || input[1] != channels_) {
    Shape expected = spatial_ ? Shape{0, channels_, 0, 0} : Shape{0, channels_};
    throw ShapeError(this->path(), expected, input, spatial_ ? "expected [N, C, H, W]" : "expected [N, C]");
  }
  return input;
}

template <typename T>
std::vector<ParamDecl> BatchNorm<T>::param_decls() const {
  return {{this->param_name("gamma"), {channels_}, Init::ones, 0, true},
          {this->param_name("beta"), {channels_}, Init::zeros, 0, true},
          {this->param_name("running_mean"), {channels_}, Init::zeros, 0, false},
          {this->param_name("running_var"), {channels_}, Init::ones, 0, false}};
}

template <typename T>
ForwardResult<T> BatchNorm<T>::do_forward(const ParamSet<T>& params, const Tensor<T>& x, Mode mode,
                                          BufferUpdates<T>* updates) const {
  const std::size_t n = x.dim(0), c = channels_;
  const std::size_t s = spatial_ ? x.dim(2) * x.dim(3) : 1;
  const std::size_t m = n * s;
  const T* gamma = params.param(this->param_name("gamma")).data();
  const T* beta = params.param(this->param_name("beta")).data();

  auto cache = std::make_unique<NormCache<T>>();
  cache->xhat = Tensor<T>(x.shape());
  cache->inv_std.resize(c);
  Tensor<T> y(x.shape());

  std::vector<T> mean(c), var(c);
  if (mode == Mode::train) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double sum = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = x.data() + (b * c + ch) * s;
        for (std::size_t j = 0; j < s; ++j) sum += p[j];
      }
      const double mu = sum / static_cast<double>(m);
      double sq = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = x.data() + (b * c + ch) * s;
        for (std::size_t j = 0; j < s; ++j) {
          const double d = p[j] - mu;
          sq += d * d;
        }
      }
      mean[ch] = static_cast<T>(mu);
      var[ch] = static_cast<T>(sq / static_cast<double>(m));
    }
    if (updates) {
      const Tensor<T>& rm = params.buffer(this->param_name("running_mean"));
      const Tensor<T>& rv = params.buffer(this->param_name("running_var"));
      Tensor<T> new_mean(rm.shape()), new_var(rv.shape());
      const double unbias = m > 1 ? static_cast<double>(m) / static_cast<double>(m - 1) : 1.0;
      for (std::size_t ch = 0; ch < c; ++ch) {
        new_mean[ch] = static_cast<T>((1.0 - momentum_) * rm[ch] + momentum_ * mean[ch]);
        new_var[ch] = static_cast<T>((1.0 - momentum_) * rv[ch] + momentum_ * var[ch] * unbias);
      }
      (*updates)[this->param_name("running_mean")] = std::move(new_mean);
      (*updates)[this->param_name("running_var")] = std::move(new_var);
    }
  } else {
    const Tensor<T>& rm = params.buffer(this->param_name("running_mean"));
    const Tensor<T>& rv = params.buffer(this->param_name("running_var"));
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = rm[ch];
      var[ch] = rv[ch];
    }
  }

  for (std::size_t ch = 0; ch < c; ++ch) {
    const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(var[ch]) + epsilon_));
    cache->inv_std[ch] = inv;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * s;
      for (std::size_t j = 0; j < s; ++j) {
        const T xh = (x[off + j] - mean[ch]) * inv;
        cache->xhat[off + j] = xh;
        y[off + j] = gamma[ch] * xh + beta[ch];
      }
    }
  }
  return {std::move(y), std::move(cache)};
}

template <typename T>
Tensor<T> BatchNorm<T>::do_backward(const ParamSet<T>& params, const LayerCache<T>& base, const Tensor<T>& g,
                                    GradMap<T>& grads) const {
  const auto& cache = cache_as<T, NormCache<T>>(base);
  const std::size_t n = g.dim(0), c = channels_;
  const std::size_t s = spatial_ ? g.dim(2) * g.dim(3) : 1;
  const T m = static_cast<T>(n * s);
  const T* gamma = params.param(this->param_name("gamma")).data();

  Tensor<T> dgamma({c}), dbeta({c});
  Tensor<T> dx(g.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    T sum_g{0}, sum_gx{0};
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * s;
      for (std::size_t j = 0; j < s; ++j) {
        sum_g += g[off + j];
        sum_gx += g[off + j] * cache.xhat[off + j];
      }
    }
    dgamma[ch] = sum_gx;
    dbeta[ch] = sum_g;
    const T inv = cache.inv_std[ch];
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * s;
      for (std::size_t j = 0; j < s; ++j) {
        if (cache.mode == Mode::train) {
          dx[off + j] = gamma[ch] * inv * (g[off + j] - sum_g / m - cache.xhat[off + j] * sum_gx / m);
        } else {
          dx[off + j] = gamma[ch] * inv * g[off + j];
        }
      }
    }
  }
  accumulate_grad(grads, this->param_name("gamma"), std::move(dgamma));
  accumulate_grad(grads, this->param_name("beta"), std::move(dbeta));
  return dx;
}

// ---------------------------------------------------------------- LayerNorm

template <typename T>
LayerNorm<T>::LayerNorm(std::string path, std::size_t features, double epsilon)
    : Layer<T>(std::move(path)), features_(features), epsilon_(epsilon) {
  if (!features_) throw InvalidArgument("layernorm '" + this->path() + "': zero features");
}

template <typename T>
Shape LayerNorm<T>::infer_shape(const Shape& input) const {
  if (input.size() < 2 || input.back() != features_) {
    Shape expected = input.size() >= 2 ? input : Shape{0, features_};
    expected.back() = features_;
    throw ShapeError(this->path(), expected, input, "last axis must equal normalized features");
  }
  return input;
}

template <typename T>
std::vector<ParamDecl> LayerNorm<T>::param_decls() const {
  return {{this->param_name("gamma"), {features_}, Init::ones, 0, true},
          {this->param_name("beta"), {features_}, Init::zeros, 0, true}};
}

template <typename T>
ForwardResult<T> LayerNorm<T>::do_forward(const ParamSet<T>& params, const Tensor<T>& x, Mode,
                                          BufferUpdates<T>*) const {
  const std::size_t d = features_, rows = x.size() / d;
  const T* gamma = params.param(this->param_name("gamma")).data();
  const T* beta = params.param(this->param_name("beta")).data();
  auto cache = std::make_unique<NormCache<T>>();
  cache->xhat = Tensor<T>(x.shape());
  cache->inv_std.resize(rows);
  Tensor<T> y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* p = x.data() + r * d;
    double sum = 0.0;
    for (std::size_t j = 0; j < d; ++j) sum += p[j];
    const double mu = sum / static_cast<double>(d);
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += (p[j] - mu) * (p[j] - mu);
    const T inv = static_cast<T>(1.0 / std::sqrt(sq / static_cast<double>(d) + epsilon_));
    cache->inv_std[r] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      const T xh = (p[j] - static_cast<T>(mu)) * inv;
      cache->xhat[r * d + j] = xh;
      y[r * d + j] = gamma[j] * xh + beta[j];
    }
  }
  return {std::move(y), std::move(cache)};
}

template <typename T>
Tensor<T> LayerNorm<T>::do_backward(const ParamSet<T>& params, const LayerCache<T>& base, const Tensor<T>& g,
                                    GradMap<T>& grads) const {
  const auto& cache = cache_as<T, NormCache<T>>(base);
  const std::size_t d = features_, rows = g.size() / d;
  const T* gamma = params.param(this->param_name("gamma")).data();
  Tensor<T> dgamma({d}), dbeta({d});
  Tensor<T> dx(g.shape());
  std::vector<T> dxhat(d);
  for (std::size_t r = 0; r < rows; ++r) {
    T sum_d{0}, sum_dx{0};
    for (std::size_t j = 0; j < d; ++j) {
      const T gv = g[r * d + j];
      const T xh = cache.xhat[r * d + j];
      dgamma[j] += gv * xh;
      dbeta[j] += gv;
      dxhat[j] = gv * gamma[j];
      sum_d += dxhat[j];
      sum_dx += dxhat[j] * xh;
    }
    const T inv = cache.inv_std[r];
    const T dd = static_cast<T>(d);
    for (std::size_t j = 0; j < d; ++j) {
      dx[r * d + j] = inv * (dxhat[j] - sum_d / dd - cache.xhat[r * d + j] * sum_dx / dd);
    }
  }
  accumulate_grad(grads, this->param_name("gamma"), std::move(dgamma));
  accumulate_grad(grads, this->param_name("beta"), std::move(dbeta));
  return dx;
}

// ---------------------------------------------------------------- PatchEmbed

template <typename T>
struct PatchCache : LayerCache<T> {
  std::vector<T> patches;  // [N * P, C * p * p]
};

template <typename T>
PatchEmbed<T>::PatchEmbed(std::string path, std::size_t channels, std::size_t height, std::size_t width,
                          std::size_t patch, std::size_t dim)
    : Layer<T>(std::move(path)), channels_(channels), height_(height), width_(width), patch_(patch), dim_(dim) {
  if (!patch_ || !dim_ || !channels_ || height_ % patch_ != 0 || width_ % patch_ != 0 || height_ == 0 ||
      width_ == 0) {
    throw InvalidArgument("patchembed '" + this->path() + "': image size must be a positive multiple of the patch size");
  }
}

template <typename T>
Shape PatchEmbed<T>::infer_shape(const Shape& input) const {
  if (input.size() != 4 || input[1] != channels_ || input[2] != height_ || input[3] != width_) {
    throw ShapeError(this->path(), {input.empty() ? 0 : input[0], channels_, height_, width_}, input);
  }
  return {input[0], tokens(), dim_};
}

template <typename T>
std::vector<ParamDecl> PatchEmbed<T>::param_decls() const {
  const std::size_t pdim = channels_ * patch_ * patch_;
  return {{this->param_name("weight"), {pdim, dim_}, Init::kaiming_uniform, pdim, true},
          {this->param_name("bias"), {dim_}, Init::zeros, 0, true},
          {this->param_name("cls"), {dim_}, Init::normal_small, 0, true},
          {this->param_name("pos"), {tokens(), dim_}, Init::normal_small, 0, true}};
}

template <typename T>
ForwardResult<T> PatchEmbed<T>::do_forward(const ParamSet<T>& params, const Tensor<T>& x, Mode,
                                           BufferUpdates<T>*) const {
  const std::size_t n = x.dim(0), p = patch_, gh = height_ / p, gw = width_ / p, np = gh * gw;
  const std::size_t pdim = channels_ * p * p, t = np + 1;
  auto cache = std::make_unique<PatchCache<T>>();
  cache->patches.resize(n * np * pdim);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t py = 0; py < gh; ++py) {
      for (std::size_t px = 0; px < gw; ++px) {
        T* dst = cache->patches.data() + ((b * np) + py * gw + px) * pdim;
        for (std::size_t c = 0; c < channels_; ++c) {
          for (std::size_t i = 0; i < p; ++i) {
            const T* src = x.data() + ((b * channels_ + c) * height_ + py * p + i) * width_ + px * p;
            std::copy(src, src + p, dst + (c * p + i) * p);
          }
        }
      }
    }
  }
  std::vector<T> proj(n * np * dim_);
  mmat(proj.data(), n * np, dim_).noalias() =
      cmat(cache->patches.data(), n * np, pdim) * cmat(params.param(this->param_name("weight")).data(), pdim, dim_);

  const T* bias = params.param(this->param_name("bias")).data();
  const T* cls = params.param(this->param_name("cls")).data();
  const T* pos = params.param(this->param_name("pos")).data();
  Tensor<T> y({n, t, dim_});
  for (std::size_t b = 0; b < n; ++b) {
    T* out = y.data() + b * t * dim_;
    for (std::size_t j = 0; j < dim_; ++j) out[j] = cls[j] + pos[j];
    for (std::size_t k = 0; k < np; ++k) {
      const T* src = proj.data() + (b * np + k) * dim_;
      T* dst = out + (k + 1) * dim_;
      const T* pk = pos + (k + 1) * dim_;
      for (std::size_t j = 0; j < dim_; ++j) dst[j] = src[j] + bias[j] + pk[j];
    }
  }
  return {std::move(y), std::move(cache)};
}

template <typename T>
Tensor<T> PatchEmbed<T>::do_backward(const ParamSet<T>& params, const LayerCache<T>& base, const Tensor<T>& g,
                                     GradMap<T>& grads) const {
  const auto& cache = cache_as<T, PatchCache<T>>(base);
  const std::size_t n = g.dim(0), p = patch_, gh = height_ / p, gw = width_ / p, np = gh * gw;
  const std::size_t pdim = channels_ * p * p, t = np + 1;

  Tensor<T> dcls({dim_}), dpos({t, dim_}), dbias({dim_});
  std::vector<T> gproj(n * np * dim_);
  for (std::size_t b = 0; b < n; ++b) {
    const T* gb = g.data() + b * t * dim_;
    for (std::size_t j = 0; j < dim_; ++j) dcls[j] += gb[j];
    for (std::size_t k = 0; k < t; ++k) {
      for (std::size_t j = 0; j < dim_; ++j) dpos[k * dim_ + j] += gb[k * dim_ + j];
    }
    for (std::size_t k = 0; k < np; ++k) {
      const T* src = gb + (k + 1) * dim_;
      std::copy(src, src + dim_, gproj.data() + (b * np + k) * dim_);
      for (std::size_t j = 0; j < dim_; ++j) dbias[j] += src[j];
    }
  }
  const auto gm = cmat(gproj.data(), n * np, dim_);
  Tensor<T> dw({pdim, dim_});
  mmat(dw.data(), pdim, dim_).noalias() = cmat(cache.patches.data(), n * np, pdim).transpose() * gm;
  std::vector<T> dpatches(n * np * pdim);
  mmat(dpatches.data(), n * np, pdim).noalias() =
      gm * cmat(params.param(this->param_name("weight")).data(), pdim, dim_).transpose();

  Tensor<T> dx(cache.input_shape);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t py = 0; py < gh; ++py) {
      for (std::size_t px = 0; px < gw; ++px) {
        const T* src = dpatches.data() + ((b * np) + py * gw + px) * pdim;
        for (std::size_t c = 0; c < channels_; ++c) {
          for (std::size_t i = 0; i < p; ++i) {
            T* dst = dx.data() + ((b * channels_ + c) * height_ + py * p + i) * width_ + px * p;
            std::copy(src + (c * p + i) * p, src + (c * p + i + 1) * p, dst);
          }
        }
      }
    }
  }
  accumulate_grad(grads, this->param_name("weight"), std::move(dw));
  accumulate_grad(grads, this->param_name("bias"), std::move(dbias));
  accumulate_grad(grads, this->param_name("cls"), std::move(dcls));
  accumulate_grad(grads, this->param_name("pos"), std::move(dpos));
  return dx;
}

// ---------------------------------------------------------------- MultiHeadAttention

template <typename T>
struct AttentionCache : LayerCache<T> {
  Tensor<T> input;
  std::vector<T> q, k, v;  // [N*T, D]
  std::vector<T> attn;     // [N, H, T, T]
  std::vector<T> merged;   // [N*T, D]
};

template <typename T>
MultiHeadAttention<T>::MultiHeadAttention(std::string path, std::size_t dim, std::size_t heads)
    : Layer<T>(std::move(path)), dim_(dim), heads_(heads) {
  if (!dim_ || !heads_ || dim_ % heads_ != 0) {
    throw InvalidArgument("multiheadattention '" + this->path() + "': width must be divisible by head count");
  }
}

template <typename T>
Shape MultiHeadAttention<T>::infer_shape(const Shape& input) const {
  if (input.size() != 3 || input[2] != dim_) {
    throw ShapeError(this->path(), {input.empty() ? 0 : input[0], input.size() > 1 ? input[1] : 0, dim_}, input,
                     "expected [N, T, D]");
  }
  return input;
}

template <typename T>
std::vector<ParamDecl> MultiHeadAttention<T>::param_decls() const {
  std::vector<ParamDecl> d;
  // No key bias: it shifts every score of a query equally and cancels in the softmax.
  for (const char* w : {"wq", "wk", "wv", "wo"}) {
    d.push_back({this->param_name(w), {dim_, dim_}, Init::kaiming_uniform, dim_, true});
    if (std::string_view(w) != "wk") d.push_back({this->param_name(std::string("b") + (w + 1)), {dim_}, Init::zeros, 0, true});
  }
  return d;
}

template <typename T>
ForwardResult<T> MultiHeadAttention<T>::do_forward(const ParamSet<T>& params, const Tensor<T>& x, Mode,
                                                   BufferUpdates<T>*) const {
  const std::size_t n = x.dim(0), t = x.dim(1), d = dim_, h = heads_, dk = d / h, rows = n * t;
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk)));
  auto cache = std::make_unique<AttentionCache<T>>();
  cache->input = x;
  const auto xm = cmat(x.data(), rows, d);

  auto project = [&](std::vector<T>& dst, const char* w, const char* b) {
    dst.resize(rows * d);
    mmat(dst.data(), rows, d).noalias() = xm * cmat(params.param(this->param_name(w)).data(), d, d);
    if (!b) return;
    const T* bias = params.param(this->param_name(b)).data();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < d; ++j) dst[r * d + j] += bias[j];
    }
  };
  project(cache->q, "wq", "bq");
  project(cache->k, "wk", nullptr);
  project(cache->v, "wv", "bv");

  cache->attn.resize(n * h * t * t);
  cache->merged.assign(rows * d, T{0});
  for (std::size_t b = 0; b < n; ++b) {
    const T* qb = cache->q.data() + b * t * d;
    const T* kb = cache->k.data() + b * t * d;
    const T* vb = cache->v.data() + b * t * d;
    T* ob = cache->merged.data() + b * t * d;
    for (std::size_t hh = 0; hh < h; ++hh) {
      T* a = cache->attn.data() + (b * h + hh) * t * t;
      auto am = mmat(a, t, t);
      am.noalias() = cblock(qb, t, dk, hh * dk, d) * cblock(kb, t, dk, hh * dk, d).transpose();
      for (std::size_t i = 0; i < t; ++i) {
        T* row = a + i * t;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < t; ++j) {
          row[j] *= scale;
          mx = std::max(mx, row[j]);
        }
        T sum{0};
        for (std::size_t j = 0; j < t; ++j) {
          row[j] = std::exp(row[j] - mx);
          sum += row[j];
        }
        for (std::size_t j = 0; j < t; ++j) row[j] /= sum;
      }
      mblock(ob, t, dk, hh * dk, d).noalias() = cmat(a, t, t) * cblock(vb, t, dk, hh * dk, d);
    }
  }

  Tensor<T> y(x.shape());
  mmat(y.data(), rows, d).noalias() =
      cmat(cache->merged.data(), rows, d) * cmat(params.param(this->param_name("wo")).data(), d, d);
  const T* bo = params.param(this->param_name("bo")).data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < d; ++j) y[r * d + j] += bo[j];
  }
  return {std::move(y), std::move(cache)};
}

template <typename T>
Tensor<T> MultiHeadAttention<T>::do_backward(const ParamSet<T>& params, const LayerCache<T>& base, const Tensor<T>& g,
                                             GradMap<T>& grads) const {
  const auto& cache = cache_as<T, AttentionCache<T>>(base);
  const std::size_t n = g.dim(0), t = g.dim(1), d = dim_, h = heads_, dk = d / h, rows = n * t;
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk)));
  const auto gm = cmat(g.data(), rows, d);

  auto bias_grad = [&](const std::vector<T>& src) {
    Tensor<T> db({d});
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < d; ++j) db[j] += src[r * d + j];
    }
    return db;
  };

  Tensor<T> dwo({d, d});
  mmat(dwo.data(), d, d).noalias() = cmat(cache.merged.data(), rows, d).transpose() * gm;
  accumulate_grad(grads, this->param_name("wo"), std::move(dwo));
  accumulate_grad(grads, this->param_name("bo"), bias_grad(g.vec()));

  std::vector<T> dmerged(rows * d);
  mmat(dmerged.data(), rows, d).noalias() = gm * cmat(params.param(this->param_name("wo")).data(), d, d).transpose();

  std::vector<T> dq(rows * d, T{0}), dk_(rows * d, T{0}), dv(rows * d, T{0});
  std::vector<T> da(t * t);
  for (std::size_t b = 0; b < n; ++b) {
    const std::size_t off = b * t * d;
    for (std::size_t hh = 0; hh < h; ++hh) {
      const T* a = cache.attn.data() + (b * h + hh) * t * t;
      const auto dob = cblock(dmerged.data() + off, t, dk, hh * dk, d);
      // dA = dO_h V_h^T, dV_h = A^T dO_h
      mmat(da.data(), t, t).noalias() = dob * cblock(cache.v.data() + off, t, dk, hh * dk, d).transpose();
      mblock(dv.data() + off, t, dk, hh * dk, d).noalias() = cmat(a, t, t).transpose() * dob;
      // softmax backward, then the 1/sqrt(dk) scale
      for (std::size_t i = 0; i < t; ++i) {
        T dot{0};
        for (std::size_t j = 0; j < t; ++j) dot += da[i * t + j] * a[i * t + j];
        for (std::size_t j = 0; j < t; ++j) da[i * t + j] = a[i * t + j] * (da[i * t + j] - dot) * scale;
      }
      const auto ds = cmat(da.data(), t, t);
      mblock(dq.data() + off, t, dk, hh * dk, d).noalias() = ds * cblock(cache.k.data() + off, t, dk, hh * dk, d);
      mblock(dk_.data() + off, t, dk, hh * dk, d).noalias() =
          ds.transpose() * cblock(cache.q.data() + off, t, dk, hh * dk, d);
    }
  }

  const auto xm = cmat(cache.input.data(), rows, d);
  Tensor<T> dx(cache.input_shape);
  auto dxm = mmat(dx.data(), rows, d);
  auto input_grad = [&](const std::vector<T>& dp, const char* w, const char* bname) {
    const auto dpm = cmat(dp.data(), rows, d);
    Tensor<T> dw({d, d});
    mmat(dw.data(), d, d).noalias() = xm.transpose() * dpm;
    accumulate_grad(grads, this->param_name(w), std::move(dw));
    if (bname) accumulate_grad(grads, this->param_name(bname), bias_grad(dp));
    dxm.noalias() += dpm * cmat(params.param(this->param_name(w)).data(), d, d).transpose();
  };
  input_grad(dq, "wq", "bq");
  input_grad(dk_, "wk", nullptr);
  input_grad(dv, "wv", "bv");
  return dx;
}

// ---------------------------------------------------------------- Flatten / ClsToken

template <typename T>
Shape Flatten<T>::infer_shape(const Shape& input) const {
  if (input.size() < 2) throw ShapeError(this->path(), {0, 0}, input, "expected rank >= 2");
  return {input[0], shape_numel(input) / input[0]};
}

template <typename T>
ForwardResult<T> Flatten<T>::do_forward(const ParamSet<T>&, const Tensor<T>& x, Mode, BufferUpdates<T>*) const {
  return with_empty_cache(x.reshaped(infer_shape(x.shape())));
}

template <typename T>
Tensor<T> Flatten<T>::do_backward(const ParamSet<T>&, const LayerCache<T>& base, const Tensor<T>& g, GradMap<T>&) const {
  return g.reshaped(base.input_shape);
}

template <typename T>
Shape ClsToken<T>::infer_shape(const Shape& input) const {
  if (input.size() != 3) throw ShapeError(this->path(), {0, 0, 0}, input, "expected [N, T, D]");
  return {input[0], input[2]};
}

template <typename T>
ForwardResult<T> ClsToken<T>::do_forward(const ParamSet<T>&, const Tensor<T>& x, Mode, BufferUpdates<T>*) const {
  const std::size_t n = x.dim(0), t = x.dim(1), d = x.dim(2);
  Tensor<T> y({n, d});
  for (std::size_t b = 0; b < n; ++b) std::copy(x.data() + b * t * d, x.data() + b * t * d + d, y.data() + b * d);
  return with_empty_cache(std::move(y));
}

template <typename T>
Tensor<T> ClsToken<T>::do_backward(const ParamSet<T>&, const LayerCache<T>& base, const Tensor<T>& g, GradMap<T>&) const {
  Tensor<T> dx(base.input_shape);
  const std::size_t n = dx.dim(0), t = dx.dim(1), d = dx.dim(2);
  for (std::size_t b = 0; b < n; ++b) std::copy(g.data() + b * d, g.data() + (b + 1) * d, dx.data() + b * t * d);
  return dx;
}

// ---------------------------------------------------------------- Sequential

template <typename T>
struct SequentialCache : LayerCache<T> {
  std::vector<std::unique_ptr<LayerCache<T>>> children;
};

template <typename T>
Shape Sequential<T>::infer_shape(const Shape& input) const {
  Shape s = input;
  for (const auto& l : layers_) s = l->infer_shape(s);
  return s;
}

template <typename T>
std::vector<ParamDecl> Sequential<T>::param_decls() const {
  std::vector<ParamDecl> all;
  for (const auto& l : layers_) {
    auto d = l->param_decls();
    all.insert(all.end(), std::make_move_iterator(d.begin()), std::make_move_iterator(d.end()));
  }
  return all;
}

template <typename T>
std::vector<std::string> Sequential<T>::layer_paths() const {
  std::vector<std::string> out;
  for (const auto& l : layers_) out.push_back(l->path());
  return out;
}

template <typename T>
std::size_t Sequential<T>::index_of(const std::string& path) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i]->path() == path) return i;
  }
  std::string avail;
  for (const auto& p : layer_paths()) avail += (avail.empty() ? "" : ", ") + p;
  throw KeyError(path, "unknown layer path; available: " + avail);
}

template <typename T>
ForwardResult<T> Sequential<T>::forward_prefix(const ParamSet<T>& params, const Tensor<T>& input, std::size_t count,
                                               Mode mode, BufferUpdates<T>* updates) const {
  if (count > layers_.size()) throw InvalidArgument("forward_prefix beyond network length");
  auto cache = std::make_unique<SequentialCache<T>>();
  Tensor<T> x = input;
  for (std::size_t i = 0; i < count; ++i) {
    auto r = layers_[i]->forward(params, x, mode, updates);
    x = std::move(r.output);
    cache->children.push_back(std::move(r.cache));
  }
  return {std::move(x), std::move(cache)};
}

template <typename T>
ForwardResult<T> Sequential<T>::do_forward(const ParamSet<T>& params, const Tensor<T>& x, Mode mode,
                                           BufferUpdates<T>* updates) const {
  return forward_prefix(params, x, layers_.size(), mode, updates);
}

template <typename T>
Tensor<T> Sequential<T>::do_backward(const ParamSet<T>& params, const LayerCache<T>& base, const Tensor<T>& g,
                                     GradMap<T>& grads) const {
  const auto& cache = cache_as<T, SequentialCache<T>>(base);
  Tensor<T> grad = g;
  for (std::size_t i = cache.children.size(); i-- > 0;) {
    grad = layers_[i]->backward(params, *cache.children[i], grad, grads);
  }
  return grad;
}

// ---------------------------------------------------------------- Residual

template <typename T>
struct ResidualCache : LayerCache<T> {
  std::unique_ptr<LayerCache<T>> inner;
};

template <typename T>
Residual<T>::Residual(std::string path, std::unique_ptr<Sequential<T>> inner)
    : Layer<T>(std::move(path)), inner_(std::move(inner)) {}

template <typename T>
Shape Residual<T>::infer_shape(const Shape& input) const {
  Shape out = inner_->infer_shape(input);
  if (out != input) throw ShapeError(this->path(), input, out, "residual branch must preserve shape");
  return out;
}

template <typename T>
ForwardResult<T> Residual<T>::do_forward(const ParamSet<T>& params, const Tensor<T>& x, Mode mode,
                                         BufferUpdates<T>* updates) const {
  auto r = inner_->forward(params, x, mode, updates);
  r.output += x;
  auto cache = std::make_unique<ResidualCache<T>>();
  cache->inner = std::move(r.cache);
  return {std::move(r.output), std::move(cache)};
}

template <typename T>
Tensor<T> Residual<T>::do_backward(const ParamSet<T>& params, const LayerCache<T>& base, const Tensor<T>& g,
                                   GradMap<T>& grads) const {
  const auto& cache = cache_as<T, ResidualCache<T>>(base);
  Tensor<T> dx = inner_->backward(params, *cache.inner, g, grads);
  dx += g;
  return dx;
}

#define BIOV_INSTANTIATE(L) \
  template class L<float>;  \
  template class L<double>;
BIOV_INSTANTIATE(Conv2d)
BIOV_INSTANTIATE(ReLU)
BIOV_INSTANTIATE(MaxPool2d)
BIOV_INSTANTIATE(GlobalAvgPool)
BIOV_INSTANTIATE(Dense)
BIOV_INSTANTIATE(BatchNorm)
BIOV_INSTANTIATE(LayerNorm)
BIOV_INSTANTIATE(PatchEmbed)
BIOV_INSTANTIATE(MultiHeadAttention)
BIOV_INSTANTIATE(Flatten)
BIOV_INSTANTIATE(ClsToken)
BIOV_INSTANTIATE(Sequential)
BIOV_INSTANTIATE(Residual)
#undef BIOV_INSTANTIATE

}  // namespace biov
