#include "biov/lossmetrics/contrastive.hpp"

#include <cmath>
#include <string>

#include "biov/core/errors.hpp"

namespace biov {

std::string_view to_string(LabelConvention c) {
  return c == LabelConvention::standard ? "standard" : "swapped";
}

LabelConvention parse_label_convention(std::string_view s) {
  if (s == "standard") return LabelConvention::standard;
  if (s == "swapped") return LabelConvention::swapped;
  throw InvalidArgument("unknown label convention '" + std::string(s) + "' (expected standard or swapped)");
}

template <typename T>
double euclidean_distance(std::span<const T> e1, std::span<const T> e2) {
  if (e1.size() != e2.size()) throw ShapeError("euclidean_distance", {e1.size()}, {e2.size()});
  double ss = 0.0;
  for (std::size_t i = 0; i < e1.size(); ++i) {
    const double d = static_cast<double>(e1[i]) - static_cast<double>(e2[i]);
    ss += d * d;
  }
  return std::sqrt(ss);
}

template <typename T>
PairLoss<T> contrastive_loss(std::span<const T> e1, std::span<const T> e2, int y, const ContrastiveLossCfg& cfg) {
  if (e1.size() != e2.size()) throw ShapeError("contrastive_loss", {e1.size()}, {e2.size()});
  if (y != 0 && y != 1) throw InvalidArgument("contrastive_loss: label must be 0 or 1");
  if (!(cfg.margin > 0.0) || !std::isfinite(cfg.margin)) throw InvalidArgument("contrastive_loss: margin must be > 0");
  const int attract = cfg.convention == LabelConvention::standard ? y : 1 - y;

  PairLoss<T> out;
  out.grad_e1.assign(e1.size(), T{0});
  out.grad_e2.assign(e1.size(), T{0});
  std::vector<double> diff(e1.size());
  double ss = 0.0;
  for (std::size_t i = 0; i < e1.size(); ++i) {
    if (!std::isfinite(static_cast<double>(e1[i])) || !std::isfinite(static_cast<double>(e2[i]))) {
      throw NumericalError("contrastive_loss", "non-finite embedding at index " + std::to_string(i));
    }
    diff[i] = static_cast<double>(e1[i]) - static_cast<double>(e2[i]);
    ss += diff[i] * diff[i];
  }
  const double d = std::sqrt(ss);
  out.distance = d;

  double coef = 0.0;  // gradient wrt e1 is coef * diff
  if (attract == 1) {
    out.loss = ss;
    coef = 2.0;
  } else {
    const double gap = cfg.margin - d;
    if (gap > 0.0) {
      out.loss = gap * gap;
      if (d > 0.0) coef = -2.0 * gap / d;
    }
  }
  for (std::size_t i = 0; i < e1.size(); ++i) {
    out.grad_e1[i] = static_cast<T>(coef * diff[i]);
    out.grad_e2[i] = static_cast<T>(-coef * diff[i]);
  }
  return out;
}

template <typename T>
BatchLoss<T> contrastive_batch_loss(const Tensor<T>& a, const Tensor<T>& b, const std::vector<int>& labels,
                                    const ContrastiveLossCfg& cfg) {
  if (a.rank() != 2 || a.shape() != b.shape()) throw ShapeError("contrastive_batch_loss", a.shape(), b.shape());
  const std::size_t n = a.dim(0), dim = a.dim(1);
  if (labels.size() != n) throw ShapeError("contrastive_batch_loss", {n}, {labels.size()}, "label count");
  BatchLoss<T> out;
  out.grad_a = Tensor<T>(a.shape());
  out.grad_b = Tensor<T>(b.shape());
  out.distances.resize(n);
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const std::span<const T> ra(a.data() + r * dim, dim), rb(b.data() + r * dim, dim);
    const auto pl = contrastive_loss(ra, rb, labels[r], cfg);
    total += pl.loss;
    out.distances[r] = pl.distance;
    for (std::size_t k = 0; k < dim; ++k) {
      out.grad_a[r * dim + k] = static_cast<T>(pl.grad_e1[k] * inv_n);
      out.grad_b[r * dim + k] = static_cast<T>(pl.grad_e2[k] * inv_n);
    }
  }
  out.mean_loss = total * inv_n;
  return out;
}

template double euclidean_distance<float>(std::span<const float>, std::span<const float>);
template double euclidean_distance<double>(std::span<const double>, std::span<const double>);
template PairLoss<float> contrastive_loss<float>(std::span<const float>, std::span<const float>, int,
                                                 const ContrastiveLossCfg&);
template PairLoss<double> contrastive_loss<double>(std::span<const double>, std::span<const double>, int,
                                                   const ContrastiveLossCfg&);
template BatchLoss<float> contrastive_batch_loss<float>(const Tensor<float>&, const Tensor<float>&,
                                                        const std::vector<int>&, const ContrastiveLossCfg&);
template BatchLoss<double> contrastive_batch_loss<double>(const Tensor<double>&, const Tensor<double>&,
                                                          const std::vector<int>&, const ContrastiveLossCfg&);

}  // namespace biov
