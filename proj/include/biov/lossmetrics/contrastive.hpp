#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "biov/numkernel/tensor.hpp"

namespace biov {

/// standard: y = 1 (same subject) takes the attract term d^2.
/// swapped: y = 1 takes the margin term.
enum class LabelConvention { standard, swapped };

std::string_view to_string(LabelConvention c);
LabelConvention parse_label_convention(std::string_view s);

struct ContrastiveLossCfg {
  double margin = 1.0;
  LabelConvention convention = LabelConvention::standard;
};

template <typename T>
struct PairLoss {
  double loss = 0.0;
  double distance = 0.0;
  std::vector<T> grad_e1;
  std::vector<T> grad_e2;
};

/// Euclidean distance, accumulated in double.
template <typename T>
double euclidean_distance(std::span<const T> e1, std::span<const T> e2);

/// L = s*d^2 + (1-s)*max(0, m-d)^2 with s the effective "attract" label.
/// The margin term has zero gradient at d = m and at d = 0.
template <typename T>
PairLoss<T> contrastive_loss(std::span<const T> e1, std::span<const T> e2, int y, const ContrastiveLossCfg& cfg);

template <typename T>
struct BatchLoss {
  double mean_loss = 0.0;
  std::vector<double> distances;
  Tensor<T> grad_a;  // d(mean loss)/d(embeddings a), [N, D]
  Tensor<T> grad_b;
};

/// Mean of per-pair losses over rows of [N, D] embedding matrices.
template <typename T>
BatchLoss<T> contrastive_batch_loss(const Tensor<T>& a, const Tensor<T>& b, const std::vector<int>& labels,
                                    const ContrastiveLossCfg& cfg);

}  // namespace biov
