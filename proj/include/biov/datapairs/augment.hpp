#pragma once

#include <cstdint>

#include "biov/core/pgm.hpp"
#include "biov/numkernel/tensor.hpp"

namespace biov {

inline constexpr double kStdGuard = 1e-6;

struct AugmentParams {
  double brightness = 1.0;  // multiplicative, [0.9, 1.1]
  double contrast = 1.0;    // scales deviation from the image mean, [0.9, 1.1]
  double angle_deg = 0.0;   // [-10, 10]
};

AugmentParams sample_augment(std::uint64_t seed);

/// Bilinear rotation about the image centre; samples outside the image take
/// the nearest edge pixel.
GrayImage rotate_image(const GrayImage& image, double angle_deg);

/// Per-image standardization to mean 0 / std 1, as a [1, H, W] tensor.
/// A constant image maps to zeros.
Tensor<float> standardize(const GrayImage& image);

/// Jitter (clamped to [0, 1]), rotation, then standardization.
Tensor<float> augment_with(const GrayImage& image, const AugmentParams& params);
Tensor<float> augment(const GrayImage& image, std::uint64_t seed);

}  // namespace biov
