#include "biov/datapairs/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "biov/core/rng.hpp"

namespace biov {

AugmentParams sample_augment(std::uint64_t seed) {
  Rng rng(seed);
  AugmentParams p;
  p.brightness = rng.uniform(0.9, 1.1);
  p.contrast = rng.uniform(0.9, 1.1);
  p.angle_deg = rng.uniform(-10.0, 10.0);
  return p;
}

GrayImage rotate_image(const GrayImage& image, double angle_deg) {
  if (angle_deg == 0.0) return image;
  const double a = angle_deg * std::numbers::pi / 180.0;
  const double c = std::cos(a), s = std::sin(a);
  const double cx = (static_cast<double>(image.width) - 1.0) / 2.0;
  const double cy = (static_cast<double>(image.height) - 1.0) / 2.0;
  const double max_x = static_cast<double>(image.width - 1);
  const double max_y = static_cast<double>(image.height - 1);
  GrayImage out(image.width, image.height);
  for (std::size_t i = 0; i < image.height; ++i) {
    for (std::size_t j = 0; j < image.width; ++j) {
      // Inverse map: rotate the output coordinate back into the source.
      const double dx = static_cast<double>(j) - cx, dy = static_cast<double>(i) - cy;
      const double sx = std::clamp(c * dx + s * dy + cx, 0.0, max_x);
      const double sy = std::clamp(-s * dx + c * dy + cy, 0.0, max_y);
      const auto x0 = static_cast<std::size_t>(std::floor(sx));
      const auto y0 = static_cast<std::size_t>(std::floor(sy));
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const std::size_t y1 = std::min(y0 + 1, image.height - 1);
      const double fx = sx - static_cast<double>(x0), fy = sy - static_cast<double>(y0);
      const double top = (1 - fx) * image.at(y0, x0) + fx * image.at(y0, x1);
      const double bottom = (1 - fx) * image.at(y1, x0) + fx * image.at(y1, x1);
      out.at(i, j) = static_cast<float>((1 - fy) * top + fy * bottom);
    }
  }
  return out;
}

Tensor<float> standardize(const GrayImage& image) {
  const std::size_t n = image.pixels.size();
  double mean = 0.0;
  for (float v : image.pixels) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (float v : image.pixels) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  const double inv = 1.0 / std::max(std::sqrt(var), kStdGuard);
  Tensor<float> out({1, image.height, image.width});
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>((image.pixels[i] - mean) * inv);
  return out;
}

Tensor<float> augment_with(const GrayImage& image, const AugmentParams& p) {
  GrayImage jittered = image;
  double mean = 0.0;
  for (float v : image.pixels) mean += v;
  mean /= static_cast<double>(image.pixels.size());
  for (auto& v : jittered.pixels) {
    const double b = v * p.brightness;
    const double m = mean * p.brightness;
    v = static_cast<float>(std::clamp((b - m) * p.contrast + m, 0.0, 1.0));
  }
  return standardize(rotate_image(jittered, p.angle_deg));
}

Tensor<float> augment(const GrayImage& image, std::uint64_t seed) { return augment_with(image, sample_augment(seed)); }

}  // namespace biov
