#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "biov/biencoder/biencoder.hpp"
#include "biov/core/pgm.hpp"
#include "biov/numkernel/layers.hpp"

namespace biov {

struct DreamConfig {
  std::string layer = "backbone.block1.conv";  // direct child path in the tower
  std::optional<std::size_t> channel;          // unset: mean over all channels
  int steps = 200;
  double step_size = 0.05;
  bool smoothing = true;
  double blur_sigma = 0.5;
  int blur_every = 10;
  std::uint64_t seed = 0;
  Tower tower = Tower::A;
};

struct DreamResult {
  GrayImage image;
  /// trace[k] = objective after k updates, so trace.front() is the noise
  /// image and trace.back() the returned image.
  std::vector<double> trace;
  bool stalled = false;  // stopped early on a vanishing gradient
};

/// Mean activation of `channel` (or of everything) in the layer output.
/// Channels are axis 1 for [N, C, H, W] and [N, C], the last axis for tokens
/// [N, T, D].
double dream_objective(const Tensor<float>& activation, std::optional<std::size_t> channel);

/// Gradient ascent on the input of `net` (eval mode) toward a larger
/// objective at child `cfg.layer`. The image starts as uniform noise in
/// [0.4, 0.6]; each step moves it by step_size times the RMS-normalized
/// gradient and clamps to [0, 1]; with smoothing on it is blurred every
/// blur_every steps. Throws KeyError listing the available layer paths.
DreamResult dream(const Sequential<float>& net, const ParamSet<float>& params, std::size_t image_size,
                  const DreamConfig& cfg);
DreamResult dream(const BiEncoderModel<float>& model, const DreamConfig& cfg);

/// Objective of one image through a fresh forward pass.
double dream_objective_of(const Sequential<float>& net, const ParamSet<float>& params, const GrayImage& image,
                          const DreamConfig& cfg);

GrayImage gaussian_blur(const GrayImage& image, double sigma);

/// CSV with header step,objective.
std::string trace_to_csv(const std::vector<double>& trace);

}  // namespace biov
