#include "biov/dreamviz/dream.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>

#include "biov/core/errors.hpp"
#include "biov/core/rng.hpp"

namespace biov {

namespace {

constexpr double kStallNorm = 1e-12;

struct ChannelLayout {
  std::size_t channels = 0;
  std::size_t outer = 0;   // leading blocks
  std::size_t inner = 0;   // contiguous run per channel within a block
};

ChannelLayout layout_of(const Shape& s) {
  if (s.size() == 4) return {s[1], s[0], s[2] * s[3]};
  if (s.size() == 2) return {s[1], s[0], 1};
  if (s.size() == 3) return {s[2], s[0] * s[1], 1};
  throw ShapeError("dream objective", {0, 0}, s);
}

// Visits the flat indices that make up the objective.
template <typename F>
void for_selected(const Shape& shape, std::optional<std::size_t> channel, F&& f) {
  const auto l = layout_of(shape);
  if (channel && *channel >= l.channels) {
    throw InvalidArgument("channel " + std::to_string(*channel) + " out of range, layer has " +
                          std::to_string(l.channels));
  }
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t c = 0; c < l.channels; ++c) {
      if (channel && c != *channel) continue;
      for (std::size_t i = 0; i < l.inner; ++i) f((o * l.channels + c) * l.inner + i);
    }
  }
}

std::size_t selected_count(const Shape& shape, std::optional<std::size_t> channel) {
  const auto l = layout_of(shape);
  return l.outer * l.inner * (channel ? 1 : l.channels);
}

Tensor<float> to_input(const GrayImage& img) {
  return Tensor<float>({1, 1, img.height, img.width}, std::vector<float>(img.pixels.begin(), img.pixels.end()));
}

}  // namespace

double dream_objective(const Tensor<float>& activation, std::optional<std::size_t> channel) {
  double sum = 0.0;
  for_selected(activation.shape(), channel, [&](std::size_t i) { sum += activation[i]; });
  return sum / static_cast<double>(selected_count(activation.shape(), channel));
}

GrayImage gaussian_blur(const GrayImage& image, double sigma) {
  if (!(sigma > 0.0)) return image;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) total += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= total;

  const auto H = static_cast<int>(image.height), W = static_cast<int>(image.width);
  auto clampi = [](int v, int hi) { return std::clamp(v, 0, hi - 1); };
  std::vector<double> tmp(image.pixels.size());
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) s += k[i + radius] * image.pixels[r * W + clampi(c + i, W)];
      tmp[r * W + c] = s;
    }
  }
  GrayImage out = image;
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) s += k[i + radius] * tmp[clampi(r + i, H) * W + c];
      out.pixels[r * W + c] = static_cast<float>(s);
    }
  }
  return out;
}

double dream_objective_of(const Sequential<float>& net, const ParamSet<float>& params, const GrayImage& image,
                          const DreamConfig& cfg) {
  const std::size_t target = net.index_of(cfg.layer);
  Tensor<float> x = to_input(image);
  for (std::size_t i = 0; i <= target; ++i) x = net.at(i).infer(params, x);
  return dream_objective(x, cfg.channel);
}

DreamResult dream(const Sequential<float>& net, const ParamSet<float>& params, std::size_t image_size,
                  const DreamConfig& cfg) {
  if (cfg.steps < 1) throw InvalidArgument("dream needs at least one step");
  if (!(cfg.step_size > 0.0)) throw InvalidArgument("dream step size must be positive");
  if (cfg.smoothing && cfg.blur_every < 1) throw InvalidArgument("blur interval must be >= 1");
  const std::size_t target = net.index_of(cfg.layer);

  DreamResult res;
  res.image.width = res.image.height = image_size;
  res.image.pixels.resize(image_size * image_size);
  Rng rng(derive_seed(cfg.seed, {0xD4EA}));
  for (auto& p : res.image.pixels) p = static_cast<float>(rng.uniform(0.4, 0.6));

  std::vector<std::unique_ptr<LayerCache<float>>> caches(target + 1);
  for (int step = 0;; ++step) {
    Tensor<float> x = to_input(res.image);
    for (std::size_t i = 0; i <= target; ++i) {
      auto fr = net.at(i).forward(params, x, Mode::eval);
      caches[i] = std::move(fr.cache);
      x = std::move(fr.output);
    }
    res.trace.push_back(dream_objective(x, cfg.channel));
    if (step == cfg.steps) break;

    Tensor<float> g(x.shape());
    const float w = 1.0f / static_cast<float>(selected_count(x.shape(), cfg.channel));
    for_selected(x.shape(), cfg.channel, [&](std::size_t i) { g[i] = w; });
    GradMap<float> unused;
    for (std::size_t i = target + 1; i-- > 0;) g = net.at(i).backward(params, *caches[i], g, unused);

    double sq = 0.0;
    for (float v : g.values()) sq += static_cast<double>(v) * v;
    if (std::sqrt(sq) < kStallNorm) {
      std::cerr << "warning: dream gradient vanished at step " << step << " (layer " << cfg.layer << ")\n";
      res.stalled = true;
      break;
    }
    const double rms = std::sqrt(sq / static_cast<double>(g.size()));
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = res.image.pixels[i] + cfg.step_size * g[i] / rms;
      res.image.pixels[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
    if (cfg.smoothing && (step + 1) % cfg.blur_every == 0) {
      res.image = gaussian_blur(res.image, cfg.blur_sigma);
      for (auto& p : res.image.pixels) p = std::clamp(p, 0.0f, 1.0f);
    }
  }
  return res;
}

DreamResult dream(const BiEncoderModel<float>& model, const DreamConfig& cfg) {
  return dream(model.tower(cfg.tower), model.params(), model.config().image_size, cfg);
}

std::string trace_to_csv(const std::vector<double>& trace) {
  std::ostringstream out;
  out << "step,objective\n";
  char buf[64];
  for (std::size_t k = 0; k < trace.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", k, trace[k]);
    out << buf;
  }
  return out.str();
}

}  // namespace biov
