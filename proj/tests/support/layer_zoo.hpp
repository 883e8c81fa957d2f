#pragma once

// Randomized single-layer fixtures, one per layer kind, for gradient and
// shape-inference checks.

#include <memory>
#include <string>
#include <vector>

#include "biov/core/rng.hpp"
#include "biov/numkernel/layers.hpp"

namespace biov::testing {

struct ZooCase {
  std::string label;
  std::unique_ptr<Layer<double>> layer;
  Tensor<double> input;
  ParamSet<double> params;
};

inline Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

inline const std::vector<LayerKind>& zoo_kinds() {
  static const std::vector<LayerKind> kinds{
      LayerKind::conv2d,     LayerKind::relu,       LayerKind::maxpool2d,          LayerKind::globalavgpool,
      LayerKind::dense,      LayerKind::batchnorm1d, LayerKind::batchnorm2d,       LayerKind::layernorm,
      LayerKind::patchembed, LayerKind::multiheadattention, LayerKind::residualadd, LayerKind::flatten,
      LayerKind::clstoken};
  return kinds;
}

/// Random hyperparameters and input for `kind`, deterministic in `seed`.
inline ZooCase make_zoo_case(LayerKind kind, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(kind)}));
  auto pick = [&](std::size_t lo, std::size_t hi) { return lo + rng.index(hi - lo + 1); };
  ZooCase c;
  c.label = std::string(to_string(kind)) + "/seed" + std::to_string(seed);
  const std::size_t n = pick(2, 3);
  switch (kind) {
    case LayerKind::conv2d: {
      const std::size_t cin = pick(1, 3), cout = pick(1, 4), k = pick(1, 3), s = pick(1, 2), p = pick(0, 1);
      const std::size_t h = pick(k + 1, 6), w = pick(k + 1, 6);
      c.layer = std::make_unique<Conv2d<double>>("conv", cin, cout, k, s, p, rng.index(2) == 0);
      c.input = random_tensor({n, cin, h, w}, rng);
      break;
    }
    case LayerKind::relu:
      c.layer = std::make_unique<ReLU<double>>("relu");
      c.input = random_tensor({n, pick(2, 5), pick(2, 4)}, rng);
      break;
    case LayerKind::maxpool2d: {
      const std::size_t k = pick(2, 3);
      c.layer = std::make_unique<MaxPool2d<double>>("pool", k, pick(1, k));
      c.input = random_tensor({n, pick(1, 3), pick(k, 7), pick(k, 7)}, rng);
      break;
    }
    case LayerKind::globalavgpool:
      c.layer = std::make_unique<GlobalAvgPool<double>>("gap");
      c.input = random_tensor({n, pick(1, 4), pick(1, 5), pick(1, 5)}, rng);
      break;
    case LayerKind::dense: {
      const std::size_t in = pick(1, 6), out = pick(1, 6);
      c.layer = std::make_unique<Dense<double>>("fc", in, out, rng.index(2) == 0);
      c.input = rng.index(2) ? random_tensor({n, in}, rng) : random_tensor({n, pick(2, 3), in}, rng);
      break;
    }
    case LayerKind::batchnorm1d: {
      const std::size_t f = pick(1, 5);
      c.layer = std::make_unique<BatchNorm<double>>("bn", f, false);
      c.input = random_tensor({pick(3, 6), f}, rng);
      break;
    }
    case LayerKind::batchnorm2d: {
      const std::size_t ch = pick(1, 4);
      c.layer = std::make_unique<BatchNorm<double>>("bn", ch, true);
      c.input = random_tensor({n, ch, pick(2, 4), pick(2, 4)}, rng);
      break;
    }
    case LayerKind::layernorm: {
      const std::size_t f = pick(2, 6);
      c.layer = std::make_unique<LayerNorm<double>>("ln", f);
      c.input = random_tensor({n, pick(1, 3), f}, rng);
      break;
    }
    case LayerKind::patchembed: {
      const std::size_t ch = pick(1, 2), p = pick(1, 3), gh = pick(1, 2), gw = pick(1, 2), d = pick(2, 5);
      c.layer = std::make_unique<PatchEmbed<double>>("patch", ch, gh * p, gw * p, p, d);
      c.input = random_tensor({n, ch, gh * p, gw * p}, rng);
      break;
    }
    case LayerKind::multiheadattention: {
      const std::size_t heads = pick(1, 3), dk = pick(1, 3);
      c.layer = std::make_unique<MultiHeadAttention<double>>("attn", heads * dk, heads);
      c.input = random_tensor({n, pick(2, 4), heads * dk}, rng);
      break;
    }
    case LayerKind::residualadd: {
      const std::size_t d = pick(2, 5);
      auto inner = std::make_unique<Sequential<double>>("res.inner");
      inner->emplace<LayerNorm<double>>("res.ln", d);
      inner->emplace<Dense<double>>("res.fc", d, d);
      c.layer = std::make_unique<Residual<double>>("res", std::move(inner));
      c.input = random_tensor({n, pick(1, 3), d}, rng);
      break;
    }
    case LayerKind::flatten:
      c.layer = std::make_unique<Flatten<double>>("flat");
      c.input = random_tensor({n, pick(1, 3), pick(1, 3), pick(1, 3)}, rng);
      break;
    case LayerKind::clstoken:
      c.layer = std::make_unique<ClsToken<double>>("cls");
      c.input = random_tensor({n, pick(1, 4), pick(1, 4)}, rng);
      break;
    case LayerKind::sequential: break;
  }
  c.params = init_params<double>(c.layer->param_decls(), seed);
  // Non-trivial affine / bias values so every parameter path is exercised.
  for (auto& [name, t] : c.params.params) {
    for (auto& v : t.values()) v += rng.uniform(-0.3, 0.3);
  }
  for (auto& [name, t] : c.params.buffers) {
    for (auto& v : t.values()) v = name.ends_with("running_var") ? rng.uniform(0.5, 1.5) : rng.uniform(-0.5, 0.5);
  }
  return c;
}

}  // namespace biov::testing
