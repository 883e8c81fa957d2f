#include <doctest.h>

#include <algorithm>
#include <string>

#include "biov/core/errors.hpp"
#include "biov/dreamviz/dream.hpp"

using namespace biov;

namespace {

// Flattened image -> dense probe with 3 outputs; linear in the pixels.
struct LinearProbe {
  Sequential<float> net{"probe"};
  ParamSet<float> params;
  explicit LinearProbe(std::size_t size, std::uint64_t seed) {
    net.emplace<Flatten<float>>("flat");
    net.emplace<Dense<float>>("dense", size * size, 3, true);
    params = init_params<float>(net.param_decls(), seed);
  }
};

DreamConfig linear_cfg(int steps) {
  DreamConfig c;
  c.layer = "dense";
  c.channel = 1;
  c.steps = steps;
  c.smoothing = false;
  c.seed = 4;
  return c;
}

}  // namespace

TEST_CASE("linear target without smoothing: ascent is monotone and saturates along the weight signs") {
  LinearProbe p(8, 1);
  const auto res = dream(p.net, p.params, 8, linear_cfg(1000));
  REQUIRE(res.trace.size() == 1001);
  CHECK(!res.stalled);
  for (std::size_t k = 1; k < res.trace.size(); ++k) CHECK(res.trace[k] >= res.trace[k - 1]);
  for (std::size_t k = 1; k < 5; ++k) CHECK(res.trace[k] > res.trace[k - 1]);
  // after enough steps every pixel sits at the bound its weight points to
  const auto& w = p.params.param("dense.weight");
  for (std::size_t i = 0; i < 64; ++i) {
    const float wi = w[i * 3 + 1];  // weight is [in, out]
    if (wi > 0) CHECK(res.image.pixels[i] == 1.0f);
    if (wi < 0) CHECK(res.image.pixels[i] == 0.0f);
  }
}

TEST_CASE("trace entries equal fresh forward passes; runs are bit-identical") {
  const auto model = BiEncoderModel<float>::initialized(ModelConfig{BackboneKind::smallcnn, EncoderMode::shared, 16, "", ""}, 2);
  DreamConfig cfg;
  cfg.layer = "backbone.block2.conv";
  cfg.channel = 3;
  cfg.steps = 25;
  cfg.seed = 9;
  const auto full = dream(model, cfg);
  CHECK(full.image == dream(model, cfg).image);
  CHECK(full.trace == dream(model, cfg).trace);
  CHECK(dream_objective_of(model.tower(Tower::A), model.params(), full.image, cfg) == full.trace.back());
  for (int k : {1, 9, 10, 11}) {
    auto c = cfg;
    c.steps = k;
    const auto part = dream(model, c);
    CHECK(part.trace.back() == full.trace[k]);
    CHECK(dream_objective_of(model.tower(Tower::A), model.params(), part.image, cfg) == full.trace[k]);
  }
}

TEST_CASE("pixels stay in [0, 1] and every conv layer's objective rises") {
  for (auto kind : {BackboneKind::smallcnn, BackboneKind::tinyvit}) {
    const auto model = BiEncoderModel<float>::initialized(ModelConfig{kind, EncoderMode::shared, 16, "", ""}, 3);
    for (const auto& path : model.tower(Tower::A).layer_paths()) {
      if (path.find("conv") == std::string::npos && path.find("patch") == std::string::npos) continue;
      DreamConfig cfg;
      cfg.layer = path;
      cfg.steps = 40;
      const auto res = dream(model, cfg);
      CHECK_MESSAGE(res.trace.back() > res.trace.front(), path);
      CHECK(std::all_of(res.image.pixels.begin(), res.image.pixels.end(), [](float v) { return v >= 0 && v <= 1; }));
    }
  }
}

TEST_CASE("dream errors: unknown layer lists paths, bad channel, bad steps") {
  const auto model = BiEncoderModel<float>::initialized(ModelConfig{BackboneKind::smallcnn, EncoderMode::shared, 16, "", ""}, 3);
  DreamConfig cfg;
  cfg.layer = "backbone.block9.conv";
  try {
    dream(model, cfg);
    FAIL("unknown layer accepted");
  } catch (const KeyError& e) {
    CHECK(std::string(e.what()).find("backbone.block2.conv") != std::string::npos);
  }
  cfg.layer = "backbone.block1.conv";
  cfg.channel = 16;
  CHECK_THROWS_AS(dream(model, cfg), InvalidArgument);
  cfg.channel.reset();
  cfg.steps = 0;
  CHECK_THROWS_AS(dream(model, cfg), InvalidArgument);
}

TEST_CASE("vanishing gradient stalls with an early return") {
  LinearProbe p(8, 1);
  for (auto& v : p.params.params.at("dense.weight").values()) v = 0.0f;
  const auto res = dream(p.net, p.params, 8, linear_cfg(50));
  CHECK(res.stalled);
  CHECK(res.trace.size() == 1);
}

TEST_CASE("gaussian blur: constants preserved, impulse response matches the kernel") {
  GrayImage flat(5, 5, 0.3f);
  const auto b = gaussian_blur(flat, 0.5);
  for (float v : b.pixels) CHECK(v == doctest::Approx(0.3f).epsilon(1e-6));

  GrayImage impulse(7, 7);
  impulse.at(3, 3) = 1.0f;
  const auto r = gaussian_blur(impulse, 0.5);
  const double g1 = std::exp(-2.0), g2 = std::exp(-8.0);  // exp(-x^2 / (2 sigma^2))
  const double z = 1 + 2 * g1 + 2 * g2;
  CHECK(r.at(3, 3) == doctest::Approx(1 / (z * z)).epsilon(1e-6));
  CHECK(r.at(3, 4) == doctest::Approx(g1 / (z * z)).epsilon(1e-6));
  CHECK(r.at(2, 4) == doctest::Approx(g1 * g1 / (z * z)).epsilon(1e-6));
  double sum = 0;
  for (float v : r.pixels) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("trace CSV") {
  CHECK(trace_to_csv({0.5, 0.25}) == "step,objective\n0,0.5\n1,0.25\n");
}
