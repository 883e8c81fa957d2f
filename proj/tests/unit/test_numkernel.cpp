#include <doctest.h>

#include <cmath>

#include "../support/layer_zoo.hpp"
#include "biov/numkernel/gradcheck.hpp"
#include "biov/numkernel/layers.hpp"

using namespace biov;
using biov::testing::make_zoo_case;
using biov::testing::random_tensor;
using biov::testing::zoo_kinds;

TEST_CASE("relu forward and backward on the definition cases") {
  ReLU<float> relu("relu");
  ParamSet<float> none;
  Tensor<float> x({1, 3}, {-1.0f, 0.0f, 2.5f});
  auto r = relu.forward(none, x, Mode::train);
  CHECK(r.output.vec() == std::vector<float>{0.0f, 0.0f, 2.5f});

  Tensor<float> x2({1, 2}, {-1.0f, 2.0f});
  auto r2 = relu.forward(none, x2, Mode::train);
  GradMap<float> grads;
  auto gi = relu.backward(none, *r2.cache, Tensor<float>({1, 2}, {5.0f, 7.0f}), grads);
  CHECK(gi.vec() == std::vector<float>{0.0f, 7.0f});
  CHECK(grads.empty());
}

TEST_CASE("1x1 identity convolution returns its input") {
  Conv2d<float> conv("conv", 1, 1, 1);
  auto params = init_params<float>(conv.param_decls(), 1);
  params.param("conv.weight").fill(1.0f);
  params.param("conv.bias").fill(0.0f);
  Rng rng(3);
  Tensor<float> x({2, 1, 5, 7});
  for (auto& v : x.values()) v = static_cast<float>(rng.uniform(-2, 2));
  CHECK(conv.infer(params, x) == x);
}

TEST_CASE("batchnorm2d train mode standardizes each channel") {
  BatchNorm<double> bn("bn", 3, true);
  auto params = init_params<double>(bn.param_decls(), 1);
  Rng rng(11);
  Tensor<double> x({4, 3, 5, 5});
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t ch = (i / 25) % 3;
    x[i] = 3.0 * ch - 1.0 + (1.0 + ch) * rng.normal();
  }
  auto y = bn.forward(params, x, Mode::train).output;
  for (std::size_t ch = 0; ch < 3; ++ch) {
    double s = 0, sq = 0;
    for (std::size_t b = 0; b < 4; ++b) {
      for (std::size_t j = 0; j < 25; ++j) s += y[(b * 3 + ch) * 25 + j];
    }
    const double mean = s / 100.0;
    for (std::size_t b = 0; b < 4; ++b) {
      for (std::size_t j = 0; j < 25; ++j) sq += std::pow(y[(b * 3 + ch) * 25 + j] - mean, 2);
    }
    CHECK(std::abs(mean) < 1e-5);
    CHECK(std::abs(sq / 100.0 - 1.0) < 1e-4);
  }
}

TEST_CASE("batchnorm train mode proposes momentum updates; eval mode uses running stats") {
  BatchNorm<double> bn("bn", 1, false);
  auto params = init_params<double>(bn.param_decls(), 1);
  Tensor<double> x({4, 1}, {1.0, 2.0, 3.0, 6.0});
  BufferUpdates<double> updates;
  bn.forward(params, x, Mode::train, &updates);
  // batch mean 3, biased var 3.5, unbiased 14/3
  CHECK(updates.at("bn.running_mean")[0] == doctest::Approx(0.3));
  CHECK(updates.at("bn.running_var")[0] == doctest::Approx(0.9 + 0.1 * 14.0 / 3.0));
  CHECK(params.buffer("bn.running_mean")[0] == 0.0);

  auto y = bn.forward(params, x, Mode::eval).output;
  CHECK(y[3] == doctest::Approx(6.0 / std::sqrt(1.0 + 1e-5)));
}

TEST_CASE("dense backward equals grad_output times W transpose (hand multiplication)") {
  Dense<double> fc("fc", 2, 3, false);
  ParamSet<double> params;
  params.params.emplace("fc.weight", Tensor<double>({2, 3}, {1, 2, 3, 4, 5, 6}));
  Tensor<double> x({1, 2}, {0.25, -0.5});
  auto r = fc.forward(params, x, Mode::train);
  CHECK(r.output.vec() == std::vector<double>{0.25 - 2.0, 0.5 - 2.5, 0.75 - 3.0});
  GradMap<double> grads;
  auto gi = fc.backward(params, *r.cache, Tensor<double>({1, 3}, {0.5, -1.0, 2.0}), grads);
  // [0.5, -1, 2] . [[1, 4], [2, 5], [3, 6]] = [0.5 - 2 + 6, 2 - 5 + 12]
  CHECK(gi.vec() == std::vector<double>{4.5, 9.0});
  // dW = x^T g
  CHECK(grads.at("fc.weight").vec() == std::vector<double>{0.125, -0.25, 0.5, -0.25, 0.5, -1.0});
}

TEST_CASE("conv2d backward on 1x1x4x4 with 3x3 kernel matches central differences") {
  Conv2d<double> conv("conv", 1, 1, 3);
  auto params = init_params<double>(conv.param_decls(), 5);
  Rng rng(21);
  auto x = random_tensor({1, 1, 4, 4}, rng);
  ScalarLoss sum_loss = [](const Tensor<double>& out, Tensor<double>* grad) {
    double s = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      s += out[i];
      if (grad) (*grad)[i] = 1.0;
    }
    return s;
  };
  auto report = check_gradients(conv, params, x, sum_loss);
  CHECK(report.max_rel_error < 1e-6);
  CHECK(report.coordinates_checked == 9 + 1 + 16);
}

TEST_CASE("single dense layer under quadratic loss passes the gradient check") {
  Dense<double> fc("fc", 4, 3);
  auto params = init_params<double>(fc.param_decls(), 9);
  params.param("fc.bias").fill(0.1);
  Rng rng(2);
  auto report = check_gradients(fc, params, random_tensor({3, 4}, rng), quadratic_loss());
  CHECK(report.max_rel_error < 1e-7);
}

TEST_CASE("every layer kind matches finite differences over five seeds") {
  for (LayerKind kind : zoo_kinds()) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      auto c = make_zoo_case(kind, seed);
      auto report = check_gradients(*c.layer, c.params, c.input, weighted_sum_loss(seed));
      INFO(c.label << " worst " << report.worst_coordinate);
      CHECK(report.max_rel_error < 1e-4);
    }
  }
}

TEST_CASE("batch-norm and layer-norm eval-mode gradients match finite differences") {
  for (LayerKind kind : {LayerKind::batchnorm1d, LayerKind::batchnorm2d}) {
    auto c = make_zoo_case(kind, 7);
    GradCheckOptions opts;
    opts.mode = Mode::eval;
    auto report = check_gradients(*c.layer, c.params, c.input, weighted_sum_loss(7), opts);
    INFO(c.label);
    CHECK(report.max_rel_error < 1e-4);
  }
}

TEST_CASE("shape inference agrees with execution over randomized hyperparameters") {
  for (LayerKind kind : zoo_kinds()) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      auto c = make_zoo_case(kind, seed);
      const Shape inferred = c.layer->infer_shape(c.input.shape());
      CHECK(c.layer->forward(c.params, c.input, Mode::train).output.shape() == inferred);
    }
  }
}

TEST_CASE("eval-mode forward is pure") {
  for (LayerKind kind : zoo_kinds()) {
    auto c = make_zoo_case(kind, 3);
    const auto snapshot = c.params;
    auto a = c.layer->forward(c.params, c.input, Mode::eval).output;
    auto b = c.layer->forward(c.params, c.input, Mode::eval).output;
    CHECK(a == b);
    CHECK(c.params == snapshot);
  }
}

TEST_CASE("batch-norm eval output matches train output once running stats are frozen from the batch") {
  BatchNorm<float> bn("bn", 2, true);
  auto params = init_params<float>(bn.param_decls(), 1);
  params.param("bn.gamma")[1] = 1.7f;
  params.param("bn.beta")[0] = -0.4f;
  Rng rng(8);
  Tensor<float> x({16, 2, 16, 16});
  for (auto& v : x.values()) v = static_cast<float>(2.0 + 3.0 * rng.normal());
  for (int i = 0; i < 300; ++i) {
    BufferUpdates<float> updates;
    bn.forward(params, x, Mode::train, &updates);
    apply_buffer_updates(params, std::move(updates));
  }
  auto train_out = bn.forward(params, x, Mode::train).output;
  auto eval_out = bn.forward(params, x, Mode::eval).output;
  CHECK(max_abs_diff(train_out, eval_out) < 1e-3f);
}

TEST_CASE("shape mismatch names the layer and both shapes") {
  Conv2d<float> conv("backbone.block1.conv", 1, 16, 3, 1, 1);
  auto params = init_params<float>(conv.param_decls(), 1);
  Tensor<float> bad({2, 3, 8, 8});
  try {
    conv.forward(params, bad, Mode::eval);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(e.layer() == "backbone.block1.conv");
    CHECK(e.actual() == Shape{2, 3, 8, 8});
    CHECK(std::string(e.what()).find("[2, 3, 8, 8]") != std::string::npos);
  }
}

TEST_CASE("non-finite forward output raises a numerical error naming the layer") {
  Dense<float> fc("head.dense", 2, 2);
  auto params = init_params<float>(fc.param_decls(), 1);
  params.param("head.dense.weight")[0] = std::numeric_limits<float>::infinity();
  Tensor<float> x({1, 2}, {1.0f, 1.0f});
  CHECK_THROWS_AS(fc.forward(params, x, Mode::eval), NumericalError);
  try {
    fc.forward(params, x, Mode::eval);
  } catch (const NumericalError& e) {
    CHECK(e.where() == "head.dense");
  }
}

TEST_CASE("backward rejects mismatched caches and gradient shapes") {
  Dense<float> a("a", 2, 2), b("b", 2, 2);
  auto params = init_params<float>(a.param_decls(), 1);
  auto pb = init_params<float>(b.param_decls(), 1);
  for (auto& [k, v] : pb.params) params.params.emplace(k, v);
  Tensor<float> x({1, 2}, {1.0f, 2.0f});
  auto r = a.forward(params, x, Mode::train);
  GradMap<float> grads;
  CHECK_THROWS_AS(b.backward(params, *r.cache, Tensor<float>({1, 2}), grads), InvalidArgument);
  CHECK_THROWS_AS(a.backward(params, *r.cache, Tensor<float>({1, 3}), grads), ShapeError);
}

TEST_CASE("gradient key set equals the trainable parameter set") {
  for (LayerKind kind : zoo_kinds()) {
    auto c = make_zoo_case(kind, 2);
    auto r = c.layer->forward(c.params, c.input, Mode::train);
    GradMap<double> grads;
    c.layer->backward(c.params, *r.cache, Tensor<double>(r.output.shape(), 1.0), grads);
    std::vector<std::string> gk, pk;
    for (const auto& [k, _] : grads) gk.push_back(k);
    for (const auto& [k, _] : c.params.params) pk.push_back(k);
    CHECK(gk == pk);
  }
}
