#include "biov/biencoder/biencoder.hpp"

#include "biov/core/errors.hpp"

namespace biov {

std::string_view to_string(BackboneKind k) { return k == BackboneKind::smallcnn ? "smallcnn" : "tinyvit"; }
std::string_view to_string(EncoderMode m) { return m == EncoderMode::shared ? "shared" : "two-tower"; }

BackboneKind parse_backbone(std::string_view s) {
  if (s == "smallcnn") return BackboneKind::smallcnn;
  if (s == "tinyvit") return BackboneKind::tinyvit;
  throw InvalidArgument("unknown backbone '" + std::string(s) + "' (expected smallcnn or tinyvit)");
}

EncoderMode parse_encoder_mode(std::string_view s) {
  if (s == "shared") return EncoderMode::shared;
  if (s == "two-tower") return EncoderMode::two_tower;
  throw InvalidArgument("unknown encoder mode '" + std::string(s) + "'");
}

std::string tower_prefix(EncoderMode mode, Tower t) {
  if (mode == EncoderMode::shared) return "";
  return t == Tower::A ? "iris_tower." : "fp_tower.";
}

namespace {

constexpr std::size_t kPatch = 8;
constexpr std::size_t kHeads = 4;
constexpr std::size_t kMlpHidden = 128;

template <typename T>
void add_head(Sequential<T>& seq, const std::string& p) {
  // No dense bias: the batch norm right after it would cancel it.
  seq.template emplace<Dense<T>>(p + "head.dense", kFeatureDim, kEmbeddingDim, false);
  seq.template emplace<BatchNorm<T>>(p + "head.bn", kEmbeddingDim, false);
}

template <typename T>
void add_smallcnn(Sequential<T>& seq, const std::string& p) {
  const std::size_t channels[4] = {1, 16, 32, 64};
  for (int b = 1; b <= 3; ++b) {
    const std::string blk = p + "backbone.block" + std::to_string(b) + ".";
    seq.template emplace<Conv2d<T>>(blk + "conv", channels[b - 1], channels[b], 3, 1, 1, false);
    seq.template emplace<BatchNorm<T>>(blk + "bn", channels[b], true);
    seq.template emplace<ReLU<T>>(blk + "relu");
    seq.template emplace<MaxPool2d<T>>(blk + "pool", 2);
  }
  seq.template emplace<GlobalAvgPool<T>>(p + "backbone.gap");
}

template <typename T>
void add_tinyvit(Sequential<T>& seq, const std::string& p, std::size_t image_size) {
  const std::size_t d = kFeatureDim;
  seq.template emplace<PatchEmbed<T>>(p + "backbone.patch", 1, image_size, image_size, kPatch, d);
  for (int b = 1; b <= 2; ++b) {
    const std::string blk = p + "backbone.block" + std::to_string(b) + ".";
    auto attn = std::make_unique<Sequential<T>>(blk + "attn.body");
    attn->template emplace<LayerNorm<T>>(blk + "attn.ln", d);
    attn->template emplace<MultiHeadAttention<T>>(blk + "attn.mha", d, kHeads);
    seq.template emplace<Residual<T>>(blk + "attn", std::move(attn));
    auto mlp = std::make_unique<Sequential<T>>(blk + "mlp.body");
    mlp->template emplace<LayerNorm<T>>(blk + "mlp.ln", d);
    mlp->template emplace<Dense<T>>(blk + "mlp.fc1", d, kMlpHidden);
    mlp->template emplace<ReLU<T>>(blk + "mlp.relu");
    mlp->template emplace<Dense<T>>(blk + "mlp.fc2", kMlpHidden, d);
    seq.template emplace<Residual<T>>(blk + "mlp", std::move(mlp));
  }
  seq.template emplace<LayerNorm<T>>(p + "backbone.norm", d);
  seq.template emplace<ClsToken<T>>(p + "backbone.cls");
}

}  // namespace

template <typename T>
std::unique_ptr<Sequential<T>> build_backbone(BackboneKind kind, const std::string& prefix, std::size_t image_size) {
  if (image_size < 8 || image_size % 8 != 0) {
    throw InvalidArgument("image size must be a positive multiple of 8, got " + std::to_string(image_size));
  }
  auto seq = std::make_unique<Sequential<T>>(prefix.empty() ? "encoder" : prefix.substr(0, prefix.size() - 1));
  if (kind == BackboneKind::smallcnn) {
    add_smallcnn(*seq, prefix);
  } else {
    add_tinyvit(*seq, prefix, image_size);
  }
  return seq;
}

template <typename T>
std::unique_ptr<Sequential<T>> build_tower(BackboneKind kind, const std::string& prefix, std::size_t image_size) {
  auto seq = build_backbone<T>(kind, prefix, image_size);
  add_head(*seq, prefix);
  return seq;
}

template <typename T>
BiEncoderModel<T>::BiEncoderModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
  a_ = build_tower<T>(cfg_.backbone, tower_prefix(cfg_.mode, Tower::A), cfg_.image_size);
  if (cfg_.mode == EncoderMode::two_tower) b_ = build_tower<T>(cfg_.backbone, tower_prefix(cfg_.mode, Tower::B), cfg_.image_size);
}

template <typename T>
BiEncoderModel<T> BiEncoderModel<T>::initialized(ModelConfig cfg, std::uint64_t seed) {
  BiEncoderModel m(std::move(cfg));
  m.params_ = init_params<T>(m.param_decls(), seed);
  return m;
}

template <typename T>
BiEncoderModel<T> BiEncoderModel<T>::clone() const {
  BiEncoderModel m(cfg_);
  m.params_ = params_;
  return m;
}

template <typename T>
const Sequential<T>& BiEncoderModel<T>::tower(Tower t) const {
  return (t == Tower::B && b_) ? *b_ : *a_;
}

template <typename T>
std::vector<ParamDecl> BiEncoderModel<T>::param_decls() const {
  auto decls = a_->param_decls();
  if (b_) {
    auto more = b_->param_decls();
    decls.insert(decls.end(), more.begin(), more.end());
  }
  return decls;
}

template <typename T>
ForwardResult<T> BiEncoderModel<T>::embed(const Tensor<T>& images, Tower t, Mode mode,
                                          BufferUpdates<T>* updates) const {
  return tower(t).forward(params_, images, mode, updates);
}

template <typename T>
PairStep<T> pair_step(const BiEncoderModel<T>& model, const Tensor<T>& a, const Tensor<T>& b,
                      const std::vector<int>& labels, const ContrastiveLossCfg& loss_cfg, Mode mode) {
  if (a.shape() != b.shape()) throw ShapeError("pair_step", a.shape(), b.shape(), "A and B image batches differ");
  const std::size_t n = a.dim(0);
  PairStep<T> out;
  BufferUpdates<T>* upd = mode == Mode::train ? &out.updates : nullptr;
  if (model.config().mode == EncoderMode::shared) {
    const Tensor<T> both = concat_rows(a, b);
    auto fwd = model.embed(both, Tower::A, mode, upd);
    const Tensor<T> ea = slice_rows(fwd.output, 0, n), eb = slice_rows(fwd.output, n, 2 * n);
    const auto loss = contrastive_batch_loss(ea, eb, labels, loss_cfg);
    out.loss = loss.mean_loss;
    out.distances = loss.distances;
    model.tower(Tower::A).backward(model.params(), *fwd.cache, concat_rows(loss.grad_a, loss.grad_b), out.grads);
  } else {
    auto fa = model.embed(a, Tower::A, mode, upd);
    auto fb = model.embed(b, Tower::B, mode, upd);
    const auto loss = contrastive_batch_loss(fa.output, fb.output, labels, loss_cfg);
    out.loss = loss.mean_loss;
    out.distances = loss.distances;
    model.tower(Tower::A).backward(model.params(), *fa.cache, loss.grad_a, out.grads);
    model.tower(Tower::B).backward(model.params(), *fb.cache, loss.grad_b, out.grads);
  }
  if (!std::isfinite(out.loss)) throw NumericalError("pair_step", "non-finite loss");
  return out;
}

template std::unique_ptr<Sequential<float>> build_backbone<float>(BackboneKind, const std::string&, std::size_t);
template std::unique_ptr<Sequential<double>> build_backbone<double>(BackboneKind, const std::string&, std::size_t);
template std::unique_ptr<Sequential<float>> build_tower<float>(BackboneKind, const std::string&, std::size_t);
template std::unique_ptr<Sequential<double>> build_tower<double>(BackboneKind, const std::string&, std::size_t);
template class BiEncoderModel<float>;
template class BiEncoderModel<double>;
template PairStep<float> pair_step<float>(const BiEncoderModel<float>&, const Tensor<float>&, const Tensor<float>&,
                                          const std::vector<int>&, const ContrastiveLossCfg&, Mode);
template PairStep<double> pair_step<double>(const BiEncoderModel<double>&, const Tensor<double>&,
                                            const Tensor<double>&, const std::vector<int>&,
                                            const ContrastiveLossCfg&, Mode);

}  // namespace biov
