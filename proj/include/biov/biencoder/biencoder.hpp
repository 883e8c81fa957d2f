#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "biov/lossmetrics/contrastive.hpp"
#include "biov/numkernel/layers.hpp"

namespace biov {

inline constexpr std::size_t kFeatureDim = 64;     // backbone output z
inline constexpr std::size_t kEmbeddingDim = 128;  // projection head output g(z)

enum class BackboneKind { smallcnn, tinyvit };
enum class EncoderMode { shared, two_tower };
enum class Tower { A, B };  // two-tower: A = iris tower, B = fingerprint tower

std::string_view to_string(BackboneKind k);
std::string_view to_string(EncoderMode m);
BackboneKind parse_backbone(std::string_view s);
EncoderMode parse_encoder_mode(std::string_view s);

struct ModelConfig {
  BackboneKind backbone = BackboneKind::smallcnn;
  EncoderMode mode = EncoderMode::shared;
  std::size_t image_size = 64;
  std::string task;         // informational, recorded in checkpoints
  std::string config_hash;  // hash of the training configuration

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Parameter-name prefix of a tower: "" when shared, otherwise
/// "iris_tower." (A) or "fp_tower." (B).
std::string tower_prefix(EncoderMode mode, Tower t);

/// One encoder as a flat layer sequence, so every block is addressable by
/// path (e.g. "backbone.block2.conv"):
///   smallcnn: 3 x [conv 3x3 -> batchnorm2d -> relu -> maxpool 2x2] with
///             16/32/64 channels, global average pool;
///   tinyvit:  8x8 patch embedding (width 64), 2 pre-norm blocks of
///             [attention (4 heads)] and [mlp 64-128-64], final layernorm,
///             class token;
/// then the projection head dense 64->128 and batchnorm1d.
template <typename T>
std::unique_ptr<Sequential<T>> build_tower(BackboneKind kind, const std::string& prefix, std::size_t image_size);
/// The same sequence without the projection head; outputs [N, 64].
template <typename T>
std::unique_ptr<Sequential<T>> build_backbone(BackboneKind kind, const std::string& prefix, std::size_t image_size);

template <typename T>
class BiEncoderModel {
 public:
  /// Layers only; parameters start empty.
  explicit BiEncoderModel(ModelConfig cfg);
  /// Layers plus freshly initialized parameters.
  static BiEncoderModel initialized(ModelConfig cfg, std::uint64_t seed);

  BiEncoderModel(BiEncoderModel&&) noexcept = default;
  BiEncoderModel& operator=(BiEncoderModel&&) noexcept = default;

  BiEncoderModel clone() const;

  const ModelConfig& config() const noexcept { return cfg_; }
  ModelConfig& config() noexcept { return cfg_; }
  ParamSet<T>& params() noexcept { return params_; }
  const ParamSet<T>& params() const noexcept { return params_; }

  /// In shared mode both towers are the same network object.
  const Sequential<T>& tower(Tower t) const;
  std::vector<ParamDecl> param_decls() const;
  Shape input_shape(std::size_t batch) const { return {batch, 1, cfg_.image_size, cfg_.image_size}; }

  /// images [N, 1, S, S] -> embeddings [N, 128].
  ForwardResult<T> embed(const Tensor<T>& images, Tower t, Mode mode, BufferUpdates<T>* updates = nullptr) const;
  Tensor<T> embed(const Tensor<T>& images, Tower t) const { return embed(images, t, Mode::eval).output; }

 private:
  ModelConfig cfg_;
  std::unique_ptr<Sequential<T>> a_;
  std::unique_ptr<Sequential<T>> b_;  // null in shared mode
  ParamSet<T> params_;
};

template <typename T>
struct PairStep {
  double loss = 0.0;
  std::vector<double> distances;
  GradMap<T> grads;
  BufferUpdates<T> updates;
};

/// Mean contrastive loss of a pair batch and its parameter gradients. In
/// shared mode the A and B images go through the one network as a single
/// batch of 2N (one set of batch statistics, one gradient path).
template <typename T>
PairStep<T> pair_step(const BiEncoderModel<T>& model, const Tensor<T>& a, const Tensor<T>& b,
                      const std::vector<int>& labels, const ContrastiveLossCfg& loss_cfg, Mode mode = Mode::train);

}  // namespace biov
