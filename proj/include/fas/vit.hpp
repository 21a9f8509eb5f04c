#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fas/tensor.hpp"

namespace fas {

struct ViTConfig {
  std::size_t image_height = 32;
  std::size_t image_width = 32;
  std::size_t channels = 3;
  std::size_t patch_size = 8;
  std::size_t embed_dim = 64;
  std::size_t depth = 4;
  std::size_t heads = 4;
  double mlp_ratio = 4.0;
  std::size_t num_classes = 2;
  double layernorm_eps = kLayerNormEps;

  /// Throws ConfigError on indivisible image/patch or embed/head sizes.
  void validate() const;

  std::size_t grid_rows() const { return image_height / patch_size; }
  std::size_t grid_cols() const { return image_width / patch_size; }
  std::size_t num_patches() const { return grid_rows() * grid_cols(); }
  std::size_t patch_dim() const { return patch_size * patch_size * channels; }
  std::size_t head_dim() const { return embed_dim / heads; }
  std::size_t mlp_hidden() const;

  friend bool operator==(const ViTConfig&, const ViTConfig&) = default;
};

using NamedTensor = std::pair<std::string, Tensor>;

/// Two-layer perceptron in -> hidden -> out with GELU in between. Serves as
/// the classification head and as the self-distillation projection head.
struct MlpHead {
  Tensor w1, b1, w2, b2;

  static MlpHead init(std::size_t in, std::size_t hidden, std::size_t out, std::uint64_t seed);
  void append_named(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct EncoderBlockParams {
  Tensor ln1_gamma, ln1_beta;
  Tensor w_q, w_k, w_v, w_o;
  Tensor ln2_gamma, ln2_beta;
  Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

struct ViTParams {
  Tensor patch_projection;      // [P*P*C, D]
  Tensor positional_embeddings; // [N+1, D]
  Tensor cls_token;             // [D]
  std::vector<EncoderBlockParams> blocks;
  Tensor final_ln_gamma, final_ln_beta;
  MlpHead head;                 // D -> D -> num_classes

  /// Seeded initialization: projections and attention/MLP weights from
  /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)), cls and positional embeddings from
  /// N(0, 0.02^2), layernorm gamma = 1, biases = 0.
  static ViTParams init(const ViTConfig& config, std::uint64_t seed);

  /// Handles to every learnable tensor in a fixed order with stable names.
  std::vector<NamedTensor> named_parameters() const;
  std::vector<Tensor> parameters() const;
  ViTParams clone() const;
  void set_requires_grad(bool on) const;
};

/// Number of learnable scalars implied by a config.
std::size_t parameter_count(const ViTParams& params);

/// Splits a [C, H, W] image into raster-ordered patches. Each row holds one
/// patch flattened channel-major: index = (c*P + dy)*P + dx.
Tensor patchify(const Tensor& image, std::size_t patch_size);
/// Inverse of patchify.
Tensor unpatchify(const Tensor& patches, std::size_t channels, std::size_t height, std::size_t width,
                  std::size_t patch_size);

/// Token matrix [N+1, D]: row 0 is the cls token, rows 1..N are projected
/// patches; positional embeddings are added to every row.
Tensor embed(Tape& tape, const Tensor& patches, const ViTParams& params);

/// Row-stochastic weights softmax(Q K^T / sqrt(d_k)).
Tensor attention_weights(Tape& tape, const Tensor& q, const Tensor& k);
/// softmax(Q K^T / sqrt(d_k)) V.
Tensor attention(Tape& tape, const Tensor& q, const Tensor& k, const Tensor& v);

/// Heads concatenated and projected by W_O, without the residual.
Tensor attention_projection(Tape& tape, const Tensor& tokens, const EncoderBlockParams& block, std::size_t heads);
/// tokens + attention_projection(tokens).
Tensor multi_head_attention(Tape& tape, const Tensor& tokens, const EncoderBlockParams& block, std::size_t heads);

/// Pre-norm block: x + MHA(LN1(x)), then + MLP(LN2(.)).
Tensor encoder_block(Tape& tape, const Tensor& tokens, const EncoderBlockParams& block, std::size_t heads,
                     double eps = kLayerNormEps);

Tensor mlp_head_forward(Tape& tape, const Tensor& features, const MlpHead& head);

/// cls row of the final layernormed token matrix, shape [D]. Throws
/// ShapeError when the image does not match the configured input size.
Tensor vit_features(Tape& tape, const Tensor& image, const ViTParams& params, const ViTConfig& config);

/// Classification logits [num_classes]; index 0 is live, 1 is attack.
Tensor vit_forward(Tape& tape, const Tensor& image, const ViTParams& params, const ViTConfig& config);

}  // namespace fas
