#include "fas/vit.hpp"

#include <cmath>

#include "fas/rng.hpp"

namespace fas {

void ViTConfig::validate() const {
  if (image_height == 0 || image_width == 0 || channels == 0) throw ConfigError("image dimensions must be positive");
  if (patch_size == 0) throw ConfigError("patch_size must be positive");
  if (image_height % patch_size != 0 || image_width % patch_size != 0) {
    throw ConfigError("image " + std::to_string(image_height) + "x" + std::to_string(image_width) +
                      " is not divisible by patch size " + std::to_string(patch_size));
  }
  if (embed_dim == 0 || heads == 0) throw ConfigError("embed_dim and heads must be positive");
  if (embed_dim % heads != 0) {
    throw ConfigError("embed_dim " + std::to_string(embed_dim) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
  if (depth == 0) throw ConfigError("depth must be at least 1");
  if (!(mlp_ratio > 0.0) || mlp_hidden() == 0) throw ConfigError("mlp_ratio must give a positive hidden width");
  if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
  if (!(layernorm_eps > 0.0)) throw ConfigError("layernorm_eps must be positive");
}

std::size_t ViTConfig::mlp_hidden() const {
  return static_cast<std::size_t>(std::llround(mlp_ratio * static_cast<double>(embed_dim)));
}

namespace {

Tensor uniform_fan_in(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t(Shape{fan_in, fan_out});
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

Tensor normal_tensor(Rng& rng, Shape shape, double stddev) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.normal(0.0, stddev);
  return t;
}

}  // namespace

MlpHead MlpHead::init(std::size_t in, std::size_t hidden, std::size_t out, std::uint64_t seed) {
  Rng rng(seed);
  MlpHead head;
  head.w1 = uniform_fan_in(rng, in, hidden);
  head.b1 = Tensor(Shape{hidden});
  head.w2 = uniform_fan_in(rng, hidden, out);
  head.b2 = Tensor(Shape{out});
  return head;
}

void MlpHead::append_named(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.emplace_back(prefix + "w1", w1);
  out.emplace_back(prefix + "b1", b1);
  out.emplace_back(prefix + "w2", w2);
  out.emplace_back(prefix + "b2", b2);
}

ViTParams ViTParams::init(const ViTConfig& config, std::uint64_t seed) {
  config.validate();
  const std::size_t d = config.embed_dim;
  const std::size_t hidden = config.mlp_hidden();
  Rng rng(seed);
  ViTParams p;
  p.patch_projection = uniform_fan_in(rng, config.patch_dim(), d);
  p.positional_embeddings = normal_tensor(rng, Shape{config.num_patches() + 1, d}, 0.02);
  p.cls_token = normal_tensor(rng, Shape{d}, 0.02);
  for (std::size_t i = 0; i < config.depth; ++i) {
    EncoderBlockParams b;
    b.ln1_gamma = Tensor(Shape{d}, 1.0);
    b.ln1_beta = Tensor(Shape{d});
    b.w_q = uniform_fan_in(rng, d, d);
    b.w_k = uniform_fan_in(rng, d, d);
    b.w_v = uniform_fan_in(rng, d, d);
    b.w_o = uniform_fan_in(rng, d, d);
    b.ln2_gamma = Tensor(Shape{d}, 1.0);
    b.ln2_beta = Tensor(Shape{d});
    b.mlp_w1 = uniform_fan_in(rng, d, hidden);
    b.mlp_b1 = Tensor(Shape{hidden});
    b.mlp_w2 = uniform_fan_in(rng, hidden, d);
    b.mlp_b2 = Tensor(Shape{d});
    p.blocks.push_back(std::move(b));
  }
  p.final_ln_gamma = Tensor(Shape{d}, 1.0);
  p.final_ln_beta = Tensor(Shape{d});
  p.head = MlpHead::init(d, d, config.num_classes, rng.next_u64());
  return p;
}

std::vector<NamedTensor> ViTParams::named_parameters() const {
  std::vector<NamedTensor> out;
  out.emplace_back("patch_projection", patch_projection);
  out.emplace_back("positional_embeddings", positional_embeddings);
  out.emplace_back("cls_token", cls_token);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    const std::string pre = "blocks." + std::to_string(i) + ".";
    out.emplace_back(pre + "ln1_gamma", b.ln1_gamma);
    out.emplace_back(pre + "ln1_beta", b.ln1_beta);
    out.emplace_back(pre + "w_q", b.w_q);
    out.emplace_back(pre + "w_k", b.w_k);
    out.emplace_back(pre + "w_v", b.w_v);
    out.emplace_back(pre + "w_o", b.w_o);
    out.emplace_back(pre + "ln2_gamma", b.ln2_gamma);
    out.emplace_back(pre + "ln2_beta", b.ln2_beta);
    out.emplace_back(pre + "mlp_w1", b.mlp_w1);
    out.emplace_back(pre + "mlp_b1", b.mlp_b1);
    out.emplace_back(pre + "mlp_w2", b.mlp_w2);
    out.emplace_back(pre + "mlp_b2", b.mlp_b2);
  }
  out.emplace_back("final_ln_gamma", final_ln_gamma);
  out.emplace_back("final_ln_beta", final_ln_beta);
  head.append_named("head.", out);
  return out;
}

std::vector<Tensor> ViTParams::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

ViTParams ViTParams::clone() const {
  ViTParams c;
  c.patch_projection = patch_projection.clone();
  c.positional_embeddings = positional_embeddings.clone();
  c.cls_token = cls_token.clone();
  for (const auto& b : blocks) {
    c.blocks.push_back(EncoderBlockParams{b.ln1_gamma.clone(), b.ln1_beta.clone(), b.w_q.clone(), b.w_k.clone(),
                                          b.w_v.clone(), b.w_o.clone(), b.ln2_gamma.clone(), b.ln2_beta.clone(),
                                          b.mlp_w1.clone(), b.mlp_b1.clone(), b.mlp_w2.clone(), b.mlp_b2.clone()});
  }
  c.final_ln_gamma = final_ln_gamma.clone();
  c.final_ln_beta = final_ln_beta.clone();
  c.head = MlpHead{head.w1.clone(), head.b1.clone(), head.w2.clone(), head.b2.clone()};
  return c;
}

void ViTParams::set_requires_grad(bool on) const {
  for (auto t : parameters()) t.set_requires_grad(on);
}

std::size_t parameter_count(const ViTParams& params) {
  std::size_t total = 0;
  for (const auto& [name, t] : params.named_parameters()) total += t.numel();
  return total;
}

// ---------------------------------------------------------------------------

Tensor patchify(const Tensor& image, std::size_t patch_size) {
  if (image.rank() != 3) throw ShapeError("patchify expects [C,H,W], got " + shape_to_string(image.shape()));
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2), p = patch_size;
  if (p == 0 || h % p != 0 || w % p != 0) {
    throw ConfigError("image " + std::to_string(h) + "x" + std::to_string(w) + " is not divisible by patch size " +
                      std::to_string(p));
  }
  const std::size_t gh = h / p, gw = w / p, dim = p * p * c;
  Tensor out(Shape{gh * gw, dim});
  for (std::size_t gy = 0; gy < gh; ++gy)
    for (std::size_t gx = 0; gx < gw; ++gx) {
      double* row = out.data().data() + (gy * gw + gx) * dim;
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t dy = 0; dy < p; ++dy)
          for (std::size_t dx = 0; dx < p; ++dx)
            row[(ch * p + dy) * p + dx] = image[(ch * h + gy * p + dy) * w + gx * p + dx];
    }
  return out;
}

Tensor unpatchify(const Tensor& patches, std::size_t channels, std::size_t height, std::size_t width,
                  std::size_t patch_size) {
  const std::size_t p = patch_size;
  if (p == 0 || height % p != 0 || width % p != 0) throw ConfigError("unpatchify: indivisible image size");
  const std::size_t gh = height / p, gw = width / p, dim = p * p * channels;
  if (patches.rank() != 2 || patches.dim(0) != gh * gw || patches.dim(1) != dim) {
    throw ShapeError("unpatchify: patches " + shape_to_string(patches.shape()) + " do not fit the image");
  }
  Tensor image(Shape{channels, height, width});
  for (std::size_t gy = 0; gy < gh; ++gy)
    for (std::size_t gx = 0; gx < gw; ++gx)
      for (std::size_t ch = 0; ch < channels; ++ch)
        for (std::size_t dy = 0; dy < p; ++dy)
          for (std::size_t dx = 0; dx < p; ++dx)
            image[(ch * height + gy * p + dy) * width + gx * p + dx] =
                patches[(gy * gw + gx) * dim + (ch * p + dy) * p + dx];
  return image;
}

Tensor embed(Tape& tape, const Tensor& patches, const ViTParams& params) {
  const std::size_t d = params.patch_projection.dim(1);
  Tensor projected = matmul(tape, patches, params.patch_projection);
  Tensor cls = reshape(tape, params.cls_token, Shape{1, d});
  Tensor tokens = concat_rows(tape, {cls, projected});
  if (tokens.shape() != params.positional_embeddings.shape()) {
    throw ShapeError("embed: tokens " + shape_to_string(tokens.shape()) + " vs positional embeddings " +
                     shape_to_string(params.positional_embeddings.shape()));
  }
  return add(tape, tokens, params.positional_embeddings);
}

Tensor attention_weights(Tape& tape, const Tensor& q, const Tensor& k) {
  if (q.rank() != 2 || k.rank() != 2 || q.dim(1) != k.dim(1)) {
    throw ShapeError("attention: key width mismatch, Q " + shape_to_string(q.shape()) + " K " +
                     shape_to_string(k.shape()));
  }
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
  Tensor scores = scale(tape, matmul(tape, q, transpose(tape, k)), inv_sqrt_dk);
  return softmax(tape, scores);
}

Tensor attention(Tape& tape, const Tensor& q, const Tensor& k, const Tensor& v) {
  if (v.rank() != 2 || k.rank() != 2 || k.dim(0) != v.dim(0)) {
    throw ShapeError("attention: K " + shape_to_string(k.shape()) + " and V " + shape_to_string(v.shape()) +
                     " disagree on rows");
  }
  return matmul(tape, attention_weights(tape, q, k), v);
}

Tensor attention_projection(Tape& tape, const Tensor& tokens, const EncoderBlockParams& block, std::size_t heads) {
  const std::size_t d = tokens.dim(1);
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("embed width " + std::to_string(d) + " is not divisible by " + std::to_string(heads) + " heads");
  }
  const std::size_t dk = d / heads;
  Tensor q = matmul(tape, tokens, block.w_q);
  Tensor k = matmul(tape, tokens, block.w_k);
  Tensor v = matmul(tape, tokens, block.w_v);
  std::vector<Tensor> outputs;
  outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    outputs.push_back(attention(tape, slice_cols(tape, q, h * dk, dk), slice_cols(tape, k, h * dk, dk),
                                slice_cols(tape, v, h * dk, dk)));
  }
  Tensor merged = heads == 1 ? outputs.front() : concat_cols(tape, outputs);
  return matmul(tape, merged, block.w_o);
}

Tensor multi_head_attention(Tape& tape, const Tensor& tokens, const EncoderBlockParams& block, std::size_t heads) {
  return add(tape, tokens, attention_projection(tape, tokens, block, heads));
}

Tensor encoder_block(Tape& tape, const Tensor& tokens, const EncoderBlockParams& block, std::size_t heads,
                     double eps) {
  Tensor normed = layernorm(tape, tokens, block.ln1_gamma, block.ln1_beta, eps);
  Tensor h = add(tape, tokens, attention_projection(tape, normed, block, heads));
  Tensor normed2 = layernorm(tape, h, block.ln2_gamma, block.ln2_beta, eps);
  Tensor hidden = gelu(tape, add_row(tape, matmul(tape, normed2, block.mlp_w1), block.mlp_b1));
  Tensor mlp = add_row(tape, matmul(tape, hidden, block.mlp_w2), block.mlp_b2);
  return add(tape, h, mlp);
}

Tensor mlp_head_forward(Tape& tape, const Tensor& features, const MlpHead& head) {
  Tensor x = reshape(tape, features, Shape{1, features.numel()});
  Tensor hidden = gelu(tape, add_row(tape, matmul(tape, x, head.w1), head.b1));
  Tensor out = add_row(tape, matmul(tape, hidden, head.w2), head.b2);
  return reshape(tape, out, Shape{out.numel()});
}

Tensor vit_features(Tape& tape, const Tensor& image, const ViTParams& params, const ViTConfig& config) {
  const Shape expected{config.channels, config.image_height, config.image_width};
  if (image.shape() != expected) {
    throw ShapeError("image " + shape_to_string(image.shape()) + " does not match model input " +
                     shape_to_string(expected) + "; resize needed");
  }
  Tensor tokens = embed(tape, patchify(image, config.patch_size), params);
  for (const auto& block : params.blocks) tokens = encoder_block(tape, tokens, block, config.heads, config.layernorm_eps);
  Tensor cls = layernorm(tape, slice_rows(tape, tokens, 0, 1), params.final_ln_gamma, params.final_ln_beta,
                         config.layernorm_eps);
  return reshape(tape, cls, Shape{config.embed_dim});
}

Tensor vit_forward(Tape& tape, const Tensor& image, const ViTParams& params, const ViTConfig& config) {
  return mlp_head_forward(tape, vit_features(tape, image, params, config), params.head);
}

}  // namespace fas
