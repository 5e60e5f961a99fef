#include "surgtrack/vit_encoder.hpp"

#include "surgtrack/error.hpp"

#include <cmath>
#include <random>

namespace surgtrack {

namespace {

std::string block_prefix(int block) { return "encoder.block" + std::to_string(block); }

void check_image(const ImageTensor& image, const ViTConfig& cfg) {
  image.validate();
  if (image.height != cfg.image_size || image.width != cfg.image_size) {
    throw ShapeError("image is " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                     ", encoder expects " + std::to_string(cfg.image_size) + "x" + std::to_string(cfg.image_size));
  }
}

Var multi_head_attention(Bindings& b, Var h, const std::string& prefix, const ViTConfig& cfg, int only_head = -1,
                         Var* head_probs = nullptr) {
  Graph& g = b.graph();
  Var q = b.linear(h, prefix + ".q");
  Var k = b.linear(h, prefix + ".k");
  Var v = b.linear(h, prefix + ".v");
  const int hd = cfg.head_dim();
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<Var> heads;
  heads.reserve(static_cast<size_t>(cfg.num_heads));
  for (int i = 0; i < cfg.num_heads; ++i) {
    Var qh = g.slice_cols(q, i * hd, hd);
    Var kh = g.slice_cols(k, i * hd, hd);
    Var vh = g.slice_cols(v, i * hd, hd);
    Var p = g.softmax_rows(g.scale(g.matmul_nt(qh, kh), inv_scale));
    if (i == only_head && head_probs) *head_probs = p;
    heads.push_back(g.matmul(p, vh));
  }
  return b.linear(g.concat_cols(heads), prefix + ".out");
}

}  // namespace

void ViTConfig::validate(bool allow_zero_depth) const {
  if (image_size <= 0 || patch_size <= 0 || embed_dim <= 0 || num_heads <= 0 || mlp_ratio <= 0) {
    throw ConfigError("ViT config fields must be positive");
  }
  if (depth < 0 || (depth == 0 && !allow_zero_depth)) throw ConfigError("ViT depth must be >= 1");
  if (image_size % patch_size != 0) throw ConfigError("image_size must be a multiple of patch_size");
  if (embed_dim % num_heads != 0) throw ConfigError("embed_dim must be a multiple of num_heads");
  if (mlp_dim() <= 0) throw ConfigError("mlp_ratio yields an empty MLP");
}

std::vector<ParamInfo> encoder_param_infos(const ViTConfig& cfg) {
  const auto d = static_cast<std::size_t>(cfg.embed_dim);
  const auto m = static_cast<std::size_t>(cfg.mlp_dim());
  std::vector<ParamInfo> out;
  out.push_back({"encoder.patch_embed.weight", d * static_cast<std::size_t>(cfg.patch_dim())});
  out.push_back({"encoder.patch_embed.bias", d});
  out.push_back({"encoder.pos_embed", static_cast<std::size_t>(cfg.num_tokens()) * d});
  for (int i = 0; i < cfg.depth; ++i) {
    const std::string p = block_prefix(i);
    out.push_back({p + ".norm1.gamma", d});
    out.push_back({p + ".norm1.beta", d});
    for (const char* proj : {"q", "k", "v", "out"}) {
      out.push_back({p + ".attn." + proj + ".weight", d * d});
      out.push_back({p + ".attn." + proj + ".bias", d});
    }
    out.push_back({p + ".norm2.gamma", d});
    out.push_back({p + ".norm2.beta", d});
    out.push_back({p + ".mlp.fc1.weight", m * d});
    out.push_back({p + ".mlp.fc1.bias", m});
    out.push_back({p + ".mlp.fc2.weight", d * m});
    out.push_back({p + ".mlp.fc2.bias", d});
  }
  out.push_back({"encoder.norm.gamma", d});
  out.push_back({"encoder.norm.beta", d});
  return out;
}

void init_encoder(ParamStore& params, const ViTConfig& cfg, std::uint64_t seed, bool trainable) {
  cfg.validate(/*allow_zero_depth=*/true);
  std::mt19937_64 rng(seed);
  const int d = cfg.embed_dim;
  const int m = cfg.mlp_dim();
  params.add("encoder.patch_embed.weight", xavier_uniform(rng, d, cfg.patch_dim()), trainable);
  params.add("encoder.patch_embed.bias", Matrix::Zero(1, d), trainable);
  params.add("encoder.pos_embed", normal_init(rng, cfg.num_tokens(), d, 0.02), trainable);
  for (int i = 0; i < cfg.depth; ++i) {
    const std::string p = block_prefix(i);
    params.add(p + ".norm1.gamma", Matrix::Ones(1, d), trainable);
    params.add(p + ".norm1.beta", Matrix::Zero(1, d), trainable);
    for (const char* proj : {"q", "k", "v", "out"}) {
      params.add(p + ".attn." + proj + ".weight", xavier_uniform(rng, d, d), trainable);
      params.add(p + ".attn." + proj + ".bias", Matrix::Zero(1, d), trainable);
    }
    params.add(p + ".norm2.gamma", Matrix::Ones(1, d), trainable);
    params.add(p + ".norm2.beta", Matrix::Zero(1, d), trainable);
    params.add(p + ".mlp.fc1.weight", xavier_uniform(rng, m, d), trainable);
    params.add(p + ".mlp.fc1.bias", Matrix::Zero(1, m), trainable);
    params.add(p + ".mlp.fc2.weight", xavier_uniform(rng, d, m), trainable);
    params.add(p + ".mlp.fc2.bias", Matrix::Zero(1, d), trainable);
  }
  params.add("encoder.norm.gamma", Matrix::Ones(1, d), trainable);
  params.add("encoder.norm.beta", Matrix::Zero(1, d), trainable);
}

Var patchify(Bindings& b, const ImageTensor& image, const ViTConfig& cfg) {
  check_image(image, cfg);
  Graph& g = b.graph();
  Var patches = g.constant(extract_patches(image, cfg.patch_size));
  return g.add(b.linear(patches, "encoder.patch_embed"), b("encoder.pos_embed"));
}

Matrix patchify(const ImageTensor& image, const ParamStore& params, const ViTConfig& cfg) {
  Graph g(false);
  Bindings b(g, params);
  return g.value(patchify(b, image, cfg));
}

Var block_forward(Bindings& b, Var x, int block, const ViTConfig& cfg) {
  Graph& g = b.graph();
  if (g.value(x).cols() != cfg.embed_dim) throw ShapeError("block input width differs from embed_dim");
  if (cfg.embed_dim % cfg.num_heads != 0) throw ShapeError("embed_dim is not divisible by num_heads");
  const std::string p = block_prefix(block);
  Var h = g.layer_norm(x, b(p + ".norm1.gamma"), b(p + ".norm1.beta"));
  Var x1 = g.add(x, multi_head_attention(b, h, p + ".attn", cfg));
  Var h2 = g.layer_norm(x1, b(p + ".norm2.gamma"), b(p + ".norm2.beta"));
  Var mlp = b.linear(g.gelu(b.linear(h2, p + ".mlp.fc1")), p + ".mlp.fc2");
  Var out = g.add(x1, mlp);
  if (!g.value(out).allFinite()) throw NumericError("non-finite activation in " + p);
  return out;
}

Matrix block_forward(const Matrix& x, const ParamStore& params, int block, const ViTConfig& cfg,
                     const AdapterSet* adapters) {
  Graph g(false);
  Bindings b(g, params, adapters);
  return g.value(block_forward(b, g.constant(x), block, cfg));
}

Matrix attention_weights(const Matrix& x, const ParamStore& params, int block, int head, const ViTConfig& cfg,
                         const AdapterSet* adapters) {
  Graph g(false);
  Bindings b(g, params, adapters);
  const std::string p = block_prefix(block);
  Var xv = g.constant(x);
  Var h = g.layer_norm(xv, b(p + ".norm1.gamma"), b(p + ".norm1.beta"));
  Var probs{};
  multi_head_attention(b, h, p + ".attn", cfg, head, &probs);
  return g.value(probs);
}

Var encode_image(Bindings& b, const ImageTensor& image, const ViTConfig& cfg) {
  cfg.validate(/*allow_zero_depth=*/true);
  Graph& g = b.graph();
  Var x = patchify(b, image, cfg);
  for (int i = 0; i < cfg.depth; ++i) x = block_forward(b, x, i, cfg);
  return g.layer_norm(x, b("encoder.norm.gamma"), b("encoder.norm.beta"));
}

EmbeddingGrid encode_image(const ImageTensor& image, const ParamStore& params, const ViTConfig& cfg,
                           const AdapterSet* adapters) {
  Graph g(false);
  Bindings b(g, params, adapters);
  Var tokens = encode_image(b, image, cfg);
  return EmbeddingGrid{cfg.grid(), cfg.embed_dim, cfg.image_size, g.value(tokens), image.pixels};
}

}  // namespace surgtrack
