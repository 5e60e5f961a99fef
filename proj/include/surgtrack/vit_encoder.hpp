#pragma once

#include "surgtrack/bindings.hpp"
#include "surgtrack/lora.hpp"
#include "surgtrack/params.hpp"
#include "surgtrack/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace surgtrack {

/// Shape of the image encoder. Defaults are the desk-scale configuration.
struct ViTConfig {
  int image_size = 64;
  int patch_size = 8;
  int embed_dim = 32;
  int depth = 2;
  int num_heads = 4;
  double mlp_ratio = 4.0;

  int grid() const { return image_size / patch_size; }
  int num_tokens() const { return grid() * grid(); }
  int head_dim() const { return embed_dim / num_heads; }
  int mlp_dim() const { return static_cast<int>(embed_dim * mlp_ratio); }
  int patch_dim() const { return patch_size * patch_size * 3; }

  /// Throws ConfigError. depth 0 is accepted only with allow_zero_depth.
  void validate(bool allow_zero_depth = false) const;

  static ViTConfig desk() { return {}; }
  /// ViT-B shape (1024 px, 16 px patches, 768 dims, 12 blocks, 12 heads).
  /// Used for parameter accounting, far too large to train here.
  static ViTConfig vitb() { return {1024, 16, 768, 12, 12, 4.0}; }

  bool operator==(const ViTConfig&) const = default;
};

/// Spatial image embedding: grid()² tokens of embed_dim, row-major over the
/// patch grid, plus the full-resolution pixels kept as a skip input for the
/// mask head.
struct EmbeddingGrid {
  int grid = 0;
  int dim = 0;
  int image_size = 0;
  Matrix tokens;  // grid² × dim
  Matrix skip;    // image_size² × 3
};

/// Names of every encoder parameter with its element count, computed from
/// the config alone (no allocation).
std::vector<ParamInfo> encoder_param_infos(const ViTConfig& cfg);

/// Adds "encoder.*" parameters with Xavier-uniform weights, N(0, 0.02²)
/// positional embedding, unit layer-norm scale and zero biases.
void init_encoder(ParamStore& params, const ViTConfig& cfg, std::uint64_t seed, bool trainable = false);

/// Linear patch embedding plus positional embedding; N × embed_dim.
Matrix patchify(const ImageTensor& image, const ParamStore& params, const ViTConfig& cfg);
Var patchify(Bindings& b, const ImageTensor& image, const ViTConfig& cfg);

/// Pre-norm transformer block: x + Attn(LN1(x)), then + MLP(LN2(·)).
Matrix block_forward(const Matrix& x, const ParamStore& params, int block, const ViTConfig& cfg,
                     const AdapterSet* adapters = nullptr);
Var block_forward(Bindings& b, Var x, int block, const ViTConfig& cfg);

/// Attention probabilities of one head of one block for input x (testing aid).
Matrix attention_weights(const Matrix& x, const ParamStore& params, int block, int head, const ViTConfig& cfg,
                         const AdapterSet* adapters = nullptr);

EmbeddingGrid encode_image(const ImageTensor& image, const ParamStore& params, const ViTConfig& cfg,
                           const AdapterSet* adapters = nullptr);
/// Graph form; returns the grid² × dim token matrix after the final norm.
Var encode_image(Bindings& b, const ImageTensor& image, const ViTConfig& cfg);

}  // namespace surgtrack
