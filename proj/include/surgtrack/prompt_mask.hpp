#pragma once

#include "surgtrack/bindings.hpp"
#include "surgtrack/params.hpp"
#include "surgtrack/tensor.hpp"
#include "surgtrack/vit_encoder.hpp"

#include <cstdint>
#include <string>

namespace surgtrack {

/// Inclusive pixel box.
struct BoxPrompt {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;

  /// Throws ShapeError unless 0 <= min <= max < extent on both axes.
  void validate(int height, int width) const;
  bool contains(int x, int y) const { return x >= x_min && x <= x_max && y >= y_min && y <= y_max; }
  std::string to_string() const;
  bool operator==(const BoxPrompt&) const = default;
};

/// Parses "x_min,y_min,x_max,y_max". Throws UsageError on malformed text.
BoxPrompt parse_box(const std::string& text);

/// Tight inclusive box around the true pixels. Throws DataError on an
/// empty mask.
BoxPrompt bbox_from_mask(const BinaryMask& mask);

struct MaskLogits {
  int height = 0;
  int width = 0;
  Matrix values;  // height × width

  BinaryMask binarize() const;  // logit > 0
};

/// Sinusoidal features of a normalized point (u, v) ∈ [0,1)², dim/4
/// frequencies per sin/cos per axis, laid out [sin u | cos u | sin v | cos v].
RowVector sinusoidal_encoding(double u, double v, int dim);

/// Box corners (top-left, bottom-right) as 2 × dim tokens: sinusoidal
/// encoding of (x/W, y/H) plus the per-corner type embedding when given.
Matrix encode_box(const BoxPrompt& prompt, int dim, int image_size, const Matrix* corner_type = nullptr);

/// Output of the prompt encoder: sparse corner tokens plus the box itself,
/// which the decoder rasterizes into a dense per-pixel prior.
struct PromptEncoding {
  Matrix tokens;  // 2 × dim
  BoxPrompt box;
  int image_size = 0;
};

struct DecoderConfig {
  int channels = 8;      // width of the upsampled embedding features
  int head_hidden = 16;  // per-pixel MLP width
  bool operator==(const DecoderConfig&) const = default;
};

/// Adds frozen "prompt_encoder.corner_type" (2 × dim).
void init_prompt_encoder(ParamStore& params, int dim, std::uint64_t seed);
/// Adds trainable "decoder.*" parameters.
void init_decoder(ParamStore& params, int dim, const DecoderConfig& cfg, std::uint64_t seed);

PromptEncoding encode_prompt(const BoxPrompt& prompt, const ParamStore& params, int dim, int image_size);

/// Per-pixel dense box prior: (inside, x offset from box center / box width,
/// y offset / box height). image_size² × 3.
Matrix box_prior(const BoxPrompt& box, int image_size);

/// Mask token and corner tokens cross-attend over the embedding (keys carry
/// the grid's sinusoidal position); the attended mask token gates
/// bilinearly upsampled embedding features, which a per-pixel MLP combines
/// with the skip pixels and the dense box prior into H×W logits.
MaskLogits decode_mask(const EmbeddingGrid& embedding, const PromptEncoding& prompt, const ParamStore& params,
                       const DecoderConfig& cfg);
/// Graph form; returns (H·W) × 1 logits.
Var decode_mask(Bindings& b, Var embedding, const Matrix& skip, const PromptEncoding& prompt, int grid,
                const DecoderConfig& cfg);

}  // namespace surgtrack
