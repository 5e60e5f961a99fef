#include "surgtrack/prompt_mask.hpp"

#include "surgtrack/error.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

namespace surgtrack {

void BoxPrompt::validate(int height, int width) const {
  if (x_min < 0 || y_min < 0 || x_min > x_max || y_min > y_max || x_max >= width || y_max >= height) {
    throw ShapeError("box prompt " + to_string() + " is outside a " + std::to_string(width) + "x" +
                     std::to_string(height) + " image");
  }
}

std::string BoxPrompt::to_string() const {
  std::ostringstream os;
  os << x_min << ',' << y_min << ',' << x_max << ',' << y_max;
  return os.str();
}

BoxPrompt parse_box(const std::string& text) {
  BoxPrompt box;
  char c1 = 0, c2 = 0, c3 = 0;
  std::istringstream is(text);
  if (!(is >> box.x_min >> c1 >> box.y_min >> c2 >> box.x_max >> c3 >> box.y_max) || c1 != ',' || c2 != ',' ||
      c3 != ',') {
    throw UsageError("malformed box '" + text + "', expected x_min,y_min,x_max,y_max");
  }
  std::string rest;
  if (is >> rest) throw UsageError("malformed box '" + text + "', trailing characters");
  return box;
}

BoxPrompt bbox_from_mask(const BinaryMask& mask) {
  BoxPrompt box{std::numeric_limits<int>::max(), std::numeric_limits<int>::max(), -1, -1};
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(y, x)) continue;
      box.x_min = std::min(box.x_min, x);
      box.y_min = std::min(box.y_min, y);
      box.x_max = std::max(box.x_max, x);
      box.y_max = std::max(box.y_max, y);
    }
  }
  if (box.x_max < 0) throw DataError("mask has no foreground pixels");
  return box;
}

BinaryMask MaskLogits::binarize() const {
  BinaryMask m(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) m.at(y, x) = values(y, x) > 0.0 ? 1 : 0;
  }
  return m;
}

RowVector sinusoidal_encoding(double u, double v, int dim) {
  if (dim <= 0 || dim % 4 != 0) throw ShapeError("sinusoidal encoding needs a positive multiple of 4 dims");
  const int nf = dim / 4;
  RowVector out(dim);
  for (int i = 0; i < nf; ++i) {
    const double freq = std::numbers::pi * std::exp2(nf > 1 ? 7.0 * i / (nf - 1) : 0.0);
    out(i) = std::sin(freq * u);
    out(nf + i) = std::cos(freq * u);
    out(2 * nf + i) = std::sin(freq * v);
    out(3 * nf + i) = std::cos(freq * v);
  }
  return out;
}

Matrix encode_box(const BoxPrompt& prompt, int dim, int image_size, const Matrix* corner_type) {
  prompt.validate(image_size, image_size);
  const double s = image_size;
  Matrix tokens(2, dim);
  tokens.row(0) = sinusoidal_encoding(prompt.x_min / s, prompt.y_min / s, dim);
  tokens.row(1) = sinusoidal_encoding(prompt.x_max / s, prompt.y_max / s, dim);
  if (corner_type) {
    if (corner_type->rows() != 2 || corner_type->cols() != dim) throw ShapeError("corner type embedding must be 2 x dim");
    tokens += *corner_type;
  }
  return tokens;
}

void init_prompt_encoder(ParamStore& params, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  params.add("prompt_encoder.corner_type", normal_init(rng, 2, dim, 0.02), false);
}

void init_decoder(ParamStore& params, int dim, const DecoderConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int c = cfg.channels;
  const int hh = cfg.head_hidden;
  params.add("decoder.mask_token", normal_init(rng, 1, dim, 0.02), true);
  for (const char* proj : {"q", "k", "v", "out"}) {
    params.add(std::string("decoder.attn.") + proj + ".weight", xavier_uniform(rng, dim, dim), true);
    params.add(std::string("decoder.attn.") + proj + ".bias", Matrix::Zero(1, dim), true);
  }
  params.add("decoder.norm.gamma", Matrix::Ones(1, dim), true);
  params.add("decoder.norm.beta", Matrix::Zero(1, dim), true);
  params.add("decoder.hyper.weight", xavier_uniform(rng, c, dim), true);
  params.add("decoder.hyper.bias", Matrix::Ones(1, c), true);
  params.add("decoder.feat.weight", xavier_uniform(rng, c, dim), true);
  params.add("decoder.feat.bias", Matrix::Zero(1, c), true);
  params.add("decoder.head.fc1.weight", xavier_uniform(rng, hh, c + 6), true);
  params.add("decoder.head.fc1.bias", Matrix::Zero(1, hh), true);
  params.add("decoder.head.fc2.weight", xavier_uniform(rng, 1, hh), true);
  params.add("decoder.head.fc2.bias", Matrix::Zero(1, 1), true);
}

PromptEncoding encode_prompt(const BoxPrompt& prompt, const ParamStore& params, int dim, int image_size) {
  const Matrix* type = params.contains("prompt_encoder.corner_type") ? &params.value("prompt_encoder.corner_type")
                                                                     : nullptr;
  return PromptEncoding{encode_box(prompt, dim, image_size, type), prompt, image_size};
}

Matrix box_prior(const BoxPrompt& box, int image_size) {
  box.validate(image_size, image_size);
  Matrix prior(static_cast<Eigen::Index>(image_size) * image_size, 3);
  const double cx = 0.5 * (box.x_min + box.x_max);
  const double cy = 0.5 * (box.y_min + box.y_max);
  const double w = box.x_max - box.x_min + 1;
  const double h = box.y_max - box.y_min + 1;
  for (int y = 0; y < image_size; ++y) {
    for (int x = 0; x < image_size; ++x) {
      const Eigen::Index r = static_cast<Eigen::Index>(y) * image_size + x;
      prior(r, 0) = box.contains(x, y) ? 1.0 : 0.0;
      prior(r, 1) = (x - cx) / w;
      prior(r, 2) = (y - cy) / h;
    }
  }
  return prior;
}

namespace {

Matrix grid_position_encoding(int grid, int dim) {
  Matrix pe(static_cast<Eigen::Index>(grid) * grid, dim);
  for (int gy = 0; gy < grid; ++gy) {
    for (int gx = 0; gx < grid; ++gx) {
      pe.row(static_cast<Eigen::Index>(gy) * grid + gx) = sinusoidal_encoding((gx + 0.5) / grid, (gy + 0.5) / grid, dim);
    }
  }
  return pe;
}

}  // namespace

Var decode_mask(Bindings& b, Var embedding, const Matrix& skip, const PromptEncoding& prompt, int grid,
                const DecoderConfig& cfg) {
  Graph& g = b.graph();
  const Matrix& emb = g.value(embedding);
  const int dim = static_cast<int>(emb.cols());
  const int size = prompt.image_size;
  if (emb.rows() != static_cast<Eigen::Index>(grid) * grid) throw ShapeError("embedding row count is not grid^2");
  if (prompt.tokens.rows() != 2 || prompt.tokens.cols() != dim) throw ShapeError("prompt tokens must be 2 x dim");
  if (skip.rows() != static_cast<Eigen::Index>(size) * size || skip.cols() != 3) {
    throw ShapeError("skip pixels do not match the prompt image size");
  }
  if (g.value(b("decoder.hyper.weight")).rows() != cfg.channels) throw ShapeError("decoder channel count mismatch");

  Var prompt_tokens = g.constant(prompt.tokens);
  Var tokens = g.concat_rows(std::array{b("decoder.mask_token"), prompt_tokens});
  Var keyed = g.add(embedding, g.constant(grid_position_encoding(grid, dim)));

  Var q = b.linear(tokens, "decoder.attn.q");
  Var k = b.linear(keyed, "decoder.attn.k");
  Var v = b.linear(embedding, "decoder.attn.v");
  Var attn = g.softmax_rows(g.scale(g.matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(dim))));
  Var attended = b.linear(g.matmul(attn, v), "decoder.attn.out");
  Var t1 = g.layer_norm(g.add(tokens, attended), b("decoder.norm.gamma"), b("decoder.norm.beta"));

  Var gate = b.linear(g.slice_rows(t1, 0, 1), "decoder.hyper");
  Var features = b.linear(embedding, "decoder.feat");
  Var up = g.matmul(g.constant(bilinear_operator(grid, grid, size, size)), features);
  Var gated = g.mul_row(up, gate);

  Var pixel_in = g.concat_cols(std::array{gated, g.constant(skip), g.constant(box_prior(prompt.box, size))});
  Var hidden = g.gelu(b.linear(pixel_in, "decoder.head.fc1"));
  return b.linear(hidden, "decoder.head.fc2");
}

MaskLogits decode_mask(const EmbeddingGrid& embedding, const PromptEncoding& prompt, const ParamStore& params,
                       const DecoderConfig& cfg) {
  if (prompt.image_size != embedding.image_size) throw ShapeError("prompt and embedding image sizes differ");
  Graph g(false);
  Bindings b(g, params);
  Var logits = decode_mask(b, g.constant(embedding.tokens), embedding.skip, prompt, embedding.grid, cfg);
  const int s = embedding.image_size;
  MaskLogits out{s, s, Eigen::Map<const Matrix>(g.value(logits).data(), s, s)};
  return out;
}

}  // namespace surgtrack
