#include "surgtrack/segmenter.hpp"

#include "surgtrack/error.hpp"

namespace surgtrack {

SegmenterModel SegmenterModel::create(const ViTConfig& vit, const DecoderConfig& decoder, std::uint64_t seed) {
  vit.validate();
  if (vit.embed_dim % 4 != 0) throw ConfigError("embed_dim must be a multiple of 4 for the box encoding");
  SegmenterModel m;
  m.vit = vit;
  m.decoder = decoder;
  init_encoder(m.params, vit, seed);
  init_prompt_encoder(m.params, vit.embed_dim, seed + 1);
  init_decoder(m.params, vit.embed_dim, decoder, seed + 2);
  return m;
}

void SegmenterModel::inject_adapters(const LoraConfig& cfg, std::uint64_t seed) {
  adapters = inject(params, cfg.targets, cfg.rank, cfg.alpha, seed, adapters);
  lora = cfg;
}

bool SegmenterModel::apply_policy(const FreezePolicy& policy) {
  for (auto& [name, p] : params) p.trainable = policy.is_trainable(name);
  bool any = false;
  for (const auto& [target, a] : adapters) {
    const bool ta = policy.is_trainable(a.a_name());
    const bool tb = policy.is_trainable(a.b_name());
    if (ta != tb) throw ConfigError("freeze policy splits the factors of adapter '" + target + "'");
    any = any || ta;
  }
  return any;
}

Var SegmenterModel::forward(Bindings& b, const ImageTensor& image, const BoxPrompt& box) const {
  Var tokens = encode_image(b, image, vit);
  PromptEncoding prompt = encode_prompt(box, params, vit.embed_dim, vit.image_size);
  return decode_mask(b, tokens, image.pixels, prompt, vit.grid(), decoder);
}

MaskLogits SegmenterModel::predict_logits(const ImageTensor& image, const BoxPrompt& box) const {
  Graph g(false);
  Bindings b(g, params, &adapters);
  Var logits = forward(b, image, box);
  const int s = vit.image_size;
  return MaskLogits{s, s, Eigen::Map<const Matrix>(g.value(logits).data(), s, s)};
}

}  // namespace surgtrack
