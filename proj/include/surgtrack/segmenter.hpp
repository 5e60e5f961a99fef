#pragma once

#include "surgtrack/lora.hpp"
#include "surgtrack/params.hpp"
#include "surgtrack/prompt_mask.hpp"
#include "surgtrack/vit_encoder.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace surgtrack {

struct LoraConfig {
  std::vector<std::string> targets{"q", "v"};
  int rank = 4;
  double alpha = 4.0;  // alpha = rank gives unit scaling
  bool operator==(const LoraConfig&) const = default;
};

/// Promptable segmenter: image encoder + box prompt encoder + mask decoder,
/// with LoRA adapters on the encoder projections.
struct SegmenterModel {
  ViTConfig vit;
  DecoderConfig decoder;
  LoraConfig lora;
  ParamStore params;    // encoder.*, prompt_encoder.*, decoder.*
  AdapterSet adapters;  // empty until inject_adapters()

  /// Fresh model with seeded weights and no adapters.
  static SegmenterModel create(const ViTConfig& vit, const DecoderConfig& decoder, std::uint64_t seed);

  /// Attaches adapters per lora config (targets, rank, alpha).
  void inject_adapters(const LoraConfig& cfg, std::uint64_t seed);

  /// Sets each parameter's trainable flag from the policy and returns
  /// whether the adapters are trainable under it.
  bool apply_policy(const FreezePolicy& policy);

  MaskLogits predict_logits(const ImageTensor& image, const BoxPrompt& box) const;
  BinaryMask predict(const ImageTensor& image, const BoxPrompt& box) const { return predict_logits(image, box).binarize(); }

  /// (H·W)×1 logits on a caller-owned graph.
  Var forward(Bindings& b, const ImageTensor& image, const BoxPrompt& box) const;
};

}  // namespace surgtrack
