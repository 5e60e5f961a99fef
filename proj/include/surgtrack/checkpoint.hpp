#pragma once

#include "surgtrack/lora.hpp"
#include "surgtrack/memtrack.hpp"
#include "surgtrack/params.hpp"
#include "surgtrack/segmenter.hpp"

#include <nlohmann/json.hpp>

#include <string>

namespace surgtrack {

// Archive layout (all integers little-endian):
//
//   magic        8 bytes  "SGTCKPT\0"
//   version      u32      kCheckpointVersion
//   header_len   u32
//   header       header_len bytes of UTF-8 JSON (model kind + configs)
//   count        u32
//   count × entry:
//     name_len   u32, name bytes
//     flags      u8       bit 0: trainable
//     ndim       u32, then ndim × u32 dims
//     data       prod(dims) × float32, row-major
//
// Adapters are stored as "<target>.lora.A" / "<target>.lora.B" entries;
// rank and alpha live in the header's "lora" object.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json header;
  ParamStore params;
};

void save_checkpoint(const std::string& path, const nlohmann::json& header, const ParamStore& params);
/// Throws DataError on a missing file, bad magic, unknown version or
/// truncation.
Checkpoint load_checkpoint(const std::string& path);

/// FNV-1a 64 of the file bytes, as 16 hex digits.
std::string checkpoint_id(const std::string& path);

void save_segmenter(const SegmenterModel& model, const std::string& path);
SegmenterModel load_segmenter(const std::string& path);

void save_tracker(const TrackerModel& model, const std::string& path);
TrackerModel load_tracker(const std::string& path);

nlohmann::json to_json(const ViTConfig& cfg);
ViTConfig vit_config_from_json(const nlohmann::json& j);

}  // namespace surgtrack
