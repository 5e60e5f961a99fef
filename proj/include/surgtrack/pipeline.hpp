#pragma once

#include "surgtrack/datasets.hpp"
#include "surgtrack/memtrack.hpp"
#include "surgtrack/metrics.hpp"
#include "surgtrack/prompt_mask.hpp"
#include "surgtrack/segmenter.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace surgtrack {

enum class PromptSource { kGtBox, kUserBox };

struct PipelineConfig {
  int seed_k = 1;
  /// Explicit seed frame indices; when non-empty they replace 0..k-1.
  std::vector<int> seed_frames;
  PromptSource prompt_source = PromptSource::kGtBox;
  /// Boxes per frame index. With kGtBox they are only used for seed frames
  /// whose ground truth is missing or empty.
  std::map<int, BoxPrompt> user_boxes;
  BankConfig bank;
  std::string dataset_label;
  std::string model_label;

  /// Seed frame indices for a video of n frames. Throws ConfigError when
  /// k < 1, k > n, or an explicit index is out of range or repeated.
  std::vector<int> resolve_seeds(int n) const;
};

struct PipelineResult {
  std::vector<BinaryMask> masks;  // one per frame
  std::vector<int> seed_frames;
  std::optional<SegReport> report;  // when the video has GT
};

/// Segments the seed frames with the prompted segmenter and tracks the rest.
/// When every frame is a seed the tracker is not consulted. Throws SeedError
/// when a seed frame has no usable prompt.
PipelineResult run_pipeline(const VideoSequence& video, const SegmenterModel& segmenter, const TrackerModel& tracker,
                            const PipelineConfig& cfg);

/// Scores masks against the video's GT, one FrameScore per frame.
SegReport score_video(const VideoSequence& video, const std::vector<BinaryMask>& masks, const std::string& dataset = "",
                      const std::string& model = "");

}  // namespace surgtrack
