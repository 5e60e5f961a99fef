#include "surgtrack/pipeline.hpp"

#include "surgtrack/error.hpp"

#include <algorithm>
#include <set>

namespace surgtrack {

std::vector<int> PipelineConfig::resolve_seeds(int n) const {
  std::vector<int> seeds;
  if (!seed_frames.empty()) {
    std::set<int> seen;
    for (int f : seed_frames) {
      if (f < 0 || f >= n) throw ConfigError("seed frame " + std::to_string(f) + " is outside a " + std::to_string(n) + "-frame video");
      if (!seen.insert(f).second) throw ConfigError("seed frame " + std::to_string(f) + " listed twice");
    }
    seeds.assign(seen.begin(), seen.end());
    return seeds;
  }
  if (seed_k < 1) throw ConfigError("seed-k must be >= 1");
  if (seed_k > n) {
    throw ConfigError("seed-k " + std::to_string(seed_k) + " exceeds the sequence length " + std::to_string(n));
  }
  for (int i = 0; i < seed_k; ++i) seeds.push_back(i);
  return seeds;
}

namespace {

BoxPrompt seed_prompt(const VideoSequence& video, const PipelineConfig& cfg, int frame) {
  auto user = cfg.user_boxes.find(frame);
  if (cfg.prompt_source == PromptSource::kGtBox && video.has_gt()) {
    const BinaryMask& gt = video.masks[static_cast<size_t>(frame)];
    if (!gt.empty()) return bbox_from_mask(gt);
  }
  if (user != cfg.user_boxes.end()) return user->second;
  throw SeedError("no prompt for seed frame " + std::to_string(frame) +
                  (video.has_gt() ? " (ground truth is empty and no box was given)" : " (no box was given)"));
}

}  // namespace

PipelineResult run_pipeline(const VideoSequence& video, const SegmenterModel& segmenter, const TrackerModel& tracker,
                            const PipelineConfig& cfg) {
  video.validate();
  if (video.size() == 0) throw DataError("video " + video.id + " has no frames");
  PipelineResult result;
  result.seed_frames = cfg.resolve_seeds(video.size());

  std::map<int, BinaryMask> seeds;
  for (int f : result.seed_frames) {
    const ImageTensor& frame = video.frames[static_cast<size_t>(f)];
    BoxPrompt box = seed_prompt(video, cfg, f);
    box.validate(frame.height, frame.width);
    seeds.emplace(f, segmenter.predict(frame, box));
  }

  if (static_cast<int>(seeds.size()) == video.size()) {
    for (auto& [f, m] : seeds) result.masks.push_back(std::move(m));
  } else {
    result.masks = propagate(video, seeds, tracker, cfg.bank);
  }
  if (video.has_gt()) result.report = score_video(video, result.masks, cfg.dataset_label, cfg.model_label);
  return result;
}

SegReport score_video(const VideoSequence& video, const std::vector<BinaryMask>& masks, const std::string& dataset,
                      const std::string& model) {
  if (!video.has_gt()) throw DataError("video " + video.id + " has no ground truth to score against");
  if (masks.size() != video.masks.size()) {
    throw ShapeError("got " + std::to_string(masks.size()) + " masks for " + std::to_string(video.masks.size()) + " frames");
  }
  std::vector<FrameScore> scores;
  scores.reserve(masks.size());
  for (size_t i = 0; i < masks.size(); ++i) {
    const int number = i < video.frame_numbers.size() ? video.frame_numbers[i] : static_cast<int>(i);
    scores.push_back(frame_score(masks[i], video.masks[i], number));
  }
  return aggregate(scores, dataset, model);
}

}  // namespace surgtrack
