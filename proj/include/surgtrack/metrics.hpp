#pragma once

#include "surgtrack/tensor.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace surgtrack {

enum class AccuracyMode {
  kMeanClassRecall,  // ½·(foreground recall + background recall)
  kPixel,            // (TP+TN)/total
};

enum class AggregateMode {
  kPerFrame,  // mean of per-frame ratios
  kPooled,    // ratios of dataset-summed pixel counts
};

struct FrameScore {
  int frame_index = 0;
  double iou = 0;
  double dice = 0;
  double acc = 0;
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

/// Scores one prediction. Empty prediction on empty ground truth scores 1
/// for IoU and Dice, and the undefined foreground recall counts as 1.
FrameScore frame_score(const BinaryMask& pred, const BinaryMask& gt, int frame_index = 0,
                       AccuracyMode mode = AccuracyMode::kMeanClassRecall);

/// Aggregate metrics in percent. Values are kept at full precision and only
/// rounded when rendered.
struct SegReport {
  std::string dataset;
  std::string model;
  std::vector<FrameScore> frames;
  double miou = 0;
  double macc = 0;
  double mdice = 0;
};

SegReport aggregate(std::span<const FrameScore> scores, const std::string& dataset = "", const std::string& model = "",
                    AggregateMode mode = AggregateMode::kPerFrame, AccuracyMode acc_mode = AccuracyMode::kMeanClassRecall);

/// Rounds half-up to two decimals, e.g. 91.375 -> "91.38".
std::string format_percent(double value);

nlohmann::json to_json(const SegReport& report);
SegReport report_from_json(const nlohmann::json& j);

void save_report(const SegReport& report, const std::string& path);
SegReport load_report(const std::string& path);

enum class TableStyle {
  kAuto,          // dataset column when any report carries a dataset label
  kDatasetModel,  // Dataset | Model | mIoU | mAcc | mDice
  kModel,         // Model | mIoU | mAcc | mDice
};

/// Plain-text comparison table, one row per report in input order.
/// Consecutive rows sharing a dataset print the dataset name once.
std::string render_table(std::span<const SegReport> reports, TableStyle style = TableStyle::kAuto);

}  // namespace surgtrack
