#pragma once

#include "surgtrack/bindings.hpp"
#include "surgtrack/datasets.hpp"
#include "surgtrack/params.hpp"
#include "surgtrack/prompt_mask.hpp"
#include "surgtrack/segmenter.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace surgtrack {

struct TrainConfig {
  int epochs = 10;
  double learning_rate = 1e-4;
  int batch_size = 4;
  double lambda_bce = 1.0;
  double lambda_dice = 1.0;
  std::uint64_t seed = 0;
  int rank = 4;
  double alpha = 4.0;

  /// Throws ConfigError.
  void validate() const;
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double mean_loss = 0;
  double val_miou = 0;  // percent
};

struct TrainRecord {
  std::vector<EpochStats> epochs;
  double wall_seconds = 0;
  std::string checkpoint_id;  // set by whoever writes the checkpoint
  bool loss_monotone = true;  // reported, not enforced
};

/// λ_bce·BCE-with-logits + λ_dice·(1 − soft Dice), Dice smoothed by 1.
double seg_loss(const MaskLogits& logits, const BinaryMask& gt, double lambda_bce, double lambda_dice);

/// Per-frame mIoU (percent) of the segmenter on samples, prompting each with
/// the box of its ground truth.
double evaluate_miou(const SegmenterModel& model, const std::vector<TrainSample>& samples);

/// Runs exactly cfg.epochs passes over train with Adam, one GT-derived box
/// per image. Only parameters the policy marks trainable move. Throws
/// DataError for empty data and NumericError on a non-finite loss. The
/// validation mIoU per epoch is measured on val (train when val is empty).
/// on_epoch, when set, is called after every epoch.
TrainRecord fine_tune(SegmenterModel& model, const std::vector<TrainSample>& train, const FreezePolicy& policy,
                      const TrainConfig& cfg, const std::vector<TrainSample>& val = {},
                      const std::function<void(const EpochStats&)>& on_epoch = {});

/// Writes one JSON object per epoch to lines and a summary object.
void write_train_log(const TrainRecord& record, const std::string& jsonl_path, const std::string& summary_path);

struct GradCheckReport {
  double max_rel_error = 0;
  double max_abs_error = 0;
  std::size_t checked = 0;
  /// Largest analytic |gradient| per adapter target.
  std::map<std::string, double> max_grad;
};

/// Loss as a function of the bound parameters and adapters.
using LossFn = std::function<Var(Bindings&)>;

/// Compares analytic gradients of every A and B entry of every adapter with
/// central differences of the given step. Relative error is
/// |a − n| / max(|a|, |n|, 1e-6).
GradCheckReport grad_check(const ParamStore& params, AdapterSet& adapters, const LossFn& loss, double step = 1e-5);

}  // namespace surgtrack
