#include "surgtrack/finetune.hpp"

#include "surgtrack/error.hpp"
#include "surgtrack/metrics.hpp"
#include "surgtrack/optim.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace surgtrack {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (learning_rate < 0 || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be finite and >= 0");
  if (lambda_bce < 0 || lambda_dice < 0 || (lambda_bce == 0 && lambda_dice == 0)) {
    throw ConfigError("loss weights must be >= 0 and not both zero");
  }
  if (rank < 1) throw ConfigError("LoRA rank must be >= 1");
}

double seg_loss(const MaskLogits& logits, const BinaryMask& gt, double lambda_bce, double lambda_dice) {
  if (logits.height != gt.height || logits.width != gt.width) throw ShapeError("seg_loss: logits and mask dims differ");
  Graph g(false);
  Var z = g.constant(Eigen::Map<const Matrix>(logits.values.data(), logits.values.size(), 1));
  return g.value(g.seg_loss(z, gt.data, lambda_bce, lambda_dice))(0, 0);
}

double evaluate_miou(const SegmenterModel& model, const std::vector<TrainSample>& samples) {
  if (samples.empty()) throw DataError("evaluate_miou: no samples");
  std::vector<FrameScore> scores;
  scores.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    scores.push_back(frame_score(model.predict(s.image, bbox_from_mask(s.mask)), s.mask, static_cast<int>(i)));
  }
  return aggregate(scores).miou;
}

TrainRecord fine_tune(SegmenterModel& model, const std::vector<TrainSample>& train, const FreezePolicy& policy,
                      const TrainConfig& cfg, const std::vector<TrainSample>& val,
                      const std::function<void(const EpochStats&)>& on_epoch) {
  cfg.validate();
  if (train.empty()) throw DataError("fine_tune: training set is empty");
  const auto start = std::chrono::steady_clock::now();
  const bool adapters_trainable = model.apply_policy(policy);

  // Trainable tensors by graph name.
  std::map<std::string, Matrix*> slots;
  for (auto& [name, p] : model.params) {
    if (p.trainable) slots.emplace(name, &p.value);
  }
  if (adapters_trainable) {
    for (auto& [target, a] : model.adapters) {
      slots.emplace(a.a_name(), &a.A);
      slots.emplace(a.b_name(), &a.B);
    }
  }

  std::vector<BoxPrompt> boxes;
  boxes.reserve(train.size());
  for (const auto& s : train) boxes.push_back(bbox_from_mask(s.mask));

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Adam opt(cfg.learning_rate);
  TrainRecord record;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      std::map<std::string, Matrix> grads;
      for (std::size_t k = begin; k < end; ++k) {
        const std::size_t idx = order[k];
        Graph g;
        Bindings b(g, model.params, &model.adapters, adapters_trainable);
        Var logits = model.forward(b, train[idx].image, boxes[idx]);
        Var loss = g.seg_loss(logits, train[idx].mask.data, cfg.lambda_bce, cfg.lambda_dice);
        const double lv = g.value(loss)(0, 0);
        if (!std::isfinite(lv)) {
          throw NumericError("fine_tune: non-finite loss in epoch " + std::to_string(epoch) + " on sample " +
                             std::to_string(idx));
        }
        loss_sum += lv;
        g.backward(loss);
        for (const auto& [name, var] : b.bound()) {
          if (!slots.count(name)) continue;
          auto it = grads.find(name);
          if (it == grads.end()) {
            grads.emplace(name, g.grad(var));
          } else {
            it->second += g.grad(var);
          }
        }
      }
      const double inv = 1.0 / static_cast<double>(end - begin);
      opt.begin_step();
      for (auto& [name, grad] : grads) {
        grad *= inv;
        if (!grad.allFinite()) throw NumericError("fine_tune: non-finite gradient for " + name);
        opt.update(name, *slots.at(name), grad);
      }
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = loss_sum / static_cast<double>(train.size());
    stats.val_miou = evaluate_miou(model, val.empty() ? train : val);
    if (!record.epochs.empty() && stats.mean_loss > record.epochs.back().mean_loss) record.loss_monotone = false;
    record.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return record;
}

void write_train_log(const TrainRecord& record, const std::string& jsonl_path, const std::string& summary_path) {
  std::ofstream log(jsonl_path);
  if (!log) throw DataError("cannot write " + jsonl_path);
  for (const auto& e : record.epochs) {
    log << nlohmann::json{{"epoch", e.epoch}, {"loss", e.mean_loss}, {"val_mIoU", e.val_miou}}.dump() << '\n';
  }
  std::ofstream sum(summary_path);
  if (!sum) throw DataError("cannot write " + summary_path);
  nlohmann::json j = {{"epochs", record.epochs.size()},
                      {"final_loss", record.epochs.empty() ? 0.0 : record.epochs.back().mean_loss},
                      {"final_val_mIoU", record.epochs.empty() ? 0.0 : record.epochs.back().val_miou},
                      {"loss_monotone", record.loss_monotone},
                      {"wall_seconds", record.wall_seconds},
                      {"checkpoint_id", record.checkpoint_id}};
  sum << j.dump(2) << '\n';
}

GradCheckReport grad_check(const ParamStore& params, AdapterSet& adapters, const LossFn& loss, double step) {
  GradCheckReport report;
  Graph g;
  Bindings b(g, params, &adapters, true);
  Var l = loss(b);
  g.backward(l);

  auto numeric_loss = [&] {
    Graph g2(false);
    Bindings b2(g2, params, &adapters, false);
    return g2.value(loss(b2))(0, 0);
  };

  for (auto& [target, a] : adapters) {
    double max_grad = 0;
    for (int which = 0; which < 2; ++which) {
      Matrix& factor = which == 0 ? a.A : a.B;
      const std::string name = which == 0 ? a.a_name() : a.b_name();
      auto it = b.bound().find(name);
      const Matrix analytic = it != b.bound().end() ? g.grad(it->second) : Matrix::Zero(factor.rows(), factor.cols());
      for (Eigen::Index i = 0; i < factor.size(); ++i) {
        double& entry = factor.data()[i];
        const double saved = entry;
        entry = saved + step;
        const double up = numeric_loss();
        entry = saved - step;
        const double down = numeric_loss();
        entry = saved;
        const double numeric = (up - down) / (2 * step);
        const double an = analytic.data()[i];
        const double abs_err = std::abs(an - numeric);
        const double rel_err = abs_err / std::max({std::abs(an), std::abs(numeric), 1e-6});
        report.max_abs_error = std::max(report.max_abs_error, abs_err);
        report.max_rel_error = std::max(report.max_rel_error, rel_err);
        max_grad = std::max(max_grad, std::abs(an));
        ++report.checked;
      }
    }
    report.max_grad[target] = max_grad;
  }
  return report;
}

}  // namespace surgtrack
