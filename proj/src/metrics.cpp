#include "surgtrack/metrics.hpp"

#include "surgtrack/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace surgtrack {

namespace {

struct Ratios {
  double iou, dice, acc;
};

Ratios ratios(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn, std::uint64_t tn, AccuracyMode mode) {
  const auto d = [](std::uint64_t v) { return static_cast<double>(v); };
  const std::uint64_t uni = tp + fp + fn;
  Ratios r{};
  r.iou = uni ? d(tp) / d(uni) : 1.0;
  r.dice = uni ? 2.0 * d(tp) / (2.0 * d(tp) + d(fp) + d(fn)) : 1.0;
  if (mode == AccuracyMode::kPixel) {
    const std::uint64_t total = tp + fp + fn + tn;
    r.acc = total ? d(tp + tn) / d(total) : 1.0;
  } else {
    const double fg = (tp + fn) ? d(tp) / d(tp + fn) : 1.0;
    const double bg = (tn + fp) ? d(tn) / d(tn + fp) : 1.0;
    r.acc = 0.5 * (fg + bg);
  }
  return r;
}

}  // namespace

FrameScore frame_score(const BinaryMask& pred, const BinaryMask& gt, int frame_index, AccuracyMode mode) {
  if (pred.height != gt.height || pred.width != gt.width || pred.data.size() != gt.data.size()) {
    throw ShapeError("prediction and ground truth dimensions differ");
  }
  FrameScore s;
  s.frame_index = frame_index;
  for (std::size_t i = 0; i < gt.data.size(); ++i) {
    const bool p = pred.data[i] != 0;
    const bool g = gt.data[i] != 0;
    if (p && g) ++s.tp;
    else if (p) ++s.fp;
    else if (g) ++s.fn;
    else ++s.tn;
  }
  const Ratios r = ratios(s.tp, s.fp, s.fn, s.tn, mode);
  s.iou = r.iou;
  s.dice = r.dice;
  s.acc = r.acc;
  return s;
}

SegReport aggregate(std::span<const FrameScore> scores, const std::string& dataset, const std::string& model,
                    AggregateMode mode, AccuracyMode acc_mode) {
  if (scores.empty()) throw DataError("cannot aggregate an empty score list");
  SegReport r;
  r.dataset = dataset;
  r.model = model;
  r.frames.assign(scores.begin(), scores.end());
  if (mode == AggregateMode::kPooled) {
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (const auto& s : scores) {
      tp += s.tp;
      fp += s.fp;
      fn += s.fn;
      tn += s.tn;
    }
    const Ratios p = ratios(tp, fp, fn, tn, acc_mode);
    r.miou = 100.0 * p.iou;
    r.mdice = 100.0 * p.dice;
    r.macc = 100.0 * p.acc;
    return r;
  }
  double iou = 0, dice = 0, acc = 0;
  for (const auto& s : scores) {
    iou += s.iou;
    dice += s.dice;
    acc += s.acc;
  }
  const double n = static_cast<double>(scores.size());
  r.miou = 100.0 * iou / n;
  r.mdice = 100.0 * dice / n;
  r.macc = 100.0 * acc / n;
  return r;
}

std::string format_percent(double value) {
  const double rounded = std::floor(value * 100.0 + 0.5) / 100.0;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", rounded);
  return buf;
}

nlohmann::json to_json(const SegReport& report) {
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : report.frames) {
    frames.push_back({{"frame", f.frame_index},
                      {"iou", f.iou},
                      {"dice", f.dice},
                      {"acc", f.acc},
                      {"tp", f.tp},
                      {"fp", f.fp},
                      {"fn", f.fn},
                      {"tn", f.tn}});
  }
  return {{"dataset", report.dataset}, {"model", report.model}, {"mIoU", report.miou},
          {"mAcc", report.macc},       {"mDice", report.mdice}, {"frames", frames}};
}

SegReport report_from_json(const nlohmann::json& j) {
  try {
    SegReport r;
    r.dataset = j.value("dataset", "");
    r.model = j.value("model", "");
    r.miou = j.at("mIoU").get<double>();
    r.macc = j.at("mAcc").get<double>();
    r.mdice = j.at("mDice").get<double>();
    if (j.contains("frames")) {
      for (const auto& f : j.at("frames")) {
        FrameScore s;
        s.frame_index = f.at("frame").get<int>();
        s.iou = f.at("iou").get<double>();
        s.dice = f.at("dice").get<double>();
        s.acc = f.at("acc").get<double>();
        s.tp = f.value("tp", std::uint64_t{0});
        s.fp = f.value("fp", std::uint64_t{0});
        s.fn = f.value("fn", std::uint64_t{0});
        s.tn = f.value("tn", std::uint64_t{0});
        r.frames.push_back(s);
      }
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
}

void save_report(const SegReport& report, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write report " + path);
  os << to_json(report).dump(2) << '\n';
}

SegReport load_report(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot read report " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed report " + path + ": " + e.what());
  }
  return report_from_json(j);
}

std::string render_table(std::span<const SegReport> reports, TableStyle style) {
  if (style == TableStyle::kAuto) {
    const bool any_dataset =
        std::any_of(reports.begin(), reports.end(), [](const SegReport& r) { return !r.dataset.empty(); });
    style = any_dataset ? TableStyle::kDatasetModel : TableStyle::kModel;
  }
  const bool with_dataset = style == TableStyle::kDatasetModel;

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header;
  if (with_dataset) header.push_back("Dataset");
  for (const char* h : {"Model", "mIoU", "mAcc", "mDice"}) header.push_back(h);
  rows.push_back(header);
  const std::string* prev_dataset = nullptr;
  for (const auto& r : reports) {
    std::vector<std::string> row;
    if (with_dataset) {
      row.push_back(prev_dataset && *prev_dataset == r.dataset ? "" : r.dataset);
      prev_dataset = &r.dataset;
    }
    row.push_back(r.model);
    row.push_back(format_percent(r.miou));
    row.push_back(format_percent(r.macc));
    row.push_back(format_percent(r.mdice));
    rows.push_back(std::move(row));
  }

  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream os;
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) os << " | ";
      os << row[c] << std::string(width[c] - row[c].size(), ' ');
    }
    os << '\n';
  };
  auto rule = [&] {
    for (std::size_t c = 0; c < width.size(); ++c) {
      if (c) os << "-+-";
      os << std::string(width[c], '-');
    }
    os << '\n';
  };
  emit(rows[0]);
  rule();
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (with_dataset && i > 1 && !rows[i][0].empty()) rule();
    emit(rows[i]);
  }
  return os.str();
}

}  // namespace surgtrack
