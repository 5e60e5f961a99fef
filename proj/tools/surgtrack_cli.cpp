// surgtrack command-line front end.
#include "surgtrack/checkpoint.hpp"
#include "surgtrack/datasets.hpp"
#include "surgtrack/error.hpp"
#include "surgtrack/finetune.hpp"
#include "surgtrack/memtrack.hpp"
#include "surgtrack/metrics.hpp"
#include "surgtrack/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace surgtrack;

namespace {

constexpr const char* kCkptDirEnv = "SURGTRACK_CKPT_DIR";

// Relative checkpoint paths live under $SURGTRACK_CKPT_DIR when it is set.
std::string ckpt_path(const std::string& p) {
  const char* dir = std::getenv(kCkptDirEnv);
  if (dir == nullptr || *dir == '\0' || fs::path(p).is_absolute()) return p;
  return (fs::path(dir) / p).string();
}

void ensure_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

std::vector<VideoSequence> load_data(const std::string& data, bool require_masks) {
  if (fs::is_regular_file(data)) return load_dataset(load_manifest(data));
  if (fs::is_directory(fs::path(data) / "images")) return {load_sequence(data, require_masks)};
  DatasetManifest m;
  m.root = data;
  m.require_masks = require_masks;
  return load_dataset(m);
}

void write_text(const std::string& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path);
  os << text;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// "--box x0,y0,x1,y1" applies to every seed frame; "--box F:x0,y0,x1,y1" to frame F only.
void parse_boxes(const std::vector<std::string>& specs, const std::vector<int>& seeds, std::map<int, BoxPrompt>& out) {
  for (const auto& spec : specs) {
    const auto colon = spec.find(':');
    if (colon == std::string::npos) {
      const BoxPrompt box = parse_box(spec);
      for (int f : seeds) out[f] = box;
    } else {
      int frame = 0;
      try {
        frame = std::stoi(spec.substr(0, colon));
      } catch (const std::exception&) {
        throw UsageError("bad frame index in --box '" + spec + "'");
      }
      out[frame] = parse_box(spec.substr(colon + 1));
    }
  }
}

struct SynthArgs {
  std::uint64_t seed = 0;
  int frames = 60;
  int sequences = 1;
  int size = 64;
  bool static_scene = false;
  std::string out;
};

int run_synth(const SynthArgs& a) {
  if (a.frames < 1) throw UsageError("--frames must be >= 1");
  if (a.sequences < 1) throw UsageError("--sequences must be >= 1");
  MotionSpec motion;
  motion.static_scene = a.static_scene;
  for (const auto& seq : synth_suite(a.seed, a.sequences, a.frames, a.size, motion)) {
    write_sequence(seq, (fs::path(a.out) / seq.id).string());
  }
  std::cout << "wrote " << a.sequences << " sequence(s) x " << a.frames << " frames to " << a.out << '\n';
  return 0;
}

struct FinetuneArgs {
  std::string data, val, out;
  int rank = 4;
  double alpha = -1;  // <0: alpha = rank
  int epochs = 10;
  int batch = 4;
  double lr = 1e-4;
  std::uint64_t seed = 0;
  std::uint64_t model_seed = 0;
  std::string targets = "q,v";
  std::string init;
};

int run_finetune(const FinetuneArgs& a) {
  TrainConfig cfg;
  cfg.epochs = a.epochs;
  cfg.learning_rate = a.lr;
  cfg.batch_size = a.batch;
  cfg.seed = a.seed;
  cfg.rank = a.rank;
  cfg.alpha = a.alpha < 0 ? a.rank : a.alpha;
  cfg.validate();

  const auto train = to_samples(load_data(a.data, true));
  std::vector<TrainSample> val;
  if (!a.val.empty()) val = to_samples(load_data(a.val, true));

  SegmenterModel model = a.init.empty() ? SegmenterModel::create(ViTConfig::desk(), DecoderConfig{}, a.model_seed)
                                        : load_segmenter(ckpt_path(a.init));
  LoraConfig lora;
  lora.targets = split_list(a.targets);
  lora.rank = cfg.rank;
  lora.alpha = cfg.alpha;
  if (model.adapters.empty()) model.inject_adapters(lora, a.seed);

  TrainRecord record = fine_tune(model, train, FreezePolicy::segmenter_default(), cfg, val, [](const EpochStats& s) {
    std::cout << "epoch " << s.epoch << " loss " << s.mean_loss << " val_mIoU " << format_percent(s.val_miou) << '\n';
  });
  const std::string out = ckpt_path(a.out);
  ensure_parent(out);
  save_segmenter(model, out);
  record.checkpoint_id = checkpoint_id(out);
  write_train_log(record, out + ".log.jsonl", out + ".summary.json");
  std::cout << "checkpoint " << out << " id " << record.checkpoint_id << '\n';
  return 0;
}

struct TrainTrackerArgs {
  std::string data, out;
  int iterations = 1500;
  double lr = 4e-3;
  std::uint64_t seed = 0;
  int k_aff = 32;
};

int run_train_tracker(const TrainTrackerArgs& a) {
  const auto seqs = load_data(a.data, true);
  if (seqs.empty()) throw DataError("no sequences in " + a.data);
  TrackerConfig tc;
  tc.image_size = seqs.front().frames.front().height;
  TrackerModel model = TrackerModel::create(tc, a.seed);
  TrackerTrainConfig cfg;
  cfg.iterations = a.iterations;
  cfg.learning_rate = a.lr;
  cfg.seed = a.seed;
  cfg.k_aff = a.k_aff;
  const auto losses = train_tracker(model, seqs, cfg);
  const std::string out = ckpt_path(a.out);
  ensure_parent(out);
  save_tracker(model, out);
  std::ofstream log(out + ".log.jsonl");
  for (size_t i = 0; i < losses.size(); ++i) log << nlohmann::json{{"iteration", i + 1}, {"loss", losses[i]}}.dump() << '\n';
  std::cout << "checkpoint " << out << " id " << checkpoint_id(out) << '\n';
  return 0;
}

struct TrackArgs {
  std::string video, ckpt_seg, ckpt_track, out, prompt = "gt-box";
  int seed_k = 1;
  std::vector<int> seed_frames;
  std::vector<std::string> boxes;
  BankConfig bank;
  std::string dataset, model = "Fine-tuned SAM & XMem++";
};

int run_track(const TrackArgs& a) {
  const VideoSequence video = load_sequence(a.video, false);
  PipelineConfig cfg;
  cfg.seed_k = a.seed_k;
  cfg.seed_frames = a.seed_frames;
  cfg.bank = a.bank;
  cfg.dataset_label = a.dataset;
  cfg.model_label = a.model;
  if (a.prompt == "user-box") {
    cfg.prompt_source = PromptSource::kUserBox;
  } else if (a.prompt != "gt-box") {
    throw UsageError("--prompt must be gt-box or user-box");
  }
  const auto seeds = cfg.resolve_seeds(video.size());
  // User boxes name frames by position in the sequence.
  parse_boxes(a.boxes, seeds, cfg.user_boxes);

  const SegmenterModel seg = load_segmenter(ckpt_path(a.ckpt_seg));
  const TrackerModel trk = load_tracker(ckpt_path(a.ckpt_track));
  PipelineResult result = run_pipeline(video, seg, trk, cfg);

  std::map<int, BinaryMask> by_number;
  for (int i = 0; i < video.size(); ++i) by_number.emplace(video.frame_numbers[static_cast<size_t>(i)], result.masks[static_cast<size_t>(i)]);
  write_mask_dir(by_number, a.out);
  std::cout << "wrote " << by_number.size() << " masks to " << a.out << '\n';
  if (result.report) {
    const std::string path = (fs::path(a.out) / "report.json").string();
    save_report(*result.report, path);
    std::cout << "mIoU " << format_percent(result.report->miou) << " mAcc " << format_percent(result.report->macc)
              << " mDice " << format_percent(result.report->mdice) << '\n';
  }
  return 0;
}

struct EvalArgs {
  std::string pred, gt, out, dataset, model;
  bool pixel_acc = false;
  bool pooled = false;
};

int run_eval(const EvalArgs& a) {
  const auto pred = load_mask_dir(a.pred);
  const auto gt = load_mask_dir(a.gt);
  std::vector<FrameScore> scores;
  for (const auto& [number, g] : gt) {
    auto it = pred.find(number);
    if (it == pred.end()) throw DataError("no prediction for frame " + std::to_string(number) + " in " + a.pred);
    scores.push_back(frame_score(it->second, g, number, a.pixel_acc ? AccuracyMode::kPixel : AccuracyMode::kMeanClassRecall));
  }
  const SegReport report = aggregate(scores, a.dataset, a.model, a.pooled ? AggregateMode::kPooled : AggregateMode::kPerFrame,
                                     a.pixel_acc ? AccuracyMode::kPixel : AccuracyMode::kMeanClassRecall);
  ensure_parent(a.out);
  save_report(report, a.out);
  const std::string table = render_table(std::span(&report, 1));
  write_text(fs::path(a.out).replace_extension(".txt").string(), table);
  std::cout << table;
  return 0;
}

struct ReportArgs {
  std::string inputs, style = "auto", out;
};

int run_report(const ReportArgs& a) {
  TableStyle style = TableStyle::kAuto;
  if (a.style == "dataset") {
    style = TableStyle::kDatasetModel;
  } else if (a.style == "model") {
    style = TableStyle::kModel;
  } else if (a.style != "auto") {
    throw UsageError("--style must be auto, dataset or model");
  }
  std::vector<SegReport> reports;
  for (const auto& p : split_list(a.inputs)) reports.push_back(load_report(p));
  if (reports.empty()) throw UsageError("--inputs names no reports");
  const std::string table = render_table(reports, style);
  if (!a.out.empty()) write_text(a.out, table);
  std::cout << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Surgical instrument segmentation and tracking"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate synthetic surgical-like videos with ground truth");
  c_synth->add_option("--seed", synth.seed);
  c_synth->add_option("--frames", synth.frames);
  c_synth->add_option("--sequences", synth.sequences);
  c_synth->add_option("--size", synth.size);
  c_synth->add_flag("--static", synth.static_scene, "Every frame identical to the first");
  c_synth->add_option("--out", synth.out)->required();

  FinetuneArgs ft;
  auto* c_ft = app.add_subcommand("finetune", "LoRA fine-tune the promptable segmenter");
  c_ft->add_option("--data", ft.data, "Dataset root, sequence directory or manifest")->required();
  c_ft->add_option("--val", ft.val);
  c_ft->add_option("--rank", ft.rank);
  c_ft->add_option("--alpha", ft.alpha, "Defaults to the rank");
  c_ft->add_option("--epochs", ft.epochs);
  c_ft->add_option("--batch", ft.batch);
  c_ft->add_option("--lr", ft.lr);
  c_ft->add_option("--seed", ft.seed);
  c_ft->add_option("--model-seed", ft.model_seed, "Seed of the frozen base weights");
  c_ft->add_option("--targets", ft.targets, "Comma list of q,k,v,out,mlp");
  c_ft->add_option("--init", ft.init, "Start from this segmenter checkpoint");
  c_ft->add_option("--out", ft.out)->required();

  TrainTrackerArgs tt;
  auto* c_tt = app.add_subcommand("train-tracker", "Train the memory tracker on videos with ground truth");
  c_tt->add_option("--data", tt.data)->required();
  c_tt->add_option("--iterations", tt.iterations);
  c_tt->add_option("--lr", tt.lr);
  c_tt->add_option("--seed", tt.seed);
  c_tt->add_option("--k-aff", tt.k_aff);
  c_tt->add_option("--out", tt.out)->required();

  TrackArgs tr;
  auto* c_tr = app.add_subcommand("track", "Segment seed frames and track the rest of a video");
  c_tr->add_option("--video", tr.video)->required();
  c_tr->add_option("--ckpt-seg", tr.ckpt_seg)->required();
  c_tr->add_option("--ckpt-track", tr.ckpt_track)->required();
  c_tr->add_option("--seed-k", tr.seed_k);
  c_tr->add_option("--seed-frames", tr.seed_frames)->delimiter(',');
  c_tr->add_option("--prompt", tr.prompt, "gt-box or user-box");
  c_tr->add_option("--box", tr.boxes, "x0,y0,x1,y1 or FRAME:x0,y0,x1,y1");
  c_tr->add_option("--r-mem", tr.bank.r_mem);
  c_tr->add_option("--capacity", tr.bank.capacity);
  c_tr->add_option("--k-aff", tr.bank.k_aff);
  c_tr->add_option("--dataset", tr.dataset);
  c_tr->add_option("--model", tr.model);
  c_tr->add_option("--out", tr.out)->required();

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Score predicted masks against ground truth");
  c_ev->add_option("--pred", ev.pred)->required();
  c_ev->add_option("--gt", ev.gt)->required();
  c_ev->add_option("--dataset", ev.dataset);
  c_ev->add_option("--model", ev.model);
  c_ev->add_flag("--pixel-acc", ev.pixel_acc, "Plain pixel accuracy instead of mean class recall");
  c_ev->add_flag("--pooled", ev.pooled, "Ratios of summed counts instead of per-frame means");
  c_ev->add_option("--out", ev.out)->required();

  ReportArgs rp;
  auto* c_rp = app.add_subcommand("report", "Render reports as a comparison table");
  c_rp->add_option("--inputs", rp.inputs)->required();
  c_rp->add_option("--style", rp.style, "auto, dataset or model");
  c_rp->add_option("--out", rp.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "ERROR usage: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*c_synth) return run_synth(synth);
    if (*c_ft) return run_finetune(ft);
    if (*c_tt) return run_train_tracker(tt);
    if (*c_tr) return run_track(tr);
    if (*c_ev) return run_eval(ev);
    if (*c_rp) return run_report(rp);
  } catch (const Error& e) {
    std::cerr << "ERROR " << e.tag() << ": " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "ERROR data: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
