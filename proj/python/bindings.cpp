// Python bindings: numpy in, numpy out.
#include "surgtrack/checkpoint.hpp"
#include "surgtrack/datasets.hpp"
#include "surgtrack/error.hpp"
#include "surgtrack/finetune.hpp"
#include "surgtrack/lora.hpp"
#include "surgtrack/memtrack.hpp"
#include "surgtrack/metrics.hpp"
#include "surgtrack/pipeline.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace surgtrack;

namespace {

using FloatArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

ImageTensor to_image(const FloatArray& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw ShapeError("image must be an (H, W, 3) array");
  ImageTensor img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), img.pixels.data());
  return img;
}

BinaryMask to_mask(const ByteArray& a) {
  if (a.ndim() != 2) throw ShapeError("mask must be an (H, W) array");
  BinaryMask m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  for (py::ssize_t i = 0; i < a.size(); ++i) m.data[static_cast<size_t>(i)] = a.data()[i] != 0;
  return m;
}

py::array_t<std::uint8_t> from_mask(const BinaryMask& m) {
  py::array_t<std::uint8_t> out({m.height, m.width});
  std::copy(m.data.begin(), m.data.end(), out.mutable_data());
  return out;
}

py::array_t<double> stack_frames(const std::vector<ImageTensor>& frames) {
  const int h = frames.empty() ? 0 : frames[0].height, w = frames.empty() ? 0 : frames[0].width;
  py::array_t<double> out({static_cast<int>(frames.size()), h, w, 3});
  double* p = out.mutable_data();
  for (const auto& f : frames) p = std::copy(f.pixels.data(), f.pixels.data() + f.pixels.size(), p);
  return out;
}

py::array_t<std::uint8_t> stack_masks(const std::vector<BinaryMask>& masks) {
  const int h = masks.empty() ? 0 : masks[0].height, w = masks.empty() ? 0 : masks[0].width;
  py::array_t<std::uint8_t> out({static_cast<int>(masks.size()), h, w});
  std::uint8_t* p = out.mutable_data();
  for (const auto& m : masks) p = std::copy(m.data.begin(), m.data.end(), p);
  return out;
}

// (N, H, W, 3) frames plus optional (N, H, W) masks.
VideoSequence to_video(const FloatArray& frames, const std::optional<ByteArray>& masks) {
  if (frames.ndim() != 4 || frames.shape(3) != 3) throw ShapeError("frames must be an (N, H, W, 3) array");
  VideoSequence v;
  v.id = "python";
  const auto n = frames.shape(0), h = frames.shape(1), w = frames.shape(2);
  for (py::ssize_t i = 0; i < n; ++i) {
    ImageTensor img(static_cast<int>(h), static_cast<int>(w));
    std::copy(frames.data(i), frames.data(i) + h * w * 3, img.pixels.data());
    v.frames.push_back(std::move(img));
    v.frame_numbers.push_back(static_cast<int>(i));
  }
  if (masks) {
    if (masks->ndim() != 3 || masks->shape(0) != n) throw ShapeError("masks must be an (N, H, W) array matching frames");
    const auto mh = masks->shape(1), mw = masks->shape(2);
    for (py::ssize_t i = 0; i < n; ++i) {
      BinaryMask m(static_cast<int>(mh), static_cast<int>(mw));
      for (py::ssize_t j = 0; j < mh * mw; ++j) m.data[static_cast<size_t>(j)] = masks->data(i)[j] != 0;
      v.masks.push_back(std::move(m));
    }
  }
  v.validate();
  return v;
}

py::dict video_dict(const VideoSequence& v) {
  py::dict d;
  d["id"] = v.id;
  d["frames"] = stack_frames(v.frames);
  d["masks"] = stack_masks(v.masks);
  d["frame_numbers"] = v.frame_numbers;
  return d;
}

py::dict score_dict(const FrameScore& s) {
  py::dict d;
  d["frame_index"] = s.frame_index;
  d["iou"] = s.iou;
  d["dice"] = s.dice;
  d["acc"] = s.acc;
  d["tp"] = s.tp;
  d["fp"] = s.fp;
  d["fn"] = s.fn;
  d["tn"] = s.tn;
  return d;
}

py::object report_obj(const SegReport& r) { return py::module_::import("json").attr("loads")(to_json(r).dump()); }

SegReport report_from(const py::object& o) {
  const std::string text = py::str(py::module_::import("json").attr("dumps")(o));
  return report_from_json(nlohmann::json::parse(text));
}

BoxPrompt to_box(const std::array<int, 4>& b) { return {b[0], b[1], b[2], b[3]}; }
std::array<int, 4> from_box(const BoxPrompt& b) { return {b.x_min, b.y_min, b.x_max, b.y_max}; }

std::vector<TrainSample> samples_from(const FloatArray& images, const ByteArray& masks) {
  const VideoSequence v = to_video(images, masks);
  return to_samples({v});
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Prompted instrument segmentation with LoRA fine-tuning and memory-based video tracking";

  static PyObject* error_type = py::exception<Error>(m, "Error").release().ptr();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error_type)(std::string(e.tag()) + ": " + e.what());
      exc.attr("kind") = e.tag();
      exc.attr("exit_code") = e.exit_code();
      PyErr_SetObject(error_type, exc.ptr());
    }
  });

  // datasets
  m.def(
      "synth_video",
      [](std::uint64_t seed, int n_frames, int size, bool static_scene, int instruments) {
        MotionSpec motion;
        motion.static_scene = static_scene;
        motion.instruments = instruments;
        return video_dict(synth_video(seed, n_frames, size, motion));
      },
      py::arg("seed"), py::arg("n_frames"), py::arg("size") = 64, py::arg("static_scene") = false, py::arg("instruments") = 0,
      "Seeded synthetic video as a dict of frames (N,H,W,3), masks (N,H,W) and frame numbers.");
  m.def(
      "load_sequence", [](const std::string& dir, bool require_masks) { return video_dict(load_sequence(dir, require_masks)); },
      py::arg("dir"), py::arg("require_masks") = false);
  m.def(
      "write_sequence",
      [](const FloatArray& frames, const std::optional<ByteArray>& masks, const std::string& dir) {
        write_sequence(to_video(frames, masks), dir);
      },
      py::arg("frames"), py::arg("masks"), py::arg("dir"));

  // prompts and metrics
  m.def("bbox_from_mask", [](const ByteArray& mask) { return from_box(bbox_from_mask(to_mask(mask))); }, py::arg("mask"));
  m.def(
      "frame_score",
      [](const ByteArray& pred, const ByteArray& gt, bool pixel_acc) {
        return score_dict(frame_score(to_mask(pred), to_mask(gt), 0, pixel_acc ? AccuracyMode::kPixel : AccuracyMode::kMeanClassRecall));
      },
      py::arg("pred"), py::arg("gt"), py::arg("pixel_acc") = false);
  m.def(
      "evaluate",
      [](const ByteArray& preds, const ByteArray& gts, const std::string& dataset, const std::string& model, bool pooled) {
        if (preds.ndim() != 3 || gts.ndim() != 3 || preds.shape(0) != gts.shape(0)) {
          throw ShapeError("preds and gts must be (N, H, W) arrays of equal N");
        }
        std::vector<FrameScore> scores;
        const auto h = gts.shape(1), w = gts.shape(2);
        for (py::ssize_t i = 0; i < gts.shape(0); ++i) {
          BinaryMask p(static_cast<int>(preds.shape(1)), static_cast<int>(preds.shape(2))), g(static_cast<int>(h), static_cast<int>(w));
          for (size_t j = 0; j < p.data.size(); ++j) p.data[j] = preds.data(i)[j] != 0;
          for (size_t j = 0; j < g.data.size(); ++j) g.data[j] = gts.data(i)[j] != 0;
          scores.push_back(frame_score(p, g, static_cast<int>(i)));
        }
        return report_obj(aggregate(scores, dataset, model, pooled ? AggregateMode::kPooled : AggregateMode::kPerFrame));
      },
      py::arg("preds"), py::arg("gts"), py::arg("dataset") = "", py::arg("model") = "", py::arg("pooled") = false,
      "Per-frame scores and mIoU/mAcc/mDice in percent, as a report dict.");
  m.def("format_percent", &format_percent, py::arg("value"));
  m.def(
      "render_table",
      [](const std::vector<py::object>& reports, const std::string& style) {
        std::vector<SegReport> rs;
        for (const auto& r : reports) rs.push_back(report_from(r));
        TableStyle s = TableStyle::kAuto;
        if (style == "dataset") s = TableStyle::kDatasetModel;
        else if (style == "model") s = TableStyle::kModel;
        else if (style != "auto") throw UsageError("style must be auto, dataset or model");
        return render_table(rs, s);
      },
      py::arg("reports"), py::arg("style") = "auto");

  // LoRA algebra on plain matrices
  m.def(
      "lora_merge",
      [](const Matrix& w0, const Matrix& a, const Matrix& b, double alpha) {
        LoraAdapter ad;
        ad.rank = static_cast<int>(a.rows());
        ad.alpha = alpha;
        ad.A = a;
        ad.B = b;
        return merge(w0, ad);
      },
      py::arg("w0"), py::arg("A"), py::arg("B"), py::arg("alpha"), "W0 + (alpha / r) B A");

  // memory read over one explicit bank
  m.def(
      "memory_read",
      [](const Matrix& query, const Matrix& keys, const Matrix& values, int k_aff) {
        MemoryBank bank(BankConfig{1, 1, k_aff});
        bank.add_permanent({keys, values, MemorySource::kPermanent, 0});
        return memory_read(query, bank, k_aff);
      },
      py::arg("query"), py::arg("keys"), py::arg("values"), py::arg("k_aff") = 0);

  py::class_<SegmenterModel>(m, "Segmenter")
      .def(py::init([](std::uint64_t seed) { return SegmenterModel::create(ViTConfig::desk(), DecoderConfig{}, seed); }),
           py::arg("seed") = 0, "Desk-scale promptable segmenter with seeded frozen weights.")
      .def_static("load", [](const std::string& path) { return load_segmenter(path); }, py::arg("path"))
      .def("save", [](const SegmenterModel& s, const std::string& path) { save_segmenter(s, path); return checkpoint_id(path); },
           py::arg("path"), "Writes a checkpoint and returns its id.")
      .def(
          "inject_adapters",
          [](SegmenterModel& s, int rank, std::optional<double> alpha, const std::vector<std::string>& targets, std::uint64_t seed) {
            LoraConfig lora;
            lora.rank = rank;
            lora.alpha = alpha.value_or(rank);
            lora.targets = targets;
            s.inject_adapters(lora, seed);
          },
          py::arg("rank") = 4, py::arg("alpha") = py::none(), py::arg("targets") = std::vector<std::string>{"q", "v"},
          py::arg("seed") = 0)
      .def("predict",
           [](const SegmenterModel& s, const FloatArray& image, const std::array<int, 4>& box) {
             return from_mask(s.predict(to_image(image), to_box(box)));
           },
           py::arg("image"), py::arg("box"), "Binary mask for an (x_min, y_min, x_max, y_max) box.")
      .def("predict_logits",
           [](const SegmenterModel& s, const FloatArray& image, const std::array<int, 4>& box) {
             return Matrix(s.predict_logits(to_image(image), to_box(box)).values);
           },
           py::arg("image"), py::arg("box"))
      .def(
          "fine_tune",
          [](SegmenterModel& s, const FloatArray& images, const ByteArray& masks, int epochs, double lr, int batch,
             std::uint64_t seed) {
            TrainConfig cfg;
            cfg.epochs = epochs;
            cfg.learning_rate = lr;
            cfg.batch_size = batch;
            cfg.seed = seed;
            cfg.rank = s.lora.rank;
            cfg.alpha = s.lora.alpha;
            const TrainRecord rec = fine_tune(s, samples_from(images, masks), FreezePolicy::segmenter_default(), cfg);
            std::vector<double> losses;
            for (const auto& e : rec.epochs) losses.push_back(e.mean_loss);
            return losses;
          },
          py::arg("images"), py::arg("masks"), py::arg("epochs") = 10, py::arg("lr") = 1e-4, py::arg("batch") = 4,
          py::arg("seed") = 0, "Trains adapters and decoder; returns the mean loss of each epoch.")
      .def("evaluate",
           [](const SegmenterModel& s, const FloatArray& images, const ByteArray& masks) {
             return evaluate_miou(s, samples_from(images, masks));
           },
           py::arg("images"), py::arg("masks"), "GT-box prompted mIoU in percent over frames with foreground.")
      .def("trainable_count",
           [](const SegmenterModel& s) {
             const ParamCount c = trainable_count(s.params, s.adapters, FreezePolicy::segmenter_default());
             py::dict d;
             d["adapter"] = c.adapter;
             d["other_trainable"] = c.other_trainable;
             d["trainable"] = c.trainable;
             d["frozen"] = c.frozen;
             d["fraction"] = c.fraction;
             return d;
           })
      .def_property_readonly("adapter_targets", [](const SegmenterModel& s) {
        std::vector<std::string> out;
        for (const auto& [t, a] : s.adapters) out.push_back(t);
        return out;
      });

  py::class_<TrackerModel>(m, "Tracker")
      .def(py::init([](std::uint64_t seed, int image_size) {
             TrackerConfig cfg;
             cfg.image_size = image_size;
             return TrackerModel::create(cfg, seed);
           }),
           py::arg("seed") = 0, py::arg("image_size") = 64)
      .def_static("load", [](const std::string& path) { return load_tracker(path); }, py::arg("path"))
      .def("save", [](const TrackerModel& t, const std::string& path) { save_tracker(t, path); return checkpoint_id(path); },
           py::arg("path"))
      .def(
          "train",
          [](TrackerModel& t, const std::vector<FloatArray>& frames, const std::vector<ByteArray>& masks, int iterations,
             double lr, std::uint64_t seed) {
            if (frames.size() != masks.size()) throw ShapeError("need one mask stack per frame stack");
            std::vector<VideoSequence> videos;
            for (size_t i = 0; i < frames.size(); ++i) videos.push_back(to_video(frames[i], masks[i]));
            TrackerTrainConfig cfg;
            cfg.iterations = iterations;
            cfg.learning_rate = lr;
            cfg.seed = seed;
            return train_tracker(t, videos, cfg);
          },
          py::arg("frames"), py::arg("masks"), py::arg("iterations") = 1500, py::arg("lr") = 4e-3, py::arg("seed") = 0,
          "Trains on lists of (N,H,W,3) frame stacks and (N,H,W) mask stacks; returns per-iteration losses.")
      .def(
          "propagate",
          [](const TrackerModel& t, const FloatArray& frames, const std::map<int, ByteArray>& seeds, int r_mem, int capacity,
             int k_aff) {
            const VideoSequence v = to_video(frames, std::nullopt);
            std::map<int, BinaryMask> s;
            for (const auto& [f, mask] : seeds) s.emplace(f, to_mask(mask));
            return stack_masks(propagate(v, s, t, BankConfig{r_mem, capacity, k_aff}));
          },
          py::arg("frames"), py::arg("seeds"), py::arg("r_mem") = 5, py::arg("capacity") = 16, py::arg("k_aff") = 32,
          "Masks for every frame given {frame index: mask} seeds.");

  m.def(
      "run_pipeline",
      [](const FloatArray& frames, const std::optional<ByteArray>& masks, const SegmenterModel& seg, const TrackerModel& trk,
         int seed_k, const std::map<int, std::array<int, 4>>& boxes, const std::string& dataset, const std::string& model) {
        const VideoSequence v = to_video(frames, masks);
        PipelineConfig cfg;
        cfg.seed_k = seed_k;
        cfg.dataset_label = dataset;
        cfg.model_label = model;
        if (!masks) cfg.prompt_source = PromptSource::kUserBox;
        for (const auto& [f, b] : boxes) cfg.user_boxes[f] = to_box(b);
        const PipelineResult r = run_pipeline(v, seg, trk, cfg);
        py::dict d;
        d["masks"] = stack_masks(r.masks);
        d["seed_frames"] = r.seed_frames;
        d["report"] = r.report ? report_obj(*r.report) : py::none();
        return d;
      },
      py::arg("frames"), py::arg("masks") = py::none(), py::arg("segmenter"), py::arg("tracker"), py::arg("seed_k") = 1,
      py::arg("boxes") = std::map<int, std::array<int, 4>>{}, py::arg("dataset") = "", py::arg("model") = "",
      "Segments the first seed_k frames from GT boxes (or the given boxes) and tracks the rest.");
}
