#include "surgtrack/datasets.hpp"

#include "surgtrack/error.hpp"
#include "surgtrack/png_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <regex>

namespace fs = std::filesystem;

namespace surgtrack {

namespace {

constexpr std::string_view kIndexToken = "{index}";

std::string frame_file_name(int number) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05d.png", number);
  return buf;
}

std::string regex_escape(const std::string& s) {
  static const std::regex special(R"([.^$|()\[\]{}*+?\\])");
  return std::regex_replace(s, special, R"(\$&)");
}

std::string substitute_index(const std::string& pattern, const std::string& digits) {
  std::string out = pattern;
  const auto pos = out.find(kIndexToken);
  if (pos == std::string::npos) throw ConfigError("pattern '" + pattern + "' has no {index} placeholder");
  out.replace(pos, kIndexToken.size(), digits);
  return out;
}

struct FrameFile {
  int number;
  std::string digits;
  fs::path path;
};

std::vector<FrameFile> list_frames(const fs::path& seq_dir, const std::string& pattern) {
  const fs::path rel(pattern);
  const std::string file_pattern = rel.filename().string();
  const fs::path dir = seq_dir / rel.parent_path();
  const auto pos = file_pattern.find(kIndexToken);
  if (pos == std::string::npos) throw ConfigError("frame pattern '" + pattern + "' must put {index} in the file name");
  const std::regex re(regex_escape(file_pattern.substr(0, pos)) + "([0-9]+)" +
                      regex_escape(file_pattern.substr(pos + kIndexToken.size())));
  if (!fs::is_directory(dir)) throw DataError("frame directory not found: " + dir.string());
  std::vector<FrameFile> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, re)) out.push_back({std::stoi(m[1].str()), m[1].str(), entry.path()});
  }
  std::sort(out.begin(), out.end(), [](const FrameFile& a, const FrameFile& b) { return a.number < b.number; });
  return out;
}

VideoSequence load_one(const fs::path& seq_dir, const std::string& id, const DatasetManifest& m) {
  VideoSequence seq;
  seq.id = id;
  const auto files = list_frames(seq_dir, m.frame_pattern);
  if (files.empty()) throw DataError("no frames matching '" + m.frame_pattern + "' in " + seq_dir.string());
  std::vector<BinaryMask> masks;
  bool any_mask = false;
  bool any_missing = false;
  for (const auto& f : files) {
    ImageTensor img = read_png_rgb(f.path.string());
    if (m.resize > 0) img = resize_image(img, m.resize);
    const fs::path mask_path = seq_dir / substitute_index(m.mask_pattern, f.digits);
    if (fs::exists(mask_path)) {
      BinaryMask mask = read_png_mask(mask_path.string());
      if (m.resize > 0) mask = resize_mask(mask, m.resize);
      if (mask.height != img.height || mask.width != img.width) {
        throw ShapeError("mask " + mask_path.string() + " does not match its frame dimensions (frame " +
                         std::to_string(f.number) + ")");
      }
      masks.push_back(std::move(mask));
      any_mask = true;
    } else {
      if (m.require_masks) {
        throw DataError("missing mask for frame " + std::to_string(f.number) + ": " + mask_path.string());
      }
      any_missing = true;
    }
    seq.frames.push_back(std::move(img));
    seq.frame_numbers.push_back(f.number);
  }
  if (any_mask && !any_missing) seq.masks = std::move(masks);
  seq.validate();
  return seq;
}

}  // namespace

void VideoSequence::validate() const {
  if (frames.empty()) return;
  for (const auto& f : frames) {
    if (f.height != frames[0].height || f.width != frames[0].width) {
      throw ShapeError("sequence " + id + " has frames of differing size");
    }
  }
  if (!masks.empty()) {
    if (masks.size() != frames.size()) throw ShapeError("sequence " + id + " has GT for only some frames");
    for (const auto& m : masks) {
      if (m.height != frames[0].height || m.width != frames[0].width) {
        throw ShapeError("sequence " + id + " has GT masks that do not match frame size");
      }
    }
  }
  if (!frame_numbers.empty() && frame_numbers.size() != frames.size()) {
    throw ShapeError("sequence " + id + " frame numbering does not cover every frame");
  }
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot read manifest " + path);
  nlohmann::json j;
  try {
    is >> j;
    DatasetManifest m;
    m.root = j.at("root").get<std::string>();
    m.split = j.value("split", m.split);
    m.sequences = j.value("sequences", m.sequences);
    m.frame_pattern = j.value("frame_pattern", m.frame_pattern);
    m.mask_pattern = j.value("mask_pattern", m.mask_pattern);
    m.require_masks = j.value("require_masks", m.require_masks);
    m.resize = j.value("resize", m.resize);
    if (fs::path(m.root).is_relative()) m.root = (fs::path(path).parent_path() / m.root).lexically_normal().string();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest " + path + ": " + e.what());
  }
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
  nlohmann::json j = {{"root", m.root},
                      {"split", m.split},
                      {"sequences", m.sequences},
                      {"frame_pattern", m.frame_pattern},
                      {"mask_pattern", m.mask_pattern},
                      {"require_masks", m.require_masks},
                      {"resize", m.resize}};
  std::ofstream os(path);
  if (!os) throw DataError("cannot write manifest " + path);
  os << j.dump(2) << '\n';
}

std::vector<VideoSequence> load_dataset(const DatasetManifest& manifest) {
  const fs::path root(manifest.root);
  if (!fs::is_directory(root)) throw DataError("dataset root not found: " + manifest.root);
  std::vector<std::string> ids = manifest.sequences;
  if (ids.empty()) {
    for (const auto& entry : fs::directory_iterator(root)) {
      if (entry.is_directory()) ids.push_back(entry.path().filename().string());
    }
    std::sort(ids.begin(), ids.end());
  }
  if (ids.empty()) throw DataError("no sequences under " + manifest.root);
  std::vector<VideoSequence> out;
  for (const auto& id : ids) {
    const fs::path dir = root / id;
    if (!fs::is_directory(dir)) throw DataError("sequence directory not found: " + dir.string());
    out.push_back(load_one(dir, id, manifest));
  }
  return out;
}

VideoSequence load_sequence(const std::string& dir, bool require_masks, int resize) {
  DatasetManifest m;
  m.require_masks = require_masks;
  m.resize = resize;
  return load_one(fs::path(dir), fs::path(dir).filename().string(), m);
}

std::map<int, BinaryMask> load_mask_dir(const std::string& dir) {
  const fs::path base(dir);
  const std::string rel = fs::is_directory(base / "masks") ? "masks/{index}.png" : "{index}.png";
  std::map<int, BinaryMask> out;
  for (const auto& f : list_frames(base, rel)) {
    if (!out.emplace(f.number, read_png_mask(f.path.string())).second) {
      throw DataError("frame " + std::to_string(f.number) + " appears twice in " + dir);
    }
  }
  if (out.empty()) throw DataError("no mask files in " + dir);
  return out;
}

void write_mask_dir(const std::map<int, BinaryMask>& masks, const std::string& dir) {
  fs::create_directories(dir);
  for (const auto& [number, mask] : masks) write_png_mask((fs::path(dir) / frame_file_name(number)).string(), mask);
}

void write_sequence(const VideoSequence& seq, const std::string& dir) {
  seq.validate();
  const fs::path base(dir);
  fs::create_directories(base / "images");
  if (seq.has_gt()) fs::create_directories(base / "masks");
  for (int i = 0; i < seq.size(); ++i) {
    const int number = seq.frame_numbers.empty() ? i : seq.frame_numbers[static_cast<size_t>(i)];
    const std::string name = frame_file_name(number);
    write_png_rgb((base / "images" / name).string(), seq.frames[static_cast<size_t>(i)]);
    if (seq.has_gt()) write_png_mask((base / "masks" / name).string(), seq.masks[static_cast<size_t>(i)]);
  }
}

ImageTensor resize_image(const ImageTensor& image, int size) {
  if (image.height == size && image.width == size) return image;
  ImageTensor out(size, size);
  for (int y = 0; y < size; ++y) {
    const double sy = std::clamp((y + 0.5) * image.height / size - 0.5, 0.0, image.height - 1.0);
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double ty = sy - y0;
    for (int x = 0; x < size; ++x) {
      const double sx = std::clamp((x + 0.5) * image.width / size - 0.5, 0.0, image.width - 1.0);
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double tx = sx - x0;
      for (int c = 0; c < 3; ++c) {
        out.at(y, x, c) = (1 - ty) * ((1 - tx) * image.at(y0, x0, c) + tx * image.at(y0, x1, c)) +
                          ty * ((1 - tx) * image.at(y1, x0, c) + tx * image.at(y1, x1, c));
      }
    }
  }
  return out;
}

BinaryMask resize_mask(const BinaryMask& mask, int size) {
  if (mask.height == size && mask.width == size) return mask;
  BinaryMask out(size, size);
  for (int y = 0; y < size; ++y) {
    const int sy = std::min(static_cast<int>((y + 0.5) * mask.height / size), mask.height - 1);
    for (int x = 0; x < size; ++x) {
      const int sx = std::min(static_cast<int>((x + 0.5) * mask.width / size), mask.width - 1);
      out.at(y, x) = mask.at(sy, sx);
    }
  }
  return out;
}

namespace {

struct Grating {
  double kx, ky, phase, amp;
};

struct Instrument {
  double ex, ey;          // entry point, slightly outside the border
  double theta0, theta_amp, theta_freq, theta_phase;
  double len0, len_amp, len_freq, len_phase;
  double half_width;
  double head_radius;
  double gray, tint;
};

struct Occluder {
  int start, duration;
  double x0, y0, vx, vy, rx, ry;
};

double quantize(double v) { return std::lround(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

double segment_distance(double px, double py, double ax, double ay, double bx, double by, double& along) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  along = len2 > 0 ? std::clamp(((px - ax) * dx + (py - ay) * dy) / len2, 0.0, 1.0) : 0.0;
  const double cx = ax + along * dx - px, cy = ay + along * dy - py;
  return std::sqrt(cx * cx + cy * cy);
}

}  // namespace

VideoSequence synth_video(std::uint64_t seed, int n_frames, int size, const MotionSpec& motion) {
  if (n_frames < 1) throw ConfigError("synth_video needs at least one frame");
  if (size < 8) throw ConfigError("synth_video needs frames of at least 8x8");
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  const double s = size;
  constexpr double kPi = std::numbers::pi;

  // Tissue: reddish base modulated by a few drifting gratings.
  const double base_r = uni(0.68, 0.8), base_g = uni(0.22, 0.3), base_b = uni(0.22, 0.3);
  std::vector<Grating> gratings;
  for (int i = 0; i < 5; ++i) {
    const double freq = uni(1.5, 6.0) * 2.0 * kPi / s;
    const double dir = uni(0, 2 * kPi);
    gratings.push_back({freq * std::cos(dir), freq * std::sin(dir), uni(0, 2 * kPi), uni(0.02, 0.05)});
  }
  const double drift_dir = uni(0, 2 * kPi);
  const double drift_vx = motion.background_drift * std::cos(drift_dir);
  const double drift_vy = motion.background_drift * std::sin(drift_dir);

  const int n_inst = motion.instruments > 0 ? motion.instruments : (uni(0, 1) < 0.5 ? 1 : 2);
  std::vector<Instrument> insts;
  for (int i = 0; i < n_inst; ++i) {
    Instrument in{};
    // Entry on the left/right/bottom border, aimed roughly at the center.
    const int side = static_cast<int>(uni(0, 3)) + (i == 1 ? 1 : 0);
    const double along = uni(0.2, 0.8) * s;
    switch (side % 3) {
      case 0: in.ex = -2; in.ey = along; break;
      case 1: in.ex = s + 2; in.ey = along; break;
      default: in.ex = along; in.ey = s + 2; break;
    }
    in.theta0 = std::atan2(s / 2 - in.ey, s / 2 - in.ex) + uni(-0.35, 0.35);
    in.theta_amp = uni(0.1, 0.35);
    in.theta_freq = uni(0.03, 0.08) * motion.speed;
    in.theta_phase = uni(0, 2 * kPi);
    in.len0 = uni(0.5, 0.62) * s;
    in.len_amp = uni(0.05, 0.12) * s;
    in.len_freq = uni(0.03, 0.07) * motion.speed;
    in.len_phase = uni(0, 2 * kPi);
    in.half_width = uni(0.055, 0.075) * s;
    in.head_radius = in.half_width * uni(1.2, 1.45);
    in.gray = uni(0.62, 0.8);
    in.tint = uni(-0.04, 0.04);
    insts.push_back(in);
  }

  std::vector<Occluder> occluders;
  if (motion.occlusions && n_frames > 4) {
    const int count = 1 + static_cast<int>(uni(0, 2)) + n_frames / 120;
    for (int i = 0; i < count; ++i) {
      Occluder o{};
      o.duration = std::max(3, static_cast<int>(uni(0.1, 0.25) * n_frames));
      o.start = static_cast<int>(uni(1, std::max(2, n_frames - o.duration)));
      const double ang = uni(0, 2 * kPi);
      o.x0 = s / 2 + 0.45 * s * std::cos(ang);
      o.y0 = s / 2 + 0.45 * s * std::sin(ang);
      o.vx = -0.6 * s * std::cos(ang) / o.duration;
      o.vy = -0.6 * s * std::sin(ang) / o.duration;
      o.rx = uni(0.08, 0.14) * s;
      o.ry = uni(0.06, 0.1) * s;
      occluders.push_back(o);
    }
  }

  VideoSequence seq;
  seq.id = "synth_" + std::to_string(seed);
  for (int t = 0; t < n_frames; ++t) {
    const double tt = motion.static_scene ? 0.0 : static_cast<double>(t);
    ImageTensor img(size, size);
    BinaryMask mask(size, size);
    struct Pose {
      double tx, ty, nx, ny;
    };
    std::vector<Pose> poses;
    for (const auto& in : insts) {
      const double th = in.theta0 + in.theta_amp * std::sin(in.theta_freq * tt + in.theta_phase);
      const double len = in.len0 + in.len_amp * std::sin(in.len_freq * tt + in.len_phase);
      poses.push_back({in.ex + len * std::cos(th), in.ey + len * std::sin(th), -std::sin(th), std::cos(th)});
    }
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        const double bx = px + drift_vx * tt, by = py + drift_vy * tt;
        double tex = 0;
        for (const auto& gr : gratings) tex += gr.amp * std::sin(gr.kx * bx + gr.ky * by + gr.phase);
        double r = base_r + 1.6 * tex, g = base_g + tex, b = base_b + 0.8 * tex;

        bool occluded = false;
        for (const auto& o : occluders) {
          if (motion.static_scene || t < o.start || t >= o.start + o.duration) continue;
          const double ox = o.x0 + o.vx * (t - o.start), oy = o.y0 + o.vy * (t - o.start);
          const double u = (px - ox) / o.rx, v = (py - oy) / o.ry;
          if (u * u + v * v <= 1.0) occluded = true;
        }

        for (std::size_t i = 0; i < insts.size() && !occluded; ++i) {
          const auto& in = insts[i];
          const auto& pose = poses[i];
          double along = 0;
          const double d_shaft = segment_distance(px, py, in.ex, in.ey, pose.tx, pose.ty, along);
          const double dhx = px - pose.tx, dhy = py - pose.ty;
          const double d_head = std::sqrt(dhx * dhx + dhy * dhy);
          const bool on_shaft = d_shaft <= in.half_width;
          const bool on_head = d_head <= in.head_radius;
          if (!on_shaft && !on_head) continue;
          // Cylindrical shading across the shaft.
          const double across = on_shaft ? d_shaft / in.half_width : d_head / in.head_radius;
          const double shade = in.gray * (1.0 - 0.18 * across * across) + (on_head && !on_shaft ? -0.05 : 0.0);
          r = shade - in.tint;
          g = shade;
          b = shade + in.tint;
          mask.at(y, x) = 1;
        }
        if (occluded) {
          // Tissue fold: slightly darker tissue.
          r *= 0.9;
          g *= 0.9;
          b *= 0.9;
        }
        img.at(y, x, 0) = quantize(r);
        img.at(y, x, 1) = quantize(g);
        img.at(y, x, 2) = quantize(b);
      }
    }
    seq.frames.push_back(std::move(img));
    seq.masks.push_back(std::move(mask));
    seq.frame_numbers.push_back(t);
  }
  return seq;
}

std::vector<VideoSequence> synth_suite(std::uint64_t base_seed, int count, int n_frames, int size,
                                       const MotionSpec& motion) {
  std::vector<VideoSequence> out;
  for (int i = 0; i < count; ++i) {
    VideoSequence seq = synth_video(base_seed + static_cast<std::uint64_t>(i), n_frames, size, motion);
    char id[32];
    std::snprintf(id, sizeof id, "seq_%03d", i);
    seq.id = id;
    out.push_back(std::move(seq));
  }
  return out;
}

std::vector<TrainSample> to_samples(const std::vector<VideoSequence>& sequences) {
  std::vector<TrainSample> out;
  for (const auto& seq : sequences) {
    if (!seq.has_gt()) continue;
    for (int i = 0; i < seq.size(); ++i) {
      if (seq.masks[static_cast<size_t>(i)].empty()) continue;
      out.push_back({seq.frames[static_cast<size_t>(i)], seq.masks[static_cast<size_t>(i)]});
    }
  }
  return out;
}

}  // namespace surgtrack
