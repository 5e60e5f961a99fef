#pragma once

#include "surgtrack/tensor.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace surgtrack {

/// Ordered frames of one video, with optional aligned ground truth.
struct VideoSequence {
  std::string id;
  std::vector<ImageTensor> frames;
  std::vector<BinaryMask> masks;  // empty, or one per frame
  std::vector<int> frame_numbers; // numeric index parsed from (or written to) file names

  int size() const { return static_cast<int>(frames.size()); }
  bool has_gt() const { return !masks.empty(); }
  /// Throws ShapeError on non-uniform frame dims or misaligned masks.
  void validate() const;
};

/// Maps a directory layout onto sequences. Patterns are relative to
/// <root>/<sequence> and contain one "{index}" placeholder standing for the
/// digits of the frame number; the mask path reuses the frame's digits.
struct DatasetManifest {
  std::string root;
  std::string split = "train";
  std::vector<std::string> sequences;  // empty: every subdirectory of root
  std::string frame_pattern = "images/{index}.png";
  std::string mask_pattern = "masks/{index}.png";
  bool require_masks = true;
  int resize = 0;  // >0: resample frames (bilinear) and masks (nearest) to resize×resize
};

/// Reads a JSON manifest; relative roots resolve against the manifest's
/// directory.
DatasetManifest load_manifest(const std::string& path);
void save_manifest(const DatasetManifest& manifest, const std::string& path);

/// Loads every sequence in the manifest. Throws DataError naming the missing
/// path (and frame number) when a required mask is absent, ShapeError when a
/// mask's dims differ from its frame.
std::vector<VideoSequence> load_dataset(const DatasetManifest& manifest);

/// Single sequence directory in the default layout (images/, optional masks/).
VideoSequence load_sequence(const std::string& dir, bool require_masks = false, int resize = 0);

/// Masks of a directory keyed by frame number. Reads <dir>/masks/ when it
/// exists, else <dir> itself; file names are digits plus ".png".
std::map<int, BinaryMask> load_mask_dir(const std::string& dir);
/// Writes <dir>/NNNNN.png per mask.
void write_mask_dir(const std::map<int, BinaryMask>& masks, const std::string& dir);

/// Writes <dir>/images/NNNNN.png and, with GT, <dir>/masks/NNNNN.png.
void write_sequence(const VideoSequence& seq, const std::string& dir);

ImageTensor resize_image(const ImageTensor& image, int size);
BinaryMask resize_mask(const BinaryMask& mask, int size);

/// Knobs for the synthetic generator.
struct MotionSpec {
  int instruments = 0;          // 0: seeded choice of 1 or 2
  double speed = 1.0;           // scales every motion frequency
  bool occlusions = true;       // tissue-fold occluders crossing instruments
  double background_drift = 0.3;  // pixels per frame of camera drift
  bool static_scene = false;    // every frame identical to frame 0
};

/// Endoscopy-like synthetic video: metallic instruments entering from the
/// border, pivoting and sliding over a drifting tissue texture, with partial
/// occlusion by tissue folds. GT is the exact visible instrument footprint.
/// Pixel values are multiples of 1/255, so PNG round trips are lossless.
VideoSequence synth_video(std::uint64_t seed, int n_frames, int size = 64, const MotionSpec& motion = {});

/// count sequences with seeds base_seed, base_seed+1, ...; ids "seq_000"...
std::vector<VideoSequence> synth_suite(std::uint64_t base_seed, int count, int n_frames, int size = 64,
                                       const MotionSpec& motion = {});

struct TrainSample {
  ImageTensor image;
  BinaryMask mask;
};

/// Every (frame, mask) pair with a non-empty mask.
std::vector<TrainSample> to_samples(const std::vector<VideoSequence>& sequences);

}  // namespace surgtrack
