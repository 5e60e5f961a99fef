#pragma once

#include "surgtrack/bindings.hpp"
#include "surgtrack/datasets.hpp"
#include "surgtrack/params.hpp"
#include "surgtrack/tensor.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <vector>

namespace surgtrack {

struct TrackerConfig {
  int image_size = 64;
  int patch_size = 8;
  int hidden = 32;       // per-patch encoder width
  int key_dim = 16;
  int value_dim = 16;
  int head_hidden = 16;  // per-pixel decoder width
  int grid() const { return image_size / patch_size; }
  void validate() const;
  bool operator==(const TrackerConfig&) const = default;
};

struct BankConfig {
  int r_mem = 5;      // working-memory insertion period in frames
  int capacity = 16;  // C_w, working-memory capacity
  int k_aff = 32;     // top-k affinity filter; <= 0 disables
};

enum class MemorySource { kPermanent, kWorking };

struct MemoryEntry {
  Matrix key;    // g² × d_k
  Matrix value;  // g² × d_v
  MemorySource source = MemorySource::kWorking;
  int frame_index = 0;
};

/// Permanent entries live for the whole sequence; working entries are a FIFO
/// of at most cfg.capacity.
class MemoryBank {
 public:
  explicit MemoryBank(BankConfig cfg = {}) : cfg_(cfg) {}

  void add_permanent(MemoryEntry entry);
  /// Appends, evicting the oldest working entry when over capacity.
  void add_working(MemoryEntry entry);

  const std::vector<MemoryEntry>& permanent() const { return permanent_; }
  const std::deque<MemoryEntry>& working() const { return working_; }
  const BankConfig& config() const { return cfg_; }
  bool empty() const { return permanent_.empty() && working_.empty(); }
  /// Total memory rows M (entries × g²).
  Eigen::Index rows() const;

  /// Keys and values of permanent then working entries, stacked by rows.
  Matrix stacked_keys() const;
  Matrix stacked_values() const;

 private:
  BankConfig cfg_;
  std::vector<MemoryEntry> permanent_;
  std::deque<MemoryEntry> working_;
};

/// Key encoder, mask-conditioned value encoder and readout decoder.
struct TrackerModel {
  TrackerConfig cfg;
  ParamStore params;  // tracker.*

  static TrackerModel create(const TrackerConfig& cfg, std::uint64_t seed);
};

/// Per-patch MLP over the frame, projected to key_dim; g² × d_k.
Matrix compute_key(const ImageTensor& frame, const TrackerModel& model);
/// Same over (frame ⊕ mask); g² × d_v.
Matrix compute_value(const ImageTensor& frame, const BinaryMask& mask, const TrackerModel& model);

/// softmax((q·Kᵀ)/sqrt(d_k)) · V over every memory row, keeping only the top
/// k_aff affinities per query row when 0 < k_aff < M. Throws ConfigError on
/// an empty bank.
Matrix memory_read(const Matrix& query_key, const MemoryBank& bank, int k_aff);
/// Graph form over explicit key/value matrices.
Var memory_read(Graph& g, Var query_key, Var keys, Var values, int k_aff);

/// Graph forms shared by propagation and training.
struct KeyFeatures {
  Var key;     // g² × d_k
  Var hidden;  // g² × hidden, reused as a decoder skip input
};
KeyFeatures encode_key(Bindings& b, const ImageTensor& frame, const TrackerConfig& cfg);
Var encode_value(Bindings& b, const ImageTensor& frame, const BinaryMask& mask, const TrackerConfig& cfg);
/// Readout and hidden features upsampled to pixels, joined with the frame
/// pixels, through a per-pixel MLP; (H·W) × 1 logits.
Var decode_readout(Bindings& b, Var readout, Var hidden, const ImageTensor& frame, const TrackerConfig& cfg);

/// Inserts (key, value) of the predicted frame into working memory when
/// frame_index is a multiple of r_mem. Returns whether it inserted.
bool update_memory(MemoryBank& bank, const ImageTensor& frame, const BinaryMask& mask, int frame_index,
                   const TrackerModel& model);

/// Installs every seed in permanent memory, then walks frames in order.
/// Seed frames return their seed mask; other frames are decoded from a
/// memory readout and fed back through update_memory. If observer is set it
/// is called with the bank right before each non-seed frame is read.
std::vector<BinaryMask> propagate(const VideoSequence& video, const std::map<int, BinaryMask>& seeds,
                                  const TrackerModel& model, const BankConfig& bank_cfg,
                                  const std::function<void(int, const MemoryBank&)>& observer = {});

struct TrackerTrainConfig {
  int iterations = 1500;
  double learning_rate = 4e-3;
  int max_memory_frames = 3;  // frame 0 plus up to this-1 random earlier frames
  int k_aff = 32;
  double lambda_bce = 1.0;
  double lambda_dice = 1.0;
  std::uint64_t seed = 0;
};

/// Trains the tracker on (memory frames, query frame) pairs drawn from GT
/// sequences with seg_loss and Adam. Returns the loss per iteration.
std::vector<double> train_tracker(TrackerModel& model, const std::vector<VideoSequence>& sequences,
                                  const TrackerTrainConfig& cfg);

}  // namespace surgtrack
