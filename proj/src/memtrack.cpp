#include "surgtrack/memtrack.hpp"

#include "surgtrack/error.hpp"
#include "surgtrack/optim.hpp"

#include <array>
#include <cmath>
#include <random>

namespace surgtrack {

void TrackerConfig::validate() const {
  if (image_size <= 0 || patch_size <= 0 || hidden <= 0 || key_dim <= 0 || value_dim <= 0 || head_hidden <= 0) {
    throw ConfigError("tracker config fields must be positive");
  }
  if (image_size % patch_size != 0) throw ConfigError("tracker image_size must be a multiple of patch_size");
}

void MemoryBank::add_permanent(MemoryEntry entry) {
  entry.source = MemorySource::kPermanent;
  permanent_.push_back(std::move(entry));
}

void MemoryBank::add_working(MemoryEntry entry) {
  entry.source = MemorySource::kWorking;
  working_.push_back(std::move(entry));
  while (static_cast<int>(working_.size()) > std::max(cfg_.capacity, 0)) working_.pop_front();
}

Eigen::Index MemoryBank::rows() const {
  Eigen::Index n = 0;
  for (const auto& e : permanent_) n += e.key.rows();
  for (const auto& e : working_) n += e.key.rows();
  return n;
}

namespace {

template <typename Get>
Matrix stack(const std::vector<MemoryEntry>& perm, const std::deque<MemoryEntry>& work, Get get) {
  Eigen::Index rows = 0, cols = -1;
  auto visit = [&](const MemoryEntry& e) {
    const Matrix& m = get(e);
    if (cols >= 0 && m.cols() != cols) throw ShapeError("memory entries have inconsistent widths");
    cols = m.cols();
    rows += m.rows();
  };
  for (const auto& e : perm) visit(e);
  for (const auto& e : work) visit(e);
  Matrix out(rows, std::max<Eigen::Index>(cols, 0));
  Eigen::Index at = 0;
  for (const auto& e : perm) {
    out.middleRows(at, get(e).rows()) = get(e);
    at += get(e).rows();
  }
  for (const auto& e : work) {
    out.middleRows(at, get(e).rows()) = get(e);
    at += get(e).rows();
  }
  return out;
}

void check_frame(const ImageTensor& frame, const TrackerConfig& cfg) {
  frame.validate();
  if (frame.height != cfg.image_size || frame.width != cfg.image_size) {
    throw ShapeError("frame is " + std::to_string(frame.height) + "x" + std::to_string(frame.width) +
                     ", tracker expects " + std::to_string(cfg.image_size) + "x" + std::to_string(cfg.image_size));
  }
}

BinaryMask logits_to_mask(const Matrix& logits, int size) {
  BinaryMask m(size, size);
  for (Eigen::Index i = 0; i < logits.rows(); ++i) m.data[static_cast<size_t>(i)] = logits(i, 0) > 0.0 ? 1 : 0;
  return m;
}

}  // namespace

Matrix MemoryBank::stacked_keys() const {
  return stack(permanent_, working_, [](const MemoryEntry& e) -> const Matrix& { return e.key; });
}

Matrix MemoryBank::stacked_values() const {
  return stack(permanent_, working_, [](const MemoryEntry& e) -> const Matrix& { return e.value; });
}

TrackerModel TrackerModel::create(const TrackerConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  TrackerModel m;
  m.cfg = cfg;
  std::mt19937_64 rng(seed);
  const int p2 = cfg.patch_size * cfg.patch_size;
  auto add_linear = [&](const std::string& name, int out, int in) {
    m.params.add(name + ".weight", xavier_uniform(rng, out, in), true);
    m.params.add(name + ".bias", Matrix::Zero(1, out), true);
  };
  add_linear("tracker.key.fc1", cfg.hidden, p2 * 3);
  add_linear("tracker.key.fc2", cfg.key_dim, cfg.hidden);
  add_linear("tracker.value.fc1", cfg.hidden, p2 * 4);
  add_linear("tracker.value.fc2", cfg.value_dim, cfg.hidden);
  add_linear("tracker.head.fc1", cfg.head_hidden, cfg.value_dim + cfg.hidden + 3);
  add_linear("tracker.head.fc2", 1, cfg.head_hidden);
  return m;
}

KeyFeatures encode_key(Bindings& b, const ImageTensor& frame, const TrackerConfig& cfg) {
  check_frame(frame, cfg);
  Graph& g = b.graph();
  Var patches = g.constant(extract_patches(frame, cfg.patch_size));
  Var hidden = g.gelu(b.linear(patches, "tracker.key.fc1"));
  return {b.linear(hidden, "tracker.key.fc2"), hidden};
}

Var encode_value(Bindings& b, const ImageTensor& frame, const BinaryMask& mask, const TrackerConfig& cfg) {
  check_frame(frame, cfg);
  Graph& g = b.graph();
  Var patches = g.constant(extract_patches(frame, mask, cfg.patch_size));
  return b.linear(g.gelu(b.linear(patches, "tracker.value.fc1")), "tracker.value.fc2");
}

Var decode_readout(Bindings& b, Var readout, Var hidden, const ImageTensor& frame, const TrackerConfig& cfg) {
  Graph& g = b.graph();
  const int grid = cfg.grid();
  Var up = g.constant(bilinear_operator(grid, grid, cfg.image_size, cfg.image_size));
  Var features = g.concat_cols(std::array{g.matmul(up, readout), g.matmul(up, hidden), g.constant(frame.pixels)});
  return b.linear(g.gelu(b.linear(features, "tracker.head.fc1")), "tracker.head.fc2");
}

Matrix compute_key(const ImageTensor& frame, const TrackerModel& model) {
  Graph g(false);
  Bindings b(g, model.params);
  return g.value(encode_key(b, frame, model.cfg).key);
}

Matrix compute_value(const ImageTensor& frame, const BinaryMask& mask, const TrackerModel& model) {
  Graph g(false);
  Bindings b(g, model.params);
  return g.value(encode_value(b, frame, mask, model.cfg));
}

Var memory_read(Graph& g, Var query_key, Var keys, Var values, int k_aff) {
  const Matrix& q = g.value(query_key);
  const Matrix& k = g.value(keys);
  if (k.rows() == 0) throw ConfigError("memory_read: memory bank is empty");
  if (q.cols() != k.cols()) throw ShapeError("memory_read: query and memory key widths differ");
  if (g.value(values).rows() != k.rows()) throw ShapeError("memory_read: key and value row counts differ");
  const double inv = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Var affinity = g.scale(g.matmul_nt(query_key, keys), inv);
  return g.matmul(g.softmax_rows(affinity, k_aff), values);
}

Matrix memory_read(const Matrix& query_key, const MemoryBank& bank, int k_aff) {
  if (bank.empty()) throw ConfigError("memory_read: memory bank is empty");
  Graph g(false);
  return g.value(memory_read(g, g.constant(query_key), g.constant(bank.stacked_keys()), g.constant(bank.stacked_values()),
                             k_aff));
}

bool update_memory(MemoryBank& bank, const ImageTensor& frame, const BinaryMask& mask, int frame_index,
                   const TrackerModel& model) {
  const int period = std::max(bank.config().r_mem, 1);
  if (frame_index % period != 0) return false;
  bank.add_working({compute_key(frame, model), compute_value(frame, mask, model), MemorySource::kWorking, frame_index});
  return true;
}

std::vector<BinaryMask> propagate(const VideoSequence& video, const std::map<int, BinaryMask>& seeds,
                                  const TrackerModel& model, const BankConfig& bank_cfg,
                                  const std::function<void(int, const MemoryBank&)>& observer) {
  video.validate();
  if (seeds.empty()) throw ConfigError("propagate: at least one seed mask is required");
  MemoryBank bank(bank_cfg);
  for (const auto& [index, mask] : seeds) {
    if (index < 0 || index >= video.size()) {
      throw ConfigError("propagate: seed frame " + std::to_string(index) + " is outside the video");
    }
    const ImageTensor& frame = video.frames[static_cast<size_t>(index)];
    bank.add_permanent({compute_key(frame, model), compute_value(frame, mask, model), MemorySource::kPermanent, index});
  }

  std::vector<BinaryMask> out;
  out.reserve(static_cast<size_t>(video.size()));
  for (int t = 0; t < video.size(); ++t) {
    auto seed = seeds.find(t);
    if (seed != seeds.end()) {
      out.push_back(seed->second);
      continue;
    }
    if (observer) observer(t, bank);
    const ImageTensor& frame = video.frames[static_cast<size_t>(t)];
    Graph g(false);
    Bindings b(g, model.params);
    KeyFeatures kf = encode_key(b, frame, model.cfg);
    Var readout = memory_read(g, kf.key, g.constant(bank.stacked_keys()), g.constant(bank.stacked_values()),
                              bank_cfg.k_aff);
    Var logits = decode_readout(b, readout, kf.hidden, frame, model.cfg);
    if (!g.value(logits).allFinite()) throw NumericError("propagate: non-finite logits at frame " + std::to_string(t));
    BinaryMask mask = logits_to_mask(g.value(logits), model.cfg.image_size);
    update_memory(bank, frame, mask, t, model);
    out.push_back(std::move(mask));
  }
  return out;
}

std::vector<double> train_tracker(TrackerModel& model, const std::vector<VideoSequence>& sequences,
                                  const TrackerTrainConfig& cfg) {
  std::vector<const VideoSequence*> usable;
  for (const auto& s : sequences) {
    if (s.has_gt() && s.size() >= 2) usable.push_back(&s);
  }
  if (usable.empty()) throw DataError("train_tracker: need at least one sequence with GT and two frames");
  std::mt19937_64 rng(cfg.seed);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  Adam opt(cfg.learning_rate);
  std::vector<double> losses;
  losses.reserve(static_cast<size_t>(cfg.iterations));
  for (int it = 0; it < cfg.iterations; ++it) {
    const VideoSequence& seq = *usable[static_cast<size_t>(pick(0, static_cast<int>(usable.size()) - 1))];
    const int query = pick(1, seq.size() - 1);
    std::vector<int> memory{0};
    const int extra = std::min(pick(0, std::max(cfg.max_memory_frames - 1, 0)), query - 1);
    for (int i = 0; i < extra; ++i) memory.push_back(pick(1, query - 1));

    Graph g;
    Bindings b(g, model.params);
    std::vector<Var> keys, values;
    for (int m : memory) {
      const auto idx = static_cast<size_t>(m);
      keys.push_back(encode_key(b, seq.frames[idx], model.cfg).key);
      values.push_back(encode_value(b, seq.frames[idx], seq.masks[idx], model.cfg));
    }
    const auto qidx = static_cast<size_t>(query);
    KeyFeatures kf = encode_key(b, seq.frames[qidx], model.cfg);
    Var readout = memory_read(g, kf.key, g.concat_rows(keys), g.concat_rows(values), cfg.k_aff);
    Var logits = decode_readout(b, readout, kf.hidden, seq.frames[qidx], model.cfg);
    Var loss = g.seg_loss(logits, seq.masks[qidx].data, cfg.lambda_bce, cfg.lambda_dice);
    const double lv = g.value(loss)(0, 0);
    if (!std::isfinite(lv)) throw NumericError("train_tracker: non-finite loss at iteration " + std::to_string(it));
    losses.push_back(lv);
    g.backward(loss);
    opt.begin_step();
    for (const auto& [name, var] : b.bound()) {
      Parameter& p = model.params.at(name);
      if (p.trainable) opt.update(name, p.value, g.grad(var));
    }
  }
  return losses;
}

}  // namespace surgtrack
