#include "surgtrack/checkpoint.hpp"

#include "surgtrack/error.hpp"

#include <array>
#include <bit>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

namespace surgtrack {

namespace {

constexpr std::array<char, 8> kMagic{'S', 'G', 'T', 'C', 'K', 'P', 'T', '\0'};
constexpr std::string_view kLoraA = ".lora.A";
constexpr std::string_view kLoraB = ".lora.B";

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  const std::vector<char>& data() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(std::vector<char> data, std::string path) : buf_(std::move(data)), path_(std::move(path)) {}
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_++])) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw DataError("checkpoint " + path_ + " is truncated");
  }
  std::vector<char> buf_;
  std::string path_;
  std::size_t pos_ = 0;
};

std::vector<char> read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write_entry(Writer& w, const std::string& name, const Matrix& m, bool trainable) {
  w.u32(static_cast<std::uint32_t>(name.size()));
  w.bytes(name);
  w.u8(trainable ? 1 : 0);
  w.u32(2);
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) w.f32(static_cast<float>(m.data()[i]));
}

nlohmann::json decoder_json(const DecoderConfig& d) { return {{"channels", d.channels}, {"head_hidden", d.head_hidden}}; }

nlohmann::json tracker_json(const TrackerConfig& c) {
  return {{"image_size", c.image_size}, {"patch_size", c.patch_size}, {"hidden", c.hidden},
          {"key_dim", c.key_dim},       {"value_dim", c.value_dim},   {"head_hidden", c.head_hidden}};
}

template <typename T>
T get(const nlohmann::json& j, const char* key, const std::string& path) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw DataError("checkpoint " + path + " header lacks '" + key + "'");
  }
}

}  // namespace

nlohmann::json to_json(const ViTConfig& cfg) {
  return {{"image_size", cfg.image_size}, {"patch_size", cfg.patch_size}, {"embed_dim", cfg.embed_dim},
          {"depth", cfg.depth},           {"num_heads", cfg.num_heads},   {"mlp_ratio", cfg.mlp_ratio}};
}

ViTConfig vit_config_from_json(const nlohmann::json& j) {
  ViTConfig c;
  c.image_size = j.at("image_size").get<int>();
  c.patch_size = j.at("patch_size").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.depth = j.at("depth").get<int>();
  c.num_heads = j.at("num_heads").get<int>();
  c.mlp_ratio = j.at("mlp_ratio").get<double>();
  return c;
}

void save_checkpoint(const std::string& path, const nlohmann::json& header, const ParamStore& params) {
  Writer w;
  w.bytes(std::string_view(kMagic.data(), kMagic.size()));
  w.u32(kCheckpointVersion);
  const std::string h = header.dump();
  w.u32(static_cast<std::uint32_t>(h.size()));
  w.bytes(h);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, p] : params) write_entry(w, name, p.value, p.trainable);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write checkpoint " + path);
  os.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
  if (!os) throw DataError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  Reader r(read_file(path), path);
  if (r.bytes(kMagic.size()) != std::string(kMagic.data(), kMagic.size())) {
    throw DataError(path + " is not a checkpoint archive");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw DataError("checkpoint " + path + " has unsupported version " + std::to_string(version));
  Checkpoint ck;
  try {
    ck.header = nlohmann::json::parse(r.bytes(r.u32()));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint " + path + " has a malformed header: " + e.what());
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.bytes(r.u32());
    const bool trainable = (r.u8() & 1) != 0;
    const std::uint32_t ndim = r.u32();
    if (ndim != 2) throw DataError("checkpoint entry " + name + " is not 2-D");
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    Matrix m(rows, cols);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = static_cast<double>(r.f32());
    ck.params.add(name, std::move(m), trainable);
  }
  if (!r.done()) throw DataError("checkpoint " + path + " has trailing bytes");
  return ck;
}

std::string checkpoint_id(const std::string& path) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : read_file(path)) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

void save_segmenter(const SegmenterModel& model, const std::string& path) {
  nlohmann::json header = {{"kind", "segmenter"}, {"vit", to_json(model.vit)}, {"decoder", decoder_json(model.decoder)}};
  ParamStore all = model.params;
  if (!model.adapters.empty()) {
    header["lora"] = {{"rank", model.lora.rank}, {"alpha", model.lora.alpha}, {"targets", model.lora.targets}};
    for (const auto& [target, a] : model.adapters) {
      all.add(a.a_name(), a.A, true);
      all.add(a.b_name(), a.B, true);
    }
  }
  save_checkpoint(path, header, all);
}

SegmenterModel load_segmenter(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.header.value("kind", "") != "segmenter") throw DataError(path + " is not a segmenter checkpoint");
  SegmenterModel m;
  try {
    m.vit = vit_config_from_json(ck.header.at("vit"));
    m.decoder.channels = ck.header.at("decoder").at("channels").get<int>();
    m.decoder.head_hidden = ck.header.at("decoder").at("head_hidden").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint " + path + " has an incomplete header: " + e.what());
  }
  const bool has_lora = ck.header.contains("lora");
  if (has_lora) {
    m.lora.rank = get<int>(ck.header["lora"], "rank", path);
    m.lora.alpha = get<double>(ck.header["lora"], "alpha", path);
    m.lora.targets = get<std::vector<std::string>>(ck.header["lora"], "targets", path);
  }
  for (auto& [name, p] : ck.params) {
    if (name.ends_with(kLoraA) || name.ends_with(kLoraB)) {
      if (!has_lora) throw DataError("checkpoint " + path + " has adapter entries but no lora header");
      const std::string target = name.substr(0, name.size() - kLoraA.size());
      LoraAdapter& a = m.adapters[target];
      a.target = target;
      a.rank = m.lora.rank;
      a.alpha = m.lora.alpha;
      (name.ends_with(kLoraA) ? a.A : a.B) = p.value;
    } else {
      m.params.add(name, p.value, p.trainable);
    }
  }
  for (const auto& [target, a] : m.adapters) {
    if (a.A.size() == 0 || a.B.size() == 0) throw DataError("checkpoint " + path + " has an incomplete adapter " + target);
  }
  return m;
}

void save_tracker(const TrackerModel& model, const std::string& path) {
  save_checkpoint(path, {{"kind", "tracker"}, {"tracker", tracker_json(model.cfg)}}, model.params);
}

TrackerModel load_tracker(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.header.value("kind", "") != "tracker") throw DataError(path + " is not a tracker checkpoint");
  TrackerModel m;
  const auto& t = ck.header.at("tracker");
  m.cfg.image_size = get<int>(t, "image_size", path);
  m.cfg.patch_size = get<int>(t, "patch_size", path);
  m.cfg.hidden = get<int>(t, "hidden", path);
  m.cfg.key_dim = get<int>(t, "key_dim", path);
  m.cfg.value_dim = get<int>(t, "value_dim", path);
  m.cfg.head_hidden = get<int>(t, "head_hidden", path);
  m.params = std::move(ck.params);
  return m;
}

}  // namespace surgtrack
