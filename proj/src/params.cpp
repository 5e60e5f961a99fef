#include "surgtrack/params.hpp"

#include "surgtrack/error.hpp"

#include <fnmatch.h>

#include <cmath>
#include <cstring>

namespace surgtrack {

void ParamStore::add(const std::string& name, Matrix value, bool trainable) {
  if (params_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  params_.emplace(name, Parameter{std::move(value), trainable});
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

bool ParamStore::operator==(const ParamStore& other) const {
  if (params_.size() != other.params_.size()) return false;
  auto it = other.params_.begin();
  for (const auto& [name, p] : params_) {
    if (name != it->first || p.trainable != it->second.trainable) return false;
    const Matrix& q = it->second.value;
    if (p.value.rows() != q.rows() || p.value.cols() != q.cols()) return false;
    if (p.value.size() && std::memcmp(p.value.data(), q.data(), sizeof(double) * static_cast<size_t>(q.size())) != 0) {
      return false;
    }
    ++it;
  }
  return true;
}

bool glob_match(const std::string& pattern, const std::string& name) {
  return ::fnmatch(pattern.c_str(), name.c_str(), 0) == 0;
}

bool FreezePolicy::is_trainable(const std::string& name) const {
  bool in_frozen = false;
  bool in_trainable = false;
  for (const auto& p : frozen) in_frozen = in_frozen || glob_match(p, name);
  for (const auto& p : trainable) in_trainable = in_trainable || glob_match(p, name);
  if (in_frozen == in_trainable) {
    throw ConfigError("freeze policy: parameter '" + name + "' matches " + (in_frozen ? "both" : "neither") +
                      " frozen and trainable patterns");
  }
  return in_trainable;
}

FreezePolicy FreezePolicy::segmenter_default() {
  return FreezePolicy{
      {"encoder.*.weight", "encoder.*.bias", "encoder.*.gamma", "encoder.*.beta", "encoder.pos_embed",
       "prompt_encoder.*"},
      {"*.lora.A", "*.lora.B", "decoder.*"},
  };
}

FreezePolicy FreezePolicy::all_frozen() { return FreezePolicy{{"*"}, {}}; }

Matrix xavier_uniform(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Matrix normal_init(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

}  // namespace surgtrack
