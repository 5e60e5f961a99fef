#pragma once

#include "surgtrack/autograd.hpp"
#include "surgtrack/tensor.hpp"

#include <map>
#include <random>
#include <string>
#include <vector>

namespace surgtrack {

struct Parameter {
  Matrix value;
  bool trainable = false;
};

/// Named parameter collection. Iteration order is lexicographic by name so
/// serialization and optimizer state are stable.
class ParamStore {
 public:
  void add(const std::string& name, Matrix value, bool trainable);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  const Parameter& at(const std::string& name) const;
  Parameter& at(const std::string& name);
  const Matrix& value(const std::string& name) const { return at(name).value; }

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  std::vector<std::string> names() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  bool operator==(const ParamStore& other) const;

 private:
  std::map<std::string, Parameter> params_;
};

/// Shell-style glob ('*', '?', '[...]'); '*' also matches '.'.
bool glob_match(const std::string& pattern, const std::string& name);

/// Splits parameters into frozen and trainable by name pattern. Every
/// parameter must match exactly one category.
struct FreezePolicy {
  std::vector<std::string> frozen;
  std::vector<std::string> trainable;

  /// Throws ConfigError when name matches neither or both categories.
  bool is_trainable(const std::string& name) const;

  /// Frozen image encoder and prompt encoder; trainable adapters and mask
  /// decoder.
  static FreezePolicy segmenter_default();
  /// Everything frozen.
  static FreezePolicy all_frozen();
};

/// U(-b, b) with b = sqrt(6 / (rows + cols)).
Matrix xavier_uniform(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols);
Matrix normal_init(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double stddev);

}  // namespace surgtrack
