#pragma once

#include "surgtrack/params.hpp"
#include "surgtrack/tensor.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace surgtrack {

/// Rank-r update attached to a frozen projection W0 (d_out×d_in). The
/// adapted map is W0·x + (alpha/rank)·B·(A·x).
struct LoraAdapter {
  std::string target;  // projection name, e.g. "encoder.block1.attn.q"
  Matrix A;            // rank × d_in
  Matrix B;            // d_out × rank, zero at injection
  int rank = 0;
  double alpha = 0;

  double scaling() const { return alpha / rank; }
  Matrix delta() const { return scaling() * (B * A); }
  Eigen::Index d_in() const { return A.cols(); }
  Eigen::Index d_out() const { return B.rows(); }
  std::size_t param_count() const { return static_cast<std::size_t>(A.size() + B.size()); }

  std::string a_name() const { return target + ".lora.A"; }
  std::string b_name() const { return target + ".lora.B"; }
};

/// Adapters keyed by target projection name.
using AdapterSet = std::map<std::string, LoraAdapter>;

/// Target shorthands accepted by inject(): q, k, v, out, mlp. Anything else
/// is used verbatim as a glob over projection names.
std::vector<std::string> expand_targets(std::span<const std::string> targets);

/// Names of every 2-D projection in the store (parameter "<name>.weight"),
/// returned without the ".weight" suffix.
std::vector<std::string> projection_names(const ParamStore& params);

/// Creates one adapter per projection matched by targets. A is drawn from
/// U(-1/sqrt(d_in), 1/sqrt(d_in)) seeded by seed, B is zero. Base weights are
/// not touched. Throws ConfigError for an empty match or when a matched
/// target already has an adapter in existing.
AdapterSet inject(const ParamStore& params, std::span<const std::string> targets, int rank, double alpha,
                  std::uint64_t seed, const AdapterSet& existing = {});

/// W0·x + (alpha/r)·B·(A·x); x holds one input per column.
Matrix adapted_forward(const Matrix& x, const Matrix& w0, const LoraAdapter& adapter);
Vector adapted_forward(const Vector& x, const Matrix& w0, const LoraAdapter& adapter);

/// W0 + (alpha/r)·B·A.
Matrix merge(const Matrix& w0, const LoraAdapter& adapter);

/// Returns a copy of params with every adapter folded into its projection.
ParamStore merge_all(const ParamStore& params, const AdapterSet& adapters);

struct ParamInfo {
  std::string name;
  std::size_t count = 0;
};

struct AdapterInfo {
  std::string target;
  int rank = 0;
  std::size_t d_in = 0;
  std::size_t d_out = 0;
  std::size_t param_count() const { return static_cast<std::size_t>(rank) * (d_in + d_out); }
};

struct ParamCount {
  std::size_t adapter = 0;          // adapter parameters judged trainable
  std::size_t other_trainable = 0;  // non-adapter trainable (e.g. mask decoder)
  std::size_t trainable = 0;        // adapter + other_trainable
  std::size_t frozen = 0;
  double fraction = 0;              // trainable / (trainable + frozen)
};

ParamCount trainable_count(std::span<const ParamInfo> params, std::span<const AdapterInfo> adapters,
                           const FreezePolicy& policy);
ParamCount trainable_count(const ParamStore& params, const AdapterSet& adapters, const FreezePolicy& policy);

}  // namespace surgtrack
