#include "surgtrack/lora.hpp"

#include "surgtrack/error.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <random>
#include <set>

namespace surgtrack {

namespace {

constexpr std::string_view kWeightSuffix = ".weight";

void check_adapter_shape(const Matrix& w0, const LoraAdapter& a) {
  if (a.rank < 1 || a.A.rows() != a.rank || a.B.cols() != a.rank || a.A.cols() != w0.cols() || a.B.rows() != w0.rows()) {
    throw ShapeError("adapter for '" + a.target + "' does not conform to its " + std::to_string(w0.rows()) + "x" +
                     std::to_string(w0.cols()) + " projection");
  }
}

}  // namespace

std::vector<std::string> expand_targets(std::span<const std::string> targets) {
  std::vector<std::string> out;
  for (const auto& t : targets) {
    if (t == "q" || t == "k" || t == "v" || t == "out") {
      out.push_back("encoder.block*.attn." + t);
    } else if (t == "mlp") {
      out.push_back("encoder.block*.mlp.fc1");
      out.push_back("encoder.block*.mlp.fc2");
    } else {
      out.push_back(t);
    }
  }
  return out;
}

std::vector<std::string> projection_names(const ParamStore& params) {
  std::vector<std::string> out;
  for (const auto& [name, p] : params) {
    if (name.size() > kWeightSuffix.size() && name.ends_with(kWeightSuffix)) {
      out.push_back(name.substr(0, name.size() - kWeightSuffix.size()));
    }
  }
  return out;
}

AdapterSet inject(const ParamStore& params, std::span<const std::string> targets, int rank, double alpha,
                  std::uint64_t seed, const AdapterSet& existing) {
  if (rank < 1) throw ConfigError("LoRA rank must be >= 1");
  const auto patterns = expand_targets(targets);
  std::set<std::string> matched;
  for (const auto& proj : projection_names(params)) {
    for (const auto& pat : patterns) {
      if (glob_match(pat, proj)) matched.insert(proj);
    }
  }
  if (matched.empty()) throw ConfigError("LoRA injection: no projection matches the requested targets");

  std::mt19937_64 rng(seed);
  AdapterSet out = existing;
  for (const auto& target : matched) {
    if (out.count(target)) throw ConfigError("LoRA injection: '" + target + "' already has an adapter");
    const Matrix& w0 = params.value(target + std::string(kWeightSuffix));
    const auto d_in = w0.cols();
    const auto d_out = w0.rows();
    if (rank >= std::min(d_in, d_out)) {
      std::clog << "warning: LoRA rank " << rank << " >= min(d_in, d_out) = " << std::min(d_in, d_out) << " for '"
                << target << "'; the update is not low-rank\n";
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    LoraAdapter a;
    a.target = target;
    a.rank = rank;
    a.alpha = alpha;
    a.A.resize(rank, d_in);
    for (Eigen::Index i = 0; i < a.A.size(); ++i) a.A.data()[i] = dist(rng);
    a.B = Matrix::Zero(d_out, rank);
    out.emplace(target, std::move(a));
  }
  return out;
}

Matrix adapted_forward(const Matrix& x, const Matrix& w0, const LoraAdapter& adapter) {
  check_adapter_shape(w0, adapter);
  if (x.rows() != w0.cols()) throw ShapeError("adapted_forward: input length does not match projection width");
  return w0 * x + adapter.scaling() * (adapter.B * (adapter.A * x));
}

Vector adapted_forward(const Vector& x, const Matrix& w0, const LoraAdapter& adapter) {
  check_adapter_shape(w0, adapter);
  if (x.size() != w0.cols()) throw ShapeError("adapted_forward: input length does not match projection width");
  return w0 * x + adapter.scaling() * (adapter.B * (adapter.A * x));
}

Matrix merge(const Matrix& w0, const LoraAdapter& adapter) {
  check_adapter_shape(w0, adapter);
  return w0 + adapter.delta();
}

ParamStore merge_all(const ParamStore& params, const AdapterSet& adapters) {
  ParamStore out = params;
  for (const auto& [target, a] : adapters) {
    Parameter& w = out.at(target + std::string(kWeightSuffix));
    w.value = merge(w.value, a);
  }
  return out;
}

ParamCount trainable_count(std::span<const ParamInfo> params, std::span<const AdapterInfo> adapters,
                           const FreezePolicy& policy) {
  ParamCount c;
  for (const auto& p : params) {
    (policy.is_trainable(p.name) ? c.other_trainable : c.frozen) += p.count;
  }
  for (const auto& a : adapters) {
    const bool a_tr = policy.is_trainable(a.target + ".lora.A");
    const bool b_tr = policy.is_trainable(a.target + ".lora.B");
    const std::size_t a_n = static_cast<std::size_t>(a.rank) * a.d_in;
    const std::size_t b_n = static_cast<std::size_t>(a.rank) * a.d_out;
    (a_tr ? c.adapter : c.frozen) += a_n;
    (b_tr ? c.adapter : c.frozen) += b_n;
  }
  c.trainable = c.adapter + c.other_trainable;
  const std::size_t total = c.trainable + c.frozen;
  c.fraction = total ? static_cast<double>(c.trainable) / static_cast<double>(total) : 0.0;
  return c;
}

ParamCount trainable_count(const ParamStore& params, const AdapterSet& adapters, const FreezePolicy& policy) {
  std::vector<ParamInfo> infos;
  for (const auto& [name, p] : params) infos.push_back({name, static_cast<std::size_t>(p.value.size())});
  std::vector<AdapterInfo> ainfos;
  for (const auto& [target, a] : adapters) {
    ainfos.push_back({target, a.rank, static_cast<std::size_t>(a.d_in()), static_cast<std::size_t>(a.d_out())});
  }
  return trainable_count(infos, ainfos, policy);
}

}  // namespace surgtrack
