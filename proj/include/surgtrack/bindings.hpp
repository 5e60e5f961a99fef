#pragma once

#include "surgtrack/autograd.hpp"
#include "surgtrack/lora.hpp"
#include "surgtrack/params.hpp"

#include <map>
#include <string>

namespace surgtrack {

/// Binds named parameters (and optionally LoRA adapters) onto a graph. Each
/// name becomes one leaf, created on first use; trainable parameters become
/// gradient-carrying leaves.
class Bindings {
 public:
  Bindings(Graph& graph, const ParamStore& params, const AdapterSet* adapters = nullptr, bool adapters_trainable = true)
      : graph_(graph), params_(params), adapters_(adapters), adapters_trainable_(adapters_trainable) {}

  Var operator()(const std::string& name);

  /// x·Wᵀ + b for the projection "<name>.weight"/"<name>.bias", plus the
  /// adapter delta when an adapter targets name.
  Var linear(Var x, const std::string& name);

  Graph& graph() { return graph_; }
  const std::map<std::string, Var>& bound() const { return vars_; }

 private:
  Graph& graph_;
  const ParamStore& params_;
  const AdapterSet* adapters_;
  bool adapters_trainable_;
  std::map<std::string, Var> vars_;
};

}  // namespace surgtrack
