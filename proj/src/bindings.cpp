#include "surgtrack/bindings.hpp"

#include "surgtrack/error.hpp"

namespace surgtrack {

Var Bindings::operator()(const std::string& name) {
  auto it = vars_.find(name);
  if (it != vars_.end()) return it->second;
  const Parameter& p = params_.at(name);
  Var v = graph_.leaf(p.value, p.trainable);
  vars_.emplace(name, v);
  return v;
}

Var Bindings::linear(Var x, const std::string& name) {
  Graph& g = graph_;
  Var w = (*this)(name + ".weight");
  Var y = g.matmul_nt(x, w);
  if (params_.contains(name + ".bias")) y = g.add_row(y, (*this)(name + ".bias"));
  if (adapters_) {
    auto it = adapters_->find(name);
    if (it != adapters_->end()) {
      const LoraAdapter& a = it->second;
      if (a.A.cols() != g.value(w).cols() || a.B.rows() != g.value(w).rows() || a.A.rows() != a.rank ||
          a.B.cols() != a.rank) {
        throw ShapeError("adapter for '" + name + "' does not match its projection");
      }
      auto bind = [&](const std::string& key, const Matrix& m) {
        auto found = vars_.find(key);
        if (found != vars_.end()) return found->second;
        Var v = g.leaf(m, adapters_trainable_);
        vars_.emplace(key, v);
        return v;
      };
      Var av = bind(a.a_name(), a.A);
      Var bv = bind(a.b_name(), a.B);
      Var delta = g.matmul_nt(g.matmul_nt(x, av), bv);
      y = g.add(y, g.scale(delta, a.scaling()));
    }
  }
  return y;
}

}  // namespace surgtrack
