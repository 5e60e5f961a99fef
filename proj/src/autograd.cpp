#include "surgtrack/autograd.hpp"

#include "surgtrack/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace surgtrack {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

double stable_sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Var Graph::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::leaf(Matrix value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), {}, grad_enabled_ && requires_grad, {}});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Matrix Graph::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

bool Graph::any_requires(std::initializer_list<Var> inputs) const {
  if (!grad_enabled_) return false;
  return std::any_of(inputs.begin(), inputs.end(), [this](Var v) { return nodes_[v.id].requires_grad; });
}

Var Graph::push(Matrix value, std::initializer_list<Var> inputs) {
  const bool req = any_requires(inputs);
  nodes_.push_back(Node{std::move(value), {}, req, {}});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Graph::accumulate(Var v, const Matrix& g) { accumulate_expr(v, g); }

template <typename Expr>
void Graph::accumulate_expr(Var v, const Expr& g) {
  Node& n = nodes_[v.id];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Graph::backward(Var out) {
  Node& root = nodes_[out.id];
  if (root.value.size() != 1) throw ShapeError("backward() needs a scalar output");
  for (Node& n : nodes_) n.grad.resize(0, 0);
  if (!root.requires_grad) return;
  root.grad = Matrix::Ones(1, 1);
  for (int i = out.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.backward && n.grad.size() != 0) n.backward();
  }
}

Var Graph::matmul(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  if (av.cols() != bv.rows()) throw ShapeError("matmul: inner dimensions differ");
  Var out = push(av * bv, {a, b});
  if (requires_grad(out)) {
    nodes_[out.id].backward = [this, a, b, id = out.id] {
      const Matrix& g = out_grad(id);
      if (requires_grad(a)) accumulate_expr(a, g * value(b).transpose());
      if (requires_grad(b)) accumulate_expr(b, value(a).transpose() * g);
    };
  }
  return out;
}

Var Graph::matmul_nt(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  if (av.cols() != bv.cols()) throw ShapeError("matmul_nt: inner dimensions differ");
  Var out = push(av * bv.transpose(), {a, b});
  if (requires_grad(out)) {
    nodes_[out.id].backward = [this, a, b, id = out.id] {
      const Matrix& g = out_grad(id);
      if (requires_grad(a)) accumulate_expr(a, g * value(b));
      if (requires_grad(b)) accumulate_expr(b, g.transpose() * value(a));
    };
  }
  return out;
}

Var Graph::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "add");
  Var out = push(value(a) + value(b), {a, b});
  if (requires_grad(out)) {
    nodes_[out.id].backward = [this, a, b, id = out.id] {
      accumulate(a, out_grad(id));
      accumulate(b, out_grad(id));
    };
  }
  return out;
}

Var Graph::sub(Var a, Var b) {
  require_same_shape(value(a), value(b), "sub");
  Var out = push(value(a) - value(b), {a, b});
  if (requires_grad(out)) {
    nodes_[out.id].backward = [this, a, b, id = out.id] {
      accumulate(a, out_grad(id));
      accumulate_expr(b, -out_grad(id));
    };
  }
  return out;
}

Var Graph::mul(Var a, Var b) {
  require_same_shape(value(a), value(b), "mul");
  Var out = push(value(a).cwiseProduct(value(b)), {a, b});
  if (requires_grad(out)) {
    nodes_[out.id].backward = [this, a, b, id = out.id] {
      const Matrix& g = out_grad(id);
      if (requires_grad(a)) accumulate_expr(a, g.cwiseProduct(value(b)));
      if (requires_grad(b)) accumulate_expr(b, g.cwiseProduct(value(a)));
    };
  }
  return out;
}

Var Graph::add_row(Var a, Var row) {
  const Matrix& rv = value(row);
  if (rv.rows() != 1 || rv.cols() != value(a).cols()) throw ShapeError("add_row: row width mismatch");
  Matrix v = value(a);
  v.rowwise() += rv.row(0);
  Var out = push(std::move(v), {a, row});
  if (requires_grad(out)) {
    nodes_[out.id].backward = [this, a, row, id = out.id] {
      const Matrix& g = out_grad(id);
      accumulate(a, g);
      if (requires_grad(row)) accumulate_expr(row, g.colwise().sum());
    };
  }
  return out;
}

Var Graph::mul_row(Var a, Var row) {
  const Matrix& rv = value(row);
  if (rv.rows() != 1 || rv.cols() != value(a).cols()) throw ShapeError("mul_row: row width mismatch");
  Matrix v = value(a).array().rowwise() * rv.row(0).array();
  Var out = push(std::move(v), {a, row});
  if (requires_grad(out)) {
    nodes_[out.id].backward = [this, a, row, id = out.id] {
      const Matrix& g = out_grad(id);
      if (requires_grad(a)) {
        Matrix ga = g.array().rowwise() * value(row).row(0).array();
        accumulate(a, ga);
      }
      if (requires_grad(row)) accumulate_expr(row, g.cwiseProduct(value(a)).colwise().sum());
    };
  }
  return out;
}

Var Graph::scale(Var a, double s) {
  Var out = push(value(a) * s, {a});
  if (requires_grad(out)) {
    nodes_[out.id].backward = [this, a, s, id = out.id] { accumulate_expr(a, out_grad(id) * s); };
  }
  return out;
}

Var Graph::gelu(Var a) {
  const Matrix& x = value(a);
  Matrix y = x.unaryExpr([](double t) { return 0.5 * t * (1.0 + std::erf(t * kInvSqrt2)); });
  Var out = push(std::move(y), {a});
  if (requires_grad(out)) {
    nodes_[out.id].backward = [this, a, id = out.id] {
      Matrix d = value(a).unaryExpr([](double t) {
        return 0.5 * (1.0 + std::erf(t * kInvSqrt2)) + t * kInvSqrt2Pi * std::exp(-0.5 * t * t);
      });
      accumulate_expr(a, out_grad(id).cwiseProduct(d));
    };
  }
  return out;
}

Var Graph::layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Matrix& xv = value(x);
  const Eigen::Index n = xv.rows();
  const Eigen::Index d = xv.cols();
  if (value(gamma).rows() != 1 || value(gamma).cols() != d || value(beta).rows() != 1 || value(beta).cols() != d) {
    throw ShapeError("layer_norm: scale/shift width mismatch");
  }
  Matrix xhat(n, d);
  Vector inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = xv.row(i).mean();
    const double var = (xv.row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (xv.row(i).array() - mu) * inv_std(i);
  }
  Matrix y = xhat.array().rowwise() * value(gamma).row(0).array();
  y.rowwise() += value(beta).row(0);
  Var out = push(std::move(y), {x, gamma, beta});
  if (requires_grad(out)) {
    nodes_[out.id].backward = [this, x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), id = out.id] {
      const Matrix& g = out_grad(id);
      if (requires_grad(gamma)) accumulate_expr(gamma, g.cwiseProduct(xhat).colwise().sum());
      if (requires_grad(beta)) accumulate_expr(beta, g.colwise().sum());
      if (requires_grad(x)) {
        Matrix dxhat = g.array().rowwise() * value(gamma).row(0).array();
        Matrix dx(dxhat.rows(), dxhat.cols());
        for (Eigen::Index i = 0; i < dxhat.rows(); ++i) {
          const double m1 = dxhat.row(i).mean();
          const double m2 = dxhat.row(i).cwiseProduct(xhat.row(i)).mean();
          dx.row(i) = inv_std(i) * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
        }
        accumulate(x, dx);
      }
    };
  }
  return out;
}

Var Graph::softmax_rows(Var a, int top_k) {
  const Matrix& x = value(a);
  const Eigen::Index cols = x.cols();
  Matrix p = Matrix::Zero(x.rows(), cols);
  const bool filter = top_k > 0 && top_k < cols;
  std::vector<Eigen::Index> order(static_cast<size_t>(cols));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (filter) {
      std::iota(order.begin(), order.end(), Eigen::Index{0});
      std::partial_sort(order.begin(), order.begin() + top_k, order.end(), [&](Eigen::Index l, Eigen::Index r) {
        return x(i, l) > x(i, r) || (x(i, l) == x(i, r) && l < r);
      });
      const double mx = x(i, order[0]);
      double z = 0;
      for (int k = 0; k < top_k; ++k) {
        const double e = std::exp(x(i, order[k]) - mx);
        p(i, order[k]) = e;
        z += e;
      }
      for (int k = 0; k < top_k; ++k) p(i, order[k]) /= z;
    } else {
      const double mx = x.row(i).maxCoeff();
      p.row(i) = (x.row(i).array() - mx).exp();
      p.row(i) /= p.row(i).sum();
    }
  }
  Var out = push(std::move(p), {a});
  if (requires_grad(out)) {
    nodes_[out.id].backward = [this, a, id = out.id] {
      const Matrix& g = out_grad(id);
      const Matrix& pv = value(Var{id});
      Matrix dx(g.rows(), g.cols());
      for (Eigen::Index i = 0; i < g.rows(); ++i) {
        const double dot = g.row(i).dot(pv.row(i));
        dx.row(i) = pv.row(i).array() * (g.row(i).array() - dot);
      }
      accumulate(a, dx);
    };
  }
  return out;
}

Var Graph::slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  const Matrix& x = value(a);
  if (start < 0 || count < 0 || start + count > x.cols()) throw ShapeError("slice_cols: out of range");
  Var out = push(x.middleCols(start, count), {a});
  if (requires_grad(out)) {
    nodes_[out.id].backward = [this, a, start, count, id = out.id] {
      Matrix g = Matrix::Zero(value(a).rows(), value(a).cols());
      g.middleCols(start, count) = out_grad(id);
      accumulate(a, g);
    };
  }
  return out;
}

Var Graph::slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  const Matrix& x = value(a);
  if (start < 0 || count < 0 || start + count > x.rows()) throw ShapeError("slice_rows: out of range");
  Var out = push(x.middleRows(start, count), {a});
  if (requires_grad(out)) {
    nodes_[out.id].backward = [this, a, start, count, id = out.id] {
      Matrix g = Matrix::Zero(value(a).rows(), value(a).cols());
      g.middleRows(start, count) = out_grad(id);
      accumulate(a, g);
    };
  }
  return out;
}

Var Graph::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const Eigen::Index rows = value(parts[0]).rows();
  Eigen::Index cols = 0;
  bool req = false;
  for (Var p : parts) {
    if (value(p).rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    cols += value(p).cols();
    req = req || requires_grad(p);
  }
  Matrix v(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    v.middleCols(at, value(p).cols()) = value(p);
    at += value(p).cols();
  }
  nodes_.push_back(Node{std::move(v), {}, grad_enabled_ && req, {}});
  Var out{static_cast<int>(nodes_.size()) - 1};
  if (requires_grad(out)) {
    nodes_[out.id].backward = [this, ps = std::vector<Var>(parts.begin(), parts.end()), id = out.id] {
      Eigen::Index off = 0;
      for (Var p : ps) {
        const Eigen::Index c = value(p).cols();
        if (requires_grad(p)) accumulate_expr(p, out_grad(id).middleCols(off, c));
        off += c;
      }
    };
  }
  return out;
}

Var Graph::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const Eigen::Index cols = value(parts[0]).cols();
  Eigen::Index rows = 0;
  bool req = false;
  for (Var p : parts) {
    if (value(p).cols() != cols) throw ShapeError("concat_rows: column count mismatch");
    rows += value(p).rows();
    req = req || requires_grad(p);
  }
  Matrix v(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    v.middleRows(at, value(p).rows()) = value(p);
    at += value(p).rows();
  }
  nodes_.push_back(Node{std::move(v), {}, grad_enabled_ && req, {}});
  Var out{static_cast<int>(nodes_.size()) - 1};
  if (requires_grad(out)) {
    nodes_[out.id].backward = [this, ps = std::vector<Var>(parts.begin(), parts.end()), id = out.id] {
      Eigen::Index off = 0;
      for (Var p : ps) {
        const Eigen::Index r = value(p).rows();
        if (requires_grad(p)) accumulate_expr(p, out_grad(id).middleRows(off, r));
        off += r;
      }
    };
  }
  return out;
}

Var Graph::sum_all(Var a) {
  Matrix s(1, 1);
  s(0, 0) = value(a).sum();
  Var out = push(std::move(s), {a});
  if (requires_grad(out)) {
    nodes_[out.id].backward = [this, a, id = out.id] {
      const double g = out_grad(id)(0, 0);
      accumulate_expr(a, Matrix::Constant(value(a).rows(), value(a).cols(), g));
    };
  }
  return out;
}

Var Graph::seg_loss(Var logits, std::span<const std::uint8_t> target, double lambda_bce, double lambda_dice) {
  const Matrix& z = value(logits);
  const auto n = static_cast<Eigen::Index>(target.size());
  if (z.size() != n || z.cols() != 1) throw ShapeError("seg_loss: logits and target sizes differ");
  if (!z.allFinite()) throw NumericError("seg_loss: non-finite logits");
  constexpr double kSmooth = 1.0;
  double bce = 0, inter = 0, ssum = 0, tsum = 0;
  Vector s(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double zi = z(i, 0);
    const double ti = target[static_cast<size_t>(i)] ? 1.0 : 0.0;
    bce += std::max(zi, 0.0) - zi * ti + std::log1p(std::exp(-std::abs(zi)));
    s(i) = stable_sigmoid(zi);
    inter += s(i) * ti;
    ssum += s(i);
    tsum += ti;
  }
  bce /= static_cast<double>(n);
  const double denom = ssum + tsum + kSmooth;
  const double dice = (2.0 * inter + kSmooth) / denom;
  Matrix loss(1, 1);
  loss(0, 0) = lambda_bce * bce + lambda_dice * (1.0 - dice);
  Var out = push(std::move(loss), {logits});
  if (requires_grad(out)) {
    nodes_[out.id].backward = [this, logits, t = std::vector<std::uint8_t>(target.begin(), target.end()), s = std::move(s),
                               lambda_bce, lambda_dice, inter, denom, id = out.id] {
      const double g = out_grad(id)(0, 0);
      const auto n = static_cast<Eigen::Index>(t.size());
      Matrix dz(n, 1);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double ti = t[static_cast<size_t>(i)] ? 1.0 : 0.0;
        const double d_bce = (s(i) - ti) / static_cast<double>(n);
        const double d_dice_ds = (2.0 * ti * denom - (2.0 * inter + kSmooth)) / (denom * denom);
        dz(i, 0) = g * (lambda_bce * d_bce - lambda_dice * d_dice_ds * s(i) * (1.0 - s(i)));
      }
      accumulate(logits, dz);
    };
  }
  return out;
}

}  // namespace surgtrack
