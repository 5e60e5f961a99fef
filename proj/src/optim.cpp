#include "surgtrack/optim.hpp"

#include "surgtrack/error.hpp"

#include <cmath>

namespace surgtrack {

void Adam::update(const std::string& name, Matrix& value, const Matrix& grad) {
  if (grad.rows() != value.rows() || grad.cols() != value.cols()) throw ShapeError("Adam: gradient shape mismatch for " + name);
  auto& st = state_[name];
  if (st.m.size() == 0) {
    st.m = Matrix::Zero(value.rows(), value.cols());
    st.v = Matrix::Zero(value.rows(), value.cols());
  }
  st.m = beta1_ * st.m + (1 - beta1_) * grad;
  st.v = beta2_ * st.v + (1 - beta2_) * grad.cwiseAbs2();
  const double c1 = 1 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1 - std::pow(beta2_, static_cast<double>(t_));
  if (lr_ == 0.0) return;
  value.array() -= lr_ * (st.m.array() / c1) / ((st.v.array() / c2).sqrt() + eps_);
}

}  // namespace surgtrack
