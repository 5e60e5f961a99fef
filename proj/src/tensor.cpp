#include "surgtrack/tensor.hpp"

#include "surgtrack/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <string>
#include <tuple>

namespace surgtrack {

void ImageTensor::validate() const {
  if (height <= 0 || width <= 0 || pixels.rows() != static_cast<Eigen::Index>(height) * width || pixels.cols() != 3) {
    throw ShapeError("image tensor has inconsistent dimensions");
  }
  if (!pixels.allFinite()) throw NumericError("image tensor contains non-finite values");
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](std::uint8_t v) { return v != 0; }));
}

namespace {

void check_patchable(const ImageTensor& image, int patch_size) {
  if (patch_size <= 0 || image.height % patch_size != 0 || image.width % patch_size != 0) {
    throw ShapeError("image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                     " is not divisible into " + std::to_string(patch_size) + "-pixel patches");
  }
}

Matrix patches_impl(const ImageTensor& image, const BinaryMask* mask, int p) {
  check_patchable(image, p);
  const int channels = mask ? 4 : 3;
  const int gh = image.height / p;
  const int gw = image.width / p;
  Matrix out(static_cast<Eigen::Index>(gh) * gw, static_cast<Eigen::Index>(p) * p * channels);
  for (int gy = 0; gy < gh; ++gy) {
    for (int gx = 0; gx < gw; ++gx) {
      const Eigen::Index row = static_cast<Eigen::Index>(gy) * gw + gx;
      Eigen::Index col = 0;
      for (int py = 0; py < p; ++py) {
        for (int px = 0; px < p; ++px) {
          const int y = gy * p + py;
          const int x = gx * p + px;
          for (int c = 0; c < 3; ++c) out(row, col++) = image.at(y, x, c);
          if (mask) out(row, col++) = mask->at(y, x) ? 1.0 : 0.0;
        }
      }
    }
  }
  return out;
}

}  // namespace

Matrix extract_patches(const ImageTensor& image, int patch_size) { return patches_impl(image, nullptr, patch_size); }

Matrix extract_patches(const ImageTensor& image, const BinaryMask& mask, int patch_size) {
  if (mask.height != image.height || mask.width != image.width) {
    throw ShapeError("mask dimensions do not match frame dimensions");
  }
  return patches_impl(image, &mask, patch_size);
}

const Matrix& bilinear_operator(int in_h, int in_w, int out_h, int out_w) {
  static std::mutex mu;
  static std::map<std::tuple<int, int, int, int>, std::unique_ptr<Matrix>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[{in_h, in_w, out_h, out_w}];
  if (slot) return *slot;

  auto op = std::make_unique<Matrix>(Matrix::Zero(static_cast<Eigen::Index>(out_h) * out_w,
                                                  static_cast<Eigen::Index>(in_h) * in_w));
  auto axis = [](int out_i, int in_n, int out_n, int& i0, int& i1, double& t) {
    double src = (out_i + 0.5) * in_n / out_n - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in_n - 1));
    i0 = static_cast<int>(std::floor(src));
    i1 = std::min(i0 + 1, in_n - 1);
    t = src - i0;
  };
  for (int y = 0; y < out_h; ++y) {
    int y0, y1;
    double ty;
    axis(y, in_h, out_h, y0, y1, ty);
    for (int x = 0; x < out_w; ++x) {
      int x0, x1;
      double tx;
      axis(x, in_w, out_w, x0, x1, tx);
      const Eigen::Index r = static_cast<Eigen::Index>(y) * out_w + x;
      (*op)(r, y0 * in_w + x0) += (1 - ty) * (1 - tx);
      (*op)(r, y0 * in_w + x1) += (1 - ty) * tx;
      (*op)(r, y1 * in_w + x0) += ty * (1 - tx);
      (*op)(r, y1 * in_w + x1) += ty * tx;
    }
  }
  slot = std::move(op);
  return *slot;
}

}  // namespace surgtrack
