#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace surgtrack {

/// Row-major dense matrix. Token grids are N×d with one token per row;
/// images are (H·W)×C with pixels in row-major order.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using Vector = Eigen::VectorXd;

/// RGB image with channels normalized to [0,1].
struct ImageTensor {
  int height = 0;
  int width = 0;
  Matrix pixels;  // (height*width) × 3

  ImageTensor() = default;
  ImageTensor(int h, int w) : height(h), width(w), pixels(Matrix::Zero(static_cast<Eigen::Index>(h) * w, 3)) {}

  double& at(int y, int x, int c) { return pixels(static_cast<Eigen::Index>(y) * width + x, c); }
  double at(int y, int x, int c) const { return pixels(static_cast<Eigen::Index>(y) * width + x, c); }

  /// Throws ShapeError on inconsistent dims, NumericError on non-finite values.
  void validate() const;
};

struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;  // 0 or 1, row-major

  BinaryMask() = default;
  BinaryMask(int h, int w) : height(h), width(w), data(static_cast<size_t>(h) * w, 0) {}

  std::uint8_t& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }

  std::size_t count() const;
  bool empty() const { return count() == 0; }
  bool operator==(const BinaryMask&) const = default;
};

/// Splits an image into non-overlapping square patches. Row i holds patch i
/// (row-major patch order), flattened as (py, px, channel).
Matrix extract_patches(const ImageTensor& image, int patch_size);

/// As above with the mask appended as a fourth channel.
Matrix extract_patches(const ImageTensor& image, const BinaryMask& mask, int patch_size);

/// Dense (out_h·out_w)×(in_h·in_w) bilinear interpolation operator with
/// half-pixel centers and edge clamping. Rows sum to 1.
const Matrix& bilinear_operator(int in_h, int in_w, int out_h, int out_w);

}  // namespace surgtrack
