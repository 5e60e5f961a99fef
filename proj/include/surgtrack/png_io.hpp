#pragma once

#include "surgtrack/tensor.hpp"

#include <string>

namespace surgtrack {

/// Any PNG decoded to RGB, channels scaled by 1/255.
ImageTensor read_png_rgb(const std::string& path);
/// Any PNG decoded to grayscale; nonzero pixels are foreground.
BinaryMask read_png_mask(const std::string& path);

/// 8-bit RGB; values are clamped to [0,1] and rounded to the nearest level.
void write_png_rgb(const std::string& path, const ImageTensor& image);
/// 8-bit single channel, 0 background, 255 foreground.
void write_png_mask(const std::string& path, const BinaryMask& mask);

}  // namespace surgtrack
