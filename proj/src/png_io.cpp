#include "surgtrack/png_io.hpp"

#include "surgtrack/error.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

namespace surgtrack {

namespace {

std::vector<png_byte> read_raw(const std::string& path, png_uint_32 format, int& height, int& width) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw DataError("cannot read PNG " + path + ": " + img.message);
  }
  img.format = format;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw DataError("cannot decode PNG " + path + ": " + img.message);
  }
  height = static_cast<int>(img.height);
  width = static_cast<int>(img.width);
  return buf;
}

void write_raw(const std::string& path, const std::vector<png_byte>& buf, int height, int width, png_uint_32 format) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = format;
  if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr)) {
    throw DataError("cannot write PNG " + path + ": " + img.message);
  }
}

}  // namespace

ImageTensor read_png_rgb(const std::string& path) {
  int h = 0, w = 0;
  const auto buf = read_raw(path, PNG_FORMAT_RGB, h, w);
  ImageTensor img(h, w);
  for (std::size_t i = 0; i < buf.size(); ++i) img.pixels.data()[i] = buf[i] / 255.0;
  return img;
}

BinaryMask read_png_mask(const std::string& path) {
  int h = 0, w = 0;
  const auto buf = read_raw(path, PNG_FORMAT_GRAY, h, w);
  BinaryMask m(h, w);
  for (std::size_t i = 0; i < buf.size(); ++i) m.data[i] = buf[i] > 0 ? 1 : 0;
  return m;
}

void write_png_rgb(const std::string& path, const ImageTensor& image) {
  image.validate();
  std::vector<png_byte> buf(static_cast<std::size_t>(image.pixels.size()));
  for (std::size_t i = 0; i < buf.size(); ++i) {
    buf[i] = static_cast<png_byte>(std::lround(std::clamp(image.pixels.data()[i], 0.0, 1.0) * 255.0));
  }
  write_raw(path, buf, image.height, image.width, PNG_FORMAT_RGB);
}

void write_png_mask(const std::string& path, const BinaryMask& mask) {
  std::vector<png_byte> buf(mask.data.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = mask.data[i] ? 255 : 0;
  write_raw(path, buf, mask.height, mask.width, PNG_FORMAT_GRAY);
}

}  // namespace surgtrack
