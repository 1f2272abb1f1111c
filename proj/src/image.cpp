#include "pixelcritic/image.hpp"

#include <algorithm>
#include <cmath>

#include "pixelcritic/errors.hpp"
#include "pixelcritic/png_io.hpp"

namespace pixelcritic {

Field::Field(int height, int width, double value)
    : h_(height), w_(width), values_(static_cast<std::size_t>(height) * width, value) {
  if (height <= 0 || width <= 0)
    throw ConfigError("field dimensions must be positive, got " + std::to_string(height) + "x" +
                      std::to_string(width));
}

double Field::mean() const {
  double acc = 0.0;
  for (double v : values_) acc += v;
  return values_.empty() ? 0.0 : acc / static_cast<double>(values_.size());
}

double Field::min() const { return *std::min_element(values_.begin(), values_.end()); }
double Field::max() const { return *std::max_element(values_.begin(), values_.end()); }

Image::Image(int height, int width, int channels, double value)
    : h_(height),
      w_(width),
      c_(channels),
      values_(static_cast<std::size_t>(height) * width * channels, value) {
  if (height <= 0 || width <= 0)
    throw ConfigError("image dimensions must be positive, got " + std::to_string(height) + "x" +
                      std::to_string(width));
  if (channels != 1 && channels != 3)
    throw ConfigError("image channels must be 1 or 3, got " + std::to_string(channels));
}

void Image::clamp01() {
  for (double& v : values_) v = std::clamp(v, 0.0, 1.0);
}

Tensor image_to_tensor(const Image& img) {
  Tensor t({1, img.channels(), img.height(), img.width()});
  for (int c = 0; c < img.channels(); ++c)
    for (int i = 0; i < img.height(); ++i)
      for (int j = 0; j < img.width(); ++j)
        t.at({0, c, i, j}) = img.at(i, j, c);
  return t;
}

Image tensor_to_image(const Tensor& t) {
  if (t.rank() != 4 || t.dim(0) != 1)
    throw ConfigError("expected [1,C,H,W] tensor, got " + shape_str(t.shape()));
  Image img(t.dim(2), t.dim(3), t.dim(1));
  for (int c = 0; c < img.channels(); ++c)
    for (int i = 0; i < img.height(); ++i)
      for (int j = 0; j < img.width(); ++j)
        img.at(i, j, c) = t.at({0, c, i, j});
  return img;
}

Tensor field_to_tensor(const Field& f) {
  Tensor t({1, 1, f.height(), f.width()});
  std::copy_n(f.data(), f.size(), t.data());
  return t;
}

Field tensor_to_field(const Tensor& t) {
  int h = 0, w = 0;
  if (t.rank() == 4 && t.dim(0) == 1 && t.dim(1) == 1) {
    h = t.dim(2);
    w = t.dim(3);
  } else if (t.rank() == 2) {
    h = t.dim(0);
    w = t.dim(1);
  } else {
    throw ConfigError("expected [1,1,H,W] or [H,W] tensor, got " + shape_str(t.shape()));
  }
  Field f(h, w);
  std::copy_n(t.data(), f.size(), f.data());
  return f;
}

std::uint8_t float_to_byte(double v) {
  const double scaled = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
  return static_cast<std::uint8_t>(scaled);
}

double byte_to_float(std::uint8_t b) { return static_cast<double>(b) / 255.0; }

void save_png(const Image& img, const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) bytes[i] = float_to_byte(img.data()[i]);
  write_png_file(path, img.width(), img.height(), img.channels(), bytes);
}

Image load_png(const std::filesystem::path& path) {
  RawPng raw = read_png_file(path);
  const int channels = raw.channels == 4 ? 3 : raw.channels;  // drop alpha
  Image img(raw.height, raw.width, channels);
  for (int i = 0; i < raw.height; ++i)
    for (int j = 0; j < raw.width; ++j)
      for (int c = 0; c < channels; ++c)
        img.at(i, j, c) = byte_to_float(
            raw.pixels[(static_cast<std::size_t>(i) * raw.width + j) * raw.channels + c]);
  return img;
}

void save_label_png(const Field& label, const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes(label.size());
  for (std::size_t i = 0; i < label.size(); ++i)
    bytes[i] = label.data()[i] >= 0.5 ? 255 : 0;
  write_png_file(path, label.width(), label.height(), 1, bytes);
}

Field load_label_png(const std::filesystem::path& path) {
  RawPng raw = read_png_file(path);
  if (raw.channels != 1) throw DataError("label map must be single-channel: " + path.string());
  Field f(raw.height, raw.width);
  for (std::size_t i = 0; i < f.size(); ++i) f.data()[i] = raw.pixels[i] >= 128 ? 1.0 : 0.0;
  return f;
}

void save_field_png(const Field& field, const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes(field.size());
  for (std::size_t i = 0; i < field.size(); ++i) bytes[i] = float_to_byte(field.data()[i]);
  write_png_file(path, field.width(), field.height(), 1, bytes);
}

Field load_field_png(const std::filesystem::path& path) {
  RawPng raw = read_png_file(path);
  if (raw.channels != 1) throw DataError("field map must be single-channel: " + path.string());
  Field f(raw.height, raw.width);
  for (std::size_t i = 0; i < f.size(); ++i) f.data()[i] = byte_to_float(raw.pixels[i]);
  return f;
}

}  // namespace pixelcritic
