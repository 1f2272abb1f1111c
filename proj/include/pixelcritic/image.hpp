#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pixelcritic/tensor.hpp"

namespace pixelcritic {

// H x W scalar field. Serves as noise field, blend mask, binary label map
// and per-pixel error map; the semantic aliases below name those roles.
class Field {
 public:
  Field() = default;
  Field(int height, int width, double value = 0.0);

  int height() const { return h_; }
  int width() const { return w_; }
  std::size_t size() const { return values_.size(); }

  double& at(int i, int j) { return values_[static_cast<std::size_t>(i) * w_ + j]; }
  double at(int i, int j) const { return values_[static_cast<std::size_t>(i) * w_ + j]; }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  double mean() const;
  double min() const;
  double max() const;

 private:
  int h_ = 0, w_ = 0;
  std::vector<double> values_;
};

using ScalarField = Field;
using MaskMap = Field;   // 1 = real source, 0 = generated source
using LabelMap = Field;  // binary {0,1}
using ErrorMap = Field;  // per-pixel probability of error, in (0,1)

// H x W x C image, channel-interleaved (HWC), float64 values in [0,1].
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels, double value = 0.0);

  int height() const { return h_; }
  int width() const { return w_; }
  int channels() const { return c_; }
  std::size_t size() const { return values_.size(); }

  double& at(int i, int j, int c) {
    return values_[(static_cast<std::size_t>(i) * w_ + j) * c_ + c];
  }
  double at(int i, int j, int c) const {
    return values_[(static_cast<std::size_t>(i) * w_ + j) * c_ + c];
  }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  void clamp01();

 private:
  int h_ = 0, w_ = 0, c_ = 0;
  std::vector<double> values_;
};

// HWC image <-> [1,C,H,W] tensor for the network
Tensor image_to_tensor(const Image& img);
Image tensor_to_image(const Tensor& t);  // expects [1,C,H,W]
Tensor field_to_tensor(const Field& f);  // [1,1,H,W]
Field tensor_to_field(const Tensor& t);  // expects [1,1,H,W] or [H,W]

// PNG I/O, 8 bits per channel. Float to byte via round(v*255), byte to
// float via b/255. Writing is byte-deterministic for identical inputs.
void save_png(const Image& img, const std::filesystem::path& path);
Image load_png(const std::filesystem::path& path);

// label maps are single-channel PNGs with values {0,255}
void save_label_png(const Field& label, const std::filesystem::path& path);
Field load_label_png(const std::filesystem::path& path);

// grayscale dump of an arbitrary [0,1] field (e.g. error maps)
void save_field_png(const Field& field, const std::filesystem::path& path);
Field load_field_png(const std::filesystem::path& path);

std::uint8_t float_to_byte(double v);
double byte_to_float(std::uint8_t b);

}  // namespace pixelcritic
