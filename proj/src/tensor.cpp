#include "pixelcritic/tensor.hpp"

#include <cmath>
#include <stdexcept>

#include "pixelcritic/errors.hpp"

namespace pixelcritic {

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ConfigError("tensor dimensions must be positive, got " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data) : shape_(std::move(shape)) {
  if (shape_numel(shape_) != data.size())
    throw ConfigError("tensor data length " + std::to_string(data.size()) +
                      " does not match shape " + shape_str(shape_));
  data_ = std::move(data);
}

Tensor Tensor::full(std::vector<int> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

namespace {

std::size_t flat_index(const std::vector<int>& shape, std::initializer_list<int> idx) {
  if (idx.size() != shape.size())
    throw std::invalid_argument("index rank " + std::to_string(idx.size()) +
                                " does not match tensor shape " + shape_str(shape));
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (int i : idx) {
    if (i < 0 || i >= shape[axis])
      throw std::out_of_range("index " + std::to_string(i) + " out of range for axis " +
                              std::to_string(axis) + " of " + shape_str(shape));
    flat = flat * static_cast<std::size_t>(shape[axis]) + static_cast<std::size_t>(i);
    ++axis;
  }
  return flat;
}

}  // namespace

double& Tensor::at(std::initializer_list<int> idx) { return data_[flat_index(shape_, idx)]; }

double Tensor::at(std::initializer_list<int> idx) const { return data_[flat_index(shape_, idx)]; }

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::fill(double value) {
  for (double& v : data_) v = value;
}

double Tensor::item() const {
  if (data_.size() != 1)
    throw std::invalid_argument("item() requires a scalar tensor, got shape " + shape_str(shape_));
  return data_[0];
}

}  // namespace pixelcritic
