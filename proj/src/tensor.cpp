#include "forec/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace forec::ad {

namespace {

long checked_size(const std::vector<long>& shape) {
  long n = 1;
  for (const long d : shape) {
    if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<long> shape) : shape_(std::move(shape)) {
  size_ = checked_size(shape_);
  data_ = std::make_shared<const std::vector<double>>(static_cast<size_t>(size_), 0.0);
}

Tensor::Tensor(std::vector<long> shape, std::vector<double> values)
    : shape_(std::move(shape)) {
  size_ = checked_size(shape_);
  if (size_ != static_cast<long>(values.size())) {
    throw std::invalid_argument("Tensor: shape/data size mismatch");
  }
  data_ = std::make_shared<const std::vector<double>>(std::move(values));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::zeros(std::vector<long> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::ones(std::vector<long> shape) {
  Tensor t(std::move(shape));
  return Tensor(t.shape_, std::vector<double>(static_cast<size_t>(t.size_), 1.0));
}

long Tensor::rows() const {
  if (shape_.size() == 2) return shape_[0];
  if (shape_.size() == 1) return 1;
  throw std::invalid_argument("Tensor::rows: rank must be 1 or 2");
}

long Tensor::cols() const {
  if (shape_.size() == 2) return shape_[1];
  if (shape_.size() == 1) return shape_[0];
  throw std::invalid_argument("Tensor::cols: rank must be 1 or 2");
}

double Tensor::at(long r, long c) const {
  return (*data_)[static_cast<size_t>(r * cols() + c)];
}

double Tensor::value() const {
  if (size_ != 1) throw std::invalid_argument("Tensor::value: not a scalar");
  return (*data_)[0];
}

bool Tensor::all_finite() const {
  if (!data_) return true;
  for (const double v : *data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool Tensor::bits_equal(const Tensor& other) const {
  if (shape_ != other.shape_) return false;
  if (size_ == 0) return true;
  return std::memcmp(data_->data(), other.data_->data(),
                     static_cast<size_t>(size_) * sizeof(double)) == 0;
}

std::string Tensor::shape_str() const {
  std::ostringstream ss;
  ss << "[";
  for (size_t i = 0; i < shape_.size(); ++i) {
    if (i) ss << "x";
    ss << shape_[i];
  }
  ss << "]";
  return ss.str();
}

}  // namespace forec::ad
