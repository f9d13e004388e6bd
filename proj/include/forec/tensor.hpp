#pragma once

#include <memory>
#include <vector>

namespace forec::ad {

// Dense row-major tensor of 64-bit floats. Immutable once created: ops
// produce new tensors, so recorded tape values stay valid and frozen
// parameters can be compared byte-for-byte across training.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<long> shape);  // zero-filled
  Tensor(std::vector<long> shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor zeros(std::vector<long> shape);
  static Tensor ones(std::vector<long> shape);

  const std::vector<long>& shape() const { return shape_; }
  long size() const { return size_; }
  bool empty() const { return size_ == 0; }

  // Rank-2 accessors; rank-1 tensors behave as single-row matrices.
  long rows() const;
  long cols() const;
  double at(long r, long c) const;

  double operator[](long i) const { return (*data_)[static_cast<size_t>(i)]; }
  double value() const;  // scalar tensors only
  const std::vector<double>& data() const { return *data_; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  bool bits_equal(const Tensor& other) const;

  std::string shape_str() const;

 private:
  std::vector<long> shape_;
  long size_ = 0;
  std::shared_ptr<const std::vector<double>> data_;
};

}  // namespace forec::ad
