#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "trajtok/error.hpp"

namespace trajtok {

// Dense row-major numeric array. float is the working precision everywhere;
// the double instantiation exists for gradient verification only and never
// touches the file format.
template <typename T>
class TensorT {
 public:
  // Empty placeholder (rank 0, no storage). Useful for optional parameters.
  TensorT() = default;

  explicit TensorT(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(checked_size(shape_), T(0)) {}

  TensorT(std::vector<std::size_t> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_size(shape_) != data_.size())
      raise(ErrorCode::InvalidShape, "data length " + std::to_string(data_.size()) +
                                         " does not match shape " + shape_str(shape_));
  }

  static TensorT full(std::vector<std::size_t> shape, T value) {
    TensorT t(std::move(shape));
    for (auto& v : t.data_) v = value;
    return t;
  }

  bool empty() const { return data_.empty(); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t i) const {
    assert(i < shape_.size());
    return shape_[i];
  }
  const std::vector<std::size_t>& shape() const { return shape_; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](std::size_t i) {
    assert(i < data_.size());
    return data_[i];
  }
  const T& operator[](std::size_t i) const {
    assert(i < data_.size());
    return data_[i];
  }

  template <typename... Is>
  T& operator()(Is... is) {
    return data_[offset(is...)];
  }
  template <typename... Is>
  const T& operator()(Is... is) const {
    return data_[offset(is...)];
  }

  template <typename... Is>
  std::size_t offset(Is... is) const {
    constexpr std::size_t n = sizeof...(Is);
    assert(n == shape_.size());
    const std::size_t idx[n] = {static_cast<std::size_t>(is)...};
    std::size_t off = 0;
    for (std::size_t d = 0; d < n; ++d) {
      assert(idx[d] < shape_[d]);
      off = off * shape_[d] + idx[d];
    }
    return off;
  }

  bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

  void fill(T value) {
    for (auto& v : data_) v = value;
  }

  bool all_finite() const {
    for (const T& v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void ensure_finite(const char* what) const {
    if (!all_finite()) raise(ErrorCode::NonFinite, std::string(what) + " contains NaN or Inf");
  }

  std::string shape_str() const { return shape_str(shape_); }

  static std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
  }

 private:
  static std::size_t checked_size(const std::vector<std::size_t>& shape) {
    if (shape.empty()) raise(ErrorCode::InvalidShape, "shape must have rank >= 1");
    std::size_t n = 1;
    for (std::size_t d : shape) {
      if (d == 0) raise(ErrorCode::InvalidShape, "zero dimension in shape " + shape_str(shape));
      if (d > std::size_t(-1) / n) raise(ErrorCode::InvalidShape, "shape overflows size_t");
      n *= d;
    }
    return n;
  }

  std::vector<std::size_t> shape_;
  std::vector<T> data_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

template <typename To, typename From>
TensorT<To> tensor_cast(const TensorT<From>& src) {
  if (src.empty()) return {};
  std::vector<To> data(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) data[i] = static_cast<To>(src[i]);
  return TensorT<To>(src.shape(), std::move(data));
}

}  // namespace trajtok
