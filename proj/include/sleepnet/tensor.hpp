#pragma once

#include <cstddef>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sleepnet/common.hpp"

namespace sleepnet {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

// Dense n-dimensional array. Gradient storage is allocated only for tensors
// that take part in a backward pass.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)), values_(shape_numel(shape_), T{}) {}

  Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != shape_numel(shape_)) {
      throw ShapeError("tensor: " + std::to_string(values_.size()) + " values do not fill shape " +
                       shape_str(shape_));
    }
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, T v) {
    Tensor t(std::move(shape));
    for (auto& x : t.values_) x = v;
    return t;
  }

  static Tensor scalar(T v) { return Tensor({1}, {v}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }
  std::size_t numel() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  std::span<const T> values() const { return values_; }
  std::span<T> values() { return values_; }
  const T* data() const { return values_.data(); }
  T* data() { return values_.data(); }
  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  bool has_grad() const { return !grad_.empty(); }

  std::span<T> grad() {
    if (grad_.empty()) grad_.assign(values_.size(), T{});
    return grad_;
  }

  std::span<const T> grad() const { return grad_; }

  void zero_grad() {
    if (!grad_.empty()) grad_.assign(values_.size(), T{});
  }

  void drop_grad() { grad_.clear(); }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(values_.size());
    for (std::size_t i = 0; i < values_.size(); ++i) out[i] = static_cast<U>(values_[i]);
    return Tensor<U>(shape_, std::move(out));
  }

 private:
  Shape shape_;
  std::vector<T> values_;
  std::vector<T> grad_;
};

template <typename T>
void require_finite(const Tensor<T>& t, const std::string& what) {
  if (!all_finite(t.values())) {
    throw NumericError("non-finite values in " + what + " " + shape_str(t.shape()));
  }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const std::string& op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(op + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

}  // namespace sleepnet
