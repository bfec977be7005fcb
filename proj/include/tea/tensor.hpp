#pragma once

// Shape-tagged dense row-major array. The only numeric currency between
// modules; float at runtime, double for verification runs.

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "tea/errors.hpp"

namespace tea {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
struct Tensor {
  static_assert(std::is_floating_point_v<T>);

  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(numel(shape), T(0)) {
    for (std::size_t d : shape)
      if (d == 0) throw ShapeError("tensor dims must be positive, got " + shape_str(shape));
  }
  Tensor(Shape s, T fill) : Tensor(std::move(s)) {
    std::fill(data.begin(), data.end(), fill);
  }
  Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
    if (numel(shape) != data.size())
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  bool empty() const { return data.empty(); }

  T* begin() { return data.data(); }
  T* end() { return data.data() + data.size(); }
  const T* begin() const { return data.data(); }
  const T* end() const { return data.data() + data.size(); }

  T& operator[](std::size_t i) { return data[i]; }
  T operator[](std::size_t i) const { return data[i]; }

  // 2-D accessors; rows x cols must match the shape.
  T& at2(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
  T at2(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

  Tensor<T> reshaped(Shape s) const {
    if (numel(s) != data.size())
      throw ShapeError("reshape " + shape_str(shape) + " -> " + shape_str(s) +
                       " changes element count");
    Tensor<T> out;
    out.shape = std::move(s);
    out.data = data;
    return out;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool same_shape(const Tensor<T>& other) const { return shape == other.shape; }
};

template <typename T>
Tensor<T> zeros_like(const Tensor<T>& t) {
  Tensor<T> out;
  out.shape = t.shape;
  out.data.assign(t.data.size(), T(0));
  return out;
}

template <typename T>
void require_finite(const Tensor<T>& t, const std::string& what) {
  if (!t.all_finite()) throw NumericError("non-finite values in " + what);
}

template <typename T>
void require_shape(const Tensor<T>& t, const Shape& expect, const std::string& what) {
  if (t.shape != expect)
    throw ShapeError(what + ": expected shape " + shape_str(expect) + ", got " +
                     shape_str(t.shape));
}

}  // namespace tea
