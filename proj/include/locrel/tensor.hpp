#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace locrel {

/// Dense row-major tensor over float or double. Conv activations use the
/// convention {channels, length}; dense activations are flat {dim}.
template <class T>
struct Tensor {
  std::vector<size_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<size_t> s) : shape(std::move(s)), data(count(shape), T(0)) {}
  Tensor(std::vector<size_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (count(shape) != data.size()) throw std::invalid_argument("tensor: shape/data size mismatch");
  }

  static size_t count(const std::vector<size_t>& s) {
    size_t n = 1;
    for (size_t d : s) {
      if (d == 0) throw std::invalid_argument("tensor: zero dimension");
      n *= d;
    }
    return n;
  }

  size_t size() const { return data.size(); }
  size_t dim(size_t i) const { return shape.at(i); }
  size_t rank() const { return shape.size(); }

  T& operator[](size_t i) { return data[i]; }
  const T& operator[](size_t i) const { return data[i]; }

  // 2-D access, shape {d0, d1}
  T& at(size_t i, size_t j) { return data[i * shape[1] + j]; }
  const T& at(size_t i, size_t j) const { return data[i * shape[1] + j]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (const T& v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

inline std::string shape_str(const std::vector<size_t>& s) {
  std::string r = "{";
  for (size_t i = 0; i < s.size(); ++i) r += (i ? "," : "") + std::to_string(s[i]);
  return r + "}";
}

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace locrel
