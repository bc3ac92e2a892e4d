#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "pie/common.hpp"

namespace pie {

// Dense row-major tensor. Rank is dynamic but everything in the model is
// rank 1 or 2.
template <class T>
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<T> v;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
    v.assign(static_cast<size_t>(numel_of(shape)), T(0));
  }
  Tensor(std::vector<int64_t> s, std::vector<T> data) : shape(std::move(s)), v(std::move(data)) {
    if (static_cast<int64_t>(v.size()) != numel_of(shape))
      throw ProgrammingError("tensor data does not match shape");
  }

  static int64_t numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
  }
  static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }
  static Tensor scalar(T x) { return Tensor({1}, {x}); }

  int64_t numel() const { return static_cast<int64_t>(v.size()); }
  int64_t rows() const { return shape.empty() ? 0 : shape[0]; }
  int64_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  T& at(int64_t i, int64_t j) { return v[static_cast<size_t>(i * cols() + j)]; }
  const T& at(int64_t i, int64_t j) const { return v[static_cast<size_t>(i * cols() + j)]; }
  T* row_ptr(int64_t i) { return v.data() + i * cols(); }
  const T* row_ptr(int64_t i) const { return v.data() + i * cols(); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const {
    for (T x : v)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }
  void fill(T x) { std::fill(v.begin(), v.end(), x); }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.v.resize(v.size());
    for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
    return out;
  }
};

}  // namespace pie
