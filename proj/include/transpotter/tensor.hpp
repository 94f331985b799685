#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "transpotter/errors.hpp"

namespace transpotter {

// Dense row-major tensor. Rank is dynamic but nearly everything in this
// project is a scalar, a vector or a matrix.
template <typename T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> data;

  Tensor() = default;
  Tensor(std::initializer_list<std::size_t> s, std::vector<T> d)
      : shape(s), data(std::move(d)) {
    if (count(shape) != data.size()) throw ShapeError("data length does not match shape");
  }

  static std::size_t count(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
  }

  static Tensor zeros(std::vector<std::size_t> s) {
    Tensor t;
    t.data.assign(count(s), T(0));
    t.shape = std::move(s);
    return t;
  }

  static Tensor full(std::vector<std::size_t> s, T v) {
    Tensor t;
    t.data.assign(count(s), v);
    t.shape = std::move(s);
    return t;
  }

  static Tensor scalar(T v) { return Tensor({{1}}, {v}); }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }

  // 2-D accessors; rank-1 tensors are treated as single rows.
  std::size_t rows() const { return rank() >= 2 ? shape[0] : 1; }
  std::size_t cols() const {
    if (rank() == 0) return size();
    return rank() >= 2 ? shape[rank() - 1] : shape[0];
  }

  T& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }
};

}  // namespace transpotter
