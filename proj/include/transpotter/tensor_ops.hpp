#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "transpotter/tensor.hpp"

namespace transpotter {

// Smallest value fed to log(); keeps BCE finite at saturated sigmoids.
inline constexpr double kLogFloor = 1e-12;

template <typename T>
using EigenMap =
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstEigenMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename T>
ConstEigenMap<T> as_matrix(const Tensor<T>& t) {
  return ConstEigenMap<T>(t.data.data(), static_cast<Eigen::Index>(t.rows()),
                          static_cast<Eigen::Index>(t.cols()));
}

template <typename T>
EigenMap<T> as_matrix(Tensor<T>& t) {
  return EigenMap<T>(t.data.data(), static_cast<Eigen::Index>(t.rows()),
                     static_cast<Eigen::Index>(t.cols()));
}

template <typename T>
T sigmoid(T x) {
  // Split form avoids overflow of exp() for large |x|.
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  T e = std::exp(x);
  return e / (T(1) + e);
}

// Stable softmax along one axis of a rank-1 or rank-2 tensor.
// axis 0 on a vector normalises the vector; on a matrix, axis 1 normalises rows
// and axis 0 normalises columns.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis = -1) {
  if (x.rank() > 2) throw ShapeError("softmax: rank > 2 unsupported");
  std::size_t rows = x.rows(), cols = x.cols();
  bool over_cols = x.rank() <= 1 || axis == 1 || axis == -1;
  std::size_t extent = over_cols ? cols : rows;
  if (extent == 0) throw std::domain_error("softmax: empty axis");

  Tensor<T> y = Tensor<T>::zeros(x.shape);
  std::size_t lanes = over_cols ? rows : cols;
  for (std::size_t l = 0; l < lanes; ++l) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t i = 0; i < extent; ++i) {
      T v = over_cols ? x.at(l, i) : x.at(i, l);
      mx = std::max(mx, v);
    }
    T sum = T(0);
    for (std::size_t i = 0; i < extent; ++i) {
      T v = std::exp((over_cols ? x.at(l, i) : x.at(i, l)) - mx);
      (over_cols ? y.at(l, i) : y.at(i, l)) = v;
      sum += v;
    }
    for (std::size_t i = 0; i < extent; ++i) (over_cols ? y.at(l, i) : y.at(i, l)) /= sum;
  }
  return y;
}

// gain * (x - mean) / sqrt(var + eps) + bias over the last axis, one row at a time.
// var is the population variance.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps) {
  std::size_t n = x.cols();
  if (gain.size() != n || bias.size() != n)
    throw ShapeError("layer_norm: gain/bias length " + std::to_string(gain.size()) + "/" +
                     std::to_string(bias.size()) + " vs feature width " + std::to_string(n));
  Tensor<T> y = Tensor<T>::zeros(x.shape);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    T mean = T(0);
    for (std::size_t c = 0; c < n; ++c) mean += x.at(r, c);
    mean /= static_cast<T>(n);
    T var = T(0);
    for (std::size_t c = 0; c < n; ++c) {
      T d = x.at(r, c) - mean;
      var += d * d;
    }
    var /= static_cast<T>(n);
    T inv = T(1) / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c)
      y.at(r, c) = gain.data[c] * (x.at(r, c) - mean) * inv + bias.data[c];
  }
  return y;
}

template <typename T>
T log_clamped(T x) {
  return std::log(std::max(x, static_cast<T>(kLogFloor)));
}

// C = A * B
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: " + a.shape_str() + " * " + b.shape_str());
  Tensor<T> c = Tensor<T>::zeros({a.rows(), b.cols()});
  as_matrix(c).noalias() = as_matrix(a) * as_matrix(b);
  return c;
}

// C = A * B^T
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.cols() != b.cols())
    throw ShapeError("matmul_nt: " + a.shape_str() + " * " + b.shape_str() + "^T");
  Tensor<T> c = Tensor<T>::zeros({a.rows(), b.rows()});
  as_matrix(c).noalias() = as_matrix(a) * as_matrix(b).transpose();
  return c;
}

// C = A^T * B
template <typename T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rows() != b.rows())
    throw ShapeError("matmul_tn: " + a.shape_str() + "^T * " + b.shape_str());
  Tensor<T> c = Tensor<T>::zeros({a.cols(), b.cols()});
  as_matrix(c).noalias() = as_matrix(a).transpose() * as_matrix(b);
  return c;
}

}  // namespace transpotter
