#pragma once

#include <map>
#include <stdexcept>
#include <string>

#include "transpotter/tensor.hpp"

namespace transpotter {

// Named trainable tensors. std::map keeps iteration order deterministic,
// which the optimizer and serialization rely on.
template <typename T>
struct Parameters {
  std::map<std::string, Tensor<T>> tensors;

  const Tensor<T>& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw std::out_of_range("no parameter tensor named " + name);
    return it->second;
  }

  std::size_t coordinate_count() const {
    std::size_t n = 0;
    for (const auto& [k, t] : tensors) n += t.size();
    return n;
  }

  template <typename U>
  Parameters<U> cast() const {
    Parameters<U> out;
    for (const auto& [k, t] : tensors) {
      Tensor<U> u = Tensor<U>::zeros(t.shape);
      for (std::size_t i = 0; i < t.size(); ++i) u.data[i] = static_cast<U>(t.data[i]);
      out.tensors[k] = std::move(u);
    }
    return out;
  }
};

}  // namespace transpotter
