#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "transpotter/tensor.hpp"

namespace transpotter {

// Per-frame visual feature matrix. Values are 32-bit on disk regardless of
// compute precision.
struct FeatureSequence {
  std::uint32_t frames = 0;
  std::uint32_t dim = 0;
  std::vector<float> values;  // frames x dim, row-major

  float& at(std::size_t t, std::size_t k) { return values[t * dim + k]; }
  const float& at(std::size_t t, std::size_t k) const { return values[t * dim + k]; }

  template <typename T>
  Tensor<T> as_tensor() const {
    Tensor<T> out = Tensor<T>::zeros({frames, dim});
    for (std::size_t i = 0; i < values.size(); ++i) out.data[i] = static_cast<T>(values[i]);
    return out;
  }

  // Rows [start, end).
  FeatureSequence crop(std::uint32_t start, std::uint32_t end) const;
};

// TPFT container: magic "TPFT", u32 version=1, u32 T, u32 d_in, then
// T*d_in little-endian f32 row-major. write then read is bit-exact.
FeatureSequence read_features(const std::string& path);
void write_features(const std::string& path, const FeatureSequence& fs);

// Reads only the 16-byte header; used for cheap manifest validation.
std::pair<std::uint32_t, std::uint32_t> read_feature_header(const std::string& path);

}  // namespace transpotter
