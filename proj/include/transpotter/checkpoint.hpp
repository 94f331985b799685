#pragma once

#include <string>
#include <utility>

#include "transpotter/model.hpp"
#include "transpotter/params.hpp"

namespace transpotter {

// Binary container: magic "TPCK", u32 version=1, u32 config-JSON length and
// bytes, u32 tensor count, then per tensor a length-prefixed name, u32 rank,
// u32 dims and little-endian f32 values. Tensors are written sorted by name.
// Loading rejects any mismatch against parameter_shapes(config).
void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const Parameters<float>& params);
std::pair<ModelConfig, Parameters<float>> load_checkpoint(const std::string& path);

}  // namespace transpotter
