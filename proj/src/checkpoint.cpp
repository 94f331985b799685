#include "transpotter/checkpoint.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "transpotter/errors.hpp"

namespace transpotter {

namespace {

constexpr char kMagic[4] = {'T', 'P', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xffu),
                        static_cast<unsigned char>((v >> 8) & 0xffu),
                        static_cast<unsigned char>((v >> 16) & 0xffu),
                        static_cast<unsigned char>((v >> 24) & 0xffu)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (is.gcount() != 4) throw FormatError("checkpoint truncated at " + what, 0);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const Parameters<float>& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open checkpoint for writing: " + path, 0);
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  std::string cj = cfg.to_json();
  put_u32(os, static_cast<std::uint32_t>(cj.size()));
  os.write(cj.data(), static_cast<std::streamsize>(cj.size()));
  put_u32(os, static_cast<std::uint32_t>(params.tensors.size()));
  for (const auto& [name, t] : params.tensors) {  // std::map: sorted, stable
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(os, static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t dim : t.shape) put_u32(os, static_cast<std::uint32_t>(dim));
    static_assert(sizeof(float) == 4);
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * 4));
  }
  if (!os) throw FormatError("checkpoint write failed: " + path, 0);
}

std::pair<ModelConfig, Parameters<float>> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint: " + path, 0);
  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("bad checkpoint magic in " + path, 0);
  std::uint32_t version = get_u32(is, "version");
  if (version != kVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  std::uint32_t cj_len = get_u32(is, "config length");
  std::string cj(cj_len, '\0');
  is.read(cj.data(), cj_len);
  if (is.gcount() != static_cast<std::streamsize>(cj_len))
    throw FormatError("checkpoint truncated in config", 12);
  ModelConfig cfg = ModelConfig::from_json(cj);

  auto expected = parameter_shapes(cfg);
  Parameters<float> params;
  std::uint32_t n = get_u32(is, "tensor count");
  for (std::uint32_t i = 0; i < n; ++i) {
    std::uint32_t name_len = get_u32(is, "tensor name length");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (is.gcount() != static_cast<std::streamsize>(name_len))
      throw FormatError("checkpoint truncated in tensor name", 0);
    std::uint32_t rank = get_u32(is, "tensor rank");
    std::vector<std::size_t> shape(rank);
    std::size_t count = 1;
    for (auto& dim : shape) {
      dim = get_u32(is, "tensor dim");
      count *= dim;
    }
    auto it = expected.find(name);
    if (it == expected.end())
      throw ValidationError("checkpoint tensor '" + name + "' does not belong to this config");
    if (it->second.shape != shape)
      throw ValidationError("checkpoint tensor '" + name + "' has the wrong shape");
    Tensor<float> t = Tensor<float>::zeros(shape);
    is.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(count * 4));
    if (is.gcount() != static_cast<std::streamsize>(count * 4))
      throw FormatError("checkpoint truncated in tensor '" + name + "'", 0);
    for (float v : t.data)
      if (!std::isfinite(v)) throw ValidationError("non-finite value in tensor '" + name + "'");
    if (!params.tensors.emplace(name, std::move(t)).second)
      throw ValidationError("duplicate checkpoint tensor '" + name + "'");
  }
  if (params.tensors.size() != expected.size())
    throw ValidationError("checkpoint is missing " +
                          std::to_string(expected.size() - params.tensors.size()) +
                          " parameter tensor(s)");
  return {cfg, std::move(params)};
}

}  // namespace transpotter
