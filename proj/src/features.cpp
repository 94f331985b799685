#include "transpotter/features.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "transpotter/errors.hpp"

namespace transpotter {

namespace {

constexpr char kMagic[4] = {'T', 'P', 'F', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xffu),
                        static_cast<unsigned char>((v >> 8) & 0xffu),
                        static_cast<unsigned char>((v >> 16) & 0xffu),
                        static_cast<unsigned char>((v >> 24) & 0xffu)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, std::size_t offset, const std::string& what) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (is.gcount() != 4) throw FormatError("truncated " + what, offset);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

FeatureSequence FeatureSequence::crop(std::uint32_t start, std::uint32_t end) const {
  if (start >= end || end > frames)
    throw ShapeError("bad crop [" + std::to_string(start) + "," + std::to_string(end) +
                     ") of " + std::to_string(frames) + " frames");
  FeatureSequence out;
  out.frames = end - start;
  out.dim = dim;
  out.values.assign(values.begin() + static_cast<std::ptrdiff_t>(start) * dim,
                    values.begin() + static_cast<std::ptrdiff_t>(end) * dim);
  return out;
}

void write_features(const std::string& path, const FeatureSequence& fs) {
  if (fs.frames == 0 || fs.dim == 0)
    throw ShapeError("feature sequence must have frames >= 1 and dim >= 1");
  if (fs.values.size() != static_cast<std::size_t>(fs.frames) * fs.dim)
    throw ShapeError("feature buffer size does not match header");
  for (float v : fs.values)
    if (!std::isfinite(v)) throw ValidationError("non-finite feature value in " + path);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open for writing: " + path, 0);
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u32(os, fs.frames);
  put_u32(os, fs.dim);
  static_assert(sizeof(float) == 4);
  // Little-endian hosts only; asserted rather than byte-swapped.
  os.write(reinterpret_cast<const char*>(fs.values.data()),
           static_cast<std::streamsize>(fs.values.size() * 4));
  if (!os) throw FormatError("write failed: " + path, 16);
}

std::pair<std::uint32_t, std::uint32_t> read_feature_header(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open: " + path, 0);
  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("bad magic in " + path, 0);
  std::uint32_t version = get_u32(is, 4, "version in " + path);
  if (version != kVersion)
    throw FormatError("unsupported version " + std::to_string(version) + " in " + path, 4);
  std::uint32_t frames = get_u32(is, 8, "frame count in " + path);
  std::uint32_t dim = get_u32(is, 12, "feature dim in " + path);
  if (frames == 0 || dim == 0) throw FormatError("empty feature sequence in " + path, 8);
  return {frames, dim};
}

FeatureSequence read_features(const std::string& path) {
  auto [frames, dim] = read_feature_header(path);
  std::ifstream is(path, std::ios::binary);
  is.seekg(16);
  FeatureSequence fs;
  fs.frames = frames;
  fs.dim = dim;
  fs.values.resize(static_cast<std::size_t>(frames) * dim);
  is.read(reinterpret_cast<char*>(fs.values.data()),
          static_cast<std::streamsize>(fs.values.size() * 4));
  if (is.gcount() != static_cast<std::streamsize>(fs.values.size() * 4))
    throw FormatError("truncated payload in " + path,
                      16 + static_cast<std::size_t>(std::max<std::streamsize>(is.gcount(), 0)));
  for (float v : fs.values)
    if (!std::isfinite(v)) throw FormatError("non-finite value in " + path, 16);
  return fs;
}

}  // namespace transpotter
