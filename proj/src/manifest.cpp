#include "transpotter/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "transpotter/errors.hpp"

namespace transpotter {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string resolve(const std::string& manifest_path, const std::string& rel) {
  fs::path p(rel);
  if (p.is_absolute()) return rel;
  return (fs::path(manifest_path).parent_path() / p).string();
}

}  // namespace

std::vector<ClipRecord> load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open manifest: " + path, 0);
  std::vector<ClipRecord> clips;
  std::set<std::string> seen;
  std::uint32_t dim = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(std::string("manifest: ") + e.what(), line_no);
    }
    ClipRecord rec;
    try {
      rec.id = j.at("id").get<std::string>();
      rec.features = j.at("features").get<std::string>();
      for (const auto& w : j.at("words")) {
        WordSpan s;
        s.word = w.at("w").get<std::string>();
        s.start = w.at("start").get<std::uint32_t>();
        s.end = w.at("end").get<std::uint32_t>();
        rec.words.push_back(std::move(s));
      }
    } catch (const json::exception& e) {
      throw ParseError(std::string("manifest: ") + e.what(), line_no);
    }
    if (rec.id.empty()) throw ValidationError("manifest line " + std::to_string(line_no) + ": empty clip id");
    if (!seen.insert(rec.id).second) throw ValidationError("duplicate clip id: " + rec.id);
    auto [frames, d] = read_feature_header(resolve(path, rec.features));
    if (dim == 0) dim = d;
    if (d != dim)
      throw ValidationError("clip " + rec.id + ": feature dim " + std::to_string(d) +
                            " != manifest dim " + std::to_string(dim));
    rec.frames = frames;
    std::uint32_t prev_end = 0;
    for (const auto& s : rec.words) {
      if (s.word.empty()) throw ValidationError("clip " + rec.id + ": empty word");
      if (s.start >= s.end)
        throw ValidationError("clip " + rec.id + ": empty span for '" + s.word + "'");
      if (s.start < prev_end)
        throw ValidationError("clip " + rec.id + ": overlapping or unordered span for '" + s.word + "'");
      if (s.end > frames)
        throw ValidationError("clip " + rec.id + ": span for '" + s.word + "' exceeds " +
                              std::to_string(frames) + " frames");
      prev_end = s.end;
    }
    clips.push_back(std::move(rec));
  }
  return clips;
}

void save_manifest(const std::vector<ClipRecord>& clips, const std::string& path) {
  std::ofstream os(path, std::ios::binary);  // binary: byte-identical output on every platform
  if (!os) throw ParseError("cannot open manifest for writing: " + path, 0);
  for (const auto& rec : clips) {
    json words = json::array();
    for (const auto& s : rec.words)
      words.push_back({{"w", s.word}, {"start", s.start}, {"end", s.end}});
    json j{{"id", rec.id}, {"features", rec.features}, {"words", words}};
    os << j.dump() << '\n';
  }
}

std::vector<LoadedClip> load_clips(const std::string& manifest_path) {
  std::vector<LoadedClip> out;
  for (auto& rec : load_manifest(manifest_path)) {
    LoadedClip lc;
    lc.features = read_features(resolve(manifest_path, rec.features));
    lc.rec = std::move(rec);
    out.push_back(std::move(lc));
  }
  return out;
}

std::uint32_t manifest_feature_dim(const std::string& manifest_path) {
  auto clips = load_manifest(manifest_path);
  if (clips.empty()) throw ValidationError("empty manifest: " + manifest_path);
  return read_feature_header(resolve(manifest_path, clips.front().features)).second;
}

}  // namespace transpotter
