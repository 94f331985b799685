#pragma once

#include <string>
#include <vector>

#include "transpotter/features.hpp"

namespace transpotter {

// Half-open frame interval [start, end) labelled with the spoken word.
struct WordSpan {
  std::string word;
  std::uint32_t start = 0;
  std::uint32_t end = 0;

  bool operator==(const WordSpan&) const = default;
};

struct ClipRecord {
  std::string id;
  std::string features;  // path as written in the manifest, relative to the manifest file
  std::vector<WordSpan> words;
  std::uint32_t frames = 0;  // from the feature header, filled by load_manifest

  bool operator==(const ClipRecord& o) const {
    return id == o.id && features == o.features && words == o.words;
  }
};

// One JSON object per line: {"id":..., "features":..., "words":[{"w":...,
// "start":..., "end":...}, ...]}. Loading validates every record against its
// feature header: unique non-empty ids, ordered non-overlapping spans with
// start < end <= T, known feature dim consistent across the manifest.
std::vector<ClipRecord> load_manifest(const std::string& path);
void save_manifest(const std::vector<ClipRecord>& clips, const std::string& path);

struct LoadedClip {
  ClipRecord rec;
  FeatureSequence features;
};

// load_manifest plus eager feature loading.
std::vector<LoadedClip> load_clips(const std::string& manifest_path);

// Feature dim shared by all clips in a loaded manifest.
std::uint32_t manifest_feature_dim(const std::string& manifest_path);

}  // namespace transpotter
