#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace transpotter {

// Generator for the synthetic audio-visual corpus. Every phoneme gets a fixed
// unit-norm signature vector; a spoken word is its phoneme signatures held for
// frames_per_phoneme frames with a linear cross-fade at each junction, plus
// i.i.d. Gaussian noise. Homopheme pairs are written to the lexicon as alias
// words sharing a spoken word's pronunciation; aliases never occur in clips.
struct SyntheticConfig {
  int vocab_size = 50;
  int min_phonemes = 2;
  int max_phonemes = 6;
  int frames_per_phoneme = 3;
  double noise_sigma = 0.1;
  int feature_dim = 64;
  int min_words = 4;
  int max_words = 9;
  int blend = 1;  // cross-fade half-width in frames; clamped to (frames_per_phoneme-1)/2
  int train_clips = 500;
  int test_clips = 100;
  int homopheme_pairs = 1;
  std::uint64_t seed = 7;

  void validate() const;
};

struct SyntheticSummary {
  int train_clips = 0;
  int test_clips = 0;
  int vocab_size = 0;
  int lexicon_entries = 0;  // spoken words + aliases
  std::uint64_t total_frames = 0;
  std::vector<std::pair<std::string, std::string>> homophemes;  // (spoken, alias)
};

// Writes lexicon.txt, train.jsonl, test.jsonl, features/*.tpft and
// summary.json under out_dir. Same config and seed yield byte-identical
// output. Returns the summary that was written.
SyntheticSummary synthesize_dataset(const SyntheticConfig& cfg, const std::string& out_dir);

}  // namespace transpotter
