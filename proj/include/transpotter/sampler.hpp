#pragma once

#include <random>
#include <vector>

#include "transpotter/losses.hpp"
#include "transpotter/manifest.hpp"
#include "transpotter/phonetics.hpp"

namespace transpotter {

struct SamplerConfig {
  int min_phonemes = 3;   // keywords shorter than this are never sampled
  int max_frames = 160;   // crop budget
  int max_query = 40;     // keywords with longer pronunciations are skipped
  int max_retries = 100;  // negative-clip search budget before giving up
};

// Draws 50/50 positive/negative training pairs with word-aligned random crops.
// Positives crop a sub-segment that fully contains the keyword; negatives pick
// the query first, then a clip whose transcript lacks it. Keywords must be in
// the lexicon with at least min_phonemes phonemes.
class PairSampler {
 public:
  PairSampler(const std::vector<LoadedClip>* clips, const Lexicon* lexicon, SamplerConfig cfg);

  TrainingPair sample(std::mt19937_64& rng) const;

  const std::vector<std::string>& vocabulary() const { return vocab_; }

 private:
  TrainingPair positive(std::mt19937_64& rng) const;
  TrainingPair negative(std::mt19937_64& rng) const;
  TrainingPair crop(std::size_t clip, std::size_t w_lo, std::size_t w_hi,
                    const std::string& keyword) const;

  const std::vector<LoadedClip>* clips_;
  const Lexicon* lexicon_;
  SamplerConfig cfg_;
  std::vector<std::string> vocab_;                     // eligible keywords, sorted
  std::vector<std::vector<std::size_t>> eligible_;     // per clip: indices of eligible words
  std::vector<std::size_t> clips_with_eligible_;       // clips usable as positives
  std::vector<std::vector<std::size_t>> absent_from_;  // per vocab word: clips lacking it
};

}  // namespace transpotter
