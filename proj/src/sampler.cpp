#include "transpotter/sampler.hpp"

#include <algorithm>
#include <set>

#include "transpotter/errors.hpp"

namespace transpotter {

PairSampler::PairSampler(const std::vector<LoadedClip>* clips, const Lexicon* lexicon,
                         SamplerConfig cfg)
    : clips_(clips), lexicon_(lexicon), cfg_(cfg) {
  if (clips_ == nullptr || clips_->empty()) throw ValidationError("sampler: no clips");
  std::set<std::string> vocab;
  eligible_.resize(clips_->size());
  for (std::size_t c = 0; c < clips_->size(); ++c) {
    const auto& words = (*clips_)[c].rec.words;
    for (std::size_t w = 0; w < words.size(); ++w) {
      const std::string key = to_upper(words[w].word);
      const auto* prons = lexicon_->find(key);
      if (prons == nullptr) continue;  // out-of-lexicon words are never keywords
      std::size_t n_p = prons->front().size();
      if (n_p < static_cast<std::size_t>(cfg_.min_phonemes) ||
          n_p > static_cast<std::size_t>(cfg_.max_query))
        continue;
      if (words[w].end - words[w].start > static_cast<std::uint32_t>(cfg_.max_frames)) continue;
      eligible_[c].push_back(w);
      vocab.insert(key);
    }
    if (!eligible_[c].empty()) clips_with_eligible_.push_back(c);
  }
  if (clips_with_eligible_.empty())
    throw ValidationError("sampler: no clip has an eligible keyword");
  vocab_.assign(vocab.begin(), vocab.end());
  absent_from_.resize(vocab_.size());
  for (std::size_t v = 0; v < vocab_.size(); ++v) {
    for (std::size_t c = 0; c < clips_->size(); ++c) {
      bool present = false;
      for (const auto& w : (*clips_)[c].rec.words)
        if (to_upper(w.word) == vocab_[v]) {
          present = true;
          break;
        }
      if (!present) absent_from_[v].push_back(c);
    }
  }
}

TrainingPair PairSampler::crop(std::size_t clip, std::size_t w_lo, std::size_t w_hi,
                               const std::string& keyword) const {
  const LoadedClip& lc = (*clips_)[clip];
  const auto& words = lc.rec.words;
  std::uint32_t s = words[w_lo].start;
  std::uint32_t e = words[w_hi].end;
  TrainingPair pair;
  pair.features = lc.features.crop(s, e);
  pair.y_loc.assign(e - s, 0);
  if (!keyword.empty()) {
    pair.y_cls = 1;
    pair.query = phonemize(keyword, *lexicon_);
    for (std::size_t w = w_lo; w <= w_hi; ++w)
      if (to_upper(words[w].word) == keyword)
        for (std::uint32_t t = words[w].start; t < words[w].end; ++t) pair.y_loc[t - s] = 1;
  } else {
    pair.y_cls = 0;
  }
  return pair;
}

TrainingPair PairSampler::positive(std::mt19937_64& rng) const {
  std::uniform_int_distribution<std::size_t> dc(0, clips_with_eligible_.size() - 1);
  std::size_t clip = clips_with_eligible_[dc(rng)];
  const auto& cands = eligible_[clip];
  std::uniform_int_distribution<std::size_t> dw(0, cands.size() - 1);
  std::size_t k = cands[dw(rng)];
  const auto& words = (*clips_)[clip].rec.words;
  std::uniform_int_distribution<std::size_t> dl(0, k);
  std::uniform_int_distribution<std::size_t> dr(k, words.size() - 1);
  std::size_t i = dl(rng), j = dr(rng);
  // Shrink the word range towards the keyword until it fits the frame budget.
  while (words[j].end - words[i].start > static_cast<std::uint32_t>(cfg_.max_frames)) {
    if (i < k && (k - i) >= (j - k)) ++i;
    else if (j > k) --j;
    else break;
  }
  const std::string key = to_upper(words[k].word);
  return crop(clip, i, j, key);
}

TrainingPair PairSampler::negative(std::mt19937_64& rng) const {
  std::uniform_int_distribution<std::size_t> dv(0, vocab_.size() - 1);
  for (int attempt = 0; attempt < cfg_.max_retries; ++attempt) {
    std::size_t v = dv(rng);
    if (absent_from_[v].empty()) continue;  // word occurs everywhere; try another query
    std::uniform_int_distribution<std::size_t> dc(0, absent_from_[v].size() - 1);
    std::size_t clip = absent_from_[v][dc(rng)];
    const auto& words = (*clips_)[clip].rec.words;
    if (words.empty()) continue;
    std::uniform_int_distribution<std::size_t> dl(0, words.size() - 1);
    std::size_t i = dl(rng);
    std::uniform_int_distribution<std::size_t> dr(i, words.size() - 1);
    std::size_t j = dr(rng);
    while (j > i && words[j].end - words[i].start > static_cast<std::uint32_t>(cfg_.max_frames))
      --j;
    if (words[j].end - words[i].start > static_cast<std::uint32_t>(cfg_.max_frames)) continue;
    TrainingPair pair = crop(clip, i, j, "");
    pair.query = phonemize(vocab_[v], *lexicon_);
    return pair;
  }
  throw ValidationError("sampler: no eligible negative pair after " +
                        std::to_string(cfg_.max_retries) + " retries");
}

TrainingPair PairSampler::sample(std::mt19937_64& rng) const {
  std::uniform_int_distribution<int> coin(0, 1);
  return coin(rng) == 1 ? positive(rng) : negative(rng);
}

}  // namespace transpotter
