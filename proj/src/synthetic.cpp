#include "transpotter/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include <json.hpp>

#include "transpotter/errors.hpp"
#include "transpotter/manifest.hpp"
#include "transpotter/phonetics.hpp"

namespace transpotter {

namespace fs = std::filesystem;
using nlohmann::json;

void SyntheticConfig::validate() const {
  if (vocab_size < 2) throw ConfigError("vocab_size must be >= 2");
  if (min_phonemes < 1 || max_phonemes < min_phonemes)
    throw ConfigError("need 1 <= min_phonemes <= max_phonemes");
  if (frames_per_phoneme < 1) throw ConfigError("frames_per_phoneme must be >= 1");
  if (noise_sigma < 0) throw ConfigError("noise_sigma must be >= 0");
  if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
  if (min_words < 1 || max_words < min_words)
    throw ConfigError("need 1 <= min_words <= max_words");
  if (max_words > vocab_size)
    throw ConfigError("max_words cannot exceed vocab_size (clips sample words without replacement)");
  if (blend < 0) throw ConfigError("blend must be >= 0");
  if (train_clips < 1 || test_clips < 1)
    throw ConfigError("train_clips and test_clips must be >= 1");
  if (homopheme_pairs < 0 || homopheme_pairs > vocab_size)
    throw ConfigError("homopheme_pairs must be in [0, vocab_size]");
}

namespace {

std::string make_word(std::mt19937_64& rng) {
  static const std::string cons = "BDFGJKLMNPRSTVZ";
  static const std::string vowels = "AEIOU";
  std::uniform_int_distribution<int> syl(2, 3);
  std::uniform_int_distribution<std::size_t> c(0, cons.size() - 1);
  std::uniform_int_distribution<std::size_t> v(0, vowels.size() - 1);
  int n = syl(rng);
  std::string w;
  for (int i = 0; i < n; ++i) {
    w += cons[c(rng)];
    w += vowels[v(rng)];
  }
  return w;
}

}  // namespace

SyntheticSummary synthesize_dataset(const SyntheticConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  fs::create_directories(fs::path(out_dir) / "features");
  std::mt19937_64 rng(cfg.seed);
  const PhonemeVocabulary& pv = PhonemeVocabulary::arpabet();

  // Unit-norm signature per phoneme (ids 1..n, 0 is PAD).
  std::vector<std::vector<float>> sig(pv.size());
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t p = 1; p < pv.size(); ++p) {
    std::vector<double> v(cfg.feature_dim);
    double norm2 = 0;
    for (auto& x : v) {
      x = gauss(rng);
      norm2 += x * x;
    }
    double inv = 1.0 / std::sqrt(norm2);
    sig[p].resize(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) sig[p][k] = static_cast<float>(v[k] * inv);
  }

  // Spoken vocabulary: unique names, unique pronunciations.
  std::uniform_int_distribution<int> plen(cfg.min_phonemes, cfg.max_phonemes);
  std::uniform_int_distribution<int> pick(1, static_cast<int>(pv.size()) - 1);
  std::vector<std::string> words;
  std::vector<std::vector<int>> prons;
  std::set<std::string> names;
  std::set<std::vector<int>> pron_set;
  while (static_cast<int>(words.size()) < cfg.vocab_size) {
    std::string w = make_word(rng);
    if (!names.insert(w).second) continue;
    std::vector<int> pron(static_cast<std::size_t>(plen(rng)));
    for (auto& p : pron) p = pick(rng);
    if (!pron_set.insert(pron).second) {
      names.erase(w);
      continue;
    }
    words.push_back(std::move(w));
    prons.push_back(std::move(pron));
  }

  // Homopheme aliases: distinct base words, fresh names, identical pronunciations.
  SyntheticSummary summary;
  std::vector<std::pair<std::string, std::vector<int>>> aliases;
  {
    std::vector<int> bases(words.size());
    for (std::size_t i = 0; i < bases.size(); ++i) bases[i] = static_cast<int>(i);
    for (int k = 0; k < cfg.homopheme_pairs; ++k) {
      std::uniform_int_distribution<std::size_t> d(k, bases.size() - 1);
      std::swap(bases[k], bases[d(rng)]);
      std::string alias;
      do alias = make_word(rng);
      while (!names.insert(alias).second);
      aliases.emplace_back(alias, prons[bases[k]]);
      summary.homophemes.emplace_back(words[bases[k]], alias);
    }
  }

  auto symbols = [&pv](const std::vector<int>& pron) {
    Lexicon::Pronunciation out;
    for (int p : pron) out.push_back(pv.symbol(p));
    return out;
  };
  Lexicon lex;
  for (std::size_t i = 0; i < words.size(); ++i) lex.add(words[i], symbols(prons[i]));
  for (const auto& [alias, pron] : aliases) lex.add(alias, symbols(pron));
  {
    std::ofstream os(fs::path(out_dir) / "lexicon.txt", std::ios::binary);
    serialize_lexicon(lex, os);
  }

  const int r = cfg.frames_per_phoneme;
  const int b = std::min(cfg.blend, (r - 1) / 2);
  std::uniform_int_distribution<int> nwords(cfg.min_words, cfg.max_words);
  std::vector<int> order(words.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  auto make_split = [&](const std::string& split, int count) {
    std::vector<ClipRecord> clips;
    for (int c = 0; c < count; ++c) {
      char idbuf[32];
      std::snprintf(idbuf, sizeof(idbuf), "%s_%04d", split.c_str(), c);
      ClipRecord rec;
      rec.id = idbuf;
      rec.features = "features/" + rec.id + ".tpft";

      int n = nwords(rng);
      for (int i = 0; i < n; ++i) {  // partial Fisher-Yates: n distinct words
        std::uniform_int_distribution<std::size_t> d(static_cast<std::size_t>(i), order.size() - 1);
        std::swap(order[i], order[d(rng)]);
      }

      // Concatenate phoneme segments; remember junction frames for blending.
      std::vector<std::size_t> phones;
      std::uint32_t cursor = 0;
      for (int i = 0; i < n; ++i) {
        const auto& pron = prons[static_cast<std::size_t>(order[i])];
        WordSpan s;
        s.word = words[static_cast<std::size_t>(order[i])];
        s.start = cursor;
        s.end = cursor + static_cast<std::uint32_t>(pron.size()) * r;
        rec.words.push_back(std::move(s));
        phones.insert(phones.end(), pron.begin(), pron.end());
        cursor = rec.words.back().end;
      }

      const std::uint32_t T = cursor;
      const std::uint32_t d_in = static_cast<std::uint32_t>(cfg.feature_dim);
      std::vector<double> buf(static_cast<std::size_t>(T) * d_in);
      for (std::size_t s = 0; s < phones.size(); ++s)
        for (int t = 0; t < r; ++t)
          for (std::uint32_t k = 0; k < d_in; ++k)
            buf[(s * r + t) * d_in + k] = sig[phones[s]][k];
      if (b > 0) {
        for (std::size_t s = 1; s < phones.size(); ++s) {
          const float* prev = sig[phones[s - 1]].data();
          const float* next = sig[phones[s]].data();
          std::size_t e = s * r;
          for (int o = -b; o < b; ++o) {
            double alpha = (o + b + 0.5) / (2.0 * b);  // fraction of the next phoneme
            for (std::uint32_t k = 0; k < d_in; ++k)
              buf[(e + o) * d_in + k] = (1.0 - alpha) * prev[k] + alpha * next[k];
          }
        }
      }
      if (cfg.noise_sigma > 0) {
        std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
        for (auto& x : buf) x += noise(rng);
      }

      FeatureSequence feat;
      feat.frames = T;
      feat.dim = d_in;
      feat.values.resize(buf.size());
      for (std::size_t i = 0; i < buf.size(); ++i) feat.values[i] = static_cast<float>(buf[i]);
      write_features((fs::path(out_dir) / rec.features).string(), feat);
      summary.total_frames += T;
      clips.push_back(std::move(rec));
    }
    save_manifest(clips, (fs::path(out_dir) / (split + ".jsonl")).string());
  };
  make_split("train", cfg.train_clips);
  make_split("test", cfg.test_clips);

  summary.train_clips = cfg.train_clips;
  summary.test_clips = cfg.test_clips;
  summary.vocab_size = cfg.vocab_size;
  summary.lexicon_entries = cfg.vocab_size + static_cast<int>(aliases.size());
  {
    json pairs = json::array();
    for (const auto& [spoken, alias] : summary.homophemes) pairs.push_back({spoken, alias});
    json j{{"train_clips", summary.train_clips},
           {"test_clips", summary.test_clips},
           {"vocab_size", summary.vocab_size},
           {"lexicon_entries", summary.lexicon_entries},
           {"total_frames", summary.total_frames},
           {"homophemes", pairs}};
    std::ofstream os(fs::path(out_dir) / "summary.json", std::ios::binary);
    os << j.dump(2) << '\n';
  }
  return summary;
}

}  // namespace transpotter
