#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "transpotter/features.hpp"
#include "transpotter/manifest.hpp"
#include "transpotter/phonetics.hpp"
#include "transpotter/synthetic.hpp"

using namespace transpotter;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("tp_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

FeatureSequence random_fs(std::uint32_t t, std::uint32_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  FeatureSequence f;
  f.frames = t;
  f.dim = d;
  f.values.resize(static_cast<std::size_t>(t) * d);
  for (float& v : f.values) v = static_cast<float>(dist(rng));
  return f;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_manifest_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

// Hash of every regular file (path + bytes), order-independent input via sort.
std::size_t tree_hash(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::size_t h = 1469598103934665603ull;
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
  };
  for (const auto& f : files) {
    mix(fs::relative(f, root).string());
    mix(slurp(f.string()));
  }
  return h;
}

}  // namespace

TEST_CASE("TPFT: round-trip is bit-exact and the size is 16 + 4*T*d") {
  TempDir dir("tpft");
  FeatureSequence f = random_fs(7, 16, 123);
  const std::string path = dir / "a.tpft";
  write_features(path, f);

  CHECK(fs::file_size(path) == 16 + 4ull * 7 * 16);

  FeatureSequence g = read_features(path);
  CHECK(g.frames == 7);
  CHECK(g.dim == 16);
  CHECK(g.values == f.values);

  auto [t, d] = read_feature_header(path);
  CHECK(t == 7);
  CHECK(d == 16);
}

TEST_CASE("TPFT: malformed files are rejected with byte offsets") {
  TempDir dir("tpft_bad");
  FeatureSequence f = random_fs(3, 4, 5);
  const std::string good = dir / "good.tpft";
  write_features(good, f);
  std::string bytes = slurp(good);

  {
    std::string bad = bytes;
    bad[0] = 'X';  // break the magic
    write_manifest_text(dir / "magic.tpft", bad);
    try {
      read_features(dir / "magic.tpft");
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.offset == 0);
    }
  }
  {
    std::string bad = bytes;
    bad[4] = 9;  // version 9
    write_manifest_text(dir / "version.tpft", bad);
    try {
      read_features(dir / "version.tpft");
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.offset == 4);
    }
  }
  {
    std::string bad = bytes.substr(0, bytes.size() - 5);  // cut payload
    write_manifest_text(dir / "trunc.tpft", bad);
    CHECK_THROWS_AS(read_features(dir / "trunc.tpft"), FormatError);
  }
  {
    std::string bad = bytes.substr(0, 10);  // cut header
    write_manifest_text(dir / "header.tpft", bad);
    CHECK_THROWS_AS(read_feature_header(dir / "header.tpft"), FormatError);
  }
  CHECK_THROWS_AS(read_features(dir / "missing.tpft"), FormatError);
}

TEST_CASE("TPFT rejects degenerate shapes and non-finite values") {
  TempDir dir("tpft_deg");
  FeatureSequence z;
  z.frames = 0;
  z.dim = 4;
  CHECK_THROWS(write_features(dir / "z.tpft", z));

  FeatureSequence inf = random_fs(2, 2, 1);
  inf.values[1] = std::numeric_limits<float>::infinity();
  CHECK_THROWS(write_features(dir / "inf.tpft", inf));
}

TEST_CASE("FeatureSequence::crop takes half-open row ranges") {
  FeatureSequence f = random_fs(6, 3, 9);
  FeatureSequence c = f.crop(2, 5);
  CHECK(c.frames == 3);
  CHECK(c.dim == 3);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t k = 0; k < 3; ++k) CHECK(c.at(t, k) == f.at(t + 2, k));
  CHECK_THROWS(f.crop(4, 4));
  CHECK_THROWS(f.crop(4, 7));
}

TEST_CASE("manifest: load, validation rules, round-trip") {
  TempDir dir("manifest");
  fs::create_directories(dir.path / "features");
  write_features(dir / "features/c0.tpft", random_fs(10, 4, 1));
  write_features(dir / "features/c1.tpft", random_fs(8, 4, 2));

  const std::string path = dir / "m.jsonl";
  write_manifest_text(path,
      "{\"id\":\"c0\",\"features\":\"features/c0.tpft\",\"words\":["
      "{\"w\":\"HI\",\"start\":0,\"end\":3},{\"w\":\"HO\",\"start\":3,\"end\":5}]}\n"
      "{\"id\":\"c1\",\"features\":\"features/c1.tpft\",\"words\":["
      "{\"w\":\"YO\",\"start\":1,\"end\":8}]}\n");

  std::vector<ClipRecord> clips = load_manifest(path);
  REQUIRE(clips.size() == 2);
  CHECK(clips[0].id == "c0");
  CHECK(clips[0].frames == 10);
  REQUIRE(clips[0].words.size() == 2);
  CHECK(clips[0].words[0].word == "HI");
  CHECK(clips[0].words[0].start == 0);
  CHECK(clips[0].words[0].end == 3);
  CHECK(clips[1].words[0].word == "YO");

  // load -> save -> load is identity.
  const std::string path2 = dir / "m2.jsonl";
  save_manifest(clips, path2);
  // The copy references the same relative feature paths; parse from the same dir.
  std::vector<ClipRecord> again = load_manifest(path2);
  REQUIRE(again.size() == clips.size());
  for (std::size_t i = 0; i < clips.size(); ++i) {
    CHECK(again[i].id == clips[i].id);
    CHECK(again[i].features == clips[i].features);
    CHECK(again[i].words.size() == clips[i].words.size());
    for (std::size_t w = 0; w < clips[i].words.size(); ++w) {
      CHECK(again[i].words[w].word == clips[i].words[w].word);
      CHECK(again[i].words[w].start == clips[i].words[w].start);
      CHECK(again[i].words[w].end == clips[i].words[w].end);
    }
  }
  // And the second save is byte-identical.
  const std::string path3 = dir / "m3.jsonl";
  save_manifest(again, path3);
  CHECK(slurp(path3) == slurp(path2));
}

TEST_CASE("manifest: rejects overlap, disorder, out-of-range, duplicates") {
  TempDir dir("manifest_bad");
  fs::create_directories(dir.path / "features");
  write_features(dir / "features/c.tpft", random_fs(10, 4, 1));

  auto expect_invalid = [&](const char* tag, const std::string& body,
                            const std::string& needle) {
    const std::string p = dir / (std::string(tag) + ".jsonl");
    write_manifest_text(p, body);
    try {
      load_manifest(p);
      FAIL("expected ValidationError for ", tag);
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };

  // Overlapping spans: [0,3) then [2,5); the error must name the clip.
  expect_invalid("overlap",
      "{\"id\":\"bad0\",\"features\":\"features/c.tpft\",\"words\":["
      "{\"w\":\"A\",\"start\":0,\"end\":3},{\"w\":\"B\",\"start\":2,\"end\":5}]}\n",
      "bad0");
  expect_invalid("unordered",
      "{\"id\":\"bad1\",\"features\":\"features/c.tpft\",\"words\":["
      "{\"w\":\"A\",\"start\":5,\"end\":7},{\"w\":\"B\",\"start\":0,\"end\":2}]}\n",
      "bad1");
  expect_invalid("range",
      "{\"id\":\"bad2\",\"features\":\"features/c.tpft\",\"words\":["
      "{\"w\":\"A\",\"start\":8,\"end\":12}]}\n",
      "bad2");
  expect_invalid("empty_span",
      "{\"id\":\"bad3\",\"features\":\"features/c.tpft\",\"words\":["
      "{\"w\":\"A\",\"start\":4,\"end\":4}]}\n",
      "bad3");
  expect_invalid("dup",
      "{\"id\":\"c\",\"features\":\"features/c.tpft\",\"words\":[]}\n"
      "{\"id\":\"c\",\"features\":\"features/c.tpft\",\"words\":[]}\n",
      "c");

  const std::string junk = dir / "junk.jsonl";
  write_manifest_text(junk, "{\"id\": nope}\n");
  CHECK_THROWS_AS(load_manifest(junk), ParseError);

  // Adjacent spans [0,3),[3,5) are legal; empty manifest is a valid dataset.
  const std::string ok = dir / "ok.jsonl";
  write_manifest_text(ok,
      "{\"id\":\"g\",\"features\":\"features/c.tpft\",\"words\":["
      "{\"w\":\"A\",\"start\":0,\"end\":3},{\"w\":\"B\",\"start\":3,\"end\":5}]}\n");
  CHECK(load_manifest(ok).size() == 1);
  const std::string empty = dir / "empty.jsonl";
  write_manifest_text(empty, "");
  CHECK(load_manifest(empty).empty());
}

TEST_CASE("synthetic: exact signatures at sigma=0 blend=0, frame arithmetic") {
  TempDir dir("synth_exact");
  SyntheticConfig cfg;
  cfg.vocab_size = 8;
  cfg.min_words = 3;
  cfg.max_words = 6;
  cfg.train_clips = 6;
  cfg.test_clips = 3;
  cfg.noise_sigma = 0.0;
  cfg.blend = 0;
  cfg.feature_dim = 16;
  cfg.homopheme_pairs = 0;
  cfg.seed = 42;
  SyntheticSummary sum = synthesize_dataset(cfg, dir / "d");

  CHECK(sum.train_clips == 6);
  CHECK(sum.test_clips == 3);
  CHECK(sum.vocab_size == 8);
  CHECK(sum.lexicon_entries == 8);  // no aliases

  std::ifstream lexin(dir / "d/lexicon.txt");
  Lexicon lex = parse_lexicon(lexin);
  CHECK(lex.word_count() == 8);

  std::vector<LoadedClip> clips = load_clips(dir / "d/train.jsonl");
  REQUIRE(clips.size() == 6);
  const int r = cfg.frames_per_phoneme;

  // Signature map: phoneme id -> frame vector, collected across clips. With
  // sigma=0 and blend=0 each phoneme's frames must repeat one exact vector.
  std::map<int, std::vector<float>> signature;
  const auto& pv = PhonemeVocabulary::arpabet();
  for (const auto& clip : clips) {
    std::uint32_t expected = 0;
    for (const auto& w : clip.rec.words) {
      const auto& pron = (*lex.find(w.word))[0];
      CHECK(w.end - w.start == pron.size() * r);  // T per word = n_p * r
      for (std::size_t pi = 0; pi < pron.size(); ++pi) {
        int pid = pv.id(pron[pi]);
        REQUIRE(pid > 0);
        for (int k = 0; k < r; ++k) {
          std::uint32_t t = w.start + static_cast<std::uint32_t>(pi) * r + k;
          std::vector<float> row(clip.features.values.begin() + t * 16,
                                 clip.features.values.begin() + (t + 1) * 16);
          auto [it, fresh] = signature.emplace(pid, row);
          CHECK(it->second == row);  // exactly the signature, everywhere
        }
      }
      expected += w.end - w.start;
    }
    CHECK(clip.features.frames == expected);  // words tile the whole clip
  }

  // Signatures are unit-norm.
  for (const auto& [pid, row] : signature) {
    double norm = 0;
    for (float v : row) norm += static_cast<double>(v) * v;
    CHECK(norm == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("synthetic: same seed gives a byte-identical tree, new seed differs") {
  TempDir dir("synth_det");
  SyntheticConfig cfg;
  cfg.vocab_size = 10;
  cfg.max_words = 7;
  cfg.train_clips = 5;
  cfg.test_clips = 2;
  cfg.seed = 77;
  synthesize_dataset(cfg, dir / "a");
  synthesize_dataset(cfg, dir / "b");
  CHECK(tree_hash(dir.path / "a") == tree_hash(dir.path / "b"));

  cfg.seed = 78;
  synthesize_dataset(cfg, dir / "c");
  CHECK(tree_hash(dir.path / "a") != tree_hash(dir.path / "c"));
}

TEST_CASE("synthetic: homopheme aliases share a pronunciation and stay unspoken") {
  TempDir dir("synth_homo");
  SyntheticConfig cfg;
  cfg.vocab_size = 10;
  cfg.max_words = 7;
  cfg.train_clips = 8;
  cfg.test_clips = 4;
  cfg.homopheme_pairs = 2;
  cfg.seed = 3;
  SyntheticSummary sum = synthesize_dataset(cfg, dir / "d");
  REQUIRE(sum.homophemes.size() == 2);
  CHECK(sum.lexicon_entries == 12);

  std::ifstream lexin(dir / "d/lexicon.txt");
  Lexicon lex = parse_lexicon(lexin);
  std::set<std::string> spoken;
  for (const auto& split : {"train.jsonl", "test.jsonl"})
    for (const auto& rec : load_manifest(dir / ("d/" + std::string(split))))
      for (const auto& w : rec.words) spoken.insert(w.word);

  for (const auto& [word, alias] : sum.homophemes) {
    REQUIRE(lex.contains(word));
    REQUIRE(lex.contains(alias));
    CHECK((*lex.find(word))[0] == (*lex.find(alias))[0]);  // identical pronunciation
    CHECK(spoken.count(word) == 1);   // the source word is spoken somewhere
    CHECK(spoken.count(alias) == 0);  // the alias never is
  }
}

TEST_CASE("synthetic config validation") {
  SyntheticConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  SyntheticConfig bad = cfg;
  bad.vocab_size = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.min_phonemes = 4;
  bad.max_phonemes = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.noise_sigma = -0.1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.max_words = bad.vocab_size + 1;  // clips draw distinct words
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
