#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "transpotter/checkpoint.hpp"
#include "transpotter/model.hpp"

using namespace transpotter;

namespace {

ModelConfig tiny(Variant v = Variant::kTranspotter, LocHead head = LocHead::kFrameSigmoid) {
  ModelConfig cfg;
  cfg.variant = v;
  cfg.loc_head = head;
  cfg.d = 16;
  cfg.heads = 2;
  cfg.text_layers = 1;
  cfg.video_layers = 2;
  cfg.joint_layers = 1;
  cfg.d_in = 8;
  cfg.vocab = 12;
  cfg.max_frames = 24;
  cfg.max_query = 8;
  cfg.dropout = 0.0;
  return cfg;
}

Tensor<float> random_features(std::size_t t, std::size_t d_in, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor<float> v = Tensor<float>::zeros({t, d_in});
  for (float& x : v.data) x = static_cast<float>(dist(rng));
  return v;
}

const std::vector<Variant> kAllVariants = {Variant::kTranspotter, Variant::kTranspotterNoLoc,
                                           Variant::kEncVidDecText, Variant::kEncTextDecVid};

}  // namespace

TEST_CASE("positional encoding matches the sinusoid formula") {
  Tensor<double> pe = positional_encoding<double>(3, 4);
  // Row 0: sin(0)=0, cos(0)=1 in alternation.
  CHECK(pe.at(0, 0) == 0.0);
  CHECK(pe.at(0, 1) == 1.0);
  CHECK(pe.at(0, 2) == 0.0);
  CHECK(pe.at(0, 3) == 1.0);
  // Row 1 at d=4: [sin 1, cos 1, sin 0.01, cos 0.01].
  CHECK(pe.at(1, 0) == doctest::Approx(std::sin(1.0)).epsilon(1e-12));
  CHECK(pe.at(1, 1) == doctest::Approx(std::cos(1.0)).epsilon(1e-12));
  CHECK(pe.at(1, 2) == doctest::Approx(std::sin(0.01)).epsilon(1e-12));
  CHECK(pe.at(1, 3) == doctest::Approx(std::cos(0.01)).epsilon(1e-12));
  for (double v : pe.data) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  CHECK_THROWS_AS(positional_encoding<double>(3, 5), ShapeError);
  CHECK_THROWS_AS(positional_encoding<double>(0, 4), ShapeError);
}

TEST_CASE("config validation and JSON round-trip") {
  ModelConfig cfg = tiny();
  CHECK_NOTHROW(cfg.validate());

  ModelConfig bad = cfg;
  bad.heads = 3;  // 16 % 3 != 0
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.d = 15;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.dropout = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.text_layers = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  for (Variant v : kAllVariants) {
    ModelConfig c = tiny(v, LocHead::kSpanSoftmax);
    ModelConfig back = ModelConfig::from_json(c.to_json());
    CHECK(back == c);
  }
  CHECK_THROWS_AS(ModelConfig::from_json("{\"bogus\":1}"), ConfigError);
  CHECK_THROWS_AS(ModelConfig::from_json("not json"), ConfigError);
}

TEST_CASE("init_parameters: determinism, truncation, zeroed final heads") {
  ModelConfig cfg = tiny();
  Parameters<float> a = init_parameters<float>(cfg, 3);
  Parameters<float> b = init_parameters<float>(cfg, 3);
  Parameters<float> c = init_parameters<float>(cfg, 4);

  CHECK(a.tensors.size() == b.tensors.size());
  auto specs = parameter_shapes(cfg);
  bool all_equal = true, any_diff_seed = false;
  for (const auto& [name, t] : a.tensors) {
    all_equal = all_equal && t.data == b.tensors.at(name).data;
    any_diff_seed = any_diff_seed || t.data != c.tensors.at(name).data;
    if (specs.at(name).init == InitKind::kNormal)
      for (float v : t.data) CHECK(std::fabs(v) <= 0.04f);  // 2 sigma truncation
  }
  CHECK(all_equal);
  CHECK(any_diff_seed);

  for (const char* n : {"cls_head.w2", "cls_head.b2", "loc_head.w2", "loc_head.b2"})
    for (float v : a.at(n).data) CHECK(v == 0.0f);

  // Shapes come from the same table the checkpoint loader validates against.
  CHECK(specs.size() == a.tensors.size());
  for (const auto& [name, spec] : specs) CHECK(a.at(name).shape == spec.shape);
  CHECK(a.at("phoneme.embed").shape == std::vector<std::size_t>{12, 16});
  CHECK(a.at("video.proj.w").shape == std::vector<std::size_t>{8, 16});
  CHECK(a.at("modality.embed").shape == std::vector<std::size_t>{2, 16});
}

TEST_CASE("fresh model predicts exactly 0.5 everywhere, all variants") {
  Tensor<float> video = random_features(10, 8, 17);
  Query q;
  q.ids = {3, 5, 2};

  for (Variant v : kAllVariants) {
    for (LocHead head : {LocHead::kFrameSigmoid, LocHead::kSpanSoftmax}) {
      ModelConfig cfg = tiny(v, head);
      Parameters<float> params = init_parameters<float>(cfg, 1);
      Prediction pred = predict(params, cfg, video, q);
      CHECK(pred.y_cls == 0.5);
      bool expect_loc = cfg.has_localization();
      CHECK((pred.has_loc || pred.has_span) == expect_loc);
      if (pred.has_loc) {
        CHECK(pred.y_loc.size() == 10);  // length T, phoneme outputs dropped
        for (double p : pred.y_loc) CHECK(p == 0.5);
      }
      if (pred.has_span) {
        CHECK(pred.span_start.size() == 10);
        double s = 0, e = 0;
        for (double p : pred.span_start) s += p;
        for (double p : pred.span_end) e += p;
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(e == doctest::Approx(1.0).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("classification-only variants expose no localization output") {
  Tensor<float> video = random_features(6, 8, 9);
  Query q;
  q.ids = {1, 2};
  for (Variant v : {Variant::kTranspotterNoLoc, Variant::kEncVidDecText}) {
    ModelConfig cfg = tiny(v);
    Parameters<float> params = init_parameters<float>(cfg, 2);
    Prediction pred = predict(params, cfg, video, q);
    CHECK_FALSE(pred.has_loc);
    CHECK_FALSE(pred.has_span);
    CHECK_THROWS_AS(pred.loc(), CapabilityError);
  }
}

TEST_CASE("forward is pure: repeated calls agree bit for bit") {
  for (Variant v : kAllVariants) {
    ModelConfig cfg = tiny(v);
    Parameters<float> params = init_parameters<float>(cfg, 21);
    // Perturb the zero heads so outputs are not the trivial 0.5.
    for (auto& [name, t] : params.tensors)
      if (name.find(".w2") != std::string::npos)
        for (std::size_t i = 0; i < t.size(); ++i)
          t.data[i] = 0.01f * static_cast<float>(static_cast<int>(i % 7) - 3);

    Tensor<float> video = random_features(9, 8, 33);
    Query q;
    q.ids = {4, 1, 6, 2};
    Prediction p1 = predict(params, cfg, video, q);
    Prediction p2 = predict(params, cfg, video, q);
    CHECK(p1.y_cls == p2.y_cls);
    CHECK(p1.y_loc == p2.y_loc);
    CHECK(p1.span_start == p2.span_start);
    CHECK(p1.y_cls > 0.0);
    CHECK(p1.y_cls < 1.0);
  }
}

TEST_CASE("padding either sequence leaves real outputs unchanged") {
  for (Variant v : kAllVariants) {
    CAPTURE(to_string(v));
    ModelConfig cfg = tiny(v);
    Parameters<float> params = init_parameters<float>(cfg, 8);
    for (auto& [name, t] : params.tensors)
      if (name.find(".w2") != std::string::npos)
        for (std::size_t i = 0; i < t.size(); ++i)
          t.data[i] = 0.02f * static_cast<float>(static_cast<int>(i % 5) - 2);

    std::mt19937_64 seeder(100);
    for (int trial = 0; trial < 25; ++trial) {
      std::size_t t_real = 4 + seeder() % 8;
      std::size_t np_real = 2 + seeder() % 4;
      Tensor<float> video = random_features(t_real, 8, seeder());
      std::vector<int> ids;
      for (std::size_t i = 0; i < np_real; ++i) ids.push_back(1 + static_cast<int>(seeder() % 11));

      Tape<float> tape(false);
      Forward<float> base = build_forward(tape, params, cfg, video, t_real, ids, np_real);

      // Pad the video with garbage rows and the query with PAD ids.
      std::size_t t_pad = t_real + 3 + seeder() % 4;
      Tensor<float> vpad = Tensor<float>::zeros({t_pad, 8});
      for (std::size_t i = 0; i < video.size(); ++i) vpad.data[i] = video.data[i];
      for (std::size_t i = video.size(); i < vpad.size(); ++i)
        vpad.data[i] = 1e6f;  // poison: must never be read
      std::vector<int> ids_pad = ids;
      ids_pad.resize(np_real + 2, 0);

      Tape<float> tape2(false);
      Forward<float> padded = build_forward(tape2, params, cfg, vpad, t_real, ids_pad, np_real);

      double dcls = std::fabs(static_cast<double>(tape.value(base.y_cls).data[0]) -
                              static_cast<double>(tape2.value(padded.y_cls).data[0]));
      CHECK(dcls <= 1e-6);
      if (base.has_loc) {
        const auto& a = tape.value(base.y_loc);
        const auto& b = tape2.value(padded.y_loc);
        REQUIRE(a.size() == t_real);
        REQUIRE(b.size() == t_real);
        for (std::size_t i = 0; i < a.size(); ++i)
          CHECK(std::fabs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i])) <= 1e-6);
      }
    }
  }
}

TEST_CASE("padding invariance holds at 1e-10 in 64-bit") {
  ModelConfig cfg = tiny();
  Parameters<double> params = init_parameters<double>(cfg, 5);
  for (auto& [name, t] : params.tensors)
    if (name.find(".w2") != std::string::npos)
      for (std::size_t i = 0; i < t.size(); ++i) t.data[i] = 0.015 * static_cast<double>(static_cast<int>(i % 9) - 4);

  std::mt19937_64 rng(7);
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor<double> video = Tensor<double>::zeros({7, 8});
  for (double& x : video.data) x = dist(rng);
  std::vector<int> ids = {2, 9, 4};

  Tape<double> t1(false);
  Forward<double> a = build_forward(t1, params, cfg, video, 7, ids, 3);

  Tensor<double> vpad = Tensor<double>::zeros({12, 8});
  for (std::size_t i = 0; i < video.size(); ++i) vpad.data[i] = video.data[i];
  std::vector<int> ids_pad = {2, 9, 4, 0, 0};
  Tape<double> t2(false);
  Forward<double> b = build_forward(t2, params, cfg, vpad, 7, ids_pad, 3);

  CHECK(std::fabs(t1.value(a.y_cls).data[0] - t2.value(b.y_cls).data[0]) <= 1e-10);
  for (std::size_t i = 0; i < 7; ++i)
    CHECK(std::fabs(t1.value(a.y_loc).data[i] - t2.value(b.y_loc).data[i]) <= 1e-10);
}

TEST_CASE("permuting phonemes or frames changes the output") {
  ModelConfig cfg = tiny();
  Parameters<float> params = init_parameters<float>(cfg, 13);
  for (auto& [name, t] : params.tensors)
    if (name.find(".w2") != std::string::npos)
      for (std::size_t i = 0; i < t.size(); ++i) t.data[i] = 0.03f * static_cast<float>(static_cast<int>(i % 4) - 1);

  Tensor<float> video = random_features(8, 8, 50);
  Query q;
  q.ids = {3, 7, 5};
  Prediction base = predict(params, cfg, video, q);

  Query swapped = q;
  std::swap(swapped.ids[0], swapped.ids[2]);
  Prediction p1 = predict(params, cfg, video, swapped);
  CHECK(p1.y_cls != base.y_cls);  // PE breaks permutation symmetry

  Tensor<float> reversed = video;
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 8; ++c) std::swap(reversed.at(r, c), reversed.at(7 - r, c));
  Prediction p2 = predict(params, cfg, reversed, q);
  CHECK(p2.y_cls != base.y_cls);
}

TEST_CASE("modality embeddings toggle preserves shape contracts") {
  Tensor<float> video = random_features(6, 8, 77);
  Query q;
  q.ids = {1, 2, 3};
  ModelConfig with = tiny();
  ModelConfig without = tiny();
  without.modality_embeddings = false;
  Parameters<float> pw = init_parameters<float>(with, 4);
  Parameters<float> po = init_parameters<float>(without, 4);
  CHECK(pw.tensors.count("modality.embed") == 1);
  CHECK(po.tensors.count("modality.embed") == 0);
  Prediction a = predict(pw, with, video, q);
  Prediction b = predict(po, without, video, q);
  CHECK(a.y_loc.size() == b.y_loc.size());
  CHECK(a.y_cls == 0.5);
  CHECK(b.y_cls == 0.5);
}

TEST_CASE("oversized inputs are rejected") {
  ModelConfig cfg = tiny();
  Parameters<float> params = init_parameters<float>(cfg, 1);
  Query q;
  q.ids = {1, 2};
  Tensor<float> too_long = random_features(25, 8, 3);  // max_frames = 24
  CHECK_THROWS_AS(predict(params, cfg, too_long, q), ShapeError);

  Tensor<float> wrong_width = random_features(6, 9, 3);
  CHECK_THROWS_AS(predict(params, cfg, wrong_width, q), ShapeError);

  Query long_q;
  for (int i = 0; i < 9; ++i) long_q.ids.push_back(1);  // max_query = 8
  Tensor<float> ok = random_features(6, 8, 3);
  CHECK_THROWS_AS(predict(params, cfg, ok, long_q), ShapeError);

  Query bad_id;
  bad_id.ids = {1, 99};  // vocab = 12
  CHECK_THROWS_AS(predict(params, cfg, ok, bad_id), std::domain_error);
}

TEST_CASE("checkpoint round-trip is bit-exact and validated") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "tpck_test";
  fs::create_directories(dir);
  const std::string path = (dir / "model.tpck").string();

  ModelConfig cfg = tiny(Variant::kEncTextDecVid, LocHead::kSpanSoftmax);
  Parameters<float> params = init_parameters<float>(cfg, 99);
  save_checkpoint(path, cfg, params);

  auto [cfg2, params2] = load_checkpoint(path);
  CHECK(cfg2 == cfg);
  REQUIRE(params2.tensors.size() == params.tensors.size());
  for (const auto& [name, t] : params.tensors) {
    const Tensor<float>& u = params2.at(name);
    CHECK(u.shape == t.shape);
    CHECK(u.data == t.data);  // bit-exact float round-trip
  }

  // A second save of the loaded state is byte-identical.
  const std::string path2 = (dir / "model2.tpck").string();
  save_checkpoint(path2, cfg2, params2);
  std::FILE* f1 = std::fopen(path.c_str(), "rb");
  std::FILE* f2 = std::fopen(path2.c_str(), "rb");
  REQUIRE(f1 != nullptr);
  REQUIRE(f2 != nullptr);
  int c1, c2;
  do {
    c1 = std::fgetc(f1);
    c2 = std::fgetc(f2);
    CHECK(c1 == c2);
  } while (c1 != EOF && c2 != EOF);
  std::fclose(f1);
  std::fclose(f2);

  // Loading under a config with different shapes must fail.
  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    bytes.resize(bytes.size() - 7);  // truncate
    std::ofstream out(dir / "trunc.tpck", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_AS(load_checkpoint((dir / "trunc.tpck").string()), FormatError);
  fs::remove_all(dir);
}
