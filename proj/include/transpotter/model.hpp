#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "transpotter/errors.hpp"
#include "transpotter/features.hpp"
#include "transpotter/params.hpp"
#include "transpotter/phonetics.hpp"
#include "transpotter/tape.hpp"

namespace transpotter {

enum class Variant { kTranspotter, kTranspotterNoLoc, kEncVidDecText, kEncTextDecVid };
enum class LocHead { kFrameSigmoid, kSpanSoftmax };
enum class Activation { kRelu, kGelu };

std::string to_string(Variant v);
std::string to_string(LocHead h);
std::string to_string(Activation a);
Variant variant_from_string(const std::string& s);
LocHead loc_head_from_string(const std::string& s);
Activation activation_from_string(const std::string& s);

struct ModelConfig {
  int d = 512;
  int heads = 8;
  int text_layers = 3;   // N_t
  int video_layers = 6;  // N_v
  int joint_layers = 6;  // N_m; decoder depth for the encoder-decoder variants
  int d_in = 512;
  int vocab = 40;  // phoneme inventory incl. PAD
  int max_frames = 160;
  int max_query = 40;
  int ffn_mult = 4;
  double dropout = 0.1;
  Variant variant = Variant::kTranspotter;
  LocHead loc_head = LocHead::kFrameSigmoid;
  Activation activation = Activation::kRelu;
  bool modality_embeddings = true;

  void validate() const;
  bool has_localization() const {
    return variant == Variant::kTranspotter || variant == Variant::kEncTextDecVid;
  }
  bool is_decoder_variant() const {
    return variant == Variant::kEncVidDecText || variant == Variant::kEncTextDecVid;
  }
  // The stream encoded before fusion; the other stream feeds the joint stack
  // (or decoder) directly.
  bool has_text_encoder() const { return variant != Variant::kEncVidDecText; }
  bool has_video_encoder() const { return variant != Variant::kEncTextDecVid; }

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);

  bool operator==(const ModelConfig&) const = default;
};

enum class InitKind { kNormal, kZero, kOne };

struct ParamSpec {
  std::vector<std::size_t> shape;
  InitKind init = InitKind::kNormal;
};

// Single source of truth for which tensors exist under a config; used by
// initialization, checkpoint validation and the optimizer.
std::map<std::string, ParamSpec> parameter_shapes(const ModelConfig& cfg);

// PE[pos,2i] = sin(pos/10000^(2i/d)), PE[pos,2i+1] = cos of the same angle.
template <typename T>
Tensor<T> positional_encoding(std::size_t length, std::size_t d) {
  if (length < 1) throw ShapeError("positional_encoding: length must be >= 1");
  if (d == 0 || d % 2 != 0) throw ShapeError("positional_encoding: d must be even");
  Tensor<T> pe = Tensor<T>::zeros({length, d});
  for (std::size_t pos = 0; pos < length; ++pos)
    for (std::size_t i = 0; i < d / 2; ++i) {
      double angle = static_cast<double>(pos) /
                     std::pow(10000.0, (2.0 * static_cast<double>(i)) / static_cast<double>(d));
      pe.at(pos, 2 * i) = static_cast<T>(std::sin(angle));
      pe.at(pos, 2 * i + 1) = static_cast<T>(std::cos(angle));
    }
  return pe;
}

// Weights ~ Normal(0, 0.02) truncated at 2 sigma (redrawn); biases, layer-norm
// shifts and the final layers of every head start at zero, so a fresh model
// outputs probability 0.5 everywhere. Deterministic per seed.
template <typename T>
Parameters<T> init_parameters(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 0.02);
  Parameters<T> params;
  for (const auto& [name, spec] : parameter_shapes(cfg)) {
    Tensor<T> t = Tensor<T>::zeros(spec.shape);
    switch (spec.init) {
      case InitKind::kZero:
        break;
      case InitKind::kOne:
        for (T& v : t.data) v = T(1);
        break;
      case InitKind::kNormal:
        for (T& v : t.data) {
          double x;
          do x = gauss(rng);
          while (std::abs(x) > 0.04);
          v = static_cast<T>(x);
        }
        break;
    }
    params.tensors.emplace(name, std::move(t));
  }
  return params;
}

// Everything the forward pass exposes; which handles are set depends on the
// variant and the localization-head kind.
template <typename T>
struct Forward {
  Var y_cls_logit;  // [1,1]
  Var y_cls;        // [1,1] probability
  bool has_loc = false;
  Var loc_logits;  // [T,1] (frame head)
  Var y_loc;       // [T,1] probabilities
  bool has_span = false;
  Var span_start;  // [1,T] distribution
  Var span_end;    // [1,T] distribution
};

namespace detail {

template <typename T>
Var mlp_head(Tape<T>& tape, const Parameters<T>& p, const std::string& prefix, Var x) {
  Var h = tape.add_row(tape.matmul(x, tape.param(prefix + ".w1", p.at(prefix + ".w1"))),
                       tape.param(prefix + ".b1", p.at(prefix + ".b1")));
  h = tape.relu(h);
  return tape.add_row(tape.matmul(h, tape.param(prefix + ".w2", p.at(prefix + ".w2"))),
                      tape.param(prefix + ".b2", p.at(prefix + ".b2")));
}

template <typename T>
Var dropout_mask(Tape<T>& tape, Var x, double rate, std::mt19937_64* rng) {
  if (rng == nullptr || rate <= 0) return x;
  const Tensor<T>& v = tape.value(x);
  Tensor<T> mask = Tensor<T>::zeros(v.shape);
  std::bernoulli_distribution keep(1.0 - rate);
  T scale = static_cast<T>(1.0 / (1.0 - rate));
  for (T& m : mask.data) m = keep(*rng) ? scale : T(0);
  return tape.mul(x, tape.input(std::move(mask)));
}

// One pre-norm attention sub-block: x + Wo(attend(LN(x) -> kv)). For
// self-attention the kv side is the normed x itself; for cross-attention it is
// mem. kv_valid masks padded kv columns out of the softmax and kv_real counts
// the leading real kv rows, so the weighted value sum runs over exactly those
// rows and real outputs stay bit-stable under padding.
template <typename T>
Var attention(Tape<T>& tape, const Parameters<T>& p, const ModelConfig& cfg,
              const std::string& prefix, Var x, Var mem, bool cross,
              const std::vector<std::uint8_t>& kv_valid, std::size_t kv_real,
              std::mt19937_64* rng) {
  const std::size_t d = static_cast<std::size_t>(cfg.d);
  const std::size_t nh = static_cast<std::size_t>(cfg.heads);
  const std::size_t dk = d / nh;
  Var h = tape.layer_norm_rows(x, tape.param(prefix + ".ln.g", p.at(prefix + ".ln.g")),
                               tape.param(prefix + ".ln.b", p.at(prefix + ".ln.b")), T(1e-5));
  Var kv = cross ? mem : h;
  Var q = tape.add_row(tape.matmul(h, tape.param(prefix + ".wq", p.at(prefix + ".wq"))),
                       tape.param(prefix + ".bq", p.at(prefix + ".bq")));
  Var k = tape.add_row(tape.matmul(kv, tape.param(prefix + ".wk", p.at(prefix + ".wk"))),
                       tape.param(prefix + ".bk", p.at(prefix + ".bk")));
  Var v = tape.add_row(tape.matmul(kv, tape.param(prefix + ".wv", p.at(prefix + ".wv"))),
                       tape.param(prefix + ".bv", p.at(prefix + ".bv")));
  T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk)));
  std::vector<Var> ctx;
  ctx.reserve(nh);
  for (std::size_t hh = 0; hh < nh; ++hh) {
    Var qh = tape.slice_cols(q, hh * dk, (hh + 1) * dk);
    Var kh = tape.slice_cols(k, hh * dk, (hh + 1) * dk);
    Var vh = tape.slice_cols(v, hh * dk, (hh + 1) * dk);
    Var scores = tape.affine(tape.matmul_nt(qh, kh), scale, T(0));
    Var att = tape.softmax_rows(scores, kv_valid);
    ctx.push_back(tape.matmul_cut(att, vh, kv_real));
  }
  Var cat = nh == 1 ? ctx[0] : tape.concat_cols(ctx);
  Var out = tape.add_row(tape.matmul(cat, tape.param(prefix + ".wo", p.at(prefix + ".wo"))),
                         tape.param(prefix + ".bo", p.at(prefix + ".bo")));
  out = dropout_mask(tape, out, cfg.dropout, rng);
  return tape.add(x, out);
}

template <typename T>
Var ffn_block(Tape<T>& tape, const Parameters<T>& p, const ModelConfig& cfg,
              const std::string& prefix, Var x, std::mt19937_64* rng) {
  Var h = tape.layer_norm_rows(x, tape.param(prefix + ".ln.g", p.at(prefix + ".ln.g")),
                               tape.param(prefix + ".ln.b", p.at(prefix + ".ln.b")), T(1e-5));
  h = tape.add_row(tape.matmul(h, tape.param(prefix + ".w1", p.at(prefix + ".w1"))),
                   tape.param(prefix + ".b1", p.at(prefix + ".b1")));
  h = cfg.activation == Activation::kGelu ? tape.gelu(h) : tape.relu(h);
  h = tape.add_row(tape.matmul(h, tape.param(prefix + ".w2", p.at(prefix + ".w2"))),
                   tape.param(prefix + ".b2", p.at(prefix + ".b2")));
  h = dropout_mask(tape, h, cfg.dropout, rng);
  return tape.add(x, h);
}

template <typename T>
Var final_norm(Tape<T>& tape, const Parameters<T>& p, const std::string& stack, Var x) {
  return tape.layer_norm_rows(x, tape.param(stack + ".lnf.g", p.at(stack + ".lnf.g")),
                              tape.param(stack + ".lnf.b", p.at(stack + ".lnf.b")), T(1e-5));
}

// Self-attention encoder stack over a (possibly padded) sequence. valid marks
// the real rows; real outputs do not depend on padded rows.
template <typename T>
Var encoder_stack(Tape<T>& tape, const Parameters<T>& p, const ModelConfig& cfg,
                  const std::string& stack, int layers, Var x,
                  const std::vector<std::uint8_t>& valid, std::size_t real,
                  std::mt19937_64* rng) {
  for (int l = 0; l < layers; ++l) {
    std::string lp = stack + ".l" + std::to_string(l);
    x = attention(tape, p, cfg, lp + ".attn", x, Var{}, false, valid, real, rng);
    x = ffn_block(tape, p, cfg, lp + ".ffn", x, rng);
  }
  return final_norm(tape, p, stack, x);
}

}  // namespace detail

// Phoneme embeddings + PE, then the text encoder stack. ids may carry PAD
// padding after np_real entries. Output is [len(ids) x d]; rows past np_real
// are junk that downstream consumers must slice away.
template <typename T>
Var encode_text(Tape<T>& tape, const Parameters<T>& p, const ModelConfig& cfg,
                const std::vector<int>& ids, std::size_t np_real,
                std::mt19937_64* rng = nullptr) {
  if (np_real < 1 || np_real > ids.size()) throw ShapeError("encode_text: bad real length");
  if (np_real > static_cast<std::size_t>(cfg.max_query))
    throw ShapeError("encode_text: query longer than max_query");
  Var x = tape.embedding(tape.param("phoneme.embed", p.at("phoneme.embed")), ids);
  x = tape.add(x, tape.input(positional_encoding<T>(ids.size(), static_cast<std::size_t>(cfg.d))));
  std::vector<std::uint8_t> valid(ids.size(), 0);
  for (std::size_t i = 0; i < np_real; ++i) valid[i] = 1;
  return detail::encoder_stack(tape, p, cfg, "text", cfg.text_layers, x, valid, np_real, rng);
}

// Linear projection d_in -> d + PE, then the video encoder stack. features may
// carry zero-padded frames after t_real.
template <typename T>
Var encode_video(Tape<T>& tape, const Parameters<T>& p, const ModelConfig& cfg,
                 const Tensor<T>& features, std::size_t t_real,
                 std::mt19937_64* rng = nullptr) {
  if (features.cols() != static_cast<std::size_t>(cfg.d_in))
    throw ShapeError("encode_video: feature width " + std::to_string(features.cols()) +
                     " != d_in " + std::to_string(cfg.d_in));
  if (t_real < 1 || t_real > features.rows()) throw ShapeError("encode_video: bad real length");
  if (t_real > static_cast<std::size_t>(cfg.max_frames))
    throw ShapeError("encode_video: clip longer than max_frames");
  Var x = tape.add_row(
      tape.matmul(tape.input(features), tape.param("video.proj.w", p.at("video.proj.w"))),
      tape.param("video.proj.b", p.at("video.proj.b")));
  x = tape.add(x,
               tape.input(positional_encoding<T>(features.rows(), static_cast<std::size_t>(cfg.d))));
  std::vector<std::uint8_t> valid(features.rows(), 0);
  for (std::size_t i = 0; i < t_real; ++i) valid[i] = 1;
  return detail::encoder_stack(tape, p, cfg, "video", cfg.video_layers, x, valid, t_real, rng);
}

// Fusion for the transpotter variants: [CLS; V_enc; Q_enc] + PE over the joint
// length, joint self-attention stack, then the heads. Padded rows are sliced
// off before fusion, so the joint stack runs mask-free on real rows only and
// the phoneme positions are simply never read by any head.
template <typename T>
Forward<T> joint_forward(Tape<T>& tape, const Parameters<T>& p, const ModelConfig& cfg,
                         Var v_enc, std::size_t t_real, Var q_enc, std::size_t np_real,
                         std::mt19937_64* rng = nullptr) {
  Var v_real = tape.slice_rows(v_enc, 0, t_real);
  Var q_real = tape.slice_rows(q_enc, 0, np_real);
  if (cfg.modality_embeddings) {
    Var table = tape.param("modality.embed", p.at("modality.embed"));
    v_real = tape.add_row(v_real, tape.reshape(tape.slice_rows(table, 0, 1),
                                               {static_cast<std::size_t>(cfg.d)}));
    q_real = tape.add_row(q_real, tape.reshape(tape.slice_rows(table, 1, 2),
                                               {static_cast<std::size_t>(cfg.d)}));
  }
  Var j = tape.concat_rows({tape.param("cls.token", p.at("cls.token")), v_real, q_real});
  std::size_t joint_len = 1 + t_real + np_real;
  j = tape.add(j, tape.input(positional_encoding<T>(joint_len, static_cast<std::size_t>(cfg.d))));
  std::vector<std::uint8_t> all(joint_len, 1);
  Var z = detail::encoder_stack(tape, p, cfg, "joint", cfg.joint_layers, j, all, joint_len, rng);

  Forward<T> out;
  out.y_cls_logit = detail::mlp_head(tape, p, "cls_head", tape.slice_rows(z, 0, 1));
  out.y_cls = tape.sigmoid(out.y_cls_logit);
  if (cfg.has_localization()) {
    Var frames = tape.slice_rows(z, 1, 1 + t_real);
    if (cfg.loc_head == LocHead::kFrameSigmoid) {
      out.has_loc = true;
      out.loc_logits = detail::mlp_head(tape, p, "loc_head", frames);
      out.y_loc = tape.sigmoid(out.loc_logits);
    } else {
      out.has_span = true;
      out.span_start = tape.softmax_rows(
          tape.reshape(detail::mlp_head(tape, p, "span_start", frames), {1, t_real}));
      out.span_end = tape.softmax_rows(
          tape.reshape(detail::mlp_head(tape, p, "span_end", frames), {1, t_real}));
    }
  }
  return out;
}

// Full forward pass for any variant. features is [T_pad x d_in] with t_real
// real frames; ids has np_real real entries. Padding beyond the real lengths
// must not change any real-position output.
template <typename T>
Forward<T> build_forward(Tape<T>& tape, const Parameters<T>& p, const ModelConfig& cfg,
                         const Tensor<T>& features, std::size_t t_real,
                         const std::vector<int>& ids, std::size_t np_real,
                         std::mt19937_64* rng = nullptr) {
  cfg.validate();
  if (!cfg.is_decoder_variant()) {
    Var v_enc = encode_video(tape, p, cfg, features, t_real, rng);
    Var q_enc = encode_text(tape, p, cfg, ids, np_real, rng);
    return joint_forward(tape, p, cfg, v_enc, t_real, q_enc, np_real, rng);
  }

  const std::size_t d = static_cast<std::size_t>(cfg.d);
  Forward<T> out;
  if (cfg.variant == Variant::kEncVidDecText) {
    // Encoded video as memory; decoder runs over [CLS; phoneme embeddings].
    Var mem = tape.slice_rows(encode_video(tape, p, cfg, features, t_real, rng), 0, t_real);
    std::vector<int> real_ids(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(np_real));
    if (np_real > static_cast<std::size_t>(cfg.max_query))
      throw ShapeError("build_forward: query longer than max_query");
    Var x = tape.embedding(tape.param("phoneme.embed", p.at("phoneme.embed")), real_ids);
    x = tape.concat_rows({tape.param("cls.token", p.at("cls.token")), x});
    x = tape.add(x, tape.input(positional_encoding<T>(1 + np_real, d)));
    std::vector<std::uint8_t> all(1 + np_real, 1);
    std::vector<std::uint8_t> mem_all(t_real, 1);
    for (int l = 0; l < cfg.joint_layers; ++l) {
      std::string lp = "joint.l" + std::to_string(l);
      x = detail::attention(tape, p, cfg, lp + ".attn", x, Var{}, false, all, 1 + np_real, rng);
      x = detail::attention(tape, p, cfg, lp + ".cross", x, mem, true, mem_all, t_real, rng);
      x = detail::ffn_block(tape, p, cfg, lp + ".ffn", x, rng);
    }
    Var z = detail::final_norm(tape, p, "joint", x);
    out.y_cls_logit = detail::mlp_head(tape, p, "cls_head", tape.slice_rows(z, 0, 1));
    out.y_cls = tape.sigmoid(out.y_cls_logit);
    return out;
  }

  // kEncTextDecVid: encoded text as memory; decoder over [CLS; projected video].
  Var mem = tape.slice_rows(encode_text(tape, p, cfg, ids, np_real, rng), 0, np_real);
  if (features.cols() != static_cast<std::size_t>(cfg.d_in))
    throw ShapeError("build_forward: feature width != d_in");
  if (t_real < 1 || t_real > features.rows()) throw ShapeError("build_forward: bad real length");
  if (t_real > static_cast<std::size_t>(cfg.max_frames))
    throw ShapeError("build_forward: clip longer than max_frames");
  Tensor<T> real_feat = Tensor<T>::zeros({t_real, features.cols()});
  std::copy(features.data.begin(), features.data.begin() + t_real * features.cols(),
            real_feat.data.begin());
  Var x = tape.add_row(
      tape.matmul(tape.input(std::move(real_feat)), tape.param("video.proj.w", p.at("video.proj.w"))),
      tape.param("video.proj.b", p.at("video.proj.b")));
  x = tape.concat_rows({tape.param("cls.token", p.at("cls.token")), x});
  x = tape.add(x, tape.input(positional_encoding<T>(1 + t_real, d)));
  std::vector<std::uint8_t> all(1 + t_real, 1);
  std::vector<std::uint8_t> mem_all(np_real, 1);
  for (int l = 0; l < cfg.joint_layers; ++l) {
    std::string lp = "joint.l" + std::to_string(l);
    x = detail::attention(tape, p, cfg, lp + ".attn", x, Var{}, false, all, 1 + t_real, rng);
    x = detail::attention(tape, p, cfg, lp + ".cross", x, mem, true, mem_all, np_real, rng);
    x = detail::ffn_block(tape, p, cfg, lp + ".ffn", x, rng);
  }
  Var z = detail::final_norm(tape, p, "joint", x);
  out.y_cls_logit = detail::mlp_head(tape, p, "cls_head", tape.slice_rows(z, 0, 1));
  out.y_cls = tape.sigmoid(out.y_cls_logit);
  Var frames = tape.slice_rows(z, 1, 1 + t_real);
  if (cfg.loc_head == LocHead::kFrameSigmoid) {
    out.has_loc = true;
    out.loc_logits = detail::mlp_head(tape, p, "loc_head", frames);
    out.y_loc = tape.sigmoid(out.loc_logits);
  } else {
    out.has_span = true;
    out.span_start = tape.softmax_rows(
        tape.reshape(detail::mlp_head(tape, p, "span_start", frames), {1, t_real}));
    out.span_end = tape.softmax_rows(
        tape.reshape(detail::mlp_head(tape, p, "span_end", frames), {1, t_real}));
  }
  return out;
}

// Inference-facing result; always in double regardless of compute precision.
struct Prediction {
  double y_cls = 0;
  bool has_loc = false;
  bool has_span = false;
  std::vector<double> y_loc;
  std::vector<double> span_start;
  std::vector<double> span_end;

  const std::vector<double>& loc() const {
    if (!has_loc)
      throw CapabilityError("this variant has no frame-level localization output");
    return y_loc;
  }
};

template <typename T>
Prediction predict(const Parameters<T>& p, const ModelConfig& cfg, const Tensor<T>& features,
                   const Query& query) {
  Tape<T> tape(/*record=*/false);
  Forward<T> f =
      build_forward(tape, p, cfg, features, features.rows(), query.ids, query.ids.size());
  Prediction pred;
  pred.y_cls = static_cast<double>(tape.value(f.y_cls).data[0]);
  if (f.has_loc) {
    pred.has_loc = true;
    for (T v : tape.value(f.y_loc).data) pred.y_loc.push_back(static_cast<double>(v));
  }
  if (f.has_span) {
    pred.has_span = true;
    for (T v : tape.value(f.span_start).data) pred.span_start.push_back(static_cast<double>(v));
    for (T v : tape.value(f.span_end).data) pred.span_end.push_back(static_cast<double>(v));
  }
  return pred;
}

template <typename T>
Prediction predict(const Parameters<T>& p, const ModelConfig& cfg, const FeatureSequence& fs,
                   const Query& query) {
  return predict(p, cfg, fs.as_tensor<T>(), query);
}

}  // namespace transpotter
