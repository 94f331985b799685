#include "transpotter/model.hpp"

#include <json.hpp>

namespace transpotter {

using nlohmann::json;

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kTranspotter: return "transpotter";
    case Variant::kTranspotterNoLoc: return "transpotter_no_loc";
    case Variant::kEncVidDecText: return "enc_vid_dec_text";
    case Variant::kEncTextDecVid: return "enc_text_dec_vid";
  }
  throw ConfigError("unreachable variant");
}

std::string to_string(LocHead h) {
  return h == LocHead::kFrameSigmoid ? "frame_sigmoid" : "span_softmax";
}

std::string to_string(Activation a) { return a == Activation::kRelu ? "relu" : "gelu"; }

Variant variant_from_string(const std::string& s) {
  if (s == "transpotter") return Variant::kTranspotter;
  if (s == "transpotter_no_loc") return Variant::kTranspotterNoLoc;
  if (s == "enc_vid_dec_text") return Variant::kEncVidDecText;
  if (s == "enc_text_dec_vid") return Variant::kEncTextDecVid;
  throw ConfigError("unknown variant '" + s +
                    "' (expected transpotter, transpotter_no_loc, enc_vid_dec_text or enc_text_dec_vid)");
}

LocHead loc_head_from_string(const std::string& s) {
  if (s == "frame_sigmoid") return LocHead::kFrameSigmoid;
  if (s == "span_softmax") return LocHead::kSpanSoftmax;
  throw ConfigError("unknown loc_head '" + s + "' (expected frame_sigmoid or span_softmax)");
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "gelu") return Activation::kGelu;
  throw ConfigError("unknown activation '" + s + "' (expected relu or gelu)");
}

void ModelConfig::validate() const {
  if (d < 2 || d % 2 != 0) throw ConfigError("d must be even and >= 2");
  if (heads < 1 || d % heads != 0) throw ConfigError("d must be divisible by heads");
  if (text_layers < 1 || video_layers < 1 || joint_layers < 1)
    throw ConfigError("all depths must be >= 1");
  if (d_in < 1) throw ConfigError("d_in must be >= 1");
  if (vocab < 2) throw ConfigError("vocab must be >= 2");
  if (max_frames < 1 || max_query < 1) throw ConfigError("max lengths must be >= 1");
  if (ffn_mult < 1) throw ConfigError("ffn_mult must be >= 1");
  if (dropout < 0 || dropout >= 1) throw ConfigError("dropout must be in [0,1)");
}

std::string ModelConfig::to_json() const {
  json j{{"d", d},
         {"heads", heads},
         {"text_layers", text_layers},
         {"video_layers", video_layers},
         {"joint_layers", joint_layers},
         {"d_in", d_in},
         {"vocab", vocab},
         {"max_frames", max_frames},
         {"max_query", max_query},
         {"ffn_mult", ffn_mult},
         {"dropout", dropout},
         {"variant", to_string(variant)},
         {"loc_head", to_string(loc_head)},
         {"activation", to_string(activation)},
         {"modality_embeddings", modality_embeddings}};
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad model config JSON: ") + e.what());
  }
  ModelConfig cfg;
  try {
    for (const auto& [key, val] : j.items()) {
      if (key == "d") cfg.d = val.get<int>();
      else if (key == "heads") cfg.heads = val.get<int>();
      else if (key == "text_layers") cfg.text_layers = val.get<int>();
      else if (key == "video_layers") cfg.video_layers = val.get<int>();
      else if (key == "joint_layers") cfg.joint_layers = val.get<int>();
      else if (key == "d_in") cfg.d_in = val.get<int>();
      else if (key == "vocab") cfg.vocab = val.get<int>();
      else if (key == "max_frames") cfg.max_frames = val.get<int>();
      else if (key == "max_query") cfg.max_query = val.get<int>();
      else if (key == "ffn_mult") cfg.ffn_mult = val.get<int>();
      else if (key == "dropout") cfg.dropout = val.get<double>();
      else if (key == "variant") cfg.variant = variant_from_string(val.get<std::string>());
      else if (key == "loc_head") cfg.loc_head = loc_head_from_string(val.get<std::string>());
      else if (key == "activation") cfg.activation = activation_from_string(val.get<std::string>());
      else if (key == "modality_embeddings") cfg.modality_embeddings = val.get<bool>();
      else throw ConfigError("unknown model config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad model config value: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

namespace {

void add_head(std::map<std::string, ParamSpec>& m, const std::string& prefix, std::size_t d) {
  m[prefix + ".w1"] = {{d, d}, InitKind::kNormal};
  m[prefix + ".b1"] = {{d}, InitKind::kZero};
  m[prefix + ".w2"] = {{d, 1}, InitKind::kZero};  // zero final layer: fresh model says 0.5
  m[prefix + ".b2"] = {{1}, InitKind::kZero};
}

void add_attention(std::map<std::string, ParamSpec>& m, const std::string& prefix, std::size_t d) {
  m[prefix + ".ln.g"] = {{d}, InitKind::kOne};
  m[prefix + ".ln.b"] = {{d}, InitKind::kZero};
  for (const char* w : {".wq", ".wk", ".wv", ".wo"}) m[prefix + w] = {{d, d}, InitKind::kNormal};
  for (const char* b : {".bq", ".bk", ".bv", ".bo"}) m[prefix + b] = {{d}, InitKind::kZero};
}

void add_stack(std::map<std::string, ParamSpec>& m, const std::string& stack, int layers,
               std::size_t d, std::size_t f, bool cross) {
  for (int l = 0; l < layers; ++l) {
    std::string lp = stack + ".l" + std::to_string(l);
    add_attention(m, lp + ".attn", d);
    if (cross) add_attention(m, lp + ".cross", d);
    m[lp + ".ffn.ln.g"] = {{d}, InitKind::kOne};
    m[lp + ".ffn.ln.b"] = {{d}, InitKind::kZero};
    m[lp + ".ffn.w1"] = {{d, f}, InitKind::kNormal};
    m[lp + ".ffn.b1"] = {{f}, InitKind::kZero};
    m[lp + ".ffn.w2"] = {{f, d}, InitKind::kNormal};
    m[lp + ".ffn.b2"] = {{d}, InitKind::kZero};
  }
  m[stack + ".lnf.g"] = {{d}, InitKind::kOne};
  m[stack + ".lnf.b"] = {{d}, InitKind::kZero};
}

}  // namespace

std::map<std::string, ParamSpec> parameter_shapes(const ModelConfig& cfg) {
  cfg.validate();
  const auto d = static_cast<std::size_t>(cfg.d);
  const auto f = d * static_cast<std::size_t>(cfg.ffn_mult);
  std::map<std::string, ParamSpec> m;
  m["phoneme.embed"] = {{static_cast<std::size_t>(cfg.vocab), d}, InitKind::kNormal};
  m["video.proj.w"] = {{static_cast<std::size_t>(cfg.d_in), d}, InitKind::kNormal};
  m["video.proj.b"] = {{d}, InitKind::kZero};
  m["cls.token"] = {{1, d}, InitKind::kNormal};
  if (cfg.modality_embeddings && !cfg.is_decoder_variant())
    m["modality.embed"] = {{2, d}, InitKind::kNormal};
  if (cfg.has_text_encoder()) add_stack(m, "text", cfg.text_layers, d, f, false);
  if (cfg.has_video_encoder()) add_stack(m, "video", cfg.video_layers, d, f, false);
  add_stack(m, "joint", cfg.joint_layers, d, f, cfg.is_decoder_variant());
  add_head(m, "cls_head", d);
  if (cfg.has_localization()) {
    if (cfg.loc_head == LocHead::kFrameSigmoid) {
      add_head(m, "loc_head", d);
    } else {
      add_head(m, "span_start", d);
      add_head(m, "span_end", d);
    }
  }
  return m;
}

}  // namespace transpotter
