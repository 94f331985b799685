#include "transpotter/runconfig.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>

#include <json.hpp>

#include "transpotter/errors.hpp"

namespace transpotter {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Setter = std::function<void(RunConfig&, const json&)>;

template <typename T, typename F>
Setter field(F get) {
  return [get](RunConfig& rc, const json& v) { *get(rc) = v.get<T>(); };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> s = {
      {"seed", field<std::uint64_t>([](RunConfig& r) { return &r.seed; })},
      {"paths.data", field<std::string>([](RunConfig& r) { return &r.paths.data; })},
      {"paths.run", field<std::string>([](RunConfig& r) { return &r.paths.run; })},
      {"paths.lexicon", field<std::string>([](RunConfig& r) { return &r.paths.lexicon; })},
      {"paths.manifest", field<std::string>([](RunConfig& r) { return &r.paths.manifest; })},
      {"paths.checkpoint", field<std::string>([](RunConfig& r) { return &r.paths.checkpoint; })},
      {"paths.features", field<std::string>([](RunConfig& r) { return &r.paths.features; })},
      {"paths.clip", field<std::string>([](RunConfig& r) { return &r.paths.clip; })},
      {"model.d", field<int>([](RunConfig& r) { return &r.model.d; })},
      {"model.heads", field<int>([](RunConfig& r) { return &r.model.heads; })},
      {"model.text_layers", field<int>([](RunConfig& r) { return &r.model.text_layers; })},
      {"model.video_layers", field<int>([](RunConfig& r) { return &r.model.video_layers; })},
      {"model.joint_layers", field<int>([](RunConfig& r) { return &r.model.joint_layers; })},
      {"model.d_in", field<int>([](RunConfig& r) { return &r.model.d_in; })},
      {"model.vocab", field<int>([](RunConfig& r) { return &r.model.vocab; })},
      {"model.max_frames", field<int>([](RunConfig& r) { return &r.model.max_frames; })},
      {"model.max_query", field<int>([](RunConfig& r) { return &r.model.max_query; })},
      {"model.ffn_mult", field<int>([](RunConfig& r) { return &r.model.ffn_mult; })},
      {"model.dropout", field<double>([](RunConfig& r) { return &r.model.dropout; })},
      {"model.variant",
       [](RunConfig& r, const json& v) { r.model.variant = variant_from_string(v.get<std::string>()); }},
      {"model.loc_head",
       [](RunConfig& r, const json& v) { r.model.loc_head = loc_head_from_string(v.get<std::string>()); }},
      {"model.activation",
       [](RunConfig& r, const json& v) {
         r.model.activation = activation_from_string(v.get<std::string>());
       }},
      {"model.modality_embeddings",
       field<bool>([](RunConfig& r) { return &r.model.modality_embeddings; })},
      {"train.lambda", field<double>([](RunConfig& r) { return &r.train.lambda; })},
      {"train.batch_size", field<int>([](RunConfig& r) { return &r.train.batch_size; })},
      {"train.epochs", field<int>([](RunConfig& r) { return &r.train.epochs; })},
      {"train.steps_per_epoch", field<int>([](RunConfig& r) { return &r.train.steps_per_epoch; })},
      {"train.lr", field<double>([](RunConfig& r) { return &r.train.lr; })},
      {"train.min_lr", field<double>([](RunConfig& r) { return &r.train.min_lr; })},
      {"train.patience", field<int>([](RunConfig& r) { return &r.train.patience; })},
      {"train.lr_decay", field<double>([](RunConfig& r) { return &r.train.lr_decay; })},
      {"train.clip_norm", field<double>([](RunConfig& r) { return &r.train.clip_norm; })},
      {"train.val_fraction", field<double>([](RunConfig& r) { return &r.train.val_fraction; })},
      {"train.val_pairs", field<int>([](RunConfig& r) { return &r.train.val_pairs; })},
      {"train.min_phonemes", field<int>([](RunConfig& r) { return &r.train.min_phonemes; })},
      {"eval.min_phonemes", field<int>([](RunConfig& r) { return &r.eval.min_phonemes; })},
      {"eval.acc_ks", field<std::vector<int>>([](RunConfig& r) { return &r.eval.acc_ks; })},
      {"eval.tau", field<double>([](RunConfig& r) { return &r.eval.tau; })},
      {"eval.iou_threshold", field<double>([](RunConfig& r) { return &r.eval.iou_threshold; })},
      {"synth.vocab_size", field<int>([](RunConfig& r) { return &r.synth.vocab_size; })},
      {"synth.min_phonemes", field<int>([](RunConfig& r) { return &r.synth.min_phonemes; })},
      {"synth.max_phonemes", field<int>([](RunConfig& r) { return &r.synth.max_phonemes; })},
      {"synth.frames_per_phoneme",
       field<int>([](RunConfig& r) { return &r.synth.frames_per_phoneme; })},
      {"synth.noise_sigma", field<double>([](RunConfig& r) { return &r.synth.noise_sigma; })},
      {"synth.feature_dim", field<int>([](RunConfig& r) { return &r.synth.feature_dim; })},
      {"synth.min_words", field<int>([](RunConfig& r) { return &r.synth.min_words; })},
      {"synth.max_words", field<int>([](RunConfig& r) { return &r.synth.max_words; })},
      {"synth.blend", field<int>([](RunConfig& r) { return &r.synth.blend; })},
      {"synth.train_clips", field<int>([](RunConfig& r) { return &r.synth.train_clips; })},
      {"synth.test_clips", field<int>([](RunConfig& r) { return &r.synth.test_clips; })},
      {"synth.homopheme_pairs", field<int>([](RunConfig& r) { return &r.synth.homopheme_pairs; })},
  };
  return s;
}

void apply(RunConfig& rc, const std::string& path, const json& value) {
  auto it = setters().find(path);
  if (it == setters().end()) throw ConfigError("unknown config key '" + path + "'");
  try {
    it->second(rc, value);
  } catch (const json::exception& e) {
    throw ConfigError("bad value for '" + path + "': " + e.what());
  }
  rc.provided.insert(path);
}

void flatten(const json& node, const std::string& prefix,
             std::vector<std::pair<std::string, json>>& out) {
  if (node.is_object()) {
    for (const auto& [key, val] : node.items()) {
      std::string p = prefix.empty() ? key : prefix + "." + key;
      if (val.is_object())
        flatten(val, p, out);
      else
        out.emplace_back(p, val);
    }
  }
}

json parse_override_value(const std::string& text) {
  // Numbers and booleans parse as themselves; everything else is a string.
  json v = json::parse(text, nullptr, false);
  if (!v.is_discarded() && (v.is_number() || v.is_boolean() || v.is_array())) return v;
  return json(text);
}

}  // namespace

RunConfig RunConfig::load(const std::string& config_path,
                          const std::vector<std::pair<std::string, std::string>>& overrides) {
  RunConfig rc;
  if (!config_path.empty()) {
    std::ifstream is(config_path);
    if (!is) throw ConfigError("cannot open config file: " + config_path);
    json j;
    try {
      j = json::parse(is);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("bad config JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    std::vector<std::pair<std::string, json>> flat;
    flatten(j, "", flat);
    for (const auto& [path, value] : flat) apply(rc, path, value);
  }
  for (const auto& [path, text] : overrides) apply(rc, path, parse_override_value(text));
  rc.synth.seed = rc.seed;
  rc.train.seed = rc.seed;
  return rc;
}

void RunConfig::resolve_paths() {
  if (paths.lexicon.empty()) paths.lexicon = (fs::path(paths.data) / "lexicon.txt").string();
  if (paths.manifest.empty()) paths.manifest = (fs::path(paths.data) / "test.jsonl").string();
}

std::string RunConfig::echo_json() const {
  json j;
  j["seed"] = seed;
  j["paths"] = {{"data", paths.data},         {"run", paths.run},
                {"lexicon", paths.lexicon},   {"manifest", paths.manifest},
                {"checkpoint", paths.checkpoint}, {"features", paths.features},
                {"clip", paths.clip}};
  j["model"] = json::parse(model.to_json());
  j["train"] = {{"lambda", train.lambda},
                {"batch_size", train.batch_size},
                {"epochs", train.epochs},
                {"steps_per_epoch", train.steps_per_epoch},
                {"lr", train.lr},
                {"min_lr", train.min_lr},
                {"patience", train.patience},
                {"lr_decay", train.lr_decay},
                {"clip_norm", train.clip_norm},
                {"val_fraction", train.val_fraction},
                {"val_pairs", train.val_pairs},
                {"min_phonemes", train.min_phonemes}};
  j["eval"] = {{"min_phonemes", eval.min_phonemes},
               {"acc_ks", eval.acc_ks},
               {"tau", eval.tau},
               {"iou_threshold", eval.iou_threshold}};
  j["synth"] = {{"vocab_size", synth.vocab_size},
                {"min_phonemes", synth.min_phonemes},
                {"max_phonemes", synth.max_phonemes},
                {"frames_per_phoneme", synth.frames_per_phoneme},
                {"noise_sigma", synth.noise_sigma},
                {"feature_dim", synth.feature_dim},
                {"min_words", synth.min_words},
                {"max_words", synth.max_words},
                {"blend", synth.blend},
                {"train_clips", synth.train_clips},
                {"test_clips", synth.test_clips},
                {"homopheme_pairs", synth.homopheme_pairs}};
  return j.dump(2) + "\n";
}

std::string RunConfig::hash() const {
  // FNV-1a 64 over the canonical dump; enough to key run directories.
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : echo_json()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace transpotter
