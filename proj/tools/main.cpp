// Command-line surface: synth / train / eval / spot / probe.
//
// Every command reads an optional JSON config (--config) and applies dot-path
// overrides on top; any argument of the form --section.key VALUE (or
// --section.key=VALUE) is routed into the run configuration. A few common
// knobs also have short spellings (--seed, --variant, --lambda, ...).

#include <algorithm>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "transpotter/errors.hpp"
#include "transpotter/pipeline.hpp"
#include "transpotter/runconfig.hpp"

namespace {

using Overrides = std::vector<std::pair<std::string, std::string>>;

// Splits argv into dot-path overrides (any --x.y token plus its value) and the
// arguments left for CLI11. Keys never clash: no built-in flag contains a dot.
void split_overrides(int argc, char** argv, std::vector<std::string>& args, Overrides& extras) {
  for (int i = 1; i < argc; ++i) {
    std::string tok = argv[i];
    if (tok.rfind("--", 0) == 0 && tok.find('.') != std::string::npos) {
      std::string key = tok.substr(2);
      auto eq = key.find('=');
      if (eq != std::string::npos) {
        extras.emplace_back(key.substr(0, eq), key.substr(eq + 1));
      } else if (i + 1 < argc) {
        extras.emplace_back(key, argv[++i]);
      } else {
        throw transpotter::ConfigError("missing value for --" + key);
      }
    } else {
      args.push_back(std::move(tok));
    }
  }
}

int fail(const std::exception& e) {
  static const char* prefixes[] = {"shape: ",      "parse: ",      "format: ",
                                   "not in lexicon: ", "validation: ", "capability: ",
                                   "config: "};
  const std::string msg = e.what();
  bool tagged = false;
  for (const char* p : prefixes) tagged = tagged || msg.rfind(p, 0) == 0;
  std::cerr << (tagged ? "" : "error: ") << msg << '\n';
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace transpotter;

  std::vector<std::string> args;
  Overrides overrides;  // short flags first, then raw dot-paths
  Overrides extras;
  try {
    split_overrides(argc, argv, args, extras);
  } catch (const std::exception& e) {
    return fail(e);
  }

  CLI::App app{"phoneme-query visual keyword spotting"};
  app.require_subcommand(1);

  std::string config, out, curve;
  bool force = false, resume = false;
  std::vector<std::string> phrase, words;

  auto common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config, "JSON config file");
    cmd->add_option_function<std::string>(
        "--seed", [&](const std::string& v) { overrides.emplace_back("seed", v); },
        "run seed (propagates to synth/train)");
  };
  auto kv = [&](CLI::App* cmd, const char* flag, const char* path, const char* desc) {
    cmd->add_option_function<std::string>(
        flag, [&overrides, path](const std::string& v) { overrides.emplace_back(path, v); },
        desc);
  };

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic lipreading dataset");
  common(synth);
  synth->add_option("--out", out, "output directory (default: paths.data)");
  synth->add_flag("--force", force, "overwrite a non-empty output directory");

  CLI::App* train = app.add_subcommand("train", "train a model on a dataset");
  common(train);
  train->add_option("--out", out, "run directory (default: runs/<variant>-<confighash>)");
  train->add_flag("--resume", resume, "continue from the run directory's last checkpoint");
  kv(train, "--data", "paths.data", "dataset directory");
  kv(train, "--variant", "model.variant", "model variant");
  kv(train, "--lambda", "train.lambda", "localization loss weight");
  kv(train, "--epochs", "train.epochs", "training epochs");

  CLI::App* eval = app.add_subcommand("eval", "score a checkpoint on a manifest");
  common(eval);
  eval->add_option("--out", out, "report directory (default: alongside the checkpoint)");
  kv(eval, "--checkpoint", "paths.checkpoint", "model checkpoint (.tpck)");
  kv(eval, "--manifest", "paths.manifest", "evaluation manifest (.jsonl)");
  kv(eval, "--lexicon", "paths.lexicon", "pronunciation lexicon");
  kv(eval, "--data", "paths.data", "dataset directory");
  kv(eval, "--min-phonemes", "eval.min_phonemes", "vocabulary phoneme-length floor");
  kv(eval, "--tau", "eval.tau", "frame binarization threshold");

  CLI::App* spot = app.add_subcommand("spot", "spot one keyword or phrase in a feature file");
  common(spot);
  kv(spot, "--checkpoint", "paths.checkpoint", "model checkpoint (.tpck)");
  kv(spot, "--features", "paths.features", "feature file (.tpft)");
  kv(spot, "--lexicon", "paths.lexicon", "pronunciation lexicon");
  kv(spot, "--data", "paths.data", "dataset directory");
  kv(spot, "--tau", "eval.tau", "frame binarization threshold");
  spot->add_option("--curve", curve, "also write the frame curve to this CSV path");
  spot->add_option("keyword", phrase, "keyword, or words of a phrase")->required();

  CLI::App* probe = app.add_subcommand("probe", "per-frame query curves over one clip");
  common(probe);
  probe->add_option("--out", out, "output directory (default: alongside the checkpoint)");
  kv(probe, "--checkpoint", "paths.checkpoint", "model checkpoint (.tpck)");
  kv(probe, "--manifest", "paths.manifest", "manifest holding the clip (.jsonl)");
  kv(probe, "--lexicon", "paths.lexicon", "pronunciation lexicon");
  kv(probe, "--data", "paths.data", "dataset directory");
  kv(probe, "--clip", "paths.clip", "clip id to probe");
  probe->add_option("words", words, "query words")->required();

  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    overrides.insert(overrides.end(), extras.begin(), extras.end());
    RunConfig rc = RunConfig::load(config, overrides);
    if (app.got_subcommand(synth)) {
      run_synth(std::move(rc), out, force, std::cout);
    } else if (app.got_subcommand(train)) {
      run_train(std::move(rc), out, resume, std::cout);
    } else if (app.got_subcommand(eval)) {
      run_eval(std::move(rc), out, std::cout);
    } else if (app.got_subcommand(spot)) {
      std::string joined;
      for (const auto& w : phrase) {
        if (!joined.empty()) joined += ' ';
        joined += w;
      }
      run_spot(rc, joined, curve, std::cout);
    } else if (app.got_subcommand(probe)) {
      run_probe(std::move(rc), words, out, std::cout);
    }
  } catch (const std::exception& e) {
    return fail(e);
  }
  return 0;
}
