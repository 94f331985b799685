#pragma once

#include <set>
#include <string>
#include <utility>
#include <vector>

#include "transpotter/evaluation.hpp"
#include "transpotter/model.hpp"
#include "transpotter/synthetic.hpp"
#include "transpotter/trainer.hpp"

namespace transpotter {

struct RunPaths {
  std::string data = "data";  // synth output / training input directory
  std::string run;            // run directory; derived from the config hash when empty
  std::string lexicon;        // defaults to <data>/lexicon.txt
  std::string manifest;       // defaults to <data>/test.jsonl
  std::string checkpoint;     // eval/spot/probe input
  std::string features;       // spot input (.tpft)
  std::string clip;           // probe clip id
};

// The one configuration object every command consumes: a JSON file plus
// dot-path overrides on top of documented defaults. Unknown keys are
// rejected. `provided` records which dot-paths were set explicitly.
struct RunConfig {
  std::uint64_t seed = 7;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
  SyntheticConfig synth;
  RunPaths paths;
  std::set<std::string> provided;

  // config_path may be empty (defaults only). Overrides are (dot-path, raw
  // value text) pairs applied after the file. Ends by propagating the run
  // seed into the synth/train sections.
  static RunConfig load(const std::string& config_path,
                        const std::vector<std::pair<std::string, std::string>>& overrides);

  bool was_set(const std::string& dot_path) const { return provided.count(dot_path) > 0; }

  std::string echo_json() const;  // canonical pretty dump of the effective config
  std::string hash() const;       // 16 hex chars over echo_json()

  // Fills the derivable path defaults (lexicon/manifest under data).
  void resolve_paths();
};

}  // namespace transpotter
