#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "transpotter/losses.hpp"
#include "transpotter/manifest.hpp"
#include "transpotter/model.hpp"
#include "transpotter/optimizer.hpp"
#include "transpotter/sampler.hpp"

namespace transpotter {

struct TrainConfig {
  double lambda = 0.5;  // loss balance; ignored by classification-only variants
  int batch_size = 16;
  int epochs = 40;
  int steps_per_epoch = 50;
  double lr = 5e-5;
  double min_lr = 1e-6;
  int patience = 15;     // plateau epochs before decaying the rate
  double lr_decay = 5.0; // division factor on plateau
  double clip_norm = 1.0;
  double val_fraction = 0.1;
  int val_pairs = 128;   // fixed validation pair count, drawn once
  int min_phonemes = 3;
  std::uint64_t seed = 7;

  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double lr = 0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  double best_val = 0;
  int best_epoch = -1;
  std::string best_checkpoint;
  std::string metrics_csv;
};

// Trains on the given clips, writing metrics.csv, best.tpck and last.tpck
// under out_dir. Deterministic per (configs, clips, seed): the clip split,
// every sampled batch, dropout masks and the CSV bytes all derive from
// TrainConfig::seed. A non-finite loss aborts after writing diverged.tpck.
// With resume=true and an existing last.tpck + metrics.csv, training picks up
// at the next epoch; the learning-rate schedule is replayed from the logged
// validation losses, but Adam moments restart from zero.
TrainResult train(const ModelConfig& mcfg, const TrainConfig& tcfg,
                  const std::vector<LoadedClip>& clips, const Lexicon& lexicon,
                  const std::string& out_dir, std::ostream* progress = nullptr,
                  bool resume = false);

}  // namespace transpotter
