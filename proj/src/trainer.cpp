#include "transpotter/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <random>

#include "transpotter/checkpoint.hpp"
#include "transpotter/errors.hpp"

namespace transpotter {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (lambda < 0 || lambda > 1) throw ConfigError("lambda must be in [0,1]");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (steps_per_epoch < 1) throw ConfigError("steps_per_epoch must be >= 1");
  if (lr <= 0 || min_lr <= 0 || min_lr > lr)
    throw ConfigError("need 0 < min_lr <= lr");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (lr_decay <= 1) throw ConfigError("lr_decay must be > 1");
  if (clip_norm <= 0) throw ConfigError("clip_norm must be > 0");
  if (val_fraction <= 0 || val_fraction >= 1) throw ConfigError("val_fraction must be in (0,1)");
  if (val_pairs < 1) throw ConfigError("val_pairs must be >= 1");
  if (min_phonemes < 1) throw ConfigError("min_phonemes must be >= 1");
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t x = seed ^ (0x9E3779B97F4A7C15ull * (salt + 1));
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  return x;
}

std::string csv_line(int epoch, double train_loss, double val_loss, double lr) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g", epoch, train_loss, val_loss, lr);
  return buf;
}

}  // namespace

TrainResult train(const ModelConfig& mcfg, const TrainConfig& tcfg,
                  const std::vector<LoadedClip>& clips, const Lexicon& lexicon,
                  const std::string& out_dir, std::ostream* progress, bool resume) {
  mcfg.validate();
  tcfg.validate();
  if (clips.size() < 2) throw ValidationError("training needs at least 2 clips");
  fs::create_directories(out_dir);
  const fs::path last_path = fs::path(out_dir) / "last.tpck";
  const fs::path csv_path = fs::path(out_dir) / "metrics.csv";

  // Seeded validation split.
  std::vector<std::size_t> order(clips.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  {
    std::mt19937_64 rng(mix_seed(tcfg.seed, 0xabcdef));
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::size_t n_val = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(tcfg.val_fraction * static_cast<double>(clips.size()))));
  if (n_val >= clips.size()) n_val = clips.size() - 1;
  std::vector<LoadedClip> val_clips, train_clips;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < n_val ? val_clips : train_clips).push_back(clips[order[i]]);

  SamplerConfig scfg;
  scfg.min_phonemes = tcfg.min_phonemes;
  scfg.max_frames = mcfg.max_frames;
  scfg.max_query = mcfg.max_query;
  PairSampler train_sampler(&train_clips, &lexicon, scfg);
  PairSampler val_sampler(&val_clips, &lexicon, scfg);

  // Fixed validation pairs, drawn once.
  std::vector<TrainingPair> val_set;
  {
    std::mt19937_64 rng(mix_seed(tcfg.seed, 0xfeed));
    for (int i = 0; i < tcfg.val_pairs; ++i) val_set.push_back(val_sampler.sample(rng));
  }

  // Optionally pick up a previous run: weights come from last.tpck, the epoch
  // counter and plateau schedule are replayed from metrics.csv. Adam moments
  // are not stored in checkpoints and restart from zero.
  std::vector<EpochStats> prior;
  Parameters<float> params;
  if (resume && fs::exists(last_path)) {
    auto [saved_cfg, saved_params] = load_checkpoint(last_path.string());
    if (saved_cfg.to_json() != mcfg.to_json())
      throw ConfigError("resume: model config differs from checkpoint in " + out_dir);
    params = std::move(saved_params);
    std::ifstream in(csv_path, std::ios::binary);
    if (!in) throw ValidationError("resume: missing " + csv_path.string());
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
      if (line.empty()) continue;
      EpochStats s;
      if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf", &s.epoch, &s.train_loss,
                      &s.val_loss, &s.lr) != 4)
        throw ValidationError("resume: malformed metrics.csv line: " + line);
      prior.push_back(s);
    }
  } else {
    if (resume && progress != nullptr)
      *progress << "no checkpoint under " << out_dir << "; starting fresh\n";
    params = init_parameters<float>(mcfg, tcfg.seed);
  }
  const int start_epoch = prior.empty() ? 0 : prior.back().epoch + 1;

  OptimizerState state = OptimizerState::init(params, tcfg.lr);
  AdamConfig adam;

  std::ofstream csv(csv_path, prior.empty() ? std::ios::binary
                                            : std::ios::binary | std::ios::app);
  if (!csv) throw ValidationError("cannot write metrics.csv under " + out_dir);
  if (prior.empty()) csv << "epoch,train_loss,val_loss,lr\n";

  TrainResult result;
  result.metrics_csv = csv_path.string();
  result.best_val = std::numeric_limits<double>::infinity();
  const std::string best_path = (fs::path(out_dir) / "best.tpck").string();
  for (const auto& s : prior) {
    result.history.push_back(s);
    if (s.val_loss < result.best_val) {
      result.best_val = s.val_loss;
      result.best_epoch = s.epoch;
      result.best_checkpoint = best_path;
    }
    plateau_update(state, s.val_loss, tcfg.patience, tcfg.lr_decay, tcfg.min_lr);
  }

  for (int epoch = start_epoch; epoch < tcfg.epochs; ++epoch) {
    const double lr_used = state.lr;
    std::mt19937_64 rng(mix_seed(tcfg.seed, static_cast<std::uint64_t>(epoch)));
    double loss_sum = 0;
    std::size_t loss_count = 0;
    int rejected = 0;

    for (int step = 0; step < tcfg.steps_per_epoch; ++step) {
      GradientRecord<float> batch_grads;
      const float inv_b = 1.0f / static_cast<float>(tcfg.batch_size);
      for (int b = 0; b < tcfg.batch_size; ++b) {
        TrainingPair pair = train_sampler.sample(rng);
        Tape<float> tape;
        Forward<float> fwd =
            build_forward(tape, params, mcfg, pair.features.as_tensor<float>(),
                          pair.features.frames, pair.query.ids, pair.query.ids.size(),
                          mcfg.dropout > 0 ? &rng : nullptr);
        Var loss = build_pair_loss(tape, fwd, pair, tcfg.lambda, mcfg);
        loss_sum += static_cast<double>(tape.value(loss).data[0]);
        ++loss_count;
        tape.backward(loss);
        GradientRecord<float> g = tape.gradients();
        if (batch_grads.grads.empty()) {
          batch_grads = std::move(g);
          for (auto& [name, t] : batch_grads.grads)
            for (float& x : t.data) x *= inv_b;
        } else {
          for (auto& [name, t] : g.grads) {
            Tensor<float>& acc = batch_grads.grads.at(name);
            for (std::size_t i = 0; i < t.size(); ++i) acc.data[i] += t.data[i] * inv_b;
          }
        }
      }
      clip_global_norm(batch_grads, tcfg.clip_norm);
      if (!adam_step(params, batch_grads, state, adam)) ++rejected;
    }

    double train_loss = loss_sum / static_cast<double>(loss_count);

    std::vector<Prediction> preds;
    preds.reserve(val_set.size());
    for (const auto& pair : val_set)
      preds.push_back(predict(params, mcfg, pair.features, pair.query));
    double val_loss = total_loss(preds, val_set, tcfg.lambda, mcfg.has_localization());

    if (!std::isfinite(train_loss) || !std::isfinite(val_loss)) {
      save_checkpoint((fs::path(out_dir) / "diverged.tpck").string(), mcfg, params);
      throw ValidationError("non-finite loss at epoch " + std::to_string(epoch) +
                            "; state saved to diverged.tpck");
    }

    if (val_loss < result.best_val) {
      result.best_val = val_loss;
      result.best_epoch = epoch;
      save_checkpoint(best_path, mcfg, params);
      result.best_checkpoint = best_path;
    }
    csv << csv_line(epoch, train_loss, val_loss, lr_used) << '\n';
    csv.flush();
    result.history.push_back({epoch, train_loss, val_loss, lr_used});
    if (progress != nullptr) {
      *progress << csv_line(epoch, train_loss, val_loss, lr_used);
      if (rejected > 0) *progress << "  (rejected steps: " << rejected << ")";
      *progress << '\n';
    }
    plateau_update(state, val_loss, tcfg.patience, tcfg.lr_decay, tcfg.min_lr);
  }

  save_checkpoint(last_path.string(), mcfg, params);
  return result;
}

}  // namespace transpotter
