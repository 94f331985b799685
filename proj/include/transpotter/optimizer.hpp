#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "transpotter/params.hpp"
#include "transpotter/tape.hpp"

namespace transpotter {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerState {
  std::map<std::string, Tensor<float>> m;  // first moments, shapes mirror Parameters
  std::map<std::string, Tensor<float>> v;  // second moments
  std::int64_t step = 0;
  double lr = 5e-5;
  int plateau = 0;        // epochs since the best validation loss
  double best_val = 0;    // set on the first observation
  bool has_best = false;

  static OptimizerState init(const Parameters<float>& params, double initial_lr);
};

// Scales all gradients so their global L2 norm is at most max_norm; returns
// the pre-clip norm.
double clip_global_norm(GradientRecord<float>& grads, double max_norm);

// One bias-corrected Adam update. Returns false (and changes nothing) when any
// gradient value is non-finite.
bool adam_step(Parameters<float>& params, const GradientRecord<float>& grads,
               OptimizerState& state, const AdamConfig& cfg);

// Plateau schedule: when the validation loss has not improved for `patience`
// consecutive epochs, divide the learning rate by `factor` (floored at
// min_lr) and restart the counter. Returns true when the rate changed.
bool plateau_update(OptimizerState& state, double val_loss, int patience, double factor,
                    double min_lr);

}  // namespace transpotter
