#include "transpotter/optimizer.hpp"

#include <cmath>

#include "transpotter/errors.hpp"

namespace transpotter {

OptimizerState OptimizerState::init(const Parameters<float>& params, double initial_lr) {
  OptimizerState st;
  st.lr = initial_lr;
  for (const auto& [name, t] : params.tensors) {
    st.m.emplace(name, Tensor<float>::zeros(t.shape));
    st.v.emplace(name, Tensor<float>::zeros(t.shape));
  }
  return st;
}

double clip_global_norm(GradientRecord<float>& grads, double max_norm) {
  double sq = 0;
  for (const auto& [name, g] : grads.grads)
    for (float v : g.data) sq += static_cast<double>(v) * static_cast<double>(v);
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    float scale = static_cast<float>(max_norm / norm);
    for (auto& [name, g] : grads.grads)
      for (float& v : g.data) v *= scale;
  }
  return norm;
}

bool adam_step(Parameters<float>& params, const GradientRecord<float>& grads,
               OptimizerState& state, const AdamConfig& cfg) {
  for (const auto& [name, g] : grads.grads)
    for (float v : g.data)
      if (!std::isfinite(v)) return false;

  state.step += 1;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (auto& [name, p] : params.tensors) {
    auto git = grads.grads.find(name);
    if (git == grads.grads.end())
      throw ShapeError("adam_step: no gradient for parameter " + name);
    const Tensor<float>& g = git->second;
    if (!g.same_shape(p)) throw ShapeError("adam_step: gradient shape mismatch for " + name);
    Tensor<float>& m = state.m.at(name);
    Tensor<float>& v = state.v.at(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      double gi = g.data[i];
      double mi = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * gi;
      double vi = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * gi * gi;
      m.data[i] = static_cast<float>(mi);
      v.data[i] = static_cast<float>(vi);
      double update = state.lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps);
      p.data[i] = static_cast<float>(p.data[i] - update);
    }
  }
  return true;
}

bool plateau_update(OptimizerState& state, double val_loss, int patience, double factor,
                    double min_lr) {
  if (!state.has_best || val_loss < state.best_val) {
    state.best_val = val_loss;
    state.has_best = true;
    state.plateau = 0;
    return false;
  }
  state.plateau += 1;
  if (state.plateau < patience) return false;
  state.plateau = 0;
  double next = std::max(state.lr / factor, min_lr);
  bool changed = next < state.lr;
  state.lr = next;
  return changed;
}

}  // namespace transpotter
