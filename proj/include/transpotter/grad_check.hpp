#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "transpotter/params.hpp"
#include "transpotter/tape.hpp"

namespace transpotter {

// Builds a scalar loss on the given tape from the given parameters. The
// builder must bind every tensor it uses via tape.param() so that analytic
// gradients can be collected by name.
using LossBuilder = std::function<Var(Tape<double>&, const Parameters<double>&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
};

// Central-difference verification of reverse-mode gradients, 64-bit only.
// For every parameter coordinate compares backward() against
// (L(theta+eps) - L(theta-eps)) / (2 eps) and returns the max of
// |analytic - numeric| / max(1, |numeric|).
inline GradCheckResult grad_check(const LossBuilder& build, Parameters<double> params,
                                  double eps) {
  auto loss_at = [&](const std::string& where) {
    Tape<double> tape(false);
    Var root = build(tape, params);
    double v = tape.value(root).data[0];
    if (!std::isfinite(v))
      throw std::domain_error("grad_check: non-finite loss at " + where);
    return v;
  };

  GradientRecord<double> analytic;
  {
    Tape<double> tape(true);
    Var root = build(tape, params);
    if (tape.value(root).size() != 1)
      throw std::invalid_argument("grad_check: loss is not scalar");
    tape.backward(root);
    analytic = tape.gradients();
  }

  GradCheckResult res;
  for (auto& [name, tensor] : params.tensors) {
    auto it = analytic.grads.find(name);
    if (it == analytic.grads.end()) continue;  // parameter unused by this loss
    const Tensor<double>& g = it->second;
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      double saved = tensor.data[i];
      tensor.data[i] = saved + eps;
      double lp = loss_at(name + "[" + std::to_string(i) + "]+eps");
      tensor.data[i] = saved - eps;
      double lm = loss_at(name + "[" + std::to_string(i) + "]-eps");
      tensor.data[i] = saved;
      double numeric = (lp - lm) / (2.0 * eps);
      double err = std::fabs(g.data[i] - numeric) / std::max(1.0, std::fabs(numeric));
      if (err > res.max_rel_error) {
        res.max_rel_error = err;
        res.worst_param = name;
        res.worst_index = i;
      }
    }
  }
  return res;
}

}  // namespace transpotter
