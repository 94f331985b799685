#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "transpotter/errors.hpp"
#include "transpotter/model.hpp"
#include "transpotter/tape.hpp"
#include "transpotter/tensor_ops.hpp"

namespace transpotter {

// One supervised example: a clip crop, a phonetic query, the clip-level label
// and the frame-level labels. y_cls=0 implies y_loc all zero; y_cls=1 implies
// y_loc is 1 exactly on the keyword's frames.
struct TrainingPair {
  FeatureSequence features;
  Query query;
  int y_cls = 0;
  std::vector<std::uint8_t> y_loc;

  // First labelled frame and one past the last; requires y_cls=1.
  std::pair<std::size_t, std::size_t> loc_span() const {
    auto first = std::find(y_loc.begin(), y_loc.end(), std::uint8_t(1));
    auto last = std::find(y_loc.rbegin(), y_loc.rend(), std::uint8_t(1));
    if (first == y_loc.end()) throw ValidationError("loc_span: y_loc has no positive frame");
    return {static_cast<std::size_t>(first - y_loc.begin()),
            y_loc.size() - static_cast<std::size_t>(last - y_loc.rbegin())};
  }
};

inline double bce(double y, double y_hat) {
  double p = std::clamp(y_hat, kLogFloor, 1.0 - kLogFloor);
  return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
}

inline double loss_cls(const std::vector<Prediction>& preds,
                       const std::vector<TrainingPair>& pairs) {
  if (preds.empty() || preds.size() != pairs.size())
    throw std::domain_error("loss_cls: empty or mismatched batch");
  double sum = 0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    sum += bce(pairs[i].y_cls, preds[i].y_cls);
  return sum / static_cast<double>(preds.size());
}

// Gated per-sample localization term. Frame head: (1/T) sum_t BCE; span head:
// cross-entropy against the one-hot start/end frames, averaged over the two.
inline double loc_term(const Prediction& pred, const TrainingPair& pair) {
  if (!pred.has_loc && !pred.has_span)
    throw CapabilityError("loss_loc: variant provides no localization output");
  if (pair.y_cls == 0) return 0.0;
  if (pred.has_loc) {
    if (pred.y_loc.size() != pair.y_loc.size())
      throw ShapeError("loss_loc: prediction/label length mismatch");
    double sum = 0;
    for (std::size_t t = 0; t < pred.y_loc.size(); ++t)
      sum += bce(pair.y_loc[t], pred.y_loc[t]);
    return sum / static_cast<double>(pred.y_loc.size());
  }
  auto [s, e] = pair.loc_span();
  if (pred.span_start.size() != pair.y_loc.size())
    throw ShapeError("loss_loc: span distribution length mismatch");
  double ls = std::log(std::clamp(pred.span_start[s], kLogFloor, 1.0));
  double le = std::log(std::clamp(pred.span_end[e - 1], kLogFloor, 1.0));
  return -0.5 * (ls + le);
}

inline double loss_loc(const std::vector<Prediction>& preds,
                       const std::vector<TrainingPair>& pairs) {
  if (preds.empty() || preds.size() != pairs.size())
    throw std::domain_error("loss_loc: empty or mismatched batch");
  double sum = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) sum += loc_term(preds[i], pairs[i]);
  return sum / static_cast<double>(preds.size());
}

// L = lambda * L_cls + (1 - lambda) * L_loc; classification-only variants use
// L_cls alone regardless of lambda.
inline double total_loss(const std::vector<Prediction>& preds,
                         const std::vector<TrainingPair>& pairs, double lambda,
                         bool has_localization) {
  if (lambda < 0 || lambda > 1) throw std::domain_error("total_loss: lambda outside [0,1]");
  double lc = loss_cls(preds, pairs);
  if (!has_localization) return lc;
  double ll = loss_loc(preds, pairs);
  if (lambda == 0.0) return ll;  // exact endpoints, no arithmetic residue
  if (lambda == 1.0) return lc;
  return lambda * lc + (1.0 - lambda) * ll;
}

namespace detail {

// -log of a scalar probability node, clamped like the plain bce.
template <typename T>
Var neg_log(Tape<T>& tape, Var p) {
  return tape.affine(tape.log(p), T(-1), T(0));
}

}  // namespace detail

// Differentiable per-sample total loss on the tape. Mirrors total_loss with a
// batch of one; trainers average these scalars over the batch themselves.
template <typename T>
Var build_pair_loss(Tape<T>& tape, const Forward<T>& f, const TrainingPair& pair,
                    double lambda, const ModelConfig& cfg) {
  Var one_minus = tape.affine(f.y_cls, T(-1), T(1));
  Var l_cls = pair.y_cls == 1 ? detail::neg_log(tape, f.y_cls) : detail::neg_log(tape, one_minus);
  l_cls = tape.reshape(l_cls, {1});  // heads emit [1,1]; align with the loc terms
  if (!cfg.has_localization()) return l_cls;

  Var l_loc;
  bool have_loc_term = false;
  if (pair.y_cls == 1) {
    if (f.has_loc) {
      const std::size_t t_total = tape.value(f.y_loc).rows();
      if (t_total != pair.y_loc.size()) throw ShapeError("build_pair_loss: label length mismatch");
      Tensor<T> pos = Tensor<T>::zeros({t_total, 1});
      Tensor<T> neg = Tensor<T>::zeros({t_total, 1});
      for (std::size_t t = 0; t < t_total; ++t)
        (pair.y_loc[t] ? pos : neg).data[t] = T(1);
      Var log_p = tape.log(f.y_loc);
      Var log_q = tape.log(tape.affine(f.y_loc, T(-1), T(1)));
      Var picked = tape.add(tape.mul(tape.input(std::move(pos)), log_p),
                            tape.mul(tape.input(std::move(neg)), log_q));
      l_loc = tape.affine(tape.mean_all(picked), T(-1), T(0));
      have_loc_term = true;
    } else {
      auto [s, e] = pair.loc_span();
      Var ls = detail::neg_log(tape, tape.element(f.span_start, 0, s));
      Var le = detail::neg_log(tape, tape.element(f.span_end, 0, e - 1));
      l_loc = tape.affine(tape.add(ls, le), T(0.5), T(0));
      have_loc_term = true;
    }
  }
  if (!have_loc_term) return tape.affine(l_cls, static_cast<T>(lambda), T(0));
  return tape.add(tape.affine(l_cls, static_cast<T>(lambda), T(0)),
                  tape.affine(l_loc, static_cast<T>(1.0 - lambda), T(0)));
}

}  // namespace transpotter
