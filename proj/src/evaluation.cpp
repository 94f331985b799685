#include "transpotter/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "transpotter/errors.hpp"

namespace transpotter {

void EvalConfig::validate() const {
  if (min_phonemes < 1) throw ConfigError("min_phonemes must be >= 1");
  if (acc_ks.empty()) throw ConfigError("need at least one k for Acc@k");
  for (int k : acc_ks)
    if (k < 1) throw ConfigError("Acc@k requires k >= 1");
  if (tau <= 0 || tau >= 1) throw ConfigError("tau must be in (0,1)");
  if (iou_threshold <= 0 || iou_threshold > 1) throw ConfigError("iou_threshold must be in (0,1]");
}

namespace {

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  std::string w;
  while (ss >> w) out.push_back(w);
  return out;
}

// Occurrences of a (possibly multi-word) query in a transcript; gt frames are
// the union over occurrences of the covered span.
CellTruth query_truth(const std::vector<std::string>& tokens, const ClipRecord& rec) {
  CellTruth t;
  if (tokens.empty() || rec.words.size() < tokens.size()) return t;
  std::set<std::uint32_t> frames;
  for (std::size_t i = 0; i + tokens.size() <= rec.words.size(); ++i) {
    bool match = true;
    for (std::size_t j = 0; j < tokens.size(); ++j)
      if (to_upper(rec.words[i + j].word) != tokens[j]) {
        match = false;
        break;
      }
    if (!match) continue;
    t.present = true;
    for (std::uint32_t f = rec.words[i].start; f < rec.words[i + tokens.size() - 1].end; ++f)
      frames.insert(f);
  }
  t.gt_frames.assign(frames.begin(), frames.end());
  return t;
}

int thread_budget() {
  if (const char* env = std::getenv("TRANSPOTTER_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

}  // namespace

std::vector<QueryEntry> build_query_vocabulary(const std::vector<ClipRecord>& clips,
                                               const Lexicon& lexicon, int min_phonemes,
                                               int max_query, std::size_t* skipped) {
  std::set<std::string> words;
  for (const auto& rec : clips)
    for (const auto& w : rec.words) words.insert(to_upper(w.word));
  std::vector<QueryEntry> out;
  std::size_t dropped = 0;
  for (const auto& w : words) {
    const auto* prons = lexicon.find(w);
    if (prons == nullptr) {
      ++dropped;
      continue;
    }
    std::size_t n_p = prons->front().size();
    if (n_p < static_cast<std::size_t>(min_phonemes) ||
        n_p > static_cast<std::size_t>(max_query)) {
      ++dropped;
      continue;
    }
    out.push_back({w, phonemize(w, lexicon)});
  }
  if (skipped != nullptr) *skipped = dropped;
  return out;
}

std::vector<QueryEntry> build_bigram_vocabulary(const std::vector<ClipRecord>& clips,
                                                const Lexicon& lexicon, int min_phonemes,
                                                int max_query) {
  std::set<std::pair<std::string, std::string>> pairs;
  for (const auto& rec : clips)
    for (std::size_t i = 0; i + 1 < rec.words.size(); ++i)
      pairs.insert({to_upper(rec.words[i].word), to_upper(rec.words[i + 1].word)});
  std::vector<QueryEntry> out;
  for (const auto& [a, b] : pairs) {
    if (!lexicon.contains(a) || !lexicon.contains(b)) continue;
    Query q = phonemize_phrase({a, b}, lexicon);
    if (q.ids.size() < static_cast<std::size_t>(min_phonemes) ||
        q.ids.size() > static_cast<std::size_t>(max_query))
      continue;
    out.push_back({a + " " + b, std::move(q)});
  }
  return out;
}

ScoreGrid score_grid(const Parameters<float>& params, const ModelConfig& cfg,
                     const std::vector<QueryEntry>& queries,
                     const std::vector<LoadedClip>& clips) {
  if (queries.empty()) throw ValidationError("score_grid: empty query vocabulary");
  if (clips.empty()) throw ValidationError("score_grid: no clips");
  ScoreGrid grid;
  grid.queries = queries;
  for (const auto& lc : clips) {
    grid.clip_ids.push_back(lc.rec.id);
    grid.clip_frames.push_back(lc.features.frames);
    grid.clip_words.push_back(lc.rec.words.size());
  }
  grid.preds.resize(queries.size() * clips.size());
  grid.truth.resize(queries.size() * clips.size());

  // Feature tensors are shared across queries; precompute once.
  std::vector<Tensor<float>> feats;
  feats.reserve(clips.size());
  for (const auto& lc : clips) feats.push_back(lc.features.as_tensor<float>());

  auto score_row = [&](std::size_t q) {
    std::vector<std::string> tokens = split_words(grid.queries[q].word);
    for (std::size_t c = 0; c < clips.size(); ++c) {
      try {
        grid.preds[grid.cell(q, c)] = predict(params, cfg, feats[c], grid.queries[q].query);
      } catch (const std::exception& e) {
        throw ValidationError("scoring query '" + grid.queries[q].word + "' against clip '" +
                              clips[c].rec.id + "': " + e.what());
      }
      grid.truth[grid.cell(q, c)] = query_truth(tokens, clips[c].rec);
    }
  };

  int threads = std::min<int>(thread_budget(), static_cast<int>(queries.size()));
  if (threads <= 1) {
    for (std::size_t q = 0; q < queries.size(); ++q) score_row(q);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&, t]() {
        try {
          for (std::size_t q = static_cast<std::size_t>(t); q < queries.size();
               q += static_cast<std::size_t>(threads))
            score_row(q);
        } catch (...) {
          errors[static_cast<std::size_t>(t)] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return grid;
}

std::vector<std::size_t> ranked_clips(const ScoreGrid& grid, std::size_t q) {
  std::vector<std::size_t> order(grid.clip_ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    double sa = grid.pred(q, a).y_cls, sb = grid.pred(q, b).y_cls;
    if (sa != sb) return sa > sb;
    return grid.clip_ids[a] < grid.clip_ids[b];
  });
  return order;
}

double average_precision(const std::vector<std::uint8_t>& ranked_relevance,
                         std::size_t total_relevant) {
  if (total_relevant == 0) throw std::domain_error("average_precision: no relevant items");
  double sum = 0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < ranked_relevance.size(); ++r) {
    if (!ranked_relevance[r]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  return sum / static_cast<double>(total_relevant);
}

double average_precision(const std::vector<std::uint8_t>& ranked_relevance) {
  std::size_t p = 0;
  for (auto v : ranked_relevance) p += v ? 1 : 0;
  return average_precision(ranked_relevance, p);
}

double acc_at_k(const ScoreGrid& grid, int k) {
  if (k < 1) throw std::domain_error("acc_at_k: k must be >= 1");
  double hits = 0;
  for (std::size_t q = 0; q < grid.queries.size(); ++q) {
    auto order = ranked_clips(grid, q);
    std::size_t top = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
    for (std::size_t r = 0; r < top; ++r)
      if (grid.gt(q, order[r]).present) {
        hits += 1;
        break;
      }
  }
  return hits / static_cast<double>(grid.queries.size());
}

namespace {

// AP for one query over a clip subset under an arbitrary relevance predicate,
// with the presence count as denominator. Returns NaN for queries with no
// present clip in the subset (caller skips those).
template <typename Relevant>
double query_ap(const ScoreGrid& grid, std::size_t q, const std::vector<std::size_t>& subset,
                Relevant relevant) {
  std::size_t present = 0;
  for (std::size_t c : subset)
    if (grid.gt(q, c).present) ++present;
  if (present == 0) return std::numeric_limits<double>::quiet_NaN();
  std::vector<std::size_t> order = subset;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    double sa = grid.pred(q, a).y_cls, sb = grid.pred(q, b).y_cls;
    if (sa != sb) return sa > sb;
    return grid.clip_ids[a] < grid.clip_ids[b];
  });
  std::vector<std::uint8_t> rel;
  rel.reserve(order.size());
  for (std::size_t c : order) rel.push_back(relevant(q, c) ? 1 : 0);
  return average_precision(rel, present);
}

std::vector<std::size_t> all_clips(const ScoreGrid& grid) {
  std::vector<std::size_t> v(grid.clip_ids.size());
  std::iota(v.begin(), v.end(), 0);
  return v;
}

template <typename Relevant>
double mean_ap(const ScoreGrid& grid, const std::vector<std::size_t>& queries,
               const std::vector<std::size_t>& subset, Relevant relevant) {
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t q : queries) {
    double ap = query_ap(grid, q, subset, relevant);
    if (std::isnan(ap)) continue;
    sum += ap;
    ++n;
  }
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  return sum / static_cast<double>(n);
}

std::vector<std::size_t> all_queries(const ScoreGrid& grid) {
  std::vector<std::size_t> v(grid.queries.size());
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace

double map_cls(const ScoreGrid& grid) {
  return mean_ap(grid, all_queries(grid), all_clips(grid),
                 [&](std::size_t q, std::size_t c) { return grid.gt(q, c).present; });
}

std::vector<std::uint32_t> binarize_loc(const std::vector<double>& y_loc, double tau) {
  std::vector<std::uint32_t> out;
  for (std::size_t t = 0; t < y_loc.size(); ++t)
    if (y_loc[t] >= tau) out.push_back(static_cast<std::uint32_t>(t));
  return out;
}

std::vector<std::uint32_t> detection_frames(const Prediction& pred, double tau) {
  if (pred.has_loc) return binarize_loc(pred.y_loc, tau);
  if (!pred.has_span)
    throw CapabilityError("detection_frames: prediction has no localization output");
  std::size_t s = static_cast<std::size_t>(
      std::max_element(pred.span_start.begin(), pred.span_start.end()) - pred.span_start.begin());
  std::size_t e = static_cast<std::size_t>(
      std::max_element(pred.span_end.begin(), pred.span_end.end()) - pred.span_end.begin());
  std::vector<std::uint32_t> out;
  for (std::size_t t = s; t <= e && e < pred.span_end.size(); ++t)
    out.push_back(static_cast<std::uint32_t>(t));
  return out;
}

double iou(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::vector<std::uint32_t> inter, uni;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(uni));
  if (uni.empty()) return 0.0;
  return static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

double map_loc(const ScoreGrid& grid, const EvalConfig& cfg) {
  cfg.validate();
  auto relevant = [&](std::size_t q, std::size_t c) {
    const CellTruth& t = grid.gt(q, c);
    if (!t.present) return false;
    const Prediction& p = grid.pred(q, c);
    if (!p.has_loc && !p.has_span)
      throw CapabilityError("map_loc: grid has no localization output");
    return iou(detection_frames(p, cfg.tau), t.gt_frames) >= cfg.iou_threshold;
  };
  return mean_ap(grid, all_queries(grid), all_clips(grid), relevant);
}

std::vector<StratumRow> stratified_report(const ScoreGrid& grid, StratifyAxis axis,
                                          bool cumulative, const EvalConfig& cfg) {
  cfg.validate();
  bool has_loc = !grid.preds.empty() && (grid.preds[0].has_loc || grid.preds[0].has_span);
  auto present_rel = [&](std::size_t q, std::size_t c) { return grid.gt(q, c).present; };
  auto loc_rel = [&](std::size_t q, std::size_t c) {
    const CellTruth& t = grid.gt(q, c);
    return t.present && iou(detection_frames(grid.pred(q, c), cfg.tau), t.gt_frames) >=
                            cfg.iou_threshold;
  };

  std::vector<StratumRow> rows;
  if (axis == StratifyAxis::kKeywordLength) {
    std::set<std::size_t> lengths;
    for (const auto& qe : grid.queries) lengths.insert(qe.query.ids.size());
    for (std::size_t len : lengths) {
      std::vector<std::size_t> qs;
      for (std::size_t q = 0; q < grid.queries.size(); ++q) {
        std::size_t n_p = grid.queries[q].query.ids.size();
        if (cumulative ? n_p >= len : n_p == len) qs.push_back(q);
      }
      StratumRow row;
      row.bucket = (cumulative ? "n_p>=" : "n_p==") + std::to_string(len);
      row.count = qs.size();
      row.map_cls = mean_ap(grid, qs, all_clips(grid), present_rel);
      row.map_loc = has_loc ? mean_ap(grid, qs, all_clips(grid), loc_rel)
                            : std::numeric_limits<double>::quiet_NaN();
      rows.push_back(std::move(row));
    }
  } else {
    std::set<std::size_t> counts(grid.clip_words.begin(), grid.clip_words.end());
    for (std::size_t n : counts) {
      std::vector<std::size_t> subset;
      for (std::size_t c = 0; c < grid.clip_ids.size(); ++c)
        if (grid.clip_words[c] == n) subset.push_back(c);
      StratumRow row;
      row.bucket = "words==" + std::to_string(n);
      row.count = subset.size();
      row.map_cls = mean_ap(grid, all_queries(grid), subset, present_rel);
      row.map_loc = has_loc ? mean_ap(grid, all_queries(grid), subset, loc_rel)
                            : std::numeric_limits<double>::quiet_NaN();
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::vector<ProbeCurve> probe(const Parameters<float>& params, const ModelConfig& cfg,
                              const LoadedClip& clip, const std::vector<QueryEntry>& queries) {
  std::vector<ProbeCurve> out;
  Tensor<float> feat = clip.features.as_tensor<float>();
  for (const auto& qe : queries) {
    Prediction p = predict(params, cfg, feat, qe.query);
    ProbeCurve pc;
    pc.word = qe.word;
    pc.y_cls = p.y_cls;
    if (p.has_loc) {
      pc.curve = p.y_loc;
    } else if (p.has_span) {
      // P(start <= t <= end) for independent start/end draws.
      std::size_t T = p.span_start.size();
      std::vector<double> cs(T), ce(T);
      std::partial_sum(p.span_start.begin(), p.span_start.end(), cs.begin());
      std::partial_sum(p.span_end.begin(), p.span_end.end(), ce.begin());
      pc.curve.resize(T);
      for (std::size_t t = 0; t < T; ++t)
        pc.curve[t] = cs[t] * (1.0 - (t == 0 ? 0.0 : ce[t - 1]));
    } else {
      throw CapabilityError("probe: variant '" + to_string(cfg.variant) +
                            "' has no localization output");
    }
    out.push_back(std::move(pc));
  }
  return out;
}

}  // namespace transpotter
