#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "transpotter/manifest.hpp"
#include "transpotter/model.hpp"
#include "transpotter/phonetics.hpp"

namespace transpotter {

struct EvalConfig {
  int min_phonemes = 3;            // query vocabulary cut-off on pronunciation length
  std::vector<int> acc_ks = {1, 5};
  double tau = 0.5;                // frame-probability binarization threshold
  double iou_threshold = 0.5;      // detection acceptance

  void validate() const;
};

struct QueryEntry {
  std::string word;
  Query query;
};

struct CellTruth {
  bool present = false;
  std::vector<std::uint32_t> gt_frames;  // union of occurrence spans, ascending
};

// Complete query x clip grid of forward results and ground truth.
struct ScoreGrid {
  std::vector<QueryEntry> queries;
  std::vector<std::string> clip_ids;
  std::vector<std::uint32_t> clip_frames;
  std::vector<std::size_t> clip_words;
  std::vector<Prediction> preds;  // row-major, queries x clips
  std::vector<CellTruth> truth;

  std::size_t cell(std::size_t q, std::size_t c) const { return q * clip_ids.size() + c; }
  const Prediction& pred(std::size_t q, std::size_t c) const { return preds[cell(q, c)]; }
  const CellTruth& gt(std::size_t q, std::size_t c) const { return truth[cell(q, c)]; }
};

// Deduplicated, sorted in-lexicon words from the clip transcripts whose first
// pronunciation has length in [min_phonemes, max_query]. skipped counts the
// distinct words that were filtered out.
std::vector<QueryEntry> build_query_vocabulary(const std::vector<ClipRecord>& clips,
                                               const Lexicon& lexicon, int min_phonemes,
                                               int max_query = 1 << 20,
                                               std::size_t* skipped = nullptr);

// Bigram phrase queries: consecutive word pairs from the transcripts, both
// words in-lexicon, phonemized by concatenation. Deduplicated and sorted.
std::vector<QueryEntry> build_bigram_vocabulary(const std::vector<ClipRecord>& clips,
                                                const Lexicon& lexicon, int min_phonemes,
                                                int max_query = 1 << 20);

// Scores every query against every clip. Honors TRANSPOTTER_THREADS (default
// 1); results are identical to sequential execution regardless of the thread
// count. For phrase queries a clip counts as containing the phrase when its
// words appear consecutively; the gt frames span the whole phrase.
ScoreGrid score_grid(const Parameters<float>& params, const ModelConfig& cfg,
                     const std::vector<QueryEntry>& queries,
                     const std::vector<LoadedClip>& clips);

// Clip ranking for one query: descending y_cls, ties by ascending clip id.
std::vector<std::size_t> ranked_clips(const ScoreGrid& grid, std::size_t q);

// AP = (1/P) * sum over relevant ranks r of precision@r. The overload with an
// explicit P supports denominators larger than the number of flagged items.
double average_precision(const std::vector<std::uint8_t>& ranked_relevance,
                         std::size_t total_relevant);
double average_precision(const std::vector<std::uint8_t>& ranked_relevance);

double acc_at_k(const ScoreGrid& grid, int k);
double map_cls(const ScoreGrid& grid);

// {t : y_loc[t] >= tau}, ascending.
std::vector<std::uint32_t> binarize_loc(const std::vector<double>& y_loc, double tau);

// Frame set claimed by a prediction: thresholded frame probabilities for the
// frame head; [argmax start, argmax end] (empty when reversed) for the span
// head. Throws CapabilityError when the prediction has no localization output.
std::vector<std::uint32_t> detection_frames(const Prediction& pred, double tau);

// |a intersect b| / |a union b|; 0 when both are empty. Inputs ascending.
double iou(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b);

// Like map_cls, but a cell is relevant only when the keyword is present AND
// the detection overlaps the ground truth with IOU >= threshold. The AP
// denominator stays the presence count.
double map_loc(const ScoreGrid& grid, const EvalConfig& cfg);

enum class StratifyAxis { kKeywordLength, kClipWordCount };

struct StratumRow {
  std::string bucket;
  std::size_t count = 0;  // queries (keyword axis) or clips (clip axis)
  double map_cls = 0;
  double map_loc = 0;  // NaN for classification-only grids
};

// Metrics per bucket. Keyword buckets are by pronunciation length, cumulative
// (">= n") or exact ("== n"); clip buckets are by exact transcript word count.
std::vector<StratumRow> stratified_report(const ScoreGrid& grid, StratifyAxis axis,
                                          bool cumulative, const EvalConfig& cfg);

struct ProbeCurve {
  std::string word;
  double y_cls = 0;
  std::vector<double> curve;  // per-frame keyword evidence, length T
};

// Frame-probability curves for each query against one clip. For span-head
// models the curve is P(start <= t <= end) under the two distributions.
std::vector<ProbeCurve> probe(const Parameters<float>& params, const ModelConfig& cfg,
                              const LoadedClip& clip, const std::vector<QueryEntry>& queries);

}  // namespace transpotter
