#include "transpotter/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "transpotter/checkpoint.hpp"
#include "transpotter/errors.hpp"
#include "transpotter/svg.hpp"

namespace transpotter {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot write " + path.string());
  os << text;
}

std::string pick_run_dir(const RunConfig& rc, const std::string& out_override,
                         const std::string& kind) {
  if (!out_override.empty()) return out_override;
  if (!rc.paths.run.empty()) return rc.paths.run;
  return "runs/" + kind + "-" + rc.hash();
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string fmt_or_dash(double v) { return std::isnan(v) ? "-" : fmt(v); }

Lexicon load_lexicon_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open lexicon: " + path, 0);
  return parse_lexicon(is);
}

// Consecutive frame indices grouped into half-open [start,end) spans.
std::vector<std::pair<std::uint32_t, std::uint32_t>> group_spans(
    const std::vector<std::uint32_t>& frames) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> spans;
  for (std::uint32_t f : frames) {
    if (!spans.empty() && spans.back().second == f)
      spans.back().second = f + 1;
    else
      spans.push_back({f, f + 1});
  }
  return spans;
}

std::string strata_csv(const std::vector<StratumRow>& rows) {
  std::string csv = "bucket,count,map_cls,map_loc\n";
  for (const auto& r : rows)
    csv += r.bucket + "," + std::to_string(r.count) + "," + fmt_or_dash(r.map_cls) + "," +
           fmt_or_dash(r.map_loc) + "\n";
  return csv;
}

}  // namespace

std::string run_synth(RunConfig rc, const std::string& out_override, bool force,
                      std::ostream& out) {
  std::string dir = out_override.empty() ? rc.paths.data : out_override;
  rc.paths.data = dir;
  if (fs::exists(dir) && !fs::is_empty(dir) && !force)
    throw ValidationError("output directory '" + dir + "' is not empty (use --force to overwrite)");
  SyntheticSummary s = synthesize_dataset(rc.synth, dir);
  rc.resolve_paths();
  write_text(fs::path(dir) / "config.json", rc.echo_json());
  double hours = static_cast<double>(s.total_frames) / 25.0 / 3600.0;
  out << "wrote " << s.train_clips << " train + " << s.test_clips << " test clips, vocab "
      << s.vocab_size << " (" << s.lexicon_entries << " lexicon entries), " << s.total_frames
      << " frames (" << fmt(hours) << " h at 25 fps) to " << dir << "\n";
  for (const auto& [spoken, alias] : s.homophemes)
    out << "homopheme pair: " << spoken << " / " << alias << " (alias unspoken)\n";
  return dir;
}

std::string run_train(RunConfig rc, const std::string& out_override, bool resume,
                      std::ostream& out) {
  if (!rc.model.has_localization()) {
    if (rc.was_set("train.lambda"))
      throw ConfigError("variant '" + to_string(rc.model.variant) +
                        "' trains with the classification loss only; train.lambda does not apply");
    if (rc.was_set("model.loc_head"))
      throw ConfigError("variant '" + to_string(rc.model.variant) +
                        "' has no localization head; model.loc_head does not apply");
  }
  rc.resolve_paths();
  std::string train_manifest = (fs::path(rc.paths.data) / "train.jsonl").string();
  std::uint32_t data_dim = manifest_feature_dim(train_manifest);
  if (!rc.was_set("model.d_in")) {
    rc.model.d_in = static_cast<int>(data_dim);
  } else if (rc.model.d_in != static_cast<int>(data_dim)) {
    throw ConfigError("model.d_in=" + std::to_string(rc.model.d_in) +
                      " but the dataset features are " + std::to_string(data_dim) + "-wide");
  }
  rc.model.validate();
  rc.train.validate();

  std::string run_dir = pick_run_dir(rc, out_override, "train");
  fs::create_directories(run_dir);
  write_text(fs::path(run_dir) / "config.json", rc.echo_json());

  std::vector<LoadedClip> clips = load_clips(train_manifest);
  Lexicon lexicon = load_lexicon_file(rc.paths.lexicon);
  TrainResult res = train(rc.model, rc.train, clips, lexicon, run_dir, &out, resume);
  out << "best val loss " << fmt(res.best_val) << " at epoch " << res.best_epoch << "; checkpoint "
      << res.best_checkpoint << "\n";
  return run_dir;
}

std::string run_eval(RunConfig rc, const std::string& out_override, std::ostream& out) {
  rc.resolve_paths();
  if (rc.paths.checkpoint.empty())
    throw ConfigError("eval needs paths.checkpoint (or --checkpoint)");
  auto [mcfg, params] = load_checkpoint(rc.paths.checkpoint);

  std::vector<LoadedClip> clips = load_clips(rc.paths.manifest);
  if (clips.empty()) throw ValidationError("empty manifest: " + rc.paths.manifest);
  if (clips.front().features.dim != static_cast<std::uint32_t>(mcfg.d_in))
    throw ConfigError("checkpoint expects d_in=" + std::to_string(mcfg.d_in) +
                      " but the manifest features are " +
                      std::to_string(clips.front().features.dim) + "-wide");
  Lexicon lexicon = load_lexicon_file(rc.paths.lexicon);

  std::vector<ClipRecord> records;
  for (const auto& lc : clips) records.push_back(lc.rec);
  std::size_t skipped = 0;
  std::vector<QueryEntry> queries =
      build_query_vocabulary(records, lexicon, rc.eval.min_phonemes, mcfg.max_query, &skipped);
  if (queries.empty())
    throw ValidationError("no eligible queries at min_phonemes=" +
                          std::to_string(rc.eval.min_phonemes));

  std::string run_dir = pick_run_dir(rc, out_override, "eval");
  fs::create_directories(run_dir);
  write_text(fs::path(run_dir) / "config.json", rc.echo_json());

  ScoreGrid grid = score_grid(params, mcfg, queries, clips);

  json report;
  report["queries"] = queries.size();
  report["clips"] = clips.size();
  report["skipped_words"] = skipped;
  report["checkpoint"] = rc.paths.checkpoint;
  report["variant"] = to_string(mcfg.variant);
  for (int k : rc.eval.acc_ks) report["acc"][std::to_string(k)] = acc_at_k(grid, k);
  double mc = map_cls(grid);
  report["map_cls"] = mc;
  double ml = std::numeric_limits<double>::quiet_NaN();
  if (mcfg.has_localization()) {
    ml = map_loc(grid, rc.eval);
    report["map_loc"] = ml;
  } else {
    report["map_loc"] = "-";
  }
  write_text(fs::path(run_dir) / "report.json", report.dump(2) + "\n");

  auto kw_rows = stratified_report(grid, StratifyAxis::kKeywordLength, true, rc.eval);
  auto clip_rows = stratified_report(grid, StratifyAxis::kClipWordCount, false, rc.eval);
  write_text(fs::path(run_dir) / "strata_keyword.csv", strata_csv(kw_rows));
  write_text(fs::path(run_dir) / "strata_clips.csv", strata_csv(clip_rows));

  {
    SvgSeries cls_series{"mAP cls", {}, {}};
    SvgSeries loc_series{"mAP loc", {}, {}};
    for (const auto& r : kw_rows) {
      double x = static_cast<double>(std::stoi(r.bucket.substr(r.bucket.find_last_of('=') + 1)));
      if (!std::isnan(r.map_cls)) {
        cls_series.x.push_back(x);
        cls_series.y.push_back(r.map_cls);
      }
      if (!std::isnan(r.map_loc)) {
        loc_series.x.push_back(x);
        loc_series.y.push_back(r.map_loc);
      }
    }
    std::vector<SvgSeries> series{cls_series};
    if (!loc_series.x.empty()) series.push_back(loc_series);
    write_text(fs::path(run_dir) / "map_by_length.svg",
               svg_line_plot("mAP by minimum keyword length", "minimum phonemes", "mAP", series));
  }

  for (int k : rc.eval.acc_ks)
    out << "acc@" << k << " " << fmt(report["acc"][std::to_string(k)].get<double>()) << "\n";
  out << "map_cls " << fmt(mc) << "\n";
  out << "map_loc " << (mcfg.has_localization() ? fmt(ml) : std::string("-")) << "\n";
  out << "report written to " << run_dir << "\n";
  return run_dir;
}

void run_spot(const RunConfig& rc, const std::string& keyword_or_phrase,
              const std::string& curve_csv, std::ostream& out) {
  RunConfig cfg = rc;
  cfg.resolve_paths();
  if (cfg.paths.checkpoint.empty())
    throw ConfigError("spot needs paths.checkpoint (or --checkpoint)");
  if (cfg.paths.features.empty()) throw ConfigError("spot needs paths.features (or --features)");
  auto [mcfg, params] = load_checkpoint(cfg.paths.checkpoint);
  Lexicon lexicon = load_lexicon_file(cfg.paths.lexicon);

  std::vector<std::string> words;
  {
    std::istringstream ss(keyword_or_phrase);
    std::string w;
    while (ss >> w) words.push_back(w);
  }
  if (words.empty()) throw ValidationError("empty keyword");
  Query query = words.size() == 1 ? phonemize(words[0], lexicon) : phonemize_phrase(words, lexicon);

  FeatureSequence feat = read_features(cfg.paths.features);
  Prediction pred = predict(params, mcfg, feat, query);

  out << "query " << query.text << " (" << query.ids.size() << " phonemes)\n";
  out << "y_cls " << fmt(pred.y_cls) << "\n";
  if (pred.has_loc || pred.has_span) {
    auto spans = group_spans(detection_frames(pred, cfg.eval.tau));
    if (spans.empty()) {
      out << "spans (none above tau=" << fmt(cfg.eval.tau) << ")\n";
    } else {
      out << "spans";
      for (auto [s, e] : spans) out << " [" << s << "," << e << ")";
      out << "\n";
    }
  } else {
    out << "spans - (classification-only variant)\n";
  }
  if (!curve_csv.empty()) {
    if (!pred.has_loc && !pred.has_span)
      throw CapabilityError("this checkpoint has no localization output; no curve to write");
    std::string csv;
    if (pred.has_loc) {
      csv = "frame,probability\n";
      for (std::size_t t = 0; t < pred.y_loc.size(); ++t)
        csv += std::to_string(t) + "," + fmt(pred.y_loc[t]) + "\n";
    } else {
      csv = "frame,p_start,p_end\n";
      for (std::size_t t = 0; t < pred.span_start.size(); ++t)
        csv += std::to_string(t) + "," + fmt(pred.span_start[t]) + "," + fmt(pred.span_end[t]) + "\n";
    }
    write_text(curve_csv, csv);
    out << "curve written to " << curve_csv << "\n";
  }
}

std::string run_probe(RunConfig rc, const std::vector<std::string>& words,
                      const std::string& out_override, std::ostream& out) {
  rc.resolve_paths();
  if (rc.paths.checkpoint.empty())
    throw ConfigError("probe needs paths.checkpoint (or --checkpoint)");
  if (rc.paths.clip.empty()) throw ConfigError("probe needs paths.clip (or --clip)");
  if (words.empty()) throw ValidationError("probe needs at least one query word");
  auto [mcfg, params] = load_checkpoint(rc.paths.checkpoint);
  std::vector<LoadedClip> clips = load_clips(rc.paths.manifest);
  Lexicon lexicon = load_lexicon_file(rc.paths.lexicon);

  const LoadedClip* clip = nullptr;
  for (const auto& lc : clips)
    if (lc.rec.id == rc.paths.clip) {
      clip = &lc;
      break;
    }
  if (clip == nullptr) {
    std::string msg = "no clip '" + rc.paths.clip + "' in " + rc.paths.manifest + "; available:";
    for (std::size_t i = 0; i < clips.size() && i < 20; ++i) msg += " " + clips[i].rec.id;
    if (clips.size() > 20) msg += " ...";
    throw ValidationError(msg);
  }

  std::vector<QueryEntry> queries;
  for (const auto& w : words) queries.push_back({to_upper(w), phonemize(w, lexicon)});

  std::string run_dir = pick_run_dir(rc, out_override, "probe");
  fs::create_directories(run_dir);
  write_text(fs::path(run_dir) / "config.json", rc.echo_json());

  std::vector<ProbeCurve> curves = probe(params, mcfg, *clip, queries);

  std::string csv = "word,y_cls,frame,probability\n";
  for (const auto& c : curves)
    for (std::size_t t = 0; t < c.curve.size(); ++t)
      csv += c.word + "," + fmt(c.y_cls) + "," + std::to_string(t) + "," + fmt(c.curve[t]) + "\n";
  write_text(fs::path(run_dir) / "probe.csv", csv);

  // Shade the first query word's ground-truth span when it occurs in the clip.
  double shade0 = 0, shade1 = -1;
  for (const auto& w : clip->rec.words)
    if (to_upper(w.word) == queries.front().word) {
      shade0 = w.start;
      shade1 = w.end;
      break;
    }
  std::vector<SvgSeries> series;
  for (const auto& c : curves) {
    SvgSeries s{c.word + " (y_cls " + fmt(c.y_cls) + ")", {}, {}};
    for (std::size_t t = 0; t < c.curve.size(); ++t) {
      s.x.push_back(static_cast<double>(t));
      s.y.push_back(c.curve[t]);
    }
    series.push_back(std::move(s));
  }
  write_text(fs::path(run_dir) / "probe.svg",
             svg_line_plot("keyword probe on " + clip->rec.id, "frame", "probability", series,
                           shade0, shade1));
  out << curves.size() << " curve(s) over " << clip->features.frames << " frames written to "
      << run_dir << "\n";
  return run_dir;
}

}  // namespace transpotter
