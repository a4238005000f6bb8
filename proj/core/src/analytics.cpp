#include "hail/analytics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include <boost/math/tools/minima.hpp>
#include <nlohmann/json.hpp>

#include "hail/error.hpp"
#include "hail/parallel.hpp"
#include "hail/raster.hpp"

namespace hail {

namespace {

double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
}

void check_same_window(const MaskTile& pred, const MaskTile& truth) {
  if (pred.width() != truth.width() || pred.height() != truth.height() || pred.window.scale != truth.window.scale) {
    throw DataError("metric masks differ in size or scale");
  }
}

}  // namespace

Metrics metrics_from_counts(const ConfusionCounts& c) {
  Metrics m;
  m.sensitivity = ratio(c.tp, c.tp + c.fn);
  m.specificity = ratio(c.tn, c.tn + c.fp);
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.accuracy = ratio(c.tp + c.tn, c.total());
  m.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  return m;
}

ClassMetrics compute_metrics(const MaskTile& pred, const MaskTile& truth, int positive_class) {
  check_same_window(pred, truth);
  ClassMetrics out;
  out.class_index = positive_class;
  auto& c = out.counts;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    const bool p = pred.values[i] == positive_class;
    const bool t = truth.values[i] == positive_class;
    if (p && t) {
      ++c.tp;
    } else if (p) {
      ++c.fp;
    } else if (t) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  out.metrics = metrics_from_counts(c);
  return out;
}

MulticlassMetrics compute_multiclass_metrics(const MaskTile& pred, const MaskTile& truth, int n_classes) {
  check_same_window(pred, truth);
  if (n_classes < 2) throw DataError("multiclass metrics need at least one foreground class");
  // One pass builds the full confusion matrix; per-class counts follow.
  std::vector<std::uint64_t> confusion(static_cast<std::size_t>(n_classes) * n_classes, 0);
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    const int p = pred.values[i];
    const int t = truth.values[i];
    if (p >= n_classes || t >= n_classes) throw DataError("mask value outside the class space");
    ++confusion[static_cast<std::size_t>(t) * n_classes + p];
  }
  const std::uint64_t total = pred.values.size();

  MulticlassMetrics out;
  for (int c = 1; c < n_classes; ++c) {
    ClassMetrics cm;
    cm.class_index = c;
    std::uint64_t row = 0;
    std::uint64_t col = 0;
    for (int k = 0; k < n_classes; ++k) {
      row += confusion[static_cast<std::size_t>(c) * n_classes + k];
      col += confusion[static_cast<std::size_t>(k) * n_classes + c];
    }
    cm.counts.tp = confusion[static_cast<std::size_t>(c) * n_classes + c];
    cm.counts.fn = row - cm.counts.tp;
    cm.counts.fp = col - cm.counts.tp;
    cm.counts.tn = total - cm.counts.tp - cm.counts.fn - cm.counts.fp;
    cm.metrics = metrics_from_counts(cm.counts);
    out.per_class.push_back(cm);
  }
  Metrics sum{0, 0, 0, 0, 0};
  for (const auto& cm : out.per_class) {
    sum.sensitivity += cm.metrics.sensitivity;
    sum.specificity += cm.metrics.specificity;
    sum.precision += cm.metrics.precision;
    sum.accuracy += cm.metrics.accuracy;
    sum.f1 += cm.metrics.f1;
  }
  const double n = static_cast<double>(out.per_class.size());
  out.mean = {sum.sensitivity / n, sum.specificity / n, sum.precision / n, sum.accuracy / n, sum.f1 / n};
  return out;
}

double correction_burden(std::span<const double> f1, double threshold) {
  if (f1.empty()) throw DataError("correction burden of an empty list");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw DataError("correction threshold must be in [0, 1]");
  const auto below = std::count_if(f1.begin(), f1.end(), [&](double v) { return v <= threshold; });
  return static_cast<double>(below) / static_cast<double>(f1.size());
}

// ---------------------------------------------------------------- economics

double loop_annotation_time(double tau, double regions) {
  if (!(tau > 0.0) || !(regions > 0.0)) throw DataError("tau and R must be positive");
  return -tau * std::expm1(-regions / tau);
}

double time_savings(double tau, double regions) {
  if (!(tau > 0.0) || !(regions > 0.0) || !std::isfinite(tau) || !std::isfinite(regions)) {
    throw DataError("time savings needs finite tau > 0 and R > 0");
  }
  const double x = regions / tau;
  // 1 - (1 - e^-x) / x; the series avoids cancellation near 0.
  const double frac = x < 1e-4 ? x / 2.0 - x * x / 6.0 + x * x * x / 24.0 : 1.0 + std::expm1(-x) / x;
  return frac * 100.0;
}

std::vector<HailRecord> parse_timing_csv(std::string_view text) {
  std::vector<HailRecord> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header_seen = false;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!header_seen) {
      header_seen = true;
      if (line != "wsi_id,iteration,region_index,seconds") {
        throw DataError("timing CSV header must be wsi_id,iteration,region_index,seconds");
      }
      continue;
    }
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    const std::string where = "timing CSV line " + std::to_string(line_no);
    if (fields.size() != 4) throw DataError(where + ": expected 4 fields");
    HailRecord r;
    r.wsi_id = std::string(fields[0]);
    if (r.wsi_id.empty()) throw DataError(where + ": empty wsi_id");
    auto parse_int = [&](std::string_view f, int& v) {
      const auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || p != f.data() + f.size()) throw DataError(where + ": bad integer '" + std::string(f) + "'");
    };
    parse_int(fields[1], r.iteration);
    parse_int(fields[2], r.region_index);
    const auto [p, ec] = std::from_chars(fields[3].data(), fields[3].data() + fields[3].size(), r.seconds);
    if (ec != std::errc() || p != fields[3].data() + fields[3].size() || !std::isfinite(r.seconds)) {
      throw DataError(where + ": bad seconds '" + std::string(fields[3]) + "'");
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<HailRecord> read_timing_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_timing_csv(text.str());
}

HailFit fit_hail_tau(std::span<const HailPoint> points, double regions) {
  if (points.size() < 2) throw DataError("fitting tau needs at least 2 points");
  if (!(regions > 0.0)) throw DataError("R must be positive");
  double r_min = std::numeric_limits<double>::infinity();
  for (const auto& p : points) {
    if (!(p.r > 0.0) || !std::isfinite(p.a)) throw DataError("fit points need r > 0 and finite A");
    r_min = std::min(r_min, p.r);
  }

  auto sse = [&](double tau) {
    double s = 0.0;
    for (const auto& p : points) {
      const double d = p.a - std::exp(-p.r / tau);
      s += d * d;
    }
    return s;
  };

  const double tau_max = 100.0 * regions;
  const double tau_min = r_min / 100.0;
  constexpr int kScan = 400;
  std::vector<double> grid(kScan);
  int best = 0;
  double best_sse = std::numeric_limits<double>::infinity();
  for (int k = 0; k < kScan; ++k) {
    grid[k] = tau_min * std::pow(tau_max / tau_min, static_cast<double>(k) / (kScan - 1));
    const double s = sse(grid[k]);
    if (s < best_sse) {
      best_sse = s;
      best = k;
    }
  }

  HailFit fit;
  fit.R = regions;
  fit.B = regions;
  fit.points.assign(points.begin(), points.end());
  if (best == kScan - 1) {
    fit.tau = tau_max;
    fit.capped = true;
  } else {
    const double lo = grid[std::max(best - 1, 0)];
    const double hi = grid[best + 1];
    // 2^-24 relative keeps well inside the 1e-6 target.
    const auto [tau, value] = boost::math::tools::brent_find_minima(sse, lo, hi, 24);
    fit.tau = tau;
    if (fit.tau >= tau_max * (1.0 - 1e-6)) fit.capped = true;
  }
  fit.sse = sse(fit.tau);
  fit.H = loop_annotation_time(fit.tau, regions);
  fit.P = time_savings(fit.tau, regions);
  return fit;
}

HailFit fit_hail_curve(std::span<const HailRecord> records) {
  double t0_sum = 0.0;
  std::size_t t0_n = 0;
  int r_max = 0;
  for (const auto& rec : records) {
    if (!(rec.seconds > 0.0)) throw DataError("annotation times must be positive (wsi " + rec.wsi_id + ")");
    if (rec.region_index < 1) throw DataError("region_index is 1-based (wsi " + rec.wsi_id + ")");
    if (rec.iteration == 0) {
      t0_sum += rec.seconds;
      ++t0_n;
    }
    r_max = std::max(r_max, rec.region_index);
  }
  if (t0_n == 0) throw DataError("no iteration-0 records: t0 undefined");
  const double t0 = t0_sum / static_cast<double>(t0_n);

  // Per-WSI averages in order of first appearance.
  std::vector<std::string> order;
  std::map<std::string, std::pair<double, double>> sums;  // (sum r, sum t)
  std::map<std::string, std::size_t> counts;
  for (const auto& rec : records) {
    if (!counts.contains(rec.wsi_id)) order.push_back(rec.wsi_id);
    auto& s = sums[rec.wsi_id];
    s.first += rec.region_index;
    s.second += rec.seconds;
    ++counts[rec.wsi_id];
  }
  std::vector<HailPoint> points;
  for (const auto& id : order) {
    const double n = static_cast<double>(counts[id]);
    points.push_back({sums[id].first / n, sums[id].second / n / t0});
  }
  std::stable_sort(points.begin(), points.end(), [](const HailPoint& a, const HailPoint& b) { return a.r < b.r; });
  HailFit fit = fit_hail_tau(points, static_cast<double>(r_max));
  fit.t0 = t0;
  return fit;
}

// ---------------------------------------------------------------- validation

ValidationReport validate_iterations(int n_iterations, const std::function<IterationModels(int)>& load,
                                     std::span<const HoldoutSlide> holdout, const ClassMap& class_map,
                                     const ValidationOptions& options) {
  if (n_iterations < 1) throw DataError("no trained iteration to validate");
  if (holdout.empty()) throw DataError("no holdout slides");

  ValidationReport report;
  report.f1_threshold = options.f1_threshold;
  const int n_classes = class_map.n_classes();

  // Truth masks do not change between iterations.
  std::vector<SlideHandle> handles(holdout.size());
  std::vector<MaskTile> truths(holdout.size());
  parallel_for(holdout.size(), options.slide_workers, [&](std::size_t s) {
    handles[s] = open_slide(holdout[s].slide);
    truths[s] = rasterize_window(holdout[s].truth, class_map, Window{0, 0, handles[s].width(), handles[s].height(), 1});
  });

  for (int it = 0; it < n_iterations; ++it) {
    const IterationModels models = load(it);
    if (!models.highres) throw DataError("missing high-resolution model for iteration " + std::to_string(it));
    IterationReport ir;
    ir.iteration = it;
    ir.mode = options.predict.mode == PredictMode::kDeepZoom && models.lowres ? PredictMode::kDeepZoom : PredictMode::kFull;
    const bool run_deepzoom = models.lowres && (ir.mode == PredictMode::kDeepZoom || options.compare_modes);
    const bool run_full = ir.mode == PredictMode::kFull || options.compare_modes;

    ir.slides.resize(holdout.size());
    parallel_for(holdout.size(), options.slide_workers, [&](std::size_t s) {
      SlideReport& sr = ir.slides[s];
      sr.name = holdout[s].name;
      auto run = [&](PredictMode mode) {
        PredictOptions po = options.predict;
        po.mode = mode;
        const SlidePrediction p = predict_slide(handles[s], models.lowres.get(), *models.highres, class_map, po);
        return ModeResult{compute_multiclass_metrics(p.mask, truths[s], n_classes), p.stats};
      };
      if (run_deepzoom) sr.deepzoom = run(PredictMode::kDeepZoom);
      if (run_full) sr.full = run(PredictMode::kFull);
    });

    std::vector<double> f1s;
    Metrics sum{0, 0, 0, 0, 0};
    for (const auto& sr : ir.slides) {
      const Metrics& m = sr.primary(ir.mode).metrics.mean;
      f1s.push_back(m.f1);
      sum.sensitivity += m.sensitivity;
      sum.specificity += m.specificity;
      sum.precision += m.precision;
      sum.accuracy += m.accuracy;
      sum.f1 += m.f1;
    }
    const double n = static_cast<double>(ir.slides.size());
    ir.mean = {sum.sensitivity / n, sum.specificity / n, sum.precision / n, sum.accuracy / n, sum.f1 / n};
    ir.correction_burden = correction_burden(f1s, options.f1_threshold);
    report.iterations.push_back(std::move(ir));
  }
  return report;
}

namespace {

const char* mode_name(PredictMode m) { return m == PredictMode::kDeepZoom ? "deepzoom" : "full"; }

nlohmann::json metrics_json(const Metrics& m) {
  return {{"sensitivity", m.sensitivity},
          {"specificity", m.specificity},
          {"precision", m.precision},
          {"accuracy", m.accuracy},
          {"f1", m.f1}};
}

nlohmann::json mode_json(const ModeResult& r, bool include_timings) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& cm : r.metrics.per_class) {
    classes.push_back({{"class", cm.class_index},
                       {"tp", cm.counts.tp},
                       {"fp", cm.counts.fp},
                       {"tn", cm.counts.tn},
                       {"fn", cm.counts.fn},
                       {"metrics", metrics_json(cm.metrics)}});
  }
  nlohmann::json j{{"mean", metrics_json(r.metrics.mean)},
                   {"classes", classes},
                   {"grid_tiles", r.stats.grid_tiles},
                   {"tiles_evaluated", r.stats.tiles_evaluated},
                   {"tiles_predicted", r.stats.tiles_predicted},
                   {"lowres_tiles_predicted", r.stats.lowres_tiles_predicted}};
  if (include_timings) j["seconds"] = r.stats.seconds;
  return j;
}

}  // namespace

std::string report_json(const ValidationReport& report, bool include_timings) {
  nlohmann::json iterations = nlohmann::json::array();
  for (const auto& ir : report.iterations) {
    nlohmann::json slides = nlohmann::json::array();
    for (const auto& sr : ir.slides) {
      nlohmann::json modes = nlohmann::json::object();
      if (sr.deepzoom) modes["deepzoom"] = mode_json(*sr.deepzoom, include_timings);
      if (sr.full) modes["full"] = mode_json(*sr.full, include_timings);
      slides.push_back({{"name", sr.name}, {"modes", modes}});
    }
    iterations.push_back({{"iteration", ir.iteration},
                          {"mode", mode_name(ir.mode)},
                          {"mean", metrics_json(ir.mean)},
                          {"correction_burden", ir.correction_burden},
                          {"slides", slides}});
  }
  const nlohmann::json j{{"f1_threshold", report.f1_threshold}, {"iterations", iterations}};
  return j.dump(2) + "\n";
}

std::string report_table(const ValidationReport& report) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "iteration  slide                 mode      sens    spec    prec    acc     f1\n";
  auto row = [&](int it, const std::string& name, const char* mode, const Metrics& m) {
    out << std::left << std::setw(11) << it << std::setw(22) << name << std::setw(10) << mode << std::right
        << m.sensitivity << "  " << m.specificity << "  " << m.precision << "  " << m.accuracy << "  " << m.f1 << "\n";
  };
  for (const auto& ir : report.iterations) {
    for (const auto& sr : ir.slides) {
      if (sr.deepzoom) row(ir.iteration, sr.name, "deepzoom", sr.deepzoom->metrics.mean);
      if (sr.full) row(ir.iteration, sr.name, "full", sr.full->metrics.mean);
    }
    row(ir.iteration, "(mean)", mode_name(ir.mode), ir.mean);
    out << "iteration " << ir.iteration << " correction burden (f1 <= " << report.f1_threshold
        << "): " << ir.correction_burden << "\n";
  }
  return out.str();
}

std::string timings_json(const ValidationReport& report) {
  nlohmann::json iterations = nlohmann::json::array();
  for (const auto& ir : report.iterations) {
    nlohmann::json slides = nlohmann::json::array();
    for (const auto& sr : ir.slides) {
      nlohmann::json s{{"name", sr.name}};
      if (sr.deepzoom) s["deepzoom_seconds"] = sr.deepzoom->stats.seconds;
      if (sr.full) s["full_seconds"] = sr.full->stats.seconds;
      if (sr.deepzoom && sr.full && sr.deepzoom->stats.seconds > 0) {
        s["speedup"] = sr.full->stats.seconds / sr.deepzoom->stats.seconds;
      }
      slides.push_back(s);
    }
    iterations.push_back({{"iteration", ir.iteration}, {"slides", slides}});
  }
  return nlohmann::json{{"iterations", iterations}}.dump(2) + "\n";
}

}  // namespace hail
