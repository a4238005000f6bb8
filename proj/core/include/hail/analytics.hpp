#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hail/annotations.hpp"
#include "hail/pipeline.hpp"
#include "hail/types.hpp"

namespace hail {

// ---------------------------------------------------------------- metrics

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// All ratios use 0/0 = 1. f1 is 2tp / (2tp + fp + fn), which equals the
/// harmonic mean of precision and sensitivity whenever that is defined.
struct Metrics {
  double sensitivity = 1.0;
  double specificity = 1.0;
  double precision = 1.0;
  double accuracy = 1.0;
  double f1 = 1.0;
};

Metrics metrics_from_counts(const ConfusionCounts& counts);

struct ClassMetrics {
  int class_index = 0;
  ConfusionCounts counts;
  Metrics metrics;
};

/// One-vs-rest counts for `positive_class`. Throws DataError when the masks
/// differ in size or scale.
ClassMetrics compute_metrics(const MaskTile& pred, const MaskTile& truth, int positive_class);

struct MulticlassMetrics {
  std::vector<ClassMetrics> per_class;  // classes 1..n_classes-1
  Metrics mean;                         // unweighted mean over per_class
};

MulticlassMetrics compute_multiclass_metrics(const MaskTile& pred, const MaskTile& truth, int n_classes);

/// Fraction of items with F1 <= threshold. Throws DataError on an empty
/// list or a threshold outside [0, 1].
double correction_burden(std::span<const double> f1, double threshold = 0.88);

// ---------------------------------------------------------------- annotation economics

/// Normalized loop annotation time H = tau (1 - exp(-R / tau)).
double loop_annotation_time(double tau, double regions);

/// Percent saved relative to annotating R regions by hand:
/// P = (1 - (tau / R)(1 - exp(-R / tau))) * 100. Throws DataError unless
/// tau > 0 and R > 0.
double time_savings(double tau, double regions);

struct HailRecord {
  std::string wsi_id;
  int iteration = 0;
  int region_index = 0;  // cumulative, 1-based
  double seconds = 0.0;
};

/// CSV with header `wsi_id,iteration,region_index,seconds`.
std::vector<HailRecord> parse_timing_csv(std::string_view text);
std::vector<HailRecord> read_timing_csv(const std::filesystem::path& path);

struct HailPoint {
  double r = 0.0;
  double a = 0.0;
};

struct HailFit {
  double tau = 0.0;
  double R = 0.0;
  double H = 0.0;
  double B = 0.0;
  double P = 0.0;
  double t0 = 0.0;
  double sse = 0.0;
  /// tau hit the cap of 100 R: no measurable improvement.
  bool capped = false;
  std::vector<HailPoint> points;
};

/// Least-squares tau for A(r) = exp(-r / tau): a log-spaced scan brackets
/// the minimum, Brent's method refines it to 1e-6 relative. Throws
/// DataError for fewer than 2 points or R <= 0.
HailFit fit_hail_tau(std::span<const HailPoint> points, double regions);

/// t0 is the mean seconds over iteration 0; each WSI contributes the point
/// (mean region index, mean seconds / t0); R is the largest region index.
HailFit fit_hail_curve(std::span<const HailRecord> records);

// ---------------------------------------------------------------- validation

struct HoldoutSlide {
  std::string name;
  std::filesystem::path slide;
  AnnotationDocument truth;
};

struct IterationModels {
  std::shared_ptr<const SegmenterBackend> lowres;  // may be null
  std::shared_ptr<const SegmenterBackend> highres;
};

struct ValidationOptions {
  PredictOptions predict;
  /// Also run the other mode (when its models exist) for the timing and
  /// precision/sensitivity comparison.
  bool compare_modes = true;
  double f1_threshold = 0.88;
  int slide_workers = 1;
};

struct ModeResult {
  MulticlassMetrics metrics;
  PredictStats stats;
};

struct SlideReport {
  std::string name;
  std::optional<ModeResult> deepzoom;
  std::optional<ModeResult> full;
  const ModeResult& primary(PredictMode mode) const { return mode == PredictMode::kFull || !deepzoom ? *full : *deepzoom; }
};

struct IterationReport {
  int iteration = 0;
  PredictMode mode = PredictMode::kDeepZoom;
  std::vector<SlideReport> slides;
  Metrics mean;  // over slides, primary mode
  double correction_burden = 0.0;
};

struct ValidationReport {
  double f1_threshold = 0.88;
  std::vector<IterationReport> iterations;
};

/// Predicts every holdout slide with the models of each iteration
/// 0..n_iterations-1 and scores it against its truth. `load` throws for a
/// missing model. Slides run in parallel; the report order is fixed.
ValidationReport validate_iterations(int n_iterations, const std::function<IterationModels(int)>& load,
                                     std::span<const HoldoutSlide> holdout, const ClassMap& class_map,
                                     const ValidationOptions& options);

/// Machine-readable report. Without timings it is byte-identical across runs
/// and worker counts.
std::string report_json(const ValidationReport& report, bool include_timings = false);
/// Flat text table of the same content.
std::string report_table(const ValidationReport& report);
/// Per-slide wall-clock seconds for both modes.
std::string timings_json(const ValidationReport& report);

}  // namespace hail
