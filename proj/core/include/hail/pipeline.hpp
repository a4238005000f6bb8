#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hail/annotations.hpp"
#include "hail/augment.hpp"
#include "hail/raster.hpp"
#include "hail/slide_io.hpp"
#include "hail/tiling.hpp"
#include "hail/types.hpp"

namespace hail {

// ---------------------------------------------------------------- tissue

struct TissueParams {
  int luminance_threshold = 224;
  double min_fraction = 0.01;
};

struct TissueResult {
  MaskTile map;  // 1 = tissue
  double fraction = 0.0;
  bool keep = false;
};

/// Luminance (299 R + 587 G + 114 B) / 1000 below the threshold marks
/// tissue; the map is then opened and closed with a 3x3 square. A tile is
/// kept when it has any tissue and the fraction reaches min_fraction.
TissueResult tissue_mask(const ImageTile& tile, const TissueParams& params = {});

// ---------------------------------------------------------------- training data

struct TrainingPair {
  ImageTile image;
  MaskTile mask;
};

/// Image/mask pairs, held in memory or streamed from `*.img.png` /
/// `*.msk.png` files.
class TrainingSet {
 public:
  static TrainingSet from_directory(const std::filesystem::path& dir);

  void add(TrainingPair pair) { memory_.push_back(std::move(pair)); }
  void add_files(std::filesystem::path image, std::filesystem::path mask);

  std::size_t size() const { return memory_.size() + files_.size(); }
  bool empty() const { return size() == 0; }

  /// Visits every pair: in-memory pairs first, then files in name order.
  void for_each(const std::function<void(const ImageTile&, const MaskTile&)>& fn) const;

 private:
  std::vector<TrainingPair> memory_;
  std::vector<std::pair<std::filesystem::path, std::filesystem::path>> files_;
};

struct TrainOptions {
  int epochs = 2;
  std::uint64_t seed = 0;
};

// ---------------------------------------------------------------- backends

/// A segmenter operating at one scale. predict must be safe to call
/// concurrently; training returns a new instance and leaves this one alone.
class SegmenterBackend {
 public:
  virtual ~SegmenterBackend() = default;

  virtual std::string kind() const = 0;
  virtual int n_classes() const = 0;
  virtual int scale() const = 0;

  /// Mask of the same window as `tile`. Throws BackendError on a scale
  /// mismatch or a failed prediction.
  virtual MaskTile predict(const ImageTile& tile) const = 0;

  /// Default runs predict per tile on `workers` threads.
  virtual std::vector<MaskTile> predict_batch(std::span<const ImageTile> tiles, int workers) const;

  virtual std::unique_ptr<SegmenterBackend> trained(const TrainingSet& data, const TrainOptions& options) const = 0;

  /// Opaque state for persistence.
  virtual std::string serialize() const = 0;

 protected:
  void check_scale(const ImageTile& tile) const;
};

/// Nearest centroid of the colour averaged over a (2r+1)^2 window (clipped
/// at tile borders). Ties go to the class with the larger prior, then to
/// the lower index. Classes absent from training are never predicted.
class CentroidBackend final : public SegmenterBackend {
 public:
  CentroidBackend(int n_classes, int scale, int window_radius = 1);

  std::string kind() const override { return "centroid"; }
  int n_classes() const override { return n_classes_; }
  int scale() const override { return scale_; }
  int window_radius() const { return radius_; }

  MaskTile predict(const ImageTile& tile) const override;
  /// Per-class mean of raw pixel colours and pixel priors over all pairs.
  /// Throws DataError on an empty set, on mask values outside the class
  /// space, and on sets without foreground ("class-space mismatch").
  std::unique_ptr<SegmenterBackend> trained(const TrainingSet& data, const TrainOptions& options) const override;
  std::string serialize() const override;
  static std::unique_ptr<CentroidBackend> deserialize(std::string_view blob);

  bool is_trained() const;
  bool seen(int c) const { return seen_.at(static_cast<std::size_t>(c)); }
  const std::array<double, 3>& centroid(int c) const { return centroids_.at(static_cast<std::size_t>(c)); }
  double prior(int c) const { return priors_.at(static_cast<std::size_t>(c)); }

 private:
  int n_classes_;
  int scale_;
  int radius_;
  std::vector<std::array<double, 3>> centroids_;
  std::vector<double> priors_;
  std::vector<bool> seen_;
};

/// Delegates prediction to a command: it is run as `<command> <manifest>`
/// where the manifest JSON lists {scale, n_classes, tiles: [{image, mask}]};
/// the command must write every mask PNG. Nonzero exit or a missing or
/// malformed mask raises BackendError. Training is not supported.
class ExternalProcessBackend final : public SegmenterBackend {
 public:
  ExternalProcessBackend(std::string command, int n_classes, int scale, std::filesystem::path work_dir = {});

  std::string kind() const override { return "external"; }
  int n_classes() const override { return n_classes_; }
  int scale() const override { return scale_; }
  const std::string& command() const { return command_; }

  MaskTile predict(const ImageTile& tile) const override;
  std::vector<MaskTile> predict_batch(std::span<const ImageTile> tiles, int workers) const override;
  std::unique_ptr<SegmenterBackend> trained(const TrainingSet& data, const TrainOptions& options) const override;
  std::string serialize() const override;
  static std::unique_ptr<ExternalProcessBackend> deserialize(std::string_view blob);

 private:
  std::string command_;
  int n_classes_;
  int scale_;
  std::filesystem::path work_dir_;
};

/// Checks the set is non-empty, then trains.
std::unique_ptr<SegmenterBackend> train_backend(const SegmenterBackend& backend, const TrainingSet& data,
                                                const TrainOptions& options);

/// Writes `<stem>.bin` (opaque state) and `<stem>.json` (kind, n_classes,
/// scale, version).
void save_backend(const SegmenterBackend& backend, const std::filesystem::path& stem);
std::unique_ptr<SegmenterBackend> load_backend(const std::filesystem::path& stem);

// ---------------------------------------------------------------- prediction

struct HotspotParams {
  int lowres_scale = 16;
  int dilation = 1;  // low-res pixels, Chebyshev
  int margin = 16;   // base pixels around each low-res block
};

struct HotspotMap {
  MaskTile lowres;   // stitched low-res prediction
  MaskTile dilated;  // non-background after dilation (0/1)
  int dilation = 0;
  int margin = 0;
  /// Full-resolution grid windows whose base extent meets the block
  /// [16i - margin, 16i + 16 + margin) x [16j - margin, ...) of any dilated
  /// pixel (i, j), in grid order.
  std::vector<Window> windows;
  std::size_t lowres_tiles_predicted = 0;
};

/// Low-resolution pass: tissue-filtered tiles of `lowres_grid` are predicted
/// and stitched, dilated, and mapped onto `highres_grid`. Throws
/// BackendError when the backend scale differs from the low-res grid.
HotspotMap build_hotspot_map(const SlideHandle& slide, const SegmenterBackend& lowres, const TileGrid& lowres_grid,
                             const TileGrid& highres_grid, const TissueParams& tissue, const HotspotParams& params,
                             int workers = 1);

/// Hotspot windows derived from a low-res class map (exposed for testing).
std::vector<Window> hotspot_windows(const MaskTile& dilated, const TileGrid& highres_grid, int margin);

/// Chebyshev dilation of the non-zero pixels; output is 0/1.
MaskTile dilate_nonzero(const MaskTile& mask, int radius);

enum class PredictMode { kDeepZoom, kFull };

struct PredictOptions {
  PredictMode mode = PredictMode::kDeepZoom;
  int tile_size = 500;
  double overlap = 0.5;
  TissueParams tissue;
  HotspotParams hotspot;
  MaskConversionOptions conversion;
  int workers = 1;
};

struct PredictStats {
  std::size_t grid_tiles = 0;       // windows in the full-resolution grid
  std::size_t tiles_evaluated = 0;  // full-resolution windows read and tested
  std::size_t tiles_predicted = 0;  // of those, passed the tissue filter
  std::size_t lowres_tiles_predicted = 0;
  double seconds = 0.0;
};

struct SlidePrediction {
  MaskTile mask;  // base resolution
  AnnotationDocument doc;
  PredictStats stats;
  std::optional<HotspotMap> hotspots;
};

/// Segments a slide. Deepzoom evaluates only hotspot windows; full mode
/// evaluates every window. Throws DataError when deepzoom lacks a low-res
/// backend or backend class counts disagree with the class map.
SlidePrediction predict_slide(const SlideHandle& slide, const SegmenterBackend* lowres,
                              const SegmenterBackend& highres, const ClassMap& class_map,
                              const PredictOptions& options);

// ---------------------------------------------------------------- training sets

struct AnnotatedSlide {
  std::string name;
  std::filesystem::path slide;
  AnnotationDocument doc;
};

struct TrainingBuildOptions {
  int tile_size = 500;
  double overlap = 0.5;
  int scale = 1;
  int augment_base = 10;
  int augment_cap = 0;  // 0 = 4 * base
  std::uint64_t seed = 0;
  /// Drops blocks with no annotation and no tissue.
  bool skip_blank = true;
  TissueParams tissue;
  std::vector<AugmentOp> ops = default_augment_ops();
  int png_compression = 1;
  int workers = 1;
};

struct TrainingBuildReport {
  std::size_t blocks = 0;
  std::size_t skipped = 0;
  std::size_t pairs = 0;
  ClassCounts counts;
  ClassCounts augmented;
};

/// Chops every slide on the tiling grid, rasterizes its annotations,
/// balances classes by augmentation and writes the pairs into `out_dir`.
TrainingBuildReport build_training_set(std::span<const AnnotatedSlide> slides, const ClassMap& class_map,
                                       const TrainingBuildOptions& options, const std::filesystem::path& out_dir);

}  // namespace hail
