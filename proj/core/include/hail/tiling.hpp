#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <utility>
#include <vector>

#include "hail/types.hpp"

namespace hail {

/// Deterministic plan of overlapping windows over a slide at one scale.
struct TileGrid {
  int slide_width = 0;   // base level
  int slide_height = 0;  // base level
  int tile_size = 500;
  double overlap = 0.5;
  int scale = 1;
  int stride = 250;
  std::vector<int> col_starts;  // in scaled pixels
  std::vector<int> row_starts;  // in scaled pixels
  std::vector<Window> windows;  // row-major

  int level_width() const { return (slide_width + scale - 1) / scale; }
  int level_height() const { return (slide_height + scale - 1) / scale; }
  /// Window covering the whole slide at the grid scale.
  Window level_window() const { return {0, 0, level_width(), level_height(), scale}; }
  /// Index of `w` in `windows`, or -1.
  long index_of(const Window& w) const;
};

/// Stride is round(tile_size * (1 - overlap)), at least 1. Starts are
/// 0, stride, 2*stride, ... with the last start clamped to dim - tile_size;
/// a dimension no larger than tile_size yields one window of that size.
/// Throws DataError for zero-area dims, tile_size < 1, overlap outside
/// [0, 1) or scale < 1.
TileGrid plan_tiles(int width, int height, int tile_size, double overlap, int scale);

/// Per-pixel class vote counts over a horizontal band of the level raster.
/// Adding is serialised internally, so several workers may vote at once;
/// counts commute, so the result does not depend on arrival order.
class StitchAccumulator {
 public:
  StitchAccumulator(int level_width, int row_begin, int row_end, int n_classes);

  /// Adds one vote per pixel of `prediction` that falls inside the band.
  /// `col`, `row` are the tile origin in level pixels.
  void add(int col, int row, const MaskTile& prediction);

  /// Per-pixel argmax, lowest class on ties; pixels with no votes are 0.
  std::vector<std::uint8_t> finalize() const;

  int row_begin() const { return row_begin_; }
  int row_end() const { return row_end_; }
  /// Total votes cast at a pixel, for testing coverage.
  unsigned votes_at(int col, int row) const;

 private:
  int width_;
  int row_begin_;
  int row_end_;
  int n_classes_;
  std::vector<std::uint16_t> votes_;  // (row, col, class)
  mutable std::mutex mutex_;
};

/// A tile prediction addressed by its grid window.
struct TilePrediction {
  Window window;
  MaskTile mask;
};

/// Stitches predictions into the level-resolution mask of the grid. Each
/// prediction's window must be one of the grid windows and its mask must
/// match the window size; DataError otherwise. Windows that were never
/// predicted cast no votes.
MaskTile stitch(const std::vector<TilePrediction>& predictions, const TileGrid& grid, int n_classes);

/// Streaming form of stitch: accumulates bands of `grid.tile_size` rows so
/// vote memory stays O(level width x tile size x classes). Predictions must
/// arrive in non-decreasing window row order. Finished bands are written
/// into the result returned by finish(), which equals stitch() on the same
/// predictions.
class BandedStitcher {
 public:
  BandedStitcher(const TileGrid& grid, int n_classes);

  void add(const TilePrediction& prediction);
  MaskTile finish();

 private:
  void flush_before(int row);

  const TileGrid& grid_;
  int n_classes_;
  int band_height_;
  int last_row_ = 0;
  std::map<int, std::unique_ptr<StitchAccumulator>> bands_;
  MaskTile result_;
};

}  // namespace hail
