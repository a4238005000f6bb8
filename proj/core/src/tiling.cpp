#include "hail/tiling.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hail/error.hpp"

namespace hail {
namespace {

std::vector<int> axis_starts(int dim, int tile, int stride) {
  if (dim <= tile) return {0};
  std::vector<int> starts;
  for (long start = 0; start + tile < dim; start += stride) starts.push_back(static_cast<int>(start));
  if (starts.back() != dim - tile) starts.push_back(dim - tile);
  return starts;
}

}  // namespace

long TileGrid::index_of(const Window& w) const {
  if (w.scale != scale || w.x % scale != 0 || w.y % scale != 0) return -1;
  const int col = w.x / scale;
  const int row = w.y / scale;
  auto ci = std::lower_bound(col_starts.begin(), col_starts.end(), col);
  auto ri = std::lower_bound(row_starts.begin(), row_starts.end(), row);
  if (ci == col_starts.end() || *ci != col || ri == row_starts.end() || *ri != row) return -1;
  const long index = (ri - row_starts.begin()) * static_cast<long>(col_starts.size()) + (ci - col_starts.begin());
  return windows[index] == w ? index : -1;
}

TileGrid plan_tiles(int width, int height, int tile_size, double overlap, int scale) {
  if (width <= 0 || height <= 0) throw DataError("cannot tile a zero-area slide");
  if (tile_size < 1) throw DataError("tile size must be >= 1");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw DataError("overlap fraction must be in [0, 1)");
  if (scale < 1) throw DataError("tiling scale must be >= 1");

  TileGrid grid;
  grid.slide_width = width;
  grid.slide_height = height;
  grid.tile_size = tile_size;
  grid.overlap = overlap;
  grid.scale = scale;
  grid.stride = std::max(1, static_cast<int>(std::lround(tile_size * (1.0 - overlap))));

  const int lw = grid.level_width();
  const int lh = grid.level_height();
  grid.col_starts = axis_starts(lw, tile_size, grid.stride);
  grid.row_starts = axis_starts(lh, tile_size, grid.stride);
  const int tw = std::min(tile_size, lw);
  const int th = std::min(tile_size, lh);
  grid.windows.reserve(grid.col_starts.size() * grid.row_starts.size());
  for (int row : grid.row_starts) {
    for (int col : grid.col_starts) grid.windows.push_back(Window{col * scale, row * scale, tw, th, scale});
  }
  return grid;
}

StitchAccumulator::StitchAccumulator(int level_width, int row_begin, int row_end, int n_classes)
    : width_(level_width), row_begin_(row_begin), row_end_(row_end), n_classes_(n_classes) {
  if (n_classes < 1 || n_classes > 256) throw DataError("class count must be in 1..256");
  votes_.assign(static_cast<std::size_t>(width_) * std::max(0, row_end - row_begin) * n_classes, 0);
}

void StitchAccumulator::add(int col, int row, const MaskTile& prediction) {
  const int r0 = std::max(row, row_begin_);
  const int r1 = std::min(row + prediction.height(), row_end_);
  const int c0 = std::max(col, 0);
  const int c1 = std::min(col + prediction.width(), width_);
  if (r0 >= r1 || c0 >= c1) return;
  std::lock_guard lock(mutex_);
  for (int r = r0; r < r1; ++r) {
    std::uint16_t* base = votes_.data() + (static_cast<std::size_t>(r - row_begin_) * width_) * n_classes_;
    for (int c = c0; c < c1; ++c) {
      const std::uint8_t v = prediction.at(c - col, r - row);
      if (v >= n_classes_) {
        throw DataError("prediction value " + std::to_string(v) + " outside class space of " +
                        std::to_string(n_classes_));
      }
      std::uint16_t& count = base[static_cast<std::size_t>(c) * n_classes_ + v];
      if (count == UINT16_MAX) throw DataError("too many overlapping votes at one pixel");
      ++count;
    }
  }
}

std::vector<std::uint8_t> StitchAccumulator::finalize() const {
  std::lock_guard lock(mutex_);
  const std::size_t pixels = static_cast<std::size_t>(width_) * std::max(0, row_end_ - row_begin_);
  std::vector<std::uint8_t> labels(pixels, 0);
  for (std::size_t p = 0; p < pixels; ++p) {
    const std::uint16_t* v = votes_.data() + p * n_classes_;
    int best = 0;
    for (int c = 1; c < n_classes_; ++c) {
      if (v[c] > v[best]) best = c;
    }
    labels[p] = static_cast<std::uint8_t>(best);
  }
  return labels;
}

unsigned StitchAccumulator::votes_at(int col, int row) const {
  std::lock_guard lock(mutex_);
  const std::uint16_t* v = votes_.data() + (static_cast<std::size_t>(row - row_begin_) * width_ + col) * n_classes_;
  unsigned total = 0;
  for (int c = 0; c < n_classes_; ++c) total += v[c];
  return total;
}

namespace {

void check_prediction(const TilePrediction& p, const TileGrid& grid) {
  if (grid.index_of(p.window) < 0) {
    throw DataError("window (" + std::to_string(p.window.x) + "," + std::to_string(p.window.y) + ") is not in the grid");
  }
  if (p.mask.width() != p.window.width || p.mask.height() != p.window.height ||
      p.mask.values.size() != p.window.area()) {
    throw DataError("prediction size does not match its window");
  }
}

}  // namespace

MaskTile stitch(const std::vector<TilePrediction>& predictions, const TileGrid& grid, int n_classes) {
  StitchAccumulator acc(grid.level_width(), 0, grid.level_height(), n_classes);
  for (const auto& p : predictions) {
    check_prediction(p, grid);
    acc.add(p.window.x / grid.scale, p.window.y / grid.scale, p.mask);
  }
  return MaskTile{grid.level_window(), acc.finalize()};
}

BandedStitcher::BandedStitcher(const TileGrid& grid, int n_classes)
    : grid_(grid), n_classes_(n_classes), band_height_(grid.tile_size), result_(MaskTile::zeros(grid.level_window())) {
  if (n_classes < 1 || n_classes > 256) throw DataError("class count must be in 1..256");
}

void BandedStitcher::flush_before(int row) {
  const int first_live_band = row / band_height_;
  for (auto it = bands_.begin(); it != bands_.end() && it->first < first_live_band;) {
    const StitchAccumulator& acc = *it->second;
    const auto labels = acc.finalize();
    std::copy(labels.begin(), labels.end(),
              result_.values.begin() + static_cast<std::ptrdiff_t>(acc.row_begin()) * result_.width());
    it = bands_.erase(it);
  }
}

void BandedStitcher::add(const TilePrediction& prediction) {
  check_prediction(prediction, grid_);
  const int col = prediction.window.x / grid_.scale;
  const int row = prediction.window.y / grid_.scale;
  if (row < last_row_) throw DataError("banded stitching needs predictions in row order");
  last_row_ = row;
  flush_before(row);

  const int lh = grid_.level_height();
  const int first = row / band_height_;
  const int last = (row + prediction.window.height - 1) / band_height_;
  for (int band = first; band <= last; ++band) {
    auto& slot = bands_[band];
    if (!slot) {
      const int begin = band * band_height_;
      slot = std::make_unique<StitchAccumulator>(grid_.level_width(), begin, std::min(begin + band_height_, lh),
                                                 n_classes_);
    }
    slot->add(col, row, prediction.mask);
  }
}

MaskTile BandedStitcher::finish() {
  flush_before(grid_.level_height() + band_height_);
  return std::move(result_);
}

}  // namespace hail
