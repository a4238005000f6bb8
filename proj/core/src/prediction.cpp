#include <algorithm>
#include <chrono>

#include "hail/error.hpp"
#include "hail/parallel.hpp"
#include "hail/pipeline.hpp"

namespace hail {
namespace {

int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

}  // namespace

MaskTile dilate_nonzero(const MaskTile& mask, int radius) {
  const int w = mask.width();
  const int h = mask.height();
  MaskTile out = MaskTile::zeros(mask.window);
  for (std::size_t i = 0; i < mask.values.size(); ++i) out.values[i] = mask.values[i] != 0;
  if (radius <= 0 || w <= 0 || h <= 0) return out;

  // Row pass then column pass of a running max over 2r+1 pixels.
  std::vector<std::uint8_t> tmp(out.values.size(), 0);
  for (int y = 0; y < h; ++y) {
    std::vector<int> prefix(static_cast<std::size_t>(w) + 1, 0);
    for (int x = 0; x < w; ++x) prefix[x + 1] = prefix[x] + out.at(x, y);
    for (int x = 0; x < w; ++x) {
      const int a = std::max(0, x - radius);
      const int b = std::min(w, x + radius + 1);
      tmp[static_cast<std::size_t>(y) * w + x] = prefix[b] - prefix[a] > 0;
    }
  }
  for (int x = 0; x < w; ++x) {
    std::vector<int> prefix(static_cast<std::size_t>(h) + 1, 0);
    for (int y = 0; y < h; ++y) prefix[y + 1] = prefix[y] + tmp[static_cast<std::size_t>(y) * w + x];
    for (int y = 0; y < h; ++y) {
      const int a = std::max(0, y - radius);
      const int b = std::min(h, y + radius + 1);
      out.at(x, y) = prefix[b] - prefix[a] > 0;
    }
  }
  return out;
}

std::vector<Window> hotspot_windows(const MaskTile& dilated, const TileGrid& grid, int margin) {
  const int w = dilated.width();
  const int h = dilated.height();
  const int f = dilated.window.scale;
  std::vector<Window> out;
  if (w <= 0 || h <= 0) return out;

  std::vector<long> sat((static_cast<std::size_t>(w) + 1) * (static_cast<std::size_t>(h) + 1), 0);
  auto at = [&](int x, int y) -> long& { return sat[static_cast<std::size_t>(y) * (w + 1) + x]; };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) at(x + 1, y + 1) = at(x, y + 1) + at(x + 1, y) - at(x, y) + (dilated.at(x, y) != 0);
  }
  if (at(w, h) == 0) return out;

  // Low-res pixel i covers the base interval [o + f*i - margin, o + f*(i+1) + margin).
  // It meets [a, b) iff f*i > a - f - margin - o and f*i < b + margin - o.
  auto index_range = [&](int a, int b, int origin, int n) {
    const int lo = floor_div(a - f - margin - origin, f) + 1;
    const int hi = floor_div(b + margin - origin - 1, f);
    return std::pair{std::max(lo, 0), std::min(hi, n - 1)};
  };
  for (const auto& win : grid.windows) {
    const auto [i0, i1] = index_range(win.x, win.base_right(), dilated.window.x, w);
    const auto [j0, j1] = index_range(win.y, win.base_bottom(), dilated.window.y, h);
    if (i0 > i1 || j0 > j1) continue;
    if (at(i1 + 1, j1 + 1) - at(i0, j1 + 1) - at(i1 + 1, j0) + at(i0, j0) > 0) out.push_back(win);
  }
  return out;
}

HotspotMap build_hotspot_map(const SlideHandle& slide, const SegmenterBackend& lowres, const TileGrid& lowres_grid,
                             const TileGrid& highres_grid, const TissueParams& tissue, const HotspotParams& params,
                             int workers) {
  if (lowres.scale() != lowres_grid.scale) {
    throw BackendError("backend scale mismatch: low-res backend runs at scale " + std::to_string(lowres.scale()) +
                       ", grid is at scale " + std::to_string(lowres_grid.scale));
  }
  const std::size_t n = lowres_grid.windows.size();
  std::vector<ImageTile> tiles(n);
  std::vector<char> keep(n, 0);
  parallel_for(n, workers, [&](std::size_t i) {
    ImageTile tile = slide.read_region(lowres_grid.windows[i]);
    if (tissue_mask(tile, tissue).keep) {
      tiles[i] = std::move(tile);
      keep[i] = 1;
    }
  });

  std::vector<ImageTile> kept;
  for (std::size_t i = 0; i < n; ++i) {
    if (keep[i]) kept.push_back(std::move(tiles[i]));
  }
  const std::vector<MaskTile> masks = lowres.predict_batch(kept, workers);
  std::vector<TilePrediction> predictions;
  predictions.reserve(masks.size());
  for (std::size_t k = 0; k < masks.size(); ++k) predictions.push_back({kept[k].window, masks[k]});

  HotspotMap map;
  map.lowres = stitch(predictions, lowres_grid, lowres.n_classes());
  map.dilation = params.dilation;
  map.margin = params.margin;
  map.dilated = dilate_nonzero(map.lowres, params.dilation);
  map.windows = hotspot_windows(map.dilated, highres_grid, params.margin);
  map.lowres_tiles_predicted = kept.size();
  return map;
}

SlidePrediction predict_slide(const SlideHandle& slide, const SegmenterBackend* lowres, const SegmenterBackend& highres,
                              const ClassMap& class_map, const PredictOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  const bool deepzoom = options.mode == PredictMode::kDeepZoom;
  if (deepzoom && lowres == nullptr) throw DataError("deepzoom mode requires a low-resolution backend");
  if (highres.scale() != 1) throw BackendError("high-resolution backend must run at scale 1");
  if (highres.n_classes() != class_map.n_classes()) {
    throw DataError("backend has " + std::to_string(highres.n_classes()) + " classes, class map has " +
                    std::to_string(class_map.n_classes()));
  }

  const TileGrid grid = plan_tiles(slide.width(), slide.height(), options.tile_size, options.overlap, 1);
  SlidePrediction result;
  result.stats.grid_tiles = grid.windows.size();

  std::vector<Window> candidates;
  if (deepzoom) {
    const TileGrid lowres_grid = plan_tiles(slide.width(), slide.height(), options.tile_size, options.overlap,
                                            options.hotspot.lowres_scale);
    result.hotspots = build_hotspot_map(slide, *lowres, lowres_grid, grid, options.tissue, options.hotspot,
                                        options.workers);
    result.stats.lowres_tiles_predicted = result.hotspots->lowres_tiles_predicted;
    candidates = result.hotspots->windows;
  } else {
    candidates = grid.windows;
  }
  result.stats.tiles_evaluated = candidates.size();

  // One grid row at a time keeps the number of tiles in memory bounded;
  // candidates are in grid order, so rows arrive sorted for the stitcher.
  BandedStitcher stitcher(grid, highres.n_classes());
  std::size_t begin = 0;
  while (begin < candidates.size()) {
    std::size_t end = begin;
    while (end < candidates.size() && candidates[end].y == candidates[begin].y) ++end;
    const std::size_t n = end - begin;
    std::vector<ImageTile> tiles(n);
    std::vector<char> keep(n, 0);
    parallel_for(n, options.workers, [&](std::size_t i) {
      tiles[i] = slide.read_region(candidates[begin + i]);
      keep[i] = tissue_mask(tiles[i], options.tissue).keep;
    });
    std::vector<ImageTile> kept;
    for (std::size_t i = 0; i < n; ++i) {
      if (keep[i]) kept.push_back(std::move(tiles[i]));
    }
    std::vector<MaskTile> masks = highres.predict_batch(kept, options.workers);
    for (std::size_t k = 0; k < masks.size(); ++k) stitcher.add({kept[k].window, std::move(masks[k])});
    result.stats.tiles_predicted += kept.size();
    begin = end;
  }

  result.mask = stitcher.finish();
  result.doc = mask_to_annotations(result.mask, class_map, options.conversion);
  result.stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace hail
