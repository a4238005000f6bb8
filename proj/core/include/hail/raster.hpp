#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "hail/annotations.hpp"
#include "hail/types.hpp"

namespace hail {

/// Calls `emit(row, col_begin, col_end)` (end exclusive) for every run of
/// window pixels whose block centre lies inside or on the boundary of the
/// closed polygon (even-odd interior). Runs within a row are disjoint and
/// ascending. Polygons with fewer than three vertices cover nothing.
void fill_polygon_spans(std::span<const Vertex> polygon, const Window& window,
                        const std::function<void(int row, int col_begin, int col_end)>& emit);

struct RasterizeOptions {
  /// Layers without a class binding throw DataError when strict, and are
  /// skipped otherwise.
  bool strict = true;
};

/// Rasterizes annotations over a window. Within a layer a pixel is covered
/// when the number of positive regions containing its centre exceeds the
/// number of negative regions containing it; later layers overwrite
/// earlier ones. Uncovered pixels are 0.
MaskTile rasterize_window(const AnnotationDocument& doc, const ClassMap& class_map, const Window& window,
                          const RasterizeOptions& options = {});

/// Ids of layers in `doc` with no binding in `class_map`.
std::vector<int> unbound_layers(const AnnotationDocument& doc, const ClassMap& class_map);

struct Contour {
  int class_index = 0;
  bool hole = false;
  /// Polygon on pixel edges, in mask pixel coordinates (pixel centres at
  /// integers, so vertices sit on half-integers).
  std::vector<Vertex> vertices;
  /// Index of the enclosing outer contour for holes.
  std::optional<std::size_t> parent;
};

struct ContourSet {
  std::vector<Contour> contours;
};

/// Traces outer borders of the 8-connected components of each class and the
/// borders of their 4-connected holes. Vertices are emitted only where the
/// border turns. Classes are visited in ascending order and contours in
/// raster order of their top-left edge, so parents precede their holes.
ContourSet trace_contours(const MaskTile& mask);

struct MaskConversionOptions {
  /// Douglas-Peucker tolerance in mask pixels; 0 disables simplification.
  /// Any positive value gives up the exact mask -> XML -> mask roundtrip.
  double simplify_tolerance = 0.0;
};

/// Converts a class mask into annotations in base-level coordinates: one
/// layer per bound class present, each outer border as a region followed by
/// its holes as negative regions. Throws DataError for unbound mask values.
AnnotationDocument mask_to_annotations(const MaskTile& mask, const ClassMap& class_map,
                                       const MaskConversionOptions& options = {});

}  // namespace hail
