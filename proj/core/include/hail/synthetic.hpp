#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "hail/annotations.hpp"
#include "hail/image_io.hpp"
#include "hail/types.hpp"

namespace hail {

enum class ShapeKind { kEllipse, kPolygon };

struct SyntheticShape {
  ShapeKind kind = ShapeKind::kEllipse;
  int class_index = 1;
  Rgb fill{200, 40, 60};
  // Ellipse geometry (base pixels, rotation in radians).
  double cx = 0, cy = 0, rx = 0, ry = 0, angle = 0;
  // Polygon geometry.
  std::vector<Vertex> polygon;
};

/// Description of a synthetic slide. Shapes are annotated with their class;
/// distractors are painted but never annotated (they are background).
struct SyntheticSlideSpec {
  int width = 0;
  int height = 0;
  Rgb background = kWhite;
  std::vector<SyntheticShape> shapes;
  std::vector<SyntheticShape> distractors;
  /// Per-channel uniform noise amplitude on painted shapes, seeded by `seed`.
  int color_noise = 0;
  std::uint64_t seed = 0;
};

/// Boundary polygon of a shape. Ellipses become regular polygons with a
/// vertex roughly every 4 px of circumference.
std::vector<Vertex> shape_outline(const SyntheticShape& shape);

/// Ground truth: one layer per class (layer id = class index, ascending),
/// each shape one region. Rasterizing it reproduces the painted classes.
AnnotationDocument synthetic_truth(const SyntheticSlideSpec& spec);

/// Binding layer c -> class c for every class in the spec, colored by the
/// first shape of the class.
ClassMap synthetic_class_map(const SyntheticSlideSpec& spec);

/// Paints the slide. Throws DataError when a shape leaves the slide, has a
/// class outside 1..255 or a polygon with fewer than 3 vertices.
ImageTile render_synthetic_slide(const SyntheticSlideSpec& spec);

struct SyntheticSlide {
  std::filesystem::path slide_path;
  AnnotationDocument truth;
  ClassMap class_map;
};

/// Renders the slide as a TIFF at `slide_path` and, when `xml_path` is not
/// empty, writes the ground-truth XML there.
SyntheticSlide generate_synthetic_slide(const SyntheticSlideSpec& spec, const std::filesystem::path& slide_path,
                                        const std::filesystem::path& xml_path = {},
                                        const TiffWriteOptions& tiff = {});

/// Parameters for random sparse slides: clusters of non-overlapping
/// ellipses on a white background.
struct SparseSlideParams {
  int width = 4096;
  int height = 4096;
  int clusters = 2;
  int shapes_per_cluster = 4;
  double cluster_radius = 320.0;
  double min_diameter = 32.0;
  double max_diameter = 160.0;
  double max_aspect = 1.5;
  std::vector<Rgb> class_colors{Rgb{200, 40, 60}};  // entry c-1 is class c
  int distractors = 0;
  Rgb distractor_color{150, 60, 170};
  int color_noise = 0;
};

SyntheticSlideSpec random_sparse_slide(const SparseSlideParams& params, std::uint64_t seed);

}  // namespace hail
