#include "hail/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <string>

#include "hail/error.hpp"
#include "hail/raster.hpp"

namespace hail {

std::vector<Vertex> shape_outline(const SyntheticShape& shape) {
  if (shape.kind == ShapeKind::kPolygon) return shape.polygon;
  const double r = std::max(shape.rx, shape.ry);
  const int n = std::clamp(static_cast<int>(std::ceil(2.0 * std::numbers::pi * r / 4.0)), 16, 360);
  const double ca = std::cos(shape.angle);
  const double sa = std::sin(shape.angle);
  std::vector<Vertex> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const double t = 2.0 * std::numbers::pi * k / n;
    const double ex = shape.rx * std::cos(t);
    const double ey = shape.ry * std::sin(t);
    out.push_back({shape.cx + ex * ca - ey * sa, shape.cy + ex * sa + ey * ca});
  }
  return out;
}

namespace {

void validate_shape(const SyntheticShape& shape, const std::vector<Vertex>& outline, const SyntheticSlideSpec& spec,
                    bool annotated) {
  if (annotated && (shape.class_index < 1 || shape.class_index > 255)) {
    throw DataError("synthetic shape class " + std::to_string(shape.class_index) + " outside 1..255");
  }
  if (outline.size() < 3) throw DataError("synthetic polygon needs at least 3 vertices");
  for (const auto& v : outline) {
    if (v.x < 0 || v.y < 0 || v.x > spec.width - 1 || v.y > spec.height - 1) {
      throw DataError("synthetic shape out of bounds");
    }
  }
}

// Classes in ascending order with their shapes in spec order.
std::map<int, std::vector<const SyntheticShape*>> shapes_by_class(const SyntheticSlideSpec& spec) {
  std::map<int, std::vector<const SyntheticShape*>> out;
  for (const auto& s : spec.shapes) out[s.class_index].push_back(&s);
  return out;
}

std::uint64_t pixel_hash(std::uint64_t seed, std::uint64_t x, std::uint64_t y) {
  std::uint64_t z = seed ^ (x * 0x9E3779B97F4A7C15ull) ^ (y * 0xC2B2AE3D27D4EB4Full);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

AnnotationDocument synthetic_truth(const SyntheticSlideSpec& spec) {
  AnnotationDocument doc;
  for (const auto& [cls, shapes] : shapes_by_class(spec)) {
    AnnotationLayer layer;
    layer.id = cls;
    layer.name = "class " + std::to_string(cls);
    layer.line_color = encode_line_color(shapes.front()->fill);
    int id = 1;
    for (const auto* shape : shapes) layer.regions.push_back(Region{id++, false, shape_outline(*shape)});
    doc.layers.push_back(std::move(layer));
  }
  return doc;
}

ClassMap synthetic_class_map(const SyntheticSlideSpec& spec) {
  std::vector<ClassBinding> bindings;
  for (const auto& [cls, shapes] : shapes_by_class(spec)) {
    bindings.push_back({cls, cls, shapes.front()->fill, "class " + std::to_string(cls)});
  }
  return ClassMap(std::move(bindings));
}

ImageTile render_synthetic_slide(const SyntheticSlideSpec& spec) {
  if (spec.width <= 0 || spec.height <= 0) throw DataError("synthetic slide needs positive dimensions");
  const Window whole{0, 0, spec.width, spec.height, 1};
  ImageTile image = ImageTile::filled(whole, spec.background);
  const int noise = std::clamp(spec.color_noise, 0, 255);

  auto paint = [&](const SyntheticShape& shape, bool annotated) {
    const auto outline = shape_outline(shape);
    validate_shape(shape, outline, spec, annotated);
    fill_polygon_spans(outline, whole, [&](int row, int begin, int end) {
      for (int col = begin; col < end; ++col) {
        Rgb c = shape.fill;
        if (noise > 0) {
          const std::uint64_t h = pixel_hash(spec.seed, static_cast<std::uint64_t>(col), static_cast<std::uint64_t>(row));
          auto jitter = [&](std::uint8_t v, int shift) {
            const int offset = static_cast<int>((h >> shift) % static_cast<std::uint64_t>(2 * noise + 1)) - noise;
            return static_cast<std::uint8_t>(std::clamp(v + offset, 0, 255));
          };
          c = Rgb{jitter(c.r, 0), jitter(c.g, 16), jitter(c.b, 32)};
        }
        image.set(col, row, c);
      }
    });
  };

  for (const auto& d : spec.distractors) paint(d, false);
  for (const auto& [cls, shapes] : shapes_by_class(spec)) {
    for (const auto* shape : shapes) paint(*shape, true);
  }
  return image;
}

SyntheticSlide generate_synthetic_slide(const SyntheticSlideSpec& spec, const std::filesystem::path& slide_path,
                                        const std::filesystem::path& xml_path, const TiffWriteOptions& tiff) {
  const ImageTile image = render_synthetic_slide(spec);
  write_tiff_rgb(slide_path, image, tiff);
  SyntheticSlide out{slide_path, synthetic_truth(spec), synthetic_class_map(spec)};
  if (!xml_path.empty()) write_annotations(xml_path, out.truth);
  return out;
}

SyntheticSlideSpec random_sparse_slide(const SparseSlideParams& p, std::uint64_t seed) {
  if (p.class_colors.empty()) throw DataError("sparse slide needs at least one class color");
  SyntheticSlideSpec spec;
  spec.width = p.width;
  spec.height = p.height;
  spec.seed = seed;
  spec.color_noise = p.color_noise;

  std::mt19937_64 rng(seed);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53); };

  struct Disk {
    double x, y, r;
  };
  std::vector<Disk> placed;
  const double margin = 8.0;
  auto try_place = [&](double cx, double cy, double radius) {
    if (cx - radius < margin || cy - radius < margin || cx + radius > p.width - 1 - margin ||
        cy + radius > p.height - 1 - margin) {
      return false;
    }
    for (const auto& d : placed) {
      if (std::hypot(d.x - cx, d.y - cy) < d.r + radius + margin) return false;
    }
    placed.push_back({cx, cy, radius});
    return true;
  };

  auto make_ellipse = [&](double cx, double cy, double diameter) {
    SyntheticShape s;
    s.kind = ShapeKind::kEllipse;
    const double aspect = uniform(1.0, p.max_aspect);
    s.rx = diameter / 2.0 * aspect;
    s.ry = diameter / 2.0;
    s.angle = uniform(0.0, std::numbers::pi);
    s.cx = cx;
    s.cy = cy;
    return s;
  };

  const double cluster_span = p.cluster_radius + p.max_diameter * p.max_aspect;
  for (int c = 0; c < p.clusters; ++c) {
    const double ccx = uniform(cluster_span, std::max(cluster_span, p.width - cluster_span));
    const double ccy = uniform(cluster_span, std::max(cluster_span, p.height - cluster_span));
    for (int k = 0; k < p.shapes_per_cluster; ++k) {
      for (int attempt = 0; attempt < 200; ++attempt) {
        const double diameter = uniform(p.min_diameter, p.max_diameter);
        const double angle = uniform(0.0, 2.0 * std::numbers::pi);
        const double dist = uniform(0.0, p.cluster_radius);
        const double cx = ccx + dist * std::cos(angle);
        const double cy = ccy + dist * std::sin(angle);
        SyntheticShape s = make_ellipse(cx, cy, diameter);
        if (!try_place(cx, cy, std::max(s.rx, s.ry))) continue;
        s.class_index = 1 + static_cast<int>(rng() % p.class_colors.size());
        s.fill = p.class_colors[static_cast<std::size_t>(s.class_index - 1)];
        spec.shapes.push_back(std::move(s));
        break;
      }
    }
  }
  for (int k = 0; k < p.distractors; ++k) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      const double diameter = uniform(p.min_diameter, p.max_diameter);
      const double cx = uniform(0.0, p.width);
      const double cy = uniform(0.0, p.height);
      SyntheticShape s = make_ellipse(cx, cy, diameter);
      if (!try_place(cx, cy, std::max(s.rx, s.ry))) continue;
      s.class_index = 0;
      s.fill = p.distractor_color;
      spec.distractors.push_back(std::move(s));
      break;
    }
  }
  return spec;
}

}  // namespace hail
