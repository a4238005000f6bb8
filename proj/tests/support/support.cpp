#include "support.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <deque>
#include <stdexcept>

#include "hail/error.hpp"
#include "hail/raster.hpp"

namespace hail::testing {

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter.fetch_add(1)));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

OracleBackend::OracleBackend(AnnotationDocument truth, ClassMap class_map, int scale)
    : truth_(std::move(truth)), map_(std::move(class_map)), scale_(scale) {}

MaskTile OracleBackend::predict(const ImageTile& tile) const {
  check_scale(tile);
  return rasterize_window(truth_, map_, tile.window, RasterizeOptions{.strict = false});
}

std::unique_ptr<SegmenterBackend> OracleBackend::trained(const TrainingSet&, const TrainOptions&) const {
  throw BackendError("oracle backend cannot be trained");
}

bool point_in_polygon(const std::vector<Vertex>& poly, double x, double y) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vertex& a = poly[j];
    const Vertex& b = poly[i];
    // On the segment?
    const double cross = (b.x - a.x) * (y - a.y) - (b.y - a.y) * (x - a.x);
    if (cross == 0.0 && x >= std::min(a.x, b.x) && x <= std::max(a.x, b.x) && y >= std::min(a.y, b.y) &&
        y <= std::max(a.y, b.y)) {
      return true;
    }
    if ((a.y > y) != (b.y > y)) {
      const double xi = a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (x < xi) inside = !inside;
    }
  }
  return inside;
}

MaskTile random_blob_mask(std::mt19937_64& rng, const Window& window, int n_classes) {
  MaskTile mask = MaskTile::zeros(window);
  const int w = window.width;
  const int h = window.height;
  std::uniform_int_distribution<int> n_shapes(1, 12);
  std::uniform_int_distribution<int> cls(1, std::max(1, n_classes - 1));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int shapes = n_shapes(rng);
  for (int s = 0; s < shapes; ++s) {
    // Roughly one shape in four is background, which punches holes.
    const int value = u(rng) < 0.25 ? 0 : cls(rng);
    const double cx = u(rng) * w;
    const double cy = u(rng) * h;
    const double rx = 1.0 + u(rng) * std::max(2.0, w / 3.0);
    const double ry = 1.0 + u(rng) * std::max(2.0, h / 3.0);
    const bool ellipse = u(rng) < 0.6;
    const int x0 = std::max(0, static_cast<int>(cx - rx));
    const int x1 = std::min(w - 1, static_cast<int>(cx + rx));
    const int y0 = std::max(0, static_cast<int>(cy - ry));
    const int y1 = std::min(h - 1, static_cast<int>(cy + ry));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dx = (x - cx) / rx;
        const double dy = (y - cy) / ry;
        if (!ellipse || dx * dx + dy * dy <= 1.0) mask.at(x, y) = static_cast<std::uint8_t>(value);
      }
    }
  }
  // Salt: isolated pixels and diagonal contacts stress the tracer.
  std::uniform_int_distribution<int> px(0, w - 1);
  std::uniform_int_distribution<int> py(0, h - 1);
  const int salt = static_cast<int>(u(rng) * 0.002 * w * h) + 1;
  for (int k = 0; k < salt; ++k) mask.at(px(rng), py(rng)) = static_cast<std::uint8_t>(u(rng) < 0.5 ? 0 : cls(rng));
  return mask;
}

AnnotationDocument random_document(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto coordinate = [&]() -> double {
    switch (pick(0, 4)) {
      case 0: return pick(0, 100000);
      case 1: return pick(-2000, 200000) / 2.0;
      case 2: return u(rng) * 1e5;
      case 3: return (u(rng) - 0.5) * std::pow(10.0, pick(-12, 12));
      default: return std::nextafter(static_cast<double>(pick(0, 1000)), 1e9);
    }
  };
  static const char* names[] = {"tissue", "a & b", "<tag>", "quote \"x\" 'y'", "\xC3\xA9pith\xC3\xA9lium", "", "  spaced  "};

  AnnotationDocument doc;
  if (u(rng) < 0.5) doc.microns_per_pixel = u(rng);
  const int n_layers = pick(0, 5);
  std::vector<int> ids;
  for (int l = 0; l < n_layers; ++l) {
    int id;
    do {
      id = pick(1, 40);
    } while (std::find(ids.begin(), ids.end(), id) != ids.end());
    ids.push_back(id);
    AnnotationLayer layer;
    layer.id = id;
    if (u(rng) < 0.7) layer.name = names[pick(0, 6)];
    layer.line_color = static_cast<std::uint32_t>(pick(0, 0xFFFFFF));
    const int n_regions = pick(0, 6);
    for (int r = 0; r < n_regions; ++r) {
      Region region;
      region.id = r + 1 + (u(rng) < 0.2 ? 100 : 0);
      region.negative = u(rng) < 0.3;
      const int n_vertices = pick(3, 40);
      for (int v = 0; v < n_vertices; ++v) region.vertices.push_back({coordinate(), coordinate()});
      layer.regions.push_back(std::move(region));
    }
    doc.layers.push_back(std::move(layer));
  }
  return doc;
}

ComponentCounts count_components(const MaskTile& mask, int c) {
  const int w = mask.width();
  const int h = mask.height();
  std::vector<char> seen(mask.values.size(), 0);
  ComponentCounts out;
  auto idx = [w](int x, int y) { return static_cast<std::size_t>(y) * w + x; };

  auto flood = [&](int sx, int sy, bool fg, bool& touches_border) {
    std::deque<std::pair<int, int>> queue{{sx, sy}};
    seen[idx(sx, sy)] = 1;
    touches_border = false;
    while (!queue.empty()) {
      const auto [x, y] = queue.front();
      queue.pop_front();
      if (x == 0 || y == 0 || x == w - 1 || y == h - 1) touches_border = true;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          if (!fg && dx != 0 && dy != 0) continue;  // background is 4-connected
          const int nx = x + dx;
          const int ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h || seen[idx(nx, ny)]) continue;
          if ((mask.at(nx, ny) == c) != fg) continue;
          seen[idx(nx, ny)] = 1;
          queue.emplace_back(nx, ny);
        }
      }
    }
  };

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (seen[idx(x, y)]) continue;
      const bool fg = mask.at(x, y) == c;
      bool border = false;
      flood(x, y, fg, border);
      if (fg) {
        ++out.components;
      } else if (!border) {
        ++out.holes;
      }
    }
  }
  return out;
}

ClassMap identity_class_map(int n_foreground) {
  static const Rgb palette[] = {{255, 0, 0}, {0, 160, 0}, {0, 0, 255}, {200, 160, 0}, {160, 0, 160}, {0, 160, 160}};
  std::vector<ClassBinding> bindings;
  for (int c = 1; c <= n_foreground; ++c) {
    bindings.push_back({c, c, palette[(c - 1) % 6], "class " + std::to_string(c)});
  }
  return ClassMap(std::move(bindings));
}

SyntheticSlideSpec sparse_slide_spec(std::uint64_t seed, int size) {
  // Lengths shrink on small slides so both clusters still fit.
  SparseSlideParams p;
  p.width = size;
  p.height = size;
  p.clusters = 2;
  p.shapes_per_cluster = 10;
  p.cluster_radius = std::min(280.0, 0.12 * size);
  p.max_diameter = std::min(240.0, 0.2 * size);
  p.min_diameter = std::min(100.0, 0.5 * p.max_diameter);
  p.max_aspect = 1.3;
  p.class_colors = {Rgb{200, 40, 60}};
  return random_sparse_slide(p, seed);
}

double painted_fraction(const SyntheticSlideSpec& spec) {
  const ImageTile image = render_synthetic_slide(spec);
  std::size_t painted = 0;
  for (std::size_t i = 0; i < image.window.area(); ++i) {
    if (image.pixels[3 * i] != spec.background.r || image.pixels[3 * i + 1] != spec.background.g ||
        image.pixels[3 * i + 2] != spec.background.b) {
      ++painted;
    }
  }
  return static_cast<double>(painted) / static_cast<double>(image.window.area());
}

}  // namespace hail::testing
