#include "hail/raster.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <string>

#include "hail/error.hpp"

namespace hail {
namespace {

struct Edge {
  double x0, y0, x1, y1;
  double ymin, ymax;
};

// Integer pixel range [lo, hi) whose centres cx0 + s*i fall in [a, b].
std::pair<int, int> centre_range(double a, double b, double c0, int s, int limit) {
  const double lo = std::ceil((a - c0) / s);
  const double hi = std::floor((b - c0) / s);
  const int clo = static_cast<int>(std::max(lo, 0.0));
  const int chi = static_cast<int>(std::min(hi, static_cast<double>(limit - 1)));
  return {clo, chi + 1};
}

}  // namespace

void fill_polygon_spans(std::span<const Vertex> polygon, const Window& window,
                        const std::function<void(int, int, int)>& emit) {
  if (polygon.size() < 3 || window.width <= 0 || window.height <= 0) return;
  const int s = window.scale;
  const double cx0 = window.center_x(0);
  const double cy0 = window.center_y(0);

  std::vector<Edge> edges;
  edges.reserve(polygon.size());
  double ymin = polygon[0].y;
  double ymax = polygon[0].y;
  double xmin = polygon[0].x;
  double xmax = polygon[0].x;
  for (std::size_t k = 0; k < polygon.size(); ++k) {
    const Vertex& p = polygon[k];
    const Vertex& q = polygon[(k + 1) % polygon.size()];
    edges.push_back({p.x, p.y, q.x, q.y, std::min(p.y, q.y), std::max(p.y, q.y)});
    ymin = std::min(ymin, p.y), ymax = std::max(ymax, p.y);
    xmin = std::min(xmin, p.x), xmax = std::max(xmax, p.x);
  }
  // Cheap reject when the polygon misses the window's centre lattice.
  if (xmax < cx0 || xmin > window.center_x(window.width - 1)) return;

  const auto [row_begin, row_end] = centre_range(ymin, ymax, cy0, s, window.height);
  if (row_begin >= row_end) return;

  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) { return a.ymin < b.ymin; });
  std::size_t next_edge = 0;
  std::vector<const Edge*> active;
  std::vector<double> crossings;
  std::vector<std::pair<double, double>> intervals;
  std::vector<std::pair<int, int>> runs;

  for (int row = row_begin; row < row_end; ++row) {
    const double yc = cy0 + double(s) * row;
    while (next_edge < edges.size() && edges[next_edge].ymin <= yc) active.push_back(&edges[next_edge++]);
    std::erase_if(active, [yc](const Edge* e) { return e->ymax < yc; });

    crossings.clear();
    intervals.clear();
    for (const Edge* e : active) {
      if (e->y0 == e->y1) {
        intervals.emplace_back(std::min(e->x0, e->x1), std::max(e->x0, e->x1));
        continue;
      }
      double x;
      if (yc == e->y0) {
        x = e->x0;
      } else if (yc == e->y1) {
        x = e->x1;
      } else {
        x = e->x0 + (yc - e->y0) * (e->x1 - e->x0) / (e->y1 - e->y0);
      }
      intervals.emplace_back(x, x);  // boundary point
      if (yc < e->ymax) crossings.push_back(x);
    }
    std::sort(crossings.begin(), crossings.end());
    for (std::size_t k = 0; k + 1 < crossings.size(); k += 2) intervals.emplace_back(crossings[k], crossings[k + 1]);

    runs.clear();
    for (const auto& [a, b] : intervals) {
      auto run = centre_range(a, b, cx0, s, window.width);
      if (run.first < run.second) runs.push_back(run);
    }
    if (runs.empty()) continue;
    std::sort(runs.begin(), runs.end());
    int begin = runs[0].first;
    int end = runs[0].second;
    for (std::size_t k = 1; k < runs.size(); ++k) {
      if (runs[k].first <= end) {
        end = std::max(end, runs[k].second);
      } else {
        emit(row, begin, end);
        begin = runs[k].first;
        end = runs[k].second;
      }
    }
    emit(row, begin, end);
  }
}

std::vector<int> unbound_layers(const AnnotationDocument& doc, const ClassMap& class_map) {
  std::vector<int> ids;
  for (const auto& layer : doc.layers) {
    if (!class_map.class_for_layer(layer.id)) ids.push_back(layer.id);
  }
  return ids;
}

MaskTile rasterize_window(const AnnotationDocument& doc, const ClassMap& class_map, const Window& window,
                          const RasterizeOptions& options) {
  if (window.scale < 1) throw DataError("rasterize scale must be >= 1");
  if (window.width < 0 || window.height < 0) throw DataError("negative window size");
  MaskTile mask = MaskTile::zeros(window);
  if (window.area() == 0) return mask;

  const int w = window.width;
  // Per-row difference array of coverage counts, one extra column for run ends.
  std::vector<int> diff(static_cast<std::size_t>(window.height) * (w + 1));
  for (const auto& layer : doc.layers) {
    const auto cls = class_map.class_for_layer(layer.id);
    if (!cls) {
      if (options.strict) {
        throw DataError("annotation layer " + std::to_string(layer.id) + " is not bound to a class");
      }
      continue;
    }
    std::fill(diff.begin(), diff.end(), 0);
    bool touched = false;
    for (const auto& region : layer.regions) {
      const int delta = region.negative ? -1 : 1;
      fill_polygon_spans(region.vertices, window, [&](int row, int begin, int end) {
        int* d = diff.data() + static_cast<std::size_t>(row) * (w + 1);
        d[begin] += delta;
        d[end] -= delta;
        touched = true;
      });
    }
    if (!touched) continue;
    const auto value = static_cast<std::uint8_t>(*cls);
    for (int row = 0; row < window.height; ++row) {
      const int* d = diff.data() + static_cast<std::size_t>(row) * (w + 1);
      int coverage = 0;
      for (int col = 0; col < w; ++col) {
        coverage += d[col];
        if (coverage > 0) mask.at(col, row) = value;
      }
    }
  }
  return mask;
}

namespace {

// Directions of pixel-edge steps in corner space (y down).
enum Dir : std::uint8_t { kEast = 0, kSouth = 1, kWest = 2, kNorth = 3 };
constexpr std::array<int, 4> kDx{1, 0, -1, 0};
constexpr std::array<int, 4> kDy{0, 1, 0, -1};

double signed_area(const std::vector<Vertex>& poly) {
  double twice = 0.0;
  for (std::size_t k = 0; k < poly.size(); ++k) {
    const Vertex& p = poly[k];
    const Vertex& q = poly[(k + 1) % poly.size()];
    twice += p.x * q.y - q.x * p.y;
  }
  return twice / 2.0;
}

// Traces the borders of one class. Edges keep the class on their right, so
// outer borders run clockwise on screen and holes counter-clockwise.
void trace_class(const MaskTile& mask, std::uint8_t cls, ContourSet& out) {
  const int W = mask.width();
  const int H = mask.height();
  auto inside = [&](int i, int j) { return i >= 0 && j >= 0 && i < W && j < H && mask.at(i, j) == cls; };

  const int CW = W + 1;
  auto corner = [CW](int cx, int cy) { return static_cast<std::size_t>(cy) * CW + cx; };
  std::vector<std::uint8_t> out_dirs(static_cast<std::size_t>(CW) * (H + 1), 0);
  std::vector<std::uint8_t> used(out_dirs.size(), 0);

  for (int j = 0; j < H; ++j) {
    for (int i = 0; i < W; ++i) {
      if (!inside(i, j)) continue;
      if (!inside(i, j - 1)) out_dirs[corner(i, j)] |= 1u << kEast;
      if (!inside(i + 1, j)) out_dirs[corner(i + 1, j)] |= 1u << kSouth;
      if (!inside(i, j + 1)) out_dirs[corner(i + 1, j + 1)] |= 1u << kWest;
      if (!inside(i - 1, j)) out_dirs[corner(i, j + 1)] |= 1u << kNorth;
    }
  }

  // 8-connected component labels, used to attach holes to their parents.
  std::vector<int> label(static_cast<std::size_t>(W) * H, -1);
  int n_components = 0;
  std::vector<std::pair<int, int>> stack;
  for (int j = 0; j < H; ++j) {
    for (int i = 0; i < W; ++i) {
      if (!inside(i, j) || label[static_cast<std::size_t>(j) * W + i] >= 0) continue;
      const int id = n_components++;
      label[static_cast<std::size_t>(j) * W + i] = id;
      stack.assign(1, {i, j});
      while (!stack.empty()) {
        auto [pi, pj] = stack.back();
        stack.pop_back();
        for (int dj = -1; dj <= 1; ++dj) {
          for (int di = -1; di <= 1; ++di) {
            const int ni = pi + di;
            const int nj = pj + dj;
            if (!inside(ni, nj)) continue;
            int& l = label[static_cast<std::size_t>(nj) * W + ni];
            if (l < 0) {
              l = id;
              stack.emplace_back(ni, nj);
            }
          }
        }
      }
    }
  }
  std::vector<std::optional<std::size_t>> outer_of_component(n_components);

  // At a pinch corner (two outgoing edges) the left turn keeps diagonal
  // pixels of the class in one border, i.e. 8-connected foreground.
  auto next_dir = [&](std::size_t c, int incoming) -> int {
    const std::uint8_t dirs = out_dirs[c];
    const int left = (incoming + 3) % 4;
    if (dirs & (1u << left)) return left;
    if (dirs & (1u << incoming)) return incoming;
    const int right = (incoming + 1) % 4;
    if (dirs & (1u << right)) return right;
    throw Error("contour tracing reached a dead end");
  };

  std::vector<std::pair<int, int>> corners;
  std::vector<int> dirs;
  for (int j = 0; j < H; ++j) {
    for (int i = 0; i < W; ++i) {
      if (!inside(i, j) || inside(i, j - 1) || (used[corner(i, j)] & (1u << kEast))) continue;

      corners.clear();
      dirs.clear();
      int cx = i;
      int cy = j;
      int d = kEast;
      for (;;) {
        used[corner(cx, cy)] |= static_cast<std::uint8_t>(1u << d);
        corners.emplace_back(cx, cy);
        dirs.push_back(d);
        cx += kDx[d];
        cy += kDy[d];
        const int nd = next_dir(corner(cx, cy), d);
        if (cx == i && cy == j && nd == kEast) break;
        if (used[corner(cx, cy)] & (1u << nd)) throw Error("contour tracing revisited an edge");
        d = nd;
      }

      Contour contour;
      contour.class_index = cls;
      const std::size_t n = corners.size();
      for (std::size_t k = 0; k < n; ++k) {
        const int in_dir = dirs[(k + n - 1) % n];
        if (in_dir != dirs[k]) {
          contour.vertices.push_back({corners[k].first - 0.5, corners[k].second - 0.5});
        }
      }
      const int component = label[static_cast<std::size_t>(j) * W + i];
      contour.hole = signed_area(contour.vertices) < 0.0;
      if (contour.hole) {
        contour.parent = outer_of_component[component];
      } else {
        outer_of_component[component] = out.contours.size();
      }
      out.contours.push_back(std::move(contour));
    }
  }
}

double point_segment_distance(const Vertex& p, const Vertex& a, const Vertex& b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

void douglas_peucker(const std::vector<Vertex>& pts, std::size_t first, std::size_t last, double tol,
                     std::vector<bool>& keep) {
  if (last <= first + 1) return;
  double best = -1.0;
  std::size_t index = first;
  for (std::size_t k = first + 1; k < last; ++k) {
    const double d = point_segment_distance(pts[k], pts[first], pts[last]);
    if (d > best) best = d, index = k;
  }
  if (best > tol) {
    keep[index] = true;
    douglas_peucker(pts, first, index, tol, keep);
    douglas_peucker(pts, index, last, tol, keep);
  }
}

std::vector<Vertex> simplify_ring(const std::vector<Vertex>& ring, double tol) {
  if (ring.size() <= 4) return ring;
  std::size_t far = 0;
  double best = -1.0;
  for (std::size_t k = 1; k < ring.size(); ++k) {
    const double d = std::hypot(ring[k].x - ring[0].x, ring[k].y - ring[0].y);
    if (d > best) best = d, far = k;
  }
  std::vector<Vertex> closed(ring);
  closed.push_back(ring[0]);
  std::vector<bool> keep(closed.size(), false);
  keep[0] = keep[far] = true;
  douglas_peucker(closed, 0, far, tol, keep);
  douglas_peucker(closed, far, closed.size() - 1, tol, keep);
  std::vector<Vertex> out;
  for (std::size_t k = 0; k + 1 < closed.size(); ++k) {
    if (keep[k]) out.push_back(closed[k]);
  }
  return out.size() >= 3 ? out : ring;
}

}  // namespace

ContourSet trace_contours(const MaskTile& mask) {
  ContourSet set;
  std::array<bool, 256> present{};
  for (std::uint8_t v : mask.values) present[v] = true;
  for (int c = 1; c < 256; ++c) {
    if (present[c]) trace_class(mask, static_cast<std::uint8_t>(c), set);
  }
  return set;
}

AnnotationDocument mask_to_annotations(const MaskTile& mask, const ClassMap& class_map,
                                       const MaskConversionOptions& options) {
  std::array<bool, 256> present{};
  for (std::uint8_t v : mask.values) present[v] = true;
  for (int c = 1; c < 256; ++c) {
    if (present[c] && !class_map.binding_for_class(c)) {
      throw DataError("mask value " + std::to_string(c) + " has no class binding");
    }
  }

  const ContourSet contours = trace_contours(mask);
  const Window& win = mask.window;
  auto to_base = [&](const Vertex& v) {
    return Vertex{win.x + win.scale * (v.x + 0.5) - 0.5, win.y + win.scale * (v.y + 0.5) - 0.5};
  };

  std::vector<std::vector<std::size_t>> holes_of(contours.contours.size());
  for (std::size_t k = 0; k < contours.contours.size(); ++k) {
    const Contour& c = contours.contours[k];
    if (c.hole && c.parent) holes_of[*c.parent].push_back(k);
  }

  AnnotationDocument doc;
  for (const auto& binding : class_map.bindings()) {
    if (!present[binding.class_index]) continue;
    AnnotationLayer layer;
    layer.id = binding.layer_id;
    if (!binding.name.empty()) layer.name = binding.name;
    layer.line_color = encode_line_color(binding.color);
    int next_id = 1;
    auto emit = [&](const Contour& c) {
      Region region;
      region.id = next_id++;
      region.negative = c.hole;
      const auto ring = options.simplify_tolerance > 0 ? simplify_ring(c.vertices, options.simplify_tolerance)
                                                       : c.vertices;
      region.vertices.reserve(ring.size());
      for (const auto& v : ring) region.vertices.push_back(to_base(v));
      layer.regions.push_back(std::move(region));
    };
    for (std::size_t k = 0; k < contours.contours.size(); ++k) {
      const Contour& c = contours.contours[k];
      if (c.class_index != binding.class_index || c.hole) continue;
      emit(c);
      for (std::size_t h : holes_of[k]) emit(contours.contours[h]);
    }
    doc.layers.push_back(std::move(layer));
  }
  return doc;
}

}  // namespace hail
