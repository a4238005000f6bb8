#include "hail/augment.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "hail/error.hpp"
#include "hail/image_io.hpp"

namespace hail {

ClassPresence class_presence(const MaskTile& mask) {
  ClassPresence present;
  for (std::uint8_t v : mask.values) present.set(v);
  present.reset(0);
  return present;
}

std::size_t ClassCounts::max_count() const {
  std::size_t m = 0;
  for (std::size_t c = 1; c < blocks_with_class.size(); ++c) m = std::max(m, blocks_with_class[c]);
  return m;
}

ClassCounts tabulate_presence(std::span<const ClassPresence> blocks, int n_classes) {
  if (n_classes < 1 || n_classes > 256) throw DataError("class count must be in 1..256");
  ClassCounts counts{std::vector<std::size_t>(static_cast<std::size_t>(n_classes), 0)};
  for (const auto& present : blocks) {
    for (int c = 1; c < 256; ++c) {
      if (!present.test(c)) continue;
      if (c >= n_classes) throw DataError("block contains class " + std::to_string(c) + " outside the class space");
      ++counts.blocks_with_class[c];
    }
  }
  return counts;
}

ClassCounts tabulate_classes(std::span<const MaskTile> blocks, int n_classes) {
  std::vector<ClassPresence> presence;
  presence.reserve(blocks.size());
  for (const auto& b : blocks) presence.push_back(class_presence(b));
  return tabulate_presence(presence, n_classes);
}

std::size_t AugmentationPlan::total() const {
  std::size_t n = 0;
  for (int c : copies) n += static_cast<std::size_t>(c);
  return n;
}

AugmentationPlan plan_balanced_augmentation(const ClassCounts& counts, int base, std::span<const ClassPresence> blocks,
                                            int cap, std::uint64_t seed) {
  if (base < 1) throw DataError("augmentation base multiplier must be >= 1");
  AugmentationPlan plan;
  plan.base = base;
  plan.cap = cap > 0 ? std::max(cap, base) : 4 * base;
  plan.seed = seed;
  const double max_count = static_cast<double>(counts.max_count());
  plan.copies.reserve(blocks.size());
  for (const auto& present : blocks) {
    std::size_t rarest = 0;
    for (std::size_t c = 1; c < counts.blocks_with_class.size(); ++c) {
      if (!present.test(c)) continue;
      const std::size_t n = counts.blocks_with_class[c];
      if (n > 0 && (rarest == 0 || n < rarest)) rarest = n;
    }
    if (rarest == 0) {
      plan.copies.push_back(base);
      continue;
    }
    const double wanted = std::round(base * max_count / static_cast<double>(rarest));
    plan.copies.push_back(static_cast<int>(std::clamp(wanted, double(base), double(plan.cap))));
  }
  return plan;
}

ClassCounts augmented_counts(const AugmentationPlan& plan, std::span<const ClassPresence> blocks, int n_classes) {
  if (plan.copies.size() != blocks.size()) throw DataError("plan does not match block list");
  ClassCounts counts{std::vector<std::size_t>(static_cast<std::size_t>(n_classes), 0)};
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (int c = 1; c < n_classes; ++c) {
      if (blocks[b].test(c)) counts.blocks_with_class[c] += static_cast<std::size_t>(plan.copies[b]);
    }
  }
  return counts;
}

std::vector<AugmentOp> default_augment_ops() {
  return {FlipHorizontal{}, FlipVertical{}, HueShift{}, LightnessShift{}, PiecewiseAffine{}};
}

std::uint64_t derive_seed(std::uint64_t global_seed, std::uint64_t block_id, std::uint64_t copy) {
  // splitmix64 finaliser over a simple combination of the three inputs.
  auto mix = [](std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(global_seed) ^ block_id) ^ copy);
}

namespace {

// Platform-independent uniform draws (std distributions are not portable).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double symmetric(double bound) { return bound * (2.0 * unit() - 1.0); }

 private:
  std::mt19937_64 engine_;
};

struct Hsl {
  double h, s, l;  // h in degrees
};

Hsl to_hsl(Rgb c) {
  const double r = c.r / 255.0, g = c.g / 255.0, b = c.b / 255.0;
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  Hsl out{0.0, 0.0, (mx + mn) / 2.0};
  const double d = mx - mn;
  if (d == 0.0) return out;
  out.s = out.l > 0.5 ? d / (2.0 - mx - mn) : d / (mx + mn);
  if (mx == r) {
    out.h = (g - b) / d + (g < b ? 6.0 : 0.0);
  } else if (mx == g) {
    out.h = (b - r) / d + 2.0;
  } else {
    out.h = (r - g) / d + 4.0;
  }
  out.h *= 60.0;
  return out;
}

double hue_channel(double p, double q, double t) {
  if (t < 0) t += 1;
  if (t > 1) t -= 1;
  if (t < 1.0 / 6) return p + (q - p) * 6 * t;
  if (t < 0.5) return q;
  if (t < 2.0 / 3) return p + (q - p) * (2.0 / 3 - t) * 6;
  return p;
}

Rgb to_rgb(Hsl c) {
  auto to_byte = [](double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v * 255.0), 0L, 255L)); };
  if (c.s == 0.0) {
    const auto v = to_byte(c.l);
    return {v, v, v};
  }
  const double q = c.l < 0.5 ? c.l * (1 + c.s) : c.l + c.s - c.l * c.s;
  const double p = 2 * c.l - q;
  const double h = c.h / 360.0;
  return {to_byte(hue_channel(p, q, h + 1.0 / 3)), to_byte(hue_channel(p, q, h)),
          to_byte(hue_channel(p, q, h - 1.0 / 3))};
}

void flip(ImageTile& image, MaskTile& mask, bool horizontal) {
  const int w = image.width();
  const int h = image.height();
  ImageTile img = image;
  MaskTile msk = mask;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int sx = horizontal ? w - 1 - x : x;
      const int sy = horizontal ? y : h - 1 - y;
      img.set(x, y, image.at(sx, sy));
      msk.at(x, y) = mask.at(sx, sy);
    }
  }
  image = std::move(img);
  mask = std::move(msk);
}

template <typename Fn>
void map_colors(ImageTile& image, Fn&& fn) {
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) image.set(x, y, fn(image.at(x, y)));
  }
}

void piecewise_affine(ImageTile& image, MaskTile& mask, const PiecewiseAffine& op, Rng& rng) {
  const int k = std::max(op.grid, 2);
  std::vector<double> dx(static_cast<std::size_t>(k) * k);
  std::vector<double> dy(dx.size());
  for (std::size_t n = 0; n < dx.size(); ++n) {
    dx[n] = rng.symmetric(op.max_displacement);
    dy[n] = rng.symmetric(op.max_displacement);
  }
  const int w = image.width();
  const int h = image.height();
  if (w < 2 || h < 2) return;
  const double cell_w = (w - 1) / double(k - 1);
  const double cell_h = (h - 1) / double(k - 1);
  auto node = [k](int i, int j) { return static_cast<std::size_t>(j) * k + i; };

  ImageTile img = ImageTile::filled(image.window, kWhite);
  MaskTile msk = MaskTile::zeros(mask.window);
  for (int y = 0; y < h; ++y) {
    const double gy = y / cell_h;
    const int cj = std::min(static_cast<int>(gy), k - 2);
    const double v = gy - cj;
    for (int x = 0; x < w; ++x) {
      const double gx = x / cell_w;
      const int ci = std::min(static_cast<int>(gx), k - 2);
      const double u = gx - ci;
      // Barycentric weights on the cell's lower or upper triangle.
      double ox, oy;
      if (u + v <= 1.0) {
        const double w00 = 1 - u - v;
        ox = w00 * dx[node(ci, cj)] + u * dx[node(ci + 1, cj)] + v * dx[node(ci, cj + 1)];
        oy = w00 * dy[node(ci, cj)] + u * dy[node(ci + 1, cj)] + v * dy[node(ci, cj + 1)];
      } else {
        const double w11 = u + v - 1, w01 = 1 - u, w10 = 1 - v;
        ox = w11 * dx[node(ci + 1, cj + 1)] + w01 * dx[node(ci, cj + 1)] + w10 * dx[node(ci + 1, cj)];
        oy = w11 * dy[node(ci + 1, cj + 1)] + w01 * dy[node(ci, cj + 1)] + w10 * dy[node(ci + 1, cj)];
      }
      const double sx = x + ox;
      const double sy = y + oy;

      const long nx = std::lround(sx);
      const long ny = std::lround(sy);
      if (nx >= 0 && ny >= 0 && nx < w && ny < h) msk.at(x, y) = mask.at(static_cast<int>(nx), static_cast<int>(ny));

      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0;
      const double fy = sy - y0;
      auto sample = [&](int px, int py) {
        return (px >= 0 && py >= 0 && px < w && py < h) ? image.at(px, py) : kWhite;
      };
      const Rgb c00 = sample(x0, y0), c10 = sample(x0 + 1, y0), c01 = sample(x0, y0 + 1), c11 = sample(x0 + 1, y0 + 1);
      auto blend = [&](std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d) {
        const double top = a + (b - a) * fx;
        const double bottom = c + (d - c) * fx;
        return static_cast<std::uint8_t>(std::clamp(std::lround(top + (bottom - top) * fy), 0L, 255L));
      };
      img.set(x, y, Rgb{blend(c00.r, c10.r, c01.r, c11.r), blend(c00.g, c10.g, c01.g, c11.g),
                        blend(c00.b, c10.b, c01.b, c11.b)});
    }
  }
  image = std::move(img);
  mask = std::move(msk);
}

}  // namespace

std::pair<ImageTile, MaskTile> apply_augmentation(const ImageTile& image, const MaskTile& mask,
                                                  std::span<const AugmentOp> ops, std::uint64_t seed) {
  if (image.width() != mask.width() || image.height() != mask.height()) {
    throw DataError("image and mask sizes differ");
  }
  ImageTile img = image;
  MaskTile msk = mask;
  Rng rng(seed);
  for (const auto& op : ops) {
    std::visit(
        [&](const auto& o) {
          using T = std::decay_t<decltype(o)>;
          if constexpr (std::is_same_v<T, FlipHorizontal> || std::is_same_v<T, FlipVertical>) {
            if (rng.unit() < o.probability) flip(img, msk, std::is_same_v<T, FlipHorizontal>);
          } else if constexpr (std::is_same_v<T, HueShift>) {
            const double shift = rng.symmetric(o.max_degrees);
            if (shift == 0.0) return;
            map_colors(img, [shift](Rgb c) {
              Hsl hsl = to_hsl(c);
              hsl.h = std::fmod(hsl.h + shift + 360.0, 360.0);
              return to_rgb(hsl);
            });
          } else if constexpr (std::is_same_v<T, LightnessShift>) {
            const double shift = rng.symmetric(o.max_fraction);
            if (shift == 0.0) return;
            map_colors(img, [shift](Rgb c) {
              Hsl hsl = to_hsl(c);
              hsl.l = std::clamp(hsl.l + shift, 0.0, 1.0);
              return to_rgb(hsl);
            });
          } else {
            piecewise_affine(img, msk, o, rng);
          }
        },
        op);
  }
  return {std::move(img), std::move(msk)};
}

std::string pair_stem(const std::string& slide, int x, int y, int copy) {
  return slide + "_" + std::to_string(x) + "_" + std::to_string(y) + "_" + std::to_string(copy);
}

std::vector<std::string> write_augmented_block(const std::filesystem::path& dir, const std::string& slide,
                                               const ImageTile& image, const MaskTile& mask, int copies,
                                               std::span<const AugmentOp> ops, std::uint64_t global_seed,
                                               std::uint64_t block_id, int png_compression) {
  std::vector<std::string> stems;
  for (int copy = 0; copy < copies; ++copy) {
    const std::string stem = pair_stem(slide, image.window.x, image.window.y, copy);
    if (copy == 0) {
      write_png_rgb(dir / (stem + ".img.png"), image, png_compression);
      write_png_mask(dir / (stem + ".msk.png"), mask, png_compression);
    } else {
      auto [img, msk] = apply_augmentation(image, mask, ops, derive_seed(global_seed, block_id, copy));
      write_png_rgb(dir / (stem + ".img.png"), img, png_compression);
      write_png_mask(dir / (stem + ".msk.png"), msk, png_compression);
    }
    stems.push_back(stem);
  }
  return stems;
}

}  // namespace hail
