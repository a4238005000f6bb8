#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace hail {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline constexpr Rgb kWhite{255, 255, 255};

/// A rectangular window over a slide. The origin is in base-level pixels,
/// the size is in pixels at `scale` (an integer linear downsample factor).
///
/// Pixel (col, row) of the window covers the base-level block
/// [x + scale*col, x + scale*col + scale) x [y + scale*row, ...). Base pixel
/// centres sit at integer coordinates, so the block centre of (col, row) is
/// x + scale*col + (scale-1)/2.
struct Window {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
  int scale = 1;

  std::size_t area() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
  double center_x(int col) const { return x + double(scale) * col + (scale - 1) * 0.5; }
  double center_y(int row) const { return y + double(scale) * row + (scale - 1) * 0.5; }
  /// Base-level extent covered by the window (exclusive end).
  int base_right() const { return x + width * scale; }
  int base_bottom() const { return y + height * scale; }

  friend bool operator==(const Window&, const Window&) = default;
};

/// Row-major 8-bit RGB raster pinned to a slide window.
struct ImageTile {
  Window window;
  std::vector<std::uint8_t> pixels;  // 3 bytes per pixel

  int width() const { return window.width; }
  int height() const { return window.height; }

  static ImageTile filled(const Window& w, Rgb c) {
    ImageTile t{w, std::vector<std::uint8_t>(w.area() * 3)};
    for (std::size_t i = 0; i < w.area(); ++i) {
      t.pixels[3 * i] = c.r;
      t.pixels[3 * i + 1] = c.g;
      t.pixels[3 * i + 2] = c.b;
    }
    return t;
  }

  Rgb at(int col, int row) const {
    const std::size_t i = 3 * (static_cast<std::size_t>(row) * window.width + col);
    return {pixels[i], pixels[i + 1], pixels[i + 2]};
  }
  void set(int col, int row, Rgb c) {
    const std::size_t i = 3 * (static_cast<std::size_t>(row) * window.width + col);
    pixels[i] = c.r;
    pixels[i + 1] = c.g;
    pixels[i + 2] = c.b;
  }
};

/// Indexed class raster; value 0 is background.
struct MaskTile {
  Window window;
  std::vector<std::uint8_t> values;

  int width() const { return window.width; }
  int height() const { return window.height; }

  static MaskTile zeros(const Window& w) { return {w, std::vector<std::uint8_t>(w.area(), 0)}; }

  std::uint8_t at(int col, int row) const { return values[static_cast<std::size_t>(row) * window.width + col]; }
  std::uint8_t& at(int col, int row) { return values[static_cast<std::size_t>(row) * window.width + col]; }
};

}  // namespace hail
