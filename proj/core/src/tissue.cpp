#include <algorithm>
#include <cstdint>

#include "hail/pipeline.hpp"

namespace hail {
namespace {

// 3x3 square min (erode) or max (dilate), separable. Erosion treats the
// outside as tissue and dilation as background, so borders are neutral.
std::vector<std::uint8_t> morph3(const std::vector<std::uint8_t>& src, int w, int h, bool erode) {
  const std::uint8_t outside = erode ? 1 : 0;
  auto pick = [erode](std::uint8_t a, std::uint8_t b) { return erode ? std::min(a, b) : std::max(a, b); };
  std::vector<std::uint8_t> tmp(src.size());
  for (int y = 0; y < h; ++y) {
    const std::uint8_t* row = src.data() + static_cast<std::size_t>(y) * w;
    std::uint8_t* out = tmp.data() + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      std::uint8_t v = row[x];
      v = pick(v, x > 0 ? row[x - 1] : outside);
      v = pick(v, x + 1 < w ? row[x + 1] : outside);
      out[x] = v;
    }
  }
  std::vector<std::uint8_t> dst(src.size());
  for (int y = 0; y < h; ++y) {
    const std::uint8_t* up = y > 0 ? tmp.data() + static_cast<std::size_t>(y - 1) * w : nullptr;
    const std::uint8_t* mid = tmp.data() + static_cast<std::size_t>(y) * w;
    const std::uint8_t* down = y + 1 < h ? tmp.data() + static_cast<std::size_t>(y + 1) * w : nullptr;
    std::uint8_t* out = dst.data() + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      std::uint8_t v = mid[x];
      v = pick(v, up ? up[x] : outside);
      v = pick(v, down ? down[x] : outside);
      out[x] = v;
    }
  }
  return dst;
}

}  // namespace

TissueResult tissue_mask(const ImageTile& tile, const TissueParams& params) {
  const int w = tile.width();
  const int h = tile.height();
  TissueResult result;
  result.map = MaskTile::zeros(tile.window);
  if (w <= 0 || h <= 0) return result;

  std::vector<std::uint8_t> bits(tile.window.area());
  const long threshold = static_cast<long>(params.luminance_threshold) * 1000;
  for (std::size_t i = 0; i < bits.size(); ++i) {
    const long lum = 299L * tile.pixels[3 * i] + 587L * tile.pixels[3 * i + 1] + 114L * tile.pixels[3 * i + 2];
    bits[i] = lum < threshold ? 1 : 0;
  }
  // open, then close
  bits = morph3(morph3(bits, w, h, true), w, h, false);
  bits = morph3(morph3(bits, w, h, false), w, h, true);

  std::size_t count = 0;
  for (auto b : bits) count += b;
  result.map.values = std::move(bits);
  result.fraction = static_cast<double>(count) / static_cast<double>(tile.window.area());
  result.keep = count > 0 && result.fraction >= params.min_fraction;
  return result;
}

}  // namespace hail
