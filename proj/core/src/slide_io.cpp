#include "hail/slide_io.hpp"

#include <tiffio.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <list>
#include <map>
#include <mutex>
#include <string>

#include "hail/error.hpp"
#include "hail/image_io.hpp"

namespace hail {
namespace detail {

/// One stored resolution level.
struct LevelInfo {
  int factor = 1;
  int width = 0;
  int height = 0;
};

class SlideSource {
 public:
  virtual ~SlideSource() = default;
  virtual const std::vector<LevelInfo>& levels() const = 0;
  /// Copies the level rectangle into `out` (RGB, row-major, w*h*3). Pixels
  /// outside the level are white.
  virtual void read_level(std::size_t level, int x, int y, int w, int h, std::uint8_t* out) const = 0;
};

}  // namespace detail

namespace {

using detail::LevelInfo;

// Copies the intersection of a source rectangle into a white-filled target.
// `src` holds a chunk at (cx, cy) of size cw x ch with the given row stride.
void blit(const std::uint8_t* src, int cx, int cy, int cw, int ch, std::size_t src_stride, int x, int y, int w,
          int h, std::uint8_t* out) {
  const int x0 = std::max(x, cx);
  const int x1 = std::min(x + w, cx + cw);
  const int y0 = std::max(y, cy);
  const int y1 = std::min(y + h, cy + ch);
  if (x0 >= x1 || y0 >= y1) return;
  const std::size_t bytes = 3 * static_cast<std::size_t>(x1 - x0);
  for (int row = y0; row < y1; ++row) {
    const std::uint8_t* s = src + (row - cy) * src_stride + 3 * static_cast<std::size_t>(x0 - cx);
    std::uint8_t* d = out + 3 * (static_cast<std::size_t>(row - y) * w + (x0 - x));
    std::copy(s, s + bytes, d);
  }
}

class PngSource final : public detail::SlideSource {
 public:
  explicit PngSource(ImageTile image) : image_(std::move(image)) {
    levels_.push_back({1, image_.width(), image_.height()});
  }
  const std::vector<LevelInfo>& levels() const override { return levels_; }
  void read_level(std::size_t, int x, int y, int w, int h, std::uint8_t* out) const override {
    std::fill(out, out + 3 * static_cast<std::size_t>(w) * h, 255);
    blit(image_.pixels.data(), 0, 0, image_.width(), image_.height(), 3 * static_cast<std::size_t>(image_.width()),
         x, y, w, h, out);
  }

 private:
  ImageTile image_;
  std::vector<LevelInfo> levels_;
};

struct TiffCloser {
  void operator()(TIFF* t) const {
    if (t) TIFFClose(t);
  }
};

// Decodes TIFF tiles or strips on demand and keeps the most recently used
// ones. libtiff handles are not thread-safe, so decoding is serialised.
class TiffSource final : public detail::SlideSource {
 public:
  struct Level {
    LevelInfo info;
    tdir_t directory = 0;
    bool tiled = false;
    int chunk_w = 0;  // tile width, or image width for strips
    int chunk_h = 0;  // tile height, or rows per strip
    int samples = 3;
    bool jpeg_ycbcr = false;
  };

  TiffSource(std::unique_ptr<TIFF, TiffCloser> tif, std::vector<Level> levels, std::size_t cache_bytes)
      : tif_(std::move(tif)), levels_(std::move(levels)), cache_budget_(cache_bytes) {
    for (const auto& l : levels_) infos_.push_back(l.info);
  }

  const std::vector<LevelInfo>& levels() const override { return infos_; }

  void read_level(std::size_t level, int x, int y, int w, int h, std::uint8_t* out) const override {
    std::fill(out, out + 3 * static_cast<std::size_t>(w) * h, 255);
    const Level& lv = levels_.at(level);
    const int x0 = std::max(x, 0);
    const int y0 = std::max(y, 0);
    const int x1 = std::min(x + w, lv.info.width);
    const int y1 = std::min(y + h, lv.info.height);
    if (x0 >= x1 || y0 >= y1) return;
    for (int cy = (y0 / lv.chunk_h) * lv.chunk_h; cy < y1; cy += lv.chunk_h) {
      for (int cx = (x0 / lv.chunk_w) * lv.chunk_w; cx < x1; cx += lv.chunk_w) {
        auto chunk = fetch(level, cx, cy);
        blit(chunk->data(), cx, cy, lv.chunk_w, lv.chunk_h, 3 * static_cast<std::size_t>(lv.chunk_w), x, y, w, h,
             out);
      }
    }
  }

 private:
  using Chunk = std::shared_ptr<const std::vector<std::uint8_t>>;
  struct Key {
    std::size_t level;
    int cx, cy;
    auto operator<=>(const Key&) const = default;
  };

  Chunk fetch(std::size_t level, int cx, int cy) const {
    std::lock_guard lock(mutex_);
    const Key key{level, cx, cy};
    if (auto it = index_.find(key); it != index_.end()) {
      lru_.splice(lru_.begin(), lru_, it->second);
      return it->second->second;
    }
    Chunk chunk = decode(levels_[level], cx, cy);
    cached_bytes_ += chunk->size();
    lru_.emplace_front(key, chunk);
    index_[key] = lru_.begin();
    while (cached_bytes_ > cache_budget_ && lru_.size() > 1) {
      cached_bytes_ -= lru_.back().second->size();
      index_.erase(lru_.back().first);
      lru_.pop_back();
    }
    return chunk;
  }

  // Caller holds mutex_.
  Chunk decode(const Level& lv, int cx, int cy) const {
    TIFF* tif = tif_.get();
    if (TIFFCurrentDirectory(tif) != lv.directory) {
      if (!TIFFSetDirectory(tif, lv.directory)) throw DataError("TIFF directory seek failed");
      if (lv.jpeg_ycbcr) TIFFSetField(tif, TIFFTAG_JPEGCOLORMODE, JPEGCOLORMODE_RGB);
    }
    const std::size_t pixels = static_cast<std::size_t>(lv.chunk_w) * lv.chunk_h;
    std::vector<std::uint8_t> raw(pixels * lv.samples, 255);
    tmsize_t got = 0;
    if (lv.tiled) {
      const ttile_t index = TIFFComputeTile(tif, static_cast<uint32_t>(cx), static_cast<uint32_t>(cy), 0, 0);
      got = TIFFReadEncodedTile(tif, index, raw.data(), static_cast<tmsize_t>(raw.size()));
    } else {
      const tstrip_t index = TIFFComputeStrip(tif, static_cast<uint32_t>(cy), 0);
      got = TIFFReadEncodedStrip(tif, index, raw.data(), static_cast<tmsize_t>(raw.size()));
    }
    if (got < 0) throw DataError("TIFF decode failed at (" + std::to_string(cx) + "," + std::to_string(cy) + ")");

    if (lv.samples == 3) return std::make_shared<const std::vector<std::uint8_t>>(std::move(raw));
    auto rgb = std::make_shared<std::vector<std::uint8_t>>(pixels * 3);
    for (std::size_t i = 0; i < pixels; ++i) {
      if (lv.samples == 1) {
        (*rgb)[3 * i] = (*rgb)[3 * i + 1] = (*rgb)[3 * i + 2] = raw[i];
      } else {
        for (int c = 0; c < 3; ++c) (*rgb)[3 * i + c] = raw[i * lv.samples + c];
      }
    }
    return rgb;
  }

  std::unique_ptr<TIFF, TiffCloser> tif_;
  std::vector<Level> levels_;
  std::vector<LevelInfo> infos_;
  std::size_t cache_budget_;

  mutable std::mutex mutex_;
  mutable std::list<std::pair<Key, Chunk>> lru_;
  mutable std::map<Key, std::list<std::pair<Key, Chunk>>::iterator> index_;
  mutable std::size_t cached_bytes_ = 0;
};

void silence_libtiff() {
  static std::once_flag once;
  std::call_once(once, [] {
    TIFFSetWarningHandler(nullptr);
    TIFFSetErrorHandler(nullptr);
  });
}

std::shared_ptr<const detail::SlideSource> open_tiff(const std::filesystem::path& path) {
  silence_libtiff();
  std::unique_ptr<TIFF, TiffCloser> tif(TIFFOpen(path.c_str(), "r"));
  if (!tif) throw DataError("unsupported format: cannot decode TIFF " + path.string());

  std::vector<TiffSource::Level> levels;
  int base_w = 0;
  int base_h = 0;
  tdir_t dir = 0;
  do {
    uint32_t w = 0, h = 0;
    uint16_t bits = 8, samples = 1, planar = PLANARCONFIG_CONTIG, photometric = PHOTOMETRIC_RGB;
    bool jpeg_ycbcr = false;
    TIFFGetField(tif.get(), TIFFTAG_IMAGEWIDTH, &w);
    TIFFGetField(tif.get(), TIFFTAG_IMAGELENGTH, &h);
    TIFFGetFieldDefaulted(tif.get(), TIFFTAG_BITSPERSAMPLE, &bits);
    TIFFGetFieldDefaulted(tif.get(), TIFFTAG_SAMPLESPERPIXEL, &samples);
    TIFFGetFieldDefaulted(tif.get(), TIFFTAG_PLANARCONFIG, &planar);
    TIFFGetField(tif.get(), TIFFTAG_PHOTOMETRIC, &photometric);
    if (photometric == PHOTOMETRIC_YCBCR) {
      uint16_t compression = COMPRESSION_NONE;
      TIFFGetField(tif.get(), TIFFTAG_COMPRESSION, &compression);
      if (compression == COMPRESSION_JPEG) {
        TIFFSetField(tif.get(), TIFFTAG_JPEGCOLORMODE, JPEGCOLORMODE_RGB);
        photometric = PHOTOMETRIC_RGB;
        jpeg_ycbcr = true;
      }
    }
    const bool usable = bits == 8 && planar == PLANARCONFIG_CONTIG &&
                        ((samples == 1 && photometric == PHOTOMETRIC_MINISBLACK) ||
                         ((samples == 3 || samples == 4) && photometric == PHOTOMETRIC_RGB));
    if (dir == 0) {
      if (w == 0 || h == 0) throw DataError("zero-area image " + path.string());
      if (!usable) throw DataError("unsupported format: " + path.string() + " is not 8-bit RGB or grey");
      base_w = static_cast<int>(w);
      base_h = static_cast<int>(h);
    }
    if (usable && w > 0 && h > 0) {
      // Accept a directory as a level only if it is an integer reduction of
      // the base (ceil relation); label and macro images fail this test.
      const int factor = static_cast<int>((base_w + static_cast<int>(w) / 2) / static_cast<int>(w));
      const bool integral = factor >= 1 && (base_w + factor - 1) / factor == static_cast<int>(w) &&
                            (base_h + factor - 1) / factor == static_cast<int>(h);
      const bool duplicate = std::any_of(levels.begin(), levels.end(),
                                         [&](const auto& l) { return l.info.factor == factor; });
      if (integral && !duplicate) {
        TiffSource::Level lv;
        lv.info = {factor, static_cast<int>(w), static_cast<int>(h)};
        lv.directory = dir;
        lv.samples = samples;
        lv.jpeg_ycbcr = jpeg_ycbcr;
        lv.tiled = TIFFIsTiled(tif.get());
        if (lv.tiled) {
          uint32_t tw = 0, th = 0;
          TIFFGetField(tif.get(), TIFFTAG_TILEWIDTH, &tw);
          TIFFGetField(tif.get(), TIFFTAG_TILELENGTH, &th);
          lv.chunk_w = static_cast<int>(tw);
          lv.chunk_h = static_cast<int>(th);
        } else {
          uint32_t rps = h;
          TIFFGetFieldDefaulted(tif.get(), TIFFTAG_ROWSPERSTRIP, &rps);
          lv.chunk_w = static_cast<int>(w);
          lv.chunk_h = static_cast<int>(std::min(rps, h));
        }
        if (lv.chunk_w > 0 && lv.chunk_h > 0) levels.push_back(lv);
      }
    }
    ++dir;
  } while (TIFFReadDirectory(tif.get()));

  if (levels.empty() || levels.front().info.factor != 1) throw DataError("unsupported format: " + path.string());
  std::sort(levels.begin(), levels.end(), [](const auto& a, const auto& b) { return a.info.factor < b.info.factor; });
  constexpr std::size_t kCacheBytes = std::size_t{96} << 20;
  return std::make_shared<TiffSource>(std::move(tif), std::move(levels), kCacheBytes);
}

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

}  // namespace

bool is_slide_file(const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  return ext == ".tif" || ext == ".tiff" || ext == ".png";
}

SlideHandle open_slide(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) throw DataError("unreadable file: " + path.string());
  if (std::filesystem::file_size(path, ec) == 0) throw DataError("unsupported format: " + path.string() + " is empty");

  unsigned char magic[8] = {};
  {
    std::ifstream in(path, std::ios::binary);
    in.read(reinterpret_cast<char*>(magic), sizeof magic);
    if (!in && in.gcount() < 4) throw DataError("unsupported format: " + path.string());
  }
  const bool is_png = magic[0] == 0x89 && magic[1] == 'P' && magic[2] == 'N' && magic[3] == 'G';
  const bool is_tiff = (magic[0] == 'I' && magic[1] == 'I') || (magic[0] == 'M' && magic[1] == 'M');

  SlideHandle handle;
  handle.path_ = path;
  if (is_png) {
    ImageTile image = read_png_rgb(path);
    if (image.width() == 0 || image.height() == 0) throw DataError("zero-area image " + path.string());
    handle.source_ = std::make_shared<PngSource>(std::move(image));
  } else if (is_tiff) {
    handle.source_ = open_tiff(path);
  } else {
    throw DataError("unsupported format: " + path.string());
  }
  const auto& levels = handle.source_->levels();
  handle.width_ = levels.front().width;
  handle.height_ = levels.front().height;
  for (const auto& l : levels) handle.level_factors_.push_back(l.factor);
  return handle;
}

bool SlideHandle::supports_scale(int scale) const {
  if (scale < 1) return false;
  return std::any_of(level_factors_.begin(), level_factors_.end(), [&](int f) { return scale % f == 0; });
}

ImageTile SlideHandle::read_region(int x, int y, int width, int height, int scale) const {
  if (!source_) throw DataError("read from an unopened slide");
  if (width < 0 || height < 0) throw DataError("negative region size");
  if (!supports_scale(scale)) {
    throw DataError("scale " + std::to_string(scale) + " not achievable from stored levels of " + path_.string());
  }

  // Coarsest stored level that divides the requested scale.
  std::size_t level = 0;
  for (std::size_t i = 0; i < level_factors_.size(); ++i) {
    if (scale % level_factors_[i] == 0) level = i;
  }
  const int factor = level_factors_[level];
  const int k = scale / factor;
  auto floor_div = [](int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); };
  const int lx = floor_div(x, factor);
  const int ly = floor_div(y, factor);

  ImageTile tile{Window{x, y, width, height, scale}, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height * 3)};
  if (width == 0 || height == 0) return tile;
  if (k == 1) {
    source_->read_level(level, lx, ly, width, height, tile.pixels.data());
    return tile;
  }

  // Box filter one output row at a time to bound memory.
  const int band_w = width * k;
  std::vector<std::uint8_t> band(static_cast<std::size_t>(band_w) * k * 3);
  std::vector<unsigned> sums(static_cast<std::size_t>(width) * 3);
  const unsigned n = static_cast<unsigned>(k) * k;
  for (int row = 0; row < height; ++row) {
    source_->read_level(level, lx, ly + row * k, band_w, k, band.data());
    std::fill(sums.begin(), sums.end(), 0u);
    for (int r = 0; r < k; ++r) {
      const std::uint8_t* src = band.data() + 3 * static_cast<std::size_t>(r) * band_w;
      for (int col = 0; col < width; ++col) {
        unsigned* s = sums.data() + 3 * col;
        const std::uint8_t* p = src + 3 * static_cast<std::size_t>(col) * k;
        for (int dx = 0; dx < k; ++dx, p += 3) {
          s[0] += p[0];
          s[1] += p[1];
          s[2] += p[2];
        }
      }
    }
    std::uint8_t* dst = tile.pixels.data() + 3 * static_cast<std::size_t>(row) * width;
    for (std::size_t i = 0; i < sums.size(); ++i) dst[i] = static_cast<std::uint8_t>((sums[i] + n / 2) / n);
  }
  return tile;
}

}  // namespace hail
