#include "hail/image_io.hpp"

#include <png.h>
#include <tiffio.h>

#include <csetjmp>
#include <cstdio>
#include <memory>
#include <string>

#include "hail/error.hpp"

namespace hail {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw DataError("cannot open " + path.string());
  return f;
}

[[noreturn]] void png_fail(png_structp png, png_const_charp msg) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = msg;
  png_longjmp(png, 1);
}

void png_warn(png_structp, png_const_charp) {}

void write_png(const std::filesystem::path& path, const std::uint8_t* data, int width, int height,
               int channels, int compression) {
  if (width <= 0 || height <= 0) throw DataError("cannot write empty PNG " + path.string());
  FilePtr file = open_file(path, "wb");
  std::string error;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, png_fail, png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw DataError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("PNG write failed for " + path.string() + ": " + error);
  }
  png_init_io(png, file.get());
  png_set_compression_level(png, compression);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(width) * channels;
  for (int row = 0; row < height; ++row) {
    png_write_row(png, const_cast<png_bytep>(data + row * stride));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

struct DecodedPng {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> data;
};

// Decodes to 8-bit grey or RGB (palette expanded, 16-bit stripped, alpha dropped).
DecodedPng read_png(const std::filesystem::path& path) {
  FilePtr file = open_file(path, "rb");
  unsigned char sig[8] = {};
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw DataError("unsupported format: " + path.string() + " is not a PNG");
  }
  std::string error;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, png_fail, png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DataError("libpng initialisation failed");
  }
  DecodedPng out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("PNG read failed for " + path.string() + ": " + error);
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const auto color = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (depth == 16) png_set_strip_16(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png), png_set_strip_alpha(png);
  png_read_update_info(png, info);

  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  out.data.resize(stride * out.height);
  std::vector<png_bytep> rows(out.height);
  for (int r = 0; r < out.height; ++r) rows[r] = out.data.data() + r * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  if (out.channels != 1 && out.channels != 3) throw DataError("unsupported PNG layout in " + path.string());
  return out;
}

}  // namespace

void write_png_rgb(const std::filesystem::path& path, const ImageTile& image, int compression) {
  write_png(path, image.pixels.data(), image.width(), image.height(), 3, compression);
}

void write_png_mask(const std::filesystem::path& path, const MaskTile& mask, int compression) {
  write_png(path, mask.values.data(), mask.width(), mask.height(), 1, compression);
}

ImageTile read_png_rgb(const std::filesystem::path& path) {
  DecodedPng png = read_png(path);
  ImageTile tile{Window{0, 0, png.width, png.height, 1}, {}};
  if (png.channels == 3) {
    tile.pixels = std::move(png.data);
  } else {
    tile.pixels.resize(tile.window.area() * 3);
    for (std::size_t i = 0; i < png.data.size(); ++i) {
      tile.pixels[3 * i] = tile.pixels[3 * i + 1] = tile.pixels[3 * i + 2] = png.data[i];
    }
  }
  return tile;
}

MaskTile read_png_mask(const std::filesystem::path& path) {
  DecodedPng png = read_png(path);
  if (png.channels != 1) throw DataError("mask " + path.string() + " is not single-channel");
  return MaskTile{Window{0, 0, png.width, png.height, 1}, std::move(png.data)};
}

ImageTile box_downsample(const ImageTile& image, int factor) {
  if (factor < 1) throw DataError("downsample factor must be >= 1");
  if (factor == 1) return image;
  const int out_w = (image.width() + factor - 1) / factor;
  const int out_h = (image.height() + factor - 1) / factor;
  ImageTile out{Window{image.window.x, image.window.y, out_w, out_h, image.window.scale * factor}, {}};
  out.pixels.resize(out.window.area() * 3);
  const unsigned n = static_cast<unsigned>(factor) * factor;
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      unsigned sum[3] = {0, 0, 0};
      for (int dy = 0; dy < factor; ++dy) {
        const int sy = oy * factor + dy;
        for (int dx = 0; dx < factor; ++dx) {
          const int sx = ox * factor + dx;
          if (sx < image.width() && sy < image.height()) {
            const Rgb c = image.at(sx, sy);
            sum[0] += c.r, sum[1] += c.g, sum[2] += c.b;
          } else {
            sum[0] += 255, sum[1] += 255, sum[2] += 255;
          }
        }
      }
      out.set(ox, oy,
              Rgb{static_cast<std::uint8_t>((sum[0] + n / 2) / n), static_cast<std::uint8_t>((sum[1] + n / 2) / n),
                  static_cast<std::uint8_t>((sum[2] + n / 2) / n)});
    }
  }
  return out;
}

namespace {

struct TiffCloser {
  void operator()(TIFF* t) const {
    if (t) TIFFClose(t);
  }
};

void write_directory(TIFF* tif, const ImageTile& image, int tile_size, bool reduced) {
  const int w = image.width();
  const int h = image.height();
  TIFFSetField(tif, TIFFTAG_IMAGEWIDTH, static_cast<uint32_t>(w));
  TIFFSetField(tif, TIFFTAG_IMAGELENGTH, static_cast<uint32_t>(h));
  TIFFSetField(tif, TIFFTAG_SAMPLESPERPIXEL, 3);
  TIFFSetField(tif, TIFFTAG_BITSPERSAMPLE, 8);
  TIFFSetField(tif, TIFFTAG_PHOTOMETRIC, PHOTOMETRIC_RGB);
  TIFFSetField(tif, TIFFTAG_PLANARCONFIG, PLANARCONFIG_CONTIG);
  TIFFSetField(tif, TIFFTAG_COMPRESSION, COMPRESSION_ADOBE_DEFLATE);
  TIFFSetField(tif, TIFFTAG_ORIENTATION, ORIENTATION_TOPLEFT);
  if (reduced) TIFFSetField(tif, TIFFTAG_SUBFILETYPE, FILETYPE_REDUCEDIMAGE);

  if (tile_size > 0) {
    TIFFSetField(tif, TIFFTAG_TILEWIDTH, static_cast<uint32_t>(tile_size));
    TIFFSetField(tif, TIFFTAG_TILELENGTH, static_cast<uint32_t>(tile_size));
    std::vector<std::uint8_t> buffer(static_cast<std::size_t>(tile_size) * tile_size * 3);
    for (int ty = 0; ty < h; ty += tile_size) {
      for (int tx = 0; tx < w; tx += tile_size) {
        std::fill(buffer.begin(), buffer.end(), 255);
        for (int r = 0; r < tile_size && ty + r < h; ++r) {
          const int n = std::min(tile_size, w - tx);
          const auto* src = image.pixels.data() + 3 * (static_cast<std::size_t>(ty + r) * w + tx);
          std::copy(src, src + 3 * n, buffer.data() + 3 * static_cast<std::size_t>(r) * tile_size);
        }
        if (TIFFWriteTile(tif, buffer.data(), static_cast<uint32_t>(tx), static_cast<uint32_t>(ty), 0, 0) < 0) {
          throw DataError("TIFF tile write failed");
        }
      }
    }
  } else {
    const uint32_t rows_per_strip = 64;
    TIFFSetField(tif, TIFFTAG_ROWSPERSTRIP, rows_per_strip);
    for (int r = 0; r < h; ++r) {
      auto* row = const_cast<std::uint8_t*>(image.pixels.data() + 3 * static_cast<std::size_t>(r) * w);
      if (TIFFWriteScanline(tif, row, static_cast<uint32_t>(r), 0) < 0) throw DataError("TIFF scanline write failed");
    }
  }
  if (!TIFFWriteDirectory(tif)) throw DataError("TIFF directory write failed");
}

}  // namespace

void write_tiff_rgb(const std::filesystem::path& path, const ImageTile& image, const TiffWriteOptions& options) {
  if (image.width() <= 0 || image.height() <= 0) throw DataError("cannot write empty TIFF " + path.string());
  if (options.tile_size < 0 || options.tile_size % 16 != 0) throw DataError("TIFF tile size must be a multiple of 16");
  std::unique_ptr<TIFF, TiffCloser> tif(TIFFOpen(path.c_str(), "w"));
  if (!tif) throw DataError("cannot create " + path.string());
  write_directory(tif.get(), image, options.tile_size, false);
  int previous = 1;
  for (int factor : options.pyramid_factors) {
    if (factor <= previous) throw DataError("pyramid factors must be ascending and > 1");
    previous = factor;
    write_directory(tif.get(), box_downsample(image, factor), options.tile_size, true);
  }
}

}  // namespace hail
