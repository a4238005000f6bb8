#pragma once

#include <filesystem>
#include <vector>

#include "hail/types.hpp"

namespace hail {

/// zlib compression levels accepted by the PNG writers (0-9).
inline constexpr int kDefaultPngCompression = 6;

/// Writes an 8-bit RGB PNG. Output is byte-deterministic for equal input.
void write_png_rgb(const std::filesystem::path& path, const ImageTile& image,
                   int compression = kDefaultPngCompression);

/// Writes an 8-bit single-channel PNG whose pixel values are class indices.
void write_png_mask(const std::filesystem::path& path, const MaskTile& mask,
                    int compression = kDefaultPngCompression);

/// Reads any 8-bit PNG as RGB (grey is replicated, alpha dropped). The
/// returned tile has origin (0,0) and scale 1.
ImageTile read_png_rgb(const std::filesystem::path& path);

/// Reads an 8-bit single-channel PNG as class indices.
MaskTile read_png_mask(const std::filesystem::path& path);

struct TiffWriteOptions {
  int tile_size = 256;  // multiple of 16; 0 writes strips
  /// Extra pyramid levels (linear factors > 1, ascending). Each level is the
  /// box-filter downsample of the base image.
  std::vector<int> pyramid_factors;
};

/// Writes an 8-bit RGB TIFF (Deflate, tiled by default), optionally with
/// reduced-resolution levels as further directories.
void write_tiff_rgb(const std::filesystem::path& path, const ImageTile& image,
                    const TiffWriteOptions& options = {});

/// Integer box-filter downsample (area mean, round half up). Partial blocks
/// at the right/bottom edge average in white for the missing pixels.
ImageTile box_downsample(const ImageTile& image, int factor);

}  // namespace hail
