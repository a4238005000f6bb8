#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include "hail/types.hpp"

namespace hail {

namespace detail {
class SlideSource;
}

/// Read-only access to a (possibly multi-level) slide image. Copies share
/// the underlying decoder; read_region may be called concurrently.
class SlideHandle {
 public:
  SlideHandle() = default;

  const std::filesystem::path& path() const { return path_; }
  int width() const { return width_; }
  int height() const { return height_; }
  /// Linear downsample factors of the stored levels, ascending, first is 1.
  const std::vector<int>& level_factors() const { return level_factors_; }

  /// True when `scale` is stored or reachable by integer box filtering
  /// from a finer stored level.
  bool supports_scale(int scale) const;

  /// Reads a width x height tile at `scale` whose top-left block starts at
  /// base-level (x, y). Area outside the slide is white.
  ImageTile read_region(int x, int y, int width, int height, int scale) const;
  ImageTile read_region(const Window& w) const { return read_region(w.x, w.y, w.width, w.height, w.scale); }

  /// Number of levels in the whole slide at `scale`: ceil(dim / scale).
  int width_at(int scale) const { return (width_ + scale - 1) / scale; }
  int height_at(int scale) const { return (height_ + scale - 1) / scale; }

 private:
  friend SlideHandle open_slide(const std::filesystem::path&);

  std::filesystem::path path_;
  int width_ = 0;
  int height_ = 0;
  std::vector<int> level_factors_;
  std::shared_ptr<const detail::SlideSource> source_;
};

/// Opens a flat or pyramidal TIFF, or a PNG. Throws DataError for
/// unreadable, unsupported or zero-area files.
SlideHandle open_slide(const std::filesystem::path& path);

/// True for file extensions open_slide understands (.tif, .tiff, .png).
bool is_slide_file(const std::filesystem::path& path);

}  // namespace hail
