#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "hail/annotations.hpp"
#include "hail/pipeline.hpp"
#include "hail/synthetic.hpp"
#include "hail/types.hpp"

namespace hail::testing {

namespace fs = std::filesystem;

/// Fresh directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "hail");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

/// Backend that answers with the rasterized truth of the requested window.
class OracleBackend final : public SegmenterBackend {
 public:
  OracleBackend(AnnotationDocument truth, ClassMap class_map, int scale);

  std::string kind() const override { return "oracle"; }
  int n_classes() const override { return map_.n_classes(); }
  int scale() const override { return scale_; }
  MaskTile predict(const ImageTile& tile) const override;
  std::unique_ptr<SegmenterBackend> trained(const TrainingSet&, const TrainOptions&) const override;
  std::string serialize() const override { return {}; }

 private:
  AnnotationDocument truth_;
  ClassMap map_;
  int scale_;
};

/// Brute-force closed point-in-polygon: boundary points count as inside,
/// interior by the even-odd rule.
bool point_in_polygon(const std::vector<Vertex>& polygon, double x, double y);

/// Random mask of overlapping ellipses and rectangles of classes
/// 1..n_classes-1, with background shapes punched in to create holes.
MaskTile random_blob_mask(std::mt19937_64& rng, const Window& window, int n_classes);

struct ComponentCounts {
  int components = 0;  // 8-connected components of {value == c}
  int holes = 0;       // 4-connected components of {value != c} not touching the border
};

/// Random document with fuzzed layer/region/vertex counts, awkward names
/// and coordinates drawn from several magnitudes.
AnnotationDocument random_document(std::mt19937_64& rng);

/// Flood-fill oracle for one class.
ComponentCounts count_components(const MaskTile& mask, int c);

/// Classes 1..n bound to layers 1..n with distinct colours.
ClassMap identity_class_map(int n_foreground);

/// Sparse slide for the work-bound and equivalence runs: 2 clusters of up
/// to 10 ellipses, red on white. At 4096 px the diameters are 100-240 px and
/// tissue covers about 2% of the slide.
SyntheticSlideSpec sparse_slide_spec(std::uint64_t seed, int size = 4096);

/// Tissue fraction of a spec's painted shapes (exact count of painted pixels).
double painted_fraction(const SyntheticSlideSpec& spec);

}  // namespace hail::testing
