#pragma once

#include <bitset>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "hail/types.hpp"

namespace hail {

using ClassPresence = std::bitset<256>;

/// Classes (value >= 1) that occur at least once in the mask.
ClassPresence class_presence(const MaskTile& mask);

/// Number of training blocks containing each class. Index 0 (background)
/// is never counted.
struct ClassCounts {
  std::vector<std::size_t> blocks_with_class;

  std::size_t operator[](int c) const { return blocks_with_class.at(static_cast<std::size_t>(c)); }
  /// Largest count over classes >= 1, or 0 when nothing is counted.
  std::size_t max_count() const;
};

ClassCounts tabulate_classes(std::span<const MaskTile> blocks, int n_classes);
ClassCounts tabulate_presence(std::span<const ClassPresence> blocks, int n_classes);

/// Copies to generate per block. Copy 0 is the block itself; copies
/// 1..n-1 are random augmentations.
struct AugmentationPlan {
  std::vector<int> copies;
  int base = 10;
  int cap = 40;
  std::uint64_t seed = 0;

  std::size_t total() const;
};

/// Blocks without foreground get `base` copies. A block whose rarest class
/// has count r gets round(base * max_count / r) copies, clamped to
/// [base, cap]. cap <= 0 selects the default of 4 * base.
AugmentationPlan plan_balanced_augmentation(const ClassCounts& counts, int base,
                                            std::span<const ClassPresence> blocks, int cap = 0,
                                            std::uint64_t seed = 0);

/// Class counts after applying the plan (each copy counts as a block).
ClassCounts augmented_counts(const AugmentationPlan& plan, std::span<const ClassPresence> blocks, int n_classes);

struct FlipHorizontal {
  double probability = 0.5;
};
struct FlipVertical {
  double probability = 0.5;
};
/// Hue rotation drawn uniformly from [-max_degrees, max_degrees] (HSL).
struct HueShift {
  double max_degrees = 10.0;
};
/// HSL lightness offset drawn uniformly from [-max_fraction, max_fraction]
/// of the full lightness range.
struct LightnessShift {
  double max_fraction = 0.08;
};
/// Regular grid x grid control nodes, each displaced uniformly within
/// +-max_displacement pixels per axis; the field is affine on each of the
/// two triangles of a grid cell.
struct PiecewiseAffine {
  int grid = 4;
  double max_displacement = 5.0;
};

using AugmentOp = std::variant<FlipHorizontal, FlipVertical, HueShift, LightnessShift, PiecewiseAffine>;

/// Flips, hue and lightness shifts and a piecewise affine warp with the
/// project defaults.
std::vector<AugmentOp> default_augment_ops();

/// Applies the ops in order. Geometric ops move image and mask together
/// (image bilinear with white fill, mask nearest with 0 fill); colour ops
/// touch the image only. Deterministic in `seed`. Throws DataError when the
/// image and mask sizes differ.
std::pair<ImageTile, MaskTile> apply_augmentation(const ImageTile& image, const MaskTile& mask,
                                                  std::span<const AugmentOp> ops, std::uint64_t seed);

/// Seed for one augmented copy; independent of scheduling.
std::uint64_t derive_seed(std::uint64_t global_seed, std::uint64_t block_id, std::uint64_t copy);

/// File stem `<slide>_<x>_<y>_<copy>`; images get `.img.png`, masks `.msk.png`.
std::string pair_stem(const std::string& slide, int x, int y, int copy);

/// Writes all copies of one block into `dir` and returns their stems.
std::vector<std::string> write_augmented_block(const std::filesystem::path& dir, const std::string& slide,
                                               const ImageTile& image, const MaskTile& mask, int copies,
                                               std::span<const AugmentOp> ops, std::uint64_t global_seed,
                                               std::uint64_t block_id, int png_compression);

}  // namespace hail
