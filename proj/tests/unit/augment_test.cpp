#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hail/augment.hpp"
#include "hail/error.hpp"
#include "hail/image_io.hpp"
#include "support.hpp"

namespace hail {
namespace {

ClassPresence presence_of(std::initializer_list<int> classes) {
  ClassPresence p;
  for (int c : classes) p.set(c);
  return p;
}

MaskTile disk_mask(int size, double cx, double cy, double r) {
  MaskTile m = MaskTile::zeros({0, 0, size, size, 1});
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) m.at(x, y) = std::hypot(x - cx, y - cy) <= r;
  }
  return m;
}

ImageTile gradient_image(int size) {
  ImageTile img = ImageTile::filled({0, 0, size, size, 1}, {0, 0, 0});
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      img.set(x, y, {static_cast<std::uint8_t>(x * 3), static_cast<std::uint8_t>(y * 3), 128});
    }
  }
  return img;
}

TEST(Tabulate, Example) {
  std::vector<MaskTile> blocks;
  for (int i = 0; i < 100; ++i) {
    MaskTile m = MaskTile::zeros({0, 0, 4, 4, 1});
    if (i < 10) m.at(1, 1) = 1;
    blocks.push_back(m);
  }
  const auto counts = tabulate_classes(blocks, 2);
  EXPECT_EQ(counts[0], 0u);
  EXPECT_EQ(counts[1], 10u);
  EXPECT_EQ(counts.max_count(), 10u);
}

TEST(Tabulate, OutOfSpace) {
  const std::vector<ClassPresence> blocks{presence_of({3})};
  EXPECT_THROW(tabulate_presence(blocks, 3), DataError);
}

TEST(Plan, Examples) {
  std::vector<ClassPresence> blocks;
  for (int i = 0; i < 100; ++i) blocks.push_back(presence_of({1}));
  for (int i = 0; i < 10; ++i) blocks.push_back(presence_of({2}));
  blocks.push_back(presence_of({}));
  blocks.push_back(presence_of({1, 2}));
  const auto counts = tabulate_presence(blocks, 3);
  ASSERT_EQ(counts[1], 101u);
  ASSERT_EQ(counts[2], 11u);

  auto plan = plan_balanced_augmentation(counts, 10, blocks, 40);
  EXPECT_EQ(plan.copies[0], 10);
  EXPECT_EQ(plan.copies[100], 40);  // round(10 * 101 / 11) = 92, capped
  EXPECT_EQ(plan.copies[110], 10);
  EXPECT_EQ(plan.copies[111], 40);  // rarest class decides

  plan = plan_balanced_augmentation(counts, 10, blocks, 1000);
  EXPECT_EQ(plan.copies[100], 92);

  plan = plan_balanced_augmentation(counts, 1, blocks);
  EXPECT_EQ(plan.cap, 4);
  EXPECT_EQ(plan.copies[0], 1);
  EXPECT_EQ(plan.copies[100], 4);

  EXPECT_THROW(plan_balanced_augmentation(counts, 0, blocks), DataError);
}

TEST(Plan, BalancingNeverWidensTheGap) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int n_classes = 2 + static_cast<int>(rng() % 4);
    std::vector<ClassPresence> blocks(20 + rng() % 200);
    for (auto& b : blocks) {
      for (int c = 1; c < n_classes; ++c) {
        if (rng() % (2 * c + 1) == 0) b.set(c);
      }
    }
    const auto before = tabulate_presence(blocks, n_classes);
    const auto plan = plan_balanced_augmentation(before, 10, blocks, 1000);
    const auto after = augmented_counts(plan, blocks, n_classes);
    std::size_t lo_b = SIZE_MAX, hi_b = 0;
    double lo_a = 1e300, hi_a = 0;
    for (int c = 1; c < n_classes; ++c) {
      if (before[c] == 0) continue;
      lo_b = std::min(lo_b, before[c]);
      hi_b = std::max(hi_b, before[c]);
      lo_a = std::min(lo_a, double(after[c]));
      hi_a = std::max(hi_a, double(after[c]));
    }
    if (hi_b == 0) continue;
    // The ratio of most to least represented class shrinks (or stays).
    ASSERT_LE(hi_a / lo_a, double(hi_b) / double(lo_b) + 1e-9);
  }
}

TEST(Augment, DoubleFlipIsIdentity) {
  const ImageTile img = gradient_image(33);
  const MaskTile mask = disk_mask(33, 10, 12, 6);
  const std::vector<AugmentOp> flips{FlipHorizontal{1.0}, FlipVertical{1.0}};
  const auto [a1, m1] = apply_augmentation(img, mask, flips, 5);
  EXPECT_NE(a1.pixels, img.pixels);
  EXPECT_EQ(m1.at(32 - 10, 32 - 12), 1);
  const auto [a2, m2] = apply_augmentation(a1, m1, flips, 9);
  EXPECT_EQ(a2.pixels, img.pixels);
  EXPECT_EQ(m2.values, mask.values);
}

TEST(Augment, ZeroColourShiftIsIdentity) {
  const ImageTile img = gradient_image(40);
  const MaskTile mask = disk_mask(40, 20, 20, 8);
  const std::vector<AugmentOp> ops{HueShift{0.0}, LightnessShift{0.0}};
  const auto [a, m] = apply_augmentation(img, mask, ops, 1);
  EXPECT_EQ(a.pixels, img.pixels);
  EXPECT_EQ(m.values, mask.values);
}

TEST(Augment, ColourShiftKeepsMask) {
  const ImageTile img = gradient_image(40);
  const MaskTile mask = disk_mask(40, 20, 20, 8);
  const std::vector<AugmentOp> ops{HueShift{30.0}, LightnessShift{0.2}};
  const auto [a, m] = apply_augmentation(img, mask, ops, 1);
  EXPECT_NE(a.pixels, img.pixels);
  EXPECT_EQ(m.values, mask.values);
}

TEST(Augment, WarpMovesStructuresLittle) {
  // Default block size and warp; the disk spans about a control cell.
  const int size = 500;
  const MaskTile mask = disk_mask(size, 250, 250, 80);
  const ImageTile img = ImageTile::filled(mask.window, {255, 255, 255});
  std::size_t n0 = 0;
  for (auto v : mask.values) n0 += v;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const std::vector<AugmentOp> ops{PiecewiseAffine{4, 5.0}};
    const auto [a, m] = apply_augmentation(img, mask, ops, seed);
    double sx = 0, sy = 0;
    std::size_t n = 0;
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        if (m.at(x, y) == 0) continue;
        ASSERT_EQ(m.at(x, y), 1);
        sx += x;
        sy += y;
        ++n;
      }
    }
    ASSERT_GT(n, 0u);
    EXPECT_LE(std::hypot(sx / n - 250, sy / n - 250), 5.0 + 0.5);
    EXPECT_LE(std::abs(double(n) - double(n0)) / double(n0), 0.15);
  }
}

TEST(Augment, LabelsStayInClassSpace) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Window w{0, 0, 64, 48, 1};
    const MaskTile mask = testing::random_blob_mask(rng, w, 4);
    const ImageTile img = gradient_image(64);
    ImageTile cropped = ImageTile::filled(w, {0, 0, 0});
    for (int y = 0; y < 48; ++y) {
      for (int x = 0; x < 64; ++x) cropped.set(x, y, img.at(x, y));
    }
    const auto ops = default_augment_ops();
    const auto [a, m] = apply_augmentation(cropped, mask, ops, trial);
    ASSERT_EQ(a.window, w);
    ASSERT_EQ(m.window, w);
    const auto before = class_presence(mask);
    const auto after = class_presence(m);
    ASSERT_TRUE((after & ~before).none());
  }
}

TEST(Augment, Deterministic) {
  const ImageTile img = gradient_image(50);
  const MaskTile mask = disk_mask(50, 25, 20, 9);
  const auto ops = default_augment_ops();
  const auto [a1, m1] = apply_augmentation(img, mask, ops, 77);
  const auto [a2, m2] = apply_augmentation(img, mask, ops, 77);
  EXPECT_EQ(a1.pixels, a2.pixels);
  EXPECT_EQ(m1.values, m2.values);
  const auto [a3, m3] = apply_augmentation(img, mask, ops, 78);
  EXPECT_NE(a1.pixels, a3.pixels);
  EXPECT_NE(derive_seed(1, 2, 3), derive_seed(1, 3, 2));
  EXPECT_EQ(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
}

TEST(Augment, SizeMismatch) {
  const ImageTile img = gradient_image(10);
  const MaskTile mask = MaskTile::zeros({0, 0, 9, 10, 1});
  EXPECT_THROW(apply_augmentation(img, mask, default_augment_ops(), 0), DataError);
}

TEST(Augment, WrittenBlock) {
  testing::TempDir dir("augment");
  EXPECT_EQ(pair_stem("slide-a", 250, 0, 3), "slide-a_250_0_3");
  const ImageTile img = gradient_image(30);
  const MaskTile mask = disk_mask(30, 15, 15, 5);
  const auto ops = default_augment_ops();
  const auto stems = write_augmented_block(dir.path(), "s", img, mask, 3, ops, 4, 0, 1);
  ASSERT_EQ(stems.size(), 3u);
  EXPECT_EQ(stems[0], "s_0_0_0");
  // Copy 0 is the block itself.
  EXPECT_EQ(read_png_rgb(dir / "s_0_0_0.img.png").pixels, img.pixels);
  EXPECT_EQ(read_png_mask(dir / "s_0_0_0.msk.png").values, mask.values);
  for (const auto& s : stems) {
    EXPECT_TRUE(std::filesystem::exists(dir / (s + ".img.png")));
    EXPECT_TRUE(std::filesystem::exists(dir / (s + ".msk.png")));
  }
}

}  // namespace
}  // namespace hail
