#include <algorithm>
#include <fstream>

#include "hail/error.hpp"
#include "hail/parallel.hpp"
#include "hail/pipeline.hpp"

namespace hail {

namespace fs = std::filesystem;

TrainingBuildReport build_training_set(std::span<const AnnotatedSlide> slides, const ClassMap& class_map,
                                       const TrainingBuildOptions& options, const fs::path& out_dir) {
  if (slides.empty()) throw DataError("empty training set: no annotated slides");
  const int n_classes = class_map.n_classes();

  struct Block {
    std::size_t slide;
    Window window;
    ClassPresence presence;
  };
  std::vector<SlideHandle> handles;
  handles.reserve(slides.size());
  for (const auto& s : slides) handles.push_back(open_slide(s.slide));

  // Pass 1: which blocks to keep and which classes they contain.
  TrainingBuildReport report;
  std::vector<Block> blocks;
  for (std::size_t s = 0; s < slides.size(); ++s) {
    const TileGrid grid =
        plan_tiles(handles[s].width(), handles[s].height(), options.tile_size, options.overlap, options.scale);
    const std::size_t n = grid.windows.size();
    std::vector<ClassPresence> presence(n);
    std::vector<char> keep(n, 1);
    parallel_for(n, options.workers, [&](std::size_t i) {
      const MaskTile mask = rasterize_window(slides[s].doc, class_map, grid.windows[i]);
      presence[i] = class_presence(mask);
      if (options.skip_blank && presence[i].none()) {
        keep[i] = tissue_mask(handles[s].read_region(grid.windows[i]), options.tissue).keep;
      }
    });
    report.blocks += n;
    for (std::size_t i = 0; i < n; ++i) {
      if (keep[i]) {
        blocks.push_back({s, grid.windows[i], presence[i]});
      } else {
        ++report.skipped;
      }
    }
  }
  if (blocks.empty()) throw DataError("empty training set: every block is blank");

  std::vector<ClassPresence> presences;
  presences.reserve(blocks.size());
  for (const auto& b : blocks) presences.push_back(b.presence);
  report.counts = tabulate_presence(presences, n_classes);
  const AugmentationPlan plan =
      plan_balanced_augmentation(report.counts, options.augment_base, presences, options.augment_cap, options.seed);
  report.augmented = augmented_counts(plan, presences, n_classes);
  report.pairs = plan.total();

  // Pass 2: read, augment and write. Block ids are global, so output does
  // not depend on the worker count.
  fs::create_directories(out_dir);
  parallel_for(blocks.size(), options.workers, [&](std::size_t b) {
    const Block& block = blocks[b];
    const ImageTile image = handles[block.slide].read_region(block.window);
    const MaskTile mask = rasterize_window(slides[block.slide].doc, class_map, block.window);
    write_augmented_block(out_dir, slides[block.slide].name, image, mask, plan.copies[b], options.ops, options.seed,
                          b, options.png_compression);
  });

  // Plan summary for audit.
  std::ofstream manifest(out_dir / "plan.txt");
  manifest << "blocks " << report.blocks << "\nskipped " << report.skipped << "\npairs " << report.pairs << "\n";
  for (int c = 1; c < n_classes; ++c) {
    manifest << "class " << c << " blocks " << report.counts[c] << " augmented " << report.augmented[c] << "\n";
  }
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    manifest << slides[blocks[b].slide].name << " " << blocks[b].window.x << " " << blocks[b].window.y << " copies "
             << plan.copies[b] << "\n";
  }
  if (!manifest) throw DataError("cannot write " + (out_dir / "plan.txt").string());
  return report;
}

}  // namespace hail
