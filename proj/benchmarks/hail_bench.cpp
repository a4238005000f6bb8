#include <benchmark/benchmark.h>

#include <filesystem>
#include <random>

#include "hail/image_io.hpp"
#include "hail/pipeline.hpp"
#include "hail/raster.hpp"
#include "hail/synthetic.hpp"
#include "hail/tiling.hpp"

namespace {

using namespace hail;
namespace fs = std::filesystem;

SyntheticSlideSpec ellipse_slide(int size, int shapes) {
  SparseSlideParams p;
  p.width = p.height = size;
  p.clusters = 1;
  p.shapes_per_cluster = shapes;
  p.cluster_radius = size / 4.0;
  p.min_diameter = size / 16.0;
  p.max_diameter = size / 6.0;
  return random_sparse_slide(p, 7);
}

void BM_Rasterize(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const auto spec = ellipse_slide(size, 8);
  const auto doc = synthetic_truth(spec);
  const auto map = synthetic_class_map(spec);
  for (auto _ : state) benchmark::DoNotOptimize(rasterize_window(doc, map, {0, 0, size, size, 1}));
  state.SetItemsProcessed(state.iterations() * size * size);
}
BENCHMARK(BM_Rasterize)->Arg(512)->Arg(2048);

void BM_MaskToAnnotations(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const auto spec = ellipse_slide(size, 8);
  const auto map = synthetic_class_map(spec);
  const auto mask = rasterize_window(synthetic_truth(spec), map, {0, 0, size, size, 1});
  for (auto _ : state) benchmark::DoNotOptimize(mask_to_annotations(mask, map));
  state.SetItemsProcessed(state.iterations() * size * size);
}
BENCHMARK(BM_MaskToAnnotations)->Arg(512)->Arg(2048);

void BM_Stitch(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const TileGrid grid = plan_tiles(size, size, 500, 0.5, 1);
  std::mt19937_64 rng(1);
  std::vector<TilePrediction> preds;
  for (const auto& w : grid.windows) {
    MaskTile m = MaskTile::zeros(w);
    for (auto& v : m.values) v = static_cast<std::uint8_t>(rng() % 3);
    preds.push_back({w, std::move(m)});
  }
  for (auto _ : state) {
    BandedStitcher s(grid, 3);
    for (const auto& p : preds) s.add(p);
    benchmark::DoNotOptimize(s.finish());
  }
  state.SetItemsProcessed(state.iterations() * size * size);
}
BENCHMARK(BM_Stitch)->Arg(1000)->Arg(2000);

class SlideFixture : public benchmark::Fixture {
 public:
  void SetUp(const benchmark::State&) override {
    if (!slide_path_.empty()) return;
    slide_path_ = fs::temp_directory_path() / "hail-bench-slide.tif";
    spec_ = ellipse_slide(2048, 10);
    TiffWriteOptions tiff;
    tiff.pyramid_factors = {16};
    generate_synthetic_slide(spec_, slide_path_, {}, tiff);
  }

 protected:
  static inline fs::path slide_path_;
  static inline SyntheticSlideSpec spec_;
};

BENCHMARK_DEFINE_F(SlideFixture, ReadRegion)(benchmark::State& state) {
  const SlideHandle slide = open_slide(slide_path_);
  const int scale = static_cast<int>(state.range(0));
  std::mt19937_64 rng(3);
  for (auto _ : state) {
    const int x = static_cast<int>(rng() % 1500), y = static_cast<int>(rng() % 1500);
    benchmark::DoNotOptimize(slide.read_region(x, y, 500 / scale, 500 / scale, scale));
  }
}
BENCHMARK_REGISTER_F(SlideFixture, ReadRegion)->Arg(1)->Arg(4)->Arg(16);

BENCHMARK_DEFINE_F(SlideFixture, PredictSlide)(benchmark::State& state) {
  const SlideHandle slide = open_slide(slide_path_);
  const ImageTile image = render_synthetic_slide(spec_);
  const ClassMap map = synthetic_class_map(spec_);
  TrainingSet set;
  set.add({image, rasterize_window(synthetic_truth(spec_), map, image.window)});
  const auto high = train_backend(CentroidBackend(map.n_classes(), 1), set, {});
  TrainingSet low_set;
  low_set.add({box_downsample(image, 16), rasterize_window(synthetic_truth(spec_), map, {0, 0, 128, 128, 16})});
  const auto low = train_backend(CentroidBackend(map.n_classes(), 16), low_set, {});
  PredictOptions opt;
  opt.mode = state.range(0) ? PredictMode::kDeepZoom : PredictMode::kFull;
  for (auto _ : state) benchmark::DoNotOptimize(predict_slide(slide, low.get(), *high, map, opt));
  state.SetLabel(state.range(0) ? "deepzoom" : "full");
}
BENCHMARK_REGISTER_F(SlideFixture, PredictSlide)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
