#include "cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <memory>
#include <optional>

#include "hail/analytics.hpp"
#include "hail/slide_io.hpp"
#include "project.hpp"

namespace hail::cli {
namespace {

struct Flags {
  std::string option;
  fs::path project;
  std::optional<bool> one_network;
  std::optional<fs::path> transfer;
  std::vector<std::string> sets;
};

std::unique_ptr<SegmenterBackend> fresh_backend(const ProjectConfig& config, int n_classes, int scale) {
  if (config.backend() == "external") {
    return std::make_unique<ExternalProcessBackend>(config.external_command(), n_classes, scale);
  }
  return std::make_unique<CentroidBackend>(n_classes, scale, config.window_radius());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

ProjectConfig load_config(const ProjectLayout& layout, const Flags& flags) {
  ProjectConfig config = ProjectConfig::load(layout.config());
  for (const auto& s : flags.sets) config.set(s);
  return config;
}

// Latest model directory of another project, used as a warm start.
fs::path latest_models(const fs::path& project) {
  const ProjectLayout source{project};
  if (!fs::is_directory(source.models())) throw DataError("--transfer source has no MODELS/: " + project.string());
  const int n = source.trained_iterations();
  if (n == 0) throw DataError("--transfer source has no trained iteration: " + project.string());
  return source.models(n - 1);
}

int do_new(const Flags& flags, std::ostream& out) {
  const ProjectLayout layout{flags.project};
  if (fs::exists(layout.root) && !(fs::is_directory(layout.root) && fs::is_empty(layout.root))) {
    throw DataError("project exists: " + layout.root.string());
  }
  ProjectConfig config;
  for (const auto& s : flags.sets) config.set(s);
  if (flags.one_network) config.set(*flags.one_network ? "deepzoom=false" : "deepzoom=true");
  std::optional<fs::path> transfer_from;
  if (flags.transfer) transfer_from = latest_models(*flags.transfer);

  layout.create();
  ProjectLock lock(layout.lock());
  config.save(layout.config());
  ClassMap default_map({ClassBinding{1, 1, Rgb{255, 0, 0}, "class 1"}});
  if (transfer_from) {
    const fs::path source_map = ProjectLayout{*flags.transfer}.class_map();
    if (fs::exists(source_map)) default_map = ClassMap::load(source_map);
    fs::create_directories(layout.transfer());
    fs::copy(*transfer_from, layout.transfer(), fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  }
  default_map.save(layout.class_map());

  out << "created project " << layout.root.string() << "\n";
  if (transfer_from) out << "warm-start models copied from " << transfer_from->string() << "\n";
  out << "edit classmap.json to bind annotation layers to classes, put slides in WSI/ with their XML in REGIONS/, "
         "then run --option train\n";
  return kOk;
}

std::unique_ptr<SegmenterBackend> warm_start(const ProjectLayout& layout, int iteration, const char* which,
                                             const ProjectConfig& config, int n_classes, int scale) {
  std::optional<fs::path> stem;
  if (iteration > 0) {
    stem = layout.models(iteration - 1) / which;
  } else if (fs::exists(layout.transfer() / (std::string(which) + ".json"))) {
    stem = layout.transfer() / which;
  }
  if (!stem || !fs::exists(stem->string() + ".json")) return fresh_backend(config, n_classes, scale);
  auto backend = load_backend(*stem);
  if (backend->n_classes() != n_classes) {
    throw DataError("class-space mismatch: warm-start model " + stem->string() + " has " +
                    std::to_string(backend->n_classes()) + " classes, classmap.json has " + std::to_string(n_classes));
  }
  if (backend->scale() != scale) throw DataError("warm-start model " + stem->string() + " has the wrong scale");
  return backend;
}

int do_train(const Flags& flags, std::ostream& out) {
  const ProjectLayout layout{flags.project};
  layout.check();
  ProjectLock lock(layout.lock());
  const ProjectConfig config = load_config(layout, flags);
  const ClassMap class_map = ClassMap::load(layout.class_map());
  const bool one_network = flags.one_network.value_or(!config.deepzoom());

  std::vector<AnnotatedSlide> slides;
  for (const auto& s : list_slides(layout.wsi(), layout.regions())) {
    if (s.xml) slides.push_back({s.name, s.slide, read_annotations(*s.xml)});
  }
  if (slides.empty()) throw DataError("empty training set: no slide in WSI/ has an XML of the same name in REGIONS/");

  const int iteration = layout.trained_iterations();
  const fs::path train_dir = layout.training(iteration);
  // Leftovers of an interrupted run; completed iterations are never touched.
  if (fs::exists(train_dir)) fs::remove_all(train_dir);

  const int n_classes = class_map.n_classes();
  TrainOptions train_options{config.epochs(), config.seed() + static_cast<std::uint64_t>(iteration)};

  auto train_one = [&](const char* which, int scale) {
    TrainingBuildOptions build = config.training_options(scale);
    build.seed = train_options.seed;
    const TrainingBuildReport report = build_training_set(slides, class_map, build, train_dir / which);
    out << which << ": " << report.blocks << " blocks, " << report.skipped << " blank skipped, " << report.pairs
        << " training pairs\n";
    const auto start = warm_start(layout, iteration, which, config, n_classes, scale);
    return train_backend(*start, TrainingSet::from_directory(train_dir / which), train_options);
  };

  const auto highres = train_one("highres", 1);
  std::unique_ptr<SegmenterBackend> lowres;
  if (!one_network) lowres = train_one("lowres", config.lowres_scale());

  // Models are written last so a failed run leaves no MODELS/<i>.
  const fs::path staging = layout.models() / ("." + std::to_string(iteration) + ".partial");
  fs::remove_all(staging);
  save_backend(*highres, staging / "highres");
  if (lowres) save_backend(*lowres, staging / "lowres");
  fs::rename(staging, layout.models(iteration));

  out << "trained iteration " << iteration << " on " << slides.size() << " annotated slide(s)\n";
  out << "add new slides to WSI/ and run --option predict\n";
  return kOk;
}

PredictMode mode_for(const Flags& flags, const ProjectConfig& config) {
  const bool one_network = flags.one_network.value_or(!config.deepzoom());
  return one_network ? PredictMode::kFull : PredictMode::kDeepZoom;
}

IterationModels load_models(const ProjectLayout& layout, int iteration, PredictMode mode) {
  IterationModels m;
  const fs::path dir = layout.models(iteration);
  m.highres = load_backend(dir / "highres");
  if (fs::exists(dir / "lowres.json")) {
    m.lowres = load_backend(dir / "lowres");
  } else if (mode == PredictMode::kDeepZoom) {
    throw DataError("iteration " + std::to_string(iteration) +
                    " has no low-resolution model; use --one_network true or retrain without it");
  }
  return m;
}

int do_predict(const Flags& flags, std::ostream& out) {
  const ProjectLayout layout{flags.project};
  layout.check();
  ProjectLock lock(layout.lock());
  const ProjectConfig config = load_config(layout, flags);
  const ClassMap class_map = ClassMap::load(layout.class_map());
  const int n = layout.trained_iterations();
  if (n == 0) throw DataError("no trained iteration: run --option train first");
  const PredictMode mode = mode_for(flags, config);
  const IterationModels models = load_models(layout, n - 1, mode);

  std::size_t done = 0;
  for (const auto& s : list_slides(layout.wsi(), layout.regions())) {
    if (s.xml) continue;
    const SlideHandle slide = open_slide(s.slide);
    const SlidePrediction p =
        predict_slide(slide, models.lowres.get(), *models.highres, class_map, config.predict_options(mode));
    write_annotations(layout.predictions() / (s.name + ".xml"), p.doc);
    out << s.name << ": " << p.stats.tiles_predicted << " of " << p.stats.grid_tiles << " tiles segmented ("
        << (mode == PredictMode::kDeepZoom ? "deepzoom" : "full") << ")\n";
    ++done;
  }
  if (done == 0) {
    out << "nothing to predict: every slide in WSI/ already has annotations in REGIONS/\n";
  } else {
    out << "predictions written to PREDICTIONS/; correct them in the viewer, move them to REGIONS/ and run "
           "--option train\n";
  }
  return kOk;
}

int do_validate(const Flags& flags, std::ostream& out) {
  const ProjectLayout layout{flags.project};
  layout.check();
  ProjectLock lock(layout.lock());
  const ProjectConfig config = load_config(layout, flags);
  const ClassMap class_map = ClassMap::load(layout.class_map());
  const int n = layout.trained_iterations();
  if (n == 0) throw DataError("no trained iteration: run --option train first");

  std::vector<HoldoutSlide> holdout;
  for (const auto& s : list_slides(layout.holdout(), layout.holdout())) {
    if (!s.xml) throw DataError("missing truth: HOLDOUT/" + s.name + ".xml");
    holdout.push_back({s.name, s.slide, read_annotations(*s.xml)});
  }
  if (holdout.empty()) throw DataError("HOLDOUT/ has no slides");

  const PredictMode mode = mode_for(flags, config);
  ValidationOptions options;
  options.predict = config.predict_options(mode);
  options.f1_threshold = config.f1_threshold();
  const ValidationReport report = validate_iterations(
      n, [&](int i) { return load_models(layout, i, PredictMode::kFull); }, holdout, class_map, options);

  write_text(layout.reports() / "validation.json", report_json(report));
  write_text(layout.reports() / "validation.txt", report_table(report));
  write_text(layout.reports() / "timings.json", timings_json(report));
  out << report_table(report);
  out << "reports written to REPORTS/\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Iterative human-in-the-loop segmentation of whole-slide images", "hail"};
  Flags flags;
  std::string one_network;
  std::string transfer;
  app.add_option("--option", flags.option, "new | train | predict (alias test) | validate")
      ->required()
      ->check(CLI::IsMember({"new", "train", "predict", "test", "validate"}));
  app.add_option("--project", flags.project, "project directory")->required();
  app.add_option("--one_network", one_network, "true: full-resolution network only")
      ->check(CLI::IsMember({"true", "false"}));
  app.add_option("--transfer", transfer, "project whose latest models seed training");
  app.add_option("--set", flags.sets, "config override key=value (repeatable)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "hail: " << e.what() << "\n" << "run with --help for usage\n";
    return kUsage;
  }
  if (!one_network.empty()) flags.one_network = one_network == "true";
  if (!transfer.empty()) flags.transfer = transfer;
  if (flags.option == "test") flags.option = "predict";

  try {
    if (flags.transfer && flags.option != "new") throw UsageError("--transfer is only valid with --option new");
    if (flags.option == "new") return do_new(flags, out);
    if (flags.option == "train") return do_train(flags, out);
    if (flags.option == "predict") return do_predict(flags, out);
    return do_validate(flags, out);
  } catch (const UsageError& e) {
    err << "hail: " << e.what() << "\n";
    return kUsage;
  } catch (const BackendError& e) {
    err << "hail: backend error: " << e.what() << "\n";
    return kBackend;
  } catch (const Error& e) {
    err << "hail: " << e.what() << "\n";
    return kData;
  } catch (const fs::filesystem_error& e) {
    err << "hail: " << e.what() << "\n";
    return kData;
  }
}

}  // namespace hail::cli
