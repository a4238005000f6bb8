#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hail/analytics.hpp"
#include "hail/annotations.hpp"
#include "hail/error.hpp"
#include "hail/pipeline.hpp"

namespace hail::cli {

namespace fs = std::filesystem;

/// Thrown for bad flags or --set keys; maps to exit status 1.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Hyperparameters stored in config.json. Keys not present in a file keep
/// their defaults, unknown keys are rejected.
class ProjectConfig {
 public:
  ProjectConfig();

  static ProjectConfig load(const fs::path& path);
  void save(const fs::path& path) const;

  /// Applies `key=value`, parsing the value as the key's type.
  void set(std::string_view assignment);

  int tile_size() const { return values_.at("tile_size").get<int>(); }
  double overlap() const { return values_.at("overlap").get<double>(); }
  int epochs() const { return values_.at("epochs").get<int>(); }
  int augment_base() const { return values_.at("augment_base").get<int>(); }
  int augment_cap() const { return values_.at("augment_cap").get<int>(); }
  double f1_threshold() const { return values_.at("f1_threshold").get<double>(); }
  bool deepzoom() const { return values_.at("deepzoom").get<bool>(); }
  int lowres_scale() const { return values_.at("lowres_scale").get<int>(); }
  int workers() const { return values_.at("workers").get<int>(); }
  std::uint64_t seed() const { return values_.at("seed").get<std::uint64_t>(); }
  std::string backend() const { return values_.at("backend").get<std::string>(); }
  std::string external_command() const { return values_.at("external_command").get<std::string>(); }

  TissueParams tissue() const;
  HotspotParams hotspot() const;
  PredictOptions predict_options(PredictMode mode) const;
  TrainingBuildOptions training_options(int scale) const;
  int window_radius() const { return values_.at("window_radius").get<int>(); }

  const nlohmann::json& values() const { return values_; }

 private:
  void validate() const;
  nlohmann::json values_;
};

/// Fixed directory layout of a project.
struct ProjectLayout {
  fs::path root;

  fs::path wsi() const { return root / "WSI"; }
  fs::path regions() const { return root / "REGIONS"; }
  fs::path training() const { return root / "TRAINING"; }
  fs::path training(int iteration) const { return training() / std::to_string(iteration); }
  fs::path models() const { return root / "MODELS"; }
  fs::path models(int iteration) const { return models() / std::to_string(iteration); }
  fs::path predictions() const { return root / "PREDICTIONS"; }
  fs::path holdout() const { return root / "HOLDOUT"; }
  fs::path reports() const { return root / "REPORTS"; }
  fs::path transfer() const { return root / "TRANSFER"; }
  fs::path class_map() const { return root / "classmap.json"; }
  fs::path config() const { return root / "config.json"; }
  fs::path lock() const { return root / ".hail.lock"; }

  void create() const;
  /// Throws DataError naming the first missing piece of the layout.
  void check() const;

  /// Number of model iterations; they must be 0..n-1 with matching
  /// TRAINING directories.
  int trained_iterations() const;
};

/// Slides in `dir` (sorted by file name) and the XML with the same stem in
/// `xml_dir`, if any.
struct SlideEntry {
  std::string name;
  fs::path slide;
  std::optional<fs::path> xml;
};
std::vector<SlideEntry> list_slides(const fs::path& dir, const fs::path& xml_dir);

/// Exclusive ownership of a project for one invocation (O_EXCL lock file).
class ProjectLock {
 public:
  explicit ProjectLock(fs::path path);
  ~ProjectLock();
  ProjectLock(const ProjectLock&) = delete;
  ProjectLock& operator=(const ProjectLock&) = delete;

 private:
  fs::path path_;
};

}  // namespace hail::cli
