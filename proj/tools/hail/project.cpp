#include "project.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hail/slide_io.hpp"

namespace hail::cli {

ProjectConfig::ProjectConfig() {
  values_ = {
      {"tile_size", 500},
      {"overlap", 0.5},
      {"epochs", 2},
      {"augment_base", 10},
      {"augment_cap", 0},
      {"f1_threshold", 0.88},
      {"deepzoom", true},
      {"lowres_scale", 16},
      {"tissue_threshold", 224},
      {"tissue_fraction", 0.01},
      {"dilation", 1},
      {"margin", 16},
      {"window_radius", 1},
      {"png_compression", 1},
      {"workers", 1},
      {"seed", 0},
      {"backend", "centroid"},
      {"external_command", ""},
  };
}

ProjectConfig ProjectConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  nlohmann::json file;
  try {
    file = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad config " + path.string() + ": " + e.what());
  }
  if (!file.is_object()) throw DataError("config " + path.string() + " is not an object");
  ProjectConfig config;
  for (const auto& [key, value] : file.items()) {
    if (!config.values_.contains(key)) throw DataError("unknown config key '" + key + "' in " + path.string());
    const auto& current = config.values_[key];
    const bool ok = (current.is_boolean() && value.is_boolean()) || (current.is_string() && value.is_string()) ||
                    (current.is_number_integer() && value.is_number_integer()) ||
                    (current.is_number_float() && value.is_number());
    if (!ok) throw DataError("config key '" + key + "' has the wrong type in " + path.string());
    config.values_[key] = current.is_number_float() ? nlohmann::json(value.get<double>()) : value;
  }
  try {
    config.validate();
  } catch (const UsageError& e) {
    throw DataError(std::string(e.what()) + " in " + path.string());
  }
  return config;
}

void ProjectConfig::save(const fs::path& path) const {
  std::ofstream out(path);
  out << values_.dump(2) << "\n";
  if (!out) throw DataError("cannot write " + path.string());
}

void ProjectConfig::set(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) throw UsageError("--set expects key=value, got '" + std::string(assignment) + "'");
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  if (!values_.contains(key)) throw UsageError("unknown --set key '" + key + "'");
  // Work on a copy so a rejected value leaves the config untouched.
  ProjectConfig next = *this;
  auto& slot = next.values_[key];
  try {
    std::size_t used = 0;
    if (slot.is_boolean()) {
      if (text != "true" && text != "false") throw UsageError("");
      slot = text == "true";
    } else if (slot.is_number_unsigned() || slot.is_number_integer()) {
      if (key == "seed") {
        slot = std::stoull(text, &used);
      } else {
        slot = std::stoi(text, &used);
      }
      if (used != text.size()) throw UsageError("");
    } else if (slot.is_number_float()) {
      slot = std::stod(text, &used);
      if (used != text.size()) throw UsageError("");
    } else {
      slot = text;
    }
  } catch (const std::exception&) {
    throw UsageError("bad value '" + text + "' for --set " + key);
  }
  next.validate();
  *this = std::move(next);
}

void ProjectConfig::validate() const {
  auto fail = [](const std::string& what) { throw UsageError("invalid config: " + what); };
  if (tile_size() < 16) fail("tile_size must be >= 16");
  if (!(overlap() >= 0.0 && overlap() < 1.0)) fail("overlap must be in [0, 1)");
  if (epochs() < 1) fail("epochs must be >= 1");
  if (augment_base() < 1) fail("augment_base must be >= 1");
  if (augment_cap() < 0) fail("augment_cap must be >= 0");
  if (!(f1_threshold() >= 0.0 && f1_threshold() <= 1.0)) fail("f1_threshold must be in [0, 1]");
  if (lowres_scale() < 2) fail("lowres_scale must be >= 2");
  const int t = values_.at("tissue_threshold").get<int>();
  if (t < 0 || t > 256) fail("tissue_threshold must be in 0..256");
  if (values_.at("dilation").get<int>() < 0 || values_.at("margin").get<int>() < 0) fail("dilation and margin must be >= 0");
  if (window_radius() < 0) fail("window_radius must be >= 0");
  const int png = values_.at("png_compression").get<int>();
  if (png < 0 || png > 9) fail("png_compression must be in 0..9");
  if (workers() < 1) fail("workers must be >= 1");
  if (backend() != "centroid" && backend() != "external") fail("backend must be centroid or external");
}

TissueParams ProjectConfig::tissue() const {
  return {values_.at("tissue_threshold").get<int>(), values_.at("tissue_fraction").get<double>()};
}

HotspotParams ProjectConfig::hotspot() const {
  return {lowres_scale(), values_.at("dilation").get<int>(), values_.at("margin").get<int>()};
}

PredictOptions ProjectConfig::predict_options(PredictMode mode) const {
  PredictOptions o;
  o.mode = mode;
  o.tile_size = tile_size();
  o.overlap = overlap();
  o.tissue = tissue();
  o.hotspot = hotspot();
  o.workers = workers();
  return o;
}

TrainingBuildOptions ProjectConfig::training_options(int scale) const {
  TrainingBuildOptions o;
  o.tile_size = tile_size();
  o.overlap = overlap();
  o.scale = scale;
  o.augment_base = augment_base();
  o.augment_cap = augment_cap();
  o.seed = seed();
  o.tissue = tissue();
  o.png_compression = values_.at("png_compression").get<int>();
  o.workers = workers();
  return o;
}

void ProjectLayout::create() const {
  for (const auto& dir : {wsi(), regions(), training(), models(), predictions(), holdout(), reports()}) {
    fs::create_directories(dir);
  }
}

void ProjectLayout::check() const {
  if (!fs::is_directory(root)) throw DataError("no project at " + root.string() + " (run --option new first)");
  for (const auto& dir : {wsi(), regions(), training(), models(), predictions(), holdout(), reports()}) {
    if (!fs::is_directory(dir)) throw DataError("project layout broken: missing " + dir.string());
  }
  for (const auto& file : {class_map(), config()}) {
    if (!fs::is_regular_file(file)) throw DataError("project layout broken: missing " + file.string());
  }
}

int ProjectLayout::trained_iterations() const {
  std::vector<int> found;
  for (const auto& entry : fs::directory_iterator(models())) {
    const std::string name = entry.path().filename().string();
    if (!entry.is_directory() || name.empty() || !std::all_of(name.begin(), name.end(), ::isdigit)) {
      throw DataError("unexpected entry in MODELS/: " + name);
    }
    found.push_back(std::stoi(name));
  }
  std::sort(found.begin(), found.end());
  for (int i = 0; i < static_cast<int>(found.size()); ++i) {
    if (found[i] != i) throw DataError("MODELS/ iterations are not consecutive from 0 (missing " + std::to_string(i) + ")");
    if (!fs::is_directory(training(i))) throw DataError("MODELS/" + std::to_string(i) + " has no TRAINING/ counterpart");
  }
  return static_cast<int>(found.size());
}

std::vector<SlideEntry> list_slides(const fs::path& dir, const fs::path& xml_dir) {
  std::vector<SlideEntry> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || !is_slide_file(entry.path())) continue;
    SlideEntry s;
    s.name = entry.path().stem().string();
    s.slide = entry.path();
    const fs::path xml = xml_dir / (s.name + ".xml");
    if (fs::is_regular_file(xml)) s.xml = xml;
    out.push_back(std::move(s));
  }
  std::sort(out.begin(), out.end(), [](const SlideEntry& a, const SlideEntry& b) { return a.slide < b.slide; });
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i].name == out[i - 1].name) throw DataError("two slides share the stem '" + out[i].name + "' in " + dir.string());
  }
  return out;
}

ProjectLock::ProjectLock(fs::path path) : path_(std::move(path)) {
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST) {
      throw DataError("project is locked by another invocation (delete " + path_.string() + " if it is stale)");
    }
    throw DataError("cannot create lock " + path_.string() + ": " + std::strerror(errno));
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto written = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

ProjectLock::~ProjectLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

}  // namespace hail::cli
