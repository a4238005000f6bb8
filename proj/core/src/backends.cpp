#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <bit>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hail/error.hpp"
#include "hail/image_io.hpp"
#include "hail/parallel.hpp"
#include "hail/pipeline.hpp"

namespace hail {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- TrainingSet

TrainingSet TrainingSet::from_directory(const fs::path& dir) {
  TrainingSet set;
  if (!fs::is_directory(dir)) return set;
  std::vector<fs::path> images;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > 8 && name.ends_with(".img.png")) images.push_back(entry.path());
  }
  std::sort(images.begin(), images.end());
  for (const auto& image : images) {
    const std::string name = image.filename().string();
    fs::path mask = image.parent_path() / (name.substr(0, name.size() - 8) + ".msk.png");
    if (!fs::exists(mask)) throw DataError("training image without mask: " + image.string());
    set.add_files(image, std::move(mask));
  }
  return set;
}

void TrainingSet::add_files(fs::path image, fs::path mask) { files_.emplace_back(std::move(image), std::move(mask)); }

void TrainingSet::for_each(const std::function<void(const ImageTile&, const MaskTile&)>& fn) const {
  for (const auto& pair : memory_) fn(pair.image, pair.mask);
  for (const auto& [image_path, mask_path] : files_) {
    const ImageTile image = read_png_rgb(image_path);
    const MaskTile mask = read_png_mask(mask_path);
    fn(image, mask);
  }
}

// ---------------------------------------------------------------- SegmenterBackend

void SegmenterBackend::check_scale(const ImageTile& tile) const {
  if (tile.window.scale != scale()) {
    throw BackendError("backend scale mismatch: " + kind() + " backend runs at scale " + std::to_string(scale()) +
                       ", tile is at scale " + std::to_string(tile.window.scale));
  }
}

std::vector<MaskTile> SegmenterBackend::predict_batch(std::span<const ImageTile> tiles, int workers) const {
  std::vector<MaskTile> out(tiles.size());
  parallel_for(tiles.size(), workers, [&](std::size_t i) { out[i] = predict(tiles[i]); });
  return out;
}

std::unique_ptr<SegmenterBackend> train_backend(const SegmenterBackend& backend, const TrainingSet& data,
                                                const TrainOptions& options) {
  if (data.empty()) throw DataError("empty training set");
  return backend.trained(data, options);
}

// ---------------------------------------------------------------- CentroidBackend

namespace {

constexpr char kCentroidMagic[8] = {'H', 'A', 'I', 'L', 'C', 'E', 'N', 'T'};
constexpr std::uint32_t kCentroidVersion = 1;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(std::string_view in, std::size_t& pos) {
  if (pos + 8 > in.size()) throw DataError("truncated backend state");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += 8;
  return v;
}

}  // namespace

CentroidBackend::CentroidBackend(int n_classes, int scale, int window_radius)
    : n_classes_(n_classes),
      scale_(scale),
      radius_(window_radius),
      centroids_(static_cast<std::size_t>(std::max(n_classes, 0))),
      priors_(static_cast<std::size_t>(std::max(n_classes, 0)), 0.0),
      seen_(static_cast<std::size_t>(std::max(n_classes, 0)), false) {
  if (n_classes < 2 || n_classes > 256) throw DataError("centroid backend needs 2..256 classes");
  if (scale < 1) throw DataError("backend scale must be >= 1");
  if (window_radius < 0) throw DataError("window radius must be >= 0");
}

bool CentroidBackend::is_trained() const { return std::find(seen_.begin(), seen_.end(), true) != seen_.end(); }

MaskTile CentroidBackend::predict(const ImageTile& tile) const {
  check_scale(tile);
  if (!is_trained()) throw BackendError("centroid backend is untrained");
  const int w = tile.width();
  const int h = tile.height();
  MaskTile out = MaskTile::zeros(tile.window);
  if (w <= 0 || h <= 0) return out;

  // Summed-area table per channel.
  const std::size_t stride = static_cast<std::size_t>(w) + 1;
  std::vector<std::uint64_t> sat(stride * (static_cast<std::size_t>(h) + 1) * 3, 0);
  auto at = [&](int x, int y, int ch) -> std::uint64_t& { return sat[(static_cast<std::size_t>(y) * stride + x) * 3 + ch]; };
  for (int y = 0; y < h; ++y) {
    std::uint64_t run[3] = {0, 0, 0};
    for (int x = 0; x < w; ++x) {
      const std::size_t p = 3 * (static_cast<std::size_t>(y) * w + x);
      for (int ch = 0; ch < 3; ++ch) {
        run[ch] += tile.pixels[p + ch];
        at(x + 1, y + 1, ch) = at(x + 1, y, ch) + run[ch];
      }
    }
  }

  std::vector<int> classes;
  for (int c = 0; c < n_classes_; ++c) {
    if (seen_[static_cast<std::size_t>(c)]) classes.push_back(c);
  }

  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - radius_);
    const int y1 = std::min(h, y + radius_ + 1);
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x - radius_);
      const int x1 = std::min(w, x + radius_ + 1);
      const double n = static_cast<double>((y1 - y0) * (x1 - x0));
      double mean[3];
      for (int ch = 0; ch < 3; ++ch) {
        const std::uint64_t s = at(x1, y1, ch) + at(x0, y0, ch) - at(x0, y1, ch) - at(x1, y0, ch);
        mean[ch] = static_cast<double>(s) / n;
      }
      int best = -1;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c : classes) {
        const auto& m = centroids_[static_cast<std::size_t>(c)];
        const double d = (mean[0] - m[0]) * (mean[0] - m[0]) + (mean[1] - m[1]) * (mean[1] - m[1]) +
                         (mean[2] - m[2]) * (mean[2] - m[2]);
        if (d < best_d || (d == best_d && priors_[static_cast<std::size_t>(c)] > priors_[static_cast<std::size_t>(best)])) {
          best = c;
          best_d = d;
        }
      }
      out.at(x, y) = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

std::unique_ptr<SegmenterBackend> CentroidBackend::trained(const TrainingSet& data, const TrainOptions&) const {
  if (data.empty()) throw DataError("empty training set");
  std::vector<std::array<std::uint64_t, 3>> sums(static_cast<std::size_t>(n_classes_), {0, 0, 0});
  std::vector<std::uint64_t> counts(static_cast<std::size_t>(n_classes_), 0);

  data.for_each([&](const ImageTile& image, const MaskTile& mask) {
    if (image.width() != mask.width() || image.height() != mask.height()) {
      throw DataError("training image and mask sizes differ");
    }
    for (std::size_t i = 0; i < mask.values.size(); ++i) {
      const int c = mask.values[i];
      if (c >= n_classes_) {
        throw DataError("class-space mismatch: mask value " + std::to_string(c) + " but backend has " +
                        std::to_string(n_classes_) + " classes");
      }
      auto& s = sums[static_cast<std::size_t>(c)];
      s[0] += image.pixels[3 * i];
      s[1] += image.pixels[3 * i + 1];
      s[2] += image.pixels[3 * i + 2];
      ++counts[static_cast<std::size_t>(c)];
    }
  });

  std::uint64_t total = 0;
  std::uint64_t foreground = 0;
  for (int c = 0; c < n_classes_; ++c) {
    total += counts[static_cast<std::size_t>(c)];
    if (c > 0) foreground += counts[static_cast<std::size_t>(c)];
  }
  if (foreground == 0) throw DataError("class-space mismatch: training set has no foreground pixels");

  auto next = std::make_unique<CentroidBackend>(n_classes_, scale_, radius_);
  for (int c = 0; c < n_classes_; ++c) {
    const auto k = static_cast<std::size_t>(c);
    if (counts[k] == 0) continue;
    next->seen_[k] = true;
    for (int ch = 0; ch < 3; ++ch) next->centroids_[k][ch] = static_cast<double>(sums[k][ch]) / counts[k];
    next->priors_[k] = static_cast<double>(counts[k]) / static_cast<double>(total);
  }
  return next;
}

std::string CentroidBackend::serialize() const {
  std::string out(kCentroidMagic, sizeof kCentroidMagic);
  put_u64(out, kCentroidVersion);
  put_u64(out, static_cast<std::uint64_t>(n_classes_));
  put_u64(out, static_cast<std::uint64_t>(scale_));
  put_u64(out, static_cast<std::uint64_t>(radius_));
  for (int c = 0; c < n_classes_; ++c) {
    const auto k = static_cast<std::size_t>(c);
    put_u64(out, seen_[k] ? 1 : 0);
    for (double v : centroids_[k]) put_u64(out, std::bit_cast<std::uint64_t>(v));
    put_u64(out, std::bit_cast<std::uint64_t>(priors_[k]));
  }
  return out;
}

std::unique_ptr<CentroidBackend> CentroidBackend::deserialize(std::string_view blob) {
  if (blob.size() < sizeof kCentroidMagic || blob.substr(0, sizeof kCentroidMagic) != std::string_view(kCentroidMagic, 8)) {
    throw DataError("not a centroid backend state");
  }
  std::size_t pos = sizeof kCentroidMagic;
  if (get_u64(blob, pos) != kCentroidVersion) throw DataError("unsupported centroid backend version");
  const auto n = static_cast<int>(get_u64(blob, pos));
  const auto scale = static_cast<int>(get_u64(blob, pos));
  const auto radius = static_cast<int>(get_u64(blob, pos));
  auto backend = std::make_unique<CentroidBackend>(n, scale, radius);
  for (int c = 0; c < n; ++c) {
    const auto k = static_cast<std::size_t>(c);
    backend->seen_[k] = get_u64(blob, pos) != 0;
    for (double& v : backend->centroids_[k]) v = std::bit_cast<double>(get_u64(blob, pos));
    backend->priors_[k] = std::bit_cast<double>(get_u64(blob, pos));
  }
  if (pos != blob.size()) throw DataError("trailing bytes in centroid backend state");
  return backend;
}

// ---------------------------------------------------------------- ExternalProcessBackend

ExternalProcessBackend::ExternalProcessBackend(std::string command, int n_classes, int scale, fs::path work_dir)
    : command_(std::move(command)), n_classes_(n_classes), scale_(scale), work_dir_(std::move(work_dir)) {
  if (command_.empty()) throw DataError("external backend needs a command");
  if (n_classes < 2 || n_classes > 256) throw DataError("external backend needs 2..256 classes");
  if (scale < 1) throw DataError("backend scale must be >= 1");
  if (work_dir_.empty()) work_dir_ = fs::temp_directory_path() / "hail-external";
}

MaskTile ExternalProcessBackend::predict(const ImageTile& tile) const {
  return std::move(predict_batch(std::span<const ImageTile>(&tile, 1), 1).front());
}

namespace {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

}  // namespace

std::vector<MaskTile> ExternalProcessBackend::predict_batch(std::span<const ImageTile> tiles, int) const {
  for (const auto& t : tiles) check_scale(t);
  if (tiles.empty()) return {};

  static std::atomic<std::uint64_t> counter{0};
  const fs::path dir = work_dir_ / ("req-" + std::to_string(::getpid()) + "-" + std::to_string(counter.fetch_add(1)));
  fs::create_directories(dir);
  struct Cleanup {
    fs::path dir;
    ~Cleanup() {
      std::error_code ec;
      fs::remove_all(dir, ec);
    }
  } cleanup{dir};

  nlohmann::json manifest;
  manifest["scale"] = scale_;
  manifest["n_classes"] = n_classes_;
  manifest["tiles"] = nlohmann::json::array();
  std::vector<fs::path> mask_paths;
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    const fs::path image = dir / ("tile_" + std::to_string(i) + ".png");
    mask_paths.push_back(dir / ("tile_" + std::to_string(i) + ".mask.png"));
    write_png_rgb(image, tiles[i], 1);
    manifest["tiles"].push_back({{"image", image.string()}, {"mask", mask_paths.back().string()}});
  }
  const fs::path manifest_path = dir / "manifest.json";
  {
    std::ofstream out(manifest_path);
    out << manifest.dump(2) << "\n";
    if (!out) throw BackendError("cannot write backend manifest " + manifest_path.string());
  }

  const std::string cmd = command_ + " " + shell_quote(manifest_path.string());
  const int status = std::system(cmd.c_str());
  if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw BackendError("external backend failed (status " + std::to_string(status) + "): " + command_);
  }

  std::vector<MaskTile> out;
  out.reserve(tiles.size());
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    if (!fs::exists(mask_paths[i])) throw BackendError("external backend wrote no mask for tile " + std::to_string(i));
    MaskTile mask;
    try {
      mask = read_png_mask(mask_paths[i]);
    } catch (const Error& e) {
      throw BackendError(std::string("external backend mask unreadable: ") + e.what());
    }
    if (mask.width() != tiles[i].width() || mask.height() != tiles[i].height()) {
      throw BackendError("external backend mask has wrong size for tile " + std::to_string(i));
    }
    for (auto v : mask.values) {
      if (v >= n_classes_) throw BackendError("external backend returned class " + std::to_string(v));
    }
    mask.window = tiles[i].window;
    out.push_back(std::move(mask));
  }
  return out;
}

std::unique_ptr<SegmenterBackend> ExternalProcessBackend::trained(const TrainingSet&, const TrainOptions&) const {
  throw BackendError("external backend does not support training");
}

std::string ExternalProcessBackend::serialize() const {
  return nlohmann::json{{"command", command_}, {"n_classes", n_classes_}, {"scale", scale_}}.dump() + "\n";
}

std::unique_ptr<ExternalProcessBackend> ExternalProcessBackend::deserialize(std::string_view blob) {
  try {
    const auto j = nlohmann::json::parse(blob);
    return std::make_unique<ExternalProcessBackend>(j.at("command").get<std::string>(), j.at("n_classes").get<int>(),
                                                    j.at("scale").get<int>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad external backend state: ") + e.what());
  }
}

// ---------------------------------------------------------------- persistence

namespace {

constexpr int kSidecarVersion = 1;

fs::path with_suffix(const fs::path& stem, const char* suffix) { return fs::path(stem.string() + suffix); }

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

}  // namespace

void save_backend(const SegmenterBackend& backend, const fs::path& stem) {
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  {
    std::ofstream out(with_suffix(stem, ".bin"), std::ios::binary);
    const std::string blob = backend.serialize();
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw DataError("cannot write " + with_suffix(stem, ".bin").string());
  }
  const nlohmann::json sidecar{{"kind", backend.kind()},
                               {"n_classes", backend.n_classes()},
                               {"scale", backend.scale()},
                               {"version", kSidecarVersion}};
  std::ofstream out(with_suffix(stem, ".json"));
  out << sidecar.dump(2) << "\n";
  if (!out) throw DataError("cannot write " + with_suffix(stem, ".json").string());
}

std::unique_ptr<SegmenterBackend> load_backend(const fs::path& stem) {
  const fs::path json_path = with_suffix(stem, ".json");
  if (!fs::exists(json_path)) throw DataError("missing model: " + json_path.string());
  nlohmann::json sidecar;
  try {
    sidecar = nlohmann::json::parse(slurp(json_path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad model sidecar " + json_path.string() + ": " + e.what());
  }
  const std::string kind = sidecar.value("kind", "");
  if (sidecar.value("version", 0) != kSidecarVersion) throw DataError("unsupported model version in " + json_path.string());
  const std::string blob = slurp(with_suffix(stem, ".bin"));

  std::unique_ptr<SegmenterBackend> backend;
  if (kind == "centroid") {
    backend = CentroidBackend::deserialize(blob);
  } else if (kind == "external") {
    backend = ExternalProcessBackend::deserialize(blob);
  } else {
    throw DataError("unknown backend kind '" + kind + "' in " + json_path.string());
  }
  if (backend->n_classes() != sidecar.value("n_classes", -1) || backend->scale() != sidecar.value("scale", -1)) {
    throw DataError("model sidecar disagrees with state: " + json_path.string());
  }
  return backend;
}

}  // namespace hail
