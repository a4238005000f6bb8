#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hail/types.hpp"

namespace hail {

struct Vertex {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Vertex&, const Vertex&) = default;
};

/// A closed polygon in base-level slide coordinates. The last vertex
/// connects back to the first. Negative regions are holes.
struct Region {
  int id = 1;
  bool negative = false;
  std::vector<Vertex> vertices;

  friend bool operator==(const Region&, const Region&) = default;
};

struct AnnotationLayer {
  int id = 1;
  std::optional<std::string> name;
  std::uint32_t line_color = 0;  // R + 256*G + 65536*B
  std::vector<Region> regions;

  friend bool operator==(const AnnotationLayer&, const AnnotationLayer&) = default;
};

struct AnnotationDocument {
  std::optional<double> microns_per_pixel;
  std::vector<AnnotationLayer> layers;

  bool empty() const { return layers.empty(); }
  const AnnotationLayer* find_layer(int id) const;

  friend bool operator==(const AnnotationDocument&, const AnnotationDocument&) = default;
};

std::uint32_t encode_line_color(Rgb c);
Rgb decode_line_color(std::uint32_t value);

/// Parses viewer annotation XML. Unknown elements and attributes are
/// ignored. Throws DataError naming the element path on malformed XML,
/// missing Id/X/Y attributes, bad numbers and duplicate ids.
AnnotationDocument parse_annotations(std::string_view xml);

/// Serializes to the canonical element and attribute set. Coordinates use
/// the shortest text that parses back to the identical double.
std::string serialize_annotations(const AnnotationDocument& doc);

AnnotationDocument read_annotations(const std::filesystem::path& path);
void write_annotations(const std::filesystem::path& path, const AnnotationDocument& doc);

/// Binding of an annotation layer to a mask class index and display color.
struct ClassBinding {
  int layer_id = 1;
  int class_index = 1;
  Rgb color;
  std::string name;

  friend bool operator==(const ClassBinding&, const ClassBinding&) = default;
};

/// Project-level mapping between annotation layers and mask classes.
/// Class 0 is implicit background and may not be bound.
class ClassMap {
 public:
  ClassMap() = default;
  /// Throws DataError on duplicate layers/classes or class indices outside 1..255.
  explicit ClassMap(std::vector<ClassBinding> bindings);

  const std::vector<ClassBinding>& bindings() const { return bindings_; }
  /// Largest class index + 1 (background included).
  int n_classes() const;
  std::optional<int> class_for_layer(int layer_id) const;
  const ClassBinding* binding_for_class(int class_index) const;

  static ClassMap from_json(std::string_view text);
  std::string to_json() const;
  static ClassMap load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  friend bool operator==(const ClassMap&, const ClassMap&) = default;

 private:
  std::vector<ClassBinding> bindings_;
};

}  // namespace hail
