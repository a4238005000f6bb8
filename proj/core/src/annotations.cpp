#include "hail/annotations.hpp"

#include <expat.h>

#include <algorithm>
#include <charconv>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hail/error.hpp"

namespace hail {

std::uint32_t encode_line_color(Rgb c) {
  return static_cast<std::uint32_t>(c.r) + 256u * c.g + 65536u * c.b;
}

Rgb decode_line_color(std::uint32_t v) {
  return Rgb{static_cast<std::uint8_t>(v & 0xFF), static_cast<std::uint8_t>((v >> 8) & 0xFF),
             static_cast<std::uint8_t>((v >> 16) & 0xFF)};
}

const AnnotationLayer* AnnotationDocument::find_layer(int id) const {
  auto it = std::find_if(layers.begin(), layers.end(), [&](const auto& l) { return l.id == id; });
  return it == layers.end() ? nullptr : &*it;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::optional<double> to_double(std::string_view text) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || end != text.data() + text.size() || text.empty() || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

std::optional<long long> to_integer(std::string_view text) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  long long value = 0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || end != text.data() + text.size() || text.empty()) return std::nullopt;
  return value;
}

// SAX state for the viewer XML. Expat callbacks are C, so errors are
// recorded and parsing is stopped instead of throwing through them.
class AnnotationParser {
 public:
  AnnotationDocument parse(std::string_view xml) {
    std::unique_ptr<std::remove_pointer_t<XML_Parser>, decltype(&XML_ParserFree)> parser(XML_ParserCreate(nullptr),
                                                                                        &XML_ParserFree);
    if (!parser) throw DataError("cannot create XML parser");
    parser_ = parser.get();
    XML_SetUserData(parser_, this);
    XML_SetElementHandler(parser_, &AnnotationParser::on_start, &AnnotationParser::on_end);

    const auto status = XML_Parse(parser_, xml.data(), static_cast<int>(xml.size()), XML_TRUE);
    if (!error_.empty()) throw DataError(error_);
    if (status != XML_STATUS_OK) {
      throw DataError("malformed XML at line " + std::to_string(XML_GetCurrentLineNumber(parser_)) + ": " +
                      XML_ErrorString(XML_GetErrorCode(parser_)));
    }
    if (!saw_root_) throw DataError("malformed XML: missing <Annotations> root");
    return std::move(doc_);
  }

 private:
  struct Frame {
    std::string name;
    std::map<std::string, int> child_counts;
    std::string path;
  };

  static void on_start(void* self, const XML_Char* name, const XML_Char** attrs) {
    static_cast<AnnotationParser*>(self)->start(name, attrs);
  }
  static void on_end(void* self, const XML_Char*) { static_cast<AnnotationParser*>(self)->end(); }

  void fail(const std::string& message) {
    if (error_.empty()) error_ = message;
    XML_StopParser(parser_, XML_FALSE);
  }

  const char* attribute(const XML_Char** attrs, std::string_view key) const {
    for (int i = 0; attrs[i]; i += 2) {
      if (key == attrs[i]) return attrs[i + 1];
    }
    return nullptr;
  }

  // Parent element name, or "" at the root.
  const std::string& parent() const {
    static const std::string none;
    return stack_.size() >= 2 ? stack_[stack_.size() - 2].name : none;
  }

  std::optional<int> required_id(const XML_Char** attrs, const std::string& path) {
    const char* id = attribute(attrs, "Id");
    if (!id) {
      fail(path + ": missing required attribute Id");
      return std::nullopt;
    }
    auto value = to_integer(id);
    if (!value || *value <= 0 || *value > std::numeric_limits<int>::max()) {
      fail(path + ": Id \"" + std::string(id) + "\" is not a positive integer");
      return std::nullopt;
    }
    return static_cast<int>(*value);
  }

  void start(const XML_Char* raw_name, const XML_Char** attrs) {
    if (!error_.empty()) return;
    const std::string name = raw_name;
    std::string path;
    if (stack_.empty()) {
      path = name;
    } else {
      const int index = ++stack_.back().child_counts[name];
      path = stack_.back().path + "/" + name + "[" + std::to_string(index) + "]";
    }
    stack_.push_back({name, {}, path});

    if (stack_.size() == 1) {
      if (name != "Annotations") return fail("malformed XML: root element is <" + name + ">, expected <Annotations>");
      saw_root_ = true;
      if (const char* mpp = attribute(attrs, "MicronsPerPixel"); mpp && !trim(mpp).empty()) {
        auto value = to_double(mpp);
        if (!value) return fail(path + ": MicronsPerPixel \"" + std::string(mpp) + "\" is not a number");
        doc_.microns_per_pixel = *value;
      }
      return;
    }

    if (name == "Annotation" && stack_.size() == 2) {
      auto id = required_id(attrs, path);
      if (!id) return;
      if (doc_.find_layer(*id)) return fail(path + ": duplicate Annotation Id " + std::to_string(*id));
      AnnotationLayer layer;
      layer.id = *id;
      if (const char* n = attribute(attrs, "Name")) layer.name = n;
      if (const char* color = attribute(attrs, "LineColor")) {
        auto value = to_integer(color);
        if (!value || *value < 0 || *value > 0xFFFFFF) {
          return fail(path + ": LineColor \"" + std::string(color) + "\" is not a 24-bit integer");
        }
        layer.line_color = static_cast<std::uint32_t>(*value);
      }
      doc_.layers.push_back(std::move(layer));
      region_ids_.clear();
      in_layer_ = true;
    } else if (name == "Region" && in_layer_ && parent() == "Regions") {
      auto id = required_id(attrs, path);
      if (!id) return;
      if (!region_ids_.insert(*id).second) return fail(path + ": duplicate Region Id " + std::to_string(*id));
      Region region;
      region.id = *id;
      if (const char* neg = attribute(attrs, "NegativeROA")) {
        auto value = to_integer(neg);
        if (!value || (*value != 0 && *value != 1)) {
          return fail(path + ": NegativeROA \"" + std::string(neg) + "\" must be 0 or 1");
        }
        region.negative = *value == 1;
      }
      doc_.layers.back().regions.push_back(std::move(region));
      in_region_ = true;
    } else if (name == "Vertex" && in_region_ && parent() == "Vertices") {
      const char* x = attribute(attrs, "X");
      const char* y = attribute(attrs, "Y");
      if (!x) return fail(path + ": missing required attribute X");
      if (!y) return fail(path + ": missing required attribute Y");
      auto vx = to_double(x);
      if (!vx) return fail(path + ": X \"" + std::string(x) + "\" is not a number");
      auto vy = to_double(y);
      if (!vy) return fail(path + ": Y \"" + std::string(y) + "\" is not a number");
      doc_.layers.back().regions.back().vertices.push_back({*vx, *vy});
    }
  }

  void end() {
    if (!error_.empty() || stack_.empty()) return;
    const std::string& name = stack_.back().name;
    if (name == "Annotation" && stack_.size() == 2) in_layer_ = false;
    if (name == "Region" && in_region_) in_region_ = false;
    stack_.pop_back();
  }

  XML_Parser parser_ = nullptr;
  AnnotationDocument doc_;
  std::vector<Frame> stack_;
  std::set<int> region_ids_;
  bool saw_root_ = false;
  bool in_layer_ = false;
  bool in_region_ = false;
  std::string error_;
};

void append_escaped(std::string& out, std::string_view text) {
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
}

void append_number(std::string& out, double value) {
  char buffer[64];
  auto [end, ec] = std::to_chars(buffer, buffer + sizeof buffer, value);
  out.append(buffer, end);
}

}  // namespace

AnnotationDocument parse_annotations(std::string_view xml) {
  return AnnotationParser{}.parse(xml);
}

std::string serialize_annotations(const AnnotationDocument& doc) {
  std::string out;
  out += "<Annotations";
  if (doc.microns_per_pixel) {
    out += " MicronsPerPixel=\"";
    append_number(out, *doc.microns_per_pixel);
    out += '"';
  }
  out += ">\n";
  for (const auto& layer : doc.layers) {
    out += "  <Annotation Id=\"" + std::to_string(layer.id) + "\"";
    if (layer.name) {
      out += " Name=\"";
      append_escaped(out, *layer.name);
      out += '"';
    }
    out += " LineColor=\"" + std::to_string(layer.line_color) + "\">\n";
    out += "    <Regions>\n";
    for (const auto& region : layer.regions) {
      out += "      <Region Id=\"" + std::to_string(region.id) + "\" NegativeROA=\"";
      out += region.negative ? "1" : "0";
      out += "\">\n        <Vertices>\n";
      for (const auto& v : region.vertices) {
        out += "          <Vertex X=\"";
        append_number(out, v.x);
        out += "\" Y=\"";
        append_number(out, v.y);
        out += "\"/>\n";
      }
      out += "        </Vertices>\n      </Region>\n";
    }
    out += "    </Regions>\n  </Annotation>\n";
  }
  out += "</Annotations>\n";
  return out;
}

AnnotationDocument read_annotations(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return parse_annotations(text.str());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_annotations(const std::filesystem::path& path, const AnnotationDocument& doc) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << serialize_annotations(doc);
  if (!out) throw DataError("write failed for " + path.string());
}

ClassMap::ClassMap(std::vector<ClassBinding> bindings) : bindings_(std::move(bindings)) {
  std::set<int> layers;
  std::set<int> classes;
  for (const auto& b : bindings_) {
    if (b.class_index < 1 || b.class_index > 255) {
      throw DataError("class index " + std::to_string(b.class_index) + " outside 1..255");
    }
    if (!layers.insert(b.layer_id).second) throw DataError("layer " + std::to_string(b.layer_id) + " bound twice");
    if (!classes.insert(b.class_index).second) {
      throw DataError("class " + std::to_string(b.class_index) + " bound twice");
    }
  }
}

int ClassMap::n_classes() const {
  int n = 1;
  for (const auto& b : bindings_) n = std::max(n, b.class_index + 1);
  return n;
}

std::optional<int> ClassMap::class_for_layer(int layer_id) const {
  for (const auto& b : bindings_) {
    if (b.layer_id == layer_id) return b.class_index;
  }
  return std::nullopt;
}

const ClassBinding* ClassMap::binding_for_class(int class_index) const {
  for (const auto& b : bindings_) {
    if (b.class_index == class_index) return &b;
  }
  return nullptr;
}

ClassMap ClassMap::from_json(std::string_view text) {
  try {
    const auto json = nlohmann::json::parse(text);
    std::vector<ClassBinding> bindings;
    for (const auto& item : json.at("classes")) {
      ClassBinding b;
      b.layer_id = item.at("layer_id").get<int>();
      b.class_index = item.at("class_index").get<int>();
      const auto color = item.at("color").get<std::vector<int>>();
      if (color.size() != 3) throw DataError("class color must be [r, g, b]");
      for (int c : color) {
        if (c < 0 || c > 255) throw DataError("class color component outside 0..255");
      }
      b.color = Rgb{static_cast<std::uint8_t>(color[0]), static_cast<std::uint8_t>(color[1]),
                    static_cast<std::uint8_t>(color[2])};
      b.name = item.value("name", std::string{});
      bindings.push_back(std::move(b));
    }
    return ClassMap(std::move(bindings));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid class map: ") + e.what());
  }
}

std::string ClassMap::to_json() const {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& b : bindings_) {
    classes.push_back({{"layer_id", b.layer_id},
                       {"class_index", b.class_index},
                       {"color", {b.color.r, b.color.g, b.color.b}},
                       {"name", b.name}});
  }
  return nlohmann::json{{"classes", classes}}.dump(2) + "\n";
}

ClassMap ClassMap::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read class map " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return from_json(text.str());
}

void ClassMap::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write class map " + path.string());
  out << to_json();
}

}  // namespace hail
