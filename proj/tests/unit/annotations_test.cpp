#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "hail/annotations.hpp"
#include "hail/error.hpp"
#include "support.hpp"

namespace hail {
namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const std::filesystem::path kData = HAIL_TEST_DATA_DIR;

TEST(Annotations, MinimalDocument) {
  const auto doc = parse_annotations(
      R"(<Annotations><Annotation Id="3" LineColor="255"><Regions><Region Id="1">)"
      R"(<Vertices><Vertex X="1.5" Y="2"/><Vertex X="3" Y="4.25"/><Vertex X="0" Y="9"/></Vertices>)"
      R"(</Region></Regions></Annotation></Annotations>)");
  ASSERT_EQ(doc.layers.size(), 1u);
  EXPECT_FALSE(doc.microns_per_pixel);
  const auto& layer = doc.layers[0];
  EXPECT_EQ(layer.id, 3);
  EXPECT_FALSE(layer.name);
  EXPECT_EQ(layer.line_color, 255u);
  ASSERT_EQ(layer.regions.size(), 1u);
  EXPECT_FALSE(layer.regions[0].negative);
  const std::vector<Vertex> expected{{1.5, 2}, {3, 4.25}, {0, 9}};
  EXPECT_EQ(layer.regions[0].vertices, expected);
}

TEST(Annotations, NegativeRegion) {
  const auto doc = parse_annotations(
      R"(<Annotations><Annotation Id="1" LineColor="0"><Regions><Region Id="1" NegativeROA="1"><Vertices>)"
      R"(<Vertex X="0" Y="0"/><Vertex X="1" Y="0"/><Vertex X="1" Y="1"/></Vertices></Region></Regions>)"
      R"(</Annotation></Annotations>)");
  EXPECT_TRUE(doc.layers.at(0).regions.at(0).negative);
}

TEST(Annotations, BadCoordinateNamesVertex) {
  const std::string xml =
      R"(<Annotations><Annotation Id="1" LineColor="0"><Regions><Region Id="1"><Vertices>)"
      R"(<Vertex X="0" Y="0"/><Vertex X="1" Y="0"/><Vertex X="abc" Y="1"/></Vertices></Region></Regions>)"
      R"(</Annotation></Annotations>)";
  try {
    parse_annotations(xml);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("Vertex[3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("abc"), std::string::npos) << msg;
  }
}

TEST(Annotations, Errors) {
  EXPECT_THROW(parse_annotations("<Annotations><Annotation"), DataError);
  EXPECT_THROW(parse_annotations(""), DataError);
  // missing Id
  EXPECT_THROW(parse_annotations(R"(<Annotations><Annotation LineColor="0"/></Annotations>)"), DataError);
  // missing Y
  EXPECT_THROW(parse_annotations(R"(<Annotations><Annotation Id="1"><Regions><Region Id="1"><Vertices>)"
                                 R"(<Vertex X="1"/></Vertices></Region></Regions></Annotation></Annotations>)"),
               DataError);
  // duplicate layer ids
  EXPECT_THROW(parse_annotations(R"(<Annotations><Annotation Id="1"/><Annotation Id="1"/></Annotations>)"), DataError);
  // non-finite coordinate
  EXPECT_THROW(parse_annotations(R"(<Annotations><Annotation Id="1"><Regions><Region Id="1"><Vertices>)"
                                 R"(<Vertex X="nan" Y="1"/></Vertices></Region></Regions></Annotation></Annotations>)"),
               DataError);
}

TEST(Annotations, EmptyDocument) {
  EXPECT_EQ(serialize_annotations({}), "<Annotations>\n</Annotations>\n");
  EXPECT_TRUE(parse_annotations("<Annotations/>").empty());
}

TEST(Annotations, LineColorEncoding) {
  EXPECT_EQ(encode_line_color(Rgb{0, 255, 0}), 65280u);
  EXPECT_EQ(encode_line_color(Rgb{255, 0, 0}), 255u);
  EXPECT_EQ(decode_line_color(16711680u), (Rgb{0, 0, 255}));
  for (std::uint32_t v : {0u, 1u, 123456u, 0xFFFFFFu}) EXPECT_EQ(encode_line_color(decode_line_color(v)), v);
}

TEST(Annotations, GoldenFixture) {
  const std::string canonical = slurp(kData / "viewer_export.canonical.xml");
  const auto doc = parse_annotations(slurp(kData / "viewer_export.xml"));
  EXPECT_EQ(serialize_annotations(doc), canonical);
  EXPECT_EQ(serialize_annotations(parse_annotations(canonical)), canonical);
  EXPECT_EQ(parse_annotations(canonical), doc);
  ASSERT_EQ(doc.layers.size(), 3u);
  EXPECT_EQ(doc.layers[1].name.value(), "Tubule & \"lumen\"");
  EXPECT_DOUBLE_EQ(doc.microns_per_pixel.value(), 0.252);
}

TEST(Annotations, OrderPreserved) {
  AnnotationDocument doc;
  for (int l : {7, 2}) {
    AnnotationLayer layer;
    layer.id = l;
    for (int r : {5, 1}) layer.regions.push_back({r, false, {{0, 0}, {1, double(l)}, {double(r), 1}}});
    doc.layers.push_back(layer);
  }
  const auto back = parse_annotations(serialize_annotations(doc));
  EXPECT_EQ(back, doc);
  EXPECT_EQ(back.layers[0].id, 7);
  EXPECT_EQ(back.layers[0].regions[0].id, 5);
}

TEST(Annotations, FuzzedRoundtrip) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const auto doc = testing::random_document(rng);
    const std::string text = serialize_annotations(doc);
    const auto back = parse_annotations(text);
    ASSERT_EQ(back, doc) << text;
    ASSERT_EQ(serialize_annotations(back), text);
  }
}

TEST(Annotations, FileRoundtrip) {
  testing::TempDir dir;
  std::mt19937_64 rng(5);
  const auto doc = testing::random_document(rng);
  write_annotations(dir / "a.xml", doc);
  EXPECT_EQ(read_annotations(dir / "a.xml"), doc);
  EXPECT_THROW(read_annotations(dir / "missing.xml"), DataError);
}

TEST(ClassMapTest, Validation) {
  EXPECT_THROW(ClassMap({{1, 0, {}, "bg"}}), DataError);
  EXPECT_THROW(ClassMap({{1, 256, {}, "x"}}), DataError);
  EXPECT_THROW(ClassMap({{1, 1, {}, "a"}, {1, 2, {}, "b"}}), DataError);
  EXPECT_THROW(ClassMap({{1, 1, {}, "a"}, {2, 1, {}, "b"}}), DataError);
  const ClassMap map({{4, 2, {1, 2, 3}, "b"}, {9, 1, {}, "a"}});
  EXPECT_EQ(map.n_classes(), 3);
  EXPECT_EQ(map.class_for_layer(4), 2);
  EXPECT_FALSE(map.class_for_layer(5));
  EXPECT_EQ(map.binding_for_class(1)->layer_id, 9);
  EXPECT_EQ(ClassMap::from_json(map.to_json()), map);
  EXPECT_THROW(ClassMap::from_json("{"), DataError);
  EXPECT_THROW(ClassMap::from_json(R"({"classes":[{"layer_id":1}]})"), DataError);
}

}  // namespace
}  // namespace hail
