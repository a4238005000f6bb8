#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "hail/error.hpp"
#include "hail/synthetic.hpp"
#include "project.hpp"
#include "support.hpp"

namespace hail::cli {
namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result call(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

TEST(Cli, NewTwiceFails) {
  testing::TempDir dir("cli-new");
  const std::string p = (dir / "proj").string();
  auto r = call({"--option", "new", "--project", p});
  ASSERT_EQ(r.code, kOk) << r.err;
  for (const char* sub : {"WSI", "REGIONS", "TRAINING", "MODELS", "PREDICTIONS", "HOLDOUT", "REPORTS"}) {
    EXPECT_TRUE(fs::is_directory(dir / "proj" / sub)) << sub;
  }
  EXPECT_TRUE(fs::exists(dir / "proj" / "classmap.json"));
  EXPECT_FALSE(fs::exists(dir / "proj" / ".hail.lock"));
  r = call({"--option", "new", "--project", p});
  EXPECT_EQ(r.code, kData);
  EXPECT_TRUE(contains(r.err, "project exists"));
}

TEST(Cli, PredictBeforeTrain) {
  testing::TempDir dir("cli-pred");
  const std::string p = (dir / "proj").string();
  ASSERT_EQ(call({"--option", "new", "--project", p}).code, kOk);
  const auto r = call({"--option", "predict", "--project", p});
  EXPECT_EQ(r.code, kData);
  EXPECT_TRUE(contains(r.err, "no trained iteration"));
  const auto t = call({"--option", "train", "--project", p});
  EXPECT_EQ(t.code, kData);
  EXPECT_TRUE(contains(t.err, "empty training set"));
}

TEST(Cli, UsageErrors) {
  testing::TempDir dir("cli-usage");
  const std::string p = (dir / "proj").string();
  EXPECT_EQ(call({"--option", "bogus", "--project", p}).code, kUsage);
  EXPECT_EQ(call({"--option", "new"}).code, kUsage);
  EXPECT_EQ(call({"--project", p}).code, kUsage);
  EXPECT_EQ(call({"--option", "new", "--project", p, "--one_network", "maybe"}).code, kUsage);
  EXPECT_EQ(call({"--option", "new", "--project", p, "--set", "nonsense"}).code, kUsage);
  EXPECT_EQ(call({"--option", "new", "--project", p, "--set", "no_such_key=1"}).code, kUsage);
  EXPECT_EQ(call({"--option", "new", "--project", p, "--set", "tile_size=abc"}).code, kUsage);
  EXPECT_EQ(call({"--option", "train", "--project", p, "--transfer", p}).code, kUsage);
  EXPECT_EQ(call({"--option", "train", "--project", (dir / "nope").string()}).code, kData);
  EXPECT_EQ(call({"--help"}).code, kOk);
}

TEST(Cli, SetPersists) {
  testing::TempDir dir("cli-set");
  const std::string p = (dir / "proj").string();
  ASSERT_EQ(call({"--option", "new", "--project", p, "--set", "tile_size=256", "--set", "overlap=0.25",
                  "--one_network", "true"})
                .code,
            kOk);
  const auto config = ProjectConfig::load(dir / "proj" / "config.json");
  EXPECT_EQ(config.tile_size(), 256);
  EXPECT_DOUBLE_EQ(config.overlap(), 0.25);
  EXPECT_FALSE(config.deepzoom());
  EXPECT_EQ(config.epochs(), 2);
}

TEST(Config, Validation) {
  ProjectConfig c;
  EXPECT_THROW(c.set("overlap=1.5"), UsageError);
  EXPECT_THROW(c.set("tile_size=0"), UsageError);
  EXPECT_THROW(c.set("f1_threshold=2"), UsageError);
  c.set("seed=42");
  EXPECT_EQ(c.seed(), 42u);
  testing::TempDir dir("cfg");
  std::ofstream(dir / "c.json") << R"({"tile_size": 300, "extra": 1})";
  EXPECT_THROW(ProjectConfig::load(dir / "c.json"), DataError);
  std::ofstream(dir / "d.json") << R"({"tile_size": "big"})";
  EXPECT_THROW(ProjectConfig::load(dir / "d.json"), DataError);
  std::ofstream(dir / "e.json") << R"({"tile_size": 300})";
  EXPECT_EQ(ProjectConfig::load(dir / "e.json").tile_size(), 300);
}

TEST(Cli, LockBlocksSecondInvocation) {
  testing::TempDir dir("cli-lock");
  const std::string p = (dir / "proj").string();
  ASSERT_EQ(call({"--option", "new", "--project", p}).code, kOk);
  {
    ProjectLock held(dir / "proj" / ".hail.lock");
    const auto r = call({"--option", "predict", "--project", p});
    EXPECT_EQ(r.code, kData);
    EXPECT_TRUE(contains(r.err, "lock"));
  }
  EXPECT_FALSE(fs::exists(dir / "proj" / ".hail.lock"));
}

TEST(Cli, SmallLoop) {
  testing::TempDir dir("cli-loop");
  const fs::path root = dir / "proj";
  ASSERT_EQ(call({"--option", "new", "--project", root.string(), "--set", "tile_size=128", "--set",
                  "augment_base=1"})
                .code,
            kOk);
  TiffWriteOptions tiff;
  tiff.pyramid_factors = {16};
  for (int i = 0; i < 3; ++i) {
    const auto spec = testing::sparse_slide_spec(100 + i, 512);
    const std::string name = "slide" + std::to_string(i);
    const fs::path xml = i == 0 ? root / "REGIONS" / (name + ".xml") : fs::path{};
    generate_synthetic_slide(spec, root / "WSI" / (name + ".tif"), xml, tiff);
    if (i == 2) generate_synthetic_slide(spec, root / "HOLDOUT" / (name + ".tif"), root / "HOLDOUT" / (name + ".xml"), tiff);
  }

  auto r = call({"--option", "train", "--project", root.string()});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_TRUE(fs::exists(root / "MODELS" / "0" / "highres.json"));
  EXPECT_TRUE(fs::exists(root / "MODELS" / "0" / "lowres.json"));

  r = call({"--option", "predict", "--project", root.string()});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_TRUE(fs::exists(root / "PREDICTIONS" / "slide1.xml"));
  EXPECT_TRUE(fs::exists(root / "PREDICTIONS" / "slide2.xml"));
  EXPECT_FALSE(fs::exists(root / "PREDICTIONS" / "slide0.xml"));

  // Accept the prediction as a correction and train again.
  fs::copy_file(root / "PREDICTIONS" / "slide1.xml", root / "REGIONS" / "slide1.xml");
  r = call({"--option", "train", "--project", root.string()});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_TRUE(fs::exists(root / "MODELS" / "1" / "highres.bin"));

  r = call({"--option", "validate", "--project", root.string()});
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto report = nlohmann::json::parse(std::ifstream(root / "REPORTS" / "validation.json"));
  EXPECT_EQ(report.at("iterations").size(), 2u);
  EXPECT_TRUE(fs::exists(root / "REPORTS" / "timings.json"));

  // Warm start into a new project.
  const fs::path other = dir / "other";
  r = call({"--option", "new", "--project", other.string(), "--transfer", root.string()});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_TRUE(fs::exists(other / "TRANSFER" / "highres.json"));

  // Holdout slide without truth.
  fs::remove(root / "HOLDOUT" / "slide2.xml");
  r = call({"--option", "validate", "--project", root.string()});
  EXPECT_EQ(r.code, kData);
  EXPECT_TRUE(contains(r.err, "missing truth"));
}

}  // namespace
}  // namespace hail::cli
