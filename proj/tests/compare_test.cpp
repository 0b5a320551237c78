#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "cytofuse/compare.hpp"
#include "cytofuse/error.hpp"
#include "support.hpp"

#ifndef CYTOFUSE_TEST_DATA
#error "CYTOFUSE_TEST_DATA must point at tests/data"
#endif

namespace cytofuse {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

Manifest three_models() {
  Manifest m;
  m.models = {{"U", "probs/U"}, {"S", "probs/S"}, {"P", "probs/P"}};
  m.ground_truth_dir = "gt";
  m.images = {"a"};
  return m;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Line of the rendered table whose first cell is `label`.
std::string row_line(const std::string& markdown, const std::string& label) {
  std::istringstream lines(markdown);
  for (std::string line; std::getline(lines, line);) {
    if (line.rfind("| " + label + " |", 0) == 0) return line;
  }
  return {};
}

TEST(ParseRules, AllAndExplicitLists) {
  const auto all = parse_rules("all");
  EXPECT_EQ(all, std::vector<FusionRule>(kComparisonRules.begin(), kComparisonRules.end()));
  EXPECT_EQ(parse_rules("fuzzy,avg"), (std::vector<FusionRule>{FusionRule::kFuzzyRank, FusionRule::kAverage}));
  EXPECT_THROW(parse_rules("avg,bogus"), ValidationError);
  EXPECT_THROW(parse_rules("avg,avg"), ValidationError);
  EXPECT_THROW(parse_rules(""), ValidationError);
}

TEST(ParseCombos, AllWithThreeModels) {
  const Manifest m = three_models();
  const auto combos = parse_combos("all", m);
  std::vector<std::string> labels;
  for (const auto& c : combos) labels.push_back(combo_label(c, m));
  EXPECT_EQ(labels, (std::vector<std::string>{"U", "S", "P", "U+S+P", "U+S", "U+P", "S+P"}));
}

TEST(ParseCombos, ExplicitListKeepsOrderAndRepeats) {
  const Manifest m = three_models();
  const auto combos = parse_combos("U+P,S,U+U", m);
  ASSERT_EQ(combos.size(), 3u);
  EXPECT_EQ(combos[0], (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(combos[1], (std::vector<std::size_t>{1}));
  EXPECT_EQ(combos[2], (std::vector<std::size_t>{0, 0}));
}

TEST(ParseCombos, UnknownModelIsNamed) {
  try {
    parse_combos("U+X", three_models());
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("unknown model 'X'"), std::string::npos) << e.what();
  }
}

TEST(RenderMarkdown, SingleCellTable) {
  ComparisonTable t{{FusionRule::kFuzzyRank}, {{"U+S", {83.79}}}};
  const std::string md = render_markdown(t);
  EXPECT_NE(md.find("| Model |"), std::string::npos) << md;
  EXPECT_NE(md.find("|:---|---:|"), std::string::npos) << md;
  EXPECT_NE(row_line(md, "U+S").find("**83.79**"), std::string::npos) << md;
}

TEST(RenderMarkdown, TiesAtTwoDecimalsAreAllBold) {
  ComparisonTable t{{FusionRule::kAverage, FusionRule::kMax, FusionRule::kFuzzyRank},
                    {{"U+P", {66.421, 66.4249, 60.0}}}};
  const std::string line = row_line(render_markdown(t), "U+P");
  EXPECT_NE(line.find("**66.42** | **66.42** | 60.00"), std::string::npos) << line;
}

TEST(RenderMarkdown, EveryRowGetsItsOwnMaximum) {
  ComparisonTable t{{FusionRule::kAverage, FusionRule::kFuzzyRank},
                    {{"A", {1.0, 2.0}}, {"B", {3.0, 0.5}}}};
  const std::string md = render_markdown(t);
  EXPECT_NE(row_line(md, "A").find("| 1.00 | **2.00** |"), std::string::npos) << md;
  EXPECT_NE(row_line(md, "B").find("| **3.00** | 0.50 |"), std::string::npos) << md;
}

TEST(ComparisonJson, RoundTripAndStrictness) {
  ComparisonTable t{{FusionRule::kAverage, FusionRule::kBorda},
                    {{"U", {12.5, 13.0}}, {"U+S", {99.125, 0.0}}}};
  const std::string text = comparison_to_json(t);
  const ComparisonTable back = comparison_from_json(text);
  EXPECT_EQ(back.rules, t.rules);
  ASSERT_EQ(back.rows.size(), 2u);
  EXPECT_EQ(back.rows[1].label, "U+S");
  EXPECT_EQ(back.rows[1].mean_iou_percent, t.rows[1].mean_iou_percent);
  EXPECT_EQ(comparison_to_json(back), text);
  EXPECT_THROW(comparison_from_json(R"({"rules": ["avg"], "rows": [{"label": "U", "mean_iou_percent": [1, 2]}]})"),
               ValidationError);
  EXPECT_THROW(comparison_from_json(R"({"rules": ["nope"], "rows": []})"), ValidationError);
  EXPECT_THROW(comparison_from_json(R"({"rules": [], "rows": [], "extra": 1})"), ValidationError);
  EXPECT_THROW(comparison_from_json("{"), ParseError);
}

TEST(PublishedTables, HerlevFuzzyCellIsBold) {
  const auto t = comparison_from_json(slurp(fs::path(CYTOFUSE_TEST_DATA) / "herlev_fusion_table.json"));
  const std::string line = row_line(render_markdown(t), "U+P");
  EXPECT_NE(line.find("**84.27**"), std::string::npos) << line;
  EXPECT_EQ(line.find("**84.11**"), std::string::npos) << line;
}

TEST(PublishedTables, JucytFuzzyCellIsBold) {
  const auto t = comparison_from_json(slurp(fs::path(CYTOFUSE_TEST_DATA) / "jucyt_fusion_table.json"));
  const std::string md = render_markdown(t);
  const std::string line = row_line(md, "U+S");
  EXPECT_NE(line.find("**83.79**"), std::string::npos) << line;
  EXPECT_EQ(line.find("**79.25**"), std::string::npos) << line;
  EXPECT_NE(row_line(md, "U+P").find("56.80"), std::string::npos) << md;
}

// Two 1x2 images, two models; hand-checked pooled IoU per rule.
TEST(BuildComparison, HandBuiltDataset) {
  TempDir dir("compare_small");
  Manifest m;
  m.models = {{"A", "probs/A"}, {"B", "probs/B"}};
  m.ground_truth_dir = "gt";
  m.images = {"x", "y"};
  m.root = dir.path();
  fs::create_directories(dir.path() / "probs/A");
  fs::create_directories(dir.path() / "probs/B");
  fs::create_directories(dir.path() / "gt");
  // Model A is right on image x and wrong on y; B is the reverse.
  write_probmap(testing::map_from_rows({{0.9F, 0.1F}, {0.2F, 0.8F}}), m.probmap_path(0, "x"));
  write_probmap(testing::map_from_rows({{0.4F, 0.6F}, {0.6F, 0.4F}}), m.probmap_path(0, "y"));
  write_probmap(testing::map_from_rows({{0.3F, 0.7F}, {0.7F, 0.3F}}), m.probmap_path(1, "x"));
  write_probmap(testing::map_from_rows({{0.95F, 0.05F}, {0.1F, 0.9F}}), m.probmap_path(1, "y"));
  write_mask(LabelMask(1, 2, {0, 1}), m.ground_truth_path("x"));
  write_mask(LabelMask(1, 2, {0, 1}), m.ground_truth_path("y"));
  write_manifest(m, dir.path() / "manifest.json");
  const Manifest loaded = load_manifest(dir.path() / "manifest.json");

  const auto t = build_comparison(loaded, {FusionRule::kAverage, FusionRule::kMin},
                                  parse_combos("A,B,A+B", loaded), 3);
  ASSERT_EQ(t.rows.size(), 3u);
  // Each single model: 2 of 4 pixels right, one of each class wrong -> IoU 1/3 each.
  EXPECT_NEAR(t.rows[0].mean_iou_percent[0], 100.0 / 3.0, 1e-9);
  EXPECT_NEAR(t.rows[1].mean_iou_percent[0], 100.0 / 3.0, 1e-9);
  // Averages pick the more confident model on every pixel: all correct.
  EXPECT_DOUBLE_EQ(t.rows[2].mean_iou_percent[0], 100.0);
  EXPECT_DOUBLE_EQ(t.rows[2].mean_iou_percent[1], 100.0);
  EXPECT_EQ(t.rows[2].label, "A+B");

  const auto serial = build_comparison(loaded, {FusionRule::kAverage, FusionRule::kMin},
                                       parse_combos("A,B,A+B", loaded), 1);
  EXPECT_EQ(comparison_to_json(serial), comparison_to_json(t));
}

}  // namespace
}  // namespace cytofuse
