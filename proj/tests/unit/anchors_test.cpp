#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "tinydet/anchors.hpp"
#include "tinydet/error.hpp"

namespace tinydet {
namespace {

using testing::exhaustive_best;
using testing::synthetic_boxes;

AnchorGrid single_level(int stride, double size, std::vector<double> ratios = {1.0}, int n = 320) {
  const std::vector<LevelConfig> lv{{stride, size, std::move(ratios)}};
  return tile_anchors(lv, n);
}

TEST(Iou, Examples) {
  const Box a{0, 0, 2, 2};
  EXPECT_EQ(iou(a, a), 1.0);
  EXPECT_EQ(iou(a, {5, 5, 6, 6}), 0.0);
  EXPECT_DOUBLE_EQ(iou(a, {1, 0, 3, 2}), 1.0 / 3.0);
  EXPECT_EQ(iou(a, {2, 0, 4, 2}), 0.0);  // touching edges
}

TEST(Iou, SymmetryAndTranslation) {
  std::mt19937_64 rng(1);
  const auto a = synthetic_boxes(rng, 2000, 1, 60, 100);
  const auto b = synthetic_boxes(rng, 2000, 1, 60, 100);
  std::uniform_real_distribution<double> shift(-50, 50);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(iou(a[i], b[i]), iou(b[i], a[i]));
    const double tx = shift(rng), ty = shift(rng);
    const Box at{a[i].x1 + tx, a[i].y1 + ty, a[i].x2 + tx, a[i].y2 + ty};
    const Box bt{b[i].x1 + tx, b[i].y1 + ty, b[i].x2 + tx, b[i].y2 + ty};
    EXPECT_NEAR(iou(at, bt), iou(a[i], b[i]), 1e-9);
  }
}

TEST(Tile, TinyDetMStrideFourLevel) {
  const auto g = tile_anchors(builtin_arch("tinydet-m"));
  ASSERT_EQ(g.levels.size(), 5u);
  EXPECT_EQ(g.levels[0].count(), 19'200u);
  EXPECT_EQ(g.levels[0].center(1) - g.levels[0].center(0), 4.0);
}

TEST(Tile, StrideSixteenSpacing) {
  const auto g = single_level(16, 32.0);
  EXPECT_EQ(g.levels[0].center(5) - g.levels[0].center(4), 16.0);
  EXPECT_EQ(g.size(), 400u);
}

TEST(Tile, SingleAnchor) {
  const auto g = single_level(4, 4.0, {1.0}, 4);
  ASSERT_EQ(g.size(), 1u);
  EXPECT_EQ(g.at(0), (Box{0, 0, 4, 4}));
}

TEST(Tile, AspectShapesKeepArea) {
  const auto g = single_level(16, 32.0, {0.5, 1.0, 2.0});
  for (std::size_t k = 0; k < 3; ++k) {
    const Box b = g.at(k);
    EXPECT_NEAR(b.area(), 32.0 * 32.0, 1e-9);
    EXPECT_NEAR(b.width() / b.height(), g.levels[0].aspect_ratios[k], 1e-12);
  }
}

TEST(Tile, NotClipped) {
  const auto g = single_level(4, 64.0);
  EXPECT_LT(g.at(0).x1, 0.0);
}

TEST(Tile, IndivisibleInputThrows) {
  const std::vector<LevelConfig> lv{{48, 32.0, {1.0}}};
  EXPECT_THROW(tile_anchors(lv, 320), ValidationError);
}

TEST(Tile, MaterializeMatchesAt) {
  const auto g = tile_anchors(builtin_arch("tinydet-s"));
  const auto all = g.materialize();
  ASSERT_EQ(all.size(), g.size());
  for (std::size_t i = 0; i < all.size(); i += 97) EXPECT_EQ(all[i], g.at(i));
}

TEST(Assign, ExactAnchorMatch) {
  const auto g = tile_anchors(builtin_arch("tinydet-m"));
  const std::size_t idx = 12'345;
  const std::vector<Box> gts{g.at(idx)};
  const auto a = assign(g, gts);
  ASSERT_TRUE(a.gts[0].assigned);
  EXPECT_EQ(a.gts[0].best_iou, 1.0);
  EXPECT_EQ(g.at(*a.gts[0].best_anchor), g.at(idx));
}

TEST(Assign, WorstOffsetBetweenSparseAnchors) {
  const auto g = single_level(16, 12.8);
  // Anchor centers sit at 8 + 16i; 16 + 16i is halfway between four of them.
  const Box gt = Box::centered(160, 160, 10, 10);
  const auto a = assign(g, std::vector<Box>{gt});
  const auto all = g.materialize();
  const auto [idx, best] = exhaustive_best(all, gt);
  EXPECT_EQ(a.gts[0].best_iou, best);
  EXPECT_EQ(a.gts[0].best_anchor, idx);
  EXPECT_LT(best, 0.3);
  EXPECT_FALSE(a.gts[0].assigned);
}

TEST(Assign, EmptyGtsAndEmptyGrid) {
  const auto g = single_level(16, 12.8);
  EXPECT_TRUE(assign(g, std::vector<Box>{}).gts.empty());
  EXPECT_THROW(assign(AnchorGrid{}, std::vector<Box>{{0, 0, 1, 1}}), ValidationError);
}

TEST(Assign, MatchesExhaustiveOracle) {
  for (auto name : {"tinydet-s", "tinydet-m", "thundernet-surrogate"}) {
    const auto g = resolve_anchor_grid(name);
    const auto all = g.materialize();
    std::mt19937_64 rng(2);
    for (const auto& gt : synthetic_boxes(rng, 300, 4, 250, g.input_size)) {
      const auto [idx, best] = best_match(g, gt);
      const auto [oidx, obest] = exhaustive_best(all, gt);
      EXPECT_EQ(best, obest) << name;
      EXPECT_EQ(idx, oidx) << name;
    }
  }
}

TEST(Assign, TiesGoToLowestIndex) {
  // Two identical levels: every anchor has a twin with a higher index.
  const std::vector<LevelConfig> lv{{16, 20.0, {1.0}}, {16, 20.0, {1.0}}};
  const auto g = tile_anchors(lv, 64);
  const auto [idx, best] = best_match(g, g.at(21));
  EXPECT_EQ(best, 1.0);
  EXPECT_EQ(idx, std::optional<std::size_t>(5));
}

TEST(Assign, NoOverlapGivesNoAnchor) {
  const auto g = single_level(16, 4.0, {1.0}, 64);
  const auto [idx, best] = best_match(g, Box::centered(16, 16, 2, 2));
  EXPECT_FALSE(idx.has_value());
  EXPECT_EQ(best, 0.0);
}

TEST(Assign, LoweringMinPosIouNeverIncreasesMisses) {
  const auto g = thundernet_surrogate_grid();
  std::mt19937_64 rng(3);
  const auto gts = synthetic_boxes(rng, 500, 8, 120, 320);
  double prev = 1.0;
  for (double t : {0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1}) {
    const double m = gtmr(assign(g, gts, {0.7, t})).overall;
    EXPECT_LE(m, prev);
    prev = m;
  }
}

TEST(Gtmr, AllAssigned) {
  const auto g = single_level(16, 32.0);
  const std::vector<Box> gts{g.at(0), g.at(7), g.at(100)};
  EXPECT_EQ(gtmr(assign(g, gts)).overall, 0.0);
}

TEST(Gtmr, OneOfFour) {
  Assignment a;
  for (bool ok : {true, true, false, true}) a.gts.push_back({Box{0, 0, 10, 10}, std::nullopt, 0.0, ok});
  const auto r = gtmr(a);
  EXPECT_EQ(r.overall, 0.25);
  EXPECT_EQ(r.small.total, 4u);
  EXPECT_EQ(r.small.missed, 1u);
  EXPECT_FALSE(r.large.ratio().has_value());
}

TEST(Gtmr, Undefined) {
  try {
    gtmr(Assignment{});
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("GTMR undefined"), std::string::npos);
  }
}

TEST(Gtmr, Buckets) {
  EXPECT_EQ(scale_bucket({0, 0, 31, 33}), ScaleBucket::Small);
  EXPECT_EQ(scale_bucket({0, 0, 32, 32}), ScaleBucket::Medium);
  EXPECT_EQ(scale_bucket({0, 0, 96, 96}), ScaleBucket::Medium);
  EXPECT_EQ(scale_bucket({0, 0, 96, 97}), ScaleBucket::Large);
}

TEST(Gtmr, DenseGridBeatsSparseOnSmallBoxes) {
  std::mt19937_64 rng(0);
  const auto gts = synthetic_boxes(rng, 10'000, 10, 40, 320);
  const double dense = gtmr(assign(tile_anchors(builtin_arch("tinydet-m")), gts)).overall;
  const double sparse = gtmr(assign(thundernet_surrogate_grid(), gts)).overall;
  EXPECT_LT(dense, sparse);
}

TEST(Gtmr, MergeIsOrderIndependent) {
  const auto g = thundernet_surrogate_grid();
  std::mt19937_64 rng(4);
  std::vector<GTMRReport> parts;
  for (int i = 0; i < 6; ++i) parts.push_back(gtmr(assign(g, synthetic_boxes(rng, 40, 8, 150, 320))));
  const auto a = merge(parts);
  std::reverse(parts.begin(), parts.end());
  const auto b = merge(parts);
  EXPECT_EQ(a.overall, b.overall);
  EXPECT_EQ(a.all.total, 240u);
  EXPECT_EQ(a.small.missed, b.small.missed);
}

TEST(Coverage, ThresholdZeroCoversAll) {
  const auto g = single_level(16, 12.8);
  EXPECT_EQ(coverage_map(g, 12.8, 12.8, 0.0, 16).covered_fraction, 1.0);
}

TEST(Coverage, DenseLimit) {
  // Spacing well below the object size: every position finds a close anchor.
  const auto g = single_level(2, 32.0);
  EXPECT_EQ(coverage_map(g, 32.0, 32.0, 0.5, 32).covered_fraction, 1.0);
}

TEST(Coverage, MonotoneInThreshold) {
  const auto g = single_level(16, 12.8, {0.5, 1.0, 2.0});
  double prev = 1.0;
  for (double t : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    const double f = coverage_map(g, 12.8, 12.8, t, 32).covered_fraction;
    EXPECT_LE(f, prev);
    prev = f;
  }
}

TEST(Coverage, MatchesPerPositionOracle) {
  const auto g = single_level(16, 12.8);
  const auto all = g.materialize();
  const auto c = coverage_map(g, 12.8, 12.8, 0.5, 32);
  for (int v = 0; v < 32; ++v)
    for (int u = 0; u < 32; ++u) {
      const auto [cx, cy] = coverage_sample(c, u, v);
      const double best = exhaustive_best(all, Box::centered(cx, cy, 12.8, 12.8)).second;
      EXPECT_EQ(c.best_iou[v * 32 + u], best);
      EXPECT_EQ(c.mask[v * 32 + u], best >= 0.5 ? 0 : 1);
    }
}

TEST(Coverage, Pgm) {
  const auto c = coverage_map(single_level(16, 12.8), 12.8, 12.8, 0.5, 4);
  std::ostringstream os;
  write_pgm(os, c);
  std::istringstream is(os.str());
  std::string magic;
  int w = 0, h = 0, maxv = 0;
  is >> magic >> w >> h >> maxv;
  EXPECT_EQ(magic, "P2");
  EXPECT_EQ(w, 4);
  EXPECT_EQ(h, 4);
  EXPECT_EQ(maxv, 255);
  for (std::size_t i = 0; i < 16; ++i) {
    int px = -1;
    is >> px;
    EXPECT_EQ(px, c.mask[i] ? 255 : 0);
  }
}

TEST(Coco, SquareImageBox) {
  const auto r = parse_coco_boxes(
      R"({"images":[{"id":1,"width":320,"height":320}],"annotations":[{"image_id":1,"bbox":[10,20,30,40]}]})", 320);
  ASSERT_EQ(r.size(), 1u);
  ASSERT_EQ(r[0].boxes.size(), 1u);
  EXPECT_EQ(r[0].boxes[0], (Box{10, 20, 40, 60}));
}

TEST(Coco, EmptyAnnotations) {
  EXPECT_TRUE(parse_coco_boxes(R"({"images":[],"annotations":[]})", 320).empty());
}

TEST(Coco, CrowdExcluded) {
  const auto r = parse_coco_boxes(R"({"images":[{"id":1,"width":320,"height":320}],
    "annotations":[{"image_id":1,"bbox":[10,20,30,40],"iscrowd":1}]})",
                                  320);
  EXPECT_TRUE(r.empty());
}

TEST(Coco, LetterboxAndClip) {
  const auto r = parse_coco_boxes(R"({"images":[{"id":7,"width":640,"height":320}],
    "annotations":[{"image_id":7,"bbox":[0,0,64,32]},{"image_id":7,"bbox":[600,300,100,100]}]})",
                                  320);
  ASSERT_EQ(r[0].boxes.size(), 2u);
  // scale 0.5, vertical pad 80
  EXPECT_EQ(r[0].boxes[0], (Box{0, 80, 32, 96}));
  EXPECT_EQ(r[0].boxes[1], (Box{300, 230, 320, 240}));
}

TEST(Coco, SyntaxErrorNamesSourceAndPosition) {
  try {
    parse_coco_boxes("{\n  \"images\": [,\n}", 320, "ann.json");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("ann.json:2:"), std::string::npos) << e.what();
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Coco, UnknownImage) {
  EXPECT_THROW(parse_coco_boxes(R"({"images":[],"annotations":[{"image_id":3,"bbox":[0,0,1,1]}]})", 320),
               ParseError);
}

TEST(Coco, MissingFile) { EXPECT_THROW(load_coco_boxes("/nonexistent/ann.json", 320), NotFoundError); }

TEST(Coco, LoadFromFile) {
  const auto path = std::filesystem::temp_directory_path() / "tinydet_coco_unit.json";
  {
    std::ofstream f(path);
    f << R"({"images":[{"id":2,"width":320,"height":320},{"id":1,"width":320,"height":320}],
      "annotations":[{"image_id":2,"bbox":[1,1,5,5]},{"image_id":1,"bbox":[2,2,5,5]}]})";
  }
  const auto r = load_coco_boxes(path, 320);
  std::filesystem::remove(path);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].image_id, 1);
  EXPECT_EQ(r[1].image_id, 2);
}

}  // namespace
}  // namespace tinydet
