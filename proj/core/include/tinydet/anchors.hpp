#pragma once

// Anchor tiling, IoU assignment, ground-truth miss-assignment ratio (GTMR)
// and coverage of the "overlooked" regions between anchors.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tinydet/archspec.hpp"

namespace tinydet {

/// Corner-form box in pixels.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  bool valid() const { return x2 > x1 && y2 > y1; }

  static Box centered(double cx, double cy, double w, double h) {
    return {cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0};
  }
  bool operator==(const Box&) const = default;
};

double iou(const Box& a, const Box& b);

/// Anchors of one pyramid level: (input/stride)^2 centers at
/// stride/2 + i*stride, one anchor per aspect ratio r with width size*sqrt(r)
/// and height size/sqrt(r).
struct AnchorLevel {
  int stride = 0;
  double size = 0.0;
  std::vector<double> aspect_ratios;
  int cells = 0;  // per side

  std::size_t count() const {
    return static_cast<std::size_t>(cells) * static_cast<std::size_t>(cells) * aspect_ratios.size();
  }
  double center(int i) const { return stride / 2.0 + static_cast<double>(i) * stride; }
  Box anchor(int row, int col, std::size_t ratio) const;
};

/// Anchors are indexed level-major, then row, column, aspect ratio.
struct AnchorGrid {
  int input_size = 0;
  std::vector<AnchorLevel> levels;

  std::size_t size() const;
  Box at(std::size_t index) const;
  std::vector<Box> materialize() const;
};

struct LevelConfig {
  int stride = 0;
  double size = 0.0;
  std::vector<double> aspect_ratios{0.5, 1.0, 2.0};
};

/// Throws ValidationError when input_size is not a multiple of a stride.
AnchorGrid tile_anchors(std::span<const LevelConfig> levels, int input_size);
AnchorGrid tile_anchors(const ArchSpec& spec);

/// Single stride-16 map carrying five anchor sizes (12.8 ... 204.8), a
/// stand-in for a ThunderNet-style sparse layout.
AnchorGrid thundernet_surrogate_grid(int input_size = 320);

/// Builtin/config architecture, or "thundernet-surrogate".
AnchorGrid resolve_anchor_grid(std::string_view name_or_path);

struct AssignmentConfig {
  double pos_iou = 0.7;
  double min_pos_iou = 0.3;
};

struct GtAssignment {
  Box gt;
  std::optional<std::size_t> best_anchor;  // empty when no anchor overlaps
  double best_iou = 0.0;
  bool assigned = false;
};

struct Assignment {
  std::vector<GtAssignment> gts;
};

/// Best anchor per ground truth (ties go to the lowest index). A GT is
/// assigned if its best IoU exceeds pos_iou or reaches min_pos_iou.
Assignment assign(const AnchorGrid& grid, std::span<const Box> gts, const AssignmentConfig& cfg = {});

/// Best IoU and anchor for one box, searching only lattice cells near it.
std::pair<std::optional<std::size_t>, double> best_match(const AnchorGrid& grid, const Box& box);

enum class ScaleBucket { Small, Medium, Large };

/// COCO buckets: area < 32^2, 32^2..96^2, > 96^2.
ScaleBucket scale_bucket(const Box& b);

struct BucketStats {
  std::size_t total = 0;
  std::size_t missed = 0;
  std::optional<double> ratio() const {
    if (total == 0) return std::nullopt;
    return static_cast<double>(missed) / static_cast<double>(total);
  }
};

struct GTMRReport {
  double overall = 0.0;
  BucketStats all;
  BucketStats small;
  BucketStats medium;
  BucketStats large;
};

/// Throws ValidationError("GTMR undefined ...") when there are no GTs.
GTMRReport gtmr(const Assignment& a);

/// Merge of per-image counts; order-independent.
GTMRReport merge(std::span<const GTMRReport> parts);

struct CoverageResult {
  int resolution = 0;
  int period = 0;              // lattice cell side swept, pixels
  double origin_x = 0.0;       // top-left of the swept cell
  double origin_y = 0.0;
  double covered_fraction = 0.0;
  std::vector<double> best_iou;   // row-major resolution x resolution
  std::vector<std::uint8_t> mask;  // 1 = overlooked (best IoU below threshold)
};

/// Sample position (u, v) of the coverage sweep: the object's center.
std::pair<double, double> coverage_sample(const CoverageResult& r, int u, int v);

/// Sweeps an object of the given size over resolution^2 sample centers in
/// one lattice cell (side = the grid's largest stride) near the image center.
CoverageResult coverage_map(const AnchorGrid& grid, double object_w, double object_h, double threshold,
                            int resolution);

/// Overlooked mask as plain PGM (P2), 255 = overlooked.
void write_pgm(std::ostream& out, const CoverageResult& r);

struct ImageBoxes {
  std::int64_t image_id = 0;
  std::vector<Box> boxes;
};

/// Letterboxes every image into input_size^2 (longer side scaled to fit,
/// shorter side centered with padding), converts xywh boxes to corners,
/// clips them to the image and drops crowd and degenerate annotations.
/// Output is sorted by image id.
std::vector<ImageBoxes> parse_coco_boxes(std::string_view text, int input_size, std::string_view source = "<memory>");
std::vector<ImageBoxes> load_coco_boxes(const std::filesystem::path& path, int input_size);

}  // namespace tinydet
