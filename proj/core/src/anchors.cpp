#include "tinydet/anchors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tinydet/error.hpp"

namespace tinydet {

double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

Box AnchorLevel::anchor(int row, int col, std::size_t ratio) const {
  const double r = std::sqrt(aspect_ratios[ratio]);
  return Box::centered(center(col), center(row), size * r, size / r);
}

std::size_t AnchorGrid::size() const {
  std::size_t n = 0;
  for (const auto& lv : levels) n += lv.count();
  return n;
}

Box AnchorGrid::at(std::size_t index) const {
  for (const auto& lv : levels) {
    if (index < lv.count()) {
      const std::size_t nr = lv.aspect_ratios.size();
      const std::size_t cell = index / nr;
      return lv.anchor(static_cast<int>(cell / lv.cells), static_cast<int>(cell % lv.cells), index % nr);
    }
    index -= lv.count();
  }
  throw ValidationError("anchor index out of range");
}

std::vector<Box> AnchorGrid::materialize() const {
  std::vector<Box> out;
  out.reserve(size());
  for (const auto& lv : levels)
    for (int r = 0; r < lv.cells; ++r)
      for (int c = 0; c < lv.cells; ++c)
        for (std::size_t k = 0; k < lv.aspect_ratios.size(); ++k) out.push_back(lv.anchor(r, c, k));
  return out;
}

AnchorGrid tile_anchors(std::span<const LevelConfig> levels, int input_size) {
  if (input_size <= 0) throw ValidationError("anchor tiling needs a positive input size");
  AnchorGrid grid{input_size, {}};
  for (const auto& lv : levels) {
    if (lv.stride <= 0 || input_size % lv.stride != 0)
      throw ValidationError("input size " + std::to_string(input_size) + " is not divisible by anchor stride " +
                            std::to_string(lv.stride));
    if (!(lv.size > 0.0) || lv.aspect_ratios.empty())
      throw ValidationError("anchor level needs a positive size and at least one aspect ratio");
    grid.levels.push_back({lv.stride, lv.size, lv.aspect_ratios, input_size / lv.stride});
  }
  return grid;
}

AnchorGrid tile_anchors(const ArchSpec& spec) {
  if (spec.rpn.anchor_sizes.size() != spec.fpn_levels.size())
    throw ValidationError("architecture '" + spec.name + "' needs one anchor size per pyramid level");
  std::vector<LevelConfig> levels;
  for (std::size_t i = 0; i < spec.fpn_levels.size(); ++i)
    levels.push_back({spec.fpn_levels[i].stride, spec.rpn.anchor_sizes[i], spec.rpn.aspect_ratios});
  return tile_anchors(levels, spec.input_size);
}

AnchorGrid thundernet_surrogate_grid(int input_size) {
  std::vector<LevelConfig> levels;
  for (double size : {12.8, 25.6, 51.2, 102.4, 204.8}) levels.push_back({16, size, {0.5, 1.0, 2.0}});
  return tile_anchors(levels, input_size);
}

AnchorGrid resolve_anchor_grid(std::string_view name_or_path) {
  if (name_or_path == "thundernet-surrogate") return thundernet_surrogate_grid(320);
  return tile_anchors(resolve_arch(name_or_path));
}

std::pair<std::optional<std::size_t>, double> best_match(const AnchorGrid& grid, const Box& box) {
  std::optional<std::size_t> best;
  double best_iou = 0.0;
  const double gcx = (box.x1 + box.x2) / 2.0;
  const double gcy = (box.y1 + box.y2) / 2.0;

  std::size_t offset = 0;
  for (const auto& lv : grid.levels) {
    const std::size_t nr = lv.aspect_ratios.size();
    for (std::size_t k = 0; k < nr; ++k) {
      const Box proto = lv.anchor(0, 0, k);
      // Cells whose anchor can overlap the box, padded by one on each side.
      auto range = [&](double g, double reach) {
        const double lo = std::ceil((g - reach - lv.stride / 2.0) / lv.stride) - 1.0;
        const double hi = std::floor((g + reach - lv.stride / 2.0) / lv.stride) + 1.0;
        return std::pair<int, int>{static_cast<int>(std::max(lo, 0.0)),
                                   static_cast<int>(std::min(hi, static_cast<double>(lv.cells - 1)))};
      };
      const auto [c0, c1] = range(gcx, (proto.width() + box.width()) / 2.0);
      const auto [r0, r1] = range(gcy, (proto.height() + box.height()) / 2.0);
      for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
          const double v = iou(lv.anchor(r, c, k), box);
          if (v <= 0.0) continue;
          const std::size_t idx = offset + (static_cast<std::size_t>(r) * lv.cells + c) * nr + k;
          if (v > best_iou || (v == best_iou && best && idx < *best)) {
            best_iou = v;
            best = idx;
          }
        }
      }
    }
    offset += lv.count();
  }
  return {best, best_iou};
}

Assignment assign(const AnchorGrid& grid, std::span<const Box> gts, const AssignmentConfig& cfg) {
  if (grid.size() == 0) throw ValidationError("cannot assign against an empty anchor grid");
  if (!(cfg.min_pos_iou <= cfg.pos_iou))
    throw ValidationError("min_pos_iou must not exceed pos_iou");
  Assignment out;
  out.gts.reserve(gts.size());
  for (const auto& gt : gts) {
    auto [idx, best] = best_match(grid, gt);
    out.gts.push_back({gt, idx, best, best > cfg.pos_iou || best >= cfg.min_pos_iou});
  }
  return out;
}

ScaleBucket scale_bucket(const Box& b) {
  const double a = b.area();
  if (a < 32.0 * 32.0) return ScaleBucket::Small;
  if (a <= 96.0 * 96.0) return ScaleBucket::Medium;
  return ScaleBucket::Large;
}

GTMRReport gtmr(const Assignment& a) {
  if (a.gts.empty()) throw ValidationError("GTMR undefined: no ground-truth objects");
  GTMRReport r;
  for (const auto& g : a.gts) {
    BucketStats* bucket = nullptr;
    switch (scale_bucket(g.gt)) {
      case ScaleBucket::Small: bucket = &r.small; break;
      case ScaleBucket::Medium: bucket = &r.medium; break;
      case ScaleBucket::Large: bucket = &r.large; break;
    }
    ++bucket->total;
    ++r.all.total;
    if (!g.assigned) {
      ++bucket->missed;
      ++r.all.missed;
    }
  }
  r.overall = *r.all.ratio();
  return r;
}

GTMRReport merge(std::span<const GTMRReport> parts) {
  GTMRReport r;
  for (const auto& p : parts) {
    for (auto [dst, src] : {std::pair{&r.all, &p.all}, std::pair{&r.small, &p.small},
                            std::pair{&r.medium, &p.medium}, std::pair{&r.large, &p.large}}) {
      dst->total += src->total;
      dst->missed += src->missed;
    }
  }
  if (r.all.total == 0) throw ValidationError("GTMR undefined: no ground-truth objects");
  r.overall = *r.all.ratio();
  return r;
}

std::pair<double, double> coverage_sample(const CoverageResult& r, int u, int v) {
  const double step = static_cast<double>(r.period) / r.resolution;
  return {r.origin_x + (u + 0.5) * step, r.origin_y + (v + 0.5) * step};
}

CoverageResult coverage_map(const AnchorGrid& grid, double object_w, double object_h, double threshold,
                            int resolution) {
  if (grid.levels.empty()) throw ValidationError("coverage needs a non-empty anchor grid");
  if (resolution < 1) throw ValidationError("coverage resolution must be at least 1");
  if (!(object_w > 0.0) || !(object_h > 0.0)) throw ValidationError("coverage object must have positive size");

  CoverageResult r;
  r.resolution = resolution;
  for (const auto& lv : grid.levels) r.period = std::max(r.period, lv.stride);
  const double origin = std::floor(grid.input_size / 2.0 / r.period) * r.period;
  r.origin_x = origin;
  r.origin_y = origin;
  r.best_iou.resize(static_cast<std::size_t>(resolution) * resolution);
  r.mask.resize(r.best_iou.size());

  std::size_t covered = 0;
  for (int v = 0; v < resolution; ++v) {
    for (int u = 0; u < resolution; ++u) {
      const auto [cx, cy] = coverage_sample(r, u, v);
      const double best = best_match(grid, Box::centered(cx, cy, object_w, object_h)).second;
      const std::size_t i = static_cast<std::size_t>(v) * resolution + u;
      r.best_iou[i] = best;
      const bool ok = best >= threshold;
      r.mask[i] = ok ? 0 : 1;
      covered += ok ? 1 : 0;
    }
  }
  r.covered_fraction = static_cast<double>(covered) / static_cast<double>(r.best_iou.size());
  return r;
}

void write_pgm(std::ostream& out, const CoverageResult& r) {
  out << "P2\n" << r.resolution << ' ' << r.resolution << "\n255\n";
  for (int v = 0; v < r.resolution; ++v) {
    for (int u = 0; u < r.resolution; ++u) {
      if (u) out << ' ';
      out << (r.mask[static_cast<std::size_t>(v) * r.resolution + u] ? 255 : 0);
    }
    out << '\n';
  }
}

// ---- COCO ingestion ------------------------------------------------------

namespace {

using Json = nlohmann::json;

[[noreturn]] void coco_error(std::string_view source, const std::string& what) {
  throw ParseError(std::string(source) + ": " + what);
}

double number(const Json& j, const char* key, std::string_view source, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_number()) coco_error(source, where + " lacks numeric '" + key + "'");
  return it->get<double>();
}

}  // namespace

std::vector<ImageBoxes> parse_coco_boxes(std::string_view text, int input_size, std::string_view source) {
  if (input_size <= 0) throw ValidationError("COCO rescaling needs a positive input size");
  Json doc;
  try {
    doc = Json::parse(text.begin(), text.end());
  } catch (const Json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ParseError(std::string(source) + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " +
                         e.what(),
                     line, col);
  }
  if (!doc.is_object()) coco_error(source, "annotation document must be an object");

  struct ImageInfo {
    double width;
    double height;
  };
  std::map<std::int64_t, ImageInfo> images;
  if (auto it = doc.find("images"); it != doc.end()) {
    if (!it->is_array()) coco_error(source, "'images' must be an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const auto& img = (*it)[i];
      const std::string where = "images[" + std::to_string(i) + "]";
      if (!img.is_object() || !img.contains("id") || !img["id"].is_number_integer())
        coco_error(source, where + " lacks an integer 'id'");
      images[img["id"].get<std::int64_t>()] = {number(img, "width", source, where),
                                               number(img, "height", source, where)};
    }
  }

  std::map<std::int64_t, std::vector<Box>> grouped;
  auto anns = doc.find("annotations");
  if (anns == doc.end()) return {};
  if (!anns->is_array()) coco_error(source, "'annotations' must be an array");
  const double side = input_size;
  for (std::size_t i = 0; i < anns->size(); ++i) {
    const auto& a = (*anns)[i];
    const std::string where = "annotations[" + std::to_string(i) + "]";
    if (!a.is_object()) coco_error(source, where + " must be an object");
    if (auto c = a.find("iscrowd"); c != a.end() && c->is_number() && c->get<double>() != 0.0) continue;
    if (!a.contains("image_id") || !a["image_id"].is_number_integer())
      coco_error(source, where + " lacks an integer 'image_id'");
    const auto image_id = a["image_id"].get<std::int64_t>();
    const auto& bbox = a.contains("bbox") ? a["bbox"] : Json();
    if (!bbox.is_array() || bbox.size() != 4 ||
        !std::all_of(bbox.begin(), bbox.end(), [](const Json& v) { return v.is_number(); }))
      coco_error(source, where + " needs a 4-number 'bbox'");
    auto img = images.find(image_id);
    if (img == images.end())
      coco_error(source, where + " references unknown image id " + std::to_string(image_id));
    const auto [w, h] = img->second;
    if (!(w > 0.0) || !(h > 0.0)) coco_error(source, "image " + std::to_string(image_id) + " has no size");

    const double scale = side / std::max(w, h);
    const double pad_x = (side - w * scale) / 2.0;
    const double pad_y = (side - h * scale) / 2.0;
    const double x = bbox[0].get<double>(), y = bbox[1].get<double>();
    const double bw = bbox[2].get<double>(), bh = bbox[3].get<double>();
    Box b{x * scale + pad_x, y * scale + pad_y, (x + bw) * scale + pad_x, (y + bh) * scale + pad_y};
    // clip to the scaled image, not the padded canvas
    const double right = pad_x + w * scale, bottom = pad_y + h * scale;
    b.x1 = std::clamp(b.x1, pad_x, right);
    b.y1 = std::clamp(b.y1, pad_y, bottom);
    b.x2 = std::clamp(b.x2, pad_x, right);
    b.y2 = std::clamp(b.y2, pad_y, bottom);
    if (!b.valid()) continue;
    grouped[image_id].push_back(b);
  }

  std::vector<ImageBoxes> out;
  for (auto& [id, boxes] : grouped) out.push_back({id, std::move(boxes)});
  return out;
}

std::vector<ImageBoxes> load_coco_boxes(const std::filesystem::path& path, int input_size) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open annotation file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_coco_boxes(buf.str(), input_size, path.string());
}

}  // namespace tinydet
