#include "tinydet/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>

#include "tinydet/align.hpp"
#include "tinydet/anchors.hpp"
#include "tinydet/error.hpp"
#include "tinydet/flops.hpp"
#include "tinydet/forward.hpp"
#include "tinydet/kernels.hpp"
#include "tinydet/report.hpp"

namespace tinydet::cli {

namespace {

constexpr const char* kUsage =
    "usage: tinydet-kit <flops|align|anchors|forward|fuse-check> [args] [--format table|csv|json] [--out PATH]";

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

std::string shape_text(const TensorShape& s) {
  return std::to_string(s.batch) + "x" + std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" +
         std::to_string(s.width);
}

// ---- flops ---------------------------------------------------------------

Report flops_report(const ArchSpec& spec) {
  const FlopsReport fr = model_flops(spec);
  Report r;
  r.kind = "flops";
  r.title = "flops " + spec.name + " (input " + std::to_string(spec.input_size) + ")";
  r.columns = {{"index"}, {"layer"}, {"part"}, {"flops"}, {"mflops"}};
  for (std::size_t i = 0; i < fr.per_layer.size(); ++i) {
    const auto& l = fr.per_layer[i];
    r.rows.push_back({Cell(static_cast<std::int64_t>(i)), Cell(l.label), Cell(std::string(to_string(l.component))),
                      Cell(l.flops.exact), Cell(l.flops.mflops(), format_centi(l.flops.table_centi()))});
  }

  r.summary.push_back({"arch", spec.name});
  r.summary.push_back({"input_size", spec.input_size});
  std::string allocation;
  for (Component c : kComponents) {
    const auto& comp = fr.component(c);
    const std::string name(to_string(c));
    r.summary.push_back({name + "_flops", Cell(comp.flops.exact)});
    r.summary.push_back({name + "_table_mflops", Cell(static_cast<double>(comp.table_centi) / 100.0)});
    r.summary.push_back({name + "_mflops", Cell(comp.mflops)});
    r.summary.push_back({name + "_percent", comp.percent});
    char line[128];
    std::snprintf(line, sizeof line, "%-8s %10s MFLOPs %4d%%", name.c_str(), format_centi(comp.table_centi).c_str(),
                  comp.percent);
    r.footer.push_back(line);
    allocation += (allocation.empty() ? "" : "/") + std::to_string(comp.percent);
  }
  r.summary.push_back({"total_flops", Cell(fr.total.exact)});
  r.summary.push_back({"total_mflops", Cell(fr.total_mflops)});
  r.summary.push_back({"percent_sum", fr.percent_sum});
  if (fr.percent_sum != 100)
    r.footer.push_back("rounded shares sum to " + std::to_string(fr.percent_sum) + "%");
  r.footer.push_back("total " + std::to_string(fr.total_mflops) + " MFLOPs, allocation " + allocation);
  return r;
}

// ---- align ---------------------------------------------------------------

Report align_report(const ArchSpec& input, bool insert_pools) {
  const ArchSpec spec = insert_pools ? insert_alignment_pools(input) : input;
  const AlignmentTrace t = misalignment_trace(spec);
  Report r;
  r.kind = "align";
  r.title = "align " + spec.name + (insert_pools ? " with pools" : "");
  r.columns = {{"layer"}, {"contribution_px"}, {"accumulated_px"}};
  for (const auto& s : t.steps) r.rows.push_back({Cell(s.label), Cell(s.contribution), Cell(s.accumulated)});
  r.summary = {{"arch", spec.name},
               {"input_size", t.input_size},
               {"pools", Cell(static_cast<std::int64_t>(count_pools(spec)))},
               {"total_px", t.total},
               {"ratio", t.ratio}};
  r.footer.push_back("total " + format_double(t.total) + " px, ratio " + fixed(t.ratio, 3));
  return r;
}

// ---- anchors -------------------------------------------------------------

Report gtmr_report(const std::string& arch, const std::string& boxes_path, const AssignmentConfig& cfg) {
  const AnchorGrid grid = resolve_anchor_grid(arch);
  const auto images = load_coco_boxes(boxes_path, grid.input_size);
  std::vector<GTMRReport> parts;
  for (const auto& img : images) {
    if (img.boxes.empty()) continue;
    parts.push_back(gtmr(assign(grid, img.boxes, cfg)));
  }
  const GTMRReport g = merge(parts);

  Report r;
  r.kind = "gtmr";
  r.title = "gtmr " + arch + " (" + std::to_string(grid.size()) + " anchors, pos_iou " + format_double(cfg.pos_iou) +
            ", min_pos_iou " + format_double(cfg.min_pos_iou) + ")";
  r.columns = {{"bucket"}, {"objects"}, {"missed"}, {"gtmr"}};
  for (auto [name, b] : {std::pair{"all", &g.all}, std::pair{"small", &g.small}, std::pair{"medium", &g.medium},
                         std::pair{"large", &g.large}}) {
    const auto ratio = b->ratio();
    r.rows.push_back({Cell(name), Cell(static_cast<std::int64_t>(b->total)), Cell(static_cast<std::int64_t>(b->missed)),
                      ratio ? Cell(*ratio, fixed(*ratio, 4)) : Cell()});
  }
  r.summary = {{"arch", arch},
               {"anchors", Cell(static_cast<std::int64_t>(grid.size()))},
               {"images", Cell(static_cast<std::int64_t>(parts.size()))},
               {"pos_iou", cfg.pos_iou},
               {"min_pos_iou", cfg.min_pos_iou},
               {"gtmr", g.overall}};
  r.footer.push_back("gtmr " + fixed(g.overall, 4) + " over " + std::to_string(g.all.total) + " objects in " +
                     std::to_string(parts.size()) + " images");
  return r;
}

std::pair<double, double> parse_object(const std::string& text) {
  const auto x = text.find_first_of("xX");
  try {
    std::size_t used = 0;
    if (x == std::string::npos) {
      const double s = std::stod(text, &used);
      if (used == text.size()) return {s, s};
    } else {
      const std::string ws = text.substr(0, x), hs = text.substr(x + 1);
      std::size_t uw = 0, uh = 0;
      const double w = std::stod(ws, &uw), h = std::stod(hs, &uh);
      if (uw == ws.size() && uh == hs.size()) return {w, h};
    }
  } catch (const std::exception&) {
  }
  throw CLI::ValidationError("--object", "expected WxH, got '" + text + "'");
}

Report coverage_report(const std::string& arch, const std::string& object, double threshold, int resolution,
                       const std::string& pgm_path) {
  const auto [w, h] = parse_object(object);
  const AnchorGrid grid = resolve_anchor_grid(arch);
  const CoverageResult c = coverage_map(grid, w, h, threshold, resolution);
  if (!pgm_path.empty()) {
    std::ofstream f(pgm_path, std::ios::binary);
    if (!f) throw ValidationError("cannot write '" + pgm_path + "'");
    write_pgm(f, c);
  }

  Report r;
  r.kind = "coverage";
  r.title = "coverage " + arch + ", object " + format_double(w) + "x" + format_double(h) + ", threshold " +
            format_double(threshold);
  r.columns = {{"u"}, {"v"}, {"center_x"}, {"center_y"}, {"best_iou"}, {"overlooked"}};
  for (int v = 0; v < c.resolution; ++v)
    for (int u = 0; u < c.resolution; ++u) {
      const auto [cx, cy] = coverage_sample(c, u, v);
      const std::size_t i = static_cast<std::size_t>(v) * c.resolution + u;
      r.rows.push_back({Cell(u), Cell(v), Cell(cx), Cell(cy), Cell(c.best_iou[i]), Cell(c.mask[i] != 0)});
    }
  r.rows_in_table = false;
  r.summary = {{"arch", arch},
               {"object_w", w},
               {"object_h", h},
               {"threshold", threshold},
               {"resolution", c.resolution},
               {"period", c.period},
               {"origin_x", c.origin_x},
               {"origin_y", c.origin_y},
               {"covered_fraction", c.covered_fraction},
               {"overlooked_fraction", 1.0 - c.covered_fraction}};
  r.footer.push_back("cell " + std::to_string(c.period) + "px at (" + format_double(c.origin_x) + ", " +
                     format_double(c.origin_y) + "), " + std::to_string(c.resolution) + "x" +
                     std::to_string(c.resolution) + " samples ('#' = overlooked)");
  for (int v = 0; v < c.resolution; ++v) {
    std::string line;
    for (int u = 0; u < c.resolution; ++u) line += c.mask[static_cast<std::size_t>(v) * c.resolution + u] ? '#' : '.';
    r.footer.push_back(line);
  }
  r.footer.push_back("covered " + fixed(100.0 * c.covered_fraction, 2) + "%, overlooked " +
                     fixed(100.0 * (1.0 - c.covered_fraction), 2) + "%");
  return r;
}

// ---- forward / fuse-check ------------------------------------------------

Report forward_report(const ArchSpec& spec, const std::string& input_path, std::uint64_t seed) {
  const Tensor input = input_path.empty() ? random_input(spec, seed) : read_tensor_file(input_path);
  const auto log = toy_forward(spec, input, seed);
  Report r;
  r.kind = "forward";
  r.title = "forward " + spec.name + " (seed " + std::to_string(seed) + ")";
  r.columns = {{"stage"}, {"shape"}, {"mean"}, {"max_abs"}};
  for (const auto& s : log)
    r.rows.push_back({Cell(s.label), Cell(shape_text(s.shape)), Cell(s.mean, sci(s.mean)), Cell(s.max_abs, sci(s.max_abs))});
  r.summary = {{"arch", spec.name},
               {"seed", Cell(static_cast<std::int64_t>(seed))},
               {"input", input_path.empty() ? Cell("random") : Cell(input_path)},
               {"stages", Cell(static_cast<std::int64_t>(log.size()))}};
  return r;
}

Report fuse_report(int kernel, int size, int channels, std::uint64_t seed) {
  if (kernel < 1 || kernel % 2 == 0) throw CLI::ValidationError("--kernel", "must be an odd positive integer");
  if (size < 2) throw CLI::ValidationError("--size", "must be at least 2");
  if (size - 1 < kernel - 2 * ((kernel - 1) / 2)) throw ValidationError("map too small for the kernel");

  Rng rng(seed);
  Tensor x({1, channels, size, size});
  for (double& v : x.data()) v = static_cast<double>(rng() >> 11) * 0x1.0p-52 - 1.0;
  const ConvWeights w = random_conv(rng, channels, channels, kernel, 2, 1, true);
  const ConvWeights fused = fuse_pool_into_conv(w);
  const Tensor seq = conv2d(avgpool2(x), w);
  const Tensor one = conv2d(x, fused);
  if (seq.shape() != one.shape()) throw ValidationError("fused and sequential outputs differ in shape");

  const int border = fusion_border(w);
  const auto& s = seq.shape();
  double full = 0.0, interior = 0.0;
  std::int64_t full_n = 0, interior_n = 0;
  for (int c = 0; c < s.channels; ++c)
    for (int i = 0; i < s.height; ++i)
      for (int j = 0; j < s.width; ++j) {
        const double d = std::abs(seq.at(0, c, i, j) - one.at(0, c, i, j));
        full = std::max(full, d);
        ++full_n;
        if (i >= border && j >= border && i < s.height - border && j < s.width - border) {
          interior = std::max(interior, d);
          ++interior_n;
        }
      }
  constexpr double kTol = 1e-9;

  Report r;
  r.kind = "fuse-check";
  r.title = "fuse-check kernel " + std::to_string(kernel) + ", size " + std::to_string(size) + ", seed " +
            std::to_string(seed);
  r.columns = {{"region"}, {"outputs"}, {"max_abs_diff"}, {"within_1e-9"}};
  r.rows.push_back({Cell("full"), Cell(full_n), Cell(full, sci(full)), Cell(full <= kTol)});
  r.rows.push_back({Cell("interior"), Cell(interior_n), interior_n ? Cell(interior, sci(interior)) : Cell(),
                    interior_n ? Cell(interior <= kTol) : Cell()});
  r.summary = {{"kernel", kernel},
               {"size", size},
               {"channels", channels},
               {"seed", Cell(static_cast<std::int64_t>(seed))},
               {"border", border},
               {"max_abs_diff", full},
               {"interior_max_abs_diff", interior},
               {"equivalent", full <= kTol}};
  r.footer.push_back(std::string("fused conv ") + (full <= kTol ? "matches" : "does not match") +
                     " pool+conv on the full map" +
                     (full <= kTol ? "" : "; border width " + std::to_string(border) + " differs"));
  return r;
}

CLI::App* deepest(CLI::App* app) {
  for (CLI::App* sub : app->get_subcommands())
    if (sub->parsed()) return deepest(sub);
  return app;
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Structural analysis of TinyDet-style detectors", "tinydet-kit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string format_name;
  std::string out_path;
  app.add_option("--format", format_name, "Report format: table, csv or json (default $TINYDET_KIT_FORMAT or table)");
  app.add_option("--out", out_path, "Write the report to PATH instead of standard output");

  std::string arch;
  auto* flops = app.add_subcommand("flops", "Per-layer FLOPs and computation allocation");
  flops->add_option("arch", arch, "Builtin name or config path")->required();

  bool insert_pools = false;
  auto* align = app.add_subcommand("align", "Feature misalignment trace");
  align->add_option("arch", arch, "Builtin name or config path")->required();
  align->add_flag("--insert-pools", insert_pools, "Insert a 2x2 average pool before every stride-2 layer");

  auto* anchors = app.add_subcommand("anchors", "Anchor assignment analyses");
  anchors->require_subcommand(1);
  anchors->fallthrough();

  std::string boxes;
  AssignmentConfig cfg;
  auto* gtmr_cmd = anchors->add_subcommand("gtmr", "Ground-truth miss-assignment ratio over COCO boxes");
  gtmr_cmd->add_option("arch", arch, "Builtin name, config path or thundernet-surrogate")->required();
  gtmr_cmd->add_option("--boxes", boxes, "COCO instances annotation file")->required();
  gtmr_cmd->add_option("--pos-iou", cfg.pos_iou, "Positive IoU threshold")->capture_default_str();
  gtmr_cmd->add_option("--min-pos-iou", cfg.min_pos_iou, "Minimum IoU for a GT's best anchor")->capture_default_str();

  std::string object;
  double threshold = 0.5;
  int resolution = 64;
  std::string pgm;
  auto* coverage = anchors->add_subcommand("coverage", "Responsive and overlooked regions for one object size");
  coverage->add_option("arch", arch, "Builtin name, config path or thundernet-surrogate")->required();
  coverage->add_option("--object", object, "Object size WxH in pixels")->required();
  coverage->add_option("--threshold", threshold, "IoU threshold")->required();
  coverage->add_option("--resolution", resolution, "Samples per side")->check(CLI::Range(1, 1024))->capture_default_str();
  coverage->add_option("--pgm", pgm, "Also write the overlooked mask as a PGM image");

  std::string input_path;
  std::uint64_t seed = 0;
  auto* forward = app.add_subcommand("forward", "Random-weight forward pass with a shape log");
  forward->add_option("arch", arch, "Builtin name or config path")->required();
  forward->add_option("--input", input_path, "Input tensor blob (default: random input from the seed)");
  forward->add_option("--seed", seed, "Weight seed")->capture_default_str();

  int kernel = 3, size = 16, channels = 2;
  auto* fuse = app.add_subcommand("fuse-check", "Compare a pool folded into a stride-2 conv against pool then conv");
  fuse->add_option("--kernel", kernel, "Convolution kernel size")->required();
  fuse->add_option("--size", size, "Input height and width")->required();
  fuse->add_option("--channels", channels, "Channels")->check(CLI::Range(1, 64))->capture_default_str();
  fuse->add_option("--seed", seed, "Seed for input and weights")->capture_default_str();

  if (!args.empty() && !args.front().starts_with("-") && !app.get_subcommand_no_throw(args.front())) {
    err << "error: unknown subcommand '" << args.front() << "'\n" << kUsage << '\n';
    return kExitUsage;
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);

    if (format_name.empty()) {
      const char* env = std::getenv("TINYDET_KIT_FORMAT");
      format_name = env && *env ? env : "table";
    }
    const auto format = parse_format(format_name);
    if (!format) throw CLI::ValidationError("--format", "unknown format '" + format_name + "' (table, csv, json)");

    Report report;
    if (flops->parsed()) {
      report = flops_report(resolve_arch(arch));
    } else if (align->parsed()) {
      report = align_report(resolve_arch(arch), insert_pools);
    } else if (gtmr_cmd->parsed()) {
      report = gtmr_report(arch, boxes, cfg);
    } else if (coverage->parsed()) {
      report = coverage_report(arch, object, threshold, resolution, pgm);
    } else if (forward->parsed()) {
      report = forward_report(resolve_arch(arch), input_path, seed);
    } else {
      report = fuse_report(kernel, size, channels, seed);
    }

    std::ostringstream text;
    render(text, report, *format);
    if (out_path.empty()) {
      out << text.str();
    } else {
      std::ofstream f(out_path, std::ios::binary);
      if (!(f << text.str())) {
        err << "error: cannot write '" << out_path << "'\n";
        return kExitValidation;
      }
    }
    return kExitOk;
  } catch (const CLI::CallForHelp&) {
    out << deepest(&app)->help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << kUsage << '\n';
    return kExitUsage;
  } catch (const NotFoundError& e) {
    err << "error: " << e.what() << '\n' << kUsage << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }
}

}  // namespace tinydet::cli
