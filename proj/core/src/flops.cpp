#include "tinydet/flops.hpp"

#include <cstdio>

#include "tinydet/error.hpp"

namespace tinydet {

namespace {

using u64 = std::uint64_t;

u64 area(const Extent& e) { return static_cast<u64>(e.height) * static_cast<u64>(e.width); }

int conv_extent(int n, int kernel, int stride) {
  const int pad = (kernel - 1) / 2;
  return (n + 2 * pad - kernel) / stride + 1;
}

// Bias-free dense/grouped convolution cost on an output of `out_area` cells.
u64 conv_cost(u64 out_area, int in_channels, int out_channels, int kernel, int groups) {
  return out_area * static_cast<u64>(out_channels) * static_cast<u64>(kernel) * static_cast<u64>(kernel) *
         static_cast<u64>(in_channels / groups);
}

std::string level_tag(const Extent& e) {
  if (e.height == e.width) return std::to_string(e.height) + "^2";
  return std::to_string(e.height) + "x" + std::to_string(e.width);
}

}  // namespace

std::string format_centi(std::uint64_t centi) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%llu.%02llu", static_cast<unsigned long long>(centi / 100),
                static_cast<unsigned long long>(centi % 100));
  return buf;
}

int percent_half_up(std::uint64_t part, std::uint64_t whole) {
  if (whole == 0) return 0;
  return static_cast<int>((200 * part + whole) / (2 * whole));
}

std::string_view to_string(HeadOpKind kind) {
  switch (kind) {
    case HeadOpKind::FpnLateral: return "fpn-lateral";
    case HeadOpKind::FpnSCConv: return "fpn-scconv";
    case HeadOpKind::RpnSCConv: return "rpn-scconv";
    case HeadOpKind::RpnScore: return "rpn-score";
    case HeadOpKind::RpnBox: return "rpn-box";
  }
  return "?";
}

std::string_view to_string(Component c) {
  switch (c) {
    case Component::Backbone: return "backbone";
    case Component::Fpn: return "fpn";
    case Component::Rpn: return "rpn";
    case Component::Rcnn: return "rcnn";
  }
  return "?";
}

FlopCount layer_flops(const LayerSpec& l, const FeatureShape& in) {
  if (in.channels != l.in_channels)
    throw ValidationError(layer_label(l) + ": expects " + std::to_string(l.in_channels) + " channels, got " +
                          std::to_string(in.channels));
  if (in.height <= 0 || in.width <= 0) throw ValidationError(layer_label(l) + ": empty input");
  if (l.groups <= 0 || l.in_channels % l.groups != 0 || l.out_channels % l.groups != 0)
    throw ValidationError(layer_label(l) + ": channels not divisible by groups");

  switch (l.kind) {
    case LayerKind::AvgPool2:
      return {};
    case LayerKind::Conv2d: {
      const u64 out = static_cast<u64>(conv_extent(in.height, l.kernel, l.stride)) *
                      static_cast<u64>(conv_extent(in.width, l.kernel, l.stride));
      u64 f = conv_cost(out, l.in_channels, l.out_channels, l.kernel, l.groups);
      if (l.bias) f += out * static_cast<u64>(l.out_channels);
      return {f};
    }
    case LayerKind::SCConv: {
      const u64 out = static_cast<u64>(conv_extent(in.height, l.kernel, l.stride)) *
                      static_cast<u64>(conv_extent(in.width, l.kernel, l.stride));
      const u64 c = static_cast<u64>(l.out_channels);
      u64 f = out * c * static_cast<u64>(l.kernel * l.kernel) + out * c * static_cast<u64>(l.in_channels / l.groups);
      if (l.bias) f += 2 * out * c;
      return {f};
    }
    case LayerKind::Bneck: {
      if (l.expansion_size <= 0) throw ValidationError(layer_label(l) + ": missing expansion size");
      const u64 e = static_cast<u64>(l.expansion_size);
      const u64 in_area = static_cast<u64>(in.height) * static_cast<u64>(in.width);
      const u64 out_area = static_cast<u64>(conv_extent(in.height, l.kernel, l.stride)) *
                           static_cast<u64>(conv_extent(in.width, l.kernel, l.stride));
      u64 f = 0;
      if (l.has_expansion()) f += in_area * static_cast<u64>(l.in_channels) * e;
      f += out_area * e * static_cast<u64>(l.kernel * l.kernel);
      f += out_area * e * static_cast<u64>(l.out_channels);
      if (l.use_se) f += 2 * e * (e / 4);
      return {f};
    }
    default:
      throw ValidationError(std::string(to_string(l.kind)) + " is not a backbone layer");
  }
}

FlopCount head_flops(const HeadOp& op, std::span<const Extent> levels) {
  if (op.in_channels <= 0 || op.out_channels <= 0) throw ValidationError("head op needs positive channels");
  u64 cells = 0;
  for (const auto& e : levels) cells += area(e);

  const u64 cin = static_cast<u64>(op.in_channels);
  const u64 cout = static_cast<u64>(op.out_channels);
  switch (op.kind) {
    case HeadOpKind::FpnLateral:
    case HeadOpKind::RpnScore:
    case HeadOpKind::RpnBox:
      return {cells * cout * (cin + 1)};
    case HeadOpKind::FpnSCConv:
    case HeadOpKind::RpnSCConv: {
      if (op.in_channels != op.out_channels) throw ValidationError("SCConv preserves channels");
      if (op.groups <= 0 || op.out_channels % op.groups != 0)
        throw ValidationError("SCConv channels " + std::to_string(op.out_channels) +
                              " not divisible by groups " + std::to_string(op.groups));
      const u64 k2 = static_cast<u64>(op.kernel) * static_cast<u64>(op.kernel);
      const u64 per_group = cout / static_cast<u64>(op.groups);
      return {cells * cout * ((k2 + 1) + (per_group + 1))};
    }
  }
  return {};
}

FlopCount rcnn_flops(const RcnnConfig& c) {
  const u64 hidden = static_cast<u64>(c.hidden_dim);
  const u64 per_roi = static_cast<u64>(c.roi_feature_dim) * hidden +
                      hidden * static_cast<u64>(c.num_classes_plus_bg) + hidden * static_cast<u64>(c.box_dim);
  return {static_cast<u64>(c.num_rois) * per_roi};
}

FlopsReport model_flops(const ArchSpec& spec) {
  if (auto v = validate_arch(spec); !v.empty())
    throw ValidationError("architecture '" + spec.name + "' is invalid: " + v.front().location + " [" +
                          v.front().rule + "] " + v.front().message);

  FlopsReport report;
  report.arch = spec.name;
  auto add = [&](std::string label, Component c, FlopCount f) {
    auto& comp = report.per_component[static_cast<int>(c)];
    comp.flops += f;
    comp.table_centi += f.table_centi();
    report.per_layer.push_back({std::move(label), c, f});
  };

  const auto trace = shape_trace(spec, spec.input_size);
  for (std::size_t i = 0; i < spec.backbone.size(); ++i) {
    const auto& layer = spec.backbone[i];
    FeatureShape in = trace[i].shape;
    if (i > 0 && layer.downsamples() && spec.backbone[i - 1].kind == LayerKind::AvgPool2)
      in = trace[i - 1].shape;  // fused: the pool's own input
    add("backbone[" + std::to_string(i) + "] " + layer_label(layer), Component::Backbone, layer_flops(layer, in));
  }

  std::vector<Extent> extents;
  for (std::size_t tap : fpn_taps(spec)) {
    const auto& s = trace[tap + 1].shape;
    extents.push_back({s.height, s.width});
  }
  while (extents.size() < spec.fpn_levels.size()) {
    const Extent prev = extents.empty() ? Extent{spec.input_size, spec.input_size} : extents.back();
    extents.push_back({(prev.height + 1) / 2, (prev.width + 1) / 2});
  }

  for (std::size_t j = 0; j < spec.fpn_levels.size(); ++j) {
    const auto& lv = spec.fpn_levels[j];
    const HeadOp op{HeadOpKind::FpnLateral, lv.lateral_in_channels, lv.channels, 1, 1};
    add("fpn lateral 1x1 " + std::to_string(lv.lateral_in_channels) + "->" + std::to_string(lv.channels) + " @" +
            level_tag(extents[j]),
        Component::Fpn, head_flops(op, std::span(&extents[j], 1)));
  }
  for (std::size_t j = 0; j < spec.fpn_levels.size(); ++j) {
    const auto& lv = spec.fpn_levels[j];
    const HeadOp op{HeadOpKind::FpnSCConv, lv.channels, lv.channels, lv.scconv_groups, 3};
    add("fpn scconv g=" + std::to_string(lv.scconv_groups) + " @" + level_tag(extents[j]), Component::Fpn,
        head_flops(op, std::span(&extents[j], 1)));
  }

  if (!spec.fpn_levels.empty()) {
    const int c = spec.fpn_levels.front().channels;
    const int a = spec.rpn.anchors_per_location;
    add("rpn scconv g=" + std::to_string(spec.rpn.scconv_groups) + " (shared)", Component::Rpn,
        head_flops({HeadOpKind::RpnSCConv, c, c, spec.rpn.scconv_groups, 3}, extents));
    add("rpn score 1x1 " + std::to_string(c) + "->" + std::to_string(a) + " (shared)", Component::Rpn,
        head_flops({HeadOpKind::RpnScore, c, a, 1, 1}, extents));
    add("rpn box 1x1 " + std::to_string(c) + "->" + std::to_string(4 * a) + " (shared)", Component::Rpn,
        head_flops({HeadOpKind::RpnBox, c, 4 * a, 1, 1}, extents));
  }

  const auto& r = spec.rcnn;
  add("rcnn fc " + std::to_string(r.roi_feature_dim) + "->" + std::to_string(r.hidden_dim) + "->" +
          std::to_string(r.num_classes_plus_bg) + "+" + std::to_string(r.box_dim) + " x" +
          std::to_string(r.num_rois) + " rois",
      Component::Rcnn, rcnn_flops(r));

  for (const auto& comp : report.per_component) report.total += comp.flops;
  report.total_mflops = round_mflops(report.total.exact);
  for (auto& comp : report.per_component) {
    comp.mflops = round_mflops(comp.flops.exact);
    comp.percent = percent_half_up(comp.flops.exact, report.total.exact);
    report.percent_sum += comp.percent;
  }
  return report;
}

}  // namespace tinydet
