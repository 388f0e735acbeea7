#include "tinydet/align.hpp"

#include <algorithm>

#include "tinydet/error.hpp"

namespace tinydet {

CoordMap propagate_coord(const CoordMap& m, const LayerSpec& layer) {
  CoordMap out = m;
  if (layer.kind == LayerKind::AvgPool2) {
    if (m.size < 2) throw ValidationError("avgpool needs a map of at least 2, got " + std::to_string(m.size));
    // The pool's half-cell shift is undone by the odd-sized strided conv that follows.
    out.size = m.size - 1;
    return out;
  }
  if (m.size < layer.kernel)
    throw ValidationError(layer_label(layer) + ": map of size " + std::to_string(m.size) + " smaller than kernel");
  if (layer.stride == 2) {
    if (m.size % 2 == 0) {
      out.offset += m.stride / 2.0;
      out.size = m.size / 2;
    } else {
      out.size = (m.size + 1) / 2;
    }
    out.stride = m.stride * 2;
  }
  return out;
}

namespace {

struct Folder {
  CoordMap map;
  AlignmentTrace trace;

  void apply(const LayerSpec& layer, std::string label) {
    const CoordMap next = propagate_coord(map, layer);
    if (layer.stride == 2) {
      const double contribution = next.offset - map.offset;
      trace.total += contribution;
      trace.steps.push_back({std::move(label), contribution, trace.total});
    }
    map = next;
  }
};

}  // namespace

AlignmentTrace trace_layers(std::span<const LayerSpec> layers, int input_size) {
  Folder f{{1, 0.0, input_size}, {}};
  f.trace.input_size = input_size;
  for (std::size_t i = 0; i < layers.size(); ++i)
    f.apply(layers[i], "backbone[" + std::to_string(i) + "] " + layer_label(layers[i]));
  f.trace.ratio = input_size > 0 ? f.trace.total / input_size : 0.0;
  return f.trace;
}

AlignmentTrace misalignment_trace(const ArchSpec& spec) {
  if (auto v = validate_arch(spec); !v.empty())
    throw ValidationError("architecture '" + spec.name + "' is invalid: " + v.front().location + " [" +
                          v.front().rule + "] " + v.front().message);
  Folder f{{1, 0.0, spec.input_size}, {}};
  f.trace.input_size = spec.input_size;
  for (std::size_t i = 0; i < spec.backbone.size(); ++i)
    f.apply(spec.backbone[i], "backbone[" + std::to_string(i) + "] " + layer_label(spec.backbone[i]));

  const int top = spec.fpn_levels.empty() ? 1 : spec.fpn_levels.back().stride;
  const int channels = spec.backbone.empty() ? 3 : spec.backbone.back().out_channels;
  while (f.map.stride < top) {
    const auto extra = LayerSpec::conv(3, 2, channels, channels, Nonlinearity::None);
    f.apply(extra, "pyramid s" + std::to_string(f.map.stride * 2) + " downsample");
  }
  f.trace.ratio = f.trace.total / spec.input_size;
  return f.trace;
}

ArchSpec insert_alignment_pools(const ArchSpec& spec) {
  ArchSpec out = spec;
  out.backbone.clear();
  for (std::size_t i = 0; i < spec.backbone.size(); ++i) {
    const auto& l = spec.backbone[i];
    const bool pooled = i > 0 && spec.backbone[i - 1].kind == LayerKind::AvgPool2;
    if (l.kind != LayerKind::AvgPool2 && l.stride == 2 && !pooled)
      out.backbone.push_back(LayerSpec::avg_pool(l.in_channels));
    out.backbone.push_back(l);
  }
  return out;
}

std::size_t count_pools(const ArchSpec& spec) {
  return static_cast<std::size_t>(std::count_if(spec.backbone.begin(), spec.backbone.end(),
                                                [](const LayerSpec& l) { return l.kind == LayerKind::AvgPool2; }));
}

}  // namespace tinydet
