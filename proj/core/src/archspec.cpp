#include "tinydet/archspec.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tinydet/error.hpp"

namespace tinydet {

namespace {

constexpr std::array<std::string_view, 3> kBuiltinNames{"tinydet-s", "tinydet-m", "tinydet-l"};
constexpr int kImageChannels = 3;

constexpr auto RE = Nonlinearity::ReLU;
constexpr auto HS = Nonlinearity::HSwish;

// MobileNetV3-D, the TinyDet-S backbone.
std::vector<LayerSpec> mobilenet_v3_d() {
  using L = LayerSpec;
  return {
      L::conv(3, 2, 3, 16, HS),
      L::bneck(3, 16, 16, 16, false, RE, 1),
      L::bneck(3, 16, 64, 24, false, RE, 2),
      L::bneck(3, 24, 72, 24, false, RE, 1),
      L::bneck(5, 24, 72, 40, true, RE, 2),
      L::bneck(5, 40, 120, 40, true, RE, 1),
      L::bneck(5, 40, 120, 40, true, RE, 1, true),
      L::bneck(3, 40, 240, 80, false, HS, 2),
      L::bneck(3, 80, 240, 80, false, HS, 1),
      L::bneck(5, 80, 240, 80, false, HS, 1),
      L::bneck(5, 80, 240, 80, false, HS, 1),
      L::bneck(3, 80, 240, 112, true, HS, 1),
      L::bneck(3, 112, 336, 112, true, HS, 1, true),
      L::bneck(5, 112, 336, 160, true, HS, 2),
      L::bneck(5, 160, 480, 160, true, HS, 1),
      L::bneck(5, 160, 480, 160, true, HS, 1, true),
      // Final stride-2 block is itself the stride-64 tap.
      L::bneck(5, 160, 960, 160, true, HS, 2, true),
  };
}

// MobileNetV3-BC, shared by TinyDet-M and TinyDet-L.
std::vector<LayerSpec> mobilenet_v3_bc() {
  using L = LayerSpec;
  return {
      L::conv(3, 2, 3, 24, HS),                     // c + 50%
      L::bneck(3, 24, 24, 24, false, RE, 1),        // c + 50%
      L::bneck(3, 24, 72, 36, false, RE, 2),        // c + 50%
      L::bneck(3, 36, 108, 36, false, RE, 1),       // added block
      L::bneck(3, 36, 108, 36, false, RE, 1),       // added block
      L::bneck(3, 36, 108, 36, false, RE, 1, true), // c + 50%
      L::bneck(5, 36, 108, 60, true, RE, 2),        // c + 50%
      L::bneck(5, 60, 180, 60, true, RE, 1),        // c + 50%
      L::bneck(5, 60, 180, 60, true, RE, 1, true),  // c + 50%
      L::bneck(3, 60, 240, 80, false, HS, 2),
      L::bneck(3, 80, 200, 80, false, HS, 1),
      L::bneck(3, 80, 184, 80, false, HS, 1),
      L::bneck(3, 80, 184, 80, false, HS, 1),
      L::bneck(3, 80, 480, 112, true, HS, 1),
      L::bneck(3, 112, 672, 112, true, HS, 1, true),
      L::bneck(5, 112, 672, 160, true, HS, 2),
      L::bneck(5, 160, 960, 160, true, HS, 1),
      L::bneck(5, 160, 960, 160, true, HS, 1, true),
      L::bneck(5, 160, 960, 160, true, HS, 2),
      L::bneck(5, 160, 960, 160, true, HS, 1, true),
  };
}

std::vector<PyramidLevel> five_levels() {
  return {{4, 36, 245, 49}, {8, 60, 245, 7}, {16, 112, 245, 5}, {32, 160, 245, 1}, {64, 160, 245, 1}};
}

ArchSpec make_tinydet_s() {
  ArchSpec spec;
  spec.name = "tinydet-s";
  spec.input_size = 320;
  spec.backbone = mobilenet_v3_d();
  spec.fpn_levels = {{8, 40, 245, 7}, {16, 112, 245, 5}, {32, 160, 245, 1}, {64, 160, 245, 1}};
  spec.rpn.anchor_sizes = {25.6, 51.2, 102.4, 204.8};
  return spec;
}

ArchSpec make_tinydet_m() {
  ArchSpec spec;
  spec.name = "tinydet-m";
  spec.input_size = 320;
  spec.backbone = mobilenet_v3_bc();
  spec.fpn_levels = five_levels();
  spec.rpn.anchor_sizes = {12.8, 25.6, 51.2, 102.4, 204.8};
  return spec;
}

ArchSpec make_tinydet_l() {
  ArchSpec spec = make_tinydet_m();
  spec.name = "tinydet-l";
  spec.input_size = 512;
  return spec;
}

bool is_backbone_kind(LayerKind kind) {
  return kind == LayerKind::Conv2d || kind == LayerKind::Bneck || kind == LayerKind::AvgPool2 ||
         kind == LayerKind::SCConv;
}

std::string backbone_location(std::size_t i) { return "backbone[" + std::to_string(i) + "]"; }

class ViolationSink {
 public:
  void layer(std::size_t i, std::string rule, std::string message) {
    out_.push_back({backbone_location(i), i, std::move(rule), std::move(message)});
  }
  void at(std::string location, std::string rule, std::string message) {
    out_.push_back({std::move(location), std::nullopt, std::move(rule), std::move(message)});
  }
  std::vector<Violation> take() { return std::move(out_); }

 private:
  std::vector<Violation> out_;
};

void check_layer(const LayerSpec& l, std::size_t i, ViolationSink& sink) {
  if (!is_backbone_kind(l.kind)) {
    sink.layer(i, "kind", std::string(to_string(l.kind)) + " is a head operation, not a backbone layer");
    return;
  }
  if (l.kind == LayerKind::AvgPool2) {
    if (l.kernel != 2) sink.layer(i, "kernel", "AvgPool2 must have kernel 2");
    if (l.stride != 1) sink.layer(i, "stride", "AvgPool2 must have stride 1");
    if (l.in_channels != l.out_channels) sink.layer(i, "channels", "AvgPool2 preserves channels");
  } else {
    if (l.kernel != 1 && l.kernel != 3 && l.kernel != 5)
      sink.layer(i, "kernel", "kernel " + std::to_string(l.kernel) + " not in {1,3,5}");
    if (l.stride != 1 && l.stride != 2)
      sink.layer(i, "stride", "stride " + std::to_string(l.stride) + " not in {1,2}");
  }
  if (l.in_channels <= 0 || l.out_channels <= 0) {
    sink.layer(i, "channels", "channel counts must be positive");
    return;
  }
  if (l.groups <= 0) {
    sink.layer(i, "divisibility", "groups must be positive");
  } else if (l.in_channels % l.groups != 0 || l.out_channels % l.groups != 0) {
    sink.layer(i, "divisibility",
               "channels " + std::to_string(l.in_channels) + "->" + std::to_string(l.out_channels) +
                   " not divisible by groups " + std::to_string(l.groups));
  }
  if (l.kind == LayerKind::SCConv && l.in_channels != l.out_channels)
    sink.layer(i, "channels", "SCConv preserves channels");
  if (l.kind == LayerKind::Bneck && l.expansion_size <= 0)
    sink.layer(i, "expansion", "Bneck needs a positive expansion_size");
  if (l.kind == LayerKind::Bneck && l.use_se && l.expansion_size > 0 && l.expansion_size / 4 == 0)
    sink.layer(i, "expansion", "SE squeeze width expansion_size/4 is zero");
}

void check_levels(const ArchSpec& spec, ViolationSink& sink) {
  constexpr std::array<int, 5> kStrides{4, 8, 16, 32, 64};
  const auto taps = fpn_taps(spec);

  std::vector<int> tap_strides;
  std::vector<int> tap_channels;
  int cumulative = 1;
  for (std::size_t i = 0, t = 0; i < spec.backbone.size(); ++i) {
    cumulative *= std::max(spec.backbone[i].stride, 1);
    if (t < taps.size() && taps[t] == i) {
      tap_strides.push_back(cumulative);
      tap_channels.push_back(spec.backbone[i].out_channels);
      ++t;
    }
  }

  if (taps.size() > spec.fpn_levels.size()) {
    sink.at("fpn_levels", "tap_count",
            std::to_string(taps.size()) + " backbone taps but only " +
                std::to_string(spec.fpn_levels.size()) + " pyramid levels");
  }

  for (std::size_t j = 0; j < spec.fpn_levels.size(); ++j) {
    const auto& lv = spec.fpn_levels[j];
    const std::string loc = "fpn_levels[" + std::to_string(j) + "]";
    if (std::find(kStrides.begin(), kStrides.end(), lv.stride) == kStrides.end())
      sink.at(loc, "stride", "stride " + std::to_string(lv.stride) + " not in {4,8,16,32,64}");
    if (j > 0 && lv.stride <= spec.fpn_levels[j - 1].stride)
      sink.at(loc, "ordering", "pyramid strides must be strictly increasing");
    if (lv.channels <= 0 || lv.lateral_in_channels <= 0) {
      sink.at(loc, "channels", "channel counts must be positive");
      continue;
    }
    if (lv.scconv_groups <= 0 || lv.channels % lv.scconv_groups != 0)
      sink.at(loc, "divisibility",
              "channels " + std::to_string(lv.channels) + " not divisible by SCConv groups " +
                  std::to_string(lv.scconv_groups));
    if (j < tap_strides.size()) {
      if (tap_strides[j] != lv.stride)
        sink.at(loc, "tap_stride",
                "backbone tap has cumulative stride " + std::to_string(tap_strides[j]) +
                    ", level declares " + std::to_string(lv.stride));
      if (tap_channels[j] != lv.lateral_in_channels)
        sink.at(loc, "lateral_channels",
                "backbone tap has " + std::to_string(tap_channels[j]) + " channels, level declares " +
                    std::to_string(lv.lateral_in_channels));
    } else if (j > 0 && lv.stride != 2 * spec.fpn_levels[j - 1].stride) {
      sink.at(loc, "tap_stride", "extra pyramid levels must downsample the previous level by 2");
    }
    if (lv.channels != spec.fpn_levels.front().channels)
      sink.at(loc, "rpn_channels", "the shared RPN head needs equal channels on every level");
    else if (spec.rpn.scconv_groups > 0 && lv.channels % spec.rpn.scconv_groups != 0)
      sink.at(loc, "divisibility", "channels not divisible by RPN SCConv groups");
  }
}

void check_heads(const ArchSpec& spec, ViolationSink& sink) {
  const auto& rpn = spec.rpn;
  if (rpn.scconv_groups <= 0) sink.at("rpn", "divisibility", "scconv_groups must be positive");
  if (rpn.anchors_per_location <= 0)
    sink.at("rpn", "anchors", "anchors_per_location must be positive");
  if (rpn.anchor_sizes.size() != spec.fpn_levels.size())
    sink.at("rpn", "anchor_sizes",
            std::to_string(rpn.anchor_sizes.size()) + " anchor sizes for " +
                std::to_string(spec.fpn_levels.size()) + " pyramid levels");
  if (std::any_of(rpn.anchor_sizes.begin(), rpn.anchor_sizes.end(), [](double s) { return !(s > 0); }))
    sink.at("rpn", "anchor_sizes", "anchor sizes must be positive");
  if (rpn.aspect_ratios.empty() ||
      std::any_of(rpn.aspect_ratios.begin(), rpn.aspect_ratios.end(), [](double r) { return !(r > 0); }))
    sink.at("rpn", "aspect_ratios", "aspect ratios must be non-empty and positive");
  else if (static_cast<std::size_t>(rpn.anchors_per_location) != rpn.aspect_ratios.size())
    sink.at("rpn", "anchors", "anchors_per_location must equal the number of aspect ratios");

  const auto& r = spec.rcnn;
  if (r.roi_feature_dim <= 0 || r.hidden_dim <= 0 || r.num_classes_plus_bg <= 0 || r.box_dim <= 0 ||
      r.num_rois <= 0)
    sink.at("rcnn", "positive", "all R-CNN dimensions must be positive");
}

// ---- JSON ----------------------------------------------------------------

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

[[noreturn]] void schema_error(const std::string& where, const std::string& what) {
  throw ParseError(where + ": " + what);
}

const Json& require(const Json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) schema_error(where, std::string("missing required field '") + key + "'");
  return *it;
}

int get_int(const Json& obj, const char* key, const std::string& where,
            std::optional<int> fallback = std::nullopt) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    if (fallback) return *fallback;
    schema_error(where, std::string("missing required field '") + key + "'");
  }
  if (!it->is_number_integer()) schema_error(where, std::string("field '") + key + "' must be an integer");
  return it->get<int>();
}

bool get_bool(const Json& obj, const char* key, const std::string& where, bool fallback) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_boolean()) schema_error(where, std::string("field '") + key + "' must be a boolean");
  return it->get<bool>();
}

std::vector<double> get_reals(const Json& obj, const char* key, const std::string& where,
                              std::optional<std::vector<double>> fallback = std::nullopt) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    if (fallback) return *fallback;
    schema_error(where, std::string("missing required field '") + key + "'");
  }
  if (!it->is_array()) schema_error(where, std::string("field '") + key + "' must be an array");
  std::vector<double> out;
  for (const auto& v : *it) {
    if (!v.is_number()) schema_error(where, std::string("field '") + key + "' must hold numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

void reject_unknown(const Json& obj, std::initializer_list<std::string_view> known,
                    const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      schema_error(where, "unknown field '" + key + "'");
  }
}

LayerSpec layer_from_json(const Json& j, const std::string& where) {
  if (!j.is_object()) schema_error(where, "layer must be an object");
  reject_unknown(j,
                 {"kind", "kernel", "stride", "in_channels", "out_channels", "expansion_size", "use_se",
                  "nonlinearity", "groups", "bias", "feeds_fpn"},
                 where);
  LayerSpec l;
  const auto& kind = require(j, "kind", where);
  if (!kind.is_string()) schema_error(where, "field 'kind' must be a string");
  auto parsed = parse_layer_kind(kind.get<std::string>());
  if (!parsed) schema_error(where, "unknown layer kind '" + kind.get<std::string>() + "'");
  l.kind = *parsed;
  l.kernel = get_int(j, "kernel", where);
  l.stride = get_int(j, "stride", where);
  l.in_channels = get_int(j, "in_channels", where);
  l.out_channels = get_int(j, "out_channels", where);
  l.expansion_size = get_int(j, "expansion_size", where,
                             l.kind == LayerKind::Bneck ? std::nullopt : std::optional<int>(0));
  l.use_se = get_bool(j, "use_se", where, false);
  l.groups = get_int(j, "groups", where, 1);
  l.bias = get_bool(j, "bias", where, false);
  l.feeds_fpn = get_bool(j, "feeds_fpn", where, false);
  if (auto it = j.find("nonlinearity"); it != j.end()) {
    if (!it->is_string()) schema_error(where, "field 'nonlinearity' must be a string");
    auto nl = parse_nonlinearity(it->get<std::string>());
    if (!nl) schema_error(where, "unknown nonlinearity '" + it->get<std::string>() + "'");
    l.nonlinearity = *nl;
  }
  return l;
}

OrderedJson layer_to_json(const LayerSpec& l) {
  OrderedJson j;
  j["kind"] = to_string(l.kind);
  j["kernel"] = l.kernel;
  j["stride"] = l.stride;
  j["in_channels"] = l.in_channels;
  j["out_channels"] = l.out_channels;
  j["expansion_size"] = l.expansion_size;
  j["use_se"] = l.use_se;
  j["nonlinearity"] = to_string(l.nonlinearity);
  j["groups"] = l.groups;
  j["bias"] = l.bias;
  j["feeds_fpn"] = l.feeds_fpn;
  return j;
}

std::pair<std::size_t, std::size_t> line_column(std::string_view text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

// ---- enums ---------------------------------------------------------------

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv2d: return "Conv2d";
    case LayerKind::Bneck: return "Bneck";
    case LayerKind::AvgPool2: return "AvgPool2";
    case LayerKind::SCConv: return "SCConv";
    case LayerKind::FpnLateral: return "FpnLateral";
    case LayerKind::RpnHead: return "RpnHead";
    case LayerKind::RcnnHead: return "RcnnHead";
  }
  return "?";
}

std::string_view to_string(Nonlinearity nl) {
  switch (nl) {
    case Nonlinearity::ReLU: return "ReLU";
    case Nonlinearity::HSwish: return "HSwish";
    case Nonlinearity::None: return "None";
  }
  return "?";
}

std::optional<LayerKind> parse_layer_kind(std::string_view text) {
  for (auto k : {LayerKind::Conv2d, LayerKind::Bneck, LayerKind::AvgPool2, LayerKind::SCConv,
                 LayerKind::FpnLateral, LayerKind::RpnHead, LayerKind::RcnnHead}) {
    if (to_string(k) == text) return k;
  }
  return std::nullopt;
}

std::optional<Nonlinearity> parse_nonlinearity(std::string_view text) {
  for (auto n : {Nonlinearity::ReLU, Nonlinearity::HSwish, Nonlinearity::None}) {
    if (to_string(n) == text) return n;
  }
  return std::nullopt;
}

// ---- LayerSpec factories -------------------------------------------------

LayerSpec LayerSpec::conv(int kernel, int stride, int in_channels, int out_channels, Nonlinearity nl) {
  LayerSpec l;
  l.kind = LayerKind::Conv2d;
  l.kernel = kernel;
  l.stride = stride;
  l.in_channels = in_channels;
  l.out_channels = out_channels;
  l.nonlinearity = nl;
  return l;
}

LayerSpec LayerSpec::bneck(int kernel, int in_channels, int expansion_size, int out_channels, bool use_se,
                           Nonlinearity nl, int stride, bool feeds_fpn) {
  LayerSpec l;
  l.kind = LayerKind::Bneck;
  l.kernel = kernel;
  l.stride = stride;
  l.in_channels = in_channels;
  l.out_channels = out_channels;
  l.expansion_size = expansion_size;
  l.use_se = use_se;
  l.nonlinearity = nl;
  l.feeds_fpn = feeds_fpn;
  return l;
}

LayerSpec LayerSpec::avg_pool(int channels) {
  LayerSpec l;
  l.kind = LayerKind::AvgPool2;
  l.kernel = 2;
  l.stride = 1;
  l.in_channels = channels;
  l.out_channels = channels;
  return l;
}

std::string to_string(const FeatureShape& s) {
  if (s.height == s.width)
    return std::to_string(s.height) + "^2x" + std::to_string(s.channels);
  return std::to_string(s.height) + "x" + std::to_string(s.width) + "x" + std::to_string(s.channels);
}

// ---- builtins --------------------------------------------------------------

std::span<const std::string_view> builtin_arch_names() { return kBuiltinNames; }

ArchSpec builtin_arch(std::string_view name) {
  if (name == "tinydet-s") return make_tinydet_s();
  if (name == "tinydet-m") return make_tinydet_m();
  if (name == "tinydet-l") return make_tinydet_l();
  throw NotFoundError("unknown architecture '" + std::string(name) +
                      "'; valid names: tinydet-s, tinydet-m, tinydet-l");
}

// ---- validation ----------------------------------------------------------

std::vector<Violation> validate_arch(const ArchSpec& spec) {
  ViolationSink sink;
  if (spec.input_size <= 0 || spec.input_size % 2 != 0)
    sink.at("input_size", "input_size", "input size must be a positive even integer");

  int prev_out = kImageChannels;
  for (std::size_t i = 0; i < spec.backbone.size(); ++i) {
    const auto& l = spec.backbone[i];
    check_layer(l, i, sink);
    if (l.in_channels != prev_out)
      sink.layer(i, "chaining",
                 "in_channels " + std::to_string(l.in_channels) + " does not match previous output " +
                     std::to_string(prev_out));
    prev_out = l.out_channels;
  }
  check_levels(spec, sink);
  check_heads(spec, sink);
  return sink.take();
}

// ---- shapes --------------------------------------------------------------

FeatureShape layer_output_shape(const LayerSpec& l, const FeatureShape& in) {
  if (in.channels != l.in_channels)
    throw ValidationError(layer_label(l) + ": expects " + std::to_string(l.in_channels) +
                          " input channels, got " + std::to_string(in.channels));
  FeatureShape out{l.out_channels, 0, 0};
  if (l.kind == LayerKind::AvgPool2) {
    out.height = in.height - 1;
    out.width = in.width - 1;
  } else {
    const int pad = (l.kernel - 1) / 2;
    auto extent = [&](int n) { return (n + 2 * pad - l.kernel) / l.stride + 1; };
    // Integer division truncates toward zero; guard before it can mask a negative numerator.
    if (in.height + 2 * pad < l.kernel || in.width + 2 * pad < l.kernel)
      throw ValidationError(layer_label(l) + ": input " + to_string(in) + " smaller than kernel");
    out.height = extent(in.height);
    out.width = extent(in.width);
  }
  if (out.height <= 0 || out.width <= 0)
    throw ValidationError(layer_label(l) + ": non-positive output size from input " + to_string(in));
  return out;
}

std::vector<ShapeEntry> shape_trace(const ArchSpec& spec, int input_size) {
  if (input_size <= 0) throw ValidationError("input size must be positive");
  FeatureShape cur{spec.backbone.empty() ? kImageChannels : spec.backbone.front().in_channels, input_size,
                   input_size};
  std::vector<ShapeEntry> out;
  out.reserve(spec.backbone.size() + 1);
  out.push_back({std::nullopt, cur});
  for (std::size_t i = 0; i < spec.backbone.size(); ++i) {
    cur = layer_output_shape(spec.backbone[i], cur);
    out.push_back({i, cur});
  }
  return out;
}

std::vector<std::size_t> fpn_taps(const ArchSpec& spec) {
  std::vector<std::size_t> taps;
  for (std::size_t i = 0; i < spec.backbone.size(); ++i) {
    if (spec.backbone[i].feeds_fpn) taps.push_back(i);
  }
  return taps;
}

std::string layer_label(const LayerSpec& l) {
  std::ostringstream os;
  const std::string k = std::to_string(l.kernel) + "x" + std::to_string(l.kernel);
  switch (l.kind) {
    case LayerKind::Conv2d: os << "conv2d " << k << ' ' << l.in_channels << "->" << l.out_channels; break;
    case LayerKind::Bneck:
      os << "bneck " << k << ' ' << l.expansion_size << ' ' << l.in_channels << "->" << l.out_channels;
      if (l.use_se) os << " SE";
      break;
    case LayerKind::AvgPool2: os << "avgpool 2x2 " << l.in_channels; break;
    case LayerKind::SCConv: os << "scconv " << k << ' ' << l.in_channels << " g=" << l.groups; break;
    default: os << to_string(l.kind) << ' ' << l.in_channels << "->" << l.out_channels; break;
  }
  if (l.kind != LayerKind::AvgPool2) os << " s" << l.stride;
  return os.str();
}

// ---- config documents ----------------------------------------------------

ArchSpec parse_arch(std::string_view text) {
  if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); }))
    throw ParseError("no architecture defined");

  Json doc;
  try {
    doc = Json::parse(text.begin(), text.end());
  } catch (const Json::parse_error& e) {
    auto [line, col] = line_column(text, e.byte == 0 ? 0 : e.byte - 1);
    throw ParseError("syntax error at line " + std::to_string(line) + ", column " + std::to_string(col) +
                         ": " + e.what(),
                     line, col);
  }
  if (doc.is_null() || (doc.is_object() && doc.empty())) throw ParseError("no architecture defined");
  if (!doc.is_object()) throw ParseError("architecture document must be an object");
  reject_unknown(doc, {"name", "input_size", "backbone", "fpn_levels", "rpn", "rcnn"}, "document");

  ArchSpec spec;
  const auto& name = require(doc, "name", "document");
  if (!name.is_string()) schema_error("document", "field 'name' must be a string");
  spec.name = name.get<std::string>();
  spec.input_size = get_int(doc, "input_size", "document");

  const auto& backbone = require(doc, "backbone", "document");
  if (!backbone.is_array()) schema_error("document", "field 'backbone' must be an array");
  for (std::size_t i = 0; i < backbone.size(); ++i)
    spec.backbone.push_back(layer_from_json(backbone[i], backbone_location(i)));

  if (auto it = doc.find("fpn_levels"); it != doc.end()) {
    if (!it->is_array()) schema_error("document", "field 'fpn_levels' must be an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const std::string where = "fpn_levels[" + std::to_string(i) + "]";
      const auto& lv = (*it)[i];
      if (!lv.is_object()) schema_error(where, "level must be an object");
      reject_unknown(lv, {"stride", "lateral_in_channels", "channels", "scconv_groups"}, where);
      spec.fpn_levels.push_back({get_int(lv, "stride", where), get_int(lv, "lateral_in_channels", where),
                                 get_int(lv, "channels", where, 245), get_int(lv, "scconv_groups", where, 1)});
    }
  }
  if (auto it = doc.find("rpn"); it != doc.end()) {
    if (!it->is_object()) schema_error("rpn", "must be an object");
    reject_unknown(*it, {"scconv_groups", "anchors_per_location", "anchor_sizes", "aspect_ratios"}, "rpn");
    spec.rpn.scconv_groups = get_int(*it, "scconv_groups", "rpn", 49);
    spec.rpn.anchors_per_location = get_int(*it, "anchors_per_location", "rpn", 3);
    spec.rpn.anchor_sizes = get_reals(*it, "anchor_sizes", "rpn");
    spec.rpn.aspect_ratios = get_reals(*it, "aspect_ratios", "rpn", std::vector<double>{0.5, 1.0, 2.0});
  }
  if (auto it = doc.find("rcnn"); it != doc.end()) {
    if (!it->is_object()) schema_error("rcnn", "must be an object");
    reject_unknown(*it, {"roi_feature_dim", "hidden_dim", "num_classes_plus_bg", "box_dim", "num_rois"},
                   "rcnn");
    const RcnnConfig d;
    spec.rcnn = {get_int(*it, "roi_feature_dim", "rcnn", d.roi_feature_dim),
                 get_int(*it, "hidden_dim", "rcnn", d.hidden_dim),
                 get_int(*it, "num_classes_plus_bg", "rcnn", d.num_classes_plus_bg),
                 get_int(*it, "box_dim", "rcnn", d.box_dim), get_int(*it, "num_rois", "rcnn", d.num_rois)};
  }

  auto violations = validate_arch(spec);
  if (!violations.empty()) {
    std::string msg = "architecture '" + spec.name + "' is invalid:";
    for (const auto& v : violations) msg += "\n  " + v.location + " [" + v.rule + "] " + v.message;
    throw ValidationError(msg);
  }
  return spec;
}

std::string serialize_arch(const ArchSpec& spec) {
  OrderedJson doc;
  doc["name"] = spec.name;
  doc["input_size"] = spec.input_size;
  doc["backbone"] = OrderedJson::array();
  for (const auto& l : spec.backbone) doc["backbone"].push_back(layer_to_json(l));
  doc["fpn_levels"] = OrderedJson::array();
  for (const auto& lv : spec.fpn_levels) {
    OrderedJson j;
    j["stride"] = lv.stride;
    j["lateral_in_channels"] = lv.lateral_in_channels;
    j["channels"] = lv.channels;
    j["scconv_groups"] = lv.scconv_groups;
    doc["fpn_levels"].push_back(std::move(j));
  }
  OrderedJson rpn;
  rpn["scconv_groups"] = spec.rpn.scconv_groups;
  rpn["anchors_per_location"] = spec.rpn.anchors_per_location;
  rpn["anchor_sizes"] = spec.rpn.anchor_sizes;
  rpn["aspect_ratios"] = spec.rpn.aspect_ratios;
  doc["rpn"] = std::move(rpn);
  OrderedJson rcnn;
  rcnn["roi_feature_dim"] = spec.rcnn.roi_feature_dim;
  rcnn["hidden_dim"] = spec.rcnn.hidden_dim;
  rcnn["num_classes_plus_bg"] = spec.rcnn.num_classes_plus_bg;
  rcnn["box_dim"] = spec.rcnn.box_dim;
  rcnn["num_rois"] = spec.rcnn.num_rois;
  doc["rcnn"] = std::move(rcnn);
  return doc.dump(2) + "\n";
}

ArchSpec resolve_arch(std::string_view name_or_path) {
  if (std::find(kBuiltinNames.begin(), kBuiltinNames.end(), name_or_path) != kBuiltinNames.end())
    return builtin_arch(name_or_path);
  const std::filesystem::path path{std::string(name_or_path)};
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec))
    throw NotFoundError("'" + std::string(name_or_path) +
                        "' is neither a builtin architecture (tinydet-s, tinydet-m, tinydet-l) nor a file");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_arch(buf.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line(), e.column());
  }
}

}  // namespace tinydet
