#pragma once

// Declarative description of a TinyDet-style detector: backbone rows,
// pyramid levels, RPN head and R-CNN head. Every other module (FLOPs,
// alignment, anchors, the toy forward pass) reads structure from here.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tinydet {

enum class LayerKind { Conv2d, Bneck, AvgPool2, SCConv, FpnLateral, RpnHead, RcnnHead };

enum class Nonlinearity { ReLU, HSwish, None };

std::string_view to_string(LayerKind kind);
std::string_view to_string(Nonlinearity nl);
std::optional<LayerKind> parse_layer_kind(std::string_view text);
std::optional<Nonlinearity> parse_nonlinearity(std::string_view text);

/// One row of a backbone table.
///
/// `expansion_size` is only meaningful for Bneck; a Bneck whose expansion
/// size equals `in_channels` has no expansion convolution. AvgPool2 always
/// carries kernel 2 and stride 1 (a 2x2 mean that shrinks each side by one).
struct LayerSpec {
  LayerKind kind = LayerKind::Conv2d;
  int kernel = 1;
  int stride = 1;
  int in_channels = 0;
  int out_channels = 0;
  int expansion_size = 0;
  bool use_se = false;
  Nonlinearity nonlinearity = Nonlinearity::None;
  int groups = 1;
  bool bias = false;
  bool feeds_fpn = false;

  static LayerSpec conv(int kernel, int stride, int in_channels, int out_channels,
                        Nonlinearity nl);
  static LayerSpec bneck(int kernel, int in_channels, int expansion_size, int out_channels,
                         bool use_se, Nonlinearity nl, int stride, bool feeds_fpn = false);
  static LayerSpec avg_pool(int channels);

  bool has_expansion() const { return kind == LayerKind::Bneck && expansion_size != in_channels; }
  bool downsamples() const { return stride == 2; }

  bool operator==(const LayerSpec&) const = default;
};

struct PyramidLevel {
  int stride = 0;
  int lateral_in_channels = 0;
  int channels = 245;
  int scconv_groups = 1;

  bool operator==(const PyramidLevel&) const = default;
};

struct RpnConfig {
  int scconv_groups = 49;
  int anchors_per_location = 3;
  std::vector<double> anchor_sizes;  // one per pyramid level, pixels
  std::vector<double> aspect_ratios{0.5, 1.0, 2.0};

  bool operator==(const RpnConfig&) const = default;
};

struct RcnnConfig {
  int roi_feature_dim = 245;
  int hidden_dim = 1024;
  int num_classes_plus_bg = 81;
  int box_dim = 4;
  int num_rois = 200;

  bool operator==(const RcnnConfig&) const = default;
};

struct ArchSpec {
  std::string name;
  int input_size = 0;
  std::vector<LayerSpec> backbone;
  std::vector<PyramidLevel> fpn_levels;
  RpnConfig rpn;
  RcnnConfig rcnn;

  bool operator==(const ArchSpec&) const = default;
};

/// Channels x height x width of a single feature map.
struct FeatureShape {
  int channels = 0;
  int height = 0;
  int width = 0;

  bool operator==(const FeatureShape&) const = default;
};

std::string to_string(const FeatureShape& shape);  // "80^2x36" or "40x30x36"

/// A broken invariant. `location` is e.g. "backbone[3]" or "fpn_levels[1]",
/// `layer_index` is set for backbone rows.
struct Violation {
  std::string location;
  std::optional<std::size_t> layer_index;
  std::string rule;
  std::string message;
};

/// Names accepted by builtin_arch().
std::span<const std::string_view> builtin_arch_names();

/// The three transcribed TinyDet variants. Throws NotFoundError for any
/// other name; the message lists the valid set.
ArchSpec builtin_arch(std::string_view name);

std::vector<Violation> validate_arch(const ArchSpec& spec);

/// Reads a JSON architecture document. Throws ParseError on syntax or
/// schema problems, ValidationError when the parsed spec breaks an invariant.
ArchSpec parse_arch(std::string_view text);

/// Emits keys in the order name, input_size, backbone, fpn_levels, rpn, rcnn.
std::string serialize_arch(const ArchSpec& spec);

/// Builtin name or path to a config document. Throws NotFoundError when
/// it is neither.
ArchSpec resolve_arch(std::string_view name_or_path);

/// Output shape of one backbone layer. Throws ValidationError on a
/// channel mismatch or a non-positive spatial result.
FeatureShape layer_output_shape(const LayerSpec& layer, const FeatureShape& in);

struct ShapeEntry {
  std::optional<std::size_t> layer;  // empty for the network input
  FeatureShape shape;
};

/// Input shape followed by the output shape of every backbone layer.
std::vector<ShapeEntry> shape_trace(const ArchSpec& spec, int input_size);

/// Indices of the backbone layers that feed the FPN, in order.
std::vector<std::size_t> fpn_taps(const ArchSpec& spec);

/// Short human label such as "bneck 5x5 108->60 SE s2".
std::string layer_label(const LayerSpec& layer);

}  // namespace tinydet
