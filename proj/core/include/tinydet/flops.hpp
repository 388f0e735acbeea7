#pragma once

// Exact FLOP accounting. One multiply-accumulate counts as one FLOP.
// Backbone convolutions carry no bias (batch norm follows them); head
// convolutions add one FLOP per output element for their bias. SE counts
// only its two fully connected layers. Pooling, activations and SE's
// channel rescale are free.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tinydet/archspec.hpp"

namespace tinydet {

/// FLOPs, with the two roundings used for presentation.
struct FlopCount {
  std::uint64_t exact = 0;

  /// exact / 1e6 rounded half-up to two decimals, in hundredths of an MFLOP.
  std::uint64_t mflops_centi() const { return (exact + 5'000) / 10'000; }

  /// The rounding the published tables use: half-up to three decimals of an
  /// MFLOP first, then half-up to two. Differs from mflops_centi() when the
  /// third decimal is a 4 followed by 5 or more (3.9445 -> 3.95).
  std::uint64_t table_centi() const { return ((exact + 500) / 1'000 + 5) / 10; }

  double mflops() const { return static_cast<double>(exact) / 1e6; }
  double mflops_2dp() const { return static_cast<double>(mflops_centi()) / 100.0; }

  FlopCount& operator+=(FlopCount o) {
    exact += o.exact;
    return *this;
  }
  friend FlopCount operator+(FlopCount a, FlopCount b) { return a += b; }
  bool operator==(const FlopCount&) const = default;
};

/// "703.42" from 70342.
std::string format_centi(std::uint64_t centi);

/// Integer MFLOPs, half-up.
inline std::uint64_t round_mflops(std::uint64_t exact) { return (exact + 500'000) / 1'000'000; }

/// Integer percentage of `part` in `whole`, half-up. Zero when whole is zero.
int percent_half_up(std::uint64_t part, std::uint64_t whole);

FlopCount layer_flops(const LayerSpec& layer, const FeatureShape& in);

enum class HeadOpKind { FpnLateral, FpnSCConv, RpnSCConv, RpnScore, RpnBox };

std::string_view to_string(HeadOpKind kind);

/// A head convolution. SCConv kinds use a `kernel`x`kernel` depthwise stage
/// followed by a 1x1 pointwise stage with `groups` groups; in and out
/// channels must match for them.
struct HeadOp {
  HeadOpKind kind = HeadOpKind::FpnLateral;
  int in_channels = 0;
  int out_channels = 0;
  int groups = 1;
  int kernel = 3;
};

struct Extent {
  int height = 0;
  int width = 0;
};

/// Sums the op's cost over every given level; shared RPN ops take all levels.
FlopCount head_flops(const HeadOp& op, std::span<const Extent> levels);

FlopCount rcnn_flops(const RcnnConfig& cfg);

enum class Component { Backbone = 0, Fpn = 1, Rpn = 2, Rcnn = 3 };
inline constexpr std::array<Component, 4> kComponents{Component::Backbone, Component::Fpn, Component::Rpn,
                                                      Component::Rcnn};

std::string_view to_string(Component c);

struct LayerFlops {
  std::string label;
  Component component = Component::Backbone;
  FlopCount flops;
};

struct ComponentFlops {
  FlopCount flops;
  std::uint64_t table_centi = 0;  // sum of the rows' table_centi(), as printed in "In total" rows
  std::uint64_t mflops = 0;       // integer MFLOPs, half-up
  int percent = 0;                // share of the model total, half-up
};

struct FlopsReport {
  std::string arch;
  std::vector<LayerFlops> per_layer;
  std::array<ComponentFlops, 4> per_component{};
  FlopCount total;
  std::uint64_t total_mflops = 0;
  int percent_sum = 0;  // can exceed 100 through rounding

  const ComponentFlops& component(Component c) const { return per_component[static_cast<int>(c)]; }
};

/// Per-row and per-component accounting for a validated spec. An AvgPool2
/// directly before a strided layer is treated as fused into it: the pool
/// costs nothing and the strided layer is costed on the pre-pool input.
FlopsReport model_flops(const ArchSpec& spec);

}  // namespace tinydet
