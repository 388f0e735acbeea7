#pragma once

// Symbolic feature-alignment bookkeeping. A feature map is described by its
// stride over the input, its current size and the offset (in input pixels)
// between the nominal center of a cell and where its receptive field is
// actually centered. A stride-2 convolution with (k-1)/2 padding on an
// even-sized map drops one padding pixel on the far side, which pulls the
// field half a cell toward the origin: +stride/2 pixels of offset.

#include <span>
#include <string>
#include <vector>

#include "tinydet/archspec.hpp"

namespace tinydet {

struct CoordMap {
  int stride = 1;
  double offset = 0.0;
  int size = 0;

  bool operator==(const CoordMap&) const = default;
};

/// Throws ValidationError when the map is smaller than the layer's kernel.
CoordMap propagate_coord(const CoordMap& m, const LayerSpec& layer);

struct AlignmentStep {
  std::string label;
  double contribution = 0.0;  // pixels
  double accumulated = 0.0;   // pixels
};

struct AlignmentTrace {
  std::vector<AlignmentStep> steps;  // one per stride-2 layer
  double total = 0.0;
  double ratio = 0.0;  // total / input_size
  int input_size = 0;
};

/// Folds propagate_coord over arbitrary layers. Only stride-2 layers produce
/// steps.
AlignmentTrace trace_layers(std::span<const LayerSpec> layers, int input_size);

/// Trace of the whole backbone, plus one stride-2 step per pyramid level the
/// backbone does not reach on its own.
AlignmentTrace misalignment_trace(const ArchSpec& spec);

/// Copy of `spec` with an AvgPool2 before every stride-2 backbone layer
/// that does not already have one. Idempotent.
ArchSpec insert_alignment_pools(const ArchSpec& spec);

/// Number of AvgPool2 layers in the backbone.
std::size_t count_pools(const ArchSpec& spec);

}  // namespace tinydet
