#pragma once

// Random-weight forward pass through backbone, pyramid and RPN head. Its
// only product is a shape log; the values carry no meaning beyond
// confirming that the spec's shapes compose.

#include <cstdint>
#include <string>
#include <vector>

#include "tinydet/archspec.hpp"
#include "tinydet/tensor.hpp"

namespace tinydet {

struct ForwardStage {
  std::string label;
  TensorShape shape;
  double mean = 0.0;
  double max_abs = 0.0;
};

/// Input of shape 1 x 3 x input_size x input_size, uniform in [-1, 1).
Tensor random_input(const ArchSpec& spec, std::uint64_t seed);

std::vector<ForwardStage> toy_forward(const ArchSpec& spec, const Tensor& input, std::uint64_t seed);

}  // namespace tinydet
