#pragma once

// Reference forward kernels in double precision. Naive direct loops are the
// normative semantics; nothing here is tuned for speed.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "tinydet/archspec.hpp"
#include "tinydet/tensor.hpp"

namespace tinydet {

/// Convolution parameters. `weight` has shape (out, in/groups, kh, kw).
struct ConvWeights {
  Tensor weight;
  std::optional<std::vector<double>> bias;
  int stride = 1;
  int pad = 0;
  int groups = 1;

  /// pad defaults to (k-1)/2.
  static ConvWeights make(Tensor weight, int stride = 1, int groups = 1,
                          std::optional<std::vector<double>> bias = std::nullopt);

  int out_channels() const { return weight.shape().batch; }
  int in_channels() const { return weight.shape().channels * groups; }
  int kernel_h() const { return weight.shape().height; }
  int kernel_w() const { return weight.shape().width; }
};

/// Fully connected layer, `weight` row-major (out x in).
struct Dense {
  int in = 0;
  int out = 0;
  std::vector<double> weight;
  std::vector<double> bias;
};

double relu(double t);
double hard_sigmoid(double t);  // clamp((t+3)/6, 0, 1)
double hswish(double t);        // t * hard_sigmoid(t)
Tensor activate(Tensor x, Nonlinearity nl);

Tensor conv2d(const Tensor& x, const ConvWeights& w);

/// 2x2 mean, stride 1, no padding: N -> N-1 per spatial dim.
Tensor avgpool2(const Tensor& x);

/// Folds a preceding avgpool2 into a stride-2 convolution: the kernel is
/// w (*) [[1/4,1/4],[1/4,1/4]] (full discrete convolution, (k+1)x(k+1)),
/// stride 2, same padding and bias. The result reproduces
/// conv2d(avgpool2(x), w) on every output whose window stays clear of the
/// pooled map's zero padding; see fusion_border() for the cells that don't.
ConvWeights fuse_pool_into_conv(const ConvWeights& w);

/// Number of output rows (and columns) at each border whose receptive field
/// reaches the pooled map's zero padding; 0 for 1x1 kernels.
int fusion_border(const ConvWeights& w);

/// Depthwise 3x3 followed by a grouped 1x1 pointwise convolution.
Tensor scconv_forward(const Tensor& x, const ConvWeights& dw, const ConvWeights& pw);

/// Squeeze-and-excitation: gate = hard_sigmoid(fc2(relu(fc1(gap(x))))).
Tensor se_forward(const Tensor& x, const Dense& fc1, const Dense& fc2);

struct SeParams {
  Dense fc1;
  Dense fc2;
};

/// Inverted residual bottleneck with batch norm folded to identity:
/// [expand 1x1 + nl] -> depthwise kxk stride s + nl -> [SE] -> project 1x1,
/// plus identity skip when stride is 1 and channels match.
struct BneckParams {
  std::optional<ConvWeights> expand;
  ConvWeights depthwise;
  std::optional<SeParams> se;
  ConvWeights project;
  Nonlinearity nonlinearity = Nonlinearity::ReLU;

  int stage_count() const { return (expand ? 1 : 0) + 1 + (se ? 1 : 0) + 1; }
  bool has_residual() const;
};

Tensor bneck_forward(const Tensor& x, const BneckParams& p);

Tensor upsample_nearest(const Tensor& x, int height, int width);
Tensor add(const Tensor& a, const Tensor& b);

// ---- random parameters -------------------------------------------------

using Rng = std::mt19937_64;

/// He-uniform weights in [-sqrt(6/fan_in), sqrt(6/fan_in)]; bias zero when requested.
ConvWeights random_conv(Rng& rng, int in_channels, int out_channels, int kernel, int stride = 1,
                        int groups = 1, bool with_bias = false);
Dense random_dense(Rng& rng, int in, int out);
BneckParams random_bneck(Rng& rng, const LayerSpec& spec);

// ---- impulse probe -----------------------------------------------------

/// One single-channel stage of an alignment probe. Kind is Conv2d or
/// AvgPool2; `weights` is ignored for pools.
struct ProbeStage {
  LayerKind kind = LayerKind::Conv2d;
  ConvWeights weights;
};

/// Builds a probe from backbone layers: every conv-like layer becomes one
/// single-channel convolution with its kernel and stride (a Bneck maps to its
/// depthwise stage) whose weights are random, nonnegative and symmetric under
/// both flips. Pools stay pools.
std::vector<ProbeStage> make_probe_stack(std::span<const LayerSpec> layers, std::uint64_t seed);

/// Spatial size after each stage, starting with the input.
std::vector<int> probe_sizes(std::span<const ProbeStage> stack, int input_size);

/// Influence of every input pixel on output cell (row, col), computed by
/// pushing a unit impulse at that cell back through the transposed stack.
Tensor impulse_response_map(std::span<const ProbeStage> stack, int input_size, int row, int col);

struct CentroidOffset {
  double row = 0.0;
  double col = 0.0;
};

/// Nominal center of output cell (row, col) minus the response-mass centroid,
/// in input pixels; positive values mean the field sits toward the origin.
/// The nominal map places output cells on a grid with the cumulative stride,
/// centered on the input. Throws ValidationError when the response is zero.
CentroidOffset impulse_response_centroid(std::span<const ProbeStage> stack, int input_size, int row,
                                         int col);

/// Centered-grid nominal position of output index `j` for an output of
/// `out_size` cells at cumulative stride `stride` over `input_size` pixels.
double nominal_center(int input_size, int stride, int out_size, int j);

}  // namespace tinydet
