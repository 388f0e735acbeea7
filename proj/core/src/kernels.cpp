#include "tinydet/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "tinydet/error.hpp"

namespace tinydet {

namespace {

std::string shape_str(const TensorShape& s) {
  return std::to_string(s.batch) + "x" + std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" +
         std::to_string(s.width);
}

int out_extent(int n, int k, int pad, int stride) { return (n + 2 * pad - k) / stride + 1; }

void check_pointwise(const ConvWeights& w, const char* what) {
  if (w.kernel_h() != 1 || w.kernel_w() != 1) throw ValidationError(std::string(what) + " must be 1x1");
}

// Symmetric under horizontal and vertical flips, entries in (0, 1].
Tensor symmetric_kernel(Rng& rng, int k) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Tensor w({1, 1, k, k});
  const int half = (k + 1) / 2;
  for (int i = 0; i < half; ++i) {
    for (int j = 0; j < half; ++j) {
      const double v = u(rng);
      w.at(0, 0, i, j) = v;
      w.at(0, 0, k - 1 - i, j) = v;
      w.at(0, 0, i, k - 1 - j) = v;
      w.at(0, 0, k - 1 - i, k - 1 - j) = v;
    }
  }
  return w;
}

}  // namespace

ConvWeights ConvWeights::make(Tensor weight, int stride, int groups, std::optional<std::vector<double>> bias) {
  ConvWeights w;
  w.pad = (weight.shape().height - 1) / 2;
  w.weight = std::move(weight);
  w.stride = stride;
  w.groups = groups;
  w.bias = std::move(bias);
  return w;
}

bool BneckParams::has_residual() const {
  const int in = expand ? expand->in_channels() : depthwise.in_channels();
  return depthwise.stride == 1 && in == project.out_channels();
}

double relu(double t) { return t > 0.0 ? t : 0.0; }
double hard_sigmoid(double t) { return std::clamp((t + 3.0) / 6.0, 0.0, 1.0); }
double hswish(double t) { return t * hard_sigmoid(t); }

Tensor activate(Tensor x, Nonlinearity nl) {
  switch (nl) {
    case Nonlinearity::ReLU:
      for (double& v : x.data()) v = relu(v);
      break;
    case Nonlinearity::HSwish:
      for (double& v : x.data()) v = hswish(v);
      break;
    case Nonlinearity::None:
      break;
  }
  return x;
}

Tensor conv2d(const Tensor& x, const ConvWeights& w) {
  const auto& xs = x.shape();
  const auto& ws = w.weight.shape();
  const int groups = w.groups;
  if (groups < 1 || xs.channels % groups != 0 || ws.batch % groups != 0)
    throw ValidationError("conv2d: groups " + std::to_string(groups) + " must divide input channels " +
                          std::to_string(xs.channels) + " and output channels " + std::to_string(ws.batch));
  if (ws.channels * groups != xs.channels)
    throw ValidationError("conv2d: weight " + shape_str(ws) + " incompatible with input " + shape_str(xs));
  if (w.stride < 1 || w.pad < 0) throw ValidationError("conv2d: invalid stride or padding");
  if (w.bias && static_cast<int>(w.bias->size()) != ws.batch)
    throw ValidationError("conv2d: bias length does not match output channels");

  const int kh = ws.height;
  const int kw = ws.width;
  const int oh = out_extent(xs.height, kh, w.pad, w.stride);
  const int ow = out_extent(xs.width, kw, w.pad, w.stride);
  if (xs.height + 2 * w.pad < kh || xs.width + 2 * w.pad < kw || oh < 1 || ow < 1)
    throw ValidationError("conv2d: input " + shape_str(xs) + " too small for kernel");

  const int in_per_group = ws.channels;
  const int out_per_group = ws.batch / groups;
  Tensor y({xs.batch, ws.batch, oh, ow});
  for (int n = 0; n < xs.batch; ++n) {
    for (int oc = 0; oc < ws.batch; ++oc) {
      const int g = oc / out_per_group;
      const double b = w.bias ? (*w.bias)[oc] : 0.0;
      for (int i = 0; i < oh; ++i) {
        for (int j = 0; j < ow; ++j) {
          double acc = 0.0;
          for (int ic = 0; ic < in_per_group; ++ic) {
            const int c = g * in_per_group + ic;
            for (int a = 0; a < kh; ++a) {
              const int h = i * w.stride + a - w.pad;
              if (h < 0 || h >= xs.height) continue;
              for (int bb = 0; bb < kw; ++bb) {
                const int v = j * w.stride + bb - w.pad;
                if (v < 0 || v >= xs.width) continue;
                acc += x.at(n, c, h, v) * w.weight.at(oc, ic, a, bb);
              }
            }
          }
          y.at(n, oc, i, j) = acc + b;
        }
      }
    }
  }
  return y;
}

Tensor avgpool2(const Tensor& x) {
  const auto& s = x.shape();
  if (s.height < 2 || s.width < 2) throw ValidationError("avgpool2: spatial dims must be at least 2");
  Tensor y({s.batch, s.channels, s.height - 1, s.width - 1});
  for (int n = 0; n < s.batch; ++n)
    for (int c = 0; c < s.channels; ++c)
      for (int i = 0; i + 1 < s.height; ++i)
        for (int j = 0; j + 1 < s.width; ++j)
          y.at(n, c, i, j) =
              (x.at(n, c, i, j) + x.at(n, c, i + 1, j) + x.at(n, c, i, j + 1) + x.at(n, c, i + 1, j + 1)) / 4.0;
  return y;
}

ConvWeights fuse_pool_into_conv(const ConvWeights& w) {
  if (w.stride != 2) throw ValidationError("fuse_pool_into_conv: convolution stride must be 2");
  const auto& ws = w.weight.shape();
  Tensor fused({ws.batch, ws.channels, ws.height + 1, ws.width + 1});
  for (int o = 0; o < ws.batch; ++o)
    for (int c = 0; c < ws.channels; ++c)
      for (int a = 0; a < ws.height; ++a)
        for (int b = 0; b < ws.width; ++b) {
          const double q = w.weight.at(o, c, a, b) / 4.0;
          fused.at(o, c, a, b) += q;
          fused.at(o, c, a + 1, b) += q;
          fused.at(o, c, a, b + 1) += q;
          fused.at(o, c, a + 1, b + 1) += q;
        }
  ConvWeights out = w;
  out.weight = std::move(fused);
  return out;
}

int fusion_border(const ConvWeights& w) { return (w.pad + 1) / 2; }

Tensor scconv_forward(const Tensor& x, const ConvWeights& dw, const ConvWeights& pw) {
  const int c = x.shape().channels;
  if (dw.groups != c || dw.out_channels() != c)
    throw ValidationError("scconv: depthwise stage must have groups = channels = " + std::to_string(c));
  if (dw.kernel_h() != 3 || dw.kernel_w() != 3) throw ValidationError("scconv: depthwise kernel must be 3x3");
  check_pointwise(pw, "scconv pointwise stage");
  if (pw.groups < 1 || c % pw.groups != 0)
    throw ValidationError("scconv: pointwise groups " + std::to_string(pw.groups) + " must divide " +
                          std::to_string(c));
  if (pw.out_channels() != c) throw ValidationError("scconv: pointwise stage must preserve channels");
  return conv2d(conv2d(x, dw), pw);
}

Tensor se_forward(const Tensor& x, const Dense& fc1, const Dense& fc2) {
  const auto& s = x.shape();
  if (fc1.in != s.channels || fc2.out != s.channels || fc1.out != fc2.in || fc1.out < 1)
    throw ValidationError("se: fc dims " + std::to_string(fc1.in) + "->" + std::to_string(fc1.out) + ", " +
                          std::to_string(fc2.in) + "->" + std::to_string(fc2.out) + " do not fit " +
                          std::to_string(s.channels) + " channels");
  for (const Dense* d : {&fc1, &fc2}) {
    if (d->weight.size() != static_cast<std::size_t>(d->in) * d->out || d->bias.size() != static_cast<std::size_t>(d->out))
      throw ValidationError("se: fc weight/bias sizes do not match declared dims");
  }

  Tensor y = x;
  const double cells = static_cast<double>(s.height) * s.width;
  std::vector<double> pooled(s.channels), hidden(fc1.out);
  for (int n = 0; n < s.batch; ++n) {
    for (int c = 0; c < s.channels; ++c) {
      double sum = 0.0;
      for (int i = 0; i < s.height; ++i)
        for (int j = 0; j < s.width; ++j) sum += x.at(n, c, i, j);
      pooled[c] = sum / cells;
    }
    for (int h = 0; h < fc1.out; ++h) {
      double acc = fc1.bias[h];
      for (int c = 0; c < fc1.in; ++c) acc += fc1.weight[static_cast<std::size_t>(h) * fc1.in + c] * pooled[c];
      hidden[h] = relu(acc);
    }
    for (int c = 0; c < fc2.out; ++c) {
      double acc = fc2.bias[c];
      for (int h = 0; h < fc2.in; ++h) acc += fc2.weight[static_cast<std::size_t>(c) * fc2.in + h] * hidden[h];
      const double gate = hard_sigmoid(acc);
      for (int i = 0; i < s.height; ++i)
        for (int j = 0; j < s.width; ++j) y.at(n, c, i, j) *= gate;
    }
  }
  return y;
}

Tensor bneck_forward(const Tensor& x, const BneckParams& p) {
  const int e = p.depthwise.out_channels();
  if (p.expand) {
    check_pointwise(*p.expand, "bneck expansion");
    if (p.expand->out_channels() != e) throw ValidationError("bneck: expansion output must match depthwise width");
  } else if (x.shape().channels != e) {
    throw ValidationError("bneck: without expansion the input must have " + std::to_string(e) + " channels");
  }
  if (p.depthwise.groups != e) throw ValidationError("bneck: middle stage must be depthwise");
  check_pointwise(p.project, "bneck projection");

  Tensor h = p.expand ? activate(conv2d(x, *p.expand), p.nonlinearity) : x;
  h = activate(conv2d(h, p.depthwise), p.nonlinearity);
  if (p.se) h = se_forward(h, p.se->fc1, p.se->fc2);
  h = conv2d(h, p.project);
  if (p.depthwise.stride == 1 && x.shape() == h.shape()) h = add(h, x);
  return h;
}

Tensor upsample_nearest(const Tensor& x, int height, int width) {
  const auto& s = x.shape();
  Tensor y({s.batch, s.channels, height, width});
  for (int n = 0; n < s.batch; ++n)
    for (int c = 0; c < s.channels; ++c)
      for (int i = 0; i < height; ++i)
        for (int j = 0; j < width; ++j)
          y.at(n, c, i, j) = x.at(n, c, static_cast<int>(static_cast<long long>(i) * s.height / height),
                                  static_cast<int>(static_cast<long long>(j) * s.width / width));
  return y;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ValidationError("add: shape mismatch");
  Tensor y = a;
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] += b.data()[i];
  return y;
}

ConvWeights random_conv(Rng& rng, int in_channels, int out_channels, int kernel, int stride, int groups,
                        bool with_bias) {
  const int in_per_group = in_channels / groups;
  const double limit = std::sqrt(6.0 / (in_per_group * kernel * kernel));
  std::uniform_real_distribution<double> u(-limit, limit);
  Tensor w({out_channels, in_per_group, kernel, kernel});
  for (double& v : w.data()) v = u(rng);
  std::optional<std::vector<double>> bias;
  if (with_bias) bias = std::vector<double>(static_cast<std::size_t>(out_channels), 0.0);
  return ConvWeights::make(std::move(w), stride, groups, std::move(bias));
}

Dense random_dense(Rng& rng, int in, int out) {
  const double limit = std::sqrt(6.0 / in);
  std::uniform_real_distribution<double> u(-limit, limit);
  Dense d{in, out, std::vector<double>(static_cast<std::size_t>(in) * out), std::vector<double>(out, 0.0)};
  for (double& v : d.weight) v = u(rng);
  return d;
}

BneckParams random_bneck(Rng& rng, const LayerSpec& spec) {
  if (spec.kind != LayerKind::Bneck) throw ValidationError("random_bneck: layer is not a Bneck");
  const int e = spec.expansion_size;
  BneckParams p;
  if (spec.has_expansion()) p.expand = random_conv(rng, spec.in_channels, e, 1);
  p.depthwise = random_conv(rng, e, e, spec.kernel, spec.stride, e);
  if (spec.use_se) {
    const int squeeze = e / 4;
    if (squeeze < 1) throw ValidationError("random_bneck: SE squeeze width is zero");
    p.se = SeParams{random_dense(rng, e, squeeze), random_dense(rng, squeeze, e)};
  }
  p.project = random_conv(rng, e, spec.out_channels, 1);
  p.nonlinearity = spec.nonlinearity;
  return p;
}

// ---- impulse probe -----------------------------------------------------

std::vector<ProbeStage> make_probe_stack(std::span<const LayerSpec> layers, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ProbeStage> stack;
  for (const auto& l : layers) {
    if (l.kind == LayerKind::AvgPool2) {
      stack.push_back({LayerKind::AvgPool2, {}});
      continue;
    }
    if (l.kind != LayerKind::Conv2d && l.kind != LayerKind::Bneck && l.kind != LayerKind::SCConv)
      throw ValidationError("make_probe_stack: unsupported layer kind " + std::string(to_string(l.kind)));
    stack.push_back({LayerKind::Conv2d, ConvWeights::make(symmetric_kernel(rng, l.kernel), l.stride)});
  }
  return stack;
}

std::vector<int> probe_sizes(std::span<const ProbeStage> stack, int input_size) {
  std::vector<int> sizes{input_size};
  int n = input_size;
  for (const auto& st : stack) {
    if (st.kind == LayerKind::AvgPool2) {
      n -= 1;
    } else {
      const auto& w = st.weights;
      if (n + 2 * w.pad < w.kernel_h()) throw ValidationError("probe: input smaller than kernel");
      n = out_extent(n, w.kernel_h(), w.pad, w.stride);
    }
    if (n < 1) throw ValidationError("probe: stack shrinks the input to nothing");
    sizes.push_back(n);
  }
  return sizes;
}

Tensor impulse_response_map(std::span<const ProbeStage> stack, int input_size, int row, int col) {
  const auto sizes = probe_sizes(stack, input_size);
  const int out = sizes.back();
  if (row < 0 || row >= out || col < 0 || col >= out)
    throw ValidationError("probe: output cell outside the " + std::to_string(out) + "^2 output");

  Tensor g({1, 1, out, out});
  g.at(0, 0, row, col) = 1.0;
  for (std::size_t s = stack.size(); s-- > 0;) {
    const int n_in = sizes[s];
    const int n_out = sizes[s + 1];
    Tensor dx({1, 1, n_in, n_in});
    if (stack[s].kind == LayerKind::AvgPool2) {
      for (int i = 0; i < n_out; ++i)
        for (int j = 0; j < n_out; ++j) {
          const double q = g.at(0, 0, i, j) / 4.0;
          dx.at(0, 0, i, j) += q;
          dx.at(0, 0, i + 1, j) += q;
          dx.at(0, 0, i, j + 1) += q;
          dx.at(0, 0, i + 1, j + 1) += q;
        }
    } else {
      const auto& w = stack[s].weights;
      const int k = w.kernel_h();
      for (int i = 0; i < n_out; ++i)
        for (int j = 0; j < n_out; ++j) {
          const double gv = g.at(0, 0, i, j);
          if (gv == 0.0) continue;
          for (int a = 0; a < k; ++a) {
            const int h = i * w.stride + a - w.pad;
            if (h < 0 || h >= n_in) continue;
            for (int b = 0; b < k; ++b) {
              const int v = j * w.stride + b - w.pad;
              if (v < 0 || v >= n_in) continue;
              dx.at(0, 0, h, v) += gv * w.weight.at(0, 0, a, b);
            }
          }
        }
    }
    g = std::move(dx);
  }
  return g;
}

double nominal_center(int input_size, int stride, int out_size, int j) {
  return (input_size - 1) / 2.0 + stride * (j - (out_size - 1) / 2.0);
}

CentroidOffset impulse_response_centroid(std::span<const ProbeStage> stack, int input_size, int row, int col) {
  const Tensor m = impulse_response_map(stack, input_size, row, col);
  double mass = 0.0, sr = 0.0, sc = 0.0;
  for (int i = 0; i < input_size; ++i)
    for (int j = 0; j < input_size; ++j) {
      const double v = m.at(0, 0, i, j);
      mass += v;
      sr += v * i;
      sc += v * j;
    }
  if (!(mass > 0.0)) throw ValidationError("probe: zero total response");

  int stride = 1;
  for (const auto& st : stack)
    if (st.kind != LayerKind::AvgPool2) stride *= st.weights.stride;
  const int out = probe_sizes(stack, input_size).back();
  return {nominal_center(input_size, stride, out, row) - sr / mass,
          nominal_center(input_size, stride, out, col) - sc / mass};
}

}  // namespace tinydet
