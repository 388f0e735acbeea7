#include "tinydet/forward.hpp"

#include <algorithm>
#include <cmath>

#include "tinydet/error.hpp"
#include "tinydet/kernels.hpp"

namespace tinydet {

namespace {

ForwardStage stage(std::string label, const Tensor& t) {
  ForwardStage s{std::move(label), t.shape(), 0.0, 0.0};
  for (double v : t.data()) {
    s.mean += v;
    s.max_abs = std::max(s.max_abs, std::abs(v));
  }
  s.mean /= static_cast<double>(t.size());
  return s;
}

}  // namespace

Tensor random_input(const ArchSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  Tensor x({1, 3, spec.input_size, spec.input_size});
  // 53 random mantissa bits; avoids distribution-implementation differences.
  for (double& v : x.data()) v = static_cast<double>(rng() >> 11) * 0x1.0p-52 - 1.0;
  return x;
}

std::vector<ForwardStage> toy_forward(const ArchSpec& spec, const Tensor& input, std::uint64_t seed) {
  if (auto v = validate_arch(spec); !v.empty())
    throw ValidationError("architecture '" + spec.name + "' is invalid: " + v.front().location + " [" +
                          v.front().rule + "] " + v.front().message);
  if (input.shape().channels != 3) throw ValidationError("forward: input must have 3 channels");

  Rng rng(seed);
  std::vector<ForwardStage> log;
  log.push_back(stage("input", input));

  Tensor x = input;
  std::vector<Tensor> sources;
  for (std::size_t i = 0; i < spec.backbone.size(); ++i) {
    const auto& l = spec.backbone[i];
    switch (l.kind) {
      case LayerKind::Conv2d:
        x = activate(conv2d(x, random_conv(rng, l.in_channels, l.out_channels, l.kernel, l.stride, l.groups)),
                     l.nonlinearity);
        break;
      case LayerKind::Bneck: x = bneck_forward(x, random_bneck(rng, l)); break;
      case LayerKind::AvgPool2: x = avgpool2(x); break;
      default: throw ValidationError("forward: unsupported backbone layer " + layer_label(l));
    }
    log.push_back(stage("backbone[" + std::to_string(i) + "] " + layer_label(l), x));
    if (l.feeds_fpn) sources.push_back(x);
  }

  const auto& levels = spec.fpn_levels;
  if (levels.empty()) return log;
  if (sources.empty()) throw ValidationError("forward: no backbone layer feeds the pyramid");
  while (sources.size() < levels.size()) {
    const int c = sources.back().shape().channels;
    sources.push_back(conv2d(sources.back(), random_conv(rng, c, c, 3, 2, c)));
    log.push_back(stage("pyramid s" + std::to_string(levels[sources.size() - 1].stride) + " source", sources.back()));
  }

  std::vector<Tensor> p;
  for (std::size_t j = 0; j < levels.size(); ++j) {
    const auto& lv = levels[j];
    if (sources[j].shape().channels != lv.lateral_in_channels)
      throw ValidationError("forward: level s" + std::to_string(lv.stride) + " expects " +
                            std::to_string(lv.lateral_in_channels) + " lateral channels, got " +
                            std::to_string(sources[j].shape().channels));
    p.push_back(conv2d(sources[j], random_conv(rng, lv.lateral_in_channels, lv.channels, 1, 1, 1, true)));
  }
  for (std::size_t j = levels.size() - 1; j-- > 0;) {
    const auto& s = p[j].shape();
    p[j] = add(p[j], upsample_nearest(p[j + 1], s.height, s.width));
  }
  for (std::size_t j = 0; j < levels.size(); ++j) {
    const int c = levels[j].channels;
    p[j] = scconv_forward(p[j], random_conv(rng, c, c, 3, 1, c, true),
                          random_conv(rng, c, c, 1, 1, levels[j].scconv_groups, true));
    log.push_back(stage("fpn p" + std::to_string(levels[j].stride), p[j]));
  }

  // Shared RPN head.
  const int c = levels.front().channels;
  const int a = spec.rpn.anchors_per_location;
  const auto dw = random_conv(rng, c, c, 3, 1, c, true);
  const auto pw = random_conv(rng, c, c, 1, 1, spec.rpn.scconv_groups, true);
  const auto score = random_conv(rng, c, a, 1, 1, 1, true);
  const auto box = random_conv(rng, c, 4 * a, 1, 1, 1, true);
  for (std::size_t j = 0; j < levels.size(); ++j) {
    const Tensor h = activate(scconv_forward(p[j], dw, pw), Nonlinearity::ReLU);
    const std::string tag = " s" + std::to_string(levels[j].stride);
    log.push_back(stage("rpn score" + tag, conv2d(h, score)));
    log.push_back(stage("rpn box" + tag, conv2d(h, box)));
  }
  return log;
}

}  // namespace tinydet
