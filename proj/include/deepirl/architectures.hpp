#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "deepirl/neural/network.hpp"

namespace deepirl {

enum class ArchitectureId { StandardFcn, PoolingFcn, MsFcn };

inline constexpr ArchitectureId kAllArchitectures[] = {ArchitectureId::StandardFcn, ArchitectureId::PoolingFcn,
                                                       ArchitectureId::MsFcn};

inline std::string to_string(ArchitectureId id) {
  switch (id) {
    case ArchitectureId::StandardFcn: return "standard_fcn";
    case ArchitectureId::PoolingFcn: return "pooling_fcn";
    case ArchitectureId::MsFcn: return "ms_fcn";
  }
  throw std::invalid_argument("unknown architecture");
}

inline ArchitectureId architecture_from_string(const std::string& s) {
  for (auto id : kAllArchitectures)
    if (to_string(id) == s) return id;
  throw std::invalid_argument("unknown architecture '" + s + "' (expected standard_fcn, pooling_fcn or ms_fcn)");
}

/// Footprint the receptive field must cover: the vehicle plus a margin of
/// surrounding terrain on each side.
struct FootprintSpec {
  double vehicle_diameter_m = 2.0;
  double margin_m = 0.5;
  double required_m() const { return vehicle_diameter_m + 2.0 * margin_m; }
};

/// Receptive field in input cells, max over all DAG paths, using
/// rf += (k - 1) * jump for convolutions, rf += jump and jump *= 2 for 2x2
/// pooling, and jump /= 2 for upsampling.
inline int receptive_field(const nn::NetworkGraph& net) {
  using nn::LayerKind;
  struct Path {
    double rf, jump;
  };
  const auto& nodes = net.nodes();
  if (net.output_node() < 0) throw std::invalid_argument("network has no output");
  std::vector<std::vector<Path>> paths(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    auto& out = paths[i];
    switch (n.kind) {
      case LayerKind::Input: out.push_back({1.0, 1.0}); break;
      case LayerKind::Conv:
        for (auto p : paths[n.inputs[0]]) out.push_back({p.rf + (n.kernel - 1) * p.jump, p.jump});
        break;
      case LayerKind::MaxPool:
        for (auto p : paths[n.inputs[0]]) out.push_back({p.rf + p.jump, p.jump * 2.0});
        break;
      case LayerKind::Upsample:
        for (auto p : paths[n.inputs[0]]) out.push_back({p.rf, p.jump / 2.0});
        break;
      case LayerKind::Relu:
      case LayerKind::BatchNorm:
      case LayerKind::NegSoftplus: out = paths[n.inputs[0]]; break;
      case LayerKind::Concat:
        out = paths[n.inputs[0]];
        out.insert(out.end(), paths[n.inputs[1]].begin(), paths[n.inputs[1]].end());
        break;
      default: throw std::invalid_argument("receptive_field: unsupported layer");
    }
  }
  double best = 0.0;
  for (auto p : paths[net.output_node()]) best = std::max(best, p.rf);
  return static_cast<int>(best);
}

inline void check_receptive_field(const nn::NetworkGraph& net, double resolution_m, const FootprintSpec& fp) {
  const int rf = receptive_field(net);
  if (rf * resolution_m < fp.required_m())
    throw std::invalid_argument("receptive field of " + std::to_string(rf) + " cells (" +
                                std::to_string(rf * resolution_m) + " m) does not cover the " +
                                std::to_string(fp.required_m()) + " m vehicle footprint");
}

namespace detail {

inline int conv_relu_bn(nn::NetworkGraph& g, int x, int out_channels, int kernel) {
  return g.batchnorm(g.relu(g.conv(x, out_channels, kernel)));
}

// 1x1 projection to a single channel followed by the -softplus reward head.
inline void reward_head(nn::NetworkGraph& g, int x) {
  g.set_output(g.neg_softplus(g.conv(x, 1, 1)));
}

}  // namespace detail

inline nn::NetworkGraph build_standard_fcn(int in_channels = 3) {
  nn::NetworkGraph g;
  int x = g.input(in_channels);
  x = detail::conv_relu_bn(g, x, 16, 5);
  x = detail::conv_relu_bn(g, x, 16, 5);
  x = detail::conv_relu_bn(g, x, 16, 3);
  x = detail::conv_relu_bn(g, x, 8, 3);
  detail::reward_head(g, x);
  return g;
}

inline nn::NetworkGraph build_pooling_fcn(int in_channels = 3) {
  nn::NetworkGraph g;
  int x = g.input(in_channels);
  x = detail::conv_relu_bn(g, x, 16, 5);
  x = g.maxpool(x);
  x = detail::conv_relu_bn(g, x, 16, 5);
  x = detail::conv_relu_bn(g, x, 8, 3);
  x = g.upsample(x);
  detail::reward_head(g, x);
  return g;
}

/// Two branches joined by channel concatenation (full-resolution branch
/// first, pooled branch second).
inline nn::NetworkGraph build_ms_fcn(int in_channels = 3) {
  nn::NetworkGraph g;
  const int x = g.input(in_channels);
  int a = detail::conv_relu_bn(g, x, 12, 5);
  a = detail::conv_relu_bn(g, a, 12, 3);
  int b = g.maxpool(x);
  b = detail::conv_relu_bn(g, b, 12, 5);
  b = detail::conv_relu_bn(g, b, 12, 3);
  b = g.upsample(b);
  int y = g.concat(a, b);
  y = detail::conv_relu_bn(g, y, 8, 3);
  detail::reward_head(g, y);
  return g;
}

/// Builds an architecture and enforces the footprint constraint.
inline nn::NetworkGraph build_architecture(ArchitectureId id, double resolution_m = 0.25,
                                           const FootprintSpec& fp = {}, int in_channels = 3) {
  nn::NetworkGraph g;
  switch (id) {
    case ArchitectureId::StandardFcn: g = build_standard_fcn(in_channels); break;
    case ArchitectureId::PoolingFcn: g = build_pooling_fcn(in_channels); break;
    case ArchitectureId::MsFcn: g = build_ms_fcn(in_channels); break;
  }
  check_receptive_field(g, resolution_m, fp);
  return g;
}

}  // namespace deepirl
