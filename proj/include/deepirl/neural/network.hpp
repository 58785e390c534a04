#pragma once

#include <cmath>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "deepirl/neural/layers.hpp"
#include "deepirl/neural/tensor.hpp"
#include "deepirl/random.hpp"

namespace deepirl::nn {

enum class LayerKind { Input, Conv, Relu, BatchNorm, MaxPool, Upsample, Concat, NegSoftplus };

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Input: return "input";
    case LayerKind::Conv: return "conv";
    case LayerKind::Relu: return "relu";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::MaxPool: return "maxpool2x2";
    case LayerKind::Upsample: return "upsample2x";
    case LayerKind::Concat: return "concat";
    case LayerKind::NegSoftplus: return "neg_softplus";
  }
  return "?";
}

/// A learnable array and its gradient accumulator.
struct ParamRef {
  std::string name;
  std::span<double> value;
  std::span<double> grad;
  bool regularized = false;  // included in the elastic-net penalty
};

struct Node {
  LayerKind kind = LayerKind::Input;
  std::vector<int> inputs;
  int channels = 0;  // output channels
  int kernel = 0;

  Tensor weight, grad_weight;
  std::vector<double> bias, grad_bias;
  std::vector<double> gamma, beta, grad_gamma, grad_beta;
  std::vector<double> running_mean, running_var;

  // Forward caches.
  Tensor out;
  BatchNormCache bn_cache;
  std::vector<std::uint32_t> argmax;
};

/// Directed acyclic graph of layers. Nodes are appended in topological
/// order (a node may only consume earlier nodes) and the graph has one
/// single-channel output node.
class NetworkGraph {
public:
  double bn_momentum = 0.1;

  int input(int channels) {
    if (!nodes_.empty()) throw std::logic_error("the input node must come first");
    Node n;
    n.kind = LayerKind::Input;
    n.channels = channels;
    return push(std::move(n));
  }

  int conv(int from, int out_channels, int kernel) {
    if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("conv kernel must be odd");
    Node n = unary(LayerKind::Conv, from);
    const int in_c = nodes_[from].channels;
    n.channels = out_channels;
    n.kernel = kernel;
    n.weight = Tensor(out_channels, in_c, kernel, kernel);
    n.grad_weight = Tensor(out_channels, in_c, kernel, kernel);
    n.bias.assign(out_channels, 0.0);
    n.grad_bias.assign(out_channels, 0.0);
    return push(std::move(n));
  }

  int relu(int from) { return push(unary(LayerKind::Relu, from)); }
  int maxpool(int from) { return push(unary(LayerKind::MaxPool, from)); }
  int upsample(int from) { return push(unary(LayerKind::Upsample, from)); }
  int neg_softplus(int from) { return push(unary(LayerKind::NegSoftplus, from)); }

  int batchnorm(int from) {
    Node n = unary(LayerKind::BatchNorm, from);
    const auto c = static_cast<std::size_t>(n.channels);
    n.gamma.assign(c, 1.0);
    n.beta.assign(c, 0.0);
    n.grad_gamma.assign(c, 0.0);
    n.grad_beta.assign(c, 0.0);
    n.running_mean.assign(c, 0.0);
    n.running_var.assign(c, 1.0);
    return push(std::move(n));
  }

  int concat(int a, int b) {
    check_ref(a);
    check_ref(b);
    Node n;
    n.kind = LayerKind::Concat;
    n.inputs = {a, b};
    n.channels = nodes_[a].channels + nodes_[b].channels;
    return push(std::move(n));
  }

  void set_output(int node) {
    check_ref(node);
    if (nodes_[node].channels != 1) throw std::invalid_argument("output node must have one channel");
    output_ = node;
  }

  int output_node() const { return output_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  std::vector<Node>& nodes() { return nodes_; }
  int input_channels() const { return nodes_.empty() ? 0 : nodes_[0].channels; }

  /// Kaiming (fan-in) normal weights, zero biases, unit BN scale.
  void init_weights(std::uint64_t seed) {
    Rng rng(seed);
    for (auto& n : nodes_) {
      if (n.kind == LayerKind::Conv) {
        const double fan_in = static_cast<double>(n.weight.c) * n.kernel * n.kernel;
        const double sd = std::sqrt(2.0 / fan_in);
        for (auto& w : n.weight.data) w = sd * standard_normal(rng);
        std::fill(n.bias.begin(), n.bias.end(), 0.0);
      } else if (n.kind == LayerKind::BatchNorm) {
        std::fill(n.gamma.begin(), n.gamma.end(), 1.0);
        std::fill(n.beta.begin(), n.beta.end(), 0.0);
        std::fill(n.running_mean.begin(), n.running_mean.end(), 0.0);
        std::fill(n.running_var.begin(), n.running_var.end(), 1.0);
      }
    }
  }

  const Tensor& forward(const Tensor& x, Mode mode) {
    if (output_ < 0) throw std::logic_error("network has no output node");
    if (x.c != input_channels())
      throw std::invalid_argument("network expects " + std::to_string(input_channels()) + " input channels, got " +
                                  std::to_string(x.c));
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      Node& n = nodes_[i];
      switch (n.kind) {
        case LayerKind::Input: n.out = x; break;
        case LayerKind::Conv: n.out = conv2d(in(n, 0), n.weight, n.bias); break;
        case LayerKind::Relu: n.out = nn::relu(in(n, 0)); break;
        case LayerKind::NegSoftplus: n.out = nn::neg_softplus(in(n, 0)); break;
        case LayerKind::BatchNorm:
          n.out = nn::batchnorm(in(n, 0), n.gamma, n.beta, n.running_mean, n.running_var, mode, bn_momentum,
                                &n.bn_cache);
          break;
        case LayerKind::MaxPool: {
          auto r = maxpool2x2(in(n, 0));
          n.out = std::move(r.output);
          n.argmax = std::move(r.argmax);
          break;
        }
        case LayerKind::Upsample: n.out = upsample2x(in(n, 0)); break;
        case LayerKind::Concat: n.out = concat_channels(in(n, 0), in(n, 1)); break;
      }
    }
    return nodes_[output_].out;
  }

  const Tensor& output() const { return nodes_[output_].out; }

  /// Backpropagates dObjective/dOutput from the last forward pass,
  /// accumulating parameter gradients. Returns dObjective/dInput.
  Tensor backward(const Tensor& grad_output) {
    if (output_ < 0) throw std::logic_error("network has no output node");
    if (!grad_output.same_shape(nodes_[output_].out))
      throw std::invalid_argument("output gradient shape " + grad_output.shape_str() + " does not match output " +
                                  nodes_[output_].out.shape_str());
    std::vector<Tensor> grads(nodes_.size());
    std::vector<bool> has(nodes_.size(), false);
    grads[output_] = grad_output;
    has[output_] = true;
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 1; --i) {
      if (!has[i]) continue;
      Node& n = nodes_[i];
      const Tensor& g = grads[i];
      switch (n.kind) {
        case LayerKind::Input: break;
        case LayerKind::Conv: {
          auto cg = conv2d_backward(in(n, 0), n.weight, g, true);
          add(n.grad_weight.data, cg.weights.data);
          add(n.grad_bias, cg.bias);
          accumulate(grads, has, n.inputs[0], std::move(cg.input));
          break;
        }
        case LayerKind::Relu: accumulate(grads, has, n.inputs[0], relu_backward(in(n, 0), g)); break;
        case LayerKind::NegSoftplus:
          accumulate(grads, has, n.inputs[0], neg_softplus_backward(in(n, 0), g));
          break;
        case LayerKind::BatchNorm: {
          auto bg = batchnorm_backward(n.bn_cache, n.gamma, g);
          add(n.grad_gamma, bg.gamma);
          add(n.grad_beta, bg.beta);
          accumulate(grads, has, n.inputs[0], std::move(bg.input));
          break;
        }
        case LayerKind::MaxPool: {
          const Tensor& x = in(n, 0);
          accumulate(grads, has, n.inputs[0], maxpool2x2_backward(n.argmax, g, x.n, x.c, x.h, x.w));
          break;
        }
        case LayerKind::Upsample: accumulate(grads, has, n.inputs[0], upsample2x_backward(g)); break;
        case LayerKind::Concat: {
          auto [ga, gb] = concat_channels_backward(g, nodes_[n.inputs[0]].channels);
          accumulate(grads, has, n.inputs[0], std::move(ga));
          accumulate(grads, has, n.inputs[1], std::move(gb));
          break;
        }
      }
      grads[i] = Tensor();
    }
    if (!has[0]) return Tensor(nodes_[0].out.n, nodes_[0].out.c, nodes_[0].out.h, nodes_[0].out.w);
    return std::move(grads[0]);
  }

  void zero_grad() {
    for (auto& n : nodes_) {
      std::fill(n.grad_weight.data.begin(), n.grad_weight.data.end(), 0.0);
      std::fill(n.grad_bias.begin(), n.grad_bias.end(), 0.0);
      std::fill(n.grad_gamma.begin(), n.grad_gamma.end(), 0.0);
      std::fill(n.grad_beta.begin(), n.grad_beta.end(), 0.0);
    }
  }

  /// Learnable parameters in a fixed order. Conv kernels are regularized;
  /// biases and BN affine terms are not.
  std::vector<ParamRef> parameters() {
    std::vector<ParamRef> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      Node& n = nodes_[i];
      const std::string p = "n" + std::to_string(i) + ".";
      if (n.kind == LayerKind::Conv) {
        out.push_back({p + "weight", n.weight.data, n.grad_weight.data, true});
        out.push_back({p + "bias", n.bias, n.grad_bias, false});
      } else if (n.kind == LayerKind::BatchNorm) {
        out.push_back({p + "gamma", n.gamma, n.grad_gamma, false});
        out.push_back({p + "beta", n.beta, n.grad_beta, false});
      }
    }
    return out;
  }

  /// Non-learnable state (BN running statistics).
  std::vector<std::pair<std::string, std::span<double>>> buffers() {
    std::vector<std::pair<std::string, std::span<double>>> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      Node& n = nodes_[i];
      if (n.kind != LayerKind::BatchNorm) continue;
      const std::string p = "n" + std::to_string(i) + ".";
      out.emplace_back(p + "running_mean", n.running_mean);
      out.emplace_back(p + "running_var", n.running_var);
    }
    return out;
  }

  std::size_t parameter_count() {
    std::size_t c = 0;
    for (const auto& p : parameters()) c += p.value.size();
    return c;
  }

  /// One line per node: "<index> <kind> in=<a,b> ch=<c> k=<k>".
  std::vector<std::string> layer_specs() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const Node& n = nodes_[i];
      std::ostringstream ss;
      ss << i << ' ' << layer_kind_name(n.kind) << " in=";
      for (std::size_t j = 0; j < n.inputs.size(); ++j) ss << (j ? "," : "") << n.inputs[j];
      if (n.inputs.empty()) ss << '-';
      ss << " ch=" << n.channels << " k=" << n.kernel;
      out.push_back(ss.str());
    }
    if (output_ >= 0) out.push_back("output " + std::to_string(output_));
    return out;
  }

private:
  int push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }
  void check_ref(int i) const {
    if (i < 0 || i >= static_cast<int>(nodes_.size())) throw std::invalid_argument("unknown node reference");
  }
  Node unary(LayerKind kind, int from) const {
    check_ref(from);
    Node n;
    n.kind = kind;
    n.inputs = {from};
    n.channels = nodes_[from].channels;
    return n;
  }
  const Tensor& in(const Node& n, int k) const { return nodes_[n.inputs[k]].out; }

  static void add(std::vector<double>& dst, const std::vector<double>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
  static void accumulate(std::vector<Tensor>& grads, std::vector<bool>& has, int idx, Tensor g) {
    if (!has[idx]) {
      grads[idx] = std::move(g);
      has[idx] = true;
    } else {
      add(grads[idx].data, g.data);
    }
  }

  std::vector<Node> nodes_;
  int output_ = -1;
};

}  // namespace deepirl::nn
