#pragma once

// Finite-difference checks for every layer, every architecture and the
// full reward-learning pipeline, shared by the tests, the acceptance run and
// the gradcheck command.

#include <random>
#include <string>
#include <vector>

#include "deepirl/architectures.hpp"
#include "deepirl/irl_train.hpp"
#include "deepirl/neural/layers.hpp"
#include "deepirl/testing/finite_difference.hpp"

namespace deepirl::verify {

struct NamedCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  double tolerance = 0.0;
  bool passed() const { return max_rel_error < tolerance; }
};

inline constexpr double kLayerTolerance = 1e-5;
inline constexpr double kNetworkTolerance = 1e-4;
inline constexpr double kPipelineTolerance = 1e-3;

namespace detail {

inline nn::Tensor random_tensor(int n, int c, int h, int w, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  nn::Tensor t(n, c, h, w);
  for (auto& v : t.data) v = u(rng);
  return t;
}

inline double dot(const nn::Tensor& a, const nn::Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

inline void merge(NamedCheck& into, const GradCheckResult& r) {
  into.max_rel_error = std::max(into.max_rel_error, r.max_rel_error);
  into.checked += r.checked;
}

// Non-trivial BN affine terms and running statistics, so eval mode is not
// an identity.
inline void randomize_batchnorm(nn::NetworkGraph& g, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& n : g.nodes()) {
    if (n.kind != nn::LayerKind::BatchNorm) continue;
    for (std::size_t c = 0; c < n.gamma.size(); ++c) {
      n.gamma[c] = 0.5 + uniform01(rng);
      n.beta[c] = uniform01(rng) - 0.5;
      n.running_mean[c] = 0.5 * uniform01(rng);
      n.running_var[c] = 0.5 + uniform01(rng);
    }
  }
}

}  // namespace detail

/// Deliberate corruption of an analytic gradient, to show that the checks
/// catch it.
struct GradientFault {
  bool conv_backward = false;
};

/// Each layer's input and parameter gradients against central differences
/// of <layer(x), c> for a fixed random c.
inline std::vector<NamedCheck> layer_gradient_checks(std::uint64_t seed = 1, GradientFault fault = {}) {
  using detail::dot;
  using detail::random_tensor;
  constexpr double h = 1e-4;
  std::vector<NamedCheck> out;
  auto add = [&](const std::string& name) -> NamedCheck& {
    out.push_back({name, 0.0, 0, kLayerTolerance});
    return out.back();
  };

  {
    auto& c = add("conv2d");
    auto x = random_tensor(2, 3, 5, 5, seed);
    auto w = random_tensor(4, 3, 3, 3, seed + 1);
    std::vector<double> b = {0.1, -0.2, 0.3, 0.0};
    const auto co = random_tensor(2, 4, 5, 5, seed + 2);
    auto f = [&] { return dot(nn::conv2d(x, w, b), co); };
    auto g = nn::conv2d_backward(x, w, co);
    if (fault.conv_backward) g.weights.data[0] *= 1.01;
    detail::merge(c, check_gradient(x.data, g.input.data, f, h));
    detail::merge(c, check_gradient(w.data, g.weights.data, f, h));
    detail::merge(c, check_gradient(b, g.bias, f, h));
  }
  for (nn::Mode mode : {nn::Mode::Train, nn::Mode::Eval}) {
    auto& c = add(mode == nn::Mode::Train ? "batchnorm_train" : "batchnorm_eval");
    auto x = random_tensor(4, 2, 3, 3, seed + 3, -2.0, 2.0);
    std::vector<double> gamma = {1.3, 0.6}, beta = {0.2, -0.4};
    const std::vector<double> rm0 = {0.1, -0.2}, rv0 = {1.5, 0.7};
    const auto co = random_tensor(4, 2, 3, 3, seed + 4);
    auto f = [&] {
      auto rm = rm0, rv = rv0;
      return dot(nn::batchnorm(x, gamma, beta, rm, rv, mode, 0.1), co);
    };
    nn::BatchNormCache cache;
    auto rm = rm0, rv = rv0;
    nn::batchnorm(x, gamma, beta, rm, rv, mode, 0.1, &cache);
    const auto g = nn::batchnorm_backward(cache, gamma, co);
    detail::merge(c, check_gradient(x.data, g.input.data, f, h));
    detail::merge(c, check_gradient(gamma, g.gamma, f, h));
    detail::merge(c, check_gradient(beta, g.beta, f, h));
  }
  {
    auto& c = add("relu");
    auto x = random_tensor(1, 2, 4, 4, seed + 5);
    // Keep inputs away from the kink.
    for (auto& v : x.data) v += v >= 0.0 ? 0.1 : -0.1;
    const auto co = random_tensor(1, 2, 4, 4, seed + 6);
    auto f = [&] { return dot(nn::relu(x), co); };
    detail::merge(c, check_gradient(x.data, nn::relu_backward(x, co).data, f, h, {}, 1e-9));
  }
  {
    auto& c = add("maxpool2x2");
    auto x = random_tensor(2, 2, 4, 6, seed + 7);
    // Window entries far apart relative to the step, so no ties flip.
    for (std::size_t i = 0; i < x.size(); ++i)
      x.data[i] = 0.01 * static_cast<double>((i * 37) % x.size()) + x.data[i] * 1e-3;
    const auto co = random_tensor(2, 2, 2, 3, seed + 8);
    auto f = [&] { return dot(nn::maxpool2x2(x).output, co); };
    const auto g = nn::maxpool2x2_backward(nn::maxpool2x2(x).argmax, co, 2, 2, 4, 6);
    detail::merge(c, check_gradient(x.data, g.data, f, h, {}, 1e-9));
  }
  {
    auto& c = add("upsample2x");
    auto x = random_tensor(2, 2, 3, 2, seed + 9);
    const auto co = random_tensor(2, 2, 6, 4, seed + 10);
    auto f = [&] { return dot(nn::upsample2x(x), co); };
    detail::merge(c, check_gradient(x.data, nn::upsample2x_backward(co).data, f, h));
  }
  {
    auto& c = add("concat");
    auto a = random_tensor(1, 2, 3, 3, seed + 11);
    auto b = random_tensor(1, 3, 3, 3, seed + 12);
    const auto co = random_tensor(1, 5, 3, 3, seed + 13);
    auto f = [&] { return dot(nn::concat_channels(a, b), co); };
    const auto [ga, gb] = nn::concat_channels_backward(co, 2);
    detail::merge(c, check_gradient(a.data, ga.data, f, h));
    detail::merge(c, check_gradient(b.data, gb.data, f, h));
  }
  {
    auto& c = add("neg_softplus");
    auto x = random_tensor(1, 1, 4, 4, seed + 14, -6.0, 6.0);
    const auto co = random_tensor(1, 1, 4, 4, seed + 15);
    auto f = [&] { return dot(nn::neg_softplus(x), co); };
    detail::merge(c, check_gradient(x.data, nn::neg_softplus_backward(x, co).data, f, h, {}, 1e-9));
  }
  return out;
}

/// Whole-network check on an 8x8 input: every input entry, every entry of
/// small parameter tensors and a strided sample of large kernels.
inline NamedCheck architecture_gradient_check(ArchitectureId id, nn::Mode mode, std::uint64_t seed = 25) {
  NamedCheck out{to_string(id) + (mode == nn::Mode::Train ? "/train" : "/eval"), 0.0, 0, kNetworkTolerance};
  auto g = build_architecture(id);
  g.init_weights(seed);
  detail::randomize_batchnorm(g, seed + 1);
  auto x = detail::random_tensor(1, 3, 8, 8, seed + 2);
  const auto c = detail::random_tensor(1, 1, 8, 8, seed + 3);
  auto f = [&] { return detail::dot(g.forward(x, mode), c); };
  f();
  g.zero_grad();
  const auto gx = g.backward(c);
  detail::merge(out, check_gradient(x.data, gx.data, f, 1e-6, {}, 1e-7));
  for (auto& p : g.parameters()) {
    const std::vector<double> analytic(p.grad.begin(), p.grad.end());
    std::vector<std::size_t> idx;
    const std::size_t stride = p.value.size() > 200 ? 7 : 1;
    for (std::size_t i = 0; i < p.value.size(); i += stride) idx.push_back(i);
    detail::merge(out, check_gradient(p.value, analytic, f, 1e-6, idx, 1e-7));
  }
  return out;
}

/// A frozen 6x6 reward-learning problem: fixed random features, two
/// hand-drawn demonstrations and an eval-mode network.
struct PipelineProblem {
  GridSpec spec;
  std::vector<DatasetSample> samples;
  TrainConfig config;
};

inline PipelineProblem make_pipeline_problem(std::uint64_t seed = 5) {
  PipelineProblem p;
  p.spec.width_cells = 6;
  p.spec.height_cells = 6;
  p.spec.resolution_m = 0.25;
  p.config.vi_tol = 1e-13;
  p.config.horizon = 600;
  p.config.max_residual_mass = 1e-9;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::vector<std::vector<int>> paths = {{0, 7, 14, 15, 22, 29, 35}, {30, 25, 20, 21, 16, 11, 5}};
  for (const auto& states : paths) {
    DatasetSample s;
    s.features = FeatureMap(p.spec);
    for (int c = 0; c < FeatureMap::kChannels; ++c)
      for (auto& v : s.features.channel(c)) v = u(rng);
    s.demo = Trajectory::from_states(states, p.spec);
    s.start = states.front();
    s.goal = states.back();
    p.samples.push_back(std::move(s));
  }
  return p;
}

/// dL_D/dtheta from the MaxEnt factor (mu_D - E[mu]) backpropagated through
/// the network, against central differences of the batch-mean demonstration
/// log-likelihood.
inline NamedCheck pipeline_gradient_check(ArchitectureId id, std::uint64_t seed = 5) {
  NamedCheck out{"pipeline/" + to_string(id), 0.0, 0, kPipelineTolerance};
  auto prob = make_pipeline_problem(seed);
  NetworkRewardModel model(build_architecture(id, prob.spec.resolution_m));
  model.net().init_weights(seed + 1);
  detail::randomize_batchnorm(model.net(), seed + 2);
  std::vector<const DatasetSample*> batch;
  std::vector<const FeatureMap*> feats;
  for (const auto& s : prob.samples) {
    batch.push_back(&s);
    feats.push_back(&s.features);
  }
  auto objective = [&] {
    const auto bg = maxent_batch_gradient(model.forward(feats, nn::Mode::Eval), batch, prob.config);
    double l = 0.0;
    for (double v : bg.nll) l -= v;
    return l / static_cast<double>(bg.nll.size());
  };
  const auto bg = maxent_batch_gradient(model.forward(feats, nn::Mode::Eval), batch, prob.config);
  model.zero_grad();
  model.backward(bg.grad_reward);
  for (auto& p : model.parameters()) {
    const std::vector<double> analytic(p.grad.begin(), p.grad.end());
    std::vector<std::size_t> idx;
    const std::size_t stride = p.value.size() > 100 ? 13 : 1;
    for (std::size_t i = 0; i < p.value.size(); i += stride) idx.push_back(i);
    detail::merge(out, check_gradient(p.value, analytic, objective, 1e-5, idx, 1e-6));
  }
  return out;
}

/// Every check above: layers, each architecture in both modes and the
/// pipeline through the standard network.
inline std::vector<NamedCheck> full_gradient_suite(GradientFault fault = {}) {
  auto out = layer_gradient_checks(1, fault);
  for (auto id : kAllArchitectures)
    for (auto mode : {nn::Mode::Train, nn::Mode::Eval}) out.push_back(architecture_gradient_check(id, mode));
  out.push_back(pipeline_gradient_check(ArchitectureId::StandardFcn));
  return out;
}

}  // namespace deepirl::verify
