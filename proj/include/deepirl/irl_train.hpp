#pragma once

// Maximum-entropy deep IRL training loop: reward network forward, soft value
// iteration, visitation propagation, moment-matching gradient, backprop and
// parameter update.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "deepirl/architectures.hpp"
#include "deepirl/checkpoint.hpp"
#include "deepirl/error.hpp"
#include "deepirl/mdp.hpp"
#include "deepirl/neural/optimizer.hpp"
#include "deepirl/random.hpp"
#include "deepirl/synth.hpp"

namespace deepirl {

struct TrainConfig {
  ArchitectureId architecture = ArchitectureId::StandardFcn;
  nn::OptimizerKind optimizer = nn::OptimizerKind::Adam;
  double learning_rate = 1e-3;
  int batch_size = 8;
  int n_steps = 2000;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double gamma = 1.0;
  double step_cost = 4.0;  // per-move cost added to the learned reward
  std::uint64_t seed = 1;
  std::string dataset_path;
  int checkpoint_interval = 0;  // 0: final checkpoint only
  double vi_tol = 1e-6;
  int horizon = 0;  // 0: the MDP default
  double max_residual_mass = 1e-6;

  void validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
    if (n_steps < 0) throw std::invalid_argument("n_steps must be nonnegative");
    if (lambda1 < 0.0 || lambda2 < 0.0) throw std::invalid_argument("elastic net coefficients must be nonnegative");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in (0,1]");
    if (!(step_cost >= 0.0)) throw std::invalid_argument("step_cost must be nonnegative");
    if (checkpoint_interval < 0) throw std::invalid_argument("checkpoint_interval must be nonnegative");
    if (!(vi_tol > 0.0)) throw std::invalid_argument("vi_tol must be positive");
    if (horizon < 0) throw std::invalid_argument("horizon must be nonnegative");
  }

  nn::OptimizerConfig optimizer_config() const {
    nn::OptimizerConfig c;
    c.kind = optimizer;
    c.learning_rate = learning_rate;
    return c;
  }
};

struct StepRecord {
  long long step = 0;
  double nll = 0.0;  // mean per-demonstration NLL of the batch
  double reg = 0.0;  // elastic net penalty
  double grad_norm = 0.0;
  double grad_max = 0.0;  // largest |dL/dtheta| entry
  double seconds = 0.0;
  double max_residual = 0.0;
  int unconverged = 0;  // value iterations that hit max_iters
};

struct TrainHistory {
  std::vector<StepRecord> records;

  std::string to_csv() const {
    std::ostringstream ss;
    ss.precision(10);
    ss << "step,nll,reg,grad_norm,seconds\n";
    for (const auto& r : records)
      ss << r.step << ',' << r.nll << ',' << r.reg << ',' << r.grad_norm << ',' << r.seconds << '\n';
    return ss.str();
  }
};

inline nn::Tensor features_to_tensor(std::span<const FeatureMap* const> feats) {
  if (feats.empty()) throw std::invalid_argument("empty feature batch");
  const GridSpec& spec = feats[0]->spec;
  nn::Tensor t(static_cast<int>(feats.size()), FeatureMap::kChannels, spec.height_cells, spec.width_cells);
  for (std::size_t n = 0; n < feats.size(); ++n) {
    if (!(feats[n]->spec == spec)) throw std::invalid_argument("feature maps in a batch must share a grid");
    for (int c = 0; c < FeatureMap::kChannels; ++c) {
      const auto& ch = feats[n]->channel(c);
      std::copy(ch.begin(), ch.end(), t.plane_ptr(static_cast<int>(n), c));
    }
  }
  return t;
}

/// Reward model backed by a network: r = net(features).
class NetworkRewardModel {
public:
  explicit NetworkRewardModel(nn::NetworkGraph net) : net_(std::move(net)) {}

  std::vector<std::vector<double>> forward(std::span<const FeatureMap* const> feats, nn::Mode mode) {
    const auto& out = net_.forward(features_to_tensor(feats), mode);
    const auto plane = static_cast<std::size_t>(out.h) * out.w;
    std::vector<std::vector<double>> r(feats.size());
    for (std::size_t n = 0; n < feats.size(); ++n) r[n].assign(out.plane_ptr(static_cast<int>(n), 0), out.plane_ptr(static_cast<int>(n), 0) + plane);
    return r;
  }

  /// Accumulates d(objective)/d(theta) given d(objective)/d(reward).
  void backward(const std::vector<std::vector<double>>& grad_reward) {
    const auto& out = net_.output();
    nn::Tensor g(out.n, 1, out.h, out.w);
    for (std::size_t n = 0; n < grad_reward.size(); ++n)
      std::copy(grad_reward[n].begin(), grad_reward[n].end(), g.plane_ptr(static_cast<int>(n), 0));
    net_.backward(g);
  }

  void zero_grad() { net_.zero_grad(); }
  std::vector<nn::ParamRef> parameters() { return net_.parameters(); }
  nn::NetworkGraph& net() { return net_; }

private:
  nn::NetworkGraph net_;
};

/// Identity reward model: the reward map is the parameter vector, shared
/// by every sample (all samples must live on one grid).
class TabularRewardModel {
public:
  explicit TabularRewardModel(std::vector<double> theta) : theta_(std::move(theta)), grad_(theta_.size(), 0.0) {}

  std::vector<std::vector<double>> forward(std::span<const FeatureMap* const> feats, nn::Mode) {
    return std::vector<std::vector<double>>(feats.size(), theta_);
  }
  void backward(const std::vector<std::vector<double>>& grad_reward) {
    for (const auto& g : grad_reward)
      for (std::size_t i = 0; i < g.size(); ++i) grad_[i] += g[i];
  }
  void zero_grad() { std::fill(grad_.begin(), grad_.end(), 0.0); }
  std::vector<nn::ParamRef> parameters() { return {{"theta", theta_, grad_, false}}; }
  const std::vector<double>& theta() const { return theta_; }

private:
  std::vector<double> theta_, grad_;
};

/// Per-batch MaxEnt quantities for a fixed set of rewards.
struct BatchGradient {
  std::vector<std::vector<double>> grad_reward;  // (mu_D - E[mu]) / batch
  std::vector<double> nll;                       // per sample
  double max_residual = 0.0;
  int unconverged = 0;
};

inline BatchGradient maxent_batch_gradient(const std::vector<std::vector<double>>& rewards,
                                           std::span<const DatasetSample* const> batch, const TrainConfig& cfg) {
  BatchGradient out;
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const DatasetSample& s = *batch[i];
    const GridSpec& spec = s.features.spec;
    for (double r : rewards[i])
      if (!std::isfinite(r)) throw NumericalError("non-finite reward in batch sample " + std::to_string(i));
    const Mdp mdp = Mdp::on_grid(spec, s.goal, cfg.gamma, cfg.step_cost);
    const auto vi = soft_value_iteration(rewards[i], mdp, mdp.default_max_iters(), cfg.vi_tol);
    if (!vi.converged) ++out.unconverged;
    const int horizon = cfg.horizon > 0 ? cfg.horizon : mdp.default_horizon();
    const auto vis = propagate_policy(vi.policy, mdp, s.start, horizon);
    out.max_residual = std::max(out.max_residual, vis.residual_mass);
    if (!(vis.residual_mass <= cfg.max_residual_mass))
      throw NumericalError("unabsorbed visitation mass " + std::to_string(vis.residual_mass) + " for batch sample " +
                           std::to_string(i) + " exceeds " + std::to_string(cfg.max_residual_mass));
    const double nll = demo_nll(vi.policy, s.demo);
    if (!std::isfinite(nll)) throw NumericalError("non-finite NLL for batch sample " + std::to_string(i));
    out.nll.push_back(nll);
    const auto stats = empirical_visitation(std::span<const Trajectory>(&s.demo, 1), spec.num_cells());
    auto g = maxent_gradient(stats.mu_d, vis.mu);
    for (auto& v : g) v *= scale;
    out.grad_reward.push_back(std::move(g));
  }
  return out;
}

/// One iteration of the training loop. Parameters move to increase
/// L = L_D - elastic net; the optimizer receives -dL/dtheta.
template <class Model>
StepRecord train_step(Model& model, nn::Optimizer& opt, std::span<const DatasetSample* const> batch,
                      const TrainConfig& cfg) {
  if (batch.empty()) throw std::invalid_argument("train_step needs a nonempty batch");
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<const FeatureMap*> feats;
  for (const auto* s : batch) feats.push_back(&s->features);
  const auto rewards = model.forward(feats, nn::Mode::Train);
  const auto bg = maxent_batch_gradient(rewards, batch, cfg);

  model.zero_grad();
  model.backward(bg.grad_reward);
  auto params = model.parameters();
  std::vector<std::span<double>> values;
  std::vector<std::vector<double>> descent;
  StepRecord rec;
  double sq = 0.0;
  for (auto& p : params) {
    std::vector<double> g(p.grad.begin(), p.grad.end());
    if (p.regularized) {
      const auto reg = nn::elastic_net_grad(p.value, cfg.lambda1, cfg.lambda2);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= reg[i];
      rec.reg += nn::elastic_net_penalty(p.value, cfg.lambda1, cfg.lambda2);
    }
    for (auto& v : g) {
      if (!std::isfinite(v)) throw NumericalError("non-finite gradient in " + p.name);
      sq += v * v;
      rec.grad_max = std::max(rec.grad_max, std::abs(v));
      v = -v;
    }
    values.push_back(p.value);
    descent.push_back(std::move(g));
  }
  opt.step(values, descent);

  for (double v : bg.nll) rec.nll += v;
  rec.nll /= static_cast<double>(bg.nll.size());
  rec.grad_norm = std::sqrt(sq);
  rec.max_residual = bg.max_residual;
  rec.unconverged = bg.unconverged;
  rec.step = opt.step_count();
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

struct TrainResult {
  nn::NetworkGraph net;
  TrainHistory history;
  CheckpointInfo info;
};

/// Runs `n_steps` minibatch steps over seeded per-epoch shuffles of the
/// training split. With a non-empty `out_dir`, writes periodic and final
/// checkpoints, history.csv, and nan_dump.txt on a numerical abort.
inline TrainResult train(const TrainConfig& cfg, const Dataset& ds, const std::filesystem::path& out_dir = {}) {
  cfg.validate();
  if (ds.train.empty()) throw DataError("dataset has no training samples");
  const double res = ds.config.grid.resolution_m;
  TrainResult result;
  result.info = {cfg.architecture, 0, cfg.seed, res};
  NetworkRewardModel model(build_architecture(cfg.architecture, res));
  model.net().init_weights(derive_seed(cfg.seed, kSeedInit));
  nn::Optimizer opt(cfg.optimizer_config());

  std::vector<int> order;
  std::size_t cursor = 0;
  std::uint64_t epoch = 0;
  for (int step = 1; step <= cfg.n_steps; ++step) {
    std::vector<const DatasetSample*> batch;
    std::vector<int> picked;
    while (static_cast<int>(batch.size()) < cfg.batch_size) {
      if (cursor == order.size()) {
        order = ds.train;
        Rng rng(derive_seed(cfg.seed, kSeedShuffle, epoch++));
        for (std::size_t i = order.size(); i > 1; --i)
          std::swap(order[i - 1], order[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i))]);
        cursor = 0;
      }
      picked.push_back(order[cursor]);
      batch.push_back(&ds.samples[static_cast<std::size_t>(order[cursor++])]);
    }
    try {
      result.history.records.push_back(train_step(model, opt, batch, cfg));
    } catch (const NumericalError& e) {
      if (!out_dir.empty()) {
        std::ostringstream dump;
        dump << "step " << step << "\nerror " << e.what() << "\nbatch";
        for (int i : picked) dump << ' ' << i;
        dump << '\n';
        if (!result.history.records.empty()) {
          const auto& last = result.history.records.back();
          dump << "last_nll " << last.nll << "\nlast_grad_norm " << last.grad_norm << '\n';
        }
        io::write_file(out_dir / "nan_dump.txt", dump.str());
        auto snapshot = model.net();
        save_checkpoint(snapshot, {cfg.architecture, step - 1, cfg.seed, res}, out_dir / "abort");
      }
      throw;
    }
    if (!out_dir.empty() && cfg.checkpoint_interval > 0 && step % cfg.checkpoint_interval == 0 &&
        step != cfg.n_steps) {
      auto snapshot = model.net();
      char name[32];
      std::snprintf(name, sizeof name, "step_%06d", step);
      save_checkpoint(snapshot, {cfg.architecture, step, cfg.seed, res}, out_dir / name);
    }
  }
  result.net = std::move(model.net());
  round_to_storage(result.net);
  result.info.step = cfg.n_steps;
  if (!out_dir.empty()) {
    save_checkpoint(result.net, result.info, out_dir / "final");
    io::write_file(out_dir / "history.csv", result.history.to_csv());
  }
  return result;
}

/// Cost map (negated reward) from eval-mode inference.
inline std::vector<double> infer_costmap(nn::NetworkGraph& net, const FeatureMap& features) {
  const FeatureMap* f = &features;
  if (net.input_channels() != FeatureMap::kChannels)
    throw DataError("network expects " + std::to_string(net.input_channels()) + " input channels");
  const auto& out = net.forward(features_to_tensor(std::span<const FeatureMap* const>(&f, 1)), nn::Mode::Eval);
  std::vector<double> cost(out.data.size());
  for (std::size_t i = 0; i < cost.size(); ++i) cost[i] = -out.data[i];
  return cost;
}

}  // namespace deepirl
