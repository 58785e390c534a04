#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "deepirl/irl_train.hpp"
#include "deepirl/testing/gradient_suite.hpp"
#include "deepirl/testing/tabular_fixed_point.hpp"

using namespace deepirl;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("deepirl_irl_train_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Straightforward partition-function formulation on plain arrays:
// Z(goal) = 1, Z(s) = sum_a exp(theta(s) - c) Z(s'), pi(a|s) = exp(theta(s) - c) Z(s') / Z(s),
// forward visitation with the goal absorbing, gradient = mu_D - E[mu].
std::vector<double> reference_gradient(const std::vector<double>& theta, int rows, int cols, const DatasetSample& s,
                                       double step_cost) {
  const int n = rows * cols;
  auto succ = [&](int st, int a) {
    const int r = st / cols + kActionDRow[a], c = st % cols + kActionDCol[a];
    return (r < 0 || c < 0 || r >= rows || c >= cols) ? -1 : r * cols + c;
  };
  std::vector<double> z(n, 0.0);
  z[s.goal] = 1.0;
  for (int it = 0; it < 400; ++it) {
    std::vector<double> zn(n, 0.0);
    zn[s.goal] = 1.0;
    for (int st = 0; st < n; ++st) {
      if (st == s.goal) continue;
      for (int a = 0; a < kNumActions; ++a)
        if (const int t = succ(st, a); t >= 0) zn[st] += std::exp(theta[st] - step_cost) * z[t];
    }
    z = zn;
  }
  std::vector<double> mu(n, 0.0), d(n, 0.0);
  d[s.start] = 1.0;
  mu[s.start] = 1.0;
  for (int t = 0; t < 400; ++t) {
    std::vector<double> dn(n, 0.0);
    for (int st = 0; st < n; ++st) {
      if (st == s.goal || d[st] == 0.0) continue;
      for (int a = 0; a < kNumActions; ++a)
        if (const int nx = succ(st, a); nx >= 0) dn[nx] += d[st] * std::exp(theta[st] - step_cost) * z[nx] / z[st];
    }
    for (int st = 0; st < n; ++st) mu[st] += dn[st];
    d = dn;
  }
  std::vector<double> g(n, 0.0);
  for (int st : s.demo.states) g[st] += 1.0;
  for (int st = 0; st < n; ++st) g[st] -= mu[st];
  return g;
}

DatasetConfig tiny_dataset_config(int n_samples = 6) {
  DatasetConfig c;
  c.n_samples = n_samples;
  c.seed = 17;
  c.grid = GridSpec{16, 16, 0.5, 0.0, 0.0};
  c.expert.min_distance_m = 3.0;
  c.expert.max_distance_m = 6.0;
  c.points_per_scan = 4000;
  c.train_fraction = 0.5;
  return c;
}

TrainConfig tiny_train_config(int steps) {
  TrainConfig c;
  c.n_steps = steps;
  c.batch_size = 2;
  c.learning_rate = 1e-2;
  c.seed = 4;
  return c;
}

std::vector<double> flat_params(nn::NetworkGraph& g) {
  std::vector<double> out;
  for (auto& p : g.parameters()) out.insert(out.end(), p.value.begin(), p.value.end());
  for (auto& [name, b] : g.buffers()) out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace

TEST(TrainConfig, RejectsInvalidValues) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.gamma = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.lambda1 = -1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(TabularTraining, MatchesStandaloneReference) {
  const auto prob = verify::make_tabular_problem(4, 4, 1, 3, 4.0);
  std::vector<const DatasetSample*> batch;
  for (std::size_t i = 0; i < prob.samples.size(); i += 3) batch.push_back(&prob.samples[i]);

  TrainConfig cfg;
  cfg.optimizer = nn::OptimizerKind::Sgd;
  cfg.learning_rate = 0.7;
  cfg.vi_tol = 1e-14;
  cfg.horizon = 400;
  TabularRewardModel model(std::vector<double>(16, -0.5));
  nn::Optimizer opt(cfg.optimizer_config());
  std::vector<double> theta(16, -0.5);
  for (int step = 0; step < 4; ++step) {
    train_step(model, opt, batch, cfg);
    std::vector<double> total(16, 0.0);
    for (const auto* s : batch) {
      const auto g = reference_gradient(theta, 4, 4, *s, cfg.step_cost);
      for (int i = 0; i < 16; ++i) total[i] += g[i];
    }
    for (int i = 0; i < 16; ++i) theta[i] += cfg.learning_rate * total[i] / static_cast<double>(batch.size());
    for (int i = 0; i < 16; ++i) EXPECT_NEAR(model.theta()[i], theta[i], 1e-9) << "step " << step << " cell " << i;
  }
}

TEST(TabularTraining, ReachesMomentMatchingFixedPoint) {
  const auto prob = verify::make_tabular_problem(5, 5, 2, 11, 4.0);
  TrainConfig cfg;
  cfg.optimizer = nn::OptimizerKind::Sgd;
  cfg.learning_rate = 2.0;
  cfg.vi_tol = 1e-12;
  cfg.horizon = 100;
  const auto r = verify::run_tabular_fixed_point(prob, cfg, 5000, 1e-3);
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.steps, 5000);
  EXPECT_LT(r.max_gap, 1e-3);

  // At the fixed point a further update barely moves the parameters.
  TabularRewardModel model(r.theta);
  nn::Optimizer opt(cfg.optimizer_config());
  std::vector<const DatasetSample*> batch;
  for (const auto& s : prob.samples) batch.push_back(&s);
  train_step(model, opt, batch, cfg);
  for (std::size_t i = 0; i < r.theta.size(); ++i)
    EXPECT_LE(std::abs(model.theta()[i] - r.theta[i]), cfg.learning_rate * 1e-3);
}

TEST(TabularTraining, BatchGradientBookkeeping) {
  const auto prob = verify::make_tabular_problem(4, 4, 1, 8, 4.0);
  std::vector<const DatasetSample*> batch;
  for (const auto& s : prob.samples) batch.push_back(&s);
  TrainConfig cfg;
  cfg.horizon = 200;
  const std::vector<std::vector<double>> rewards(batch.size(), prob.true_reward);
  const auto bg = maxent_batch_gradient(rewards, batch, cfg);
  ASSERT_EQ(bg.grad_reward.size(), batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    // Both counts include the goal exactly once.
    EXPECT_NEAR(bg.grad_reward[i][static_cast<std::size_t>(batch[i]->goal)], 0.0, 1e-6);
    EXPECT_LE(bg.grad_reward[i][static_cast<std::size_t>(batch[i]->start)], 0.0);
    EXPECT_GT(bg.nll[i], 0.0);
  }
  EXPECT_LE(bg.max_residual, cfg.max_residual_mass);
}

TEST(TabularTraining, ShortHorizonAbortsOnResidualMass) {
  const auto prob = verify::make_tabular_problem(4, 4, 1, 8, 4.0);
  const DatasetSample* s = &prob.samples.front();
  TrainConfig cfg;
  cfg.horizon = 1;
  const std::vector<std::vector<double>> rewards(1, prob.true_reward);
  EXPECT_THROW(maxent_batch_gradient(rewards, std::span<const DatasetSample* const>(&s, 1), cfg), NumericalError);
}

TEST(Pipeline, GradientMatchesFiniteDifferences) {
  for (auto id : kAllArchitectures) {
    const auto r = verify::pipeline_gradient_check(id);
    EXPECT_GT(r.checked, 0u);
    EXPECT_LT(r.max_rel_error, verify::kPipelineTolerance) << r.name;
  }
}

TEST(Pipeline, NllDecreasesOnSingleSample) {
  GridSpec spec{8, 8, 0.5, 0.0, 0.0};
  std::vector<double> gains;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Dataset ds;
    ds.config.grid = spec;
    DatasetSample s;
    s.features = FeatureMap(spec);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int c = 0; c < FeatureMap::kChannels; ++c)
      for (auto& v : s.features.channel(c)) v = u(rng);
    s.demo = Trajectory::from_states({0, 9, 18, 19, 20, 29, 38, 47, 55, 63}, spec);
    s.start = 0;
    s.goal = 63;
    ds.samples.push_back(s);
    ds.train = {0};
    auto cfg = tiny_train_config(40);
    cfg.batch_size = 1;
    cfg.seed = seed;
    const auto res = train(cfg, ds);
    gains.push_back(res.history.records.front().nll - res.history.records.back().nll);
  }
  std::nth_element(gains.begin(), gains.begin() + 2, gains.end());
  EXPECT_GT(gains[2], 0.0);
}

TEST(Training, ZeroStepsKeepsInitialWeights) {
  const auto ds = generate_dataset(tiny_dataset_config());
  const auto res = train(tiny_train_config(0), ds);
  auto fresh = build_architecture(ArchitectureId::StandardFcn, ds.config.grid.resolution_m);
  fresh.init_weights(derive_seed(4, kSeedInit));
  round_to_storage(fresh);
  auto net = res.net;
  EXPECT_EQ(flat_params(net), flat_params(fresh));
  EXPECT_TRUE(res.history.records.empty());
}

TEST(Training, BitwiseDeterministic) {
  const auto ds = generate_dataset(tiny_dataset_config());
  auto a = train(tiny_train_config(5), ds);
  auto b = train(tiny_train_config(5), ds);
  EXPECT_EQ(flat_params(a.net), flat_params(b.net));
  ASSERT_EQ(a.history.records.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(a.history.records[i].nll, b.history.records[i].nll);
    EXPECT_EQ(a.history.records[i].grad_norm, b.history.records[i].grad_norm);
  }
  auto cfg = tiny_train_config(5);
  cfg.seed = 5;
  auto c = train(cfg, ds);
  EXPECT_NE(flat_params(a.net), flat_params(c.net));
}

TEST(Training, WritesCheckpointsAndHistory) {
  const auto ds = generate_dataset(tiny_dataset_config());
  const auto dir = scratch_dir("artifacts");
  auto cfg = tiny_train_config(4);
  cfg.checkpoint_interval = 2;
  auto res = train(cfg, ds, dir);
  EXPECT_TRUE(fs::exists(dir / "step_000002" / "manifest.txt"));
  EXPECT_FALSE(fs::exists(dir / "step_000004"));
  EXPECT_TRUE(fs::exists(dir / "final" / "params.f32"));
  const auto csv = io::read_file(dir / "history.csv");
  EXPECT_EQ(csv.rfind("step,nll,reg,grad_norm,seconds\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);

  auto loaded = load_checkpoint(dir / "final");
  EXPECT_EQ(loaded.info.step, 4);
  EXPECT_EQ(loaded.info.seed, 4u);
  EXPECT_EQ(loaded.info.architecture, ArchitectureId::StandardFcn);
  EXPECT_EQ(flat_params(loaded.net), flat_params(res.net));
  const auto& f = ds.samples[static_cast<std::size_t>(ds.test.front())].features;
  EXPECT_EQ(infer_costmap(loaded.net, f), infer_costmap(res.net, f));
}

TEST(Checkpoint, RejectsMismatchedFiles) {
  auto net = build_architecture(ArchitectureId::PoolingFcn);
  net.init_weights(3);
  const auto dir = scratch_dir("mismatch");
  save_checkpoint(net, {ArchitectureId::PoolingFcn, 0, 3, 0.25}, dir);
  EXPECT_NO_THROW(load_checkpoint(dir));

  auto manifest = io::read_file(dir / "manifest.txt");
  const auto original = manifest;
  manifest.replace(manifest.find("pooling_fcn"), 11, "ms_fcn");
  io::write_file(dir / "manifest.txt", manifest);
  EXPECT_THROW(load_checkpoint(dir), DataError);

  io::write_file(dir / "manifest.txt", original);
  auto blob = io::read_file(dir / "params.f32");
  io::write_file(dir / "params.f32", blob.substr(0, blob.size() - 4));
  EXPECT_THROW(load_checkpoint(dir), DataError);
  io::write_file(dir / "params.f32", blob + "xxxx");
  EXPECT_THROW(load_checkpoint(dir), DataError);
}

TEST(Inference, CostmapShapeSignAndDeterminism) {
  const auto ds = generate_dataset(tiny_dataset_config(2));
  for (auto id : kAllArchitectures) {
    auto net = build_architecture(id, ds.config.grid.resolution_m);
    net.init_weights(9);
    const auto& f = ds.samples.front().features;
    const auto cost = infer_costmap(net, f);
    ASSERT_EQ(cost.size(), static_cast<std::size_t>(f.spec.num_cells()));
    for (double c : cost) EXPECT_GT(c, 0.0);
    EXPECT_EQ(cost, infer_costmap(net, f));
  }
}

TEST(Training, NonFiniteFeaturesAbortWithDump) {
  auto ds = generate_dataset(tiny_dataset_config());
  for (int i : ds.train) ds.samples[static_cast<std::size_t>(i)].features.mean_height[5] =
      std::numeric_limits<double>::quiet_NaN();
  const auto dir = scratch_dir("nan");
  EXPECT_THROW(train(tiny_train_config(3), ds, dir), NumericalError);
  ASSERT_TRUE(fs::exists(dir / "nan_dump.txt"));
  const auto dump = io::read_file(dir / "nan_dump.txt");
  EXPECT_NE(dump.find("step 1"), std::string::npos);
  EXPECT_NE(dump.find("batch"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "abort" / "manifest.txt"));
  EXPECT_FALSE(fs::exists(dir / "final"));
}
