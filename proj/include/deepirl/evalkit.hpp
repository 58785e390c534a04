#pragma once

// Prediction metrics (NLL, MHD), collision trajectories, zero-FPR threshold
// calibration and collision classification for learned and handcrafted
// cost maps.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "deepirl/baseline_cost.hpp"
#include "deepirl/mdp.hpp"
#include "deepirl/random.hpp"
#include "deepirl/synth.hpp"

namespace deepirl {

using Point2 = std::pair<double, double>;

namespace detail {

inline double directed_mean_min(std::span<const Point2> a, std::span<const Point2> b) {
  double sum = 0.0;
  for (const auto& p : a) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : b) best = std::min(best, std::hypot(p.first - q.first, p.second - q.second));
    sum += best;
  }
  return sum / static_cast<double>(a.size());
}

}  // namespace detail

/// Modified Hausdorff distance: the larger of the two directed mean
/// nearest-neighbour distances.
inline double mhd(std::span<const Point2> a, std::span<const Point2> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("mhd needs two nonempty point sets");
  return std::max(detail::directed_mean_min(a, b), detail::directed_mean_min(b, a));
}

inline std::vector<Point2> trajectory_points(const Trajectory& t, const GridSpec& spec) {
  std::vector<Point2> out;
  out.reserve(t.states.size());
  for (int s : t.states) out.push_back(spec.center_of(s));
  return out;
}

/// Maps a feature map to a per-cell cost (learned model or baseline).
using CostmapProvider = std::function<std::vector<double>(const FeatureMap&)>;

struct PlannerConfig {
  double gamma = 1.0;
  double step_cost = 4.0;
  double vi_tol = 1e-6;
  int n_samples = 10;  // sampled trajectories per test sample for MHD
  std::uint64_t seed = 1;
  double max_residual_mass = 1e-3;  // above this the goal counts as unreachable
};

struct PredictionResult {
  double mean_nll = 0.0;
  double mean_mhd = 0.0;
  int n_evaluated = 0;
  int n_unreachable = 0;
  std::vector<double> nll;  // per evaluated sample, in input order
};

/// Soft-optimal planning on reward = -cost for every test sample; mean NLL
/// of the demonstrations and mean MHD between sampled and demonstrated
/// paths (meters, cell centers).
inline PredictionResult evaluate_prediction(const std::vector<std::vector<double>>& costmaps,
                                            std::span<const DatasetSample* const> tests, const PlannerConfig& cfg) {
  if (costmaps.size() != tests.size()) throw std::invalid_argument("one cost map per test sample is required");
  PredictionResult out;
  double nll_sum = 0.0, mhd_sum = 0.0;
  for (std::size_t i = 0; i < tests.size(); ++i) {
    const DatasetSample& s = *tests[i];
    const GridSpec& spec = s.features.spec;
    std::vector<double> reward(costmaps[i].size());
    for (std::size_t k = 0; k < reward.size(); ++k) reward[k] = -costmaps[i][k];
    const Mdp mdp = Mdp::on_grid(spec, s.goal, cfg.gamma, cfg.step_cost);
    const auto vi = soft_value_iteration(reward, mdp, mdp.default_max_iters(), cfg.vi_tol);
    const auto vis = propagate_policy(vi.policy, mdp, s.start, mdp.default_horizon());
    const double nll = demo_nll(vi.policy, s.demo);
    if (!std::isfinite(vi.value[static_cast<std::size_t>(s.start)]) || !std::isfinite(nll) ||
        !(vis.residual_mass <= cfg.max_residual_mass)) {
      ++out.n_unreachable;
      continue;
    }
    const auto demo_pts = trajectory_points(s.demo, spec);
    Rng rng(derive_seed(cfg.seed, kSeedEval, i));
    double m = 0.0;
    for (int k = 0; k < cfg.n_samples; ++k) {
      const auto st = sample_trajectory(vi.policy, mdp, s.start, mdp.default_horizon(), rng);
      const auto pts = trajectory_points(st.trajectory, spec);
      m += mhd(pts, demo_pts);
    }
    out.nll.push_back(nll);
    nll_sum += nll;
    mhd_sum += cfg.n_samples > 0 ? m / cfg.n_samples : 0.0;
    ++out.n_evaluated;
  }
  if (out.n_evaluated > 0) {
    out.mean_nll = nll_sum / out.n_evaluated;
    out.mean_mhd = mhd_sum / out.n_evaluated;
  }
  return out;
}

inline PredictionResult evaluate_prediction(const CostmapProvider& provider,
                                            std::span<const DatasetSample* const> tests, const PlannerConfig& cfg) {
  std::vector<std::vector<double>> maps;
  for (const auto* s : tests) maps.push_back(provider(s->features));
  return evaluate_prediction(maps, tests, cfg);
}

/// King-move path from a to b following the straight segment between the
/// cell centers; it has max(|dr|, |dc|) steps, a shortest path.
inline std::vector<int> king_line(const GridSpec& spec, int a, int b) {
  const int r0 = spec.row_of(a), c0 = spec.col_of(a);
  const int dr = spec.row_of(b) - r0, dc = spec.col_of(b) - c0;
  const int n = std::max(std::abs(dr), std::abs(dc));
  std::vector<int> out;
  for (int k = 0; k <= n; ++k) {
    const double f = n == 0 ? 0.0 : static_cast<double>(k) / n;
    out.push_back(spec.index(r0 + static_cast<int>(std::lround(f * dr)), c0 + static_cast<int>(std::lround(f * dc))));
  }
  return out;
}

struct CollisionParams {
  double min_length_m = 12.0;
  double max_length_m = 18.0;
  double clearance_m = 1.0;  // distance kept from every other obstacle
  int attempts_per_trajectory = 400;
};

/// Demo-like trajectories forced through a sampled obstacle cell: the
/// straight king-move path from start through the obstacle to the goal,
/// ignoring obstacles. Lines touching any other obstacle component, or
/// passing within `clearance_m` of one, are redrawn so that each trajectory
/// collides with exactly one obstacle. Returns fewer than `n` when suitable
/// geometry cannot be found.
inline std::vector<Trajectory> generate_collision_trajectories(const GroundTruthWorld& world, int n,
                                                               std::uint64_t seed, const CollisionParams& p = {}) {
  std::vector<Trajectory> out;
  std::vector<int> obstacles;
  for (int s = 0; s < world.spec.num_cells(); ++s)
    if (world.is_obstacle(s)) obstacles.push_back(s);
  if (obstacles.empty()) return out;
  const GridSpec& spec = world.spec;
  std::vector<std::uint8_t> inverted(world.obstacle_mask.size());
  for (std::size_t i = 0; i < inverted.size(); ++i) inverted[i] = !world.obstacle_mask[i];
  Rng rng(seed);
  for (int k = 0; k < n; ++k) {
    for (int attempt = 0; attempt < p.attempts_per_trajectory; ++attempt) {
      const int o = obstacles[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(obstacles.size()))];
      const double theta = 2.0 * std::numbers::pi * uniform01(rng);
      const double len = p.min_length_m + (p.max_length_m - p.min_length_m) * uniform01(rng);
      const double frac = 0.3 + 0.4 * uniform01(rng);
      const auto [ox, oy] = spec.center_of(o);
      const auto a = world_to_cell(ox - frac * len * std::cos(theta), oy - frac * len * std::sin(theta), spec);
      const auto b =
          world_to_cell(ox + (1.0 - frac) * len * std::cos(theta), oy + (1.0 - frac) * len * std::sin(theta), spec);
      if (!a || !b) continue;
      const int start = spec.index(a->row, a->col), goal = spec.index(b->row, b->col);
      if (world.is_obstacle(start) || world.is_obstacle(goal)) continue;
      auto states = king_line(spec, start, o);
      const auto tail = king_line(spec, o, goal);
      states.insert(states.end(), tail.begin() + 1, tail.end());
      std::vector<int> sorted = states;
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) continue;
      // Obstacles other than the target's own component, and their clearance.
      const auto target = flood_fill(spec, inverted, o);
      std::vector<std::uint8_t> others(world.obstacle_mask.size(), 0);
      for (std::size_t i = 0; i < others.size(); ++i) others[i] = world.obstacle_mask[i] && !target[i];
      const auto keep_out = dilate_disc(spec, others, p.clearance_m / spec.resolution_m);
      bool clean = true;
      for (int s : states)
        if (keep_out[static_cast<std::size_t>(s)]) {
          clean = false;
          break;
        }
      if (!clean) continue;
      out.push_back(Trajectory::from_states(std::move(states), spec));
      break;
    }
  }
  return out;
}

/// A path is blocked by its worst cell: the maximum cost along it.
inline double trajectory_cost_statistic(std::span<const double> cost, const Trajectory& t) {
  double m = -std::numeric_limits<double>::infinity();
  for (int s : t.states) m = std::max(m, cost[static_cast<std::size_t>(s)]);
  return m;
}

/// Smallest threshold that classifies every free statistic as traversable
/// (positive = collision = statistic >= threshold).
inline double calibrate_threshold(std::span<const double> free_stats, std::span<const double> /*collision_stats*/ = {}) {
  if (free_stats.empty()) throw std::invalid_argument("threshold calibration needs free trajectories");
  const double m = *std::max_element(free_stats.begin(), free_stats.end());
  if (!std::isfinite(m)) return std::numeric_limits<double>::infinity();
  return m + 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(m));
}

struct ClassificationResult {
  double fnr = std::numeric_limits<double>::quiet_NaN();  // NaN when there are no collisions
  double fpr = std::numeric_limits<double>::quiet_NaN();  // NaN when there are no free trajectories
};

inline ClassificationResult classification_report(std::span<const double> free_stats,
                                                  std::span<const double> collision_stats, double threshold) {
  ClassificationResult r;
  if (!collision_stats.empty()) {
    const auto missed = std::count_if(collision_stats.begin(), collision_stats.end(),
                                      [&](double v) { return !(v >= threshold); });
    r.fnr = static_cast<double>(missed) / static_cast<double>(collision_stats.size());
  }
  if (!free_stats.empty()) {
    const auto flagged =
        std::count_if(free_stats.begin(), free_stats.end(), [&](double v) { return v >= threshold; });
    r.fpr = static_cast<double>(flagged) / static_cast<double>(free_stats.size());
  }
  return r;
}

/// Trajectory tied to the test sample whose cost map scores it.
struct ScoredTrajectory {
  int test_index = 0;  // position in EvalSuite::tests
  Trajectory trajectory;
};

struct EvalSuiteConfig {
  int calibration_free_per_test = 8;  // extra expert demos for calibration
  int holdout_free_per_test = 8;      // disjoint free set
  int collisions_per_test = 8;
  std::uint64_t seed = 1;
  CollisionParams collision;
};

/// Held-out samples plus the free and collision trajectories used for
/// classification. Calibration free trajectories are the test demos and
/// extra expert demos on the test worlds; the hold-out free set is drawn
/// independently.
struct EvalSuite {
  std::vector<const DatasetSample*> tests;
  std::vector<const GroundTruthWorld*> worlds;
  std::vector<ScoredTrajectory> calibration_free;
  std::vector<ScoredTrajectory> holdout_free;
  std::vector<ScoredTrajectory> collisions;
};

inline EvalSuite build_eval_suite(const Dataset& ds, const EvalSuiteConfig& cfg) {
  EvalSuite suite;
  for (int idx : ds.test) {
    const auto& s = ds.samples[static_cast<std::size_t>(idx)];
    suite.tests.push_back(&s);
    suite.worlds.push_back(&ds.worlds[static_cast<std::size_t>(s.world_index)]);
  }
  for (std::size_t t = 0; t < suite.tests.size(); ++t) {
    const int ti = static_cast<int>(t);
    const auto key = static_cast<std::uint64_t>(ds.test[t]);
    const auto& world = *suite.worlds[t];
    suite.calibration_free.push_back({ti, suite.tests[t]->demo});
    Rng rng(derive_seed(derive_seed(cfg.seed, kSeedEval, key), kSeedDemo));
    for (int k = 0; k < cfg.calibration_free_per_test; ++k)
      suite.calibration_free.push_back({ti, sample_expert_demo(world, ds.config.world, ds.config.expert, rng).demo});
    for (int k = 0; k < cfg.holdout_free_per_test; ++k)
      suite.holdout_free.push_back({ti, sample_expert_demo(world, ds.config.world, ds.config.expert, rng).demo});
    for (auto& c : generate_collision_trajectories(world, cfg.collisions_per_test,
                                                   derive_seed(cfg.seed, kSeedCollision, key), cfg.collision))
      suite.collisions.push_back({ti, std::move(c)});
  }
  return suite;
}

struct EvalReport {
  std::string model;
  double mean_nll = 0.0;
  double mean_mhd = 0.0;
  double fnr = 0.0;
  double fpr = 0.0;          // on the calibration free set (0 by construction)
  double holdout_fpr = 0.0;  // on the disjoint free set
  double threshold = 0.0;
  int n_test = 0;
  int n_samples_per_test = 0;
  int n_unreachable = 0;
  int n_collisions = 0;

  static std::string csv_header() {
    return "model,mean_nll,mean_mhd,fnr,fpr,holdout_fpr,threshold,n_test,n_samples_per_test,n_unreachable,"
           "n_collisions";
  }
  std::string csv_row() const {
    std::ostringstream ss;
    ss.precision(10);
    ss << model << ',' << mean_nll << ',' << mean_mhd << ',' << fnr << ',' << fpr << ',' << holdout_fpr << ','
       << threshold << ',' << n_test << ',' << n_samples_per_test << ',' << n_unreachable << ',' << n_collisions;
    return ss.str();
  }
  std::string text() const {
    std::ostringstream ss;
    ss.precision(4);
    ss << model << ": NLL " << mean_nll << ", MHD " << mean_mhd << " m, FNR " << fnr << ", FPR " << fpr
       << " (hold-out " << holdout_fpr << "), threshold " << threshold << ", " << n_test << " tests, "
       << n_unreachable << " unreachable";
    return ss.str();
  }
};

inline std::string reports_csv(std::span<const EvalReport> reports) {
  std::string out = EvalReport::csv_header() + "\n";
  for (const auto& r : reports) out += r.csv_row() + "\n";
  return out;
}

/// Full evaluation of one cost-map provider. `features[i]` is the feature
/// map for suite.tests[i] (the clean scan or a re-scan).
inline EvalReport evaluate_model(const std::string& name, const CostmapProvider& provider, const EvalSuite& suite,
                                 const std::vector<const FeatureMap*>& features, const PlannerConfig& planner) {
  if (features.size() != suite.tests.size()) throw std::invalid_argument("one feature map per test sample is required");
  std::vector<std::vector<double>> maps;
  for (const auto* f : features) maps.push_back(provider(*f));

  // Prediction metrics on the test demos, scored against the given features.
  std::vector<DatasetSample> rescored;
  for (std::size_t i = 0; i < suite.tests.size(); ++i) {
    DatasetSample s = *suite.tests[i];
    s.features = *features[i];
    rescored.push_back(std::move(s));
  }
  std::vector<const DatasetSample*> ptrs;
  for (const auto& s : rescored) ptrs.push_back(&s);
  const auto pred = evaluate_prediction(maps, ptrs, planner);

  auto stats = [&](const std::vector<ScoredTrajectory>& trajs) {
    std::vector<double> v;
    for (const auto& t : trajs)
      v.push_back(trajectory_cost_statistic(maps[static_cast<std::size_t>(t.test_index)], t.trajectory));
    return v;
  };
  const auto cal = stats(suite.calibration_free);
  const auto hold = stats(suite.holdout_free);
  const auto col = stats(suite.collisions);
  EvalReport r;
  r.model = name;
  r.mean_nll = pred.mean_nll;
  r.mean_mhd = pred.mean_mhd;
  r.threshold = calibrate_threshold(cal, col);
  const auto c = classification_report(cal, col, r.threshold);
  r.fnr = c.fnr;
  r.fpr = c.fpr;
  r.holdout_fpr = classification_report(hold, {}, r.threshold).fpr;
  r.n_test = pred.n_evaluated;
  r.n_samples_per_test = planner.n_samples;
  r.n_unreachable = pred.n_unreachable;
  r.n_collisions = static_cast<int>(col.size());
  return r;
}

inline std::vector<const FeatureMap*> suite_features(const EvalSuite& suite) {
  std::vector<const FeatureMap*> out;
  for (const auto* s : suite.tests) out.push_back(&s->features);
  return out;
}

/// Re-scans every test world with the given sensor model (same scan seeds).
inline std::vector<FeatureMap> rescan_suite(const Dataset& ds, const EvalSuite& suite, const SensorConfig& sensors) {
  std::vector<FeatureMap> out;
  for (std::size_t t = 0; t < suite.tests.size(); ++t)
    out.push_back(scan_features(*suite.worlds[t], sensors, sample_scan_seed(ds.config.seed, ds.test[t])));
  return out;
}

struct RobustnessReport {
  EvalReport learned;
  EvalReport baseline;
};

/// Learned model and handcrafted baseline evaluated on identical
/// trajectories, with features regenerated under a pitch error on the
/// right-hand sensor.
inline RobustnessReport robustness_experiment(const CostmapProvider& learned, const BaselineParams& baseline,
                                              const Dataset& ds, const EvalSuite& suite, double pitch_error_deg,
                                              const PlannerConfig& planner) {
  const auto sensors = ds.config.sensors().with_pitch_error(pitch_error_deg);
  const auto feats = rescan_suite(ds, suite, sensors);
  std::vector<const FeatureMap*> ptrs;
  for (const auto& f : feats) ptrs.push_back(&f);
  RobustnessReport r;
  r.learned = evaluate_model("learned", learned, suite, ptrs, planner);
  r.baseline = evaluate_model(
      "baseline", [&](const FeatureMap& f) { return handcrafted_cost(f, baseline); }, suite, ptrs, planner);
  return r;
}

}  // namespace deepirl
