#pragma once

// Synthetic worlds, simulated range sensors and soft-optimal expert drivers.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "deepirl/error.hpp"
#include "deepirl/grid_world.hpp"
#include "deepirl/io.hpp"
#include "deepirl/mdp.hpp"
#include "deepirl/random.hpp"

namespace deepirl {

/// What a cell's surface looks like to the sensor.
enum class Surface : std::uint8_t {
  Ground = 0,  // flat terrain
  Tall = 1,    // wall, trunk or pole: returns spread over its full height
  Low = 2,     // kerb-like block with a flat top
  Rough = 3,   // traversable but bumpy
};

struct WorldParams {
  double obstacle_density = 0.08;  // target fraction of obstacle cells
  double low_obstacle_fraction = 0.35;
  double tall_height_min_m = 1.0;
  double tall_height_max_m = 2.5;
  double low_height_min_m = 0.15;
  double low_height_max_m = 0.35;
  int rough_patches = 3;
  double rough_radius_m = 2.0;
  double rough_amplitude_m = 0.2;
  double vehicle_radius_m = 1.0;  // keep-out band around obstacles

  double free_reward = 0.0;
  double rough_reward = -0.6;
  double band_reward = -20.0;
  double obstacle_reward = -50.0;
  int max_retries = 100;

  void validate() const {
    if (obstacle_density < 0.0 || obstacle_density > 0.5) throw std::invalid_argument("obstacle_density must lie in [0, 0.5]");
    if (low_obstacle_fraction < 0.0 || low_obstacle_fraction > 1.0)
      throw std::invalid_argument("low_obstacle_fraction must lie in [0, 1]");
    if (tall_height_min_m <= 0.0 || tall_height_max_m < tall_height_min_m)
      throw std::invalid_argument("bad tall obstacle height range");
    if (low_height_min_m <= 0.0 || low_height_max_m < low_height_min_m)
      throw std::invalid_argument("bad low obstacle height range");
    if (rough_patches < 0 || rough_radius_m < 0.0 || rough_amplitude_m < 0.0)
      throw std::invalid_argument("bad rough patch parameters");
    if (vehicle_radius_m < 0.0) throw std::invalid_argument("vehicle radius must be nonnegative");
    if (!(obstacle_reward < band_reward && band_reward < rough_reward && rough_reward <= free_reward &&
          free_reward <= 0.0))
      throw std::invalid_argument("rewards must satisfy obstacle < band < rough <= free <= 0");
    if (max_retries < 1) throw std::invalid_argument("max_retries must be positive");
  }
};

/// Hidden ground truth: geometry the sensor sees and the reward the expert
/// optimizes.
struct GroundTruthWorld {
  GridSpec spec;
  std::vector<std::uint8_t> obstacle_mask;
  std::vector<double> terrain_height;  // top of the surface in each cell
  std::vector<double> true_reward;
  std::vector<Surface> surface;

  bool is_obstacle(int cell) const { return obstacle_mask[static_cast<std::size_t>(cell)] != 0; }
  int obstacle_count() const { return static_cast<int>(std::count(obstacle_mask.begin(), obstacle_mask.end(), 1)); }
  bool operator==(const GroundTruthWorld&) const = default;
};

/// Cells of `mask == 0` reachable from `seed` under 8-connectivity.
inline std::vector<std::uint8_t> flood_fill(const GridSpec& spec, const std::vector<std::uint8_t>& mask, int seed) {
  std::vector<std::uint8_t> seen(mask.size(), 0);
  if (mask[static_cast<std::size_t>(seed)]) return seen;
  std::deque<int> queue{seed};
  seen[static_cast<std::size_t>(seed)] = 1;
  while (!queue.empty()) {
    const int s = queue.front();
    queue.pop_front();
    const int r = spec.row_of(s), c = spec.col_of(s);
    for (int a = 0; a < kNumActions; ++a) {
      const int nr = r + kActionDRow[a], nc = c + kActionDCol[a];
      if (!spec.contains(nr, nc)) continue;
      const int n = spec.index(nr, nc);
      if (mask[static_cast<std::size_t>(n)] || seen[static_cast<std::size_t>(n)]) continue;
      seen[static_cast<std::size_t>(n)] = 1;
      queue.push_back(n);
    }
  }
  return seen;
}

/// True if the zero cells of `mask` exist and form one 8-connected component.
inline bool free_space_connected(const GridSpec& spec, const std::vector<std::uint8_t>& mask) {
  const auto first = std::find(mask.begin(), mask.end(), 0);
  if (first == mask.end()) return false;
  const auto seen = flood_fill(spec, mask, static_cast<int>(first - mask.begin()));
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (!mask[i] && !seen[i]) return false;
  return true;
}

/// Cells within `radius_cells` (center distance) of any set cell.
inline std::vector<std::uint8_t> dilate_disc(const GridSpec& spec, const std::vector<std::uint8_t>& mask,
                                             double radius_cells) {
  std::vector<std::uint8_t> out(mask.size(), 0);
  const int reach = static_cast<int>(std::floor(radius_cells));
  for (int s = 0; s < spec.num_cells(); ++s) {
    if (!mask[static_cast<std::size_t>(s)]) continue;
    const int r = spec.row_of(s), c = spec.col_of(s);
    for (int dr = -reach; dr <= reach; ++dr)
      for (int dc = -reach; dc <= reach; ++dc) {
        if (dr * dr + dc * dc > radius_cells * radius_cells || !spec.contains(r + dr, c + dc)) continue;
        out[static_cast<std::size_t>(spec.index(r + dr, c + dc))] = 1;
      }
  }
  return out;
}

namespace detail {

inline int uniform_int(Rng& rng, int lo, int hi) {
  return lo + static_cast<int>(uniform01(rng) * (hi - lo + 1));
}

inline double uniform_real(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

// Rasterizes one shape (wall, bollard or blob) into `cells`.
inline std::vector<int> sample_shape(const GridSpec& spec, Rng& rng) {
  std::vector<int> cells;
  const int r0 = uniform_int(rng, 0, spec.height_cells - 1);
  const int c0 = uniform_int(rng, 0, spec.width_cells - 1);
  const double kind = uniform01(rng);
  if (kind < 0.35) {
    // Straight wall, one or two cells thick.
    const bool horizontal = uniform01(rng) < 0.5;
    const int len = uniform_int(rng, 3, std::max(3, std::min(spec.width_cells, spec.height_cells) / 5));
    const int thick = uniform01(rng) < 0.5 ? 1 : 2;
    for (int i = 0; i < len; ++i)
      for (int t = 0; t < thick; ++t) {
        const int r = horizontal ? r0 + t : r0 + i;
        const int c = horizontal ? c0 + i : c0 + t;
        if (spec.contains(r, c)) cells.push_back(spec.index(r, c));
      }
  } else if (kind < 0.6) {
    cells.push_back(spec.index(r0, c0));
  } else {
    const double rad = uniform_real(rng, 0.8, 2.5);
    const int reach = static_cast<int>(std::ceil(rad));
    for (int dr = -reach; dr <= reach; ++dr)
      for (int dc = -reach; dc <= reach; ++dc)
        if (dr * dr + dc * dc <= rad * rad && spec.contains(r0 + dr, c0 + dc))
          cells.push_back(spec.index(r0 + dr, c0 + dc));
  }
  return cells;
}

inline GroundTruthWorld generate_world_attempt(const GridSpec& spec, const WorldParams& p, Rng& rng) {
  const auto n = static_cast<std::size_t>(spec.num_cells());
  GroundTruthWorld w;
  w.spec = spec;
  w.obstacle_mask.assign(n, 0);
  w.terrain_height.assign(n, 0.0);
  w.surface.assign(n, Surface::Ground);
  w.true_reward.assign(n, p.free_reward);

  // Rough patches first; obstacles may overwrite them.
  for (int k = 0; k < p.rough_patches; ++k) {
    const int r0 = uniform_int(rng, 0, spec.height_cells - 1);
    const int c0 = uniform_int(rng, 0, spec.width_cells - 1);
    const double rad = p.rough_radius_m / spec.resolution_m;
    const int reach = static_cast<int>(std::ceil(rad));
    for (int dr = -reach; dr <= reach; ++dr)
      for (int dc = -reach; dc <= reach; ++dc) {
        if (dr * dr + dc * dc > rad * rad || !spec.contains(r0 + dr, c0 + dc)) continue;
        const auto i = static_cast<std::size_t>(spec.index(r0 + dr, c0 + dc));
        w.surface[i] = Surface::Rough;
        w.terrain_height[i] = p.rough_amplitude_m;
      }
  }

  const int target = static_cast<int>(std::lround(p.obstacle_density * static_cast<double>(n)));
  int placed = 0;
  for (int guard = 0; placed < target && guard < 100000; ++guard) {
    const auto cells = sample_shape(spec, rng);
    const bool low = uniform01(rng) < p.low_obstacle_fraction;
    const double height = low ? uniform_real(rng, p.low_height_min_m, p.low_height_max_m)
                              : uniform_real(rng, p.tall_height_min_m, p.tall_height_max_m);
    for (int c : cells) {
      const auto i = static_cast<std::size_t>(c);
      if (w.obstacle_mask[i]) continue;
      w.obstacle_mask[i] = 1;
      w.surface[i] = low ? Surface::Low : Surface::Tall;
      w.terrain_height[i] = height;
      ++placed;
    }
  }

  const auto band = dilate_disc(spec, w.obstacle_mask, p.vehicle_radius_m / spec.resolution_m);
  for (std::size_t i = 0; i < n; ++i) {
    if (w.obstacle_mask[i])
      w.true_reward[i] = p.obstacle_reward;
    else if (band[i])
      w.true_reward[i] = p.band_reward;
    else if (w.surface[i] == Surface::Rough)
      w.true_reward[i] = p.rough_reward;
  }
  return w;
}

}  // namespace detail

/// Deterministic world for a seed. Attempts whose free space is not one
/// 8-connected component are rejected and redrawn.
inline GroundTruthWorld generate_world(std::uint64_t seed, const GridSpec& spec, const WorldParams& params = {}) {
  spec.validate();
  params.validate();
  Rng rng(seed);
  for (int attempt = 0; attempt < params.max_retries; ++attempt) {
    auto w = detail::generate_world_attempt(spec, params, rng);
    if (free_space_connected(spec, w.obstacle_mask)) return w;
  }
  throw DataError("could not generate a connected world after " + std::to_string(params.max_retries) + " attempts");
}

struct SensorConfig {
  /// Sensor positions in world coordinates (x, y, z).
  std::vector<std::array<double, 3>> sensor_positions;
  int points_per_scan = 60000;  // total over all sensors
  std::vector<double> pitch_error_deg;  // one entry per sensor
  double visibility_falloff = 0.99;  // detection probability per meter of planar range
  double noise_sigma_z = 0.03;

  /// Two sensors left and right of a vehicle at the grid center.
  static SensorConfig twin_at_center(const GridSpec& spec, double lateral_offset_m = 0.7) {
    SensorConfig cfg;
    const double cx = spec.origin_x_m + 0.5 * spec.extent_x_m();
    const double cy = spec.origin_y_m + 0.5 * spec.extent_y_m();
    cfg.sensor_positions = {{cx, cy + lateral_offset_m, 1.8}, {cx, cy - lateral_offset_m, 1.8}};
    cfg.pitch_error_deg = {0.0, 0.0};
    return cfg;
  }

  /// Miscalibrates the right-hand sensor (the last one).
  SensorConfig with_pitch_error(double deg) const {
    SensorConfig out = *this;
    if (!out.pitch_error_deg.empty()) out.pitch_error_deg.back() = deg;
    return out;
  }

  void validate(const GridSpec& spec) const {
    if (sensor_positions.empty()) throw std::invalid_argument("at least one sensor is required");
    if (pitch_error_deg.size() != sensor_positions.size())
      throw std::invalid_argument("need one pitch error per sensor");
    if (points_per_scan <= 0) throw std::invalid_argument("points_per_scan must be positive");
    if (!(visibility_falloff > 0.0 && visibility_falloff <= 1.0))
      throw std::invalid_argument("visibility_falloff must lie in (0, 1]");
    if (!(noise_sigma_z >= 0.0)) throw std::invalid_argument("noise_sigma_z must be nonnegative");
    for (const auto& s : sensor_positions)
      if (!world_to_cell(s[0], s[1], spec)) throw std::invalid_argument("sensor outside the world");
  }
};

/// Simulated scan. Each sensor samples `points_per_scan / n_sensors` surface
/// points uniformly over the world; a point at planar range d is kept with
/// probability falloff^d, and a sensor with pitch error delta reports its
/// height raised by d * tan(delta) plus Gaussian noise.
inline std::vector<std::array<double, 3>> simulate_scan(const GroundTruthWorld& world, const SensorConfig& cfg,
                                                        std::uint64_t seed) {
  const GridSpec& spec = world.spec;
  cfg.validate(spec);
  Rng rng(seed);
  std::vector<std::array<double, 3>> points;
  const auto n_sensors = cfg.sensor_positions.size();
  const int per_sensor = cfg.points_per_scan / static_cast<int>(n_sensors);
  const double log_falloff = std::log(cfg.visibility_falloff);
  points.reserve(static_cast<std::size_t>(cfg.points_per_scan));
  for (std::size_t k = 0; k < n_sensors; ++k) {
    const auto& pos = cfg.sensor_positions[k];
    const double tan_pitch = std::tan(cfg.pitch_error_deg[k] * std::numbers::pi / 180.0);
    for (int i = 0; i < per_sensor; ++i) {
      // Fixed number of draws per point keeps streams aligned across configs.
      const double x = spec.origin_x_m + uniform01(rng) * spec.extent_x_m();
      const double y = spec.origin_y_m + uniform01(rng) * spec.extent_y_m();
      const double u_height = uniform01(rng);
      const double u_detect = uniform01(rng);
      const double noise = cfg.noise_sigma_z > 0.0 ? cfg.noise_sigma_z * standard_normal(rng) : 0.0;
      const auto cell = world_to_cell(x, y, spec);
      if (!cell) continue;
      const double d = std::hypot(x - pos[0], y - pos[1]);
      if (u_detect >= std::exp(log_falloff * d)) continue;
      const auto idx = static_cast<std::size_t>(spec.index(cell->row, cell->col));
      double z = 0.0;
      switch (world.surface[idx]) {
        case Surface::Ground:
        case Surface::Low: z = world.terrain_height[idx]; break;
        case Surface::Tall:
        case Surface::Rough: z = u_height * world.terrain_height[idx]; break;
      }
      points.push_back({x, y, z + d * tan_pitch + noise});
    }
  }
  return points;
}

/// Expert behaviour: soft-optimal on the true reward with a per-step cost.
struct ExpertParams {
  double step_cost = 4.0;
  double min_distance_m = 12.0;  // start-goal planar distance
  double max_distance_m = 18.0;
  int max_pair_attempts = 2000;
  int max_rollouts = 100;  // rollouts per pair before a new pair is drawn

  void validate() const {
    if (!(step_cost > 0.0)) throw std::invalid_argument("expert step cost must be positive");
    if (!(min_distance_m >= 0.0 && max_distance_m >= min_distance_m))
      throw std::invalid_argument("bad start/goal distance range");
  }
};

struct DatasetSample {
  FeatureMap features;
  Trajectory demo;
  int start = 0;
  int goal = 0;
  int world_index = 0;
};

/// Expert demonstration between two fixed cells. Rollouts that touch a
/// blocked cell (obstacles, or the keep-out band for a vehicle with extent)
/// or run out of horizon are discarded, so the result is a sample of the
/// soft-optimal policy conditioned on not colliding.
inline std::optional<Trajectory> expert_rollout(std::span<const std::uint8_t> blocked, const SoftValueResult& solved,
                                                const Mdp& mdp, int start, int max_rollouts, Rng& rng) {
  for (int k = 0; k < max_rollouts; ++k) {
    auto s = sample_trajectory(solved.policy, mdp, start, mdp.default_horizon(), rng);
    if (s.truncated) continue;
    bool clean = true;
    for (int st : s.trajectory.states)
      if (blocked[static_cast<std::size_t>(st)]) {
        clean = false;
        break;
      }
    if (clean) return std::move(s.trajectory);
  }
  return std::nullopt;
}

/// Free cells outside the keep-out band (where starts and goals may lie).
inline std::vector<int> open_cells(const GroundTruthWorld& world, const WorldParams& params) {
  const auto band =
      dilate_disc(world.spec, world.obstacle_mask, params.vehicle_radius_m / world.spec.resolution_m);
  std::vector<int> out;
  for (int s = 0; s < world.spec.num_cells(); ++s)
    if (!band[static_cast<std::size_t>(s)]) out.push_back(s);
  return out;
}

struct ExpertDemo {
  Trajectory demo;
  int start = 0;
  int goal = 0;
};

/// Draws a start/goal pair in the configured distance band and one expert
/// demonstration between them.
inline ExpertDemo sample_expert_demo(const GroundTruthWorld& world, const WorldParams& wp, const ExpertParams& ep,
                                     Rng& rng) {
  ep.validate();
  const auto open = open_cells(world, wp);
  if (open.size() < 2) throw DataError("world has no room for a start and goal");
  const GridSpec& spec = world.spec;
  // Start and goal must share a band-free component, so the vehicle fits
  // along some route between them.
  std::vector<std::uint8_t> closed(static_cast<std::size_t>(spec.num_cells()), 1);
  for (int s : open) closed[static_cast<std::size_t>(s)] = 0;
  for (int attempt = 0; attempt < ep.max_pair_attempts; ++attempt) {
    const int start = open[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(open.size()))];
    const int goal = open[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(open.size()))];
    const auto [sx, sy] = spec.center_of(start);
    const auto [gx, gy] = spec.center_of(goal);
    const double dist = std::hypot(gx - sx, gy - sy);
    if (dist < ep.min_distance_m || dist > ep.max_distance_m) continue;
    if (!flood_fill(spec, closed, start)[static_cast<std::size_t>(goal)]) continue;
    const Mdp mdp = Mdp::on_grid(spec, goal, 1.0, ep.step_cost);
    const auto solved = soft_value_iteration(world.true_reward, mdp);
    if (!solved.converged) throw NumericalError("expert value iteration did not converge");
    if (auto t = expert_rollout(closed, solved, mdp, start, ep.max_rollouts, rng)) return {std::move(*t), start, goal};
  }
  throw DataError("goal unreachable within horizon for every sampled start/goal pair");
}

/// Rasterized scan rounded to the 32-bit on-disk precision, so in-memory
/// and reloaded features are identical.
inline FeatureMap scan_features(const GroundTruthWorld& world, const SensorConfig& cfg, std::uint64_t seed) {
  auto fm = rasterize_points(simulate_scan(world, cfg, seed), world.spec);
  for (int c = 0; c < FeatureMap::kChannels; ++c)
    for (auto& v : fm.channel(c)) v = static_cast<float>(v);
  return fm;
}

/// `n` demonstrations on one world, each paired with a fresh scan.
inline std::vector<DatasetSample> generate_demonstrations(const GroundTruthWorld& world, const WorldParams& wp,
                                                          const ExpertParams& ep, const SensorConfig& sensors,
                                                          int n, std::uint64_t seed) {
  std::vector<DatasetSample> out;
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, kSeedDemo, static_cast<std::uint64_t>(i)));
    auto d = sample_expert_demo(world, wp, ep, rng);
    DatasetSample s;
    s.features = scan_features(world, sensors, derive_seed(seed, kSeedScan, static_cast<std::uint64_t>(i)));
    s.demo = std::move(d.demo);
    s.start = d.start;
    s.goal = d.goal;
    out.push_back(std::move(s));
  }
  return out;
}

/// Everything needed to regenerate a dataset.
struct DatasetConfig {
  int n_samples = 500;
  std::uint64_t seed = 1;
  GridSpec grid{50, 50, 0.5, 0.0, 0.0};
  WorldParams world;
  ExpertParams expert;
  double pitch_error_deg = 0.0;  // applied to the right-hand sensor
  int points_per_scan = 60000;
  double visibility_falloff = 0.99;
  double noise_sigma_z = 0.03;
  double train_fraction = 0.95;

  SensorConfig sensors() const {
    auto cfg = SensorConfig::twin_at_center(grid).with_pitch_error(pitch_error_deg);
    cfg.points_per_scan = points_per_scan;
    cfg.visibility_falloff = visibility_falloff;
    cfg.noise_sigma_z = noise_sigma_z;
    return cfg;
  }
};

struct Dataset {
  DatasetConfig config;
  std::vector<GroundTruthWorld> worlds;
  std::vector<DatasetSample> samples;
  std::vector<int> train;
  std::vector<int> test;
};

inline std::uint64_t sample_scan_seed(std::uint64_t seed, int index) {
  return derive_seed(seed, kSeedScan, static_cast<std::uint64_t>(index));
}

/// Seeded 95/5-style split; the train share is floored.
inline void split_dataset(int n, double train_fraction, std::uint64_t seed, std::vector<int>& train,
                          std::vector<int>& test) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) throw std::invalid_argument("train_fraction must lie in (0,1]");
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(derive_seed(seed, kSeedSplit));
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(uniform01(rng) * (i + 1));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  const int n_train = static_cast<int>(std::floor(train_fraction * n + 1e-9));
  train.assign(order.begin(), order.begin() + n_train);
  test.assign(order.begin() + n_train, order.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
}

/// One world per sample: the world, a demonstration on it, and a scan.
inline Dataset generate_dataset(const DatasetConfig& cfg) {
  if (cfg.n_samples < 1) throw std::invalid_argument("n_samples must be positive");
  cfg.grid.validate();
  Dataset ds;
  ds.config = cfg;
  const auto sensors = cfg.sensors();
  sensors.validate(cfg.grid);
  for (int i = 0; i < cfg.n_samples; ++i) {
    const auto idx = static_cast<std::uint64_t>(i);
    ds.worlds.push_back(generate_world(derive_seed(cfg.seed, kSeedWorld, idx), cfg.grid, cfg.world));
    const auto& world = ds.worlds.back();
    Rng rng(derive_seed(cfg.seed, kSeedDemo, idx));
    auto d = sample_expert_demo(world, cfg.world, cfg.expert, rng);
    DatasetSample s;
    s.features = scan_features(world, sensors, sample_scan_seed(cfg.seed, i));
    s.demo = std::move(d.demo);
    s.start = d.start;
    s.goal = d.goal;
    s.world_index = i;
    ds.samples.push_back(std::move(s));
  }
  split_dataset(cfg.n_samples, cfg.train_fraction, cfg.seed, ds.train, ds.test);
  return ds;
}

/// Rebuilds every sample's features with a different sensor model, using
/// the same scan seeds.
inline void rescan_dataset(Dataset& ds, const SensorConfig& sensors) {
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    auto& s = ds.samples[i];
    s.features = scan_features(ds.worlds[static_cast<std::size_t>(s.world_index)], sensors,
                               sample_scan_seed(ds.config.seed, static_cast<int>(i)));
  }
}

/// Checks the sample invariants against the generating worlds. Returns an
/// empty string on success, else the first violation.
inline std::string audit_dataset(const Dataset& ds) {
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    const auto tag = "sample " + std::to_string(i) + ": ";
    if (s.world_index < 0 || s.world_index >= static_cast<int>(ds.worlds.size())) return tag + "bad world index";
    const auto& w = ds.worlds[static_cast<std::size_t>(s.world_index)];
    if (!(s.features.spec == w.spec)) return tag + "feature grid differs from world grid";
    if (s.demo.states.empty() || s.demo.states.front() != s.start || s.demo.states.back() != s.goal)
      return tag + "demo endpoints differ from start/goal";
    if (!is_valid_trajectory(s.demo, w.spec)) return tag + "invalid trajectory";
    for (int st : s.demo.states)
      if (w.is_obstacle(st)) return tag + "demo visits an obstacle";
    for (int c = 0; c < w.spec.num_cells(); ++c) {
      const auto k = static_cast<std::size_t>(c);
      if (s.features.height_variance[k] < 0.0) return tag + "negative variance";
      if (s.features.visibility[k] == 0.0 && (s.features.mean_height[k] != 0.0 || s.features.height_variance[k] != 0.0))
        return tag + "unobserved cell with nonzero statistics";
    }
  }
  std::vector<int> all = ds.train;
  all.insert(all.end(), ds.test.begin(), ds.test.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i)
    if (all[i] != static_cast<int>(i)) return "split is not a partition of the samples";
  if (all.size() != ds.samples.size()) return "split does not cover every sample";
  return {};
}

// ---------------------------------------------------------------------------
// On-disk layout:
//   manifest.txt             counts, seeds, grid and generator settings
//   split.txt                "train <i>" / "test <i>" lines
//   samples/NNNNN.f32 + .txt feature map
//   samples/NNNNN.traj       i32: start, goal, world, n, states...
//   worlds/NNNNN.world       i32 rows, cols; f32 mask, height, reward, surface

namespace detail {

inline std::string sample_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05d", i);
  return buf;
}

inline void write_dataset_config(io::Manifest& m, const DatasetConfig& c) {
  m.set("n_samples", c.n_samples);
  m.set("seed", c.seed);
  write_grid_spec(m, c.grid);
  m.set("world.obstacle_density", c.world.obstacle_density);
  m.set("world.low_obstacle_fraction", c.world.low_obstacle_fraction);
  m.set("world.tall_height_min_m", c.world.tall_height_min_m);
  m.set("world.tall_height_max_m", c.world.tall_height_max_m);
  m.set("world.low_height_min_m", c.world.low_height_min_m);
  m.set("world.low_height_max_m", c.world.low_height_max_m);
  m.set("world.rough_patches", c.world.rough_patches);
  m.set("world.rough_radius_m", c.world.rough_radius_m);
  m.set("world.rough_amplitude_m", c.world.rough_amplitude_m);
  m.set("world.vehicle_radius_m", c.world.vehicle_radius_m);
  m.set("world.free_reward", c.world.free_reward);
  m.set("world.rough_reward", c.world.rough_reward);
  m.set("world.band_reward", c.world.band_reward);
  m.set("world.obstacle_reward", c.world.obstacle_reward);
  m.set("world.max_retries", c.world.max_retries);
  m.set("expert.step_cost", c.expert.step_cost);
  m.set("expert.min_distance_m", c.expert.min_distance_m);
  m.set("expert.max_distance_m", c.expert.max_distance_m);
  m.set("expert.max_pair_attempts", c.expert.max_pair_attempts);
  m.set("expert.max_rollouts", c.expert.max_rollouts);
  m.set("sensor.pitch_error_deg", c.pitch_error_deg);
  m.set("sensor.points_per_scan", c.points_per_scan);
  m.set("sensor.visibility_falloff", c.visibility_falloff);
  m.set("sensor.noise_sigma_z", c.noise_sigma_z);
  m.set("train_fraction", c.train_fraction);
}

inline DatasetConfig read_dataset_config(const io::Manifest& m) {
  DatasetConfig c;
  c.n_samples = static_cast<int>(m.get_int("n_samples"));
  c.seed = std::stoull(m.get("seed"));
  c.grid = read_grid_spec(m);
  c.world.obstacle_density = m.get_double("world.obstacle_density");
  c.world.low_obstacle_fraction = m.get_double("world.low_obstacle_fraction");
  c.world.tall_height_min_m = m.get_double("world.tall_height_min_m");
  c.world.tall_height_max_m = m.get_double("world.tall_height_max_m");
  c.world.low_height_min_m = m.get_double("world.low_height_min_m");
  c.world.low_height_max_m = m.get_double("world.low_height_max_m");
  c.world.rough_patches = static_cast<int>(m.get_int("world.rough_patches"));
  c.world.rough_radius_m = m.get_double("world.rough_radius_m");
  c.world.rough_amplitude_m = m.get_double("world.rough_amplitude_m");
  c.world.vehicle_radius_m = m.get_double("world.vehicle_radius_m");
  c.world.free_reward = m.get_double("world.free_reward");
  c.world.rough_reward = m.get_double("world.rough_reward");
  c.world.band_reward = m.get_double("world.band_reward");
  c.world.obstacle_reward = m.get_double("world.obstacle_reward");
  c.world.max_retries = static_cast<int>(m.get_int("world.max_retries"));
  c.expert.step_cost = m.get_double("expert.step_cost");
  c.expert.min_distance_m = m.get_double("expert.min_distance_m");
  c.expert.max_distance_m = m.get_double("expert.max_distance_m");
  c.expert.max_pair_attempts = static_cast<int>(m.get_int("expert.max_pair_attempts"));
  c.expert.max_rollouts = static_cast<int>(m.get_int("expert.max_rollouts"));
  c.pitch_error_deg = m.get_double("sensor.pitch_error_deg");
  c.points_per_scan = static_cast<int>(m.get_int("sensor.points_per_scan"));
  c.visibility_falloff = m.get_double("sensor.visibility_falloff");
  c.noise_sigma_z = m.get_double("sensor.noise_sigma_z");
  c.train_fraction = m.get_double("train_fraction");
  return c;
}

}  // namespace detail

inline std::string trajectory_blob(const DatasetSample& s) {
  std::string out;
  io::append_i32(out, s.start);
  io::append_i32(out, s.goal);
  io::append_i32(out, s.world_index);
  io::append_i32(out, static_cast<std::int32_t>(s.demo.states.size()));
  for (int st : s.demo.states) io::append_i32(out, st);
  return out;
}

inline std::string world_blob(const GroundTruthWorld& w) {
  std::string out;
  io::append_i32(out, w.spec.height_cells);
  io::append_i32(out, w.spec.width_cells);
  for (auto v : w.obstacle_mask) io::append_f32(out, v);
  for (double v : w.terrain_height) io::append_f32(out, v);
  for (double v : w.true_reward) io::append_f32(out, v);
  for (auto v : w.surface) io::append_f32(out, static_cast<double>(v));
  return out;
}

inline GroundTruthWorld world_from_blob(const GridSpec& spec, std::string bytes) {
  io::BlobReader r(std::move(bytes));
  if (r.i32() != spec.height_cells || r.i32() != spec.width_cells) throw DataError("world blob shape mismatch");
  GroundTruthWorld w;
  w.spec = spec;
  const auto n = static_cast<std::size_t>(spec.num_cells());
  w.obstacle_mask.resize(n);
  w.terrain_height.resize(n);
  w.true_reward.resize(n);
  w.surface.resize(n);
  for (auto& v : w.obstacle_mask) v = static_cast<std::uint8_t>(r.f32() != 0.0f);
  for (auto& v : w.terrain_height) v = r.f32();
  for (auto& v : w.true_reward) v = r.f32();
  for (auto& v : w.surface) {
    const float f = r.f32();
    if (f < 0.0f || f > 3.0f) throw DataError("bad surface code in world blob");
    v = static_cast<Surface>(static_cast<int>(f));
  }
  if (!r.at_end()) throw DataError("trailing bytes in world blob");
  return w;
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  io::Manifest m;
  m.set("format", "deepirl-dataset-1");
  detail::write_dataset_config(m, ds.config);
  m.set("n_train", ds.train.size());
  m.set("n_test", ds.test.size());
  m.set("n_worlds", ds.worlds.size());
  m.save(dir / "manifest.txt");
  std::string split;
  for (int i : ds.train) split += "train " + std::to_string(i) + "\n";
  for (int i : ds.test) split += "test " + std::to_string(i) + "\n";
  io::write_file(dir / "split.txt", split);
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto name = detail::sample_name(static_cast<int>(i));
    save_feature_map(ds.samples[i].features, dir / "samples" / name);
    io::write_file(dir / "samples" / (name + ".traj"), trajectory_blob(ds.samples[i]));
  }
  for (std::size_t i = 0; i < ds.worlds.size(); ++i)
    io::write_file(dir / "worlds" / (detail::sample_name(static_cast<int>(i)) + ".world"), world_blob(ds.worlds[i]));
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  const auto m = io::Manifest::load(dir / "manifest.txt");
  if (m.get("format") != "deepirl-dataset-1") throw DataError("unsupported dataset format in " + dir.string());
  Dataset ds;
  ds.config = detail::read_dataset_config(m);
  const auto n_worlds = m.get_int("n_worlds");
  for (long long i = 0; i < n_worlds; ++i)
    ds.worlds.push_back(world_from_blob(
        ds.config.grid, io::read_file(dir / "worlds" / (detail::sample_name(static_cast<int>(i)) + ".world"))));
  for (int i = 0; i < ds.config.n_samples; ++i) {
    const auto name = detail::sample_name(i);
    DatasetSample s;
    s.features = load_feature_map(dir / "samples" / name);
    if (!(s.features.spec == ds.config.grid)) throw DataError("sample " + name + " grid differs from manifest");
    io::BlobReader r(io::read_file(dir / "samples" / (name + ".traj")));
    s.start = r.i32();
    s.goal = r.i32();
    s.world_index = r.i32();
    const int len = r.i32();
    if (len < 1 || len > ds.config.grid.num_cells() * 8) throw DataError("bad trajectory length in " + name);
    std::vector<int> states(static_cast<std::size_t>(len));
    for (auto& st : states) st = r.i32();
    if (!r.at_end()) throw DataError("trailing bytes in trajectory " + name);
    try {
      s.demo = Trajectory::from_states(std::move(states), ds.config.grid);
    } catch (const std::exception& e) {
      throw DataError("trajectory " + name + ": " + e.what());
    }
    ds.samples.push_back(std::move(s));
  }
  std::istringstream split(io::read_file(dir / "split.txt"));
  std::string kind;
  long long idx = 0;
  while (split >> kind >> idx) {
    if (idx < 0 || idx >= ds.config.n_samples) throw DataError("split index out of range");
    (kind == "train" ? ds.train : ds.test).push_back(static_cast<int>(idx));
  }
  if (static_cast<long long>(ds.train.size()) != m.get_int("n_train") ||
      static_cast<long long>(ds.test.size()) != m.get_int("n_test"))
    throw DataError("split.txt disagrees with manifest counts");
  const auto problem = audit_dataset(ds);
  if (!problem.empty()) throw DataError("dataset audit failed: " + problem);
  return ds;
}

}  // namespace deepirl
