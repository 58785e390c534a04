#pragma once

// Plain-text pipeline configuration: one `key = value` per line, `#` starts
// a comment, keys are dotted by section (grid., world., expert., sensor.,
// dataset., train., baseline., eval.). Unknown keys and malformed values are
// errors.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "deepirl/baseline_cost.hpp"
#include "deepirl/evalkit.hpp"
#include "deepirl/io.hpp"
#include "deepirl/irl_train.hpp"
#include "deepirl/synth.hpp"

namespace deepirl {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Everything the command-line tool needs. Defaults are the desk-scale
/// settings: 500 samples of 50x50 cells at 0.5 m.
struct PipelineConfig {
  DatasetConfig dataset;
  TrainConfig train;
  BaselineParams baseline;
  EvalSuiteConfig suite;
  PlannerConfig planner;

  PipelineConfig() {
    train.learning_rate = 3e-3;
    train.n_steps = 300;
    baseline.variance_threshold = 0.01;
  }

  void validate() const {
    dataset.grid.validate();
    dataset.world.validate();
    dataset.expert.validate();
    dataset.sensors().validate(dataset.grid);
    train.validate();
    baseline.validate();
    if (dataset.n_samples < 1) throw std::invalid_argument("dataset.n_samples must be positive");
    if (suite.calibration_free_per_test < 0 || suite.holdout_free_per_test < 0 || suite.collisions_per_test < 0)
      throw std::invalid_argument("eval trajectory counts must be nonnegative");
    if (planner.n_samples < 0) throw std::invalid_argument("eval.n_samples must be nonnegative");
  }
};

struct ConfigKey {
  std::string key;
  std::string doc;
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

namespace detail {

inline double config_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
}

inline long long config_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used == v.size()) return i;
  } catch (const std::exception&) {
  }
  throw ConfigError("'" + key + "' expects an integer, got '" + v + "'");
}

inline bool config_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("'" + key + "' expects true or false, got '" + v + "'");
}

// Shortest text that parses back to the same value.
template <class T>
std::string show(const T& v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

template <class Field>
ConfigKey number_key(std::string key, std::string doc, Field field) {
  return {key, std::move(doc),
          [key, field](PipelineConfig& c, const std::string& v) {
            auto& ref = field(c);
            using T = std::remove_reference_t<decltype(ref)>;
            if constexpr (std::is_same_v<T, bool>)
              ref = config_bool(key, v);
            else if constexpr (std::is_floating_point_v<T>)
              ref = config_double(key, v);
            else {
              const long long i = config_int(key, v);
              if (std::is_unsigned_v<T> && i < 0) throw ConfigError("'" + key + "' must be nonnegative");
              ref = static_cast<T>(i);
            }
          },
          [field](const PipelineConfig& c) {
            auto& ref = field(const_cast<PipelineConfig&>(c));
            if constexpr (std::is_same_v<std::remove_reference_t<decltype(ref)>, bool>) return std::string(ref ? "true" : "false");
            else return show(ref);
          }};
}

}  // namespace detail

/// Every recognised key with a one-line description.
inline const std::vector<ConfigKey>& config_keys() {
  using detail::number_key;
  using C = PipelineConfig;
  static const std::vector<ConfigKey> keys = {
      number_key("grid.width_cells", "grid width in cells", [](C& c) -> auto& { return c.dataset.grid.width_cells; }),
      number_key("grid.height_cells", "grid height in cells", [](C& c) -> auto& { return c.dataset.grid.height_cells; }),
      number_key("grid.resolution_m", "cell edge length (m)", [](C& c) -> auto& { return c.dataset.grid.resolution_m; }),
      number_key("grid.origin_x_m", "world x of the grid corner (m)", [](C& c) -> auto& { return c.dataset.grid.origin_x_m; }),
      number_key("grid.origin_y_m", "world y of the grid corner (m)", [](C& c) -> auto& { return c.dataset.grid.origin_y_m; }),

      number_key("world.obstacle_density", "target fraction of obstacle cells", [](C& c) -> auto& { return c.dataset.world.obstacle_density; }),
      number_key("world.low_obstacle_fraction", "share of obstacles that are low kerbs", [](C& c) -> auto& { return c.dataset.world.low_obstacle_fraction; }),
      number_key("world.tall_height_min_m", "tall obstacle height range (m)", [](C& c) -> auto& { return c.dataset.world.tall_height_min_m; }),
      number_key("world.tall_height_max_m", "", [](C& c) -> auto& { return c.dataset.world.tall_height_max_m; }),
      number_key("world.low_height_min_m", "low obstacle height range (m)", [](C& c) -> auto& { return c.dataset.world.low_height_min_m; }),
      number_key("world.low_height_max_m", "", [](C& c) -> auto& { return c.dataset.world.low_height_max_m; }),
      number_key("world.rough_patches", "rough terrain patches per world", [](C& c) -> auto& { return c.dataset.world.rough_patches; }),
      number_key("world.rough_radius_m", "rough patch radius (m)", [](C& c) -> auto& { return c.dataset.world.rough_radius_m; }),
      number_key("world.rough_amplitude_m", "rough patch height amplitude (m)", [](C& c) -> auto& { return c.dataset.world.rough_amplitude_m; }),
      number_key("world.vehicle_radius_m", "keep-out band around obstacles (m)", [](C& c) -> auto& { return c.dataset.world.vehicle_radius_m; }),
      number_key("world.free_reward", "ground-truth reward of free cells", [](C& c) -> auto& { return c.dataset.world.free_reward; }),
      number_key("world.rough_reward", "ground-truth reward of rough cells", [](C& c) -> auto& { return c.dataset.world.rough_reward; }),
      number_key("world.band_reward", "ground-truth reward of keep-out cells", [](C& c) -> auto& { return c.dataset.world.band_reward; }),
      number_key("world.obstacle_reward", "ground-truth reward of obstacle cells", [](C& c) -> auto& { return c.dataset.world.obstacle_reward; }),

      number_key("expert.step_cost", "per-move cost of the demonstrator", [](C& c) -> auto& { return c.dataset.expert.step_cost; }),
      number_key("expert.min_distance_m", "start-goal distance range (m)", [](C& c) -> auto& { return c.dataset.expert.min_distance_m; }),
      number_key("expert.max_distance_m", "", [](C& c) -> auto& { return c.dataset.expert.max_distance_m; }),

      number_key("sensor.points_per_scan", "LIDAR points per scan", [](C& c) -> auto& { return c.dataset.points_per_scan; }),
      number_key("sensor.visibility_falloff", "per-meter detection probability decay", [](C& c) -> auto& { return c.dataset.visibility_falloff; }),
      number_key("sensor.noise_sigma_z", "height noise (m)", [](C& c) -> auto& { return c.dataset.noise_sigma_z; }),
      number_key("sensor.pitch_error_deg", "pitch error of the right-hand sensor (deg)", [](C& c) -> auto& { return c.dataset.pitch_error_deg; }),

      number_key("dataset.n_samples", "number of demonstrations", [](C& c) -> auto& { return c.dataset.n_samples; }),
      number_key("dataset.seed", "dataset seed", [](C& c) -> auto& { return c.dataset.seed; }),
      number_key("dataset.train_fraction", "training share of the split", [](C& c) -> auto& { return c.dataset.train_fraction; }),

      {"train.architecture", "standard_fcn, pooling_fcn or ms_fcn",
       [](C& c, const std::string& v) {
         try {
           c.train.architecture = architecture_from_string(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError(e.what());
         }
       },
       [](const C& c) { return to_string(c.train.architecture); }},
      {"train.optimizer", "adam or sgd",
       [](C& c, const std::string& v) {
         if (v == "adam")
           c.train.optimizer = nn::OptimizerKind::Adam;
         else if (v == "sgd")
           c.train.optimizer = nn::OptimizerKind::Sgd;
         else
           throw ConfigError("'train.optimizer' expects adam or sgd, got '" + v + "'");
       },
       [](const C& c) { return std::string(c.train.optimizer == nn::OptimizerKind::Adam ? "adam" : "sgd"); }},
      number_key("train.learning_rate", "optimizer step size", [](C& c) -> auto& { return c.train.learning_rate; }),
      number_key("train.batch_size", "samples per step", [](C& c) -> auto& { return c.train.batch_size; }),
      number_key("train.n_steps", "parameter updates", [](C& c) -> auto& { return c.train.n_steps; }),
      number_key("train.lambda1", "L1 weight on convolution kernels", [](C& c) -> auto& { return c.train.lambda1; }),
      number_key("train.lambda2", "L2 weight on convolution kernels", [](C& c) -> auto& { return c.train.lambda2; }),
      number_key("train.gamma", "discount in (0, 1]", [](C& c) -> auto& { return c.train.gamma; }),
      number_key("train.step_cost", "per-move cost added to the learned reward", [](C& c) -> auto& { return c.train.step_cost; }),
      number_key("train.seed", "initialisation and shuffling seed", [](C& c) -> auto& { return c.train.seed; }),
      {"train.dataset_path", "dataset directory",
       [](C& c, const std::string& v) { c.train.dataset_path = v; }, [](const C& c) { return c.train.dataset_path; }},
      number_key("train.checkpoint_interval", "steps between checkpoints (0: final only)", [](C& c) -> auto& { return c.train.checkpoint_interval; }),
      number_key("train.vi_tol", "value iteration tolerance", [](C& c) -> auto& { return c.train.vi_tol; }),
      number_key("train.horizon", "visitation horizon (0: grid default)", [](C& c) -> auto& { return c.train.horizon; }),
      number_key("train.max_residual_mass", "abort when more mass misses the goal", [](C& c) -> auto& { return c.train.max_residual_mass; }),

      number_key("baseline.variance_threshold", "height variance marking an obstacle (m^2)", [](C& c) -> auto& { return c.baseline.variance_threshold; }),
      number_key("baseline.vehicle_radius_m", "inflation radius (m)", [](C& c) -> auto& { return c.baseline.vehicle_radius_m; }),
      number_key("baseline.obstacle_cost", "cost of inflated obstacle cells", [](C& c) -> auto& { return c.baseline.obstacle_cost; }),
      number_key("baseline.free_cost", "cost of free cells", [](C& c) -> auto& { return c.baseline.free_cost; }),
      number_key("baseline.unknown_is_obstacle", "treat cells without returns as obstacles", [](C& c) -> auto& { return c.baseline.unknown_is_obstacle; }),

      number_key("eval.seed", "seed for sampled paths and evaluation trajectories", [](C& c) -> auto& { return c.suite.seed; }),
      number_key("eval.calibration_free_per_test", "extra free trajectories for calibration", [](C& c) -> auto& { return c.suite.calibration_free_per_test; }),
      number_key("eval.holdout_free_per_test", "free trajectories for the hold-out FPR", [](C& c) -> auto& { return c.suite.holdout_free_per_test; }),
      number_key("eval.collisions_per_test", "collision trajectories per test sample", [](C& c) -> auto& { return c.suite.collisions_per_test; }),
      number_key("eval.collision_min_length_m", "collision trajectory length range (m)", [](C& c) -> auto& { return c.suite.collision.min_length_m; }),
      number_key("eval.collision_max_length_m", "", [](C& c) -> auto& { return c.suite.collision.max_length_m; }),
      number_key("eval.collision_clearance_m", "distance kept from other obstacles (m)", [](C& c) -> auto& { return c.suite.collision.clearance_m; }),
      number_key("eval.n_samples", "sampled paths per test sample for MHD", [](C& c) -> auto& { return c.planner.n_samples; }),
      number_key("eval.gamma", "planner discount", [](C& c) -> auto& { return c.planner.gamma; }),
      number_key("eval.step_cost", "planner per-move cost", [](C& c) -> auto& { return c.planner.step_cost; }),
      number_key("eval.max_residual_mass", "goal counts as unreachable above this", [](C& c) -> auto& { return c.planner.max_residual_mass; }),
  };
  return keys;
}

inline void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& k : config_keys())
    if (k.key == key) {
      k.set(cfg, value);
      return;
    }
  throw ConfigError("unknown config key '" + key + "'");
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

/// Applies `text` on top of `base`. The planner seed follows eval.seed.
inline PipelineConfig parse_config(const std::string& text, PipelineConfig base = {}) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    set_config_value(base, key, value);
  }
  base.planner.seed = base.suite.seed;
  try {
    base.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return base;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  return parse_config(io::read_file(path));
}

/// The configuration as parseable text, with descriptions as comments.
inline std::string format_config(const PipelineConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& k : config_keys()) {
    const auto sec = k.key.substr(0, k.key.find('.'));
    if (sec != section) {
      if (!section.empty()) out += "\n";
      section = sec;
    }
    const auto value = k.get(cfg);
    out += value.empty() ? "# " + k.key + " =" : k.key + " = " + value;
    if (!k.doc.empty()) out += "  # " + k.doc;
    out += "\n";
  }
  return out;
}

}  // namespace deepirl
