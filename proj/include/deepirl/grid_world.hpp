#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "deepirl/error.hpp"
#include "deepirl/io.hpp"

namespace deepirl {

/// Geometry of a row-major grid (row = y, col = x) anchored at the world
/// coordinates of the corner of cell (0,0).
struct GridSpec {
  int width_cells = 100;
  int height_cells = 100;
  double resolution_m = 0.25;
  double origin_x_m = 0.0;
  double origin_y_m = 0.0;

  void validate() const {
    if (width_cells < 3 || height_cells < 3)
      throw std::invalid_argument("grid must be at least 3x3 cells");
    if (!(resolution_m > 0.0) || !std::isfinite(resolution_m))
      throw std::invalid_argument("grid resolution must be positive");
    if (!std::isfinite(origin_x_m) || !std::isfinite(origin_y_m))
      throw std::invalid_argument("grid origin must be finite");
  }

  int num_cells() const { return width_cells * height_cells; }
  int index(int row, int col) const { return row * width_cells + col; }
  int row_of(int index) const { return index / width_cells; }
  int col_of(int index) const { return index % width_cells; }
  bool contains(int row, int col) const {
    return row >= 0 && col >= 0 && row < height_cells && col < width_cells;
  }

  /// World coordinates of a cell center.
  std::pair<double, double> center_of(int index) const {
    return {origin_x_m + (col_of(index) + 0.5) * resolution_m,
            origin_y_m + (row_of(index) + 0.5) * resolution_m};
  }

  double extent_x_m() const { return width_cells * resolution_m; }
  double extent_y_m() const { return height_cells * resolution_m; }

  bool operator==(const GridSpec&) const = default;
};

struct Cell {
  int row = 0;
  int col = 0;
  auto operator<=>(const Cell&) const = default;
};

// The eight king moves. Row increases with y ("north").
inline constexpr int kNumActions = 8;
enum class Action : int { East = 0, NorthEast, North, NorthWest, West, SouthWest, South, SouthEast };
inline constexpr std::array<int, kNumActions> kActionDRow = {0, 1, 1, 1, 0, -1, -1, -1};
inline constexpr std::array<int, kNumActions> kActionDCol = {1, 1, 0, -1, -1, -1, 0, 1};

/// Action id moving from (r0,c0) to an 8-adjacent (r1,c1), or -1.
inline int action_between(int r0, int c0, int r1, int c1) {
  for (int a = 0; a < kNumActions; ++a)
    if (r0 + kActionDRow[a] == r1 && c0 + kActionDCol[a] == c1) return a;
  return -1;
}

inline std::optional<Cell> world_to_cell(double x_m, double y_m, const GridSpec& spec) {
  const double fr = std::floor((y_m - spec.origin_y_m) / spec.resolution_m);
  const double fc = std::floor((x_m - spec.origin_x_m) / spec.resolution_m);
  if (!std::isfinite(fr) || !std::isfinite(fc)) return std::nullopt;
  if (fr < 0 || fc < 0 || fr >= spec.height_cells || fc >= spec.width_cells) return std::nullopt;
  return Cell{static_cast<int>(fr), static_cast<int>(fc)};
}

/// A demonstration on the grid: flat cell indices and the king move taken
/// between each consecutive pair.
struct Trajectory {
  std::vector<int> states;
  std::vector<int> actions;

  bool empty() const { return states.empty(); }
  int start() const { return states.front(); }
  int end() const { return states.back(); }
  bool operator==(const Trajectory&) const = default;

  /// Builds actions from the state list; throws if a pair is not 8-adjacent
  /// or repeats a cell.
  static Trajectory from_states(std::vector<int> states, const GridSpec& spec) {
    Trajectory t;
    t.states = std::move(states);
    for (std::size_t i = 0; i + 1 < t.states.size(); ++i) {
      const int a0 = t.states[i], a1 = t.states[i + 1];
      const int act = action_between(spec.row_of(a0), spec.col_of(a0), spec.row_of(a1), spec.col_of(a1));
      if (act < 0)
        throw std::invalid_argument("consecutive trajectory cells are not 8-adjacent");
      t.actions.push_back(act);
    }
    return t;
  }
};

/// Checks the Trajectory invariants against a grid.
inline bool is_valid_trajectory(const Trajectory& t, const GridSpec& spec) {
  if (t.states.empty() || t.actions.size() + 1 != t.states.size()) return false;
  for (int s : t.states)
    if (s < 0 || s >= spec.num_cells()) return false;
  for (std::size_t i = 0; i < t.actions.size(); ++i) {
    const int s = t.states[i], a = t.actions[i];
    if (a < 0 || a >= kNumActions) return false;
    const int r = spec.row_of(s) + kActionDRow[a], c = spec.col_of(s) + kActionDCol[a];
    if (!spec.contains(r, c) || spec.index(r, c) != t.states[i + 1]) return false;
  }
  return true;
}

/// Per-cell LIDAR statistics: the three network input channels.
struct FeatureMap {
  static constexpr int kChannels = 3;
  static constexpr std::array<const char*, kChannels> kChannelNames = {
      "mean_height", "height_variance", "visibility"};

  GridSpec spec;
  std::vector<double> mean_height;
  std::vector<double> height_variance;
  std::vector<double> visibility;

  FeatureMap() = default;
  explicit FeatureMap(const GridSpec& s)
      : spec(s),
        mean_height(s.num_cells(), 0.0),
        height_variance(s.num_cells(), 0.0),
        visibility(s.num_cells(), 0.0) {}

  const std::vector<double>& channel(int c) const {
    switch (c) {
      case 0: return mean_height;
      case 1: return height_variance;
      case 2: return visibility;
    }
    throw std::out_of_range("feature channel");
  }
  std::vector<double>& channel(int c) {
    return const_cast<std::vector<double>&>(std::as_const(*this).channel(c));
  }

  bool operator==(const FeatureMap&) const = default;
};

inline FeatureMap rasterize_points(const std::vector<std::array<double, 3>>& points,
                                   const GridSpec& spec) {
  spec.validate();
  FeatureMap fm(spec);
  std::vector<long long> count(spec.num_cells(), 0);
  std::vector<double> m2(spec.num_cells(), 0.0);
  // Welford's running mean / sum of squared deviations.
  for (const auto& p : points) {
    const auto cell = world_to_cell(p[0], p[1], spec);
    if (!cell) continue;
    const int i = spec.index(cell->row, cell->col);
    const double z = p[2];
    const long long n = ++count[i];
    const double delta = z - fm.mean_height[i];
    fm.mean_height[i] += delta / static_cast<double>(n);
    m2[i] += delta * (z - fm.mean_height[i]);
  }
  for (int i = 0; i < spec.num_cells(); ++i) {
    if (count[i] == 0) continue;
    fm.visibility[i] = 1.0;
    fm.height_variance[i] = std::max(0.0, m2[i] / static_cast<double>(count[i]));
  }
  return fm;
}

/// Inserts intermediate poses so that consecutive poses are at most
/// `max_step_m` apart.
inline std::vector<std::pair<double, double>> densify_path(
    const std::vector<std::pair<double, double>>& waypoints, double max_step_m) {
  if (!(max_step_m > 0.0)) throw std::invalid_argument("densify step must be positive");
  std::vector<std::pair<double, double>> out;
  if (waypoints.empty()) return out;
  out.push_back(waypoints.front());
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    const auto [x0, y0] = waypoints[i - 1];
    const auto [x1, y1] = waypoints[i];
    const double len = std::hypot(x1 - x0, y1 - y0);
    const int n = std::max(1, static_cast<int>(std::ceil(len / max_step_m)));
    for (int k = 1; k <= n; ++k) {
      const double t = static_cast<double>(k) / n;
      out.emplace_back(x0 + t * (x1 - x0), y0 + t * (y1 - y0));
    }
  }
  return out;
}

inline Trajectory discretize_path(const std::vector<std::pair<double, double>>& poses,
                                  const GridSpec& spec) {
  std::vector<int> states;
  for (const auto& [x, y] : poses) {
    const auto cell = world_to_cell(x, y, spec);
    if (!cell) throw std::invalid_argument("pose outside the grid");
    const int idx = spec.index(cell->row, cell->col);
    if (!states.empty() && states.back() == idx) continue;
    states.push_back(idx);
  }
  try {
    return Trajectory::from_states(std::move(states), spec);
  } catch (const std::invalid_argument&) {
    throw std::invalid_argument("path skips cells; densify it before discretizing");
  }
}

// ---------------------------------------------------------------------------
// Serialization: channel-major float32 little-endian blob + text manifest.

inline void write_grid_spec(io::Manifest& m, const GridSpec& spec) {
  m.set("width_cells", spec.width_cells);
  m.set("height_cells", spec.height_cells);
  m.set("resolution_m", spec.resolution_m);
  m.set("origin_x_m", spec.origin_x_m);
  m.set("origin_y_m", spec.origin_y_m);
}

inline GridSpec read_grid_spec(const io::Manifest& m) {
  GridSpec spec;
  spec.width_cells = static_cast<int>(m.get_int("width_cells"));
  spec.height_cells = static_cast<int>(m.get_int("height_cells"));
  spec.resolution_m = m.get_double("resolution_m");
  spec.origin_x_m = m.get_double("origin_x_m");
  spec.origin_y_m = m.get_double("origin_y_m");
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("invalid grid spec in manifest: ") + e.what());
  }
  return spec;
}

inline std::string feature_map_blob(const FeatureMap& fm) {
  std::string out;
  out.reserve(static_cast<std::size_t>(FeatureMap::kChannels) * fm.spec.num_cells() * 4);
  for (int c = 0; c < FeatureMap::kChannels; ++c)
    for (double v : fm.channel(c)) io::append_f32(out, v);
  return out;
}

inline FeatureMap feature_map_from_blob(const GridSpec& spec, std::string bytes) {
  const std::size_t expected = static_cast<std::size_t>(FeatureMap::kChannels) * spec.num_cells() * 4;
  if (bytes.size() != expected)
    throw DataError("feature blob has " + std::to_string(bytes.size()) + " bytes, expected " +
                    std::to_string(expected));
  io::BlobReader reader(std::move(bytes));
  FeatureMap fm(spec);
  for (int c = 0; c < FeatureMap::kChannels; ++c)
    for (auto& v : fm.channel(c)) v = reader.f32();
  return fm;
}

inline io::Manifest feature_map_manifest(const GridSpec& spec) {
  io::Manifest m;
  m.set("format", "deepirl-feature-map-1");
  write_grid_spec(m, spec);
  m.set("dtype", "f32le");
  m.set("layout", "channel-major row-major");
  std::string names;
  for (int c = 0; c < FeatureMap::kChannels; ++c) {
    if (c) names += ' ';
    names += FeatureMap::kChannelNames[c];
  }
  m.set("channels", names);
  return m;
}

/// Writes `<stem>.f32` and `<stem>.txt`.
inline void save_feature_map(const FeatureMap& fm, const std::filesystem::path& stem) {
  io::write_file(stem.string() + ".f32", feature_map_blob(fm));
  feature_map_manifest(fm.spec).save(stem.string() + ".txt");
}

inline FeatureMap load_feature_map(const std::filesystem::path& stem) {
  const auto m = io::Manifest::load(stem.string() + ".txt");
  if (m.get("format") != "deepirl-feature-map-1") throw DataError("unknown feature map format");
  if (m.get("channels") != "mean_height height_variance visibility")
    throw DataError("unexpected feature channel order");
  return feature_map_from_blob(read_grid_spec(m), io::read_file(stem.string() + ".f32"));
}

}  // namespace deepirl
