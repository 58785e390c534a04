#pragma once

// Handcrafted comparison cost: variance threshold, unknown blocking and
// obstacle inflation by the vehicle radius.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "deepirl/grid_world.hpp"

namespace deepirl {

struct BaselineParams {
  double variance_threshold = 0.05;  // m^2
  double vehicle_radius_m = 1.0;
  double obstacle_cost = 100.0;
  double free_cost = 1.0;
  bool unknown_is_obstacle = true;

  void validate() const {
    if (!(obstacle_cost > free_cost && free_cost > 0.0))
      throw std::invalid_argument("baseline costs must satisfy obstacle_cost > free_cost > 0");
    if (!(vehicle_radius_m >= 0.0)) throw std::invalid_argument("vehicle radius must be nonnegative");
    if (!(variance_threshold >= 0.0)) throw std::invalid_argument("variance threshold must be nonnegative");
  }
};

/// Minkowski sum of the mask with a disc: a cell is set iff some set cell
/// lies within `radius_cells` of it (center to center).
inline std::vector<std::uint8_t> minkowski_inflate(const std::vector<std::uint8_t>& mask, int rows, int cols,
                                                   double radius_cells) {
  if (!(radius_cells >= 0.0)) throw std::invalid_argument("inflation radius must be nonnegative");
  if (mask.size() != static_cast<std::size_t>(rows) * cols) throw std::invalid_argument("mask shape mismatch");
  const int reach = static_cast<int>(std::floor(radius_cells));
  const double r2 = radius_cells * radius_cells;
  std::vector<std::pair<int, int>> offsets;
  for (int dr = -reach; dr <= reach; ++dr)
    for (int dc = -reach; dc <= reach; ++dc)
      if (dr * dr + dc * dc <= r2) offsets.emplace_back(dr, dc);
  std::vector<std::uint8_t> out(mask.size(), 0);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      if (!mask[static_cast<std::size_t>(r) * cols + c]) continue;
      for (auto [dr, dc] : offsets) {
        const int nr = r + dr, nc = c + dc;
        if (nr >= 0 && nc >= 0 && nr < rows && nc < cols) out[static_cast<std::size_t>(nr) * cols + nc] = 1;
      }
    }
  return out;
}

/// Cells the baseline treats as obstacles before inflation.
inline std::vector<std::uint8_t> baseline_obstacles(const FeatureMap& fm, const BaselineParams& p) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(fm.spec.num_cells()), 0);
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask[i] = fm.height_variance[i] > p.variance_threshold || (fm.visibility[i] == 0.0 && p.unknown_is_obstacle);
  return mask;
}

/// Two-level cost map: obstacle_cost on inflated obstacles, free_cost elsewhere.
inline std::vector<double> handcrafted_cost(const FeatureMap& fm, const BaselineParams& p) {
  p.validate();
  const auto inflated = minkowski_inflate(baseline_obstacles(fm, p), fm.spec.height_cells, fm.spec.width_cells,
                                          p.vehicle_radius_m / fm.spec.resolution_m);
  std::vector<double> cost(inflated.size());
  for (std::size_t i = 0; i < cost.size(); ++i) cost[i] = inflated[i] ? p.obstacle_cost : p.free_cost;
  return cost;
}

}  // namespace deepirl
