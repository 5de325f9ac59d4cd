#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <utility>

#include "crl/mdp.hpp"

namespace crl {

struct GridPos {
  int row = 0;
  int col = 0;
  friend bool operator==(const GridPos&, const GridPos&) = default;
};

/// Grid actions, in this fixed order everywhere.
enum GridAction : ActionId { grid_up = 0, grid_down = 1, grid_left = 2, grid_right = 3 };

/// Four-connected grid world. Walls and leapable segments live on edges
/// between adjacent cells; moving off-grid or into a wall is a no-op that
/// still costs a step. Crossing a leapable edge costs the leap penalty.
/// Entering the goal cell ends the episode and adds the goal reward.
struct GridSpec {
  int rows = 0;
  int cols = 0;
  GridPos start;
  GridPos goal;
  double step_reward = -1.0;
  double goal_reward = 100.0;
  double leap_reward = -2.0;
  std::int32_t horizon_cap = 200;
  /// Canonical unordered edges between adjacent cell ids (min, max).
  std::set<std::pair<std::int32_t, std::int32_t>> walls;
  std::set<std::pair<std::int32_t, std::int32_t>> leaps;

  std::int32_t cell_id(GridPos p) const { return p.row * cols + p.col; }
  GridPos cell_pos(std::int32_t id) const { return {id / cols, id % cols}; }
  bool in_bounds(GridPos p) const {
    return p.row >= 0 && p.row < rows && p.col >= 0 && p.col < cols;
  }
  static std::pair<std::int32_t, std::int32_t> edge_key(std::int32_t a, std::int32_t b) {
    return a < b ? std::make_pair(a, b) : std::make_pair(b, a);
  }

  void validate() const;  // throws ConfigError
  /// Deterministic MDP over rows*cols states (terminal appended); the goal
  /// cell's id exists but is never visited, since entering it terminates.
  MdpSpec to_mdp() const;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Plain-text format: a fixed-order header followed by a map block at double
/// resolution (cells at even columns, edge markers between them; '|', '-'
/// for walls, '~' for leapable edges, 'S'/'G' for start/goal). The writer is
/// canonical, so write(parse(write(g))) == write(g) byte for byte.
std::string write_grid(const GridSpec& g);
GridSpec parse_grid(const std::string& text);

void save_grid_file(const std::string& path, const GridSpec& g);
GridSpec load_grid_file(const std::string& path);

/// Offset of a grid action: up/down/left/right.
GridPos grid_step(GridPos p, ActionId a);

}  // namespace crl
