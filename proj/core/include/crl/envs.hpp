#pragma once

#include <string>
#include <vector>

#include "crl/grid.hpp"
#include "crl/mdp.hpp"
#include "crl/policy.hpp"

namespace crl {

struct GridEnv {
  GridSpec grid;
  MdpSpec mdp;
};

enum class TeacherKind { determined, less_confident };

/// The square-wave corridor: a 9x16 grid whose teacher walks three
/// amplitude-4 humps between start (4,0) and goal (4,15). The compliant path
/// takes 39 steps (reward 61); the straight corridor takes 15 (reward 85).
/// determined: 0.98 on the preferred action, the rest spread evenly.
/// less_confident: deterministic on the wave path, uniform elsewhere.
struct SquareWaveEnv {
  GridEnv env;
  TablePolicy teacher;
  std::vector<ActionId> preferred;  // per cell; -1 where none (goal)
  std::vector<std::int32_t> wave_path;  // visited cell ids, in order
};
SquareWaveEnv build_square_wave(TeacherKind kind = TeacherKind::determined);

/// Wall-leap corridor: a 7x16 grid with two wall teeth, the first passable
/// only at the top row, the second only at the bottom row. Rail walls block
/// every vertical move except the four detour columns, so the solid grid has
/// a unique shortest route: ride row 3, climb over the first tooth, duck
/// under the second (27 steps, reward 73). That uniqueness is what lets a
/// reward-trained reference policy land on the groove instead of an
/// arbitrary staircase. The student's grid keeps the same walls but makes
/// each tooth's row-3 edge leapable at the leap penalty: one leap is worth
/// 78, the straight two-leap run 83, and both leap routes visit only groove
/// cells. The reference policy itself is trained at the experiment layer.
struct WallLeapEnv {
  GridEnv env;        // leapable teeth (the grid experiments run on)
  GridEnv solid_env;  // fully walled teeth (what the reference trains on)
  std::vector<ActionId> preferred;  // shortest-path direction per cell, -1 if none
  std::vector<std::int32_t> groove_path;
};
WallLeapEnv build_wall_leap();

/// The 2x2 estimator benchmark: state-independent teacher with action
/// probabilities (up, down, left, right) = (0.1, 0.2, ~0, 0.7) realized in
/// the requested architecture, and a student perturbed from it.
struct KlBenchEnv {
  GridEnv env;
  PolicyParams teacher;
  PolicyParams student;
};
KlBenchEnv build_kl_bench_2x2(Arch arch, std::uint64_t seed, double noise = 0.5);

/// Teacher table from a per-cell preferred-action map.
TablePolicy teacher_from_directions(const GridSpec& grid,
                                    const std::vector<ActionId>& preferred,
                                    TeacherKind kind,
                                    const std::vector<std::int32_t>& wave_path);

/// First move of a shortest walkable path to the goal, per cell (-1 for the
/// goal and for cells the goal cannot be reached from). Leapable edges count
/// as walls; ties break deterministically.
std::vector<ActionId> directions_to_goal(const GridSpec& grid);

/// Per-cell direction map file ('^', 'v', '<', '>', '.'), canonical writer.
std::string write_directions(const GridSpec& grid, const std::vector<ActionId>& preferred);
std::vector<ActionId> parse_directions(const GridSpec& grid, const std::string& text);

/// Writes the named environment's files (grid maps, direction map, teacher
/// tables) into `dir`. Names: square_wave, wall_leap, kl_bench_2x2.
std::vector<std::string> write_env_files(const std::string& name, const std::string& dir);

}  // namespace crl
