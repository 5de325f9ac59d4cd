#include "crl/envs.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "crl/rng.hpp"

namespace crl {

namespace {

struct Segment {
  ActionId dir;
  int count;
};

/// Walks `segments` from the start cell, recording the visited non-goal cells
/// and the action taken from each. The walk must end exactly on the goal.
void walk_segments(const GridSpec& grid, const std::vector<Segment>& segments,
                   std::vector<std::int32_t>& path, std::vector<ActionId>& preferred) {
  GridPos pos = grid.start;
  for (const Segment& seg : segments) {
    for (int i = 0; i < seg.count; ++i) {
      if (pos == grid.goal) throw AssumptionError("corridor path crosses the goal");
      std::int32_t id = grid.cell_id(pos);
      if (preferred[id] != -1) throw AssumptionError("corridor path revisits a cell");
      path.push_back(id);
      preferred[id] = seg.dir;
      pos = grid_step(pos, seg.dir);
      if (!grid.in_bounds(pos)) throw AssumptionError("corridor path leaves the grid");
    }
  }
  if (!(pos == grid.goal)) throw AssumptionError("corridor path misses the goal");
}

void add_tooth(GridSpec& grid, int col_left, int row_from, int row_to, bool leap_row3) {
  for (int r = row_from; r <= row_to; ++r) {
    auto key = GridSpec::edge_key(grid.cell_id({r, col_left}),
                                  grid.cell_id({r, col_left + 1}));
    if (leap_row3 && r == 3)
      grid.leaps.insert(key);
    else
      grid.walls.insert(key);
  }
}

/// Walls off the vertical edges of `col` between `row_from` and `row_to`.
void add_rail(GridSpec& grid, int col, int row_from, int row_to) {
  for (int r = row_from; r < row_to; ++r)
    grid.walls.insert(GridSpec::edge_key(grid.cell_id({r, col}),
                                         grid.cell_id({r + 1, col})));
}

}  // namespace

TablePolicy teacher_from_directions(const GridSpec& grid,
                                    const std::vector<ActionId>& preferred,
                                    TeacherKind kind,
                                    const std::vector<std::int32_t>& wave_path) {
  int states = grid.rows * grid.cols;
  if (static_cast<int>(preferred.size()) != states)
    throw ConfigError("direction map does not match the grid");
  Eigen::MatrixXd table = Eigen::MatrixXd::Constant(states, 4, 0.25);
  std::vector<bool> on_path(states, false);
  for (std::int32_t id : wave_path) on_path[id] = true;
  for (int s = 0; s < states; ++s) {
    if (preferred[s] < 0) continue;
    if (kind == TeacherKind::determined) {
      table.row(s).setConstant(0.02 / 3.0);
      table(s, preferred[s]) = 0.98;
    } else if (on_path[s]) {
      table.row(s).setZero();
      table(s, preferred[s]) = 1.0;
    }
    // less_confident off the corridor: uniform, already in place.
  }
  return TablePolicy(table);
}

SquareWaveEnv build_square_wave(TeacherKind kind) {
  SquareWaveEnv sw;
  GridSpec& g = sw.env.grid;
  g.rows = 9;
  g.cols = 16;
  g.start = {4, 0};
  g.goal = {4, 15};
  // Three teeth the corridor wraps around; the row-4 lane stays open.
  add_tooth(g, 0, 1, 3, false);
  add_tooth(g, 5, 5, 7, false);
  add_tooth(g, 10, 1, 3, false);

  sw.preferred.assign(g.rows * g.cols, -1);
  std::vector<Segment> wave = {
      {grid_up, 4},   {grid_right, 1}, {grid_down, 4}, {grid_right, 4},
      {grid_down, 4}, {grid_right, 1}, {grid_up, 4},   {grid_right, 4},
      {grid_up, 4},   {grid_right, 1}, {grid_down, 4}, {grid_right, 4}};
  walk_segments(g, wave, sw.wave_path, sw.preferred);

  // Off the corridor: head back toward the row-4 lane.
  for (int r = 0; r < g.rows; ++r)
    for (int c = 0; c < g.cols; ++c) {
      std::int32_t id = g.cell_id({r, c});
      if (sw.preferred[id] != -1 || (GridPos{r, c} == g.goal)) continue;
      sw.preferred[id] = r < 4 ? grid_down : grid_up;
    }

  g.validate();
  sw.env.mdp = g.to_mdp();
  sw.teacher = teacher_from_directions(g, sw.preferred, kind, sw.wave_path);
  return sw;
}

std::vector<ActionId> directions_to_goal(const GridSpec& grid) {
  int states = grid.rows * grid.cols;
  std::vector<int> dist(states, -1);
  std::vector<ActionId> dir(states, -1);
  std::vector<std::int32_t> frontier = {grid.cell_id(grid.goal)};
  dist[frontier[0]] = 0;
  auto blocked = [&](std::int32_t a, std::int32_t b) {
    auto key = GridSpec::edge_key(a, b);
    return grid.walls.count(key) != 0 || grid.leaps.count(key) != 0;
  };
  while (!frontier.empty()) {
    std::vector<std::int32_t> next;
    for (std::int32_t id : frontier) {
      GridPos p = grid.cell_pos(id);
      for (ActionId a = 0; a < 4; ++a) {
        GridPos q = grid_step(p, a);  // neighbor whose move `opposite` enters id
        if (!grid.in_bounds(q)) continue;
        std::int32_t nid = grid.cell_id(q);
        if (dist[nid] != -1 || blocked(id, nid)) continue;
        dist[nid] = dist[id] + 1;
        // The action from q onto id is the reverse of a; with the fixed
        // (up, down, left, right) order that is a ^ 1 for the vertical pair
        // and likewise for the horizontal pair.
        dir[nid] = a ^ 1;
        next.push_back(nid);
      }
    }
    frontier = std::move(next);
  }
  return dir;
}

WallLeapEnv build_wall_leap() {
  WallLeapEnv wl;
  GridSpec base;
  base.rows = 7;
  base.cols = 16;
  base.start = {3, 0};
  base.goal = {3, 15};

  // The first tooth leaves its gap at the top row, the second at the bottom
  // row, so no single lane clears both and the detour has to zig-zag.
  // Rails block every other vertical move: climbing is possible only at
  // columns 7/8 (above row 3) and 10/11 (below row 3), which makes the
  // zig-zag groove the one shortest route on the solid grid.
  auto furnish = [](GridSpec& g, bool leapable) {
    add_tooth(g, 7, 1, 6, leapable);
    add_tooth(g, 10, 0, 5, leapable);
    for (int c = 0; c <= 6; ++c) add_rail(g, c, 0, 6);
    add_rail(g, 7, 3, 6);
    add_rail(g, 8, 3, 6);
    add_rail(g, 9, 0, 6);
    add_rail(g, 10, 0, 3);
    add_rail(g, 11, 0, 3);
    for (int c = 12; c <= 15; ++c) add_rail(g, c, 0, 6);
  };
  wl.solid_env.grid = base;
  furnish(wl.solid_env.grid, false);
  wl.solid_env.grid.validate();
  wl.solid_env.mdp = wl.solid_env.grid.to_mdp();

  wl.env.grid = base;
  furnish(wl.env.grid, true);
  wl.env.grid.validate();
  wl.env.mdp = wl.env.grid.to_mdp();

  // The groove rides row 3, climbs over the first tooth, ducks under the
  // second. Comparing it against the shortest-path field below catches any
  // wall mistake that would break its uniqueness.
  std::vector<ActionId> groove_dirs(wl.solid_env.grid.rows * wl.solid_env.grid.cols, -1);
  std::vector<Segment> groove = {
      {grid_right, 7}, {grid_up, 3},   {grid_right, 1},
      {grid_down, 3},  {grid_right, 2}, {grid_down, 3},
      {grid_right, 1}, {grid_up, 3},   {grid_right, 4}};
  walk_segments(wl.solid_env.grid, groove, wl.groove_path, groove_dirs);

  wl.preferred = directions_to_goal(wl.solid_env.grid);
  for (std::size_t i = 0; i < wl.groove_path.size(); ++i)
    if (wl.preferred[wl.groove_path[i]] != groove_dirs[wl.groove_path[i]])
      throw AssumptionError("wall-leap groove is not the unique shortest route");
  return wl;
}

KlBenchEnv build_kl_bench_2x2(Arch arch, std::uint64_t seed, double noise) {
  KlBenchEnv be;
  GridSpec& g = be.env.grid;
  g.rows = 2;
  g.cols = 2;
  g.start = {0, 0};
  g.goal = {1, 1};
  g.horizon_cap = 4;
  g.validate();
  be.env.mdp = g.to_mdp();

  Eigen::Vector4d logp;
  logp << std::log(0.1), std::log(0.2), std::log(1e-9), std::log(0.7);

  int states = g.rows * g.cols;
  PolicyParams teacher;
  teacher.arch = arch;
  teacher.state_count = states;
  teacher.action_count = 4;
  teacher.temperature = 1.0;
  teacher.theta = Eigen::VectorXd::Zero(
      PolicyParams::param_count_for(arch, states, 4, teacher.hidden1, teacher.hidden2));
  switch (arch) {
    case Arch::tabular:
      for (int s = 0; s < states; ++s) teacher.theta.segment(s * 4, 4) = logp;
      break;
    case Arch::linear: {
      Eigen::Map<Eigen::MatrixXd> w(teacher.theta.data(), 4, states);
      for (int s = 0; s < states; ++s) w.col(s) = logp;
      break;  // bias stays zero
    }
    case Arch::mlp:
      // Hidden weights zero: logits reduce to the output bias.
      teacher.theta.tail(4) = logp;
      break;
  }

  PolicyParams student = teacher;
  RandomSource rng(seed);
  for (Eigen::Index i = 0; i < student.theta.size(); ++i)
    student.theta(i) += rng.uniform(-noise, noise);

  be.teacher = std::move(teacher);
  be.student = std::move(student);
  return be;
}

std::string write_directions(const GridSpec& grid,
                             const std::vector<ActionId>& preferred) {
  if (static_cast<int>(preferred.size()) != grid.rows * grid.cols)
    throw ConfigError("direction map does not match the grid");
  static const char glyph[4] = {'^', 'v', '<', '>'};
  std::string out;
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      ActionId a = preferred[grid.cell_id({r, c})];
      if (a < -1 || a > 3) throw ConfigError("direction map holds an unknown action");
      out.push_back(a < 0 ? '.' : glyph[a]);
    }
    out.push_back('\n');
  }
  return out;
}

std::vector<ActionId> parse_directions(const GridSpec& grid, const std::string& text) {
  std::vector<ActionId> preferred(static_cast<std::size_t>(grid.rows) * grid.cols, -1);
  int r = 0, c = 0;
  for (char ch : text) {
    if (ch == '\n') {
      if (c != grid.cols) throw ConfigError("direction map row has the wrong width");
      ++r;
      c = 0;
      continue;
    }
    if (r >= grid.rows || c >= grid.cols)
      throw ConfigError("direction map is larger than the grid");
    ActionId a;
    switch (ch) {
      case '^': a = grid_up; break;
      case 'v': a = grid_down; break;
      case '<': a = grid_left; break;
      case '>': a = grid_right; break;
      case '.': a = -1; break;
      default:
        throw ConfigError(std::string("direction map holds an unknown glyph: ") + ch);
    }
    preferred[grid.cell_id({r, c})] = a;
    ++c;
  }
  if (c != 0 || r != grid.rows)
    throw ConfigError("direction map is smaller than the grid");
  return preferred;
}

std::vector<std::string> write_env_files(const std::string& name,
                                         const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto at = [&](const std::string& file) { return (fs::path(dir) / file).string(); };
  std::vector<std::string> written;
  auto put_text = [&](const std::string& file, const std::string& text) {
    std::ofstream out(at(file), std::ios::binary);
    if (!out) throw IoError("cannot write: " + at(file));
    out << text;
    if (!out) throw IoError("write failed: " + at(file));
    written.push_back(at(file));
  };

  if (name == "square_wave") {
    SquareWaveEnv sw = build_square_wave(TeacherKind::determined);
    put_text("square_wave.grid", write_grid(sw.env.grid));
    put_text("square_wave.directions", write_directions(sw.env.grid, sw.preferred));
    save_table_policy(at("square_wave_determined.teacher"), sw.teacher);
    written.push_back(at("square_wave_determined.teacher"));
    SquareWaveEnv lc = build_square_wave(TeacherKind::less_confident);
    save_table_policy(at("square_wave_less_confident.teacher"), lc.teacher);
    written.push_back(at("square_wave_less_confident.teacher"));
    return written;
  }
  if (name == "wall_leap") {
    WallLeapEnv wl = build_wall_leap();
    put_text("wall_leap.grid", write_grid(wl.env.grid));
    put_text("wall_leap_solid.grid", write_grid(wl.solid_env.grid));
    put_text("wall_leap.directions", write_directions(wl.env.grid, wl.preferred));
    return written;
  }
  if (name == "kl_bench_2x2") {
    KlBenchEnv be = build_kl_bench_2x2(Arch::mlp, 1);
    put_text("kl_bench_2x2.grid", write_grid(be.env.grid));
    return written;
  }
  throw ConfigError("unknown environment name: " + name);
}

}  // namespace crl
