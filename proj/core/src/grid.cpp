#include "crl/grid.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace crl {

GridPos grid_step(GridPos p, ActionId a) {
  switch (a) {
    case grid_up: return {p.row - 1, p.col};
    case grid_down: return {p.row + 1, p.col};
    case grid_left: return {p.row, p.col - 1};
    case grid_right: return {p.row, p.col + 1};
    default: throw ConfigError("grid_step: unknown action");
  }
}

void GridSpec::validate() const {
  if (rows <= 0 || cols <= 0) throw ConfigError("grid: non-positive dimensions");
  if (!in_bounds(start) || !in_bounds(goal))
    throw ConfigError("grid: start or goal out of bounds");
  if (start == goal) throw ConfigError("grid: start equals goal");
  if (horizon_cap <= 0) throw ConfigError("grid: horizon_cap must be positive");
  auto check_edges = [&](const std::set<std::pair<std::int32_t, std::int32_t>>& es,
                         const char* what) {
    for (const auto& [a, b] : es) {
      if (a < 0 || b >= rows * cols) throw ConfigError(std::string("grid: ") + what +
                                                       " edge out of bounds");
      GridPos pa = cell_pos(a), pb = cell_pos(b);
      int dr = pb.row - pa.row, dc = pb.col - pa.col;
      if (!((dr == 0 && dc == 1) || (dr == 1 && dc == 0)) || a >= b)
        throw ConfigError(std::string("grid: non-adjacent or non-canonical ") + what +
                          " edge");
    }
  };
  check_edges(walls, "wall");
  check_edges(leaps, "leap");
  for (const auto& e : leaps)
    if (walls.count(e)) throw ConfigError("grid: edge is both wall and leapable");
}

MdpSpec GridSpec::to_mdp() const {
  validate();
  MdpSpec m;
  m.state_count = rows * cols;
  m.action_count = 4;
  m.horizon_cap = horizon_cap;
  m.initial.assign(m.state_count, 0.0);
  m.initial[cell_id(start)] = 1.0;
  m.outcomes.assign(m.state_count, {});
  m.step_cost.assign(m.state_count, {});
  const std::int32_t goal_id = cell_id(goal);
  for (std::int32_t s = 0; s < m.state_count; ++s) {
    m.outcomes[s].assign(4, {});
    m.step_cost[s].assign(4, 0.0);
    GridPos p = cell_pos(s);
    for (ActionId a = 0; a < 4; ++a) {
      GridPos q = grid_step(p, a);
      double cost = -step_reward;
      StateId next = s;
      if (in_bounds(q)) {
        auto key = edge_key(s, cell_id(q));
        if (leaps.count(key)) {
          cost = -leap_reward;
          next = cell_id(q);
        } else if (!walls.count(key)) {
          next = cell_id(q);
        }
      }
      if (next == goal_id && next != s) {
        cost -= goal_reward;
        next = m.terminal_state();
      }
      m.outcomes[s][a] = {{next, 1.0}};
      m.step_cost[s][a] = cost;
    }
  }
  m.validate();
  return m;
}

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string rstrip(std::string s) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.pop_back();
  return s;
}

}  // namespace

std::string write_grid(const GridSpec& g) {
  g.validate();
  std::ostringstream out;
  out << "# crl grid v1\n";
  out << "rows " << g.rows << "\n";
  out << "cols " << g.cols << "\n";
  out << "start " << g.start.row << " " << g.start.col << "\n";
  out << "goal " << g.goal.row << " " << g.goal.col << "\n";
  out << "step_reward " << format_double(g.step_reward) << "\n";
  out << "goal_reward " << format_double(g.goal_reward) << "\n";
  out << "leap_reward " << format_double(g.leap_reward) << "\n";
  out << "horizon_cap " << g.horizon_cap << "\n";
  out << "map\n";
  for (int r = 0; r < g.rows; ++r) {
    std::string cells(2 * g.cols - 1, ' ');
    for (int c = 0; c < g.cols; ++c) {
      GridPos p{r, c};
      char ch = '.';
      if (p == g.start) ch = 'S';
      if (p == g.goal) ch = 'G';
      cells[2 * c] = ch;
      if (c + 1 < g.cols) {
        auto key = GridSpec::edge_key(g.cell_id(p), g.cell_id({r, c + 1}));
        if (g.walls.count(key)) cells[2 * c + 1] = '|';
        else if (g.leaps.count(key)) cells[2 * c + 1] = '~';
      }
    }
    out << rstrip(cells) << "\n";
    if (r + 1 < g.rows) {
      std::string edges(2 * g.cols - 1, ' ');
      for (int c = 0; c < g.cols; ++c) {
        auto key = GridSpec::edge_key(g.cell_id({r, c}), g.cell_id({r + 1, c}));
        if (g.walls.count(key)) edges[2 * c] = '-';
        else if (g.leaps.count(key)) edges[2 * c] = '~';
      }
      out << rstrip(edges) << "\n";
    }
  }
  return out.str();
}

GridSpec parse_grid(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || rstrip(line) != "# crl grid v1")
    throw ConfigError("grid: missing '# crl grid v1' header");
  GridSpec g;
  bool have_rows = false, have_cols = false, have_start = false, have_goal = false;
  while (std::getline(in, line)) {
    line = rstrip(line);
    if (line == "map") break;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key.empty()) continue;
    if (key == "rows") { ls >> g.rows; have_rows = true; }
    else if (key == "cols") { ls >> g.cols; have_cols = true; }
    else if (key == "start") { ls >> g.start.row >> g.start.col; have_start = true; }
    else if (key == "goal") { ls >> g.goal.row >> g.goal.col; have_goal = true; }
    else if (key == "step_reward") ls >> g.step_reward;
    else if (key == "goal_reward") ls >> g.goal_reward;
    else if (key == "leap_reward") ls >> g.leap_reward;
    else if (key == "horizon_cap") ls >> g.horizon_cap;
    else throw ConfigError("grid: unknown header key '" + key + "'");
    if (ls.fail()) throw ConfigError("grid: malformed header line '" + line + "'");
  }
  if (!have_rows || !have_cols || !have_start || !have_goal)
    throw ConfigError("grid: header is missing rows/cols/start/goal");
  if (g.rows <= 0 || g.cols <= 0) throw ConfigError("grid: non-positive dimensions");

  std::vector<std::string> map_lines;
  while (std::getline(in, line)) map_lines.push_back(rstrip(line));
  map_lines.resize(2 * g.rows - 1);

  auto at = [&](int li, int ci) -> char {
    if (li >= static_cast<int>(map_lines.size())) return ' ';
    const std::string& l = map_lines[li];
    return ci < static_cast<int>(l.size()) ? l[ci] : ' ';
  };

  int start_seen = 0, goal_seen = 0;
  for (int r = 0; r < g.rows; ++r) {
    for (int c = 0; c < g.cols; ++c) {
      char ch = at(2 * r, 2 * c);
      GridPos p{r, c};
      if (ch == 'S') {
        if (!(p == g.start)) throw ConfigError("grid: 'S' does not match start header");
        ++start_seen;
      } else if (ch == 'G') {
        if (!(p == g.goal)) throw ConfigError("grid: 'G' does not match goal header");
        ++goal_seen;
      } else if (ch != '.' && ch != ' ') {
        throw ConfigError(std::string("grid: unexpected cell character '") + ch + "'");
      }
      if (c + 1 < g.cols) {
        char e = at(2 * r, 2 * c + 1);
        auto key = GridSpec::edge_key(g.cell_id(p), g.cell_id({r, c + 1}));
        if (e == '|') g.walls.insert(key);
        else if (e == '~') g.leaps.insert(key);
        else if (e != ' ')
          throw ConfigError(std::string("grid: unexpected edge character '") + e + "'");
      }
      if (r + 1 < g.rows) {
        char e = at(2 * r + 1, 2 * c);
        auto key = GridSpec::edge_key(g.cell_id(p), g.cell_id({r + 1, c}));
        if (e == '-') g.walls.insert(key);
        else if (e == '~') g.leaps.insert(key);
        else if (e != ' ')
          throw ConfigError(std::string("grid: unexpected edge character '") + e + "'");
      }
    }
  }
  if (start_seen != 1 || goal_seen != 1)
    throw ConfigError("grid: map must mark start and goal exactly once");
  g.validate();
  return g;
}

void save_grid_file(const std::string& path, const GridSpec& g) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write grid file: " + path);
  out << write_grid(g);
  if (!out) throw IoError("write failed: " + path);
}

GridSpec load_grid_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read grid file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_grid(ss.str());
}

}  // namespace crl
