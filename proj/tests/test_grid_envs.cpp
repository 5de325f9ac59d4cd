#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "crl/envs.hpp"
#include "crl/grid.hpp"
#include "crl/mdp.hpp"
#include "crl/oracle.hpp"
#include "crl/policy.hpp"
#include "crl/practical.hpp"

using namespace crl;
namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

/// A policy that always heads one way; handy for lane rollouts.
TablePolicy always(const GridSpec& g, ActionId a) {
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(g.rows * g.cols, 4);
  t.col(a).setOnes();
  return TablePolicy(t);
}

}  // namespace

TEST_SUITE("grid_envs") {

TEST_CASE("grid_step offsets follow the fixed action order") {
  GridPos p{3, 5};
  CHECK(grid_step(p, grid_up) == GridPos{2, 5});
  CHECK(grid_step(p, grid_down) == GridPos{4, 5});
  CHECK(grid_step(p, grid_left) == GridPos{3, 4});
  CHECK(grid_step(p, grid_right) == GridPos{3, 6});
}

TEST_CASE("grid text format is canonical") {
  GridSpec g;
  g.rows = 3;
  g.cols = 4;
  g.start = {2, 0};
  g.goal = {0, 3};
  g.horizon_cap = 25;
  g.leap_reward = -2.5;
  g.walls.insert(GridSpec::edge_key(g.cell_id({0, 1}), g.cell_id({0, 2})));
  g.walls.insert(GridSpec::edge_key(g.cell_id({1, 1}), g.cell_id({2, 1})));
  g.leaps.insert(GridSpec::edge_key(g.cell_id({1, 2}), g.cell_id({1, 3})));
  g.validate();

  std::string text = write_grid(g);
  GridSpec back = parse_grid(text);
  CHECK(back == g);
  CHECK(write_grid(back) == text);

  CHECK_THROWS_AS(parse_grid("not a grid at all"), ConfigError);
}

TEST_CASE("grid files round-trip through disk") {
  GridSpec g;
  g.rows = 2;
  g.cols = 2;
  g.start = {0, 0};
  g.goal = {1, 1};
  g.validate();
  fs::path path = fs::temp_directory_path() / "crl_test_grid.grid";
  save_grid_file(path.string(), g);
  CHECK(load_grid_file(path.string()) == g);
  fs::remove(path);
}

TEST_CASE("to_mdp encodes walls, leaps, no-ops, and the goal exit") {
  GridSpec g;
  g.rows = 1;
  g.cols = 3;
  g.start = {0, 0};
  g.goal = {0, 2};
  g.leaps.insert(GridSpec::edge_key(1, 2));
  g.validate();
  MdpSpec m = g.to_mdp();
  CHECK(m.state_count == 3);
  CHECK(m.terminal_state() == 3);
  CHECK(m.initial[0] == 1.0);

  // Off-grid move: stay put, one step of cost.
  CHECK(m.outcomes[0][grid_up][0].next == 0);
  CHECK(m.step_cost[0][grid_up] == doctest::Approx(1.0));
  // Ordinary move.
  CHECK(m.outcomes[0][grid_right][0].next == 1);
  CHECK(m.step_cost[0][grid_right] == doctest::Approx(1.0));
  // Leap into the goal: leap penalty plus the goal payout, then terminal.
  CHECK(m.outcomes[1][grid_right][0].next == m.terminal_state());
  CHECK(m.step_cost[1][grid_right] == doctest::Approx(2.0 - 100.0));
}

TEST_CASE("square wave: teacher walks the wave, the open lane pays more") {
  SquareWaveEnv sw = build_square_wave(TeacherKind::determined);
  const GridSpec& g = sw.env.grid;
  CHECK(g.rows == 9);
  CHECK(g.cols == 16);
  CHECK(g.start == GridPos{4, 0});
  CHECK(g.goal == GridPos{4, 15});
  CHECK(sw.env.mdp.state_count == 9 * 16);

  REQUIRE(sw.wave_path.size() == 39);  // one entry per move; the goal is not stored
  CHECK(sw.wave_path.front() == g.cell_id(g.start));
  CHECK(sw.wave_path.back() == g.cell_id({4, 14}));

  CHECK(greedy_reward(sw.env.mdp, sw.teacher) == doctest::Approx(61.0));
  CHECK(greedy_reward(sw.env.mdp, always(g, grid_right)) == doctest::Approx(85.0));

  // Determined teacher: 0.98 on the preferred action, the rest split evenly.
  std::int32_t on_wave = sw.wave_path[1];
  ActionId pref = sw.preferred[on_wave];
  REQUIRE(pref >= 0);
  Eigen::VectorXd row = sw.teacher.action_probs(on_wave);
  CHECK(row(pref) == doctest::Approx(0.98).epsilon(1e-12));
  for (int a = 0; a < 4; ++a)
    if (a != pref) CHECK(row(a) == doctest::Approx(0.02 / 3.0).epsilon(1e-12));

  // Every cell has a preferred direction except the goal.
  for (int id = 0; id < g.rows * g.cols; ++id) {
    if (id == g.cell_id(g.goal))
      CHECK(sw.preferred[id] == -1);
    else
      CHECK(sw.preferred[id] >= 0);
  }
}

TEST_CASE("square wave: less-confident teacher is exact on the wave only") {
  SquareWaveEnv lc = build_square_wave(TeacherKind::less_confident);
  std::int32_t on_wave = lc.wave_path[1];
  Eigen::VectorXd row = lc.teacher.action_probs(on_wave);
  CHECK(row(lc.preferred[on_wave]) == doctest::Approx(1.0));

  // A cell off the corridor: uniform.
  std::int32_t corner = lc.env.grid.cell_id({8, 15});
  Eigen::VectorXd off = lc.teacher.action_probs(corner);
  for (int a = 0; a < 4; ++a) CHECK(off(a) == doctest::Approx(0.25));

  CHECK(greedy_reward(lc.env.mdp, lc.teacher) == doctest::Approx(61.0));
}

TEST_CASE("wall leap: groove pays 73 solid, leaps buy 78 and 83") {
  WallLeapEnv wl = build_wall_leap();
  const GridSpec& g = wl.env.grid;
  CHECK(g.rows == 7);
  CHECK(g.cols == 16);
  CHECK(g.start == GridPos{3, 0});
  CHECK(g.goal == GridPos{3, 15});
  REQUIRE(wl.groove_path.size() == 27);  // one entry per move

  // The leapable grid differs from the solid one exactly on the two
  // row-3 tooth edges: walls there, leaps here.
  CHECK(wl.solid_env.grid.leaps.empty());
  REQUIRE(wl.env.grid.leaps.size() == 2);
  auto first = GridSpec::edge_key(g.cell_id({3, 7}), g.cell_id({3, 8}));
  auto second = GridSpec::edge_key(g.cell_id({3, 10}), g.cell_id({3, 11}));
  CHECK(wl.env.grid.leaps.count(first) == 1);
  CHECK(wl.env.grid.leaps.count(second) == 1);
  CHECK(wl.solid_env.grid.walls.size() == wl.env.grid.walls.size() + 2);
  CHECK(wl.solid_env.grid.walls.count(first) == 1);
  CHECK(wl.solid_env.grid.walls.count(second) == 1);
  for (const auto& e : wl.env.grid.walls) CHECK(wl.solid_env.grid.walls.count(e) == 1);

  // Groove-following policy: 27 unit steps, then the goal payout, on both
  // grids (the groove never touches a leap edge).
  TablePolicy groove = teacher_from_directions(wl.solid_env.grid, wl.preferred,
                                               TeacherKind::determined, {});
  CHECK(greedy_reward(wl.solid_env.mdp, groove) == doctest::Approx(73.0));
  CHECK(greedy_reward(wl.env.mdp, groove) == doctest::Approx(73.0));

  // Straight down the lane: 13 unit steps plus two leaps at -2 each.
  CHECK(greedy_reward(wl.env.mdp, always(g, grid_right)) == doctest::Approx(83.0));
  // On the solid grid the lane is a dead end: the rollout burns the cap.
  CHECK(greedy_reward(wl.solid_env.mdp, always(g, grid_right)) ==
        doctest::Approx(-static_cast<double>(g.horizon_cap)));

  // One leap, then the under-the-tooth detour: 20 unit steps and one leap.
  std::vector<ActionId> route;
  for (int i = 0; i < 8; ++i) route.push_back(grid_right);  // (3,0) -> (3,8), leap at 7->8
  route.push_back(grid_right);                              // (3,9)
  route.push_back(grid_right);                              // (3,10)
  for (int i = 0; i < 3; ++i) route.push_back(grid_down);   // (6,10)
  route.push_back(grid_right);                              // (6,11)
  for (int i = 0; i < 3; ++i) route.push_back(grid_up);     // (3,11)
  for (int i = 0; i < 4; ++i) route.push_back(grid_right);  // goal
  double reward = 0.0;
  StateId x = g.cell_id(g.start);
  for (ActionId a : route) {
    REQUIRE(!wl.env.mdp.is_terminal(x));
    reward -= wl.env.mdp.step_cost[x][a];
    x = wl.env.mdp.outcomes[x][a][0].next;
  }
  CHECK(wl.env.mdp.is_terminal(x));
  CHECK(reward == doctest::Approx(78.0));
}

TEST_CASE("wall leap: shortest-path field matches the groove and skips leaps") {
  WallLeapEnv wl = build_wall_leap();
  std::vector<ActionId> field = directions_to_goal(wl.solid_env.grid);
  CHECK(field == wl.preferred);
  // On the leapable grid the field treats leap edges as walls, so the
  // direction away from the first tooth cannot be "right through it".
  std::vector<ActionId> leap_field = directions_to_goal(wl.env.grid);
  CHECK(leap_field[wl.env.grid.cell_id({3, 7})] != grid_right);
}

TEST_CASE("estimator bench env realizes the fixed teacher in every architecture") {
  for (Arch arch : {Arch::tabular, Arch::linear, Arch::mlp}) {
    KlBenchEnv be = build_kl_bench_2x2(arch, 17);
    CHECK(be.env.grid.rows == 2);
    CHECK(be.env.grid.cols == 2);
    CHECK(be.env.mdp.horizon_cap == 4);
    CHECK(enumerate_trajectories(be.env.mdp).size() == 256);

    ParametricPolicy teacher(be.teacher);
    for (StateId x = 0; x < be.env.mdp.state_count; ++x) {
      Eigen::VectorXd p = teacher.action_probs(x);
      CHECK(p(grid_up) == doctest::Approx(0.1).epsilon(1e-9));
      CHECK(p(grid_down) == doctest::Approx(0.2).epsilon(1e-9));
      CHECK(p(grid_left) < 1e-6);
      CHECK(p(grid_right) == doctest::Approx(0.7).epsilon(1e-9));
    }

    // The student is a bounded perturbation of the teacher, not a copy.
    CHECK(be.student.arch == be.teacher.arch);
    REQUIRE(be.student.theta.size() == be.teacher.theta.size());
    Eigen::VectorXd diff = be.student.theta - be.teacher.theta;
    CHECK(diff.lpNorm<Eigen::Infinity>() <= 0.5 + 1e-12);
    CHECK(diff.lpNorm<Eigen::Infinity>() > 0.0);

    // Seeds vary the student, not the teacher.
    KlBenchEnv other = build_kl_bench_2x2(arch, 18);
    CHECK((other.teacher.theta - be.teacher.theta).norm() == 0.0);
    CHECK((other.student.theta - be.student.theta).norm() > 0.0);
  }
}

TEST_CASE("direction maps round-trip through their text format") {
  SquareWaveEnv sw = build_square_wave(TeacherKind::determined);
  std::string text = write_directions(sw.env.grid, sw.preferred);
  std::vector<ActionId> back = parse_directions(sw.env.grid, text);
  CHECK(back == sw.preferred);
  CHECK_THROWS_AS(parse_directions(sw.env.grid, "short"), ConfigError);
}

TEST_CASE("environment files on disk match the builders") {
  // The checked-in data set must stay byte-identical to what the builders
  // produce, or downstream runs quietly diverge from the tests.
  fs::path fresh = fs::temp_directory_path() / "crl_test_envs";
  fs::remove_all(fresh);
  fs::path source_data = fs::path(CRL_SOURCE_DIR) / "data" / "envs";
  for (const std::string& name : {std::string("square_wave"), std::string("wall_leap"),
                                  std::string("kl_bench_2x2")}) {
    std::vector<std::string> written = write_env_files(name, fresh.string());
    CHECK(!written.empty());
    for (const std::string& file : written) {
      fs::path base = fs::path(file).filename();
      INFO("file: ", base.string());
      REQUIRE(fs::exists(source_data / base));
      CHECK(read_text(source_data / base) == read_text(file));
    }
  }
  fs::remove_all(fresh);

  CHECK_THROWS_AS(write_env_files("no_such_env", fresh.string()), ConfigError);
}

}  // TEST_SUITE
