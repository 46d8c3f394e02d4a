#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "cmpcc/world.hpp"

using namespace cmpcc;

namespace {

// Point-marching raycast oracle: walk the ray at a fixed tiny step and
// report the first sample falling in an occupied cell.
double raycast_oracle(const Costmap& map, const Vec2& origin, const Vec2& dir, double d_max,
                      double step = 1e-4) {
  for (double t = step; t <= d_max; t += step) {
    if (map.occupied_at(origin + t * dir)) return t;
  }
  return d_max;
}

// Connected-component count over occupied cells (4-connected flood fill).
int blob_count(const Costmap& map) {
  std::vector<uint8_t> seen(static_cast<size_t>(map.width()) * map.height(), 0);
  auto idx = [&](int ix, int iy) { return static_cast<size_t>(iy) * map.width() + ix; };
  int blobs = 0;
  for (int iy = 0; iy < map.height(); ++iy) {
    for (int ix = 0; ix < map.width(); ++ix) {
      if (!map.occupied(ix, iy) || seen[idx(ix, iy)]) continue;
      ++blobs;
      std::vector<GridIndex> stack{{ix, iy}};
      seen[idx(ix, iy)] = 1;
      while (!stack.empty()) {
        const GridIndex c = stack.back();
        stack.pop_back();
        const int dxs[4] = {1, -1, 0, 0};
        const int dys[4] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          const int nx = c.ix + dxs[k], ny = c.iy + dys[k];
          if (map.in_bounds(nx, ny) && map.occupied(nx, ny) && !seen[idx(nx, ny)]) {
            seen[idx(nx, ny)] = 1;
            stack.push_back({nx, ny});
          }
        }
      }
    }
  }
  return blobs;
}

Costmap empty_map(double extent = 4.0, double res = 0.05) {
  const int n = static_cast<int>(extent / res);
  return Costmap(res, Vec2::Zero(), n, n, 0.0);
}

}  // namespace

TEST_CASE("costmap world/grid round trip is exact for in-bounds points") {
  const Costmap map = empty_map();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 4.0);
  for (int i = 0; i < 500; ++i) {
    const Vec2 p(u(rng), u(rng));
    const GridIndex g = map.world_to_grid(p);
    CHECK(map.in_bounds(g.ix, g.iy));
    const GridIndex g2 = map.world_to_grid(map.grid_to_world_center(g));
    CHECK(g.ix == g2.ix);
    CHECK(g.iy == g2.iy);
  }
}

TEST_CASE("raycast: empty map returns d_max") {
  const Costmap map = empty_map();
  const RaycastResult r = raycast(map, Vec2(2, 2), Vec2(1, 0), 0.35);
  CHECK(r.distance == 0.35);
  CHECK_FALSE(r.hit);
  CHECK_FALSE(r.origin_blocked);
}

TEST_CASE("raycast: single occupied cell hit near its face") {
  Costmap map = empty_map();
  // Cell centered at (2.225, 2.025): origin (2.025, 2.025) +x ray travels 0.2
  // to the cell center, 0.175 to its near face.
  const Vec2 origin(2.025, 2.025);
  const GridIndex cell = map.world_to_grid(origin + Vec2(0.2, 0.0));
  map.set(cell.ix, cell.iy, 1.0);
  const RaycastResult r = raycast(map, origin, Vec2(1, 0), 0.35);
  CHECK(r.hit);
  CHECK(r.distance >= 0.15);
  CHECK(r.distance <= 0.20);
  const double oracle = raycast_oracle(map, origin, Vec2(1, 0), 0.35);
  CHECK(std::abs(r.distance - oracle) < 2e-4);
}

TEST_CASE("raycast: ray parallel to a wall one cell away misses") {
  Costmap map = empty_map();
  for (int ix = 0; ix < map.width(); ++ix) map.set(ix, 45, 1.0);  // wall at y in [2.25, 2.30)
  const Vec2 origin(0.5, 2.175);  // one cell row below the wall
  const RaycastResult r = raycast(map, origin, Vec2(1, 0), 0.35);
  CHECK(r.distance == 0.35);
  CHECK(raycast_oracle(map, origin, Vec2(1, 0), 0.35) == 0.35);
}

TEST_CASE("raycast: blocked origin returns the zero sentinel") {
  Costmap map = empty_map();
  const GridIndex g = map.world_to_grid(Vec2(1.0, 1.0));
  map.set(g.ix, g.iy, 1.0);
  const RaycastResult r = raycast(map, Vec2(1.0, 1.0), Vec2(0, 1), 0.35);
  CHECK(r.origin_blocked);
  CHECK(r.distance == 0.0);
}

TEST_CASE("raycast: random rays match the marching oracle; monotone in obstacles") {
  std::mt19937_64 rng(42);
  WorldParams params;
  params.density = 0.4;
  params.extent_x = params.extent_y = 5.0;
  params.seed = 7;
  const Costmap map = generate_world(params);
  std::uniform_real_distribution<double> upos(0.5, 4.5), uang(0.0, 2.0 * M_PI);
  for (int i = 0; i < 200; ++i) {
    const Vec2 origin(upos(rng), upos(rng));
    if (map.occupied_at(origin)) continue;
    const double a = uang(rng);
    const Vec2 dir(std::cos(a), std::sin(a));
    const RaycastResult r = raycast(map, origin, dir, 2.0);
    const double oracle = raycast_oracle(map, origin, dir, 2.0);
    CHECK(r.distance <= 2.0);
    CHECK(std::abs(r.distance - oracle) < 2e-4);

    // Enlarging the obstacle set never increases the distance.
    Costmap bigger = map;
    const GridIndex extra = bigger.world_to_grid(origin + 0.8 * dir);
    if (bigger.in_bounds(extra.ix, extra.iy)) bigger.set(extra.ix, extra.iy, 1.0);
    CHECK(raycast(bigger, origin, dir, 2.0).distance <= r.distance + 1e-12);
  }
}

TEST_CASE("simulate_scan: empty world gives max_range everywhere; one beam equals raycast") {
  const Costmap map = empty_map();
  const RangeScan scan = simulate_scan(map, Vec2(2, 2), 0.3, 90, 1.5);
  for (double r : scan.ranges) CHECK(r == 1.5);

  const RangeScan one = simulate_scan(map, Vec2(2, 2), 0.7, 1, 1.5);
  CHECK(one.ranges.size() == 1);
  CHECK(one.ranges[0] ==
        raycast(map, Vec2(2, 2), Vec2(std::cos(0.7), std::sin(0.7)), 1.5).distance);
}

TEST_CASE("simulate_scan: ring of obstacles at radius 1 reads about 1") {
  Costmap map = empty_map(6.0);
  const Vec2 center(3.0, 3.0);
  for (int k = 0; k < 720; ++k) {
    const double a = 2.0 * M_PI * k / 720.0;
    const GridIndex g = map.world_to_grid(center + Vec2(std::cos(a), std::sin(a)));
    if (map.in_bounds(g.ix, g.iy)) map.set(g.ix, g.iy, 1.0);
  }
  const RangeScan scan = simulate_scan(map, center, 0.0, 360, 5.0);
  for (double r : scan.ranges) {
    CHECK(r > 1.0 - 2.0 * map.resolution());
    CHECK(r < 1.0 + 2.0 * map.resolution());
  }
}

TEST_CASE("integrate_scan: unknown map becomes a free disc on an empty world") {
  const Costmap truth = empty_map(6.0);
  Costmap online(truth.resolution(), truth.origin(), truth.width(), truth.height(), 0.5);
  const Vec2 pose(3.0, 3.0);
  const RangeScan scan = simulate_scan(truth, pose, 0.0, 720, 1.0);
  integrate_scan(online, scan);
  // Cells well inside the swept disc are free, far cells untouched.
  for (int i = 0; i < 200; ++i) {
    const double a = 2.0 * M_PI * i / 200.0;
    const Vec2 inside = pose + 0.7 * Vec2(std::cos(a), std::sin(a));
    const GridIndex g = online.world_to_grid(inside);
    CHECK(online.at(g.ix, g.iy) == 0.0);
  }
  const GridIndex far = online.world_to_grid(Vec2(5.5, 5.5));
  CHECK(online.at(far.ix, far.iy) == 0.5);
}

TEST_CASE("integrate_scan: wall cells become occupied, free cells match truth, idempotent") {
  Costmap truth = empty_map(4.0);
  for (int iy = 0; iy < truth.height(); ++iy) truth.set(60, iy, 1.0);  // wall at x ~ 3.0
  Costmap online(truth.resolution(), truth.origin(), truth.width(), truth.height(), 0.5);
  const Vec2 pose(1.0, 2.0);
  const RangeScan scan = simulate_scan(truth, pose, 0.0, 360, 5.0);
  integrate_scan(online, scan);

  Costmap again = online;
  integrate_scan(again, scan);
  for (int iy = 0; iy < online.height(); ++iy) {
    for (int ix = 0; ix < online.width(); ++ix) {
      CHECK(again.at(ix, iy) == online.at(ix, iy));
      // Noise-free sensing: a cell marked free is free in the truth.
      if (online.at(ix, iy) == 0.0) CHECK_FALSE(truth.occupied(ix, iy));
      // A cell marked occupied is occupied in the truth.
      if (online.at(ix, iy) == 1.0) CHECK(truth.occupied(ix, iy));
    }
  }
  // The beam straight along +x must have sensed the wall.
  const GridIndex on_wall = online.world_to_grid(Vec2(3.01, 2.0));
  CHECK(online.occupied(on_wall.ix, on_wall.iy));
}

TEST_CASE("generate_world: determinism, emptiness at zero density, blob count") {
  WorldParams params;
  params.density = 0.0;
  params.extent_x = params.extent_y = 5.0;
  params.seed = 3;
  CHECK(generate_world(params).occupied_count() == 0);

  params.density = 0.3;
  params.extent_x = params.extent_y = 10.0;
  const Costmap a = generate_world(params);
  const Costmap b = generate_world(params);
  REQUIRE(a.width() == b.width());
  bool identical = true;
  for (int iy = 0; iy < a.height() && identical; ++iy) {
    for (int ix = 0; ix < a.width(); ++ix) {
      if (a.at(ix, iy) != b.at(ix, iy)) {
        identical = false;
        break;
      }
    }
  }
  CHECK(identical);

  const int blobs = blob_count(a);
  CHECK(blobs >= 25);
  CHECK(blobs <= 35);

  CHECK(free_path_exists(a, world_start(a), world_goal(a), 0.2));
}

TEST_CASE("is_collision: empty, on-cell, and boundary cases") {
  Costmap map = empty_map();
  CHECK_FALSE(is_collision(map, Vec2(2, 2), 0.15));
  const GridIndex g = map.world_to_grid(Vec2(2, 2));
  map.set(g.ix, g.iy, 1.0);
  CHECK(is_collision(map, Vec2(2, 2), 0.15));

  // Exhaustive-scan oracle at exactly r_o + r_c from the lone cell center.
  const Vec2 center = map.grid_to_world_center(g);
  const Vec2 probe = center + Vec2(0.15 + 0.05, 0.0);
  CHECK_FALSE(is_collision(map, probe, 0.15));
  bool oracle_hit = false;
  for (int iy = 0; iy < map.height(); ++iy) {
    for (int ix = 0; ix < map.width(); ++ix) {
      if (map.occupied(ix, iy) &&
          (map.grid_to_world_center({ix, iy}) - probe).norm() <= 0.15) {
        oracle_hit = true;
      }
    }
  }
  CHECK_FALSE(oracle_hit);
  CHECK(is_collision(map, center + Vec2(0.1499, 0.0), 0.15));
}

TEST_CASE("world file round trip is bit exact") {
  WorldParams params;
  params.density = 0.35;
  params.extent_x = 6.0;
  params.extent_y = 4.0;
  params.seed = 99;
  const Costmap map = generate_world(params);

  std::ostringstream first;
  save_world(map, first);
  std::istringstream in(first.str());
  const Costmap loaded = load_world(in);
  std::ostringstream second;
  save_world(loaded, second);
  CHECK(first.str() == second.str());
  CHECK(loaded.resolution() == map.resolution());
  CHECK(loaded.seed() == map.seed());
  CHECK(loaded.occupied_count() == map.occupied_count());
}
