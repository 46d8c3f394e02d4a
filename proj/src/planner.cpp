#include "cmpcc/planner.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>

namespace cmpcc {

namespace {

struct AStarNode {
  double f, h;
  int idx;
  bool operator>(const AStarNode& o) const {
    if (f != o.f) return f > o.f;
    if (h != o.h) return h > o.h;
    return idx > o.idx;  // lexicographic cell index breaks remaining ties
  }
};

std::optional<std::vector<GridIndex>> astar(const Costmap& map,
                                            const std::vector<uint8_t>& blocked,
                                            GridIndex start, GridIndex goal) {
  const int w = map.width(), h = map.height();
  auto id = [&](const GridIndex& g) { return g.iy * w + g.ix; };
  if (blocked[id(goal)]) return std::nullopt;

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> gcost(static_cast<size_t>(w) * h, inf);
  std::vector<int> parent(static_cast<size_t>(w) * h, -1);
  std::priority_queue<AStarNode, std::vector<AStarNode>, std::greater<AStarNode>> open;

  auto heuristic = [&](const GridIndex& c) {
    const double dx = std::abs(c.ix - goal.ix), dy = std::abs(c.iy - goal.iy);
    return (dx + dy) + (std::sqrt(2.0) - 2.0) * std::min(dx, dy);
  };

  gcost[id(start)] = 0.0;
  open.push({heuristic(start), heuristic(start), id(start)});
  while (!open.empty()) {
    const AStarNode node = open.top();
    open.pop();
    const GridIndex c{node.idx % w, node.idx / w};
    if (node.f > gcost[node.idx] + heuristic(c) + 1e-12) continue;  // stale entry
    if (c.ix == goal.ix && c.iy == goal.iy) {
      std::vector<GridIndex> path;
      for (int i = node.idx; i >= 0; i = parent[i]) path.push_back({i % w, i / w});
      std::reverse(path.begin(), path.end());
      return path;
    }
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0) continue;
        const GridIndex n{c.ix + dx, c.iy + dy};
        if (!map.in_bounds(n.ix, n.iy) || blocked[id(n)]) continue;
        const double step = (dx != 0 && dy != 0) ? std::sqrt(2.0) : 1.0;
        const double g = gcost[id(c)] + step;
        if (g < gcost[id(n)] - 1e-12) {
          gcost[id(n)] = g;
          parent[id(n)] = id(c);
          open.push({g + heuristic(n), heuristic(n), id(n)});
        }
      }
    }
  }
  return std::nullopt;
}

bool segment_clear(const Costmap& map, const std::vector<uint8_t>& blocked, const Vec2& a,
                   const Vec2& b) {
  const double len = (b - a).norm();
  const int n = std::max(2, static_cast<int>(std::ceil(len / (0.25 * map.resolution()))));
  for (int i = 0; i <= n; ++i) {
    const Vec2 p = a + (b - a) * (static_cast<double>(i) / n);
    const GridIndex g = map.world_to_grid(p);
    if (!map.in_bounds(g.ix, g.iy)) return false;
    if (blocked[static_cast<size_t>(g.iy) * map.width() + g.ix]) return false;
  }
  return true;
}

// Greedy pruning: from each kept vertex jump to the farthest visible one.
std::vector<int> shortcut(const Costmap& map, const std::vector<uint8_t>& blocked,
                          const std::vector<Vec2>& pts) {
  std::vector<int> kept{0};
  int i = 0;
  while (i + 1 < static_cast<int>(pts.size())) {
    int best = i + 1;
    for (int j = static_cast<int>(pts.size()) - 1; j > i + 1; --j) {
      if (segment_clear(map, blocked, pts[i], pts[j])) {
        best = j;
        break;
      }
    }
    kept.push_back(best);
    i = best;
  }
  return kept;
}

std::vector<Vec2> dedupe(const std::vector<Vec2>& pts) {
  std::vector<Vec2> out;
  for (const Vec2& p : pts) {
    if (out.empty() || (p - out.back()).norm() > 1e-6) out.push_back(p);
  }
  return out;
}

std::optional<PlanarCurve> fit_reference(const std::vector<Vec2>& waypoints, double s_max) {
  const std::vector<Vec2> pts = dedupe(waypoints);
  if (pts.size() < 2) return std::nullopt;
  PlanarCurve curve = reparameterize_arclength(fit_spline(pts), 1e-4);
  if (curve.total_length() > s_max) curve = truncate_curve(curve, s_max);
  return curve;
}

// First curve parameter whose point violates the r_o clearance, if any.
std::optional<double> first_violation(const PlanarCurve& curve, const Costmap& map,
                                      double r_o) {
  const double step = 0.5 * map.resolution();
  const int n = static_cast<int>(std::ceil(curve.total_length() / step));
  for (int i = 0; i <= n; ++i) {
    const double xi = curve.total_length() * i / n;
    if (is_collision(map, curve.evaluate(xi), r_o)) return xi;
  }
  return std::nullopt;
}

}  // namespace

std::optional<PlanarCurve> plan(const Costmap& map, const Vec2& start, const Vec2& goal,
                                double s_max, double r_o) {
  std::vector<uint8_t> blocked = inflate_occupancy(map, r_o + map.resolution());
  const GridIndex s = map.world_to_grid(start);
  const GridIndex g = map.world_to_grid(goal);
  if (!map.in_bounds(s.ix, s.iy) || !map.in_bounds(g.ix, g.iy)) return std::nullopt;

  auto id = [&](const GridIndex& c) { return static_cast<size_t>(c.iy) * map.width() + c.ix; };
  if (blocked[id(s)]) {
    // The robot may legitimately sit between r_o and the inflation radius
    // from an obstacle; free a small escape disc around the start cell.
    const int reach = 2;
    for (int dy = -reach; dy <= reach; ++dy) {
      for (int dx = -reach; dx <= reach; ++dx) {
        const GridIndex c{s.ix + dx, s.iy + dy};
        if (map.in_bounds(c.ix, c.iy) && !map.occupied_at(map.grid_to_world_center(c))) {
          blocked[id(c)] = 0;
        }
      }
    }
    if (blocked[id(s)]) return std::nullopt;
  }

  const auto cells = astar(map, blocked, s, g);
  if (!cells) return std::nullopt;

  std::vector<Vec2> full;
  full.push_back(start);
  for (const GridIndex& c : *cells) full.push_back(map.grid_to_world_center(c));
  full.push_back(goal);
  full = dedupe(full);
  if (full.size() < 2) {
    // Start and goal share a cell; emit a straight stub toward the goal.
    full = {start, goal};
    if ((goal - start).norm() < 1e-6) return std::nullopt;
  }

  // Working waypoints keyed by distance along the full A* polyline so that
  // reinsertions and midpoint densification keep path order.
  std::vector<double> key(full.size(), 0.0);
  for (size_t i = 1; i < full.size(); ++i) key[i] = key[i - 1] + (full[i] - full[i - 1]).norm();

  const std::vector<int> kept = shortcut(map, blocked, full);
  std::set<int> used(kept.begin(), kept.end());
  std::vector<std::pair<double, Vec2>> working;
  for (int i : used) working.emplace_back(key[i], full[i]);

  auto point_segment_dist = [](const Vec2& p, const Vec2& a, const Vec2& b) {
    const Vec2 ab = b - a;
    const double t = std::clamp(ab.squaredNorm() > 0 ? (p - a).dot(ab) / ab.squaredNorm() : 0.0,
                                0.0, 1.0);
    return (a + t * ab - p).norm();
  };

  for (int repair = 0; repair < 64; ++repair) {
    std::vector<Vec2> pts;
    pts.reserve(working.size());
    for (const auto& [k, p] : working) pts.push_back(p);
    auto curve = fit_reference(pts, s_max);
    if (!curve) return std::nullopt;
    const auto bad = first_violation(*curve, map, r_o);
    if (!bad) return curve;
    const Vec2 p = curve->evaluate(*bad);

    // Prefer reinserting the pruned A* vertex nearest to the violation.
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < static_cast<int>(full.size()); ++i) {
      if (used.count(i)) continue;
      const double d = (full[i] - p).norm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    if (best >= 0) {
      used.insert(best);
      working.emplace_back(key[best], full[best]);
    } else {
      // Every A* vertex is in use; densify the working segment closest to
      // the violating point.
      size_t seg = 0;
      double seg_d = std::numeric_limits<double>::infinity();
      for (size_t i = 0; i + 1 < working.size(); ++i) {
        const double d = point_segment_dist(p, working[i].second, working[i + 1].second);
        if (d < seg_d) {
          seg_d = d;
          seg = i;
        }
      }
      working.emplace_back(0.5 * (working[seg].first + working[seg + 1].first),
                           Vec2(0.5 * (working[seg].second + working[seg + 1].second)));
    }
    std::sort(working.begin(), working.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
  }
  return std::nullopt;
}

}  // namespace cmpcc
