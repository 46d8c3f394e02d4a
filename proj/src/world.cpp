#include "cmpcc/world.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

namespace cmpcc {

namespace {

// splitmix64, used to derive independent sub-seeds deterministically.
uint64_t mix_seed(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

Costmap::Costmap(double resolution, Vec2 origin, int width, int height, double initial,
                 double occupied_threshold)
    : resolution_(resolution),
      origin_(origin),
      width_(width),
      height_(height),
      threshold_(occupied_threshold),
      cells_(static_cast<size_t>(width) * height, initial) {
  if (resolution <= 0.0 || width <= 0 || height <= 0) {
    throw std::invalid_argument("Costmap: bad dimensions");
  }
  if (occupied_threshold <= 0.0 || occupied_threshold >= 1.0) {
    throw std::invalid_argument("Costmap: occupied_threshold must be in (0,1)");
  }
}

void Costmap::set(int ix, int iy, double v) {
  cells_[static_cast<size_t>(iy) * width_ + ix] = std::clamp(v, 0.0, 1.0);
}

GridIndex Costmap::world_to_grid(const Vec2& p) const {
  return {static_cast<int>(std::floor((p.x() - origin_.x()) / resolution_)),
          static_cast<int>(std::floor((p.y() - origin_.y()) / resolution_))};
}

Vec2 Costmap::grid_to_world_center(const GridIndex& g) const {
  return origin_ + Vec2((g.ix + 0.5) * resolution_, (g.iy + 0.5) * resolution_);
}

bool Costmap::occupied_at(const Vec2& p) const {
  const GridIndex g = world_to_grid(p);
  return in_bounds(g.ix, g.iy) && occupied(g.ix, g.iy);
}

int Costmap::occupied_count() const {
  int n = 0;
  for (int iy = 0; iy < height_; ++iy) {
    for (int ix = 0; ix < width_; ++ix) {
      if (occupied(ix, iy)) ++n;
    }
  }
  return n;
}

RaycastResult raycast(const Costmap& map, const Vec2& origin, const Vec2& direction,
                      double d_max) {
  if (d_max <= 0.0) throw std::invalid_argument("raycast: d_max must be positive");
  if (map.occupied_at(origin)) return {0.0, true, true};

  const double res = map.resolution();
  GridIndex cell = map.world_to_grid(origin);

  const double dx = direction.x(), dy = direction.y();
  const int step_x = dx > 0.0 ? 1 : (dx < 0.0 ? -1 : 0);
  const int step_y = dy > 0.0 ? 1 : (dy < 0.0 ? -1 : 0);

  const double inf = std::numeric_limits<double>::infinity();
  // Distance along the ray to the first vertical / horizontal cell boundary.
  auto boundary_t = [&](double p0, double o, int idx, double d, int step) {
    if (step == 0) return inf;
    const double edge = o + (idx + (step > 0 ? 1 : 0)) * res;
    return (edge - p0) / d;
  };
  double t_max_x = boundary_t(origin.x(), map.origin().x(), cell.ix, dx, step_x);
  double t_max_y = boundary_t(origin.y(), map.origin().y(), cell.iy, dy, step_y);
  const double t_delta_x = step_x != 0 ? res / std::abs(dx) : inf;
  const double t_delta_y = step_y != 0 ? res / std::abs(dy) : inf;

  while (true) {
    double t;
    if (t_max_x < t_max_y) {
      t = t_max_x;
      t_max_x += t_delta_x;
      cell.ix += step_x;
    } else {
      t = t_max_y;
      t_max_y += t_delta_y;
      cell.iy += step_y;
    }
    if (t > d_max) return {d_max, false, false};
    if (map.in_bounds(cell.ix, cell.iy) && map.occupied(cell.ix, cell.iy)) {
      return {t, true, false};
    }
  }
}

RangeScan simulate_scan(const Costmap& truth, const Vec2& position, double heading,
                        int n_beams, double max_range) {
  RangeScan scan;
  scan.position = position;
  scan.heading = heading;
  scan.n_beams = n_beams;
  scan.max_range = max_range;
  scan.ranges.resize(n_beams);
  for (int i = 0; i < n_beams; ++i) {
    const double a = heading + 2.0 * M_PI * i / n_beams;
    const Vec2 dir(std::cos(a), std::sin(a));
    scan.ranges[i] = raycast(truth, position, dir, max_range).distance;
  }
  return scan;
}

void integrate_scan(Costmap& map, const RangeScan& scan) {
  const double res = map.resolution();
  const double inf = std::numeric_limits<double>::infinity();
  for (int i = 0; i < scan.n_beams; ++i) {
    const double a = scan.heading + 2.0 * M_PI * i / scan.n_beams;
    const Vec2 dir(std::cos(a), std::sin(a));
    const double range = scan.ranges[i];
    const bool beam_hit = range < scan.max_range;
    if (range <= 0.0) {
      // Fully blocked sample: the sensor origin cell itself is occupied.
      const GridIndex g = map.world_to_grid(scan.position);
      if (map.in_bounds(g.ix, g.iy)) map.set(g.ix, g.iy, 1.0);
      continue;
    }

    GridIndex cell = map.world_to_grid(scan.position);
    const int step_x = dir.x() > 0.0 ? 1 : (dir.x() < 0.0 ? -1 : 0);
    const int step_y = dir.y() > 0.0 ? 1 : (dir.y() < 0.0 ? -1 : 0);
    auto boundary_t = [&](double p0, double o, int idx, double d, int step) {
      if (step == 0) return inf;
      const double edge = o + (idx + (step > 0 ? 1 : 0)) * res;
      return (edge - p0) / d;
    };
    double t_max_x = boundary_t(scan.position.x(), map.origin().x(), cell.ix, dir.x(), step_x);
    double t_max_y = boundary_t(scan.position.y(), map.origin().y(), cell.iy, dir.y(), step_y);
    const double t_delta_x = step_x != 0 ? res / std::abs(dir.x()) : inf;
    const double t_delta_y = step_y != 0 ? res / std::abs(dir.y()) : inf;

    if (map.in_bounds(cell.ix, cell.iy)) map.set(cell.ix, cell.iy, 0.0);
    while (true) {
      double t;
      if (t_max_x < t_max_y) {
        t = t_max_x;
        t_max_x += t_delta_x;
        cell.ix += step_x;
      } else {
        t = t_max_y;
        t_max_y += t_delta_y;
        cell.iy += step_y;
      }
      if (t >= range) {
        if (beam_hit) {
          // The cell entered at the hit distance is the sensed obstacle. With
          // matching map geometry t lands exactly on `range`; otherwise fall
          // back to a nudged endpoint lookup.
          const GridIndex hit_cell =
              (t == range) ? cell : map.world_to_grid(scan.position + (range + 1e-9) * dir);
          if (map.in_bounds(hit_cell.ix, hit_cell.iy)) map.set(hit_cell.ix, hit_cell.iy, 1.0);
        }
        break;
      }
      if (map.in_bounds(cell.ix, cell.iy)) map.set(cell.ix, cell.iy, 0.0);
    }
  }
}

Vec2 world_start(const Costmap& map) {
  return map.origin() + Vec2(0.7, 0.5 * map.height() * map.resolution());
}

Vec2 world_goal(const Costmap& map) {
  return map.origin() +
         Vec2(map.width() * map.resolution() - 0.7, 0.5 * map.height() * map.resolution());
}

bool is_collision(const Costmap& map, const Vec2& position, double r_o) {
  const GridIndex c = map.world_to_grid(position);
  const int reach = static_cast<int>(std::ceil(r_o / map.resolution())) + 1;
  const double r2 = r_o * r_o;
  for (int iy = c.iy - reach; iy <= c.iy + reach; ++iy) {
    for (int ix = c.ix - reach; ix <= c.ix + reach; ++ix) {
      if (!map.in_bounds(ix, iy) || !map.occupied(ix, iy)) continue;
      if ((map.grid_to_world_center({ix, iy}) - position).squaredNorm() <= r2) return true;
    }
  }
  return false;
}

std::vector<uint8_t> inflate_occupancy(const Costmap& map, double radius) {
  std::vector<uint8_t> blocked(static_cast<size_t>(map.width()) * map.height(), 0);
  // Offsets of cells whose center lies within `radius` of a cell center.
  const int reach = static_cast<int>(std::ceil(radius / map.resolution()));
  std::vector<std::pair<int, int>> offsets;
  const double r2 = radius * radius;
  for (int dy = -reach; dy <= reach; ++dy) {
    for (int dx = -reach; dx <= reach; ++dx) {
      const double d2 = (dx * dx + dy * dy) * map.resolution() * map.resolution();
      if (d2 <= r2) offsets.emplace_back(dx, dy);
    }
  }
  for (int iy = 0; iy < map.height(); ++iy) {
    for (int ix = 0; ix < map.width(); ++ix) {
      if (!map.occupied(ix, iy)) continue;
      for (const auto& [dx, dy] : offsets) {
        const int jx = ix + dx, jy = iy + dy;
        if (map.in_bounds(jx, jy)) blocked[static_cast<size_t>(jy) * map.width() + jx] = 1;
      }
    }
  }
  return blocked;
}

bool free_path_exists(const Costmap& map, const Vec2& from, const Vec2& to,
                      double inflation_radius) {
  const std::vector<uint8_t> blocked = inflate_occupancy(map, inflation_radius);
  const GridIndex s = map.world_to_grid(from);
  const GridIndex g = map.world_to_grid(to);
  if (!map.in_bounds(s.ix, s.iy) || !map.in_bounds(g.ix, g.iy)) return false;
  auto idx = [&](int ix, int iy) { return static_cast<size_t>(iy) * map.width() + ix; };
  if (blocked[idx(s.ix, s.iy)] || blocked[idx(g.ix, g.iy)]) return false;

  std::vector<uint8_t> seen(blocked.size(), 0);
  std::deque<GridIndex> queue{s};
  seen[idx(s.ix, s.iy)] = 1;
  while (!queue.empty()) {
    const GridIndex c = queue.front();
    queue.pop_front();
    if (c.ix == g.ix && c.iy == g.iy) return true;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0) continue;
        const int nx = c.ix + dx, ny = c.iy + dy;
        if (!map.in_bounds(nx, ny) || seen[idx(nx, ny)] || blocked[idx(nx, ny)]) continue;
        seen[idx(nx, ny)] = 1;
        queue.push_back({nx, ny});
      }
    }
  }
  return false;
}

Costmap generate_world(const WorldParams& params) {
  const int width = static_cast<int>(std::round(params.extent_x / params.resolution));
  const int height = static_cast<int>(std::round(params.extent_y / params.resolution));
  const int n_obstacles =
      static_cast<int>(std::round(params.density * params.extent_x * params.extent_y));

  for (int attempt = 0; attempt < 64; ++attempt) {
    std::mt19937_64 rng(mix_seed(params.seed + 0x51edULL * attempt));
    Costmap map(params.resolution, Vec2::Zero(), width, height, 0.0);
    map.set_seed(params.seed);

    const Vec2 start = world_start(map);
    const Vec2 goal = world_goal(map);
    const double keepout = 3.0 * params.robot_radius;

    std::uniform_real_distribution<double> ux(0.0, params.extent_x);
    std::uniform_real_distribution<double> uy(0.0, params.extent_y);
    std::uniform_real_distribution<double> usize(0.075, 0.225);
    std::uniform_real_distribution<double> ushape(0.0, 1.0);

    for (int k = 0; k < n_obstacles; ++k) {
      for (int tries = 0; tries < 200; ++tries) {
        const Vec2 center(ux(rng), uy(rng));
        const bool disc = ushape(rng) < 0.5;
        const double hx = usize(rng);
        const double hy = disc ? hx : usize(rng);
        const double bound = std::max(hx, hy) * (disc ? 1.0 : std::sqrt(2.0));
        if ((center - start).norm() < keepout + bound) continue;
        if ((center - goal).norm() < keepout + bound) continue;
        // Rasterize cells whose centers fall inside the shape.
        const GridIndex lo = map.world_to_grid(center - Vec2(bound, bound));
        const GridIndex hi = map.world_to_grid(center + Vec2(bound, bound));
        for (int iy = lo.iy; iy <= hi.iy; ++iy) {
          for (int ix = lo.ix; ix <= hi.ix; ++ix) {
            if (!map.in_bounds(ix, iy)) continue;
            const Vec2 p = map.grid_to_world_center({ix, iy}) - center;
            const bool inside = disc ? p.squaredNorm() <= hx * hx
                                     : (std::abs(p.x()) <= hx && std::abs(p.y()) <= hy);
            if (inside) map.set(ix, iy, 1.0);
          }
        }
        break;
      }
    }

    if (free_path_exists(map, start, goal, params.robot_radius + params.resolution)) {
      return map;
    }
  }
  throw std::runtime_error("generate_world: no connected world found for this seed/density");
}

void save_world(const Costmap& map, std::ostream& out) {
  char buf[64];
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  out << "resolution " << fmt(map.resolution()) << "\n";
  out << "origin_x " << fmt(map.origin().x()) << "\n";
  out << "origin_y " << fmt(map.origin().y()) << "\n";
  out << "width " << map.width() << "\n";
  out << "height " << map.height() << "\n";
  out << "seed " << map.seed() << "\n";
  for (int iy = 0; iy < map.height(); ++iy) {
    for (int ix = 0; ix < map.width(); ++ix) {
      out << (map.occupied(ix, iy) ? '1' : '0');
      out << (ix + 1 == map.width() ? '\n' : ' ');
    }
  }
}

void save_world(const Costmap& map, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_world: cannot open " + path);
  save_world(map, out);
}

Costmap load_world(std::istream& in) {
  double resolution = 0.0, ox = 0.0, oy = 0.0;
  int width = 0, height = 0;
  uint64_t seed = 0;
  for (int i = 0; i < 6; ++i) {
    std::string key;
    if (!(in >> key)) throw std::runtime_error("load_world: truncated header");
    if (key == "resolution") in >> resolution;
    else if (key == "origin_x") in >> ox;
    else if (key == "origin_y") in >> oy;
    else if (key == "width") in >> width;
    else if (key == "height") in >> height;
    else if (key == "seed") in >> seed;
    else throw std::runtime_error("load_world: unknown header key '" + key + "'");
  }
  Costmap map(resolution, Vec2(ox, oy), width, height, 0.0);
  map.set_seed(seed);
  for (int iy = 0; iy < height; ++iy) {
    for (int ix = 0; ix < width; ++ix) {
      int v;
      if (!(in >> v)) throw std::runtime_error("load_world: truncated grid");
      map.set(ix, iy, v ? 1.0 : 0.0);
    }
  }
  return map;
}

Costmap load_world(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_world: cannot open " + path);
  return load_world(in);
}

}  // namespace cmpcc
