#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cmpcc/geometry.hpp"

namespace cmpcc {

struct GridIndex {
  int ix = 0;
  int iy = 0;
};

/// 2D occupancy grid. Values live in [0,1]; a cell is occupied when its
/// value reaches occupied_threshold. In practice maps are binary 0/1.
class Costmap {
 public:
  Costmap(double resolution, Vec2 origin, int width, int height, double initial = 0.0,
          double occupied_threshold = 0.5);

  double resolution() const { return resolution_; }
  Vec2 origin() const { return origin_; }
  int width() const { return width_; }
  int height() const { return height_; }
  double occupied_threshold() const { return threshold_; }
  uint64_t seed() const { return seed_; }
  void set_seed(uint64_t s) { seed_ = s; }

  bool in_bounds(int ix, int iy) const {
    return ix >= 0 && iy >= 0 && ix < width_ && iy < height_;
  }
  double at(int ix, int iy) const { return cells_[static_cast<size_t>(iy) * width_ + ix]; }
  void set(int ix, int iy, double v);

  GridIndex world_to_grid(const Vec2& p) const;
  Vec2 grid_to_world_center(const GridIndex& g) const;

  bool occupied(int ix, int iy) const { return at(ix, iy) >= threshold_; }
  /// Out-of-bounds positions count as free.
  bool occupied_at(const Vec2& p) const;

  int occupied_count() const;

 private:
  double resolution_;
  Vec2 origin_;
  int width_, height_;
  double threshold_;
  uint64_t seed_ = 0;
  std::vector<double> cells_;
};

struct RangeScan {
  Vec2 position = Vec2::Zero();
  double heading = 0.0;
  int n_beams = 0;
  double max_range = 0.0;
  std::vector<double> ranges;
};

struct RaycastResult {
  double distance = 0.0;
  bool hit = false;
  /// The ray started inside an occupied cell; distance is 0 and the
  /// caller must treat the sample as fully blocked.
  bool origin_blocked = false;
};

/// Distance along the ray to the near face of the first occupied cell
/// (Amanatides-Woo grid traversal), or d_max when nothing is hit.
RaycastResult raycast(const Costmap& map, const Vec2& origin, const Vec2& direction,
                      double d_max);

/// 360-degree scan: beam i is cast at heading + 2*pi*i/n_beams.
RangeScan simulate_scan(const Costmap& truth, const Vec2& position, double heading,
                        int n_beams, double max_range);

/// Writes a scan into the online costmap: cells crossed before each hit are
/// set free (0), the hit cell is set occupied (1), everything beyond stays
/// unchanged so occlusions are preserved.
void integrate_scan(Costmap& map, const RangeScan& scan);

struct WorldParams {
  double density = 0.3;       // obstacles per square meter
  double extent_x = 10.0;     // meters
  double extent_y = 10.0;
  double resolution = 0.05;   // m per cell
  double robot_radius = 0.15; // r_o, used to keep start/goal discs free
  uint64_t seed = 0;
};

/// Procedural world: axis-aligned rectangles and discs, deterministic for a
/// fixed seed. Start and goal discs of radius 3*r_o stay free, and a free
/// grid path between them is guaranteed (maps failing the connectivity
/// check are regenerated from a derived sub-seed).
Costmap generate_world(const WorldParams& params);

/// Start/goal convention for generated worlds: mid-height, 0.7 m from the
/// left/right edges.
Vec2 world_start(const Costmap& map);
Vec2 world_goal(const Costmap& map);

/// True iff any occupied cell center lies within r_o of the position.
bool is_collision(const Costmap& map, const Vec2& position, double r_o);

void save_world(const Costmap& map, std::ostream& out);
void save_world(const Costmap& map, const std::string& path);
Costmap load_world(std::istream& in);
Costmap load_world(const std::string& path);

/// Grid connectivity on an inflated map (8-connected BFS).
bool free_path_exists(const Costmap& map, const Vec2& from, const Vec2& to,
                      double inflation_radius);

/// Blocked mask after inflating occupied cells by the given radius
/// (cell centers within the radius of any occupied cell center).
std::vector<uint8_t> inflate_occupancy(const Costmap& map, double radius);

}  // namespace cmpcc
