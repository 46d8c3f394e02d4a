#pragma once

#include <optional>

#include "cmpcc/geometry.hpp"
#include "cmpcc/world.hpp"

namespace cmpcc {

/// Obstacle-free, arc-length parameterized reference from start to goal.
///
/// Pipeline: 8-connected A* on the costmap inflated by r_o + r_c, greedy
/// line-of-sight shortcutting, natural-spline fit, arc-length
/// reparameterization, truncation to s_max, and a post-fit clearance
/// re-check that reinserts pruned A* vertices until every curve point keeps
/// at least r_o from occupied cell centers. Deterministic in its inputs.
/// Returns nullopt when no grid path exists or the repair loop fails.
std::optional<PlanarCurve> plan(const Costmap& map, const Vec2& start, const Vec2& goal,
                                double s_max, double r_o);

}  // namespace cmpcc
