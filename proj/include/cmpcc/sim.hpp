#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cmpcc/config.hpp"
#include "cmpcc/mpcc.hpp"
#include "cmpcc/planner.hpp"
#include "cmpcc/sac.hpp"
#include "cmpcc/world.hpp"

namespace cmpcc {

enum class Variant { kBase, kCbfFixed, kCbfSac };
const char* to_string(Variant v);
std::optional<Variant> variant_from_string(const std::string& name);

enum class Outcome { kSuccess, kCollision, kPlannerFailure, kTimeout };
const char* to_string(Outcome o);

struct StepRecord {
  int step = 0;
  double t = 0.0;
  AugmentedState state;       // at cycle start
  ControlInput input;         // applied this cycle
  double h_up = 0.0, h_lo = 0.0;
  double alpha_up = 0.0, alpha_lo = 0.0;
  double slack = 0.0;
  int z = 0;
  MpccStatus status = MpccStatus::kOptimal;
  // telemetry and derived diagnostics, not part of the trace CSV
  double solve_ms = 0.0;
  int sqp_iters = 0;
  double contour_err = 0.0;
  double lag_err = 0.0;
};

struct EpisodeConfig {
  const Costmap* world = nullptr;  // ground truth
  Vec2 start = Vec2::Zero();
  double start_theta = 0.0;
  Vec2 goal = Vec2::Zero();
  Variant variant = Variant::kCbfFixed;
  int max_steps = 1200;
  Config params;
};

/// Callbacks wiring a policy into the loop: `act` picks the adjustment from
/// the observation; `on_transition` receives completed replay tuples.
struct SacHooks {
  std::function<SacAction(const SacObservation&)> act;
  std::function<void(const Transition&)> on_transition;
};

struct EpisodeResult {
  Outcome outcome = Outcome::kTimeout;
  std::vector<StepRecord> steps;
  int solver_calls = 0;
  double total_solve_time = 0.0;  // s
  // snapshots for plotting: last reference and its corridor offsets
  std::vector<Vec2> reference_polyline;
  std::vector<Vec2> corridor_upper_polyline;
  std::vector<Vec2> corridor_lower_polyline;
  std::vector<Vec2> executed_path;
};

/// Runs one closed-loop episode at the configured control rate:
/// sense -> replan when due -> corridor (cbf variants) -> policy adjustment
/// (cbf_sac) -> contouring solve (fallback braking on infeasibility) ->
/// plant step -> log. Deterministic given the config and hook behavior.
EpisodeResult run_episode(const EpisodeConfig& config, const SacHooks* hooks = nullptr);

struct BenchmarkEntry {
  Variant variant = Variant::kBase;
  int world_index = 0;
  uint64_t world_seed = 0;
  int trial = 0;
  Outcome outcome = Outcome::kTimeout;
  int steps = 0;
  double mean_solve_ms = 0.0;
};

struct BenchmarkSummary {
  std::vector<BenchmarkEntry> rows;
  int successes(Variant v) const;
  int count(Variant v) const;
  double success_rate(Variant v) const;
};

/// Runs trials-per-world episodes for every variant on identical
/// (world, trial) pairs, with per-trial start jitter derived from the master
/// seed by a fixed splitting rule. `jobs` > 1 runs episodes concurrently;
/// results and traces are identical regardless of scheduling. If trace_dir
/// is nonempty a trace CSV per episode is written there.
BenchmarkSummary benchmark(const std::vector<Costmap>& worlds,
                           const std::vector<Variant>& variants, int trials,
                           const Config& params, uint64_t master_seed, SacAgent* policy,
                           int jobs = 1, const std::string& trace_dir = "");

/// Derives the per-episode seed from the master seed and episode labels.
uint64_t episode_seed(uint64_t master_seed, int world_index, int trial);

/// Start pose jitter drawn from the episode seed.
void jitter_start(uint64_t seed, double magnitude, Vec2* start, double* theta);

void emit_trace(const EpisodeResult& result, std::ostream& out);
void emit_trace(const EpisodeResult& result, const std::string& path);
void emit_summary_csv(const BenchmarkSummary& summary, const std::vector<Costmap>& worlds,
                      const std::string& path);
void emit_plot(const EpisodeResult& result, const Costmap& world, const std::string& path);

}  // namespace cmpcc
