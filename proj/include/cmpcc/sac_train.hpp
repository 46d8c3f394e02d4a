#pragma once

#include <string>
#include <vector>

#include "cmpcc/sac.hpp"
#include "cmpcc/sim.hpp"

namespace cmpcc {

struct TrainConfig {
  int episodes = 200;
  uint64_t seed = 0;
  int max_steps_per_episode = 300;
  int updates_per_step = 1;
};

struct EpisodeStats {
  int episode = 0;
  double episode_return = 0.0;
  int steps = 0;
  Outcome outcome = Outcome::kTimeout;
  double q1_loss = 0.0;
  double q2_loss = 0.0;
  double policy_loss = 0.0;
  double beta = 0.0;
};

struct TrainResult {
  SacAgent agent;
  std::vector<EpisodeStats> curves;
  /// Losses became non-finite; `agent` is the last finite checkpoint.
  bool diverged = false;
};

/// Trains the adjustment policy by interleaving closed-loop cbf_sac episodes
/// over the world set with replay-buffer gradient updates. Deterministic for
/// a fixed seed.
TrainResult train_policy(const std::vector<Costmap>& worlds, const Config& params,
                         const TrainConfig& tc);

void emit_learning_curves(const std::vector<EpisodeStats>& curves, const std::string& path);

}  // namespace cmpcc
