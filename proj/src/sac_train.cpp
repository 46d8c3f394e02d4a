#include "cmpcc/sac_train.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace cmpcc {

TrainResult train_policy(const std::vector<Costmap>& worlds, const Config& params,
                         const TrainConfig& tc) {
  if (worlds.empty()) throw std::invalid_argument("train_policy: no worlds");

  TrainResult result{SacAgent(params.sac_config(tc.seed)), {}, false};
  ReplayBuffer buffer(params.sac_config(tc.seed).buffer_capacity);
  SacAgent checkpoint = result.agent;  // last finite state

  for (int ep = 0; ep < tc.episodes; ++ep) {
    const int world_index = ep % static_cast<int>(worlds.size());
    const Costmap& world = worlds[world_index];

    EpisodeConfig ec;
    ec.world = &world;
    ec.params = params;
    ec.variant = Variant::kCbfSac;
    ec.start = world_start(world);
    ec.start_theta = 0.0;
    ec.goal = world_goal(world);
    ec.max_steps = tc.max_steps_per_episode;
    jitter_start(episode_seed(tc.seed, world_index, ep), params.start_jitter, &ec.start,
                 &ec.start_theta);

    EpisodeStats stats;
    stats.episode = ep;
    SacLosses last_losses;
    bool blew_up = false;

    SacHooks hooks;
    hooks.act = [&](const SacObservation& obs) { return result.agent.act(obs, false); };
    hooks.on_transition = [&](const Transition& t) {
      stats.episode_return += t.r;
      buffer.push(t);
      for (int u = 0; u < tc.updates_per_step && !blew_up; ++u) {
        last_losses = result.agent.update(buffer);
        if (!last_losses.finite()) blew_up = true;
      }
    };

    const EpisodeResult er = run_episode(ec, &hooks);
    stats.steps = static_cast<int>(er.steps.size());
    stats.outcome = er.outcome;
    stats.q1_loss = last_losses.q1;
    stats.q2_loss = last_losses.q2;
    stats.policy_loss = last_losses.policy;
    stats.beta = last_losses.beta;
    result.curves.push_back(stats);

    if (blew_up) {
      result.diverged = true;
      result.agent = checkpoint;
      return result;
    }
    checkpoint = result.agent;
  }
  return result;
}

void emit_learning_curves(const std::vector<EpisodeStats>& curves, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("emit_learning_curves: cannot open " + path);
  out << "episode,return,steps,outcome,q1_loss,q2_loss,policy_loss,beta\n";
  char buf[256];
  for (const EpisodeStats& s : curves) {
    std::snprintf(buf, sizeof(buf), "%d,%.12g,%d,%s,%.12g,%.12g,%.12g,%.12g\n", s.episode,
                  s.episode_return, s.steps, to_string(s.outcome), s.q1_loss, s.q2_loss,
                  s.policy_loss, s.beta);
    out << buf;
  }
}

}  // namespace cmpcc
