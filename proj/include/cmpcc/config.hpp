#pragma once

#include <string>

#include "cmpcc/clf_cbf.hpp"
#include "cmpcc/mpcc.hpp"
#include "cmpcc/sac.hpp"

namespace cmpcc {

/// Every tunable default in one flat struct. Loadable from a "key value"
/// text file (one pair per line, '#' comments); unknown keys fail fast.
struct Config {
  // world + sensing
  double world_resolution = 0.05;  // r_c
  double world_density = 0.3;
  double world_extent_x = 10.0;
  double world_extent_y = 10.0;
  int sensor_beams = 360;
  double sensor_range = 5.0;

  // robot + barriers
  double robot_radius = 0.15;  // r_o
  double cbf_lambda = 0.4;
  double alpha_min = 0.05;
  double alpha_max = 0.25;
  double alpha0 = 0.25;

  // corridor
  double corridor_d_plus = 0.35;
  double corridor_kappa_plus = 6.0;
  int corridor_degree = 3;
  double corridor_s_plus = 4.0;

  // stability
  double clf_lambda_c = 1.0;
  double clf_lambda_l = 1.0;
  double clf_psi = 1.0;

  // contouring controller
  int mpcc_horizon = 20;
  double mpcc_dt = 0.1;
  double mpcc_q_c = 5.0;
  double mpcc_q_l = 500.0;
  double mpcc_q_nu = 1.0;
  double mpcc_slack_weight = 1000.0;
  double mpcc_nu_max = 2.0;
  double mpcc_nudot_max = 2.0;
  double mpcc_a_max = 2.0;
  double mpcc_omega_max = 3.0;
  double mpcc_v_max = 2.0;
  int mpcc_sqp_iters = 30;
  double mpcc_qp_tol = 1e-6;

  // planner + episode loop
  double planner_s_max = 4.0;
  double replan_progress = 0.5;
  double goal_tolerance = 0.2;
  double sim_timeout = 120.0;  // simulated seconds
  double start_jitter = 0.1;

  // policy
  int sac_hidden = 64;
  double sac_lr = 3e-4;
  double sac_gamma = 0.99;
  double sac_tau = 0.005;
  int sac_batch_size = 256;
  long sac_buffer_capacity = 100000;
  double sac_a_max = 0.02;
  int sac_warmup = 1000;
  double reward_gamma_nu = 1.0;
  double reward_gamma_b = 0.5;
  double reward_gamma_h = 10.0;
  double reward_gamma_z = 5.0;

  /// Throws std::runtime_error on unknown keys or malformed values.
  void set(const std::string& key, const std::string& value);

  ClfParams clf_params() const;
  CbfParams cbf_params() const;  // both alphas start at alpha0
  MpccConfig mpcc_config() const;
  SacConfig sac_config(uint64_t seed) const;
  RewardWeights reward_weights() const;
};

Config load_config_file(const std::string& path);
void apply_config_line(Config& config, const std::string& line);

}  // namespace cmpcc
