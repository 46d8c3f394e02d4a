#include "cmpcc/config.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace cmpcc {

namespace {

template <typename T>
T parse_as(const std::string& value, const std::string& key) {
  std::istringstream ss(value);
  T out;
  if (!(ss >> out)) throw std::runtime_error("config: bad value '" + value + "' for " + key);
  std::string rest;
  if (ss >> rest) throw std::runtime_error("config: trailing tokens after " + key);
  return out;
}

}  // namespace

void Config::set(const std::string& key, const std::string& value) {
  const std::map<std::string, double*> doubles = {
      {"world.resolution", &world_resolution},
      {"world.density", &world_density},
      {"world.extent_x", &world_extent_x},
      {"world.extent_y", &world_extent_y},
      {"sensor.max_range", &sensor_range},
      {"robot.r_o", &robot_radius},
      {"cbf.lambda", &cbf_lambda},
      {"cbf.alpha_min", &alpha_min},
      {"cbf.alpha_max", &alpha_max},
      {"cbf.alpha0", &alpha0},
      {"corridor.d_plus", &corridor_d_plus},
      {"corridor.kappa_plus", &corridor_kappa_plus},
      {"corridor.s_plus", &corridor_s_plus},
      {"clf.lambda_c", &clf_lambda_c},
      {"clf.lambda_l", &clf_lambda_l},
      {"clf.psi", &clf_psi},
      {"mpcc.dt", &mpcc_dt},
      {"mpcc.q_c", &mpcc_q_c},
      {"mpcc.q_l", &mpcc_q_l},
      {"mpcc.q_nu", &mpcc_q_nu},
      {"mpcc.slack_weight", &mpcc_slack_weight},
      {"mpcc.nu_max", &mpcc_nu_max},
      {"mpcc.nudot_max", &mpcc_nudot_max},
      {"mpcc.a_max", &mpcc_a_max},
      {"mpcc.omega_max", &mpcc_omega_max},
      {"mpcc.v_max", &mpcc_v_max},
      {"mpcc.qp_tol", &mpcc_qp_tol},
      {"planner.s_max", &planner_s_max},
      {"planner.replan_progress", &replan_progress},
      {"sim.goal_tolerance", &goal_tolerance},
      {"sim.timeout", &sim_timeout},
      {"sim.start_jitter", &start_jitter},
      {"sac.lr", &sac_lr},
      {"sac.gamma", &sac_gamma},
      {"sac.tau", &sac_tau},
      {"sac.a_max", &sac_a_max},
      {"reward.gamma_nu", &reward_gamma_nu},
      {"reward.gamma_b", &reward_gamma_b},
      {"reward.gamma_h", &reward_gamma_h},
      {"reward.gamma_z", &reward_gamma_z},
  };
  const std::map<std::string, int*> ints = {
      {"sensor.n_beams", &sensor_beams},   {"corridor.degree", &corridor_degree},
      {"mpcc.horizon", &mpcc_horizon},     {"mpcc.sqp_iters", &mpcc_sqp_iters},
      {"sac.hidden", &sac_hidden},         {"sac.batch_size", &sac_batch_size},
      {"sac.warmup", &sac_warmup},
  };
  if (auto it = doubles.find(key); it != doubles.end()) {
    *it->second = parse_as<double>(value, key);
    return;
  }
  if (auto it = ints.find(key); it != ints.end()) {
    *it->second = parse_as<int>(value, key);
    return;
  }
  if (key == "sac.buffer_capacity") {
    sac_buffer_capacity = parse_as<long>(value, key);
    return;
  }
  throw std::runtime_error("config: unknown key '" + key + "'");
}

void apply_config_line(Config& config, const std::string& line) {
  const size_t hash = line.find('#');
  std::istringstream ss(line.substr(0, hash));
  std::string key, value, rest;
  if (!(ss >> key)) return;  // blank or comment line
  if (!(ss >> value)) throw std::runtime_error("config: missing value for '" + key + "'");
  if (ss >> rest) throw std::runtime_error("config: trailing tokens on line '" + line + "'");
  config.set(key, value);
}

Config load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  Config config;
  std::string line;
  while (std::getline(in, line)) apply_config_line(config, line);
  return config;
}

ClfParams Config::clf_params() const {
  ClfParams p;
  p.lambda_c = clf_lambda_c;
  p.lambda_l = clf_lambda_l;
  p.psi = clf_psi;
  return p;
}

CbfParams Config::cbf_params() const {
  CbfParams p;
  p.alpha_upper = alpha0;
  p.alpha_lower = alpha0;
  p.lambda = cbf_lambda;
  p.r_o = robot_radius;
  p.alpha_min = alpha_min;
  p.alpha_max = alpha_max;
  return p;
}

MpccConfig Config::mpcc_config() const {
  MpccConfig c;
  c.horizon = mpcc_horizon;
  c.dt = mpcc_dt;
  c.q_c = mpcc_q_c;
  c.q_l = mpcc_q_l;
  c.q_nu = mpcc_q_nu;
  c.slack_weight = mpcc_slack_weight;
  c.nu_max = mpcc_nu_max;
  c.nudot_max = mpcc_nudot_max;
  c.a_max = mpcc_a_max;
  c.omega_max = mpcc_omega_max;
  c.v_min = 0.0;
  c.v_max = mpcc_v_max;
  c.sqp_iters = mpcc_sqp_iters;
  c.qp_tol = mpcc_qp_tol;
  return c;
}

SacConfig Config::sac_config(uint64_t seed) const {
  SacConfig c;
  c.hidden = sac_hidden;
  c.lr = sac_lr;
  c.gamma = sac_gamma;
  c.tau = sac_tau;
  c.batch_size = sac_batch_size;
  c.buffer_capacity = static_cast<size_t>(sac_buffer_capacity);
  c.a_max = sac_a_max;
  c.warmup_transitions = sac_warmup;
  c.seed = seed;
  return c;
}

RewardWeights Config::reward_weights() const {
  RewardWeights w;
  w.gamma_nu = reward_gamma_nu;
  w.gamma_b = reward_gamma_b;
  w.gamma_h = reward_gamma_h;
  w.gamma_z = reward_gamma_z;
  return w;
}

}  // namespace cmpcc
