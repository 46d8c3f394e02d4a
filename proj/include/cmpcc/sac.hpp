#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace cmpcc {

/// SAC policy observation, matching the printed state ordering
/// [theta v | nu | d_up d_lo | h_up h_lo | alpha_up alpha_lo | Z].
/// The absolute position is deliberately absent.
struct SacObservation {
  double theta = 0.0;
  double v = 0.0;
  double nu = 0.0;
  double d_upper = 0.0;
  double d_lower = 0.0;
  double h_upper = 0.0;
  double h_lower = 0.0;
  double alpha_upper = 0.0;
  double alpha_lower = 0.0;
  double z_flag = 0.0;

  static constexpr int kDim = 10;
  Eigen::VectorXd to_vector() const;
};

struct SacAction {
  double delta_alpha_upper = 0.0;
  double delta_alpha_lower = 0.0;

  static constexpr int kDim = 2;
  Eigen::Vector2d to_vector() const { return {delta_alpha_upper, delta_alpha_lower}; }
};

struct Transition {
  Eigen::VectorXd s;
  Eigen::Vector2d a;
  double r = 0.0;
  Eigen::VectorXd s_next;
  double done = 0.0;  // 1 on terminal states (collision or goal)
};

/// FIFO ring with uniform without-replacement batch sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(size_t capacity);

  void push(Transition t);
  size_t size() const { return full_ ? ring_.size() : next_; }
  size_t capacity() const { return ring_.size(); }
  const Transition& at(size_t i) const { return ring_[i]; }

  std::vector<size_t> sample_indices(int batch, std::mt19937_64& rng) const;

 private:
  std::vector<Transition> ring_;
  size_t next_ = 0;
  bool full_ = false;
};

struct RewardWeights {
  double gamma_nu = 1.0;
  double gamma_b = 0.5;
  double gamma_h = 10.0;
  double gamma_z = 5.0;
  double boundary_penalty = 10.0;   // added per component leaving the alpha interval
  double collision_penalty = 10.0;  // added when min(h) < 0
};

/// R = -gamma_nu (1 - nu/nu+) - gamma_b b(alpha, a) - gamma_h c(h) - gamma_z Z.
/// The alpha penalty b sees the unclamped candidate alpha + a (intent), while
/// progress, barrier, and solver-failure terms read the post-transition
/// observation.
double sac_reward(const SacObservation& obs, const SacAction& action,
                  const SacObservation& next, const RewardWeights& weights, double nu_max,
                  double alpha_min, double alpha_max);

/// alpha + delta clamped componentwise into [alpha_min, alpha_max].
std::pair<double, double> apply_action(double alpha_upper, double alpha_lower,
                                       const SacAction& action, double alpha_min,
                                       double alpha_max);

/// Two-hidden-layer tanh network with explicit reverse-mode gradients.
/// Samples are matrix columns.
class Mlp {
 public:
  Mlp() = default;
  Mlp(int in, int hidden, int out);

  void init_xavier(std::mt19937_64& rng);

  struct Cache {
    Eigen::MatrixXd x, a1, a2, out;
  };
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache* cache = nullptr) const;

  struct Grads {
    Eigen::MatrixXd W1, W2, W3;
    Eigen::VectorXd b1, b2, b3;
    void set_zero(const Mlp& net);
    void scale(double f);
  };
  /// Accumulates parameter gradients for dL/dout and returns dL/dx.
  Eigen::MatrixXd backward(const Cache& cache, const Eigen::MatrixXd& dout, Grads* grads) const;

  int input_dim() const { return static_cast<int>(W1.cols()); }
  int hidden_dim() const { return static_cast<int>(W1.rows()); }
  int output_dim() const { return static_cast<int>(W3.rows()); }

  Eigen::MatrixXd W1, W2, W3;
  Eigen::VectorXd b1, b2, b3;
};

struct SacConfig {
  int hidden = 64;
  double lr = 3e-4;
  double gamma = 0.99;
  double tau = 0.005;
  int batch_size = 256;
  size_t buffer_capacity = 100000;
  double a_max = 0.02;  // per-step alpha adjustment bound
  double log_std_min = -5.0;
  double log_std_max = 2.0;
  double init_beta = 0.2;
  int warmup_transitions = 1000;
  int update_every = 1;
  uint64_t seed = 0;
};

struct SacLosses {
  double q1 = 0.0;
  double q2 = 0.0;
  double policy = 0.0;
  double temperature = 0.0;
  double beta = 0.0;
  bool finite() const;
};

/// Soft actor-critic with twin critics, Polyak targets, and automatic
/// temperature tuning toward entropy -dim(action).
class SacAgent {
 public:
  explicit SacAgent(const SacConfig& config);

  SacAction act(const SacObservation& obs, bool deterministic);
  /// Squashed mean, no sampling; safe to call concurrently on a frozen agent.
  SacAction act_deterministic(const SacObservation& obs) const;
  /// Stochastic action with its squashed-Gaussian log-probability.
  std::pair<SacAction, double> act_with_logprob(const SacObservation& obs);

  /// One gradient step on a batch from the buffer (no-op below warmup).
  SacLosses update(ReplayBuffer& buffer);

  double beta() const { return std::exp(log_beta_); }
  const SacConfig& config() const { return config_; }
  std::mt19937_64& rng() { return rng_; }

  void save(const std::string& path) const;
  static SacAgent load(const std::string& path);

  // Loss/gradient kernels with explicit exploration noise; update() feeds
  // them internally drawn noise and the finite-difference suite feeds frozen
  // noise. noise matrices are kDim x batch.
  struct CriticStep {
    double loss1 = 0.0, loss2 = 0.0;
    Mlp::Grads g1, g2;
  };
  CriticStep critic_losses(const std::vector<const Transition*>& batch,
                           const Eigen::MatrixXd& noise_next) const;
  struct PolicyStep {
    double loss = 0.0;
    double mean_logp = 0.0;
    Mlp::Grads grads;
  };
  PolicyStep policy_loss(const std::vector<const Transition*>& batch,
                         const Eigen::MatrixXd& noise) const;
  double temperature_loss_grad(double mean_logp, double* loss) const;

  Mlp actor;  // outputs [mean(2); raw log_std(2)]
  Mlp q1, q2, q1_target, q2_target;

 private:
  struct PolicyForward {
    Eigen::MatrixXd actions;  // kDim x B, squashed and scaled
    Eigen::VectorXd logp;     // per sample
    Mlp::Cache cache;
    Eigen::MatrixXd mean, log_std, z;
  };
  PolicyForward policy_forward(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& noise) const;

  struct Adam {
    std::vector<Eigen::MatrixXd> m_w, v_w;
    std::vector<Eigen::VectorXd> m_b, v_b;
    long t = 0;
    void init(const Mlp& net);
    void step(Mlp& net, const Mlp::Grads& grads, double lr);
  };

  SacConfig config_;
  double log_beta_;
  Adam actor_opt_, q1_opt_, q2_opt_;
  double beta_m_ = 0.0, beta_v_ = 0.0;
  long beta_t_ = 0;
  std::mt19937_64 rng_;
  long seen_updates_ = 0;
};

}  // namespace cmpcc
