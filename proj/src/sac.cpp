#include "cmpcc/sac.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <unordered_set>

namespace cmpcc {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;
constexpr double kTargetEntropy = -static_cast<double>(SacAction::kDim);

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

// log(1 - tanh(z)^2) without catastrophic cancellation.
double log_one_minus_tanh2(double z) {
  return 2.0 * (std::log(2.0) - z - softplus(-2.0 * z));
}

double draw_normal(std::mt19937_64& rng) {
  const double u1 = ((rng() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
  const double u2 = (rng() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

void write_u32(std::ostream& out, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

void write_f64(std::ostream& out, double d) {
  uint64_t bits;
  std::memcpy(&bits, &d, 8);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(b, 8);
}

double read_f64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

template <typename Derived>
void write_matrix(std::ostream& out, const Eigen::MatrixBase<Derived>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) write_f64(out, m(r, c));
  }
}

template <typename Derived>
void read_matrix(std::istream& in, Eigen::MatrixBase<Derived>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = read_f64(in);
  }
}

}  // namespace

Eigen::VectorXd SacObservation::to_vector() const {
  Eigen::VectorXd v(kDim);
  v << theta, this->v, nu, d_upper, d_lower, h_upper, h_lower, alpha_upper, alpha_lower, z_flag;
  return v;
}

ReplayBuffer::ReplayBuffer(size_t capacity) : ring_(capacity) {
  if (capacity == 0) throw std::invalid_argument("ReplayBuffer: zero capacity");
}

void ReplayBuffer::push(Transition t) {
  ring_[next_] = std::move(t);
  next_ = (next_ + 1) % ring_.size();
  if (next_ == 0) full_ = true;
}

std::vector<size_t> ReplayBuffer::sample_indices(int batch, std::mt19937_64& rng) const {
  const size_t n = size();
  if (static_cast<size_t>(batch) > n) {
    throw std::invalid_argument("ReplayBuffer: batch larger than contents");
  }
  std::vector<size_t> out;
  out.reserve(batch);
  std::unordered_set<size_t> seen;
  while (out.size() < static_cast<size_t>(batch)) {
    const size_t i = rng() % n;
    if (seen.insert(i).second) out.push_back(i);
  }
  return out;
}

double sac_reward(const SacObservation& obs, const SacAction& action,
                  const SacObservation& next, const RewardWeights& weights, double nu_max,
                  double alpha_min, double alpha_max) {
  const double mid = 0.5 * (alpha_min + alpha_max);
  const double span = alpha_max - alpha_min;
  const double cand[2] = {obs.alpha_upper + action.delta_alpha_upper,
                          obs.alpha_lower + action.delta_alpha_lower};
  double b = 0.0;
  for (double a : cand) {
    const double dev = (a - mid) / span;
    b += dev * dev;
    if (a < alpha_min || a > alpha_max) b += weights.boundary_penalty;
  }
  const double c = std::min(next.h_upper, next.h_lower) < 0.0 ? weights.collision_penalty : 0.0;
  const double progress = nu_max > 0.0 ? 1.0 - next.nu / nu_max : 0.0;
  return -weights.gamma_nu * progress - weights.gamma_b * b - weights.gamma_h * c -
         weights.gamma_z * next.z_flag;
}

std::pair<double, double> apply_action(double alpha_upper, double alpha_lower,
                                       const SacAction& action, double alpha_min,
                                       double alpha_max) {
  return {std::clamp(alpha_upper + action.delta_alpha_upper, alpha_min, alpha_max),
          std::clamp(alpha_lower + action.delta_alpha_lower, alpha_min, alpha_max)};
}

Mlp::Mlp(int in, int hidden, int out)
    : W1(Eigen::MatrixXd::Zero(hidden, in)),
      W2(Eigen::MatrixXd::Zero(hidden, hidden)),
      W3(Eigen::MatrixXd::Zero(out, hidden)),
      b1(Eigen::VectorXd::Zero(hidden)),
      b2(Eigen::VectorXd::Zero(hidden)),
      b3(Eigen::VectorXd::Zero(out)) {}

void Mlp::init_xavier(std::mt19937_64& rng) {
  auto fill = [&rng](Eigen::MatrixXd& w) {
    const double a = std::sqrt(6.0 / (w.rows() + w.cols()));
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        const double u = (rng() >> 11) * 0x1.0p-53;  // [0, 1)
        w(i, j) = a * (2.0 * u - 1.0);
      }
    }
  };
  fill(W1);
  fill(W2);
  fill(W3);
  b1.setZero();
  b2.setZero();
  b3.setZero();
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Cache* cache) const {
  const Eigen::MatrixXd a1 = ((W1 * x).colwise() + b1).array().tanh();
  const Eigen::MatrixXd a2 = ((W2 * a1).colwise() + b2).array().tanh();
  Eigen::MatrixXd out = (W3 * a2).colwise() + b3;
  if (cache) {
    cache->x = x;
    cache->a1 = a1;
    cache->a2 = a2;
    cache->out = out;
  }
  return out;
}

void Mlp::Grads::set_zero(const Mlp& net) {
  W1 = Eigen::MatrixXd::Zero(net.W1.rows(), net.W1.cols());
  W2 = Eigen::MatrixXd::Zero(net.W2.rows(), net.W2.cols());
  W3 = Eigen::MatrixXd::Zero(net.W3.rows(), net.W3.cols());
  b1 = Eigen::VectorXd::Zero(net.b1.size());
  b2 = Eigen::VectorXd::Zero(net.b2.size());
  b3 = Eigen::VectorXd::Zero(net.b3.size());
}

void Mlp::Grads::scale(double f) {
  W1 *= f;
  W2 *= f;
  W3 *= f;
  b1 *= f;
  b2 *= f;
  b3 *= f;
}

Eigen::MatrixXd Mlp::backward(const Cache& cache, const Eigen::MatrixXd& dout,
                              Grads* grads) const {
  const Eigen::MatrixXd da2 = W3.transpose() * dout;
  const Eigen::MatrixXd dz2 =
      da2.array() * (1.0 - cache.a2.array() * cache.a2.array());
  const Eigen::MatrixXd da1 = W2.transpose() * dz2;
  const Eigen::MatrixXd dz1 =
      da1.array() * (1.0 - cache.a1.array() * cache.a1.array());
  if (grads) {
    grads->W3 += dout * cache.a2.transpose();
    grads->b3 += dout.rowwise().sum();
    grads->W2 += dz2 * cache.a1.transpose();
    grads->b2 += dz2.rowwise().sum();
    grads->W1 += dz1 * cache.x.transpose();
    grads->b1 += dz1.rowwise().sum();
  }
  return W1.transpose() * dz1;
}

bool SacLosses::finite() const {
  return std::isfinite(q1) && std::isfinite(q2) && std::isfinite(policy) &&
         std::isfinite(temperature) && std::isfinite(beta);
}

SacAgent::SacAgent(const SacConfig& config)
    : actor(SacObservation::kDim, config.hidden, 2 * SacAction::kDim),
      q1(SacObservation::kDim + SacAction::kDim, config.hidden, 1),
      q2(SacObservation::kDim + SacAction::kDim, config.hidden, 1),
      q1_target(SacObservation::kDim + SacAction::kDim, config.hidden, 1),
      q2_target(SacObservation::kDim + SacAction::kDim, config.hidden, 1),
      config_(config),
      log_beta_(std::log(config.init_beta)),
      rng_(config.seed ^ 0x5ac5ac5acULL) {
  actor.init_xavier(rng_);
  q1.init_xavier(rng_);
  q2.init_xavier(rng_);
  q1_target = q1;
  q2_target = q2;
  actor_opt_.init(actor);
  q1_opt_.init(q1);
  q2_opt_.init(q2);
}

SacAgent::PolicyForward SacAgent::policy_forward(const Eigen::MatrixXd& obs,
                                                 const Eigen::MatrixXd& noise) const {
  PolicyForward pf;
  const Eigen::MatrixXd out = actor.forward(obs, &pf.cache);
  const int B = static_cast<int>(obs.cols());
  pf.mean = out.topRows(SacAction::kDim);
  pf.log_std = out.bottomRows(SacAction::kDim)
                   .array()
                   .min(config_.log_std_max)
                   .max(config_.log_std_min);
  const Eigen::MatrixXd sigma = pf.log_std.array().exp();
  pf.z = pf.mean + (sigma.array() * noise.array()).matrix();
  pf.actions = config_.a_max * pf.z.array().tanh();
  pf.logp = Eigen::VectorXd::Zero(B);
  for (int j = 0; j < B; ++j) {
    double lp = 0.0;
    for (int k = 0; k < SacAction::kDim; ++k) {
      lp += -pf.log_std(k, j) - 0.5 * noise(k, j) * noise(k, j) - 0.5 * kLog2Pi;
      lp -= std::log(config_.a_max) + log_one_minus_tanh2(pf.z(k, j));
    }
    pf.logp(j) = lp;
  }
  return pf;
}

SacAction SacAgent::act(const SacObservation& obs, bool deterministic) {
  if (deterministic) return act_deterministic(obs);
  return act_with_logprob(obs).first;
}

SacAction SacAgent::act_deterministic(const SacObservation& obs) const {
  const Eigen::MatrixXd out = actor.forward(obs.to_vector());
  return {config_.a_max * std::tanh(out(0, 0)), config_.a_max * std::tanh(out(1, 0))};
}

std::pair<SacAction, double> SacAgent::act_with_logprob(const SacObservation& obs) {
  Eigen::MatrixXd noise(SacAction::kDim, 1);
  for (int k = 0; k < SacAction::kDim; ++k) noise(k, 0) = draw_normal(rng_);
  const PolicyForward pf = policy_forward(obs.to_vector(), noise);
  return {{pf.actions(0, 0), pf.actions(1, 0)}, pf.logp(0)};
}

SacAgent::CriticStep SacAgent::critic_losses(const std::vector<const Transition*>& batch,
                                             const Eigen::MatrixXd& noise_next) const {
  const int B = static_cast<int>(batch.size());
  Eigen::MatrixXd X(SacObservation::kDim, B), Xn(SacObservation::kDim, B);
  Eigen::MatrixXd A(SacAction::kDim, B);
  Eigen::VectorXd r(B), d(B);
  for (int j = 0; j < B; ++j) {
    X.col(j) = batch[j]->s;
    Xn.col(j) = batch[j]->s_next;
    A.col(j) = batch[j]->a;
    r(j) = batch[j]->r;
    d(j) = batch[j]->done;
  }

  // Targets from the frozen critics and the current policy at s'.
  const PolicyForward pf = policy_forward(Xn, noise_next);
  Eigen::MatrixXd in_next(SacObservation::kDim + SacAction::kDim, B);
  in_next.topRows(SacObservation::kDim) = Xn;
  in_next.bottomRows(SacAction::kDim) = pf.actions;
  const Eigen::MatrixXd qt1 = q1_target.forward(in_next);
  const Eigen::MatrixXd qt2 = q2_target.forward(in_next);
  const double beta_now = std::exp(log_beta_);
  Eigen::VectorXd y(B);
  for (int j = 0; j < B; ++j) {
    const double qmin = std::min(qt1(0, j), qt2(0, j));
    y(j) = r(j) + config_.gamma * (1.0 - d(j)) * (qmin - beta_now * pf.logp(j));
  }

  Eigen::MatrixXd in(SacObservation::kDim + SacAction::kDim, B);
  in.topRows(SacObservation::kDim) = X;
  in.bottomRows(SacAction::kDim) = A;

  CriticStep step;
  step.g1.set_zero(q1);
  step.g2.set_zero(q2);
  Mlp::Cache c1, c2;
  const Eigen::MatrixXd v1 = q1.forward(in, &c1);
  const Eigen::MatrixXd v2 = q2.forward(in, &c2);
  const Eigen::RowVectorXd e1 = v1.row(0) - y.transpose();
  const Eigen::RowVectorXd e2 = v2.row(0) - y.transpose();
  step.loss1 = e1.squaredNorm() / B;
  step.loss2 = e2.squaredNorm() / B;
  q1.backward(c1, (2.0 / B) * e1, &step.g1);
  q2.backward(c2, (2.0 / B) * e2, &step.g2);
  return step;
}

SacAgent::PolicyStep SacAgent::policy_loss(const std::vector<const Transition*>& batch,
                                           const Eigen::MatrixXd& noise) const {
  const int B = static_cast<int>(batch.size());
  Eigen::MatrixXd X(SacObservation::kDim, B);
  for (int j = 0; j < B; ++j) X.col(j) = batch[j]->s;

  const PolicyForward pf = policy_forward(X, noise);
  Eigen::MatrixXd in(SacObservation::kDim + SacAction::kDim, B);
  in.topRows(SacObservation::kDim) = X;
  in.bottomRows(SacAction::kDim) = pf.actions;
  Mlp::Cache c1, c2;
  const Eigen::MatrixXd v1 = q1.forward(in, &c1);
  const Eigen::MatrixXd v2 = q2.forward(in, &c2);

  const double beta_now = std::exp(log_beta_);
  PolicyStep step;
  step.grads.set_zero(actor);
  Eigen::VectorXd qmin(B);
  for (int j = 0; j < B; ++j) qmin(j) = std::min(v1(0, j), v2(0, j));
  step.loss = (beta_now * pf.logp - qmin).mean();
  step.mean_logp = pf.logp.mean();

  // dL/da through the argmin critic of each sample.
  Eigen::MatrixXd pick1 = Eigen::MatrixXd::Zero(1, B), pick2 = Eigen::MatrixXd::Zero(1, B);
  for (int j = 0; j < B; ++j) {
    (v1(0, j) <= v2(0, j) ? pick1 : pick2)(0, j) = -1.0 / B;
  }
  Mlp::Grads scratch;
  scratch.set_zero(q1);
  const Eigen::MatrixXd din1 = q1.backward(c1, pick1, &scratch);
  scratch.set_zero(q2);
  const Eigen::MatrixXd din2 = q2.backward(c2, pick2, &scratch);
  const Eigen::MatrixXd da =
      din1.bottomRows(SacAction::kDim) + din2.bottomRows(SacAction::kDim);

  // Chain onto the (mean, log_std) heads through the reparameterized sample.
  const Eigen::MatrixXd tanh_z = pf.z.array().tanh();
  const Eigen::MatrixXd sech2 = 1.0 - tanh_z.array().square();
  const Eigen::MatrixXd sigma_eps = (pf.log_std.array().exp() * noise.array()).matrix();
  Eigen::MatrixXd dout(2 * SacAction::kDim, B);
  for (int j = 0; j < B; ++j) {
    for (int k = 0; k < SacAction::kDim; ++k) {
      const double dlogp_dz = 2.0 * tanh_z(k, j);
      const double da_dz = config_.a_max * sech2(k, j);
      const double dL_dz = (beta_now / B) * dlogp_dz + da(k, j) * da_dz;
      dout(k, j) = dL_dz;  // z depends on mean with unit slope
      const double dlogp_dlogstd = -1.0 / B * beta_now;  // direct -log_std term
      dout(SacAction::kDim + k, j) = dL_dz * sigma_eps(k, j) + dlogp_dlogstd;
    }
  }
  // Gradient vanishes where the raw log-std was clamped.
  const Eigen::MatrixXd raw = pf.cache.out.bottomRows(SacAction::kDim);
  for (int j = 0; j < B; ++j) {
    for (int k = 0; k < SacAction::kDim; ++k) {
      if (raw(k, j) <= config_.log_std_min || raw(k, j) >= config_.log_std_max) {
        dout(SacAction::kDim + k, j) = 0.0;
      }
    }
  }
  actor.backward(pf.cache, dout, &step.grads);
  return step;
}

double SacAgent::temperature_loss_grad(double mean_logp, double* loss) const {
  const double beta_now = std::exp(log_beta_);
  if (loss) *loss = -beta_now * (mean_logp + kTargetEntropy);
  // d/dlog_beta of -exp(log_beta) (logp + H*).
  return -beta_now * (mean_logp + kTargetEntropy);
}

void SacAgent::Adam::init(const Mlp& net) {
  m_w = {Eigen::MatrixXd::Zero(net.W1.rows(), net.W1.cols()),
         Eigen::MatrixXd::Zero(net.W2.rows(), net.W2.cols()),
         Eigen::MatrixXd::Zero(net.W3.rows(), net.W3.cols())};
  v_w = m_w;
  m_b = {Eigen::VectorXd::Zero(net.b1.size()), Eigen::VectorXd::Zero(net.b2.size()),
         Eigen::VectorXd::Zero(net.b3.size())};
  v_b = m_b;
  t = 0;
}

void SacAgent::Adam::step(Mlp& net, const Mlp::Grads& grads, double lr) {
  constexpr double kB1 = 0.9, kB2 = 0.999, kEps = 1e-8;
  ++t;
  const double c1 = 1.0 - std::pow(kB1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(kB2, static_cast<double>(t));
  Eigen::MatrixXd* ws[3] = {&net.W1, &net.W2, &net.W3};
  const Eigen::MatrixXd* gw[3] = {&grads.W1, &grads.W2, &grads.W3};
  Eigen::VectorXd* bs[3] = {&net.b1, &net.b2, &net.b3};
  const Eigen::VectorXd* gb[3] = {&grads.b1, &grads.b2, &grads.b3};
  for (int i = 0; i < 3; ++i) {
    m_w[i] = kB1 * m_w[i] + (1.0 - kB1) * *gw[i];
    v_w[i] = kB2 * v_w[i] + (1.0 - kB2) * gw[i]->array().square().matrix();
    ws[i]->array() -=
        lr * (m_w[i].array() / c1) / ((v_w[i].array() / c2).sqrt() + kEps);
    m_b[i] = kB1 * m_b[i] + (1.0 - kB1) * *gb[i];
    v_b[i] = kB2 * v_b[i] + (1.0 - kB2) * gb[i]->array().square().matrix();
    bs[i]->array() -=
        lr * (m_b[i].array() / c1) / ((v_b[i].array() / c2).sqrt() + kEps);
  }
}

SacLosses SacAgent::update(ReplayBuffer& buffer) {
  SacLosses losses;
  losses.beta = beta();
  const size_t need = std::max<size_t>(config_.batch_size, config_.warmup_transitions);
  if (buffer.size() < need) return losses;

  const std::vector<size_t> idx = buffer.sample_indices(config_.batch_size, rng_);
  std::vector<const Transition*> batch(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) batch[i] = &buffer.at(idx[i]);
  const int B = static_cast<int>(batch.size());

  Eigen::MatrixXd noise_next(SacAction::kDim, B), noise(SacAction::kDim, B);
  for (int j = 0; j < B; ++j) {
    for (int k = 0; k < SacAction::kDim; ++k) {
      noise_next(k, j) = draw_normal(rng_);
      noise(k, j) = draw_normal(rng_);
    }
  }

  const CriticStep cs = critic_losses(batch, noise_next);
  q1_opt_.step(q1, cs.g1, config_.lr);
  q2_opt_.step(q2, cs.g2, config_.lr);

  const PolicyStep ps = policy_loss(batch, noise);
  actor_opt_.step(actor, ps.grads, config_.lr);

  double temp_loss = 0.0;
  const double g_beta = temperature_loss_grad(ps.mean_logp, &temp_loss);
  {
    constexpr double kB1 = 0.9, kB2 = 0.999, kEps = 1e-8;
    ++beta_t_;
    beta_m_ = kB1 * beta_m_ + (1.0 - kB1) * g_beta;
    beta_v_ = kB2 * beta_v_ + (1.0 - kB2) * g_beta * g_beta;
    const double mhat = beta_m_ / (1.0 - std::pow(kB1, static_cast<double>(beta_t_)));
    const double vhat = beta_v_ / (1.0 - std::pow(kB2, static_cast<double>(beta_t_)));
    log_beta_ -= config_.lr * mhat / (std::sqrt(vhat) + kEps);
  }

  // Polyak averaging of the target critics.
  auto polyak = [this](Mlp& target, const Mlp& net) {
    const double tau = config_.tau;
    target.W1 = tau * net.W1 + (1.0 - tau) * target.W1;
    target.W2 = tau * net.W2 + (1.0 - tau) * target.W2;
    target.W3 = tau * net.W3 + (1.0 - tau) * target.W3;
    target.b1 = tau * net.b1 + (1.0 - tau) * target.b1;
    target.b2 = tau * net.b2 + (1.0 - tau) * target.b2;
    target.b3 = tau * net.b3 + (1.0 - tau) * target.b3;
  };
  polyak(q1_target, q1);
  polyak(q2_target, q2);

  ++seen_updates_;
  losses.q1 = cs.loss1;
  losses.q2 = cs.loss2;
  losses.policy = ps.loss;
  losses.temperature = temp_loss;
  losses.beta = beta();
  return losses;
}

void SacAgent::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("SacAgent::save: cannot open " + path);
  out.write("CMPCCSAC", 8);
  write_u32(out, 1);  // version
  write_u32(out, SacObservation::kDim);
  write_u32(out, SacAction::kDim);
  write_u32(out, static_cast<uint32_t>(config_.hidden));
  write_f64(out, config_.a_max);
  write_matrix(out, actor.W1);
  write_matrix(out, actor.b1);
  write_matrix(out, actor.W2);
  write_matrix(out, actor.b2);
  write_matrix(out, actor.W3);
  write_matrix(out, actor.b3);
}

SacAgent SacAgent::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("SacAgent::load: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (std::string(magic, 8) != "CMPCCSAC") {
    throw std::runtime_error("SacAgent::load: bad magic in " + path);
  }
  const uint32_t version = read_u32(in);
  if (version != 1) throw std::runtime_error("SacAgent::load: unsupported version");
  const uint32_t obs_dim = read_u32(in);
  const uint32_t act_dim = read_u32(in);
  const uint32_t hidden = read_u32(in);
  if (obs_dim != SacObservation::kDim || act_dim != SacAction::kDim) {
    throw std::runtime_error("SacAgent::load: topology mismatch");
  }
  SacConfig config;
  config.hidden = static_cast<int>(hidden);
  config.a_max = read_f64(in);
  SacAgent agent(config);
  read_matrix(in, agent.actor.W1);
  read_matrix(in, agent.actor.b1);
  read_matrix(in, agent.actor.W2);
  read_matrix(in, agent.actor.b2);
  read_matrix(in, agent.actor.W3);
  read_matrix(in, agent.actor.b3);
  if (!in) throw std::runtime_error("SacAgent::load: truncated file");
  return agent;
}

}  // namespace cmpcc
