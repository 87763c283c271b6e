#ifndef SILEM_PPO_HPP_
#define SILEM_PPO_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "silem/adam.hpp"
#include "silem/envs.hpp"
#include "silem/mlp.hpp"

namespace silem {

struct PpoConfig {
  double gamma = 0.99;
  double lam = 0.95;
  double clip = 0.2;
  int epochs = 10;  // N_P
  int minibatch = 64;
  int steps_per_iter = 2048;
  double learning_rate = 2e-4;  // linearly decayed to 0 over total_iters
  int total_iters = 300;
  double value_coef = 0.5;
  double kl_limit = 1.0;  // divergence guard

  void validate() const;
  double lr_at(int iter) const;  // learning_rate * (1 - iter/total_iters)
};

// Diagonal Gaussian policy: tanh MLP mean, learnable per-action log-std
// clamped to [-5, 2].
class GaussianPolicy {
 public:
  GaussianPolicy(int obs_dim, int act_dim, const std::vector<int>& hidden, double init_log_std,
                 Rng& rng);

  int obs_dim() const { return mean_net_.input_dim(); }
  int act_dim() const { return mean_net_.output_dim(); }
  const Mlp& mean_net() const { return mean_net_; }
  Mlp& mean_net() { return mean_net_; }
  const Eigen::VectorXd& log_std() const { return log_std_; }
  void set_log_std(const Eigen::VectorXd& v);
  AdamState& adam() { return adam_; }

  Eigen::VectorXd mean_action(const Eigen::VectorXd& obs) const;
  Eigen::VectorXd sample_action(const Eigen::VectorXd& obs, Rng& rng) const;
  double log_prob(const Eigen::VectorXd& obs, const Eigen::VectorXd& action) const;
  // Batched log-probs for precomputed means (columns are samples).
  Eigen::VectorXd log_probs(const Eigen::MatrixXd& means, const Eigen::MatrixXd& actions) const;

  // Parameter layout for the shared Adam state: [mean net flat; log_std].
  int param_count() const { return mean_net_.param_count() + act_dim(); }
  Eigen::VectorXd params_flat() const;
  void set_params_flat(const Eigen::VectorXd& flat);

  // Network checkpoint format plus one trailing "logstd:" line.
  void save(const std::string& path) const;
  static GaussianPolicy load(const std::string& path);

 private:
  GaussianPolicy() = default;
  Mlp mean_net_;
  Eigen::VectorXd log_std_;
  AdamState adam_;
};

struct ValueNet {
  Mlp net;  // obs_dim -> 1, identity head
  AdamState adam;

  ValueNet(int obs_dim, const std::vector<int>& hidden, Rng& rng);
  double value(const Eigen::VectorXd& obs) const { return net.forward(obs)[0]; }
};

// One iteration's worth of on-policy experience. Rewards hold ground-truth
// values during expert training and discriminator values during imitation.
struct RolloutBuffer {
  std::vector<Eigen::VectorXd> obs;
  std::vector<Eigen::VectorXd> actions;
  std::vector<double> log_probs;
  std::vector<double> values;
  std::vector<double> rewards;
  std::vector<uint8_t> dones;
  double bootstrap_value = 0.0;

  std::vector<double> advantages;
  std::vector<double> returns;

  int size() const { return static_cast<int>(obs.size()); }
};

// delta_t = r_t + gamma*V_{t+1}*(1-done_t) - V_t;
// A_t = delta_t + gamma*lam*(1-done_t)*A_{t+1}; returns = A + V.
std::pair<std::vector<double>, std::vector<double>> compute_gae(
    const std::vector<double>& rewards, const std::vector<double>& values,
    const std::vector<uint8_t>& dones, double bootstrap, double gamma, double lam);

struct PpoDiagnostics {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double kl = 0.0;
  bool aborted = false;  // divergence guard fired; remaining epochs skipped
};

// Clipped-surrogate PPO over shuffled minibatches; advantages normalized to
// zero mean / unit variance across the buffer first. `iter` selects the
// learning rate on the linear-decay schedule.
PpoDiagnostics ppo_update(GaussianPolicy& policy, ValueNet& value_net, RolloutBuffer& buffer,
                          const PpoConfig& config, int iter, Rng& rng);

struct Rollout {
  RolloutBuffer buffer;
  std::vector<EnvState> states;  // state at each step, pre-action
};

// Collects exactly `steps` transitions, resetting on episode ends. Episode
// reset seeds derive from `seed` and the episode index.
Rollout collect_rollout(const EnvSpec& env, const GaussianPolicy& policy, const ValueNet& value_net,
                        int steps, uint64_t seed);

// Mean ground-truth return over `episodes` deterministic (mean-action)
// episodes.
double evaluate_policy(const EnvSpec& env, const GaussianPolicy& policy, int episodes,
                       uint64_t seed, double* min_return = nullptr, double* max_return = nullptr);

}  // namespace silem

#endif  // SILEM_PPO_HPP_
