#ifndef SILEM_AIL_HPP_
#define SILEM_AIL_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "silem/data_io.hpp"
#include "silem/envs.hpp"
#include "silem/features.hpp"
#include "silem/mlp.hpp"
#include "silem/ppo.hpp"
#include "silem/transform.hpp"

namespace silem {

// GAIfO-style discriminator over observation tuples: sigmoid-headed tanh MLP
// trained to score expert tuples 1 and learner tuples 0.
class Discriminator {
 public:
  Discriminator(int input_dim, const std::vector<int>& hidden, double learning_rate, int minibatch,
                Rng& rng);

  int input_dim() const { return net_.input_dim(); }
  const Mlp& net() const { return net_; }
  Mlp& net() { return net_; }

  // One Adam step on -(E_expert log D + E_learner log(1-D)) over equal-size
  // minibatches resampled with replacement from each side. Returns the loss.
  double update(const std::vector<ObservationTuple>& expert_tuples,
                const std::vector<ObservationTuple>& learner_tuples, Rng& rng);

  // Clamped D output in (0,1); the per-step imitation reward.
  double imitation_reward(const ObservationTuple& tuple) const;
  Eigen::VectorXd imitation_rewards(const std::vector<ObservationTuple>& tuples) const;

 private:
  Mlp net_;
  AdamState adam_;
  int minibatch_;
};

enum class SilemMode { kSilem, kSilemMinus };
enum class TransformKind { kAffine, kMlp };

struct SilemConfig {
  SilemMode mode = SilemMode::kSilem;
  TransformKind transform_kind = TransformKind::kAffine;
  int m = 4;    // frames per tuple
  int n_d = 5;  // discriminator updates per iteration
  int n_g = 5;  // transform updates per iteration
  double transform_lr = 1e-3;
  double transform_lr_decay = 1.0;
  double w_d = 1.0;
  double w_b = 1.0;
  std::vector<int> disc_hidden{128, 128, 128};
  double disc_lr = 1e-3;
  int disc_minibatch = 256;
  std::vector<int> policy_hidden{64, 64};
  double init_log_std = -0.5;
  PpoConfig ppo;  // ppo.total_iters is the outer iteration budget
  EnvSpec env;    // learner body
  FeatureRecipe features = FeatureRecipe::kEndEffector;
  uint64_t seed = 0;

  void validate() const;
};

struct IterationRecord {
  int iter = 0;
  double gt_return = 0.0;        // mean ground-truth return over completed episodes
  double disc_reward_mean = 0.0; // mean per-step discriminator reward
  double disc_return = 0.0;      // mean per-episode discriminator return
  Eigen::VectorXd a_diag;        // transform snapshot after the iteration
  Eigen::VectorXd b;
  double disc_loss = 0.0;
  double transform_loss = 0.0;
  double ppo_kl = 0.0;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const IterationRecord& r);
void write_metrics_csv(const std::vector<IterationRecord>& records, const std::string& path);

struct SilemResult {
  std::vector<IterationRecord> records;
  GaussianPolicy policy;
  ValueNet value;
  SequentialAffineTransform transform;  // identity unless mode=silem with the affine kind
  std::optional<TransformAblationMlp> mlp_transform;
  Discriminator discriminator;
};

// Runs Algorithm-1 training against the demo set. Per iteration: collect
// rollouts; build tuples per episode segment; keep the untransformed copy;
// transform (silem mode); N_D discriminator updates; N_G transform updates
// against the frozen discriminator; relabel rewards from the transformed
// tuples; one PPO update.
SilemResult silem_train(const SilemConfig& config, const DemoSet& demos);
SilemResult silem_train(const SilemConfig& config, const std::string& demo_path);

// (mean - random) / (expert - random).
double normalized_score(double mean_return, double random_return, double expert_return);

SilemConfig silem_config_from(const ExperimentConfig& config);

// PPO on the ground-truth reward, the expert used for demo collection and
// score normalization baselines.
struct ExpertTrainResult {
  GaussianPolicy policy;       // best evaluated checkpoint, not the last iterate
  ValueNet value;
  double expert_return = 0.0;  // deterministic eval of that checkpoint
  double random_return = 0.0;  // uniform-random actions baseline
  int iterations_run = 0;
};

// Trains up to config.total_iters iterations, evaluating every 10, stopping
// early once the deterministic evaluation reaches target_return (pass +inf
// to disable). Returns the best-scoring snapshot: once converged, normalized
// advantages amplify rollout noise and the last iterate can wander far below
// the peak.
ExpertTrainResult train_expert(const EnvSpec& env, const PpoConfig& config,
                               const std::vector<int>& policy_hidden, double init_log_std,
                               int eval_episodes, uint64_t seed, double target_return);

double random_policy_return(const EnvSpec& env, int episodes, uint64_t seed);

}  // namespace silem

#endif  // SILEM_AIL_HPP_
