#ifndef SILEM_ENVS_HPP_
#define SILEM_ENVS_HPP_

#include <Eigen/Dense>
#include <string>
#include <variant>
#include <vector>

#include "silem/rng.hpp"

namespace silem {

enum class BodyKind { kLinkArm, kStiltWalker };

// Planar torque-controlled arm. Forward kinematics only; scaling every link
// length by lambda scales the end effector by exactly lambda at matched joint
// angles, which is the affine-mismatch ground truth the transform must learn.
struct LinkArmSpec {
  std::vector<double> link_lengths{1.0, 1.0};
  double joint_damping = 0.5;
  double torque_limit = 1.0;
  double dt = 0.05;
  int episode_len = 200;
  Eigen::Vector2d target{1.5, 1.0};

  int dof() const { return static_cast<int>(link_lengths.size()); }
  double reach() const;
  void validate() const;
  // Scales link lengths and target together; the task stays body-relative.
  LinkArmSpec scaled(double lambda) const;
};

// Cart on a stilt: thrust drives the base horizontally against a drag that
// grows with leg extension, so the optimal extension is pinned at zero and
// a stilt-length change is a pure bias shift of the head-height feature.
struct StiltWalkerSpec {
  double stilt_length = 0.6;
  double mass = 1.0;
  double damping = 0.8;
  double target_speed = 1.5;
  double dt = 0.05;
  int episode_len = 300;

  void validate() const;
};

using EnvSpec = std::variant<LinkArmSpec, StiltWalkerSpec>;

// LinkArm layout: [angles(dof), angular velocities(dof)].
// StiltWalker layout: [base_x, velocity, extension, extension_rate].
struct EnvState {
  BodyKind kind = BodyKind::kLinkArm;
  Eigen::VectorXd q;
  int t = 0;
};

struct StepResult {
  EnvState state;
  double gt_reward = 0.0;
  bool done = false;
};

int state_dim(const EnvSpec& spec);
int action_dim(const EnvSpec& spec);
int episode_len(const EnvSpec& spec);
BodyKind body_kind(const EnvSpec& spec);
std::string body_name(const EnvSpec& spec);

EnvState reset(const EnvSpec& spec, uint64_t seed);
StepResult step(const EnvSpec& spec, const EnvState& state, const Eigen::VectorXd& action);

// What the policy sees. LinkArm: the full state. StiltWalker: everything but
// the base position, which is unbounded and irrelevant to the dynamics.
int policy_obs_dim(const EnvSpec& spec);
Eigen::VectorXd policy_obs(const EnvSpec& spec, const EnvState& state);

Eigen::Vector2d end_effector(const LinkArmSpec& spec, const EnvState& state);

// Stationary Gaussian AR(1) feature stream with an optional known affine
// distortion, for RL-free discriminator and transform tests.
struct SyntheticFeatureProcess {
  Eigen::VectorXd mean;
  double coupling = 0.8;     // |coupling| < 1
  double noise_scale = 0.3;
  Eigen::VectorXd diag_scale;  // m*, empty = identity
  Eigen::VectorXd offset;      // c*, empty = zero

  int dim() const { return static_cast<int>(mean.size()); }
  void validate() const;
};

std::vector<Eigen::VectorXd> sample_synthetic(const SyntheticFeatureProcess& process,
                                              int horizon, uint64_t seed);

}  // namespace silem

#endif  // SILEM_ENVS_HPP_
