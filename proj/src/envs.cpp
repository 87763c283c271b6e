#include "silem/envs.hpp"

#include <cmath>
#include <stdexcept>

namespace silem {

namespace {

void check(bool ok, const std::string& msg) {
  if (!ok) throw std::runtime_error(msg);
}

double wrap_angle(double a) {
  // wrap to (-pi, pi]
  a = std::fmod(a, 2.0 * M_PI);
  if (a <= -M_PI) a += 2.0 * M_PI;
  if (a > M_PI) a -= 2.0 * M_PI;
  return a;
}

double clamp(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

}  // namespace

double LinkArmSpec::reach() const {
  double r = 0;
  for (double l : link_lengths) r += l;
  return r;
}

void LinkArmSpec::validate() const {
  check(!link_lengths.empty(), "linkarm: need at least one link");
  for (double l : link_lengths) check(l > 0, "linkarm: link lengths must be positive");
  check(joint_damping > 0 && torque_limit > 0 && dt > 0, "linkarm: damping/torque/dt must be positive");
  check(episode_len >= 1, "linkarm: episode_len must be >= 1");
}

LinkArmSpec LinkArmSpec::scaled(double lambda) const {
  check(lambda > 0, "linkarm: scale must be positive");
  LinkArmSpec s = *this;
  for (double& l : s.link_lengths) l *= lambda;
  s.target *= lambda;
  return s;
}

void StiltWalkerSpec::validate() const {
  check(stilt_length > 0 && mass > 0 && damping > 0 && dt > 0,
        "stiltwalker: stilt/mass/damping/dt must be positive");
  check(episode_len >= 1, "stiltwalker: episode_len must be >= 1");
}

int state_dim(const EnvSpec& spec) {
  if (const auto* arm = std::get_if<LinkArmSpec>(&spec)) return 2 * arm->dof();
  return 4;
}

int action_dim(const EnvSpec& spec) {
  if (const auto* arm = std::get_if<LinkArmSpec>(&spec)) return arm->dof();
  return 2;
}

int episode_len(const EnvSpec& spec) {
  return std::visit([](const auto& s) { return s.episode_len; }, spec);
}

BodyKind body_kind(const EnvSpec& spec) {
  return std::holds_alternative<LinkArmSpec>(spec) ? BodyKind::kLinkArm : BodyKind::kStiltWalker;
}

std::string body_name(const EnvSpec& spec) {
  return std::holds_alternative<LinkArmSpec>(spec) ? "linkarm" : "stiltwalker";
}

EnvState reset(const EnvSpec& spec, uint64_t seed) {
  EnvState s;
  s.t = 0;
  if (const auto* arm = std::get_if<LinkArmSpec>(&spec)) {
    arm->validate();
    s.kind = BodyKind::kLinkArm;
    s.q = Eigen::VectorXd::Zero(2 * arm->dof());
    Rng rng(Rng::mix(seed, 0x656e76ULL));
    for (int i = 0; i < arm->dof(); ++i) s.q[i] = rng.uniform(-0.1, 0.1);
  } else {
    const auto& walker = std::get<StiltWalkerSpec>(spec);
    walker.validate();
    s.kind = BodyKind::kStiltWalker;
    s.q = Eigen::VectorXd::Zero(4);
    s.q[2] = 0.25;  // extension
  }
  return s;
}

StepResult step(const EnvSpec& spec, const EnvState& state, const Eigen::VectorXd& action) {
  check(state.q.allFinite(), "env step: non-finite state (dynamics divergence)");
  StepResult out;
  out.state = state;
  out.state.t = state.t + 1;

  if (const auto* arm = std::get_if<LinkArmSpec>(&spec)) {
    check(state.kind == BodyKind::kLinkArm, "env step: state is not a linkarm state");
    const int n = arm->dof();
    check(action.size() == n, "env step: action length " + std::to_string(action.size()) +
                                  ", expected " + std::to_string(n));
    for (int i = 0; i < n; ++i) {
      const double torque = clamp(action[i], -arm->torque_limit, arm->torque_limit);
      double vel = state.q[n + i];
      vel += arm->dt * (torque - arm->joint_damping * vel);
      double ang = wrap_angle(state.q[i] + arm->dt * vel);
      out.state.q[i] = ang;
      out.state.q[n + i] = vel;
    }
    const Eigen::Vector2d ee = end_effector(*arm, out.state);
    out.gt_reward = std::exp(-4.0 * (ee - arm->target).squaredNorm());
    out.done = out.state.t >= arm->episode_len;
  } else {
    const auto& walker = std::get<StiltWalkerSpec>(spec);
    check(state.kind == BodyKind::kStiltWalker, "env step: state is not a stiltwalker state");
    check(action.size() == 2, "env step: action length " + std::to_string(action.size()) +
                                  ", expected 2");
    const double thrust = clamp(action[0], -1.0, 1.0);
    const double rate = clamp(action[1], -1.0, 1.0);
    const double ext = state.q[2];
    double vel = state.q[1];
    // drag grows with extension, so raising the leg costs top speed
    vel += walker.dt * (thrust - walker.damping * (1.0 + ext) * vel) / walker.mass;
    out.state.q[0] = state.q[0] + walker.dt * vel;
    out.state.q[1] = vel;
    out.state.q[2] = clamp(ext + walker.dt * rate, 0.0, 0.5);
    out.state.q[3] = rate;
    const double dv = vel - walker.target_speed;
    const bool upright = out.state.q[2] >= 0.0 && out.state.q[2] <= 0.5;
    out.gt_reward = std::exp(-4.0 * dv * dv) * (upright ? 1.0 : 0.0);
    out.done = out.state.t >= walker.episode_len;
  }
  check(out.state.q.allFinite(), "env step: non-finite state (dynamics divergence)");
  return out;
}

int policy_obs_dim(const EnvSpec& spec) {
  if (const auto* arm = std::get_if<LinkArmSpec>(&spec)) return 2 * arm->dof();
  return 3;
}

Eigen::VectorXd policy_obs(const EnvSpec& spec, const EnvState& state) {
  if (std::holds_alternative<LinkArmSpec>(spec)) {
    check(state.kind == BodyKind::kLinkArm, "policy_obs: state is not a linkarm state");
    return state.q;
  }
  check(state.kind == BodyKind::kStiltWalker, "policy_obs: state is not a stiltwalker state");
  return state.q.tail(3);
}

Eigen::Vector2d end_effector(const LinkArmSpec& spec, const EnvState& state) {
  check(state.kind == BodyKind::kLinkArm, "end_effector: state is not a linkarm state");
  Eigen::Vector2d p(0.0, 0.0);
  double cum = 0.0;
  for (int i = 0; i < spec.dof(); ++i) {
    cum += state.q[i];
    p.x() += spec.link_lengths[i] * std::cos(cum);
    p.y() += spec.link_lengths[i] * std::sin(cum);
  }
  return p;
}

void SyntheticFeatureProcess::validate() const {
  check(mean.size() >= 1, "synthetic: feature dim must be >= 1");
  check(std::abs(coupling) < 1.0, "synthetic: |coupling| must be < 1 for stationarity");
  check(noise_scale >= 0.0, "synthetic: noise scale must be >= 0");
  if (diag_scale.size()) check(diag_scale.size() == mean.size(), "synthetic: diag_scale dim mismatch");
  if (offset.size()) check(offset.size() == mean.size(), "synthetic: offset dim mismatch");
}

std::vector<Eigen::VectorXd> sample_synthetic(const SyntheticFeatureProcess& process,
                                              int horizon, uint64_t seed) {
  process.validate();
  check(horizon >= 1, "synthetic: horizon must be >= 1");
  const int k = process.dim();
  Rng rng(Rng::mix(seed, 0x73796eULL));
  const double stat_sd = process.noise_scale / std::sqrt(1.0 - process.coupling * process.coupling);

  auto emit = [&](const Eigen::VectorXd& z) {
    Eigen::VectorXd f = z;
    if (process.diag_scale.size()) f = process.diag_scale.cwiseProduct(f);
    if (process.offset.size()) f += process.offset;
    return f;
  };

  std::vector<Eigen::VectorXd> out;
  out.reserve(horizon);
  Eigen::VectorXd z = process.mean;
  for (int i = 0; i < k; ++i) z[i] += stat_sd * rng.normal();
  out.push_back(emit(z));
  for (int t = 1; t < horizon; ++t) {
    Eigen::VectorXd next = process.mean + process.coupling * (z - process.mean);
    for (int i = 0; i < k; ++i) next[i] += process.noise_scale * rng.normal();
    z = next;
    out.push_back(emit(z));
  }
  return out;
}

}  // namespace silem
