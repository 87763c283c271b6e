#include "silem/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace silem {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274;  // 0.5*log(2*pi)
constexpr double kLogStdMin = -5.0;
constexpr double kLogStdMax = 2.0;

void check(bool ok, const std::string& msg) {
  if (!ok) throw std::runtime_error(msg);
}

Eigen::VectorXd clamp_log_std(Eigen::VectorXd v) {
  for (int i = 0; i < v.size(); ++i) v[i] = std::min(kLogStdMax, std::max(kLogStdMin, v[i]));
  return v;
}

double gaussian_logp(const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std,
                     const Eigen::VectorXd& action) {
  double lp = 0.0;
  for (int j = 0; j < mean.size(); ++j) {
    const double sigma = std::exp(log_std[j]);
    const double z = (action[j] - mean[j]) / sigma;
    lp += -0.5 * z * z - log_std[j] - kHalfLog2Pi;
  }
  return lp;
}

void shuffle_indices(std::vector<int>& idx, Rng& rng) {
  for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i)
    std::swap(idx[i], idx[rng.uniform_int(i + 1)]);
}

}  // namespace

void PpoConfig::validate() const {
  check(gamma > 0.0 && gamma <= 1.0 && lam > 0.0 && lam <= 1.0, "ppo: gamma and lam must be in (0, 1]");
  check(clip > 0.0, "ppo: clip must be positive");
  check(epochs >= 1 && minibatch >= 1 && steps_per_iter >= 1 && total_iters >= 1,
        "ppo: epochs/minibatch/steps/total_iters must be >= 1");
  check(learning_rate > 0.0 && value_coef >= 0.0 && kl_limit > 0.0,
        "ppo: learning_rate/value_coef/kl_limit out of range");
}

double PpoConfig::lr_at(int iter) const {
  const double f = 1.0 - static_cast<double>(iter) / static_cast<double>(total_iters);
  return learning_rate * std::max(0.0, f);
}

GaussianPolicy::GaussianPolicy(int obs_dim, int act_dim, const std::vector<int>& hidden,
                               double init_log_std, Rng& rng) {
  std::vector<int> sizes;
  sizes.push_back(obs_dim);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(act_dim);
  mean_net_ = Mlp::random(sizes, Head::kIdentity, rng);
  log_std_ = clamp_log_std(Eigen::VectorXd::Constant(act_dim, init_log_std));
  adam_ = AdamState(param_count(), 1e-3);
}

void GaussianPolicy::set_log_std(const Eigen::VectorXd& v) {
  check(v.size() == log_std_.size(), "policy: log_std dim mismatch");
  log_std_ = clamp_log_std(v);
}

Eigen::VectorXd GaussianPolicy::mean_action(const Eigen::VectorXd& obs) const {
  return mean_net_.forward(obs);
}

Eigen::VectorXd GaussianPolicy::sample_action(const Eigen::VectorXd& obs, Rng& rng) const {
  Eigen::VectorXd a = mean_net_.forward(obs);
  for (int j = 0; j < a.size(); ++j) a[j] += std::exp(log_std_[j]) * rng.normal();
  return a;
}

double GaussianPolicy::log_prob(const Eigen::VectorXd& obs, const Eigen::VectorXd& action) const {
  check(action.size() == act_dim(), "policy: action dim mismatch");
  return gaussian_logp(mean_net_.forward(obs), log_std_, action);
}

Eigen::VectorXd GaussianPolicy::log_probs(const Eigen::MatrixXd& means,
                                          const Eigen::MatrixXd& actions) const {
  check(means.rows() == act_dim() && actions.rows() == act_dim() && means.cols() == actions.cols(),
        "policy: batched log_prob dim mismatch");
  Eigen::VectorXd lp(means.cols());
  for (int i = 0; i < means.cols(); ++i)
    lp[i] = gaussian_logp(means.col(i), log_std_, actions.col(i));
  return lp;
}

Eigen::VectorXd GaussianPolicy::params_flat() const {
  Eigen::VectorXd flat(param_count());
  flat.head(mean_net_.param_count()) = mean_net_.params_flat();
  flat.tail(act_dim()) = log_std_;
  return flat;
}

void GaussianPolicy::set_params_flat(const Eigen::VectorXd& flat) {
  check(flat.size() == param_count(), "policy: flat param size mismatch");
  mean_net_.set_params_flat(flat.head(mean_net_.param_count()));
  log_std_ = clamp_log_std(flat.tail(act_dim()));
}

void GaussianPolicy::save(const std::string& path) const {
  std::ofstream out(path);
  check(out.good(), "policy save: cannot open " + path);
  mean_net_.save(out);
  char buf[64];
  out << "logstd:";
  for (int j = 0; j < log_std_.size(); ++j) {
    std::snprintf(buf, sizeof buf, " %.17g", log_std_[j]);
    out << buf;
  }
  out << "\n";
  check(out.good(), "policy save: write failed for " + path);
}

GaussianPolicy GaussianPolicy::load(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "policy load: cannot open " + path);
  GaussianPolicy p;
  p.mean_net_ = Mlp::load(in);
  std::string tag;
  in >> tag;
  check(in.good() && tag == "logstd:", path + ": missing logstd: line after network parameters");
  p.log_std_.resize(p.mean_net_.output_dim());
  for (int j = 0; j < p.log_std_.size(); ++j)
    if (!(in >> p.log_std_[j]))
      throw std::runtime_error(path + ": bad logstd value " + std::to_string(j));
  p.log_std_ = clamp_log_std(p.log_std_);
  p.adam_ = AdamState(p.param_count(), 1e-3);
  return p;
}

ValueNet::ValueNet(int obs_dim, const std::vector<int>& hidden, Rng& rng) {
  std::vector<int> sizes;
  sizes.push_back(obs_dim);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  net = Mlp::random(sizes, Head::kIdentity, rng);
  adam = AdamState(net.param_count(), 1e-3);
}

std::pair<std::vector<double>, std::vector<double>> compute_gae(
    const std::vector<double>& rewards, const std::vector<double>& values,
    const std::vector<uint8_t>& dones, double bootstrap, double gamma, double lam) {
  const size_t n = rewards.size();
  check(n >= 1 && values.size() == n && dones.size() == n,
        "gae: rewards/values/dones must be nonempty and equal length");
  check(std::isfinite(bootstrap), "gae: non-finite bootstrap value");
  for (size_t t = 0; t < n; ++t)
    check(std::isfinite(rewards[t]) && std::isfinite(values[t]),
          "gae: non-finite input at step " + std::to_string(t));

  std::vector<double> adv(n), ret(n);
  double next_adv = 0.0;
  for (size_t i = n; i-- > 0;) {
    const double not_done = dones[i] ? 0.0 : 1.0;
    const double next_value = (i + 1 < n) ? values[i + 1] : bootstrap;
    const double delta = rewards[i] + gamma * next_value * not_done - values[i];
    next_adv = delta + gamma * lam * not_done * next_adv;
    adv[i] = next_adv;
    ret[i] = adv[i] + values[i];
  }
  return {std::move(adv), std::move(ret)};
}

PpoDiagnostics ppo_update(GaussianPolicy& policy, ValueNet& value_net, RolloutBuffer& buffer,
                          const PpoConfig& config, int iter, Rng& rng) {
  config.validate();
  const int n = buffer.size();
  check(n >= 1, "ppo: empty buffer");
  check(static_cast<int>(buffer.actions.size()) == n &&
            static_cast<int>(buffer.log_probs.size()) == n &&
            static_cast<int>(buffer.values.size()) == n &&
            static_cast<int>(buffer.rewards.size()) == n &&
            static_cast<int>(buffer.dones.size()) == n,
        "ppo: ragged buffer");

  auto [adv, ret] = compute_gae(buffer.rewards, buffer.values, buffer.dones,
                                buffer.bootstrap_value, config.gamma, config.lam);
  buffer.returns = ret;
  double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / n);
  if (sd > 1e-12)
    for (double& a : adv) a = (a - mean) / sd;
  buffer.advantages = adv;

  const int obs_dim = policy.obs_dim();
  const int act_dim = policy.act_dim();
  Eigen::MatrixXd obs(obs_dim, n), act(act_dim, n);
  Eigen::VectorXd old_lp(n), advantages(n), returns(n);
  for (int i = 0; i < n; ++i) {
    obs.col(i) = buffer.obs[i];
    act.col(i) = buffer.actions[i];
    old_lp[i] = buffer.log_probs[i];
    advantages[i] = adv[i];
    returns[i] = ret[i];
  }

  const double lr = config.lr_at(iter);
  policy.adam().learning_rate = lr;
  value_net.adam.learning_rate = lr;

  PpoDiagnostics diag;
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  double pol_loss_sum = 0.0, val_loss_sum = 0.0;
  int minibatches = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_indices(order, rng);
    for (int off = 0; off < n; off += config.minibatch) {
      const int mb = std::min(config.minibatch, n - off);
      Eigen::MatrixXd mobs(obs_dim, mb), mact(act_dim, mb);
      Eigen::VectorXd mold(mb), madv(mb), mret(mb);
      for (int c = 0; c < mb; ++c) {
        const int i = order[off + c];
        mobs.col(c) = obs.col(i);
        mact.col(c) = act.col(i);
        mold[c] = old_lp[i];
        madv[c] = advantages[i];
        mret[c] = returns[i];
      }

      MlpCache pcache;
      const Eigen::MatrixXd means = policy.mean_net().forward(mobs, pcache);
      const Eigen::VectorXd lp = policy.log_probs(means, mact);
      const Eigen::VectorXd sigma = policy.log_std().array().exp();

      double pol_loss = 0.0;
      Eigen::VectorXd dlogp(mb);  // dL/dlogp per sample
      for (int c = 0; c < mb; ++c) {
        const double rho = std::exp(lp[c] - mold[c]);
        const double clipped = std::min(1.0 + config.clip, std::max(1.0 - config.clip, rho));
        const double surr1 = rho * madv[c];
        const double surr2 = clipped * madv[c];
        pol_loss += -std::min(surr1, surr2);
        const bool in_band = rho > 1.0 - config.clip && rho < 1.0 + config.clip;
        dlogp[c] = (surr1 <= surr2 || in_band) ? -(rho * madv[c]) / mb : 0.0;
      }
      pol_loss /= mb;

      // dlogp/dmean = (a - mu)/sigma^2; dlogp/dlog_std = ((a - mu)/sigma)^2 - 1.
      Eigen::MatrixXd dmu(act_dim, mb);
      Eigen::VectorXd dls = Eigen::VectorXd::Zero(act_dim);
      for (int c = 0; c < mb; ++c) {
        const Eigen::VectorXd diff = mact.col(c) - means.col(c);
        dmu.col(c) = dlogp[c] * diff.cwiseQuotient(sigma.cwiseProduct(sigma));
        dls += dlogp[c] * (diff.cwiseQuotient(sigma).array().square() - 1.0).matrix();
      }
      MlpGrad pgrad = policy.mean_net().zero_grad();
      policy.mean_net().backward(pcache, dmu, &pgrad);
      Eigen::VectorXd pflat(policy.param_count());
      pflat.head(policy.mean_net().param_count()) = pgrad.flat();
      pflat.tail(act_dim) = dls;
      Eigen::VectorXd pparams = policy.params_flat();
      policy.adam().step(pparams, pflat);
      policy.set_params_flat(pparams);

      MlpCache vcache;
      const Eigen::MatrixXd v = value_net.net.forward(mobs, vcache);
      const Eigen::VectorXd verr = v.row(0).transpose() - mret;
      const double val_loss = verr.squaredNorm() / mb;
      MlpGrad vgrad = value_net.net.zero_grad();
      value_net.net.backward(vcache, (config.value_coef * 2.0 / mb) * verr.transpose(), &vgrad);
      Eigen::VectorXd vparams = value_net.net.params_flat();
      Eigen::VectorXd vflat = vgrad.flat();
      value_net.adam.step(vparams, vflat);
      value_net.net.set_params_flat(vparams);

      pol_loss_sum += pol_loss;
      val_loss_sum += val_loss;
      ++minibatches;
    }

    const Eigen::MatrixXd all_means = policy.mean_net().forward(obs);
    diag.kl = (old_lp - policy.log_probs(all_means, act)).mean();
    if (diag.kl > config.kl_limit) {
      diag.aborted = true;
      break;
    }
  }

  diag.policy_loss = pol_loss_sum / std::max(1, minibatches);
  diag.value_loss = val_loss_sum / std::max(1, minibatches);
  return diag;
}

Rollout collect_rollout(const EnvSpec& env, const GaussianPolicy& policy, const ValueNet& value_net,
                        int steps, uint64_t seed) {
  check(steps >= 1, "rollout: steps must be >= 1");
  check(policy.obs_dim() == policy_obs_dim(env) && policy.act_dim() == action_dim(env),
        "rollout: policy dims do not match env");
  Rollout out;
  out.buffer.obs.reserve(steps);
  out.states.reserve(steps);

  Rng act_rng(Rng::mix(seed, 0x616374ULL));
  const Eigen::VectorXd sigma = policy.log_std().array().exp();
  int episode = 0;
  EnvState s = reset(env, Rng::mix(seed, static_cast<uint64_t>(episode)));
  bool last_done = false;

  for (int t = 0; t < steps; ++t) {
    const Eigen::VectorXd o = policy_obs(env, s);
    const Eigen::VectorXd mu = policy.mean_action(o);
    Eigen::VectorXd a = mu;
    for (int j = 0; j < a.size(); ++j) a[j] += sigma[j] * act_rng.normal();

    out.states.push_back(s);
    out.buffer.obs.push_back(o);
    out.buffer.actions.push_back(a);
    out.buffer.log_probs.push_back(gaussian_logp(mu, policy.log_std(), a));
    out.buffer.values.push_back(value_net.value(o));

    const StepResult r = step(env, s, a);
    out.buffer.rewards.push_back(r.gt_reward);
    out.buffer.dones.push_back(r.done ? 1 : 0);
    last_done = r.done;
    if (r.done) {
      ++episode;
      s = reset(env, Rng::mix(seed, static_cast<uint64_t>(episode)));
    } else {
      s = r.state;
    }
  }
  out.buffer.bootstrap_value = last_done ? 0.0 : value_net.value(policy_obs(env, s));
  return out;
}

double evaluate_policy(const EnvSpec& env, const GaussianPolicy& policy, int episodes,
                       uint64_t seed, double* min_return, double* max_return) {
  check(episodes >= 1, "eval: episodes must be >= 1");
  double total = 0.0, lo = 0.0, hi = 0.0;
  for (int e = 0; e < episodes; ++e) {
    EnvState s = reset(env, Rng::mix(Rng::mix(seed, 0x6576616cULL), static_cast<uint64_t>(e)));
    double ep = 0.0;
    while (true) {
      const StepResult r = step(env, s, policy.mean_action(policy_obs(env, s)));
      ep += r.gt_reward;
      if (r.done) break;
      s = r.state;
    }
    total += ep;
    lo = (e == 0) ? ep : std::min(lo, ep);
    hi = (e == 0) ? ep : std::max(hi, ep);
  }
  if (min_return) *min_return = lo;
  if (max_return) *max_return = hi;
  return total / episodes;
}

}  // namespace silem
