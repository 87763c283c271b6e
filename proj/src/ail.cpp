#include "silem/ail.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace silem {

namespace {

void check(bool ok, const std::string& msg) {
  if (!ok) throw std::runtime_error(msg);
}

// Learner tuples grouped by episode segment so windows never straddle
// episode boundaries. Tuple starts are global step indices.
struct TupleBatch {
  std::vector<ObservationTuple> tuples;
  std::vector<std::pair<int, int>> segments;    // [begin, end) step ranges
  std::vector<std::pair<int, int>> seg_tuples;  // [begin, end) into tuples
};

TupleBatch build_tuples(const std::vector<Eigen::VectorXd>& feats,
                        const std::vector<uint8_t>& dones, int m) {
  TupleBatch out;
  const int n = static_cast<int>(feats.size());
  int begin = 0;
  for (int i = 0; i < n; ++i) {
    if (!dones[i] && i + 1 < n) continue;
    const int end = i + 1;
    std::vector<Eigen::VectorXd> slice(feats.begin() + begin, feats.begin() + end);
    auto tuples = make_tuples(slice, m);
    const int tb = static_cast<int>(out.tuples.size());
    for (auto& t : tuples) {
      t.start += begin;
      out.tuples.push_back(std::move(t));
    }
    out.segments.emplace_back(begin, end);
    out.seg_tuples.emplace_back(tb, static_cast<int>(out.tuples.size()));
    begin = end;
  }
  return out;
}

// Tuple starting at step t rewards step t; the last m-1 steps of a segment
// reuse the final tuple's reward; tuple-less segments fall back to 0.5.
std::vector<double> assign_rewards(const TupleBatch& tb, const Eigen::VectorXd& tuple_rewards,
                                   int n) {
  std::vector<double> rewards(n, 0.5);
  for (size_t s = 0; s < tb.segments.size(); ++s) {
    const auto [sb, se] = tb.segments[s];
    const auto [t0, t1] = tb.seg_tuples[s];
    const int ntup = t1 - t0;
    if (ntup == 0) continue;
    for (int j = 0; j < se - sb; ++j) rewards[sb + j] = tuple_rewards[t0 + std::min(j, ntup - 1)];
  }
  return rewards;
}

// Mean per-episode sum over completed episodes; if the buffer holds no
// complete episode, the total is scaled up to episode length instead.
double mean_episode_return(const std::vector<double>& rewards, const std::vector<uint8_t>& dones,
                           int ep_len) {
  double total = 0.0, ep = 0.0;
  int episodes = 0;
  double all = 0.0;
  for (size_t i = 0; i < rewards.size(); ++i) {
    ep += rewards[i];
    all += rewards[i];
    if (dones[i]) {
      total += ep;
      ep = 0.0;
      ++episodes;
    }
  }
  if (episodes == 0) return all * ep_len / static_cast<double>(rewards.size());
  return total / episodes;
}

}  // namespace

Discriminator::Discriminator(int input_dim, const std::vector<int>& hidden, double learning_rate,
                             int minibatch, Rng& rng)
    : minibatch_(minibatch) {
  check(input_dim >= 1, "discriminator: input dim must be >= 1");
  check(minibatch >= 1, "discriminator: minibatch must be >= 1");
  std::vector<int> sizes;
  sizes.push_back(input_dim);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  net_ = Mlp::random(sizes, Head::kSigmoid, rng);
  adam_ = AdamState(net_.param_count(), learning_rate);
}

double Discriminator::update(const std::vector<ObservationTuple>& expert_tuples,
                             const std::vector<ObservationTuple>& learner_tuples, Rng& rng) {
  check(!expert_tuples.empty() && !learner_tuples.empty(),
        "disc update: expert and learner batches must be nonempty");
  const int mk = net_.input_dim();
  const int mb = minibatch_;

  Eigen::MatrixXd x(mk, 2 * mb);
  for (int c = 0; c < mb; ++c) {
    const auto& t = expert_tuples[rng.uniform_int(static_cast<int>(expert_tuples.size()))];
    check(t.values.size() == mk, "disc update: expert tuple dim mismatch");
    x.col(c) = t.values;
  }
  for (int c = 0; c < mb; ++c) {
    const auto& t = learner_tuples[rng.uniform_int(static_cast<int>(learner_tuples.size()))];
    check(t.values.size() == mk, "disc update: learner tuple dim mismatch");
    x.col(mb + c) = t.values;
  }

  MlpCache cache;
  const Eigen::MatrixXd y = net_.forward(x, cache);
  double loss = 0.0;
  Eigen::MatrixXd upstream(1, 2 * mb);
  for (int c = 0; c < mb; ++c) {
    loss += -std::log(y(0, c)) - std::log(1.0 - y(0, mb + c));
    upstream(0, c) = -1.0 / (mb * y(0, c));
    upstream(0, mb + c) = 1.0 / (mb * (1.0 - y(0, mb + c)));
  }
  loss /= mb;
  check(std::isfinite(loss), "disc update: non-finite loss");

  MlpGrad grad = net_.zero_grad();
  net_.backward(cache, upstream, &grad);
  Eigen::VectorXd params = net_.params_flat();
  Eigen::VectorXd flat = grad.flat();
  adam_.step(params, flat);
  net_.set_params_flat(params);
  return loss;
}

double Discriminator::imitation_reward(const ObservationTuple& tuple) const {
  check(tuple.values.size() == net_.input_dim(), "imitation reward: tuple dim mismatch");
  return net_.forward(tuple.values)[0];
}

Eigen::VectorXd Discriminator::imitation_rewards(const std::vector<ObservationTuple>& tuples) const {
  Eigen::MatrixXd x(net_.input_dim(), tuples.size());
  for (size_t i = 0; i < tuples.size(); ++i) {
    check(tuples[i].values.size() == net_.input_dim(), "imitation reward: tuple dim mismatch");
    x.col(static_cast<int>(i)) = tuples[i].values;
  }
  return net_.forward(x).row(0).transpose();
}

void SilemConfig::validate() const {
  check(m >= 1, "silem: m must be >= 1");
  check(n_d >= 0 && n_g >= 0, "silem: n_d and n_g must be >= 0");
  check(transform_lr > 0.0, "silem: transform lr must be positive");
  check(transform_lr_decay > 0.0 && transform_lr_decay <= 1.0,
        "silem: transform lr decay must be in (0, 1]");
  check(w_d >= 0.0 && w_b >= 0.0, "silem: w_d and w_b must be >= 0");
  check(disc_minibatch >= 1, "silem: disc minibatch must be >= 1");
  check(features != FeatureRecipe::kIdentity,
        "silem: identity features are for synthetic data, not environment training");
  ppo.validate();
}

std::string metrics_csv_header() {
  return "iter,gt_return,disc_reward_mean,disc_return,transform_a_min,transform_a_max,"
         "transform_b_maxabs,disc_loss,transform_loss,ppo_kl";
}

std::string metrics_csv_row(const IterationRecord& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", r.iter, r.gt_return,
                r.disc_reward_mean, r.disc_return, r.a_diag.minCoeff(), r.a_diag.maxCoeff(),
                r.b.cwiseAbs().maxCoeff(), r.disc_loss, r.transform_loss, r.ppo_kl);
  return buf;
}

void write_metrics_csv(const std::vector<IterationRecord>& records, const std::string& path) {
  std::ofstream out(path);
  check(out.good(), "metrics: cannot open " + path);
  out << metrics_csv_header() << "\n";
  for (const auto& r : records) out << metrics_csv_row(r) << "\n";
  check(out.good(), "metrics: write failed for " + path);
}

SilemResult silem_train(const SilemConfig& config, const DemoSet& demos) {
  config.validate();
  demos.validate();

  FeatureExtractor extractor(config.features, config.env);
  check(extractor.dim() == demos.k,
        "demo feature dim k=" + std::to_string(demos.k) + " does not match learner extractor k=" +
            std::to_string(extractor.dim()));
  const std::vector<ObservationTuple> expert_tuples = demos.tuples(config.m);
  check(!expert_tuples.empty(), "demo episodes are shorter than m frames; no expert tuples");

  const int k = extractor.dim();
  Rng disc_rng(Rng::mix(config.seed, 1));
  Rng pol_rng(Rng::mix(config.seed, 2));
  Rng val_rng(Rng::mix(config.seed, 3));
  Rng tf_rng(Rng::mix(config.seed, 4));
  Rng loop_rng(Rng::mix(config.seed, 5));

  Discriminator disc(config.m * k, config.disc_hidden, config.disc_lr, config.disc_minibatch,
                     disc_rng);
  GaussianPolicy policy(policy_obs_dim(config.env), action_dim(config.env), config.policy_hidden,
                        config.init_log_std, pol_rng);
  ValueNet value(policy_obs_dim(config.env), config.policy_hidden, val_rng);
  SequentialAffineTransform transform(k, config.transform_lr, config.transform_lr_decay,
                                      config.w_d, config.w_b);
  const bool use_mlp =
      config.mode == SilemMode::kSilem && config.transform_kind == TransformKind::kMlp;
  std::optional<TransformAblationMlp> mlp_transform;
  if (use_mlp)
    mlp_transform.emplace(k, config.transform_lr, config.transform_lr_decay, config.w_d, tf_rng);

  std::vector<IterationRecord> records;
  records.reserve(config.ppo.total_iters);

  for (int iter = 0; iter < config.ppo.total_iters; ++iter) {
    const uint64_t rollout_seed = Rng::mix(Rng::mix(config.seed, 0x726f6cULL),
                                           static_cast<uint64_t>(iter));
    Rollout ro = collect_rollout(config.env, policy, value, config.ppo.steps_per_iter,
                                 rollout_seed);
    const int n = ro.buffer.size();

    std::vector<Eigen::VectorXd> feats(n);
    for (int i = 0; i < n; ++i) feats[i] = extractor.extract(ro.states[i]);

    TupleBatch tau_c = build_tuples(feats, ro.buffer.dones, config.m);  // line 7

    std::vector<ObservationTuple> tau;  // line 8
    if (config.mode == SilemMode::kSilem) {
      tau.reserve(tau_c.tuples.size());
      for (const auto& t : tau_c.tuples)
        tau.push_back(use_mlp ? mlp_transform->apply_tuple(t) : transform.apply_tuple(t));
    } else {
      tau = tau_c.tuples;
    }

    double disc_loss = 0.0;  // line 9
    if (!tau.empty()) {
      for (int u = 0; u < config.n_d; ++u) disc_loss += disc.update(expert_tuples, tau, loop_rng);
      if (config.n_d > 0) disc_loss /= config.n_d;
    }

    double transform_loss = 0.0;  // line 10
    if (config.mode == SilemMode::kSilem && !tau_c.tuples.empty() && config.n_g > 0) {
      for (int u = 0; u < config.n_g; ++u)
        transform_loss += use_mlp ? mlp_transform->update(disc.net(), tau_c.tuples)
                                  : transform.update(disc.net(), tau_c.tuples);
      transform_loss /= config.n_g;
    }

    const Eigen::VectorXd tuple_rewards =
        tau.empty() ? Eigen::VectorXd() : disc.imitation_rewards(tau);
    const std::vector<double> disc_rewards = assign_rewards(tau_c, tuple_rewards, n);

    IterationRecord rec;
    rec.iter = iter;
    rec.gt_return = mean_episode_return(ro.buffer.rewards, ro.buffer.dones,
                                        episode_len(config.env));
    rec.disc_reward_mean = std::accumulate(disc_rewards.begin(), disc_rewards.end(), 0.0) / n;
    rec.disc_return = mean_episode_return(disc_rewards, ro.buffer.dones, episode_len(config.env));

    ro.buffer.rewards = disc_rewards;  // line 11
    const PpoDiagnostics pd = ppo_update(policy, value, ro.buffer, config.ppo, iter, loop_rng);

    rec.a_diag = transform.a_diag();
    rec.b = transform.b();
    rec.disc_loss = disc_loss;
    rec.transform_loss = transform_loss;
    rec.ppo_kl = pd.kl;
    records.push_back(std::move(rec));
  }

  return SilemResult{std::move(records),   std::move(policy),        std::move(value),
                     std::move(transform), std::move(mlp_transform), std::move(disc)};
}

SilemResult silem_train(const SilemConfig& config, const std::string& demo_path) {
  check(!demo_path.empty(), "silem: no demo file configured");
  return silem_train(config, load_demo(demo_path));
}

double normalized_score(double mean_return, double random_return, double expert_return) {
  check(expert_return > random_return,
        "normalized score: expert return must exceed random return");
  return (mean_return - random_return) / (expert_return - random_return);
}

SilemConfig silem_config_from(const ExperimentConfig& config) {
  SilemConfig c;
  const std::string mode = config.get("mode");
  if (mode == "silem")
    c.mode = SilemMode::kSilem;
  else if (mode == "silem_minus")
    c.mode = SilemMode::kSilemMinus;
  else
    throw std::runtime_error("config: unknown mode '" + mode + "'");
  const std::string kind = config.get("transform");
  if (kind == "affine")
    c.transform_kind = TransformKind::kAffine;
  else if (kind == "mlp")
    c.transform_kind = TransformKind::kMlp;
  else
    throw std::runtime_error("config: unknown transform '" + kind + "'");
  c.m = config.get_int("m");
  c.n_d = config.get_int("n_d");
  c.n_g = config.get_int("n_g");
  c.transform_lr = config.get_double("transform_lr");
  c.transform_lr_decay = config.get_double("transform_decay");
  c.w_d = config.get_double("w_d");
  c.w_b = config.get_double("w_b");
  c.disc_hidden = config.get_int_list("disc_hidden");
  c.disc_lr = config.get_double("disc_lr");
  c.disc_minibatch = config.get_int("disc_minibatch");
  c.policy_hidden = config.get_int_list("policy_hidden");
  c.init_log_std = config.get_double("init_log_std");
  c.ppo = ppo_from_config(config);
  c.env = env_from_config(config);
  c.features = features_from_config(config);
  c.seed = config.get_u64("seed");
  c.validate();
  return c;
}

ExpertTrainResult train_expert(const EnvSpec& env, const PpoConfig& config,
                               const std::vector<int>& policy_hidden, double init_log_std,
                               int eval_episodes, uint64_t seed, double target_return) {
  config.validate();
  check(eval_episodes >= 1, "train_expert: eval_episodes must be >= 1");
  Rng pol_rng(Rng::mix(seed, 2));
  Rng val_rng(Rng::mix(seed, 3));
  Rng loop_rng(Rng::mix(seed, 5));

  GaussianPolicy policy(policy_obs_dim(env), action_dim(env), policy_hidden, init_log_std,
                        pol_rng);
  ValueNet value(policy_obs_dim(env), policy_hidden, val_rng);

  int iters_run = 0;
  double best_return = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_policy, best_value;
  for (int iter = 0; iter < config.total_iters; ++iter) {
    Rollout ro = collect_rollout(env, policy, value, config.steps_per_iter,
                                 Rng::mix(Rng::mix(seed, 0x726f6cULL), static_cast<uint64_t>(iter)));
    ppo_update(policy, value, ro.buffer, config, iter, loop_rng);
    ++iters_run;
    if ((iter + 1) % 10 == 0 || iter + 1 == config.total_iters) {
      const double ev = evaluate_policy(env, policy, eval_episodes, Rng::mix(seed, 0x657870ULL));
      if (ev > best_return) {
        best_return = ev;
        best_policy = policy.params_flat();
        best_value = value.net.params_flat();
      }
      if (ev >= target_return) break;
    }
  }
  if (best_policy.size() > 0) {
    policy.set_params_flat(best_policy);
    value.net.set_params_flat(best_value);
  }

  ExpertTrainResult out{std::move(policy), std::move(value), 0.0, 0.0, iters_run};
  out.expert_return = best_policy.size() > 0
                          ? best_return
                          : evaluate_policy(env, out.policy, eval_episodes,
                                            Rng::mix(seed, 0x657870ULL));
  out.random_return = random_policy_return(env, eval_episodes, Rng::mix(seed, 0x726e64ULL));
  return out;
}

double random_policy_return(const EnvSpec& env, int episodes, uint64_t seed) {
  check(episodes >= 1, "random return: episodes must be >= 1");
  Rng rng(Rng::mix(seed, 0x756e69ULL));
  double limit = 1.0;
  if (const auto* arm = std::get_if<LinkArmSpec>(&env)) limit = arm->torque_limit;
  const int adim = action_dim(env);
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    EnvState s = reset(env, Rng::mix(seed, static_cast<uint64_t>(e)));
    while (true) {
      Eigen::VectorXd a(adim);
      for (int j = 0; j < adim; ++j) a[j] = rng.uniform(-limit, limit);
      const StepResult r = step(env, s, a);
      total += r.gt_reward;
      if (r.done) break;
      s = r.state;
    }
  }
  return total / episodes;
}

}  // namespace silem
