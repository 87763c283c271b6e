#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "silem/ail.hpp"

namespace fs = std::filesystem;
using namespace silem;

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

ExperimentConfig resolve_config(const std::string& config_path,
                                const std::vector<std::string>& sets, bool seed_given,
                                uint64_t seed) {
  ExperimentConfig cfg =
      config_path.empty() ? ExperimentConfig() : ExperimentConfig::from_file(config_path);
  for (const auto& kv : sets) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (seed_given) cfg.set("seed", std::to_string(seed));
  return cfg;
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out.good()) throw std::runtime_error("cannot open " + path);
  out << content;
  if (!out.good()) throw std::runtime_error("write failed for " + path);
}

void prepare_out(const ExperimentConfig& cfg, const std::string& out) {
  fs::create_directories(out);
  write_text(out + "/resolved-config", cfg.canonical());
}

std::string require_path(const ExperimentConfig& cfg, const std::string& key,
                         const std::string& what) {
  const std::string path = cfg.get(key);
  if (path.empty())
    throw std::runtime_error("missing " + what + " (config key '" + key + "')");
  if (!fs::exists(path)) throw std::runtime_error(what + " not found: " + path);
  return path;
}

int cmd_train_expert(const ExperimentConfig& cfg, const std::string& out) {
  prepare_out(cfg, out);
  const EnvSpec env = env_from_config(cfg);
  const PpoConfig ppo = ppo_from_config(cfg);
  const ExpertTrainResult res =
      train_expert(env, ppo, cfg.get_int_list("policy_hidden"), cfg.get_double("init_log_std"),
                   cfg.get_int("eval_episodes"), cfg.get_u64("seed"),
                   std::numeric_limits<double>::infinity());
  res.policy.save(out + "/policy.net");

  std::string report;
  report += "body=" + body_name(env) + "\n";
  report += "iterations=" + std::to_string(res.iterations_run) + "\n";
  report += "eval_episodes=" + cfg.get("eval_episodes") + "\n";
  report += "expert_mean_return=" + fmt(res.expert_return) + "\n";
  report += "random_mean_return=" + fmt(res.random_return) + "\n";
  write_text(out + "/report.txt", report);
  std::cout << report;
  return 0;
}

int cmd_collect(const ExperimentConfig& cfg, const std::string& out) {
  prepare_out(cfg, out);
  const EnvSpec env = env_from_config(cfg);
  const GaussianPolicy policy = GaussianPolicy::load(require_path(cfg, "policy", "policy checkpoint"));
  if (policy.obs_dim() != policy_obs_dim(env) || policy.act_dim() != action_dim(env))
    throw std::runtime_error("policy checkpoint does not match the configured body");
  const FeatureExtractor extractor(features_from_config(cfg), env);
  const int episodes = cfg.get_int("episodes");
  const uint64_t seed = cfg.get_u64("seed");
  if (episodes < 1) throw std::runtime_error("collect: episodes must be >= 1");

  DemoSet demo;
  demo.k = extractor.dim();
  demo.body = body_name(env);
  for (int e = 0; e < episodes; ++e) {
    EnvState s = reset(env, Rng::mix(seed, static_cast<uint64_t>(e)));
    std::vector<Eigen::VectorXd> frames;
    while (true) {
      frames.push_back(extractor.extract(s));
      const StepResult r = step(env, s, policy.mean_action(policy_obs(env, s)));
      if (r.done) break;
      s = r.state;
    }
    demo.episodes.push_back(std::move(frames));
  }
  const std::string path = out + "/demo.txt";
  save_demo(demo, path);
  std::cout << "demo=" << path << "\nepisodes=" << episodes << "\nframes=" << demo.frame_count()
            << "\ndim=" << demo.k << "\n";
  return 0;
}

int cmd_train(const ExperimentConfig& cfg, const std::string& out) {
  prepare_out(cfg, out);
  const SilemConfig sc = silem_config_from(cfg);
  const DemoSet demo = load_demo(require_path(cfg, "demo", "demonstration file"));
  const SilemResult res = silem_train(sc, demo);

  write_metrics_csv(res.records, out + "/metrics.csv");
  res.policy.save(out + "/policy.net");
  res.transform.save(out + "/transform.txt");
  if (res.mlp_transform) res.mlp_transform->net().save(out + "/transform_mlp.net");

  const IterationRecord& last = res.records.back();
  std::cout << "iterations=" << res.records.size() << "\nfinal_gt_return=" << fmt(last.gt_return)
            << "\nfinal_disc_reward_mean=" << fmt(last.disc_reward_mean)
            << "\nmetrics=" << out + "/metrics.csv" << "\n";
  return 0;
}

int cmd_eval(const ExperimentConfig& cfg, const std::string& out) {
  prepare_out(cfg, out);
  const EnvSpec env = env_from_config(cfg);
  const GaussianPolicy policy = GaussianPolicy::load(require_path(cfg, "policy", "policy checkpoint"));
  if (policy.obs_dim() != policy_obs_dim(env) || policy.act_dim() != action_dim(env))
    throw std::runtime_error("policy checkpoint does not match the configured body");
  double lo = 0.0, hi = 0.0;
  const double mean =
      evaluate_policy(env, policy, cfg.get_int("eval_episodes"), cfg.get_u64("seed"), &lo, &hi);

  std::string report;
  report += "mean_return=" + fmt(mean) + "\n";
  report += "min_return=" + fmt(lo) + "\n";
  report += "max_return=" + fmt(hi) + "\n";
  if (!cfg.get("expert_return").empty() && !cfg.get("random_return").empty()) {
    const double score = normalized_score(mean, cfg.get_double("random_return"),
                                          cfg.get_double("expert_return"));
    report += "normalized_score=" + fmt(score) + "\n";
  }
  write_text(out + "/eval.txt", report);
  std::cout << report;
  return 0;
}

struct TrialSpec {
  ExperimentConfig config;
  std::string grid_hash;  // hash of the grid point, shared by all its trials
  uint64_t seed = 0;
  std::string dir;
};

void run_trial_child(const TrialSpec& trial) {
  const std::string self = "/proc/self/exe";
  const std::string cfg_path = trial.dir + "/trial-config";
  std::vector<std::string> args = {"silem", "train", "--config", cfg_path, "--out", trial.dir};
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  execv(self.c_str(), argv.data());
  std::perror("silem-error: execv");
  _exit(127);
}

int cmd_grid(const ExperimentConfig& cfg, const std::string& out, int workers) {
  prepare_out(cfg, out);
  if (cfg.get("expert_return").empty() || cfg.get("random_return").empty())
    throw std::runtime_error(
        "grid scoring needs expert_return and random_return for normalization");
  require_path(cfg, "demo", "demonstration file");
  const int trials = cfg.get_int("trials");
  if (trials < 1) throw std::runtime_error("grid: trials must be >= 1");
  const uint64_t master_seed = cfg.get_u64("seed");
  const std::vector<ExperimentConfig> grid = expand_grid(cfg);

  std::vector<TrialSpec> specs;
  for (const auto& gcfg : grid) {
    for (int t = 0; t < trials; ++t) {
      TrialSpec trial;
      trial.grid_hash = gcfg.hash();
      trial.seed = Rng::mix(Rng::mix(master_seed, gcfg.hash_u64()), static_cast<uint64_t>(t));
      trial.config = gcfg;
      trial.config.set("seed", std::to_string(trial.seed));
      trial.dir = out + "/trial-" + trial.grid_hash + "-" + std::to_string(t);
      fs::create_directories(trial.dir);
      write_text(trial.dir + "/trial-config", trial.config.canonical());
      specs.push_back(std::move(trial));
    }
  }

  if (workers <= 1) {
    for (const auto& trial : specs) cmd_train(trial.config, trial.dir);
  } else {
    size_t next = 0;
    int active = 0;
    while (next < specs.size() || active > 0) {
      while (active < workers && next < specs.size()) {
        const pid_t pid = fork();
        if (pid < 0) throw std::runtime_error("grid: fork failed");
        if (pid == 0) run_trial_child(specs[next]);
        ++next;
        ++active;
      }
      int status = 0;
      if (waitpid(-1, &status, 0) < 0) throw std::runtime_error("grid: waitpid failed");
      --active;
      if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
        throw std::runtime_error("grid: a trial process failed");
    }
  }

  const double expert_return = cfg.get_double("expert_return");
  const double random_return = cfg.get_double("random_return");
  std::vector<TrialResult> results;
  std::string table = "config_hash,seed,score,metrics\n";
  for (const auto& trial : specs) {
    const GaussianPolicy policy = GaussianPolicy::load(trial.dir + "/policy.net");
    const EnvSpec env = env_from_config(trial.config);
    const double mean = evaluate_policy(env, policy, trial.config.get_int("eval_episodes"),
                                        trial.seed);
    TrialResult r;
    r.config_hash = trial.grid_hash;
    r.seed = trial.seed;
    r.score = normalized_score(mean, random_return, expert_return);
    r.csv_path = trial.dir + "/metrics.csv";
    table += r.config_hash + "," + std::to_string(r.seed) + "," + fmt(r.score) + "," + r.csv_path +
             "\n";
    results.push_back(std::move(r));
  }
  write_text(out + "/trials.csv", table);

  const auto [best_hash, best_mean] = score_grid(results);
  for (const auto& gcfg : grid) {
    if (gcfg.hash() == best_hash) {
      write_text(out + "/best-config", gcfg.canonical());
      break;
    }
  }
  write_text(out + "/best.txt", "best_config=" + best_hash + "\nmean_score=" + fmt(best_mean) + "\n");
  std::cout << "configs=" << grid.size() << "\ntrials=" << results.size()
            << "\nbest_config=" << best_hash << "\nmean_score=" << fmt(best_mean) << "\n";
  return 0;
}

int cmd_inspect_transform(const ExperimentConfig& cfg) {
  const SequentialAffineTransform t =
      SequentialAffineTransform::load(require_path(cfg, "transform_file", "transform export"));
  const int k = t.k();
  std::cout << "k=" << k << "\na:";
  for (int i = 0; i < k; ++i) std::cout << " " << fmt(t.a_diag()[i]);
  std::cout << "\nb:";
  for (int i = 0; i < k; ++i) std::cout << " " << fmt(t.b()[i]);
  std::cout << "\ndeviation ranking (feature: max(|a-1|, |b|)):\n";
  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  auto dev = [&](int i) { return std::max(std::abs(t.a_diag()[i] - 1.0), std::abs(t.b()[i])); };
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return dev(x) > dev(y); });
  for (int i : order)
    std::cout << "  feature " << i << ": " << fmt(dev(i)) << "  (a=" << fmt(t.a_diag()[i])
              << ", b=" << fmt(t.b()[i]) << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SILEM: adversarial imitation from observation with a learned affine transform"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  uint64_t seed = 0;
  std::string out = ".";
  int workers = 1;
  app.add_option("--config", config_path, "configuration file (key=value lines)");
  app.add_option("--set", sets, "override key=value (repeatable)");
  app.add_option("--seed", seed, "master random seed (overrides the config)");
  app.add_option("--out", out, "output directory (default .)");
  app.add_option("--workers", workers, "parallel trial processes for grid");

  CLI::App* train_expert_cmd =
      app.add_subcommand("train-expert", "train a ground-truth-reward expert with PPO");
  CLI::App* collect_cmd =
      app.add_subcommand("collect", "record state-only feature demonstrations from a policy");
  CLI::App* train_cmd = app.add_subcommand("train", "run adversarial imitation training");
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a policy checkpoint");
  CLI::App* grid_cmd = app.add_subcommand("grid", "grid search over comma-valued config keys");
  CLI::App* inspect_cmd =
      app.add_subcommand("inspect-transform", "dump a transform export with deviation ranking");
  for (CLI::App* sub :
       {train_expert_cmd, collect_cmd, train_cmd, eval_cmd, grid_cmd, inspect_cmd})
    sub->fallthrough();

  try {
    app.parse(argc, argv);
    const ExperimentConfig cfg =
        resolve_config(config_path, sets, app.count("--seed") > 0, seed);
    if (train_expert_cmd->parsed()) return cmd_train_expert(cfg, out);
    if (collect_cmd->parsed()) return cmd_collect(cfg, out);
    if (train_cmd->parsed()) return cmd_train(cfg, out);
    if (eval_cmd->parsed()) return cmd_eval(cfg, out);
    if (grid_cmd->parsed()) return cmd_grid(cfg, out, workers);
    if (inspect_cmd->parsed()) return cmd_inspect_transform(cfg);
    throw std::runtime_error("no command selected");
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "silem-error: " << e.what() << "\n";
    return e.get_exit_code();
  } catch (const std::exception& e) {
    std::cerr << "silem-error: " << e.what() << "\n";
    return 1;
  }
}
