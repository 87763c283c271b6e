#include "silem/data_io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace silem {

namespace {

void check(bool ok, const std::string& msg) {
  if (!ok) throw std::runtime_error(msg);
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      parts.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(trim(cur));
  return parts;
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    check(pos == s.size(), "");
    return v;
  } catch (...) {
    throw std::runtime_error(what + ": not a number: '" + s + "'");
  }
}

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

int DemoSet::frame_count() const {
  int n = 0;
  for (const auto& ep : episodes) n += static_cast<int>(ep.size());
  return n;
}

void DemoSet::validate() const {
  check(k >= 1, "demo: feature dim must be >= 1");
  check(!episodes.empty() && frame_count() >= 1, "demo: no frames");
  for (const auto& ep : episodes)
    for (const auto& f : ep) check(f.size() == k, "demo: frame dim mismatch");
}

std::vector<ObservationTuple> DemoSet::tuples(int m) const {
  std::vector<ObservationTuple> out;
  int offset = 0;
  for (const auto& ep : episodes) {
    auto t = make_tuples(ep, m);
    for (auto& tup : t) {
      tup.start += offset;
      out.push_back(std::move(tup));
    }
    offset += static_cast<int>(ep.size());
  }
  return out;
}

void save_demo(const DemoSet& set, const std::string& path) {
  set.validate();
  std::ofstream out(path);
  check(out.good(), "demo save: cannot open " + path);
  out << "#silem-demo v1 dim=" << set.k << " frames=" << set.frame_count() << " body=" << set.body
      << "\n";
  char buf[64];
  for (const auto& ep : set.episodes) {
    out << "#episode\n";
    for (const auto& f : ep) {
      for (int i = 0; i < set.k; ++i) {
        std::snprintf(buf, sizeof buf, i ? " %.17g" : "%.17g", f[i]);
        out << buf;
      }
      out << "\n";
    }
  }
  check(out.good(), "demo save: write failed for " + path);
}

DemoSet load_demo(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "demo load: cannot open " + path);
  std::string line;
  int lineno = 0;

  auto fail = [&](const std::string& msg) -> std::runtime_error {
    return std::runtime_error(path + ":" + std::to_string(lineno) + ": " + msg);
  };

  check(static_cast<bool>(std::getline(in, line)), "demo load: empty file " + path);
  lineno = 1;
  std::istringstream header(line);
  std::string magic, version, dim_kv, frames_kv, body_kv;
  header >> magic >> version >> dim_kv >> frames_kv >> body_kv;
  if (magic != "#silem-demo") throw fail("not a demo file (expected #silem-demo)");
  if (version != "v1") throw fail("unsupported version '" + version + "'");
  if (dim_kv.rfind("dim=", 0) != 0 || frames_kv.rfind("frames=", 0) != 0 ||
      body_kv.rfind("body=", 0) != 0)
    throw fail("malformed header fields");

  DemoSet set;
  set.k = std::stoi(dim_kv.substr(4));
  const int declared_frames = std::stoi(frames_kv.substr(7));
  set.body = body_kv.substr(5);
  if (set.k < 1) throw fail("invalid dim");
  if (declared_frames < 1) throw fail("demo has no frames (frames=" + std::to_string(declared_frames) + ")");

  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t == "#episode") {
      set.episodes.emplace_back();
      continue;
    }
    if (set.episodes.empty()) throw fail("frame before first #episode marker");
    std::istringstream row(t);
    Eigen::VectorXd f(set.k);
    for (int i = 0; i < set.k; ++i)
      if (!(row >> f[i])) throw fail("expected " + std::to_string(set.k) + " values per frame");
    std::string extra;
    if (row >> extra) throw fail("trailing token '" + extra + "' (dim mismatch)");
    set.episodes.back().push_back(std::move(f));
  }
  if (set.frame_count() != declared_frames)
    throw std::runtime_error(path + ": header declares " + std::to_string(declared_frames) +
                             " frames but file holds " + std::to_string(set.frame_count()));
  set.validate();
  return set;
}

const std::vector<ConfigKeyInfo>& ExperimentConfig::registry() {
  static const std::vector<ConfigKeyInfo> keys = {
      {"env", "linkarm", false, "body: linkarm | stiltwalker"},
      {"links", "1.0,1.0", true, "linkarm link lengths (meters)"},
      {"target", "1.5,1.0", true, "linkarm target point x,y"},
      {"joint_damping", "0.5", false, "linkarm joint damping"},
      {"torque_limit", "1.0", false, "linkarm per-joint torque limit"},
      {"stilt", "0.6", false, "stiltwalker stilt length (meters)"},
      {"mass", "1.0", false, "stiltwalker mass"},
      {"drag", "0.8", false, "stiltwalker base drag coefficient"},
      {"target_speed", "1.5", false, "stiltwalker target speed (m/s)"},
      {"dt", "0.05", false, "integration step (seconds)"},
      {"episode_len", "auto", false, "steps per episode; auto = 200 linkarm / 300 stiltwalker"},
      {"features", "auto", false,
       "skeletal recipe: endeffector | endeffector+angles | stilt | identity; auto = "
       "endeffector (linkarm) / stilt (stiltwalker)"},
      {"m", "4", false, "frames per observation tuple"},
      {"mode", "silem", false, "silem | silem_minus"},
      {"transform", "affine", false, "transform variant: affine | mlp"},
      {"n_d", "5", false, "discriminator updates per iteration"},
      {"n_g", "5", false, "transform updates per iteration"},
      {"transform_lr", "0.001", false, "transform Adam learning rate"},
      {"transform_decay", "1.0", false, "multiplicative transform lr decay per update"},
      {"w_d", "1.0", false, "L2 coefficient anchoring a_diag to 1 (mlp: params to 0)"},
      {"w_b", "1.0", false, "L2 coefficient anchoring b to 0"},
      {"disc_hidden", "128,128,128", true, "discriminator hidden layer sizes"},
      {"disc_lr", "0.001", false, "discriminator Adam learning rate"},
      {"disc_minibatch", "256", false, "per-side discriminator minibatch size"},
      {"policy_hidden", "64,64", true, "policy and value hidden layer sizes"},
      {"init_log_std", "-0.5", false, "initial policy log standard deviation"},
      {"gamma", "0.99", false, "discount factor"},
      {"lam", "0.95", false, "GAE lambda"},
      {"clip", "0.2", false, "PPO clip parameter"},
      {"epochs", "10", false, "PPO epochs per iteration (N_P)"},
      {"minibatch", "64", false, "PPO minibatch size"},
      {"steps", "2048", false, "environment steps per iteration"},
      {"lr", "0.0002", false, "PPO learning rate, linearly decayed to 0"},
      {"value_coef", "0.5", false, "value loss coefficient"},
      {"kl_limit", "1.0", false, "KL divergence guard threshold"},
      {"iterations", "150", false, "training iterations (PPO lr decays over this span)"},
      {"demo", "", false, "expert demonstration file (train input)"},
      {"policy", "", false, "policy checkpoint path (collect/eval input)"},
      {"transform_file", "", false, "transform export path (inspect-transform input)"},
      {"episodes", "10", false, "episodes to record (collect)"},
      {"eval_episodes", "20", false, "episodes per evaluation"},
      {"expert_return", "", false, "expert mean return for score normalization"},
      {"random_return", "", false, "random-policy mean return for score normalization"},
      {"trials", "5", false, "trials per grid configuration"},
      {"seed", "0", false, "master random seed"},
  };
  return keys;
}

const ConfigKeyInfo& ExperimentConfig::key_info(const std::string& key) {
  for (const auto& info : registry())
    if (key == info.key) return info;
  throw std::runtime_error("unknown config key '" + key + "'");
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "config: cannot open " + path);
  return from_stream(in, path);
}

ExperimentConfig ExperimentConfig::from_stream(std::istream& in, const std::string& name) {
  ExperimentConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(name + ":" + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (cfg.values_.count(key))
      throw std::runtime_error(name + ":" + std::to_string(lineno) + ": duplicate key '" + key +
                               "'");
    try {
      cfg.set(key, value);
    } catch (const std::exception& e) {
      throw std::runtime_error(name + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  key_info(key);  // throws on unknown key
  values_[key] = value;
}

bool ExperimentConfig::is_set(const std::string& key) const { return values_.count(key) > 0; }

std::string ExperimentConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it != values_.end()) return it->second;
  return key_info(key).default_value;
}

double ExperimentConfig::get_double(const std::string& key) const {
  return parse_double(get(key), "config key '" + key + "'");
}

int ExperimentConfig::get_int(const std::string& key) const {
  const double v = get_double(key);
  const int i = static_cast<int>(v);
  check(static_cast<double>(i) == v, "config key '" + key + "': expected an integer");
  return i;
}

uint64_t ExperimentConfig::get_u64(const std::string& key) const {
  const std::string s = get(key);
  try {
    size_t pos = 0;
    check(s.find('-') == std::string::npos, "");  // stoull wraps negatives silently
    const uint64_t v = std::stoull(s, &pos);
    check(pos == s.size(), "");
    return v;
  } catch (...) {
    throw std::runtime_error("config key '" + key + "': not an unsigned integer: '" + s + "'");
  }
}

std::vector<double> ExperimentConfig::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& part : split_commas(get(key)))
    out.push_back(parse_double(part, "config key '" + key + "'"));
  return out;
}

std::vector<int> ExperimentConfig::get_int_list(const std::string& key) const {
  std::vector<int> out;
  for (double v : get_double_list(key)) {
    const int i = static_cast<int>(v);
    check(static_cast<double>(i) == v, "config key '" + key + "': expected integers");
    out.push_back(i);
  }
  return out;
}

std::vector<std::string> ExperimentConfig::grid_keys() const {
  std::vector<std::string> keys;
  for (const auto& [key, value] : values_) {
    if (key_info(key).structural_list) continue;
    if (value.find(',') != std::string::npos) keys.push_back(key);
  }
  return keys;  // std::map iteration is already sorted
}

std::string ExperimentConfig::canonical() const {
  std::vector<std::string> keys;
  keys.reserve(registry().size());
  for (const auto& info : registry()) keys.emplace_back(info.key);
  std::sort(keys.begin(), keys.end());
  std::string out;
  for (const auto& key : keys) out += key + "=" + get(key) + "\n";
  return out;
}

std::string ExperimentConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_u64()));
  return buf;
}

uint64_t ExperimentConfig::hash_u64() const { return fnv1a(canonical()); }

std::vector<ExperimentConfig> expand_grid(const ExperimentConfig& config) {
  const std::vector<std::string> axes = config.grid_keys();
  std::vector<std::vector<std::string>> options;
  for (const auto& key : axes) {
    auto parts = split_commas(config.get(key));
    for (const auto& p : parts)
      check(!p.empty(), "grid axis '" + key + "' has an empty list element");
    options.push_back(std::move(parts));
  }

  std::vector<ExperimentConfig> out;
  std::vector<size_t> idx(axes.size(), 0);
  while (true) {
    ExperimentConfig cfg = config;
    for (size_t i = 0; i < axes.size(); ++i) cfg.set(axes[i], options[i][idx[i]]);
    out.push_back(std::move(cfg));
    size_t pos = axes.size();
    while (pos-- > 0) {
      if (++idx[pos] < options[pos].size()) break;
      idx[pos] = 0;
      if (pos == 0) return out;
    }
    if (axes.empty()) return out;
  }
}

std::pair<std::string, double> score_grid(const std::vector<TrialResult>& results) {
  check(!results.empty(), "score_grid: no results");
  std::map<std::string, std::vector<double>> by_config;
  for (const auto& r : results) {
    check(std::isfinite(r.score), "score_grid: non-finite score for config " + r.config_hash);
    by_config[r.config_hash].push_back(r.score);
  }
  size_t expected = by_config.begin()->second.size();
  std::string missing;
  for (const auto& [hash, scores] : by_config) {
    expected = std::max(expected, scores.size());
  }
  for (const auto& [hash, scores] : by_config)
    if (scores.size() != expected) missing += (missing.empty() ? "" : ", ") + hash + " (" +
                                              std::to_string(scores.size()) + "/" +
                                              std::to_string(expected) + ")";
  check(missing.empty(), "score_grid: missing trials for: " + missing);

  std::string best;
  double best_mean = 0.0;
  for (const auto& [hash, scores] : by_config) {
    double mean = 0.0;
    for (double s : scores) mean += s;
    mean /= scores.size();
    if (best.empty() || mean > best_mean) {  // map order makes ties pick the smallest hash
      best = hash;
      best_mean = mean;
    }
  }
  return {best, best_mean};
}

EnvSpec env_from_config(const ExperimentConfig& config) {
  const std::string env = config.get("env");
  const std::string ep_len = config.get("episode_len");
  if (env == "linkarm") {
    LinkArmSpec spec;
    spec.link_lengths = config.get_double_list("links");
    const auto target = config.get_double_list("target");
    check(target.size() == 2, "config: target must be x,y");
    spec.target = Eigen::Vector2d(target[0], target[1]);
    spec.joint_damping = config.get_double("joint_damping");
    spec.torque_limit = config.get_double("torque_limit");
    spec.dt = config.get_double("dt");
    spec.episode_len = (ep_len == "auto") ? 200 : config.get_int("episode_len");
    spec.validate();
    return spec;
  }
  if (env == "stiltwalker") {
    StiltWalkerSpec spec;
    spec.stilt_length = config.get_double("stilt");
    spec.mass = config.get_double("mass");
    spec.damping = config.get_double("drag");
    spec.target_speed = config.get_double("target_speed");
    spec.dt = config.get_double("dt");
    spec.episode_len = (ep_len == "auto") ? 300 : config.get_int("episode_len");
    spec.validate();
    return spec;
  }
  throw std::runtime_error("config: unknown env '" + env + "'");
}

FeatureRecipe features_from_config(const ExperimentConfig& config) {
  const std::string f = config.get("features");
  if (f == "auto")
    return config.get("env") == "stiltwalker" ? FeatureRecipe::kStilt : FeatureRecipe::kEndEffector;
  return parse_feature_recipe(f);
}

PpoConfig ppo_from_config(const ExperimentConfig& config) {
  PpoConfig ppo;
  ppo.gamma = config.get_double("gamma");
  ppo.lam = config.get_double("lam");
  ppo.clip = config.get_double("clip");
  ppo.epochs = config.get_int("epochs");
  ppo.minibatch = config.get_int("minibatch");
  ppo.steps_per_iter = config.get_int("steps");
  ppo.learning_rate = config.get_double("lr");
  ppo.total_iters = config.get_int("iterations");
  ppo.value_coef = config.get_double("value_coef");
  ppo.kl_limit = config.get_double("kl_limit");
  ppo.validate();
  return ppo;
}

}  // namespace silem
