#ifndef SILEM_DATA_IO_HPP_
#define SILEM_DATA_IO_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "silem/envs.hpp"
#include "silem/features.hpp"
#include "silem/ppo.hpp"

namespace silem {

// State-only expert demonstrations: feature frames grouped by episode.
struct DemoSet {
  int k = 0;
  std::string body;
  std::vector<std::vector<Eigen::VectorXd>> episodes;

  int frame_count() const;
  void validate() const;
  // Windows never straddle episode boundaries; tuple starts are global frame
  // indices.
  std::vector<ObservationTuple> tuples(int m) const;
};

void save_demo(const DemoSet& set, const std::string& path);
DemoSet load_demo(const std::string& path);

struct ConfigKeyInfo {
  const char* key;
  const char* default_value;
  bool structural_list;  // comma-valued by nature, never a grid axis
  const char* doc;
};

// Flat key=value experiment configuration. Unknown keys are rejected; every
// key has a documented default. Comma-separated values on non-structural keys
// are grid axes.
class ExperimentConfig {
 public:
  static const std::vector<ConfigKeyInfo>& registry();
  static const ConfigKeyInfo& key_info(const std::string& key);

  static ExperimentConfig from_file(const std::string& path);
  static ExperimentConfig from_stream(std::istream& in, const std::string& name);

  ExperimentConfig() = default;

  void set(const std::string& key, const std::string& value);
  bool is_set(const std::string& key) const;
  // Effective value: explicitly set, or the registry default.
  std::string get(const std::string& key) const;

  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  uint64_t get_u64(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;

  // Non-structural keys whose effective value holds a comma list, sorted.
  std::vector<std::string> grid_keys() const;

  // All registry keys with effective values, sorted, one per line.
  std::string canonical() const;
  // FNV-1a over canonical(), as 16 hex digits.
  std::string hash() const;
  uint64_t hash_u64() const;

  bool operator==(const ExperimentConfig& other) const { return values_ == other.values_; }

 private:
  std::map<std::string, std::string> values_;
};

// Cartesian product over the grid axes, keys in lexicographic order, first
// key varying slowest.
std::vector<ExperimentConfig> expand_grid(const ExperimentConfig& config);

struct TrialResult {
  std::string config_hash;
  uint64_t seed = 0;
  double score = 0.0;
  std::string csv_path;
};

// Argmax of mean trial score per config; requires equal trial counts per
// config; ties break toward the lexicographically smallest hash.
std::pair<std::string, double> score_grid(const std::vector<TrialResult>& results);

EnvSpec env_from_config(const ExperimentConfig& config);
FeatureRecipe features_from_config(const ExperimentConfig& config);
PpoConfig ppo_from_config(const ExperimentConfig& config);

}  // namespace silem

#endif  // SILEM_DATA_IO_HPP_
