#ifndef SILEM_FEATURES_HPP_
#define SILEM_FEATURES_HPP_

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "silem/envs.hpp"

namespace silem {

// Skeletal feature recipes. Expert and learner may use different extractor
// instances (built from different body specs) as long as the declared output
// dimension matches.
enum class FeatureRecipe { kEndEffector, kEndEffectorAngles, kStilt, kIdentity };

FeatureRecipe parse_feature_recipe(const std::string& name);
std::string feature_recipe_name(FeatureRecipe recipe);

class FeatureExtractor {
 public:
  // Extractor over an environment body.
  FeatureExtractor(FeatureRecipe recipe, EnvSpec spec);
  // Identity extractor over raw feature frames of the given dimension.
  static FeatureExtractor identity(int dim);

  FeatureRecipe recipe() const { return recipe_; }
  int dim() const { return dim_; }

  Eigen::VectorXd extract(const EnvState& state) const;
  Eigen::VectorXd extract_frame(const Eigen::VectorXd& frame) const;

 private:
  FeatureExtractor() = default;
  FeatureRecipe recipe_ = FeatureRecipe::kIdentity;
  std::optional<EnvSpec> spec_;
  int dim_ = 0;
};

// m consecutive feature frames concatenated; the discriminator's input unit.
struct ObservationTuple {
  Eigen::VectorXd values;  // length m * k
  int start = 0;           // index of the first frame in its trajectory
};

// Builds all stride-1 windows of m frames. A trajectory shorter than m yields
// no tuples; the caller sees that via the returned count.
std::vector<ObservationTuple> make_tuples(const std::vector<Eigen::VectorXd>& features, int m);

// Splits a tuple back into its m frames of length k.
std::vector<Eigen::VectorXd> split_tuple(const ObservationTuple& tuple, int k);

}  // namespace silem

#endif  // SILEM_FEATURES_HPP_
