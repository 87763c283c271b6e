#include "silem/features.hpp"

#include <stdexcept>

namespace silem {

namespace {

void check(bool ok, const std::string& msg) {
  if (!ok) throw std::runtime_error(msg);
}

}  // namespace

FeatureRecipe parse_feature_recipe(const std::string& name) {
  if (name == "endeffector") return FeatureRecipe::kEndEffector;
  if (name == "endeffector+angles") return FeatureRecipe::kEndEffectorAngles;
  if (name == "stilt") return FeatureRecipe::kStilt;
  if (name == "identity") return FeatureRecipe::kIdentity;
  throw std::runtime_error("unknown feature recipe '" + name + "'");
}

std::string feature_recipe_name(FeatureRecipe recipe) {
  switch (recipe) {
    case FeatureRecipe::kEndEffector: return "endeffector";
    case FeatureRecipe::kEndEffectorAngles: return "endeffector+angles";
    case FeatureRecipe::kStilt: return "stilt";
    case FeatureRecipe::kIdentity: return "identity";
  }
  return "?";
}

FeatureExtractor::FeatureExtractor(FeatureRecipe recipe, EnvSpec spec)
    : recipe_(recipe), spec_(std::move(spec)) {
  switch (recipe_) {
    case FeatureRecipe::kEndEffector:
      check(body_kind(*spec_) == BodyKind::kLinkArm, "endeffector recipe needs a linkarm body");
      dim_ = 2;
      break;
    case FeatureRecipe::kEndEffectorAngles:
      check(body_kind(*spec_) == BodyKind::kLinkArm,
            "endeffector+angles recipe needs a linkarm body");
      dim_ = 2 + std::get<LinkArmSpec>(*spec_).dof();
      break;
    case FeatureRecipe::kStilt:
      check(body_kind(*spec_) == BodyKind::kStiltWalker, "stilt recipe needs a stiltwalker body");
      dim_ = 2;
      break;
    case FeatureRecipe::kIdentity:
      throw std::runtime_error("identity recipe needs FeatureExtractor::identity(dim)");
  }
}

FeatureExtractor FeatureExtractor::identity(int dim) {
  check(dim >= 1, "identity extractor: dim must be >= 1");
  FeatureExtractor fe;
  fe.recipe_ = FeatureRecipe::kIdentity;
  fe.dim_ = dim;
  return fe;
}

Eigen::VectorXd FeatureExtractor::extract(const EnvState& state) const {
  check(recipe_ != FeatureRecipe::kIdentity,
        "identity extractor takes raw frames, not env states");
  check(body_kind(*spec_) == state.kind, "feature extractor: body kind mismatch");
  switch (recipe_) {
    case FeatureRecipe::kEndEffector: {
      return end_effector(std::get<LinkArmSpec>(*spec_), state);
    }
    case FeatureRecipe::kEndEffectorAngles: {
      const auto& arm = std::get<LinkArmSpec>(*spec_);
      Eigen::VectorXd f(2 + arm.dof());
      f.head<2>() = end_effector(arm, state);
      f.tail(arm.dof()) = state.q.head(arm.dof());
      return f;
    }
    case FeatureRecipe::kStilt: {
      const auto& walker = std::get<StiltWalkerSpec>(*spec_);
      Eigen::VectorXd f(2);
      f[0] = walker.stilt_length + state.q[2];  // head height
      f[1] = state.q[1];                        // horizontal velocity
      return f;
    }
    case FeatureRecipe::kIdentity: break;
  }
  throw std::runtime_error("unreachable");
}

Eigen::VectorXd FeatureExtractor::extract_frame(const Eigen::VectorXd& frame) const {
  check(recipe_ == FeatureRecipe::kIdentity, "extract_frame is only for the identity recipe");
  check(frame.size() == dim_, "identity extractor: frame dim mismatch");
  return frame;
}

std::vector<ObservationTuple> make_tuples(const std::vector<Eigen::VectorXd>& features, int m) {
  check(m >= 1, "make_tuples: m must be >= 1");
  std::vector<ObservationTuple> tuples;
  const int total = static_cast<int>(features.size());
  if (total < m) return tuples;
  const int k = static_cast<int>(features[0].size());
  tuples.reserve(total - m + 1);
  for (int start = 0; start + m <= total; ++start) {
    ObservationTuple t;
    t.start = start;
    t.values.resize(m * k);
    for (int j = 0; j < m; ++j) {
      check(features[start + j].size() == k, "make_tuples: inconsistent frame dims");
      t.values.segment(j * k, k) = features[start + j];
    }
    tuples.push_back(std::move(t));
  }
  return tuples;
}

std::vector<Eigen::VectorXd> split_tuple(const ObservationTuple& tuple, int k) {
  check(k >= 1 && tuple.values.size() % k == 0, "split_tuple: tuple length not divisible by k");
  const int m = static_cast<int>(tuple.values.size()) / k;
  std::vector<Eigen::VectorXd> frames;
  frames.reserve(m);
  for (int j = 0; j < m; ++j) frames.push_back(tuple.values.segment(j * k, k));
  return frames;
}

}  // namespace silem
