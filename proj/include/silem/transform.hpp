#ifndef SILEM_TRANSFORM_HPP_
#define SILEM_TRANSFORM_HPP_

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "silem/adam.hpp"
#include "silem/features.hpp"
#include "silem/mlp.hpp"

namespace silem {

// Per-frame diagonal affine map x ↦ a_diag ⊙ x + b, applied with the same
// (a_diag, b) to every frame of an observation tuple. Initialized at the
// identity so a frozen transform is exactly the ablation variant.
class SequentialAffineTransform {
 public:
  SequentialAffineTransform(int k, double learning_rate, double lr_decay, double w_d, double w_b);

  int k() const { return static_cast<int>(a_diag_.size()); }
  const Eigen::VectorXd& a_diag() const { return a_diag_; }
  const Eigen::VectorXd& b() const { return b_; }
  double learning_rate() const { return learning_rate_; }

  Eigen::VectorXd apply_frame(const Eigen::VectorXd& feature) const;
  ObservationTuple apply_tuple(const ObservationTuple& tuple) const;

  // One step of the adversarial transform loss
  //   -mean log D(T(o)) + w_d‖a_diag − 1‖² + w_b‖b‖²
  // through the frozen discriminator network: Adam on (a_diag, b) only, then
  // learning rate ← learning rate · d. Returns the loss.
  double update(const Mlp& disc_net, const std::vector<ObservationTuple>& batch);

  void save(const std::string& path) const;
  // Reads the exported (a_diag, b); optimizer hyperparameters take defaults.
  static SequentialAffineTransform load(const std::string& path);

 private:
  Eigen::VectorXd a_diag_;
  Eigen::VectorXd b_;
  double learning_rate_;
  double lr_decay_;
  double w_d_;
  double w_b_;
  AdamState adam_;
};

// Table-1 ablation: the per-frame map is a 1-hidden-layer MLP (100 units,
// identity head) instead of a diagonal affine map. Parameters are
// L2-regularized toward zero; there is no identity anchor.
class TransformAblationMlp {
 public:
  TransformAblationMlp(int k, double learning_rate, double lr_decay, double w_d, Rng& rng);

  int k() const { return net_.input_dim(); }
  const Mlp& net() const { return net_; }
  double learning_rate() const { return learning_rate_; }

  Eigen::VectorXd apply_frame(const Eigen::VectorXd& feature) const;
  ObservationTuple apply_tuple(const ObservationTuple& tuple) const;

  double update(const Mlp& disc_net, const std::vector<ObservationTuple>& batch);

 private:
  Mlp net_;
  double learning_rate_;
  double lr_decay_;
  double w_d_;
  AdamState adam_;
};

}  // namespace silem

#endif  // SILEM_TRANSFORM_HPP_
