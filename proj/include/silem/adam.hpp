#ifndef SILEM_ADAM_HPP_
#define SILEM_ADAM_HPP_

#include <Eigen/Dense>

namespace silem {

// Adam with bias correction over one flat parameter vector.
struct AdamState {
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  long step_count = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  AdamState(int dim, double lr)
      : first_moment(Eigen::VectorXd::Zero(dim)),
        second_moment(Eigen::VectorXd::Zero(dim)),
        learning_rate(lr) {}

  // In-place update of params. Throws on non-finite gradient entries.
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grads);
};

}  // namespace silem

#endif  // SILEM_ADAM_HPP_
