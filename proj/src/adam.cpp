#include "silem/adam.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace silem {

void AdamState::step(Eigen::VectorXd& params, const Eigen::VectorXd& grads) {
  if (params.size() != first_moment.size() || grads.size() != first_moment.size())
    throw std::runtime_error("adam: parameter/gradient/moment length mismatch");
  if (!grads.allFinite()) {
    for (int i = 0; i < grads.size(); ++i)
      if (!std::isfinite(grads[i]))
        throw std::runtime_error("adam: non-finite gradient at index " + std::to_string(i));
  }
  ++step_count;
  first_moment = beta1 * first_moment + (1.0 - beta1) * grads;
  second_moment = beta2 * second_moment.array() + (1.0 - beta2) * grads.array().square();
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
  params.array() -= learning_rate * (first_moment.array() / bc1) /
                    ((second_moment.array() / bc2).sqrt() + epsilon);
}

}  // namespace silem
