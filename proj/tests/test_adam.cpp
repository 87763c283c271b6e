#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>

#include "silem/adam.hpp"

using namespace silem;

TEST_CASE("zero gradient leaves parameters unchanged") {
  AdamState adam(3, 0.1);
  Eigen::VectorXd params(3);
  params << 1.0, -2.0, 0.5;
  const Eigen::VectorXd before = params;
  adam.step(params, Eigen::VectorXd::Zero(3));
  CHECK((params - before).norm() == 0.0);
  CHECK(adam.step_count == 1);
}

TEST_CASE("first step moves by about -lr * sign(gradient)") {
  // With zero moments, step 1 gives lr * g / (|g| + eps') ~= lr * sign(g).
  AdamState adam(2, 0.05);
  Eigen::VectorXd params = Eigen::VectorXd::Zero(2);
  Eigen::VectorXd grads(2);
  grads << 3.0, -0.002;
  adam.step(params, grads);
  CHECK(params[0] == doctest::Approx(-0.05).epsilon(1e-5));
  CHECK(params[1] == doctest::Approx(0.05).epsilon(1e-4));
}

TEST_CASE("minimizes a quadratic bowl") {
  AdamState adam(4, 0.05);
  Eigen::VectorXd target(4);
  target << 1.0, -0.5, 2.0, 0.0;
  Eigen::VectorXd params = Eigen::VectorXd::Zero(4);
  const double initial = (params - target).norm();
  for (int t = 0; t < 500; ++t) {
    Eigen::VectorXd grads = params - target;  // d/dp 0.5||p - target||^2
    adam.step(params, grads);
  }
  CHECK((params - target).norm() < initial / 10.0);
}

TEST_CASE("matches the scripted update recurrence") {
  // Independent replay of the Adam recurrence, scalar case.
  const double lr = 0.002, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double grad_seq[] = {0.4, -1.3, 2.2, 0.05, -0.7};
  double m = 0.0, v = 0.0, p_ref = 0.75;

  AdamState adam(1, lr);
  Eigen::VectorXd params(1);
  params << 0.75;

  for (int t = 1; t <= 5; ++t) {
    const double g = grad_seq[t - 1];
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g * g;
    const double mhat = m / (1.0 - std::pow(b1, t));
    const double vhat = v / (1.0 - std::pow(b2, t));
    p_ref -= lr * mhat / (std::sqrt(vhat) + eps);

    Eigen::VectorXd grads(1);
    grads << g;
    adam.step(params, grads);
    CHECK(params[0] == doctest::Approx(p_ref).epsilon(1e-14));
  }
}

TEST_CASE("rejects non-finite gradients, naming the offending index") {
  AdamState adam(3, 0.01);
  Eigen::VectorXd params = Eigen::VectorXd::Ones(3);
  Eigen::VectorXd grads(3);
  grads << 0.1, std::numeric_limits<double>::quiet_NaN(), 0.2;
  try {
    adam.step(params, grads);
    CHECK(false);
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("index 1") != std::string::npos);
  }
  grads[1] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(adam.step(params, grads), std::runtime_error);
}

TEST_CASE("rejects mismatched dimensions") {
  AdamState adam(2, 0.01);
  Eigen::VectorXd params = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(adam.step(params, Eigen::VectorXd::Zero(3)), std::runtime_error);
}
