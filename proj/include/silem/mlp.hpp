#ifndef SILEM_MLP_HPP_
#define SILEM_MLP_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "silem/rng.hpp"

namespace silem {

enum class Head { kIdentity, kSigmoid };

// Sigmoid outputs are clamped to this band so log(y) and log(1-y) stay finite.
inline constexpr double kSigmoidClamp = 1e-6;

struct MlpCache {
  // acts[0] is the input batch; acts[l] is layer l's post-activation output.
  // Columns are samples.
  std::vector<Eigen::MatrixXd> acts;
};

struct MlpGrad {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  void set_zero();
  Eigen::VectorXd flat() const;
  void add_scaled(const MlpGrad& other, double scale);
};

// Tanh multi-layer perceptron with an identity or clamped-sigmoid head.
// Backing for the policy mean, value function, discriminator, and the
// MLP-ablation transform. Parameters flatten to a single vector (per layer:
// weights row-major, then biases) so one Adam state serves one network.
class Mlp {
 public:
  Mlp() = default;
  // Zero-initialized network.
  Mlp(std::vector<int> sizes, Head head);
  // Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
  static Mlp random(std::vector<int> sizes, Head head, Rng& rng);

  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  const std::vector<int>& sizes() const { return sizes_; }
  Head head() const { return head_; }
  int layer_count() const { return static_cast<int>(weights_.size()); }

  Eigen::VectorXd forward(const Eigen::VectorXd& input) const;
  // Batch forward; columns are samples.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& input) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& input, MlpCache& cache) const;

  // Reverse pass. upstream is dL/dy (output_dim x batch) for the batch held
  // in cache. Returns dL/dinput; accumulates parameter gradients into grad
  // when non-null. Parameters are untouched, so a frozen network can supply
  // input gradients alone.
  Eigen::MatrixXd backward(const MlpCache& cache, const Eigen::MatrixXd& upstream,
                           MlpGrad* grad) const;

  MlpGrad zero_grad() const;
  int param_count() const;
  Eigen::VectorXd params_flat() const;
  void set_params_flat(const Eigen::VectorXd& flat);

  const std::vector<Eigen::MatrixXd>& weights() const { return weights_; }
  const std::vector<Eigen::VectorXd>& biases() const { return biases_; }
  std::vector<Eigen::MatrixXd>& weights() { return weights_; }
  std::vector<Eigen::VectorXd>& biases() { return biases_; }

  // FNV-1a over the parameter bit patterns; used by tests to prove a network
  // was not touched.
  uint64_t param_checksum() const;

  // Text checkpoint: "#silem-net v1 sizes=... head=..." then one decimal
  // float per line, 17 significant digits.
  void save(std::ostream& out) const;
  void save(const std::string& path) const;
  static Mlp load(std::istream& in);
  static Mlp load(const std::string& path);

 private:
  std::vector<int> sizes_;
  Head head_ = Head::kIdentity;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
};

}  // namespace silem

#endif  // SILEM_MLP_HPP_
