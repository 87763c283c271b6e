#include "silem/mlp.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace silem {

namespace {

void check(bool ok, const std::string& msg) {
  if (!ok) throw std::runtime_error(msg);
}

std::string head_name(Head head) {
  return head == Head::kIdentity ? "identity" : "sigmoid";
}

}  // namespace

void MlpGrad::set_zero() {
  for (auto& w : weights) w.setZero();
  for (auto& b : biases) b.setZero();
}

Eigen::VectorXd MlpGrad::flat() const {
  int n = 0;
  for (size_t l = 0; l < weights.size(); ++l)
    n += static_cast<int>(weights[l].size() + biases[l].size());
  Eigen::VectorXd out(n);
  int at = 0;
  for (size_t l = 0; l < weights.size(); ++l) {
    const auto& w = weights[l];
    for (int r = 0; r < w.rows(); ++r)
      for (int c = 0; c < w.cols(); ++c) out[at++] = w(r, c);
    for (int i = 0; i < biases[l].size(); ++i) out[at++] = biases[l][i];
  }
  return out;
}

void MlpGrad::add_scaled(const MlpGrad& other, double scale) {
  for (size_t l = 0; l < weights.size(); ++l) {
    weights[l] += scale * other.weights[l];
    biases[l] += scale * other.biases[l];
  }
}

Mlp::Mlp(std::vector<int> sizes, Head head) : sizes_(std::move(sizes)), head_(head) {
  check(sizes_.size() >= 2, "mlp: need at least input and output sizes");
  for (int s : sizes_) check(s >= 1, "mlp: all layer sizes must be positive");
  for (size_t l = 0; l + 1 < sizes_.size(); ++l) {
    weights_.emplace_back(Eigen::MatrixXd::Zero(sizes_[l + 1], sizes_[l]));
    biases_.emplace_back(Eigen::VectorXd::Zero(sizes_[l + 1]));
  }
}

Mlp Mlp::random(std::vector<int> sizes, Head head, Rng& rng) {
  Mlp net(std::move(sizes), head);
  for (auto& w : net.weights_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(w.cols()));
    for (int r = 0; r < w.rows(); ++r)
      for (int c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-bound, bound);
  }
  return net;
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& input) const {
  return forward(Eigen::MatrixXd(input)).col(0);
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& input) const {
  MlpCache cache;
  return forward(input, cache);
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& input, MlpCache& cache) const {
  check(input.rows() == input_dim(), "mlp forward: input has " +
                                         std::to_string(input.rows()) +
                                         " rows, expected " + std::to_string(input_dim()));
  cache.acts.clear();
  cache.acts.reserve(weights_.size() + 1);
  cache.acts.push_back(input);
  Eigen::MatrixXd a = input;
  for (size_t l = 0; l < weights_.size(); ++l) {
    Eigen::MatrixXd z = (weights_[l] * a).colwise() + biases_[l];
    if (l + 1 < weights_.size()) {
      a = z.array().tanh();
    } else if (head_ == Head::kSigmoid) {
      a = (1.0 / (1.0 + (-z.array()).exp()))
              .min(1.0 - kSigmoidClamp)
              .max(kSigmoidClamp);
    } else {
      a = std::move(z);
    }
    cache.acts.push_back(a);
  }
  return cache.acts.back();
}

Eigen::MatrixXd Mlp::backward(const MlpCache& cache, const Eigen::MatrixXd& upstream,
                              MlpGrad* grad) const {
  check(cache.acts.size() == weights_.size() + 1, "mlp backward: stale cache");
  check(upstream.rows() == output_dim() && upstream.cols() == cache.acts[0].cols(),
        "mlp backward: upstream shape mismatch");
  Eigen::MatrixXd delta;
  for (int l = layer_count() - 1; l >= 0; --l) {
    const Eigen::MatrixXd& y = cache.acts[l + 1];
    const Eigen::MatrixXd& dy = (l == layer_count() - 1) ? upstream : delta;
    Eigen::MatrixXd dz;
    if (l == layer_count() - 1 && head_ == Head::kIdentity) {
      dz = dy;
    } else if (l == layer_count() - 1 && head_ == Head::kSigmoid) {
      dz = dy.array() * (y.array() * (1.0 - y.array()));
    } else {
      dz = dy.array() * (1.0 - y.array().square());
    }
    if (grad) {
      grad->weights[l] += dz * cache.acts[l].transpose();
      grad->biases[l] += dz.rowwise().sum();
    }
    if (l > 0)
      delta = weights_[l].transpose() * dz;
    else
      return weights_[0].transpose() * dz;
  }
  return {};  // unreachable
}

MlpGrad Mlp::zero_grad() const {
  MlpGrad g;
  for (size_t l = 0; l < weights_.size(); ++l) {
    g.weights.emplace_back(Eigen::MatrixXd::Zero(weights_[l].rows(), weights_[l].cols()));
    g.biases.emplace_back(Eigen::VectorXd::Zero(biases_[l].size()));
  }
  return g;
}

int Mlp::param_count() const {
  int n = 0;
  for (size_t l = 0; l < weights_.size(); ++l)
    n += static_cast<int>(weights_[l].size() + biases_[l].size());
  return n;
}

Eigen::VectorXd Mlp::params_flat() const {
  Eigen::VectorXd out(param_count());
  int at = 0;
  for (size_t l = 0; l < weights_.size(); ++l) {
    const auto& w = weights_[l];
    for (int r = 0; r < w.rows(); ++r)
      for (int c = 0; c < w.cols(); ++c) out[at++] = w(r, c);
    for (int i = 0; i < biases_[l].size(); ++i) out[at++] = biases_[l][i];
  }
  return out;
}

void Mlp::set_params_flat(const Eigen::VectorXd& flat) {
  check(flat.size() == param_count(), "mlp set_params: length mismatch");
  int at = 0;
  for (size_t l = 0; l < weights_.size(); ++l) {
    auto& w = weights_[l];
    for (int r = 0; r < w.rows(); ++r)
      for (int c = 0; c < w.cols(); ++c) w(r, c) = flat[at++];
    for (int i = 0; i < biases_[l].size(); ++i) biases_[l][i] = flat[at++];
  }
}

uint64_t Mlp::param_checksum() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](double v) {
    uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  for (size_t l = 0; l < weights_.size(); ++l) {
    const auto& w = weights_[l];
    for (int r = 0; r < w.rows(); ++r)
      for (int c = 0; c < w.cols(); ++c) feed(w(r, c));
    for (int i = 0; i < biases_[l].size(); ++i) feed(biases_[l][i]);
  }
  return h;
}

void Mlp::save(std::ostream& out) const {
  out << "#silem-net v1 sizes=";
  for (size_t i = 0; i < sizes_.size(); ++i) out << (i ? "," : "") << sizes_[i];
  out << " head=" << head_name(head_) << "\n";
  const Eigen::VectorXd flat = params_flat();
  char buf[64];
  for (int i = 0; i < flat.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", flat[i]);
    out << buf << "\n";
  }
}

void Mlp::save(const std::string& path) const {
  std::ofstream out(path);
  check(out.good(), "mlp save: cannot open " + path);
  save(out);
  check(out.good(), "mlp save: write failed for " + path);
}

Mlp Mlp::load(std::istream& in) {
  std::string header;
  check(static_cast<bool>(std::getline(in, header)), "mlp load: empty file");
  std::istringstream hs(header);
  std::string magic, version, sizes_kv, head_kv;
  hs >> magic >> version >> sizes_kv >> head_kv;
  check(magic == "#silem-net", "mlp load: bad header '" + header + "'");
  check(version == "v1", "mlp load: unsupported version in '" + header + "'");
  check(sizes_kv.rfind("sizes=", 0) == 0 && head_kv.rfind("head=", 0) == 0,
        "mlp load: malformed header '" + header + "'");

  std::vector<int> sizes;
  {
    std::istringstream ss(sizes_kv.substr(6));
    std::string tok;
    while (std::getline(ss, tok, ',')) sizes.push_back(std::stoi(tok));
  }
  const std::string head_str = head_kv.substr(5);
  check(head_str == "identity" || head_str == "sigmoid",
        "mlp load: unknown head '" + head_str + "'");
  Mlp net(sizes, head_str == "identity" ? Head::kIdentity : Head::kSigmoid);

  Eigen::VectorXd flat(net.param_count());
  std::string line;
  int at = 0;
  int line_no = 1;
  while (at < flat.size()) {
    check(static_cast<bool>(std::getline(in, line)), "mlp load: truncated after " +
                                                         std::to_string(at) + " of " +
                                                         std::to_string(flat.size()) + " params");
    ++line_no;
    if (line.empty()) continue;
    size_t pos = 0;
    double v = 0;
    try {
      v = std::stod(line, &pos);
    } catch (const std::exception&) {
      throw std::runtime_error("mlp load: non-numeric line " + std::to_string(line_no));
    }
    check(pos == line.size(), "mlp load: trailing junk on line " + std::to_string(line_no));
    flat[at++] = v;
  }
  net.set_params_flat(flat);
  return net;
}

Mlp Mlp::load(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "mlp load: cannot open " + path);
  return load(in);
}

}  // namespace silem
