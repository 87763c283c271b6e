#include "silem/transform.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace silem {

namespace {

void check(bool ok, const std::string& msg) {
  if (!ok) throw std::runtime_error(msg);
}

// Stacks a tuple batch into an (m·k) x N matrix, one tuple per column.
Eigen::MatrixXd stack_tuples(const std::vector<ObservationTuple>& batch) {
  const int n = static_cast<int>(batch.size());
  const int dim = static_cast<int>(batch[0].values.size());
  Eigen::MatrixXd x(dim, n);
  for (int i = 0; i < n; ++i) {
    check(batch[i].values.size() == dim, "transform update: inconsistent tuple dims in batch");
    x.col(i) = batch[i].values;
  }
  return x;
}

// dL/dy for the loss -mean_i log y_i with y clamped into the sigmoid band.
Eigen::MatrixXd log_d_upstream(const Eigen::MatrixXd& y) {
  return -(1.0 / static_cast<double>(y.cols())) * y.cwiseInverse();
}

void check_loss_finite(double loss, const Eigen::MatrixXd& y, int batch_size) {
  if (std::isfinite(loss)) return;
  std::ostringstream msg;
  msg << "transform update: non-finite loss " << loss << " on batch of " << batch_size
      << " tuples (disc output range [" << y.minCoeff() << ", " << y.maxCoeff() << "])";
  throw std::runtime_error(msg.str());
}

}  // namespace

SequentialAffineTransform::SequentialAffineTransform(int k, double learning_rate, double lr_decay,
                                                     double w_d, double w_b)
    : a_diag_(Eigen::VectorXd::Ones(k)),
      b_(Eigen::VectorXd::Zero(k)),
      learning_rate_(learning_rate),
      lr_decay_(lr_decay),
      w_d_(w_d),
      w_b_(w_b),
      adam_(2 * k, learning_rate) {
  check(k >= 1, "transform: k must be >= 1");
  check(learning_rate > 0.0, "transform: learning rate must be positive");
  check(lr_decay > 0.0 && lr_decay <= 1.0, "transform: lr decay must be in (0, 1]");
}

Eigen::VectorXd SequentialAffineTransform::apply_frame(const Eigen::VectorXd& feature) const {
  check(feature.size() == a_diag_.size(), "transform: frame dim mismatch");
  return a_diag_.cwiseProduct(feature) + b_;
}

ObservationTuple SequentialAffineTransform::apply_tuple(const ObservationTuple& tuple) const {
  const int k = static_cast<int>(a_diag_.size());
  check(tuple.values.size() % k == 0, "transform: tuple length not divisible by k");
  const int m = static_cast<int>(tuple.values.size()) / k;
  ObservationTuple out;
  out.start = tuple.start;
  out.values.resize(tuple.values.size());
  for (int j = 0; j < m; ++j)
    out.values.segment(j * k, k) = a_diag_.cwiseProduct(tuple.values.segment(j * k, k)) + b_;
  return out;
}

double SequentialAffineTransform::update(const Mlp& disc_net,
                                         const std::vector<ObservationTuple>& batch) {
  check(!batch.empty(), "transform update: empty batch");
  const int k = static_cast<int>(a_diag_.size());
  const Eigen::MatrixXd raw = stack_tuples(batch);
  const int mk = static_cast<int>(raw.rows());
  check(mk % k == 0 && mk == disc_net.input_dim(), "transform update: tuple dim mismatch with discriminator");
  const int m = mk / k;
  const int n = static_cast<int>(raw.cols());

  // Transformed batch: the tiled (a, b) act frame-wise on each column.
  Eigen::VectorXd a_tiled(mk), b_tiled(mk);
  for (int j = 0; j < m; ++j) {
    a_tiled.segment(j * k, k) = a_diag_;
    b_tiled.segment(j * k, k) = b_;
  }
  Eigen::MatrixXd x = (raw.array().colwise() * a_tiled.array()).colwise() + b_tiled.array();

  MlpCache cache;
  const Eigen::MatrixXd y = disc_net.forward(x, cache);
  const double disc_term = -y.array().log().mean();
  const double loss = disc_term + w_d_ * (a_diag_.array() - 1.0).square().sum() +
                      w_b_ * b_.array().square().sum();
  check_loss_finite(loss, y, n);

  // Input gradient through the frozen discriminator, folded back onto (a, b):
  // x_r = a[r mod k]·raw_r + b[r mod k] per frame block.
  const Eigen::MatrixXd dx = disc_net.backward(cache, log_d_upstream(y), nullptr);
  const Eigen::VectorXd da_tiled = (dx.array() * raw.array()).rowwise().sum();
  const Eigen::VectorXd db_tiled = dx.rowwise().sum();
  Eigen::VectorXd grad(2 * k);
  grad.setZero();
  for (int j = 0; j < m; ++j) {
    grad.head(k) += da_tiled.segment(j * k, k);
    grad.tail(k) += db_tiled.segment(j * k, k);
  }
  grad.head(k) += 2.0 * w_d_ * (a_diag_.array() - 1.0).matrix();
  grad.tail(k) += 2.0 * w_b_ * b_;

  Eigen::VectorXd params(2 * k);
  params << a_diag_, b_;
  adam_.learning_rate = learning_rate_;
  adam_.step(params, grad);
  a_diag_ = params.head(k);
  b_ = params.tail(k);
  learning_rate_ *= lr_decay_;
  return loss;
}

void SequentialAffineTransform::save(const std::string& path) const {
  std::ofstream out(path);
  check(out.good(), "transform save: cannot open " + path);
  const int k = static_cast<int>(a_diag_.size());
  out << "#silem-transform v1 k=" << k << "\n";
  char buf[64];
  out << "a:";
  for (int i = 0; i < k; ++i) {
    std::snprintf(buf, sizeof buf, " %.17g", a_diag_[i]);
    out << buf;
  }
  out << "\nb:";
  for (int i = 0; i < k; ++i) {
    std::snprintf(buf, sizeof buf, " %.17g", b_[i]);
    out << buf;
  }
  out << "\n";
  check(out.good(), "transform save: write failed for " + path);
}

SequentialAffineTransform SequentialAffineTransform::load(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "transform load: cannot open " + path);
  std::string magic, version, k_kv;
  in >> magic >> version >> k_kv;
  check(magic == "#silem-transform", path + ":1: not a transform file");
  check(version == "v1", path + ":1: unsupported version '" + version + "'");
  check(k_kv.rfind("k=", 0) == 0, path + ":1: missing k= field");
  const int k = std::stoi(k_kv.substr(2));
  check(k >= 1, path + ":1: invalid k");

  SequentialAffineTransform t(k, 1e-3, 1.0, 1.0, 1.0);
  auto read_vector = [&](const std::string& tag, int line) -> Eigen::VectorXd {
    std::string got;
    in >> got;
    check(in.good() && got == tag,
          path + ":" + std::to_string(line) + ": expected '" + tag + "' line");
    Eigen::VectorXd v(k);
    for (int i = 0; i < k; ++i) {
      if (!(in >> v[i]))
        throw std::runtime_error(path + ":" + std::to_string(line) + ": bad value " +
                                 std::to_string(i) + " on '" + tag + "' line");
    }
    return v;
  };
  t.a_diag_ = read_vector("a:", 2);
  t.b_ = read_vector("b:", 3);
  return t;
}

TransformAblationMlp::TransformAblationMlp(int k, double learning_rate, double lr_decay,
                                           double w_d, Rng& rng)
    : net_(Mlp::random({k, 100, k}, Head::kIdentity, rng)),
      learning_rate_(learning_rate),
      lr_decay_(lr_decay),
      w_d_(w_d),
      adam_(net_.param_count(), learning_rate) {
  check(learning_rate > 0.0, "mlp transform: learning rate must be positive");
  check(lr_decay > 0.0 && lr_decay <= 1.0, "mlp transform: lr decay must be in (0, 1]");
}

Eigen::VectorXd TransformAblationMlp::apply_frame(const Eigen::VectorXd& feature) const {
  check(feature.size() == net_.input_dim(), "mlp transform: frame dim mismatch");
  return net_.forward(feature);
}

ObservationTuple TransformAblationMlp::apply_tuple(const ObservationTuple& tuple) const {
  const int k = net_.input_dim();
  check(tuple.values.size() % k == 0, "mlp transform: tuple length not divisible by k");
  const int m = static_cast<int>(tuple.values.size()) / k;
  ObservationTuple out;
  out.start = tuple.start;
  out.values.resize(tuple.values.size());
  for (int j = 0; j < m; ++j)
    out.values.segment(j * k, k) = net_.forward(tuple.values.segment(j * k, k).eval());
  return out;
}

double TransformAblationMlp::update(const Mlp& disc_net,
                                    const std::vector<ObservationTuple>& batch) {
  check(!batch.empty(), "mlp transform update: empty batch");
  const int k = net_.input_dim();
  const Eigen::MatrixXd raw = stack_tuples(batch);
  const int mk = static_cast<int>(raw.rows());
  check(mk % k == 0 && mk == disc_net.input_dim(),
        "mlp transform update: tuple dim mismatch with discriminator");
  const int m = mk / k;
  const int n = static_cast<int>(raw.cols());

  // All m·N frames through the transform net in one batch, then re-stacked
  // into discriminator inputs column by column.
  Eigen::MatrixXd frames(k, m * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) frames.col(i * m + j) = raw.col(i).segment(j * k, k);
  MlpCache tcache;
  const Eigen::MatrixXd tframes = net_.forward(frames, tcache);
  Eigen::MatrixXd x(mk, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) x.col(i).segment(j * k, k) = tframes.col(i * m + j);

  MlpCache dcache;
  const Eigen::MatrixXd y = disc_net.forward(x, dcache);
  const Eigen::VectorXd params = net_.params_flat();
  const double loss = -y.array().log().mean() + w_d_ * params.squaredNorm();
  check_loss_finite(loss, y, n);

  const Eigen::MatrixXd dx = disc_net.backward(dcache, log_d_upstream(y), nullptr);
  Eigen::MatrixXd dframes(k, m * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) dframes.col(i * m + j) = dx.col(i).segment(j * k, k);
  MlpGrad grad = net_.zero_grad();
  net_.backward(tcache, dframes, &grad);

  Eigen::VectorXd flat = grad.flat() + 2.0 * w_d_ * params;
  Eigen::VectorXd p = params;
  adam_.learning_rate = learning_rate_;
  adam_.step(p, flat);
  net_.set_params_flat(p);
  learning_rate_ *= lr_decay_;
  return loss;
}

}  // namespace silem
