#include "mvcs/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "mvcs/geometry.hpp"
#include "mvcs/mvcs_core.hpp"
#include "mvcs/numkernel/linalg.hpp"
#include "mvcs/numkernel/optim.hpp"

namespace mvcs {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double ellipsoid_log_volume(double log_det_sigma, int k, double q) {
  if (q == 0.0) return -kInf;
  if (std::isinf(q)) return kInf;
  return unit_pball_log_volume(2.0, k) + 0.5 * log_det_sigma + k * std::log(q);
}

Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

// Minibatch Adam on the pinball loss at level tau, keeping the best validation weights.
Mlp train_quantile_net(Mlp net, const Dataset& train, const Dataset& val, double tau, const TrainConfig& cfg,
                       std::uint64_t seed) {
  const Dataset& vset = val.empty() ? train : val;
  std::mt19937_64 rng(seed);
  MlpAdam adam(net);
  Mlp best = net;
  double best_val = pinball_batch_loss(net, vset.x, vset.y, tau, false).value;
  std::vector<std::size_t> perm(train.size());
  std::iota(perm.begin(), perm.end(), 0);
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs_pinball; ++epoch) {
    const double lr = cosine_annealing_lr(cfg.lr_pinball, epoch, cfg.epochs_pinball);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t s = 0; s < perm.size(); s += bs) {
      const std::vector<std::size_t> idx(perm.begin() + static_cast<std::ptrdiff_t>(s),
                                         perm.begin() + static_cast<std::ptrdiff_t>(std::min(perm.size(), s + bs)));
      const PinballLoss loss = pinball_batch_loss(net, gather_rows(train.x, idx), gather_rows(train.y, idx), tau);
      if (!std::isfinite(loss.value)) throw NonFiniteError("fit_naive_qr: non-finite pinball loss");
      adam.step(net, loss.grads, lr);
    }
    const double v = pinball_batch_loss(net, vset.x, vset.y, tau, false).value;
    if (v < best_val) {
      best_val = v;
      best = net;
    }
  }
  return best;
}

}  // namespace

double tilde_alpha(double alpha, int k) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("tilde_alpha: alpha must be in (0, 1)");
  if (k < 1) throw std::invalid_argument("tilde_alpha: k must be >= 1");
  // -expm1(log1p(-alpha)/k) = 1 - (1 - alpha)^(1/k) without cancellation
  return -2.0 * std::expm1(std::log1p(-alpha) / static_cast<double>(k));
}

double pinball_loss(double pred, double y, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("pinball_loss: tau must be in (0, 1)");
  const double d = y - pred;
  return d >= 0.0 ? tau * d : (tau - 1.0) * d;
}

PinballLoss pinball_batch_loss(const Mlp& net, const Matrix& x, const Matrix& y, double tau, bool with_grads) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("pinball_batch_loss: tau must be in (0, 1)");
  if (x.rows() != y.rows() || x.rows() == 0 || y.cols() != net.output_width()) {
    throw std::invalid_argument("pinball_batch_loss: batch shape mismatch");
  }
  MlpTape tape;
  const Matrix pred = mlp_forward(net, Matrix(x.transpose()), with_grads ? &tape : nullptr);
  const Matrix yt = y.transpose();
  const double n = static_cast<double>(x.rows());
  PinballLoss out;
  Matrix up(pred.rows(), pred.cols());
  for (Eigen::Index j = 0; j < pred.cols(); ++j) {
    for (Eigen::Index i = 0; i < pred.rows(); ++i) {
      out.value += pinball_loss(pred(i, j), yt(i, j), tau);
      up(i, j) = (yt(i, j) - pred(i, j) > 0.0 ? -tau : 1.0 - tau) / n;
    }
  }
  out.value /= n;
  if (with_grads) out.grads = mlp_gradients(net, tape, up);
  return out;
}

std::vector<double> QuantileNets::scores(const Matrix& x, const Matrix& y) const {
  if (x.rows() != y.rows() || y.cols() != response_dim()) throw std::invalid_argument("naive_qr: shape mismatch");
  const Matrix xt = x.transpose();
  const Matrix lo = mlp_forward(lower, xt);
  const Matrix hi = mlp_forward(upper, xt);
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index j = 0; j < x.rows(); ++j) {
    double s = -kInf;
    for (Eigen::Index i = 0; i < lo.rows(); ++i) s = std::max({s, lo(i, j) - y(j, i), y(j, i) - hi(i, j)});
    out[static_cast<std::size_t>(j)] = s;
  }
  return out;
}

std::vector<double> QuantileNets::log_volumes(const Matrix& x, double q) const {
  const Matrix xt = x.transpose();
  const Matrix lo = mlp_forward(lower, xt);
  const Matrix hi = mlp_forward(upper, xt);
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index j = 0; j < x.rows(); ++j) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < lo.rows(); ++i) {
      const double w = std::isinf(q) ? q : std::max(0.0, hi(i, j) - lo(i, j) + 2.0 * q);
      acc += std::log(w);
    }
    out[static_cast<std::size_t>(j)] = acc;
  }
  return out;
}

QuantileNets fit_naive_qr(const Dataset& train, const Dataset& val, double alpha, const TrainConfig& cfg) {
  return fit_quantile_nets(train, val, tilde_alpha(alpha, train.y_dim()), cfg);
}

QuantileNets fit_quantile_nets(const Dataset& train, const Dataset& val, double level, const TrainConfig& cfg) {
  cfg.validate();
  train.validate();
  if (train.empty()) throw std::invalid_argument("fit_quantile_nets: empty training set");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("fit_quantile_nets: level must be in (0, 1)");
  QuantileNets nets;
  nets.tilde_alpha = level;
  const CenterModel proto_lo =
      CenterModel::create(train.x_dim(), train.y_dim(), cfg.hidden_center, cfg.layers_center, cfg.seed + 11);
  const CenterModel proto_hi =
      CenterModel::create(train.x_dim(), train.y_dim(), cfg.hidden_center, cfg.layers_center, cfg.seed + 12);
  nets.lower = train_quantile_net(proto_lo.net, train, val, nets.tilde_alpha / 2.0, cfg, cfg.seed ^ 0x9b1ULL);
  nets.upper = train_quantile_net(proto_hi.net, train, val, 1.0 - nets.tilde_alpha / 2.0, cfg, cfg.seed ^ 0x9b2ULL);
  return nets;
}

double naive_qr_score(const QuantileNets& nets, const Vector& x, const Vector& y) { return nets.score(x, y); }

double naive_qr_volume(const QuantileNets& nets, const Vector& x, double q_hat) {
  return std::exp(nets.log_volume(x, q_hat));
}

Matrix ridged_covariance(const Matrix& residuals) {
  const auto k = residuals.cols();
  if (residuals.rows() < 2) throw std::invalid_argument("covariance baseline: need at least two residuals");
  Matrix sigma = sample_covariance(residuals);
  sigma += 1e-8 * (sigma.trace() / static_cast<double>(k)) * Matrix::Identity(k, k);
  return sigma;
}

std::vector<double> CovBaseline::scores(const Matrix& x, const Matrix& y) const {
  const Matrix z = sigma_half_inv * (y - center.predict(x)).transpose();
  std::vector<double> out(static_cast<std::size_t>(z.cols()));
  for (Eigen::Index i = 0; i < z.cols(); ++i) out[static_cast<std::size_t>(i)] = z.col(i).norm();
  return out;
}

std::vector<double> CovBaseline::log_volumes(const Matrix& x, double q) const {
  return std::vector<double>(static_cast<std::size_t>(x.rows()), ellipsoid_log_volume(log_det(sigma), response_dim(), q));
}

CovBaseline fit_empirical_cov(const Dataset& train, const CenterModel& center) {
  train.validate();
  if (train.size() < static_cast<std::size_t>(train.y_dim())) {
    throw std::invalid_argument("fit_empirical_cov: fewer residuals than response dimensions");
  }
  CovBaseline cb;
  cb.center = center;
  cb.sigma = ridged_covariance(train.y - center.predict(train.x));
  cb.sigma_half_inv = inverse_sqrt_spd(cb.sigma);
  return cb;
}

std::vector<std::size_t> LocalCovBaseline::neighbors(const Vector& x) const {
  const auto n = static_cast<std::size_t>(train_x.rows());
  const auto m = std::min<std::size_t>(n, static_cast<std::size_t>(m_neighbors));
  const Vector d2 = (train_x.rowwise() - x.transpose()).rowwise().squaredNorm();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  auto closer = [&d2](std::size_t a, std::size_t b) {
    const auto ia = static_cast<Eigen::Index>(a), ib = static_cast<Eigen::Index>(b);
    return d2(ia) != d2(ib) ? d2(ia) < d2(ib) : a < b;
  };
  std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(m - 1), idx.end(), closer);
  idx.resize(m);
  std::sort(idx.begin(), idx.end(), closer);
  return idx;
}

Matrix LocalCovBaseline::local_sigma(const Vector& x) const {
  auto idx = neighbors(x);
  std::sort(idx.begin(), idx.end());
  return ridged_covariance(gather_rows(train_residuals, idx));
}

std::vector<double> LocalCovBaseline::scores(const Matrix& x, const Matrix& y) const {
  const Matrix resid = y - center.predict(x);
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Matrix s = inverse_sqrt_spd(local_sigma(x.row(i).transpose()));
    out[static_cast<std::size_t>(i)] = (s * resid.row(i).transpose()).norm();
  }
  return out;
}

std::vector<double> LocalCovBaseline::log_volumes(const Matrix& x, double q) const {
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out[static_cast<std::size_t>(i)] =
        ellipsoid_log_volume(log_det(local_sigma(x.row(i).transpose())), response_dim(), q);
  }
  return out;
}

LocalCovBaseline fit_local_cov(const Dataset& train, const CenterModel& center, int m_neighbors) {
  train.validate();
  if (m_neighbors < 2) throw std::invalid_argument("fit_local_cov: need at least two neighbours");
  LocalCovBaseline lb;
  lb.center = center;
  lb.train_x = train.x;
  lb.train_residuals = train.y - center.predict(train.x);
  lb.m_neighbors = m_neighbors;
  if (static_cast<std::size_t>(m_neighbors) > train.size()) {
    std::cerr << "warning: fit_local_cov: m = " << m_neighbors << " exceeds training size " << train.size()
              << "; using all points\n";
    lb.m_neighbors = static_cast<int>(train.size());
  }
  if (lb.m_neighbors < train.y_dim() + 1) {
    std::cerr << "warning: fit_local_cov: m <= k, local covariances rely on the ridge\n";
  }
  return lb;
}

}  // namespace mvcs
