#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>

#include "mvcs/mvcs_core.hpp"
#include "mvcs/numkernel/linalg.hpp"
#include "mvcs/numkernel/optim.hpp"
#include "mvcs/orderstats.hpp"

namespace mvcs {

namespace {

double exponent_chain(double p_raw) {
  const double a = std::abs(p_raw);
  if (a <= kMinExponent || a >= kMaxExponent) return 0.0;
  return p_raw >= 0.0 ? 1.0 : -1.0;
}

Vector signs(const Vector& v) {
  return v.unaryExpr([](double x) { return x >= 0.0 ? 1.0 : -1.0; });
}

}  // namespace

MultiNormRegion MultiNormState::region() const {
  MultiNormRegion out;
  out.rotation = qr_rotation(q_raw);
  out.center = mu;
  for (const Vector& d : d_raw) out.scales.push_back(d.cwiseAbs());
  for (double p : p_raw) out.p.push_back(clamp_exponent(std::abs(p)));
  return out;
}

MultiNormLoss multi_norm_loss(const MultiNormState& state, const Matrix& points, std::size_t r) {
  const auto k = points.cols();
  const MultiNormRegion region = state.region();
  region.validate();
  if (region.dim() != k) throw std::invalid_argument("multi_norm_loss: dimension mismatch");
  const std::size_t m = region.orthant_count();
  const auto n = static_cast<std::size_t>(points.rows());

  MultiNormLoss out;
  out.orthant_counts.assign(m, 0);
  std::vector<double> dist(n);
  std::vector<std::size_t> orthant(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vector z = region.rotation * (points.row(static_cast<Eigen::Index>(i)).transpose() - region.center);
    const std::size_t j = orthant_index(z);
    orthant[i] = j;
    ++out.orthant_counts[j];
    dist[i] = p_norm(region.scales[j].cwiseProduct(z), region.p[j]);
  }
  const RankedValue sr = kth_largest(dist, r);
  if (!(sr.value > 0.0)) throw NonFiniteError("multi_norm_loss: sigma_r is zero");

  const double kd = static_cast<double>(k);
  std::vector<double> log_terms(m);
  for (std::size_t j = 0; j < m; ++j) {
    log_terms[j] = unit_pball_log_volume(region.p[j], static_cast<int>(k)) -
                   region.scales[j].array().log().sum();
  }
  const double lse = log_sum_exp(log_terms);
  out.value = kd * std::log(sr.value) + lse - std::log(static_cast<double>(m));
  if (!std::isfinite(out.value)) throw NonFiniteError("multi_norm_loss: non-finite loss");

  out.grad_d_raw.assign(m, Vector::Zero(k));
  out.grad_p_raw.assign(m, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    const double w = std::exp(log_terms[j] - lse);
    out.grad_d_raw[j] = -w * state.d_raw[j].cwiseInverse();
    out.grad_p_raw[j] = w * unit_pball_log_volume_dp(region.p[j], static_cast<int>(k));
  }

  const std::size_t js = orthant[sr.index];
  const Vector diff = points.row(static_cast<Eigen::Index>(sr.index)).transpose() - region.center;
  const Vector z = region.rotation * diff;
  const Vector& scale = region.scales[js];
  const PNormValue nv = p_norm_with_grad(scale.cwiseProduct(z), region.p[js]);
  const double c = kd / sr.value;
  const Vector d_z = c * scale.cwiseProduct(nv.d_v);
  out.grad_d_raw[js] += c * nv.d_v.cwiseProduct(z).cwiseProduct(signs(state.d_raw[js]));
  out.grad_p_raw[js] += c * nv.d_p;
  for (std::size_t j = 0; j < m; ++j) out.grad_p_raw[j] *= exponent_chain(state.p_raw[j]);
  out.grad_mu = -region.rotation.transpose() * d_z;
  out.grad_q_raw = qr_rotation_backward(state.q_raw, d_z * diff.transpose());
  return out;
}

MultiNormState fit_multi_norm(const Matrix& points, std::size_t r, const FirstOrderOptions& opts) {
  const auto n = static_cast<std::size_t>(points.rows());
  const auto k = points.cols();
  if (n == 0 || k == 0) throw std::invalid_argument("fit_multi_norm: empty point cloud");
  if (r < 1 || r >= n) throw std::invalid_argument("fit_multi_norm: need n > r >= 1");
  if (k > 16) throw std::invalid_argument("fit_multi_norm: too many orthants for k > 16");
  if (opts.epochs < 1) throw std::invalid_argument("fit_multi_norm: epochs must be positive");
  const std::size_t m = std::size_t{1} << k;

  // Start from the principal axes of the sample covariance.
  const SymEig eig = sym_eig(sample_covariance(points));
  Matrix v = eig.vectors;
  if (v.determinant() < 0.0) v.col(0) *= -1.0;
  MultiNormState st;
  st.q_raw = v.transpose();
  st.mu = sample_mean(points);
  const Vector d0 = (eig.values.array().max(0.0) + 1e-6).rsqrt();
  st.d_raw.assign(m, d0);
  st.p_raw.assign(m, opts.p_init);

  const auto initial = multi_norm_loss(st, points, r);
  for (std::size_t j = 0; j < m; ++j) {
    if (initial.orthant_counts[j] == 0) {
      std::cerr << "warning: fit_multi_norm: orthant " << j << " holds no points at initialization\n";
    }
  }

  AdamState adam_q(k, k), adam_mu(k, 1);
  std::vector<AdamState> adam_d(m, AdamState(k, 1)), adam_p(m, AdamState(1, 1));
  MultiNormState best = st;
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> counts = initial.orthant_counts;
  for (int epoch = 0; epoch <= opts.epochs; ++epoch) {
    const MultiNormLoss loss = multi_norm_loss(st, points, r);
    st.objective_trace.push_back(loss.value);
    if (loss.value < best_loss) {
      best_loss = loss.value;
      best.q_raw = st.q_raw;
      best.d_raw = st.d_raw;
      best.p_raw = st.p_raw;
      best.mu = st.mu;
      counts = loss.orthant_counts;
    }
    if (epoch == opts.epochs) break;
    const double lr_m = cosine_annealing_lr(opts.lr_matrix, epoch, opts.epochs);
    adam_step(st.q_raw, loss.grad_q_raw, adam_q, lr_m);
    adam_step(st.mu, loss.grad_mu, adam_mu, cosine_annealing_lr(opts.lr_center, epoch, opts.epochs));
    for (std::size_t j = 0; j < m; ++j) {
      // Orthants without points keep their parameters.
      if (loss.orthant_counts[j] == 0) continue;
      adam_step(st.d_raw[j], loss.grad_d_raw[j], adam_d[j], lr_m);
      if (opts.learn_p) {
        Matrix p(1, 1), gp(1, 1);
        p(0, 0) = st.p_raw[j];
        gp(0, 0) = loss.grad_p_raw[j];
        adam_step(p, gp, adam_p[j], cosine_annealing_lr(opts.lr_p, epoch, opts.epochs));
        st.p_raw[j] = p(0, 0);
      }
    }
  }
  best.objective_trace = std::move(st.objective_trace);
  best.empty_orthants.clear();
  for (std::size_t j = 0; j < m; ++j)
    if (counts[j] == 0) best.empty_orthants.push_back(j);
  return best;
}

MultiNormRegion recover_region(const MultiNormState& state, const Matrix& points, std::size_t r) {
  MultiNormRegion region = state.region();
  std::vector<double> d(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    d[static_cast<std::size_t>(i)] = multinorm_distance(points.row(i).transpose(), region);
  const double sr = kth_largest(d, r).value;
  if (!(sr > 0.0)) throw SingularMatrixError("recover_region: sigma_r is zero");
  for (Vector& s : region.scales) s /= sr;
  return region;
}

}  // namespace mvcs
