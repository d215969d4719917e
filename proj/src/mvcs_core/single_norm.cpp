#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mvcs/mvcs_core.hpp"
#include "mvcs/numkernel/linalg.hpp"
#include "mvcs/numkernel/optim.hpp"
#include "mvcs/orderstats.hpp"

namespace mvcs {

namespace {

void check_fit_input(const Matrix& points, std::size_t r) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (n == 0 || points.cols() == 0) throw std::invalid_argument("mvcs: empty point cloud");
  if (r < 1 || r >= n) throw std::invalid_argument("mvcs: need n > r >= 1");
  if (!points.allFinite()) throw std::invalid_argument("mvcs: non-finite points");
  if ((points.rowwise() - points.row(0)).cwiseAbs().maxCoeff() == 0.0) {
    throw std::invalid_argument("mvcs: all points are identical");
  }
}

// d p / d p_raw for p = clamp(|p_raw|); zero once the clamp is active.
double exponent_chain(double p_raw) {
  const double a = std::abs(p_raw);
  if (a <= kMinExponent || a >= kMaxExponent) return 0.0;
  return p_raw >= 0.0 ? 1.0 : -1.0;
}

}  // namespace

Matrix SingleNormState::lambda() const {
  return a * a.transpose() + kLogDetRidge * Matrix::Identity(a.rows(), a.cols());
}

SingleNormLoss single_norm_loss(const SingleNormState& state, const Matrix& points, std::size_t r) {
  const auto k = points.cols();
  if (state.a.rows() != k || state.a.cols() != k || state.mu.size() != k) {
    throw std::invalid_argument("single_norm_loss: dimension mismatch");
  }
  const double p = state.effective_p();
  const Matrix lambda = state.lambda();
  const Matrix shifted = points.rowwise() + state.mu.transpose();
  const auto scores = affine_scores(lambda, Vector::Zero(k), shifted, p);
  const RankedValue sr = kth_largest(scores, r);
  if (!(sr.value > 0.0)) throw NonFiniteError("single_norm_loss: sigma_r is zero");

  const double kd = static_cast<double>(k);
  Eigen::LLT<Matrix> llt(lambda);
  SingleNormLoss out;
  out.active_index = sr.index;
  out.value = -log_det(lambda) + kd * std::log(sr.value) + unit_pball_log_volume(p, static_cast<int>(k));

  const Vector z = shifted.row(static_cast<Eigen::Index>(sr.index)).transpose();
  const PNormValue nv = p_norm_with_grad(lambda * z, p);
  const double scale = kd / sr.value;
  const Matrix g_lambda = -llt.solve(Matrix::Identity(k, k)) + scale * nv.d_v * z.transpose();
  out.grad_a = (g_lambda + g_lambda.transpose()) * state.a;
  out.grad_mu = scale * lambda.transpose() * nv.d_v;
  out.grad_p_raw =
      (scale * nv.d_p + unit_pball_log_volume_dp(p, static_cast<int>(k))) * exponent_chain(state.p_raw);
  if (!std::isfinite(out.value)) throw NonFiniteError("single_norm_loss: non-finite loss");
  return out;
}

SingleNormState fit_single_norm(const Matrix& points, std::size_t r, const FirstOrderOptions& opts,
                                const SingleNormState* init) {
  check_fit_input(points, r);
  if (opts.epochs < 1) throw std::invalid_argument("fit_single_norm: epochs must be positive");
  const auto k = points.cols();
  SingleNormState st;
  if (init != nullptr) {
    st = *init;
  } else {
    const Matrix lambda0 = inverse_sqrt_spd(sample_covariance(points), 1e-6);
    st.a = Eigen::LLT<Matrix>(lambda0).matrixL();
    st.mu = -sample_mean(points);
    st.p_raw = opts.p_init;
  }
  st.objective_trace.clear();

  AdamState adam_a(k, k), adam_mu(k, 1), adam_p(1, 1);
  SingleNormState best = st;
  double best_loss = std::numeric_limits<double>::infinity();
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    const SingleNormLoss loss = single_norm_loss(st, points, r);
    st.objective_trace.push_back(loss.value);
    if (loss.value < best_loss) {
      best_loss = loss.value;
      best.a = st.a;
      best.mu = st.mu;
      best.p_raw = st.p_raw;
    }
    adam_step(st.a, loss.grad_a, adam_a, cosine_annealing_lr(opts.lr_matrix, epoch, opts.epochs));
    adam_step(st.mu, loss.grad_mu, adam_mu, cosine_annealing_lr(opts.lr_center, epoch, opts.epochs));
    if (opts.learn_p) {
      Matrix p(1, 1), gp(1, 1);
      p(0, 0) = st.p_raw;
      gp(0, 0) = loss.grad_p_raw;
      adam_step(p, gp, adam_p, cosine_annealing_lr(opts.lr_p, epoch, opts.epochs));
      st.p_raw = p(0, 0);
    }
  }
  const double final_loss = single_norm_loss(st, points, r).value;
  st.objective_trace.push_back(final_loss);
  if (final_loss < best_loss) return st;
  best.objective_trace = std::move(st.objective_trace);
  return best;
}

PNormBall recover_ball(const SingleNormState& state, const Matrix& points, std::size_t r) {
  const double p = state.effective_p();
  const Matrix lambda = state.lambda();
  const auto k = points.cols();
  const Matrix shifted = points.rowwise() + state.mu.transpose();
  const double sr = kth_largest(affine_scores(lambda, Vector::Zero(k), shifted, p), r).value;
  if (!(sr > 0.0)) throw SingularMatrixError("recover_ball: sigma_r is zero");
  PNormBall ball;
  ball.p = p;
  ball.shape = lambda / sr;
  ball.center = -state.mu;
  std::vector<double> d(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    d[static_cast<std::size_t>(i)] = ball.distance(points.row(i).transpose());
  ball.radius = std::max(1.0, kth_largest(d, r).value);
  return ball;
}

}  // namespace mvcs
