#pragma once

#include <cstdint>
#include <vector>

#include "mvcs/geometry.hpp"
#include "mvcs/types.hpp"

// Minimum-volume covering sets over a point cloud. Points are passed as an
// n x k matrix with one point per row; r is the number of points allowed to
// fall outside (the set keeps at least n - r + 1 of them).

namespace mvcs {

// ---------------------------------------------------------------------------
// Fixed-norm problem: min -log det(Lambda) + sigma_r{ ||Lambda y_i + eta||_p }
// ---------------------------------------------------------------------------

struct DcState {
  Matrix lambda;
  Vector eta;
  std::vector<double> objective_trace;
};

struct Subgradient {
  Matrix g_lambda;
  Vector g_eta;
};

/// Scores ||Lambda y_i + eta||_p for every row of `points`.
std::vector<double> affine_scores(const Matrix& lambda, const Vector& eta, const Matrix& points,
                                  double p);

/// -log det(Lambda) + sigma_r of the scores; +inf when Lambda is singular.
double dc_objective(const DcState& state, const Matrix& points, std::size_t r, double p);

/// Subgradient of (r-1) * mean of the r-1 largest scores, i.e. the concave part
/// that DCA linearizes. Requires r >= 2.
Subgradient dca_subgradient(const DcState& state, const Matrix& points, std::size_t r, double p);

struct DcaOptions {
  int max_outer = 100;
  double outer_tol = 1e-7;
  /// Duality-gap target of each convex subproblem, relative to its objective.
  double subproblem_tol = 1e-9;
  int max_inner = 5000;
};

/// Empirical-covariance starting point: Lambda = Sigma^{-1/2}, eta = -Lambda * mean,
/// rescaled along (c Lambda, c eta) to the optimal c = k / sigma_r.
DcState covariance_init(const Matrix& points, std::size_t r, double p);

/// Difference-of-convex iterations. Each step linearizes the (r-1)-top sum and
/// solves the remaining convex problem; a step is only taken when it does not
/// increase the linearized objective, so the trace is nonincreasing.
DcState fit_dca(const Matrix& points, std::size_t r, double p, const DcState* init = nullptr,
                const DcaOptions& opts = {});

/// Convex relaxation: min -log det Lambda + sum max(s_i - nu, 0) + r nu.
DcState fit_convex_relaxation(const Matrix& points, std::size_t r, double p, const DcState* init = nullptr,
                              const DcaOptions& opts = {});

/// Value of the relaxed objective at (Lambda, eta), minimized over nu
/// (equals -log det Lambda + sum of the r largest scores).
double relaxation_objective(const DcState& state, const Matrix& points, std::size_t r, double p);

struct ConvexSplit {
  double f = 0.0;  // -log det Lambda + r * mean of the r largest scores
  double g = 0.0;  // (r-1) * mean of the r-1 largest scores
};
ConvexSplit dc_split(const DcState& state, const Matrix& points, std::size_t r, double p);

/// Covering ball recovered from a fixed-norm solution:
/// M = Lambda / sigma_r, mu = -Lambda^{-1} eta.
PNormBall recover_ball(const DcState& state, const Matrix& points, std::size_t r, double p);

// ---------------------------------------------------------------------------
// Learned single exponent, first-order
// ---------------------------------------------------------------------------

inline constexpr double kLogDetRidge = 1e-8;

struct SingleNormState {
  Matrix a;  // Lambda = A A^T + eps I
  Vector mu;  // residuals are (y + mu)
  double p_raw = 2.0;
  std::vector<double> objective_trace;

  double effective_p() const { return clamp_exponent(std::abs(p_raw)); }
  Matrix lambda() const;
};

struct SingleNormLoss {
  double value = 0.0;
  Matrix grad_a;
  Vector grad_mu;
  double grad_p_raw = 0.0;
  std::size_t active_index = 0;  // point carrying the sigma_r gradient
};

/// -log det(Lambda) + k log sigma_r{ ||Lambda (y_i + mu)||_p } + log vol(unit p-ball).
SingleNormLoss single_norm_loss(const SingleNormState& state, const Matrix& points, std::size_t r);

struct FirstOrderOptions {
  int epochs = 3000;
  double lr_matrix = 0.01;
  double lr_center = 0.01;
  double lr_p = 0.01;
  double p_init = 2.0;
  bool learn_p = true;
};

/// Adam with cosine-annealed learning rates from the covariance start; returns
/// the lowest-loss iterate.
SingleNormState fit_single_norm(const Matrix& points, std::size_t r, const FirstOrderOptions& opts = {},
                                const SingleNormState* init = nullptr);

/// Covering ball of a single-norm fit, centered at -mu.
PNormBall recover_ball(const SingleNormState& state, const Matrix& points, std::size_t r);

// ---------------------------------------------------------------------------
// Multi-norm: one (diagonal scaling, exponent) per orthant of a rotated frame
// ---------------------------------------------------------------------------

struct MultiNormState {
  Matrix q_raw;                // rotation = qr_rotation(q_raw)
  std::vector<Vector> d_raw;   // D_j = |d_raw_j|
  std::vector<double> p_raw;   // p_j = clamp(|p_raw_j|)
  Vector mu;
  std::vector<double> objective_trace;
  std::vector<std::size_t> empty_orthants;  // orthants that held no points when fitting ended

  MultiNormRegion region() const;
};

struct MultiNormLoss {
  double value = 0.0;
  Matrix grad_q_raw;
  std::vector<Vector> grad_d_raw;
  std::vector<double> grad_p_raw;
  Vector grad_mu;
  std::vector<std::size_t> orthant_counts;
};

/// k log sigma_r{ d(y_i) } + log( (1/m) sum_j vol(unit p_j-ball) / det D_j ).
MultiNormLoss multi_norm_loss(const MultiNormState& state, const Matrix& points, std::size_t r);

MultiNormState fit_multi_norm(const Matrix& points, std::size_t r, const FirstOrderOptions& opts = {});

/// Region scaled so that the sigma_r-th point lies on its boundary.
MultiNormRegion recover_region(const MultiNormState& state, const Matrix& points, std::size_t r);

/// Empirical mean and covariance of the rows.
Vector sample_mean(const Matrix& points);
Matrix sample_covariance(const Matrix& points);

}  // namespace mvcs
