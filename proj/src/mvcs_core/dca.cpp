#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>

#include "mvcs/mvcs_core.hpp"
#include "mvcs/numkernel/linalg.hpp"
#include "mvcs/orderstats.hpp"

namespace mvcs {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_problem(const Matrix& points, std::size_t r, double p, std::size_t min_r) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (points.cols() < 1 || n == 0) throw std::invalid_argument("mvcs: empty point cloud");
  if (r < min_r || r > n) {
    throw std::invalid_argument("mvcs: rank r=" + std::to_string(r) + " out of range for n=" + std::to_string(n));
  }
  if (!(p > 0.0) || !std::isfinite(p)) throw std::invalid_argument("mvcs: exponent must be positive");
  if (!points.allFinite()) throw std::invalid_argument("mvcs: non-finite points");
}

// Convex subproblem
//   min  -log det L + (sum of the r largest s_i) - <G_L, L> - <G_e, e>,
//   s_i = ||L y_i + e||_p,
// written as -log det L + sum_i max(s_i - nu, 0) + r nu - <G, (L, e)> and solved
// with a log barrier on the epigraph variables t_i >= s_i - nu, t_i >= 0. The
// t_i are minimized out in closed form, leaving a smooth problem in (L, e, nu)
// that BFGS handles; the barrier weight tau is increased until the duality gap
// bound 2n / tau drops under the tolerance.
class BarrierSubproblem {
 public:
  BarrierSubproblem(const Matrix& points, std::size_t r, double p, const Matrix& g_lambda, const Vector& g_eta)
      : points_(points), r_(r), p_(p), g_lambda_(g_lambda), g_eta_(g_eta), k_(points.cols()) {}

  Eigen::Index size() const { return k_ * (k_ + 1) / 2 + k_ + 1; }

  Vector pack(const Matrix& lambda, const Vector& eta, double nu) const {
    Vector x(size());
    Eigen::Index c = 0;
    for (Eigen::Index a = 0; a < k_; ++a)
      for (Eigen::Index b = a; b < k_; ++b) x(c++) = 0.5 * (lambda(a, b) + lambda(b, a));
    x.segment(c, k_) = eta;
    x(c + k_) = nu;
    return x;
  }

  void unpack(const Vector& x, Matrix& lambda, Vector& eta, double& nu) const {
    lambda.resize(k_, k_);
    Eigen::Index c = 0;
    for (Eigen::Index a = 0; a < k_; ++a)
      for (Eigen::Index b = a; b < k_; ++b) lambda(a, b) = lambda(b, a) = x(c++);
    eta = x.segment(c, k_);
    nu = x(c + k_);
  }

  // Linearized objective -log det L + top-r sum - <G, (L, e)>.
  double objective(const Matrix& lambda, const Vector& eta) const {
    Eigen::LLT<Matrix> llt(lambda);
    if (llt.info() != Eigen::Success) return kInf;
    const double ld = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    if (!std::isfinite(ld)) return kInf;
    const auto s = affine_scores(lambda, eta, points_, p_);
    return -ld + mean_top_r(s, r_) * static_cast<double>(r_) - (g_lambda_.cwiseProduct(lambda)).sum() -
           g_eta_.dot(eta);
  }

  double barrier_value(const Vector& x, double tau, Vector* grad) const {
    Matrix lambda;
    Vector eta;
    double nu;
    unpack(x, lambda, eta, nu);
    Eigen::LLT<Matrix> llt(lambda);
    if (llt.info() != Eigen::Success) return kInf;
    const Vector diag = llt.matrixL().toDenseMatrix().diagonal();
    if ((diag.array() <= 0.0).any()) return kInf;
    const double ld = 2.0 * diag.array().log().sum();

    double value = tau * (-ld - g_lambda_.cwiseProduct(lambda).sum() - g_eta_.dot(eta) +
                          static_cast<double>(r_) * nu);
    Matrix d_lambda = Matrix::Zero(k_, k_);
    Vector d_eta = Vector::Zero(k_);
    double d_nu = tau * static_cast<double>(r_);

    for (Eigen::Index i = 0; i < points_.rows(); ++i) {
      const Vector y = points_.row(i).transpose();
      const Vector z = lambda * y + eta;
      const PNormValue nv = p_norm_with_grad(z, p_);
      const double a = nv.value - nu;
      const double ta = tau * a;
      const double disc = std::hypot(ta, 2.0);
      // t is the larger root of tau t^2 - (tau a + 2) t + a = 0 and w = t - a;
      // both are computed in cancellation-free form.
      const double b = ta + 2.0;
      const double t = b >= 0.0 ? (b + disc) / (2.0 * tau) : 2.0 * a / (b - disc);
      const double c = ta - 2.0;
      const double w = c <= 0.0 ? (-c + disc) / (2.0 * tau) : 2.0 * a / (c + disc);
      if (!(t > 0.0) || !(w > 0.0)) return kInf;
      value += tau * t - std::log(w) - std::log(t);
      if (grad != nullptr) {
        const double dpsi = 1.0 / w;
        d_lambda.noalias() += dpsi * nv.d_v * y.transpose();
        d_eta += dpsi * nv.d_v;
        d_nu -= dpsi;
      }
    }
    if (!std::isfinite(value)) return kInf;

    if (grad != nullptr) {
      const Matrix inv = llt.solve(Matrix::Identity(k_, k_));
      d_lambda += tau * (-inv - g_lambda_);
      d_eta -= tau * g_eta_;
      grad->resize(size());
      Eigen::Index c = 0;
      for (Eigen::Index a = 0; a < k_; ++a)
        for (Eigen::Index b2 = a; b2 < k_; ++b2)
          (*grad)(c++) = a == b2 ? d_lambda(a, a) : d_lambda(a, b2) + d_lambda(b2, a);
      grad->segment(c, k_) = d_eta;
      (*grad)(c + k_) = d_nu;
    }
    return value;
  }

  std::size_t n() const { return static_cast<std::size_t>(points_.rows()); }

 private:
  const Matrix& points_;
  std::size_t r_;
  double p_;
  const Matrix& g_lambda_;
  const Vector& g_eta_;
  Eigen::Index k_;
};

// BFGS with Armijo backtracking on a fixed barrier weight. Returns the number of
// iterations used.
int minimize_bfgs(const BarrierSubproblem& prob, double tau, Vector& x, int max_iter) {
  Vector g;
  double f = prob.barrier_value(x, tau, &g);
  if (!std::isfinite(f)) throw std::runtime_error("mvcs: barrier start point infeasible");
  const Eigen::Index d = x.size();
  Matrix h = Matrix::Identity(d, d) / std::max(1.0, g.norm());
  bool scaled = false;
  int it = 0;
  for (; it < max_iter; ++it) {
    Vector dir = -h * g;
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      h = Matrix::Identity(d, d) / std::max(1.0, g.norm());
      dir = -h * g;
      slope = g.dot(dir);
      if (!(slope < 0.0)) break;
    }
    double step = 1.0;
    Vector x_new, g_new;
    double f_new = kInf;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = x + step * dir;
      f_new = prob.barrier_value(x_new, tau, &g_new);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const Vector s = x_new - x;
    const Vector yv = g_new - g;
    const double decrease = f - f_new;
    x = x_new;
    g = g_new;
    f = f_new;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      if (!scaled) {
        h = Matrix::Identity(d, d) * (sy / yv.squaredNorm());
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Matrix eye = Matrix::Identity(d, d);
      h = (eye - rho * s * yv.transpose()) * h * (eye - rho * yv * s.transpose()) + rho * s * s.transpose();
    }
    // Barrier values are O(1) per constraint, so an absolute threshold on the
    // decrease bounds the suboptimality in original units by roughly 1e-10 / tau.
    if (decrease < 1e-10 && s.lpNorm<Eigen::Infinity>() < 1e-10 * (1.0 + x.lpNorm<Eigen::Infinity>())) break;
    if (decrease < 1e-12) break;
  }
  return it;
}

struct SubproblemResult {
  Matrix lambda;
  Vector eta;
};

SubproblemResult solve_subproblem(const Matrix& points, std::size_t r, double p, const Matrix& g_lambda,
                                  const Vector& g_eta, const Matrix& lambda0, const Vector& eta0,
                                  const DcaOptions& opts) {
  BarrierSubproblem prob(points, r, p, g_lambda, g_eta);
  const auto scores = affine_scores(lambda0, eta0, points, p);
  Vector x = prob.pack(lambda0, eta0, kth_largest(scores, r).value);
  const double f0 = prob.objective(lambda0, eta0);
  if (!std::isfinite(f0)) throw SingularMatrixError("mvcs: subproblem start is not positive definite");
  const double m = 2.0 * static_cast<double>(prob.n());
  const double gap = opts.subproblem_tol * std::max(1.0, std::abs(f0));
  double tau = m / std::max(1.0, std::abs(f0));
  int budget = opts.max_inner;
  while (budget > 0) {
    budget -= minimize_bfgs(prob, tau, x, std::min(budget, 500)) + 1;
    if (m / tau < gap) break;
    tau *= 10.0;
  }
  SubproblemResult out;
  double nu;
  prob.unpack(x, out.lambda, out.eta, nu);
  return out;
}

double linearized(const BarrierSubproblem& prob, const Matrix& lambda, const Vector& eta) {
  return prob.objective(lambda, eta);
}

}  // namespace

Vector sample_mean(const Matrix& points) { return points.colwise().mean().transpose(); }

Matrix sample_covariance(const Matrix& points) {
  if (points.rows() < 2) throw std::invalid_argument("sample_covariance: need at least two points");
  const Matrix centered = points.rowwise() - points.colwise().mean();
  return centered.transpose() * centered / static_cast<double>(points.rows() - 1);
}

std::vector<double> affine_scores(const Matrix& lambda, const Vector& eta, const Matrix& points, double p) {
  if (lambda.rows() != points.cols() || lambda.cols() != points.cols() || eta.size() != points.cols()) {
    throw std::invalid_argument("affine_scores: dimension mismatch");
  }
  const Matrix z = (lambda * points.transpose()).colwise() + eta;
  std::vector<double> out(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < z.cols(); ++i) out[static_cast<std::size_t>(i)] = p_norm(z.col(i), p);
  return out;
}

double dc_objective(const DcState& state, const Matrix& points, std::size_t r, double p) {
  check_problem(points, r, p, 1);
  double ld;
  try {
    ld = log_det(state.lambda);
  } catch (const SingularMatrixError&) {
    return kInf;
  }
  return -ld + kth_largest(affine_scores(state.lambda, state.eta, points, p), r).value;
}

ConvexSplit dc_split(const DcState& state, const Matrix& points, std::size_t r, double p) {
  check_problem(points, r, p, 1);
  const auto s = affine_scores(state.lambda, state.eta, points, p);
  ConvexSplit out;
  out.f = -log_det(state.lambda) + static_cast<double>(r) * mean_top_r(s, r);
  out.g = r >= 2 ? static_cast<double>(r - 1) * mean_top_r(s, r - 1) : 0.0;
  return out;
}

double relaxation_objective(const DcState& state, const Matrix& points, std::size_t r, double p) {
  return dc_split(state, points, r, p).f;
}

Subgradient dca_subgradient(const DcState& state, const Matrix& points, std::size_t r, double p) {
  check_problem(points, r, p, 2);
  const auto k = points.cols();
  Subgradient out{Matrix::Zero(k, k), Vector::Zero(k)};
  const auto s = affine_scores(state.lambda, state.eta, points, p);
  for (std::size_t i : top_r_indices(s, r - 1)) {
    const Vector y = points.row(static_cast<Eigen::Index>(i)).transpose();
    const Vector z = state.lambda * y + state.eta;
    const Vector g = p_norm_with_grad(z, p).d_v;
    out.g_lambda.noalias() += g * y.transpose();
    out.g_eta += g;
  }
  return out;
}

DcState covariance_init(const Matrix& points, std::size_t r, double p) {
  check_problem(points, r, p, 1);
  DcState st;
  st.lambda = inverse_sqrt_spd(sample_covariance(points), 1e-6);
  st.eta = -st.lambda * sample_mean(points);
  const double sr = kth_largest(affine_scores(st.lambda, st.eta, points, p), r).value;
  if (sr > 0.0) {
    const double c = static_cast<double>(points.cols()) / sr;
    st.lambda *= c;
    st.eta *= c;
  }
  return st;
}

DcState fit_convex_relaxation(const Matrix& points, std::size_t r, double p, const DcState* init,
                              const DcaOptions& opts) {
  check_problem(points, r, p, 1);
  if (p < 1.0) throw std::invalid_argument("fit_convex_relaxation: requires p >= 1 for convexity");
  DcState st = init != nullptr ? *init : covariance_init(points, r, p);
  st.objective_trace = {relaxation_objective(st, points, r, p)};
  const auto k = points.cols();
  const Matrix zero_l = Matrix::Zero(k, k);
  const Vector zero_e = Vector::Zero(k);
  const auto sol = solve_subproblem(points, r, p, zero_l, zero_e, st.lambda, st.eta, opts);
  DcState cand{sol.lambda, sol.eta, {}};
  const double obj = relaxation_objective(cand, points, r, p);
  if (obj <= st.objective_trace.back()) {
    st.lambda = cand.lambda;
    st.eta = cand.eta;
    st.objective_trace.push_back(obj);
  }
  return st;
}

DcState fit_dca(const Matrix& points, std::size_t r, double p, const DcState* init, const DcaOptions& opts) {
  check_problem(points, r, p, 2);
  if (static_cast<std::size_t>(points.rows()) <= r) throw std::invalid_argument("fit_dca: need n > r");
  if (p < 1.0) throw std::invalid_argument("fit_dca: requires p >= 1 for the convex split");
  DcState st = init != nullptr ? *init : covariance_init(points, r, p);
  double obj = dc_objective(st, points, r, p);
  if (!std::isfinite(obj)) throw SingularMatrixError("fit_dca: initial Lambda is not positive definite");
  st.objective_trace = {obj};

  for (int outer = 0; outer < opts.max_outer; ++outer) {
    const Subgradient sg = dca_subgradient(st, points, r, p);
    const auto sol = solve_subproblem(points, r, p, sg.g_lambda, sg.g_eta, st.lambda, st.eta, opts);
    BarrierSubproblem prob(points, r, p, sg.g_lambda, sg.g_eta);
    // Only move when the linearized objective does not go up; together with
    // g(x) = <G, x> (g is positively homogeneous) this makes f - g nonincreasing.
    if (!(linearized(prob, sol.lambda, sol.eta) <= linearized(prob, st.lambda, st.eta))) break;
    const DcState cand{sol.lambda, sol.eta, {}};
    const double next = dc_objective(cand, points, r, p);
    if (!std::isfinite(next) || next < -1e8) {
      throw std::runtime_error("fit_dca: objective diverging; data are degenerate (not affinely spanning)");
    }
    st.lambda = cand.lambda;
    st.eta = cand.eta;
    st.objective_trace.push_back(next);
    const bool done = std::abs(obj - next) < opts.outer_tol;
    obj = next;
    if (done) break;
  }
  return st;
}

PNormBall recover_ball(const DcState& state, const Matrix& points, std::size_t r, double p) {
  check_problem(points, r, p, 1);
  Eigen::PartialPivLU<Matrix> lu(state.lambda);
  if (state.lambda.size() == 0 || lu.determinant() == 0.0 || !std::isfinite(lu.determinant())) {
    throw SingularMatrixError("recover_ball: singular Lambda");
  }
  const double sr = kth_largest(affine_scores(state.lambda, state.eta, points, p), r).value;
  if (!(sr > 0.0)) throw SingularMatrixError("recover_ball: sigma_r is zero");
  PNormBall ball;
  ball.p = p;
  ball.shape = state.lambda / sr;
  ball.center = -lu.solve(state.eta);
  // Radius is 1 in exact arithmetic; lift it by the rounding of the boundary
  // point so the retained points are counted as inside.
  std::vector<double> d(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    d[static_cast<std::size_t>(i)] = ball.distance(points.row(i).transpose());
  ball.radius = std::max(1.0, kth_largest(d, r).value);
  return ball;
}

}  // namespace mvcs
