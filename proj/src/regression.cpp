#include "mvcs/regression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "mvcs/mvcs_core.hpp"
#include "mvcs/numkernel/linalg.hpp"
#include "mvcs/numkernel/optim.hpp"
#include "mvcs/orderstats.hpp"

namespace mvcs {

namespace {

std::vector<int> layer_widths(int d, int hidden, int layers, int out) {
  std::vector<int> w{d};
  for (int l = 0; l < layers; ++l) w.push_back(hidden);
  w.push_back(out);
  return w;
}

double exponent_chain(double p_raw) {
  const double a = std::abs(p_raw);
  if (a <= kMinExponent || a >= kMaxExponent) return 0.0;
  return p_raw >= 0.0 ? 1.0 : -1.0;
}

Vector flatten_row_major(const Matrix& m) {
  Vector v(m.size());
  for (Eigen::Index a = 0; a < m.rows(); ++a)
    for (Eigen::Index b = 0; b < m.cols(); ++b) v(a * m.cols() + b) = m(a, b);
  return v;
}

Matrix ridge_lambda(const Matrix& a) {
  return a * a.transpose() + kLogDetRidge * Matrix::Identity(a.rows(), a.rows());
}

void check_batch(const Matrix& x, const Matrix& y, int d, int k, const char* what) {
  if (x.rows() != y.rows() || x.rows() == 0) {
    throw std::invalid_argument(std::string(what) + ": empty or mismatched batch");
  }
  if (x.cols() != d || y.cols() != k) throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}

double scalar_step(double value, double grad, AdamState& state, double lr) {
  Matrix v(1, 1), g(1, 1);
  v(0, 0) = value;
  g(0, 0) = grad;
  adam_step(v, g, state, lr);
  return v(0, 0);
}

// Shuffled minibatch index lists for one epoch.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, int batch_size, std::mt19937_64& rng) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < n; s += static_cast<std::size_t>(batch_size)) {
    const std::size_t e = std::min(n, s + static_cast<std::size_t>(batch_size));
    if (e - s < 2 && !out.empty()) break;  // a single leftover sample has no useful rank statistic
    out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(s), perm.begin() + static_cast<std::ptrdiff_t>(e));
  }
  return out;
}

Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

void require_finite(double v, const std::string& where) {
  if (!std::isfinite(v)) throw NonFiniteError(where + ": non-finite loss");
}

}  // namespace

Matrix unflatten_row_major(const Eigen::Ref<const Vector>& v, int k) {
  if (v.size() != static_cast<Eigen::Index>(k) * k) throw std::invalid_argument("unflatten_row_major: size mismatch");
  Matrix m(k, k);
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b) m(a, b) = v(a * k + b);
  return m;
}

CenterModel CenterModel::create(int d, int k, int hidden, int layers, std::uint64_t seed) {
  return {Mlp::random(layer_widths(d, hidden, layers, k), seed)};
}

Matrix CenterModel::predict(const Matrix& x) const { return mlp_forward(net, Matrix(x.transpose())).transpose(); }

Vector CenterModel::predict(const Vector& x) const { return mlp_forward(net, x); }

MatrixModel MatrixModel::create(int d, int k, int hidden, int layers, double c, std::uint64_t seed) {
  MatrixModel m{Mlp::random(layer_widths(d, hidden, layers, k * k), seed), k};
  m.net.weights.back() *= 0.01;
  m.net.biases.back() = flatten_row_major(c * Matrix::Identity(k, k));
  return m;
}

Matrix MatrixModel::a(const Vector& x) const { return unflatten_row_major(mlp_forward(net, x), k); }

Matrix MatrixModel::lambda(const Vector& x) const { return ridge_lambda(a(x)); }

std::vector<Matrix> MatrixModel::lambdas(const Matrix& x) const {
  const Matrix out = mlp_forward(net, Matrix(x.transpose()));
  std::vector<Matrix> res;
  res.reserve(static_cast<std::size_t>(out.cols()));
  for (Eigen::Index i = 0; i < out.cols(); ++i) res.push_back(ridge_lambda(unflatten_row_major(out.col(i), k)));
  return res;
}

void TrainConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("TrainConfig: alpha must be in (0, 1)");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be positive");
  if (static_cast<double>(batch_size) < std::ceil(1.0 / alpha - 1e-9)) {
    throw std::invalid_argument("TrainConfig: batch_size must be at least ceil(1/alpha)");
  }
  if (epochs_warm < 0 || epochs_matrix < 0 || epochs_joint < 0 || epochs_pinball < 0) {
    throw std::invalid_argument("TrainConfig: epoch counts must be nonnegative");
  }
  for (double lr : {lr_warm, lr_model, lr_matrix, lr_p, lr_pinball})
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("TrainConfig: learning rates must be >= 0");
  if (hidden_center < 1 || hidden_matrix < 1 || layers_center < 0 || layers_matrix < 0) {
    throw std::invalid_argument("TrainConfig: invalid network shape");
  }
  if (!(p_init > 0.0)) throw std::invalid_argument("TrainConfig: p_init must be positive");
  if (m_neighbors < 1) throw std::invalid_argument("TrainConfig: m_neighbors must be positive");
}

std::size_t batch_rank(std::size_t n, double alpha) {
  const double raw = alpha * static_cast<double>(n);
  const auto r = static_cast<std::size_t>(std::floor(raw + 1e-9));
  return std::max<std::size_t>(1, r);
}

MseLoss mse_batch_loss(const CenterModel& center, const Matrix& x, const Matrix& y, bool with_grads) {
  check_batch(x, y, center.net.input_width(), center.net.output_width(), "mse_batch_loss");
  MlpTape tape;
  const Matrix f = mlp_forward(center.net, Matrix(x.transpose()), with_grads ? &tape : nullptr);
  const Matrix diff = f - y.transpose();
  const double n = static_cast<double>(x.rows());
  MseLoss out;
  out.value = 0.5 * diff.squaredNorm() / n;
  if (with_grads) out.grads = mlp_gradients(center.net, tape, diff / n);
  return out;
}

AdaptiveLoss adaptive_batch_loss(const CenterModel& center, const MatrixModel& matrix, double p_raw,
                                 const Matrix& x, const Matrix& y, double alpha, bool with_grads) {
  const int k = center.net.output_width();
  check_batch(x, y, center.net.input_width(), k, "adaptive_batch_loss");
  if (matrix.k != k || matrix.net.output_width() != k * k || matrix.net.input_width() != x.cols()) {
    throw std::invalid_argument("adaptive_batch_loss: matrix model shape mismatch");
  }
  const auto n = static_cast<std::size_t>(x.rows());
  const double p = clamp_exponent(std::abs(p_raw));
  const double kd = static_cast<double>(k);
  const Matrix xt = x.transpose();
  MlpTape tape_c, tape_m;
  const Matrix f = mlp_forward(center.net, xt, with_grads ? &tape_c : nullptr);
  const Matrix a_out = mlp_forward(matrix.net, xt, with_grads ? &tape_m : nullptr);
  const Matrix resid = y.transpose() - f;

  std::vector<Matrix> a(n), lam(n);
  std::vector<Eigen::LLT<Matrix>> llt(n);
  std::vector<double> neg_logdet(n), scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    a[i] = unflatten_row_major(a_out.col(ii), k);
    lam[i] = ridge_lambda(a[i]);
    llt[i].compute(lam[i]);
    if (llt[i].info() != Eigen::Success) throw NonFiniteError("adaptive_batch_loss: Lambda(x) not positive definite");
    neg_logdet[i] = -2.0 * llt[i].matrixLLT().diagonal().array().log().sum();
    scores[i] = p_norm(lam[i] * resid.col(ii), p);
  }
  const RankedValue sr = kth_largest(scores, batch_rank(n, alpha));
  if (!(sr.value > 0.0)) throw NonFiniteError("adaptive_batch_loss: sigma_r is zero");
  const double lse = log_sum_exp(neg_logdet);

  AdaptiveLoss out;
  out.active_index = sr.index;
  out.value = lse + kd * std::log(sr.value) + unit_pball_log_volume(p, k);
  require_finite(out.value, "adaptive_batch_loss");
  if (!with_grads) return out;

  const auto is = static_cast<Eigen::Index>(sr.index);
  const Vector e = resid.col(is);
  const PNormValue nv = p_norm_with_grad(lam[sr.index] * e, p);
  const double c = kd / sr.value;
  Matrix up_m = Matrix::Zero(k * k, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double w = std::exp(neg_logdet[i] - lse);
    Matrix g = -w * llt[i].solve(Matrix::Identity(k, k));
    if (i == sr.index) g.noalias() += c * nv.d_v * e.transpose();
    up_m.col(static_cast<Eigen::Index>(i)) = flatten_row_major((g + g.transpose()) * a[i]);
  }
  Matrix up_c = Matrix::Zero(k, static_cast<Eigen::Index>(n));
  up_c.col(is) = -c * lam[sr.index].transpose() * nv.d_v;
  out.center = mlp_gradients(center.net, tape_c, up_c);
  out.matrix = mlp_gradients(matrix.net, tape_m, up_m);
  out.grad_p_raw = (c * nv.d_p + unit_pball_log_volume_dp(p, k)) * exponent_chain(p_raw);
  return out;
}

GlobalLoss global_loss(const CenterModel& center, const Matrix& a, double p_raw, const Matrix& x,
                       const Matrix& y, double alpha, bool with_grads) {
  const int k = center.net.output_width();
  check_batch(x, y, center.net.input_width(), k, "global_loss");
  if (a.rows() != k || a.cols() != k) throw std::invalid_argument("global_loss: factor shape mismatch");
  const auto n = static_cast<std::size_t>(x.rows());
  const double p = clamp_exponent(std::abs(p_raw));
  const double kd = static_cast<double>(k);
  MlpTape tape;
  const Matrix f = mlp_forward(center.net, Matrix(x.transpose()), with_grads ? &tape : nullptr);
  const Matrix resid = y.transpose() - f;
  const Matrix lam = ridge_lambda(a);
  const Matrix z = lam * resid;
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) scores[i] = p_norm(z.col(static_cast<Eigen::Index>(i)), p);
  const RankedValue sr = kth_largest(scores, batch_rank(n, alpha));
  if (!(sr.value > 0.0)) throw NonFiniteError("global_loss: sigma_r is zero");

  GlobalLoss out;
  out.active_index = sr.index;
  out.value = -log_det(lam) + kd * std::log(sr.value) + unit_pball_log_volume(p, k);
  require_finite(out.value, "global_loss");
  if (!with_grads) return out;

  const auto is = static_cast<Eigen::Index>(sr.index);
  const Vector e = resid.col(is);
  const PNormValue nv = p_norm_with_grad(lam * e, p);
  const double c = kd / sr.value;
  const Matrix g = -lam.llt().solve(Matrix::Identity(k, k)) + c * nv.d_v * e.transpose();
  out.grad_a = (g + g.transpose()) * a;
  Matrix up = Matrix::Zero(k, static_cast<Eigen::Index>(n));
  up.col(is) = -c * lam.transpose() * nv.d_v;
  out.center = mlp_gradients(center.net, tape, up);
  out.grad_p_raw = (c * nv.d_p + unit_pball_log_volume_dp(p, k)) * exponent_chain(p_raw);
  return out;
}

Matrix AdaptivePredictor::lambda(const Vector& x) const {
  return scale * (matrix ? matrix->lambda(x) : ridge_lambda(global_a));
}

std::vector<Matrix> AdaptivePredictor::lambdas(const Matrix& x) const {
  std::vector<Matrix> out;
  if (matrix) {
    out = matrix->lambdas(x);
  } else {
    out.assign(static_cast<std::size_t>(x.rows()), ridge_lambda(global_a));
  }
  for (Matrix& m : out) m *= scale;
  return out;
}

std::vector<double> AdaptivePredictor::scores(const Matrix& x, const Matrix& y) const {
  check_batch(x, y, center.net.input_width(), response_dim(), "AdaptivePredictor::scores");
  const Matrix f = center.predict(x);
  const auto lam = lambdas(x);
  const double pe = p();
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Vector e = (y.row(i) - f.row(i)).transpose();
    out[static_cast<std::size_t>(i)] = p_norm(lam[static_cast<std::size_t>(i)] * e, pe);
  }
  return out;
}

std::vector<double> AdaptivePredictor::log_volumes(const Matrix& x, double q) const {
  const int k = response_dim();
  const double base = unit_pball_log_volume(p(), k);
  const auto lam = lambdas(x);
  std::vector<double> out(lam.size());
  for (std::size_t i = 0; i < lam.size(); ++i) {
    if (q == 0.0) {
      out[i] = -std::numeric_limits<double>::infinity();
    } else if (std::isinf(q)) {
      out[i] = std::numeric_limits<double>::infinity();
    } else {
      out[i] = base - log_det(lam[i]) + k * std::log(q);
    }
  }
  return out;
}

CenterModel mse_pretrain(CenterModel center, const Dataset& train, const Dataset& val, const TrainConfig& cfg,
                         StageReport* report) {
  cfg.validate();
  if (train.empty()) throw std::invalid_argument("mse_pretrain: empty training set");
  const bool have_val = !val.empty();
  std::mt19937_64 rng(cfg.seed ^ 0x5eedULL);
  MlpAdam adam(center.net);
  StageReport rep;
  CenterModel best = center;
  double best_val = have_val ? mse_batch_loss(center, val.x, val.y, false).value
                             : mse_batch_loss(center, train.x, train.y, false).value;
  rep.val_loss.push_back(best_val);
  for (int epoch = 0; epoch < cfg.epochs_warm; ++epoch) {
    const double lr = cosine_annealing_lr(cfg.lr_warm, epoch, cfg.epochs_warm);
    double acc = 0.0;
    const auto batches = make_batches(train.size(), cfg.batch_size, rng);
    for (const auto& b : batches) {
      const MseLoss loss = mse_batch_loss(center, gather_rows(train.x, b), gather_rows(train.y, b));
      require_finite(loss.value, "mse_pretrain");
      adam.step(center.net, loss.grads, lr);
      acc += loss.value;
    }
    rep.train_loss.push_back(acc / static_cast<double>(batches.size()));
    const double v = have_val ? mse_batch_loss(center, val.x, val.y, false).value
                              : mse_batch_loss(center, train.x, train.y, false).value;
    rep.val_loss.push_back(v);
    if (v < best_val) {
      best_val = v;
      best = center;
      rep.best_epoch = epoch + 1;
    }
  }
  rep.best_val = best_val;
  if (report) *report = std::move(rep);
  return best;
}

MatrixModel init_matrix_model(const CenterModel& center, const Dataset& train, const TrainConfig& cfg) {
  const Matrix resid = train.y - center.predict(train.x);
  const double rms = std::sqrt(resid.squaredNorm() / static_cast<double>(std::max<Eigen::Index>(1, resid.rows())));
  const double c = rms > 0.0 ? 1.0 / rms : 1.0;
  return MatrixModel::create(train.x_dim(), train.y_dim(), cfg.hidden_matrix, cfg.layers_matrix, c, cfg.seed + 1);
}

double validation_loss(const AdaptivePredictor& pred, const Dataset& data, double alpha) {
  if (pred.matrix) return adaptive_batch_loss(pred.center, *pred.matrix, pred.p_raw, data.x, data.y, alpha, false).value;
  return global_loss(pred.center, pred.global_a, pred.p_raw, data.x, data.y, alpha, false).value;
}

namespace {

// Shared epoch loop: `step` runs one minibatch update and returns its loss,
// `val` evaluates the current parameters, `keep` snapshots them.
template <typename Step, typename Val, typename Keep>
StageReport run_stage(int epochs, const Dataset& train, const TrainConfig& cfg, std::uint64_t salt, Step&& step,
                      Val&& val, Keep&& keep) {
  std::mt19937_64 rng(cfg.seed ^ salt);
  StageReport rep;
  double best = val();
  rep.val_loss.push_back(best);
  keep();
  for (int epoch = 0; epoch < epochs; ++epoch) {
    double acc = 0.0;
    const auto batches = make_batches(train.size(), cfg.batch_size, rng);
    for (const auto& b : batches) acc += step(gather_rows(train.x, b), gather_rows(train.y, b), epoch);
    rep.train_loss.push_back(acc / static_cast<double>(batches.size()));
    const double v = val();
    rep.val_loss.push_back(v);
    if (v < best) {
      best = v;
      rep.best_epoch = epoch + 1;
      keep();
    }
  }
  rep.best_val = best;
  return rep;
}

}  // namespace

MatrixStageResult train_matrix_stage(const CenterModel& center, MatrixModel matrix, double p_raw,
                                     const Dataset& train, const Dataset& val, const TrainConfig& cfg) {
  cfg.validate();
  const Dataset& vset = val.empty() ? train : val;
  MlpAdam adam(matrix.net);
  AdamState adam_p(1, 1);
  MatrixStageResult best{matrix, p_raw, {}};
  const int epochs = cfg.epochs_matrix;
  best.report = run_stage(
      epochs, train, cfg, 0x3a7f1ULL,
      [&](const Matrix& x, const Matrix& y, int epoch) {
        const AdaptiveLoss loss = adaptive_batch_loss(center, matrix, p_raw, x, y, cfg.alpha);
        adam.step(matrix.net, loss.matrix, cosine_annealing_lr(cfg.lr_matrix, epoch, epochs));
        if (cfg.learn_p) p_raw = scalar_step(p_raw, loss.grad_p_raw, adam_p, cosine_annealing_lr(cfg.lr_p, epoch, epochs));
        return loss.value;
      },
      [&] { return adaptive_batch_loss(center, matrix, p_raw, vset.x, vset.y, cfg.alpha, false).value; },
      [&] {
        best.matrix = matrix;
        best.p_raw = p_raw;
      });
  return best;
}

AdaptivePredictor train_joint_stage(CenterModel center, MatrixModel matrix, double p_raw, const Dataset& train,
                                    const Dataset& val, const TrainConfig& cfg, StageReport* report) {
  cfg.validate();
  const Dataset& vset = val.empty() ? train : val;
  MlpAdam adam_c(center.net), adam_m(matrix.net);
  AdamState adam_p(1, 1);
  AdaptivePredictor best;
  const int epochs = cfg.epochs_joint;
  auto rep = run_stage(
      epochs, train, cfg, 0x10147ULL,
      [&](const Matrix& x, const Matrix& y, int epoch) {
        const AdaptiveLoss loss = adaptive_batch_loss(center, matrix, p_raw, x, y, cfg.alpha);
        adam_c.step(center.net, loss.center, cosine_annealing_lr(cfg.lr_model, epoch, epochs));
        adam_m.step(matrix.net, loss.matrix, cosine_annealing_lr(cfg.lr_matrix, epoch, epochs));
        if (cfg.learn_p) p_raw = scalar_step(p_raw, loss.grad_p_raw, adam_p, cosine_annealing_lr(cfg.lr_p, epoch, epochs));
        return loss.value;
      },
      [&] { return adaptive_batch_loss(center, matrix, p_raw, vset.x, vset.y, cfg.alpha, false).value; },
      [&] {
        best.center = center;
        best.matrix = matrix;
        best.p_raw = p_raw;
      });
  if (report) *report = std::move(rep);
  return best;
}

GlobalStageResult train_global_matrix_stage(const CenterModel& center, Matrix a, double p_raw,
                                            const Dataset& train, const Dataset& val, const TrainConfig& cfg) {
  cfg.validate();
  const Dataset& vset = val.empty() ? train : val;
  AdamState adam_a(a.rows(), a.cols()), adam_p(1, 1);
  GlobalStageResult best{a, p_raw, {}};
  const int epochs = cfg.epochs_matrix;
  best.report = run_stage(
      epochs, train, cfg, 0x3a7f1ULL,
      [&](const Matrix& x, const Matrix& y, int epoch) {
        const GlobalLoss loss = global_loss(center, a, p_raw, x, y, cfg.alpha);
        adam_step(a, loss.grad_a, adam_a, cosine_annealing_lr(cfg.lr_matrix, epoch, epochs));
        if (cfg.learn_p) p_raw = scalar_step(p_raw, loss.grad_p_raw, adam_p, cosine_annealing_lr(cfg.lr_p, epoch, epochs));
        return loss.value;
      },
      [&] { return global_loss(center, a, p_raw, vset.x, vset.y, cfg.alpha, false).value; },
      [&] {
        best.a = a;
        best.p_raw = p_raw;
      });
  return best;
}

AdaptivePredictor train_global_joint_stage(CenterModel center, Matrix a, double p_raw, const Dataset& train,
                                           const Dataset& val, const TrainConfig& cfg, StageReport* report) {
  cfg.validate();
  const Dataset& vset = val.empty() ? train : val;
  MlpAdam adam_c(center.net);
  AdamState adam_a(a.rows(), a.cols()), adam_p(1, 1);
  AdaptivePredictor best;
  const int epochs = cfg.epochs_joint;
  auto rep = run_stage(
      epochs, train, cfg, 0x10147ULL,
      [&](const Matrix& x, const Matrix& y, int epoch) {
        const GlobalLoss loss = global_loss(center, a, p_raw, x, y, cfg.alpha);
        adam_c.step(center.net, loss.center, cosine_annealing_lr(cfg.lr_model, epoch, epochs));
        adam_step(a, loss.grad_a, adam_a, cosine_annealing_lr(cfg.lr_matrix, epoch, epochs));
        if (cfg.learn_p) p_raw = scalar_step(p_raw, loss.grad_p_raw, adam_p, cosine_annealing_lr(cfg.lr_p, epoch, epochs));
        return loss.value;
      },
      [&] { return global_loss(center, a, p_raw, vset.x, vset.y, cfg.alpha, false).value; },
      [&] {
        best.center = center;
        best.global_a = a;
        best.p_raw = p_raw;
      });
  if (report) *report = std::move(rep);
  return best;
}

MvcsTraining train_mvcs(const Dataset& train, const Dataset& val, const TrainConfig& cfg, bool adaptive,
                        const CenterModel* pretrained) {
  cfg.validate();
  train.validate();
  MvcsTraining out;
  if (pretrained) {
    out.pretrained = *pretrained;
  } else {
    const CenterModel init =
        CenterModel::create(train.x_dim(), train.y_dim(), cfg.hidden_center, cfg.layers_center, cfg.seed);
    out.pretrained = mse_pretrain(init, train, val, cfg, &out.warm);
  }
  if (adaptive) {
    MatrixStageResult ms = train_matrix_stage(out.pretrained, init_matrix_model(out.pretrained, train, cfg),
                                              cfg.p_init, train, val, cfg);
    out.matrix = ms.report;
    out.predictor = train_joint_stage(out.pretrained, ms.matrix, ms.p_raw, train, val, cfg, &out.joint);
  } else {
    const Matrix resid = train.y - out.pretrained.predict(train.x);
    const Matrix a0 = Eigen::LLT<Matrix>(inverse_sqrt_spd(sample_covariance(resid), 1e-6)).matrixL();
    GlobalStageResult gs = train_global_matrix_stage(out.pretrained, a0, cfg.p_init, train, val, cfg);
    out.matrix = gs.report;
    out.predictor = train_global_joint_stage(out.pretrained, gs.a, gs.p_raw, train, val, cfg, &out.joint);
  }
  return out;
}

}  // namespace mvcs
