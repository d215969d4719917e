#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mvcs/dataset.hpp"
#include "mvcs/geometry.hpp"
#include "mvcs/numkernel/mlp.hpp"
#include "mvcs/predictor.hpp"
#include "mvcs/types.hpp"

// Learning a center network f(x) together with a matrix network
// Lambda(x) = A(x) A(x)^T + eps I under the minimum-volume loss.

namespace mvcs {

/// Point predictor f: R^d -> R^k.
struct CenterModel {
  Mlp net;

  static CenterModel create(int d, int k, int hidden, int layers, std::uint64_t seed);
  Matrix predict(const Matrix& x) const;  // n x k, one row per sample
  Vector predict(const Vector& x) const;
};

/// x -> A(x) with the k*k outputs read row-major into A.
struct MatrixModel {
  Mlp net;
  int k = 0;

  /// Small random weights; the output bias is c * I so A(x) ~ c I at start.
  static MatrixModel create(int d, int k, int hidden, int layers, double c, std::uint64_t seed);
  Matrix a(const Vector& x) const;
  Matrix lambda(const Vector& x) const;
  std::vector<Matrix> lambdas(const Matrix& x) const;
};

Matrix unflatten_row_major(const Eigen::Ref<const Vector>& v, int k);

struct TrainConfig {
  double alpha = 0.1;
  int batch_size = 100;
  int epochs_warm = 500;
  int epochs_matrix = 20;
  int epochs_joint = 200;
  int epochs_pinball = 200;
  double lr_warm = 1e-4;
  double lr_model = 5e-4;
  double lr_matrix = 0.01;
  double lr_p = 0.01;
  double lr_pinball = 1e-4;
  int hidden_center = 256;
  int layers_center = 3;
  int hidden_matrix = 256;
  int layers_matrix = 3;
  double p_init = 2.0;
  bool learn_p = true;
  int m_neighbors = 1000;
  std::uint64_t seed = 0;

  void validate() const;
};

/// max(1, floor(alpha * n)).
std::size_t batch_rank(std::size_t n, double alpha);

struct MseLoss {
  double value = 0.0;  // mean over the batch of 1/2 ||f(x) - y||^2
  MlpGrads grads;
};
MseLoss mse_batch_loss(const CenterModel& center, const Matrix& x, const Matrix& y, bool with_grads = true);

/// log sum_i 1/det Lambda(x_i) + k log sigma_r{ ||Lambda(x_i)(y_i - f(x_i))||_p } + log vol(unit p-ball),
/// r = batch_rank(B, alpha), p = clamp(|p_raw|).
struct AdaptiveLoss {
  double value = 0.0;
  MlpGrads center;
  MlpGrads matrix;
  double grad_p_raw = 0.0;
  std::size_t active_index = 0;
};
AdaptiveLoss adaptive_batch_loss(const CenterModel& center, const MatrixModel& matrix, double p_raw,
                                 const Matrix& x, const Matrix& y, double alpha, bool with_grads = true);

/// -log det Lambda + k log sigma_r{ ||Lambda (y_i - f(x_i))||_p } + log vol(unit p-ball),
/// with one Lambda = A A^T + eps I for every x.
struct GlobalLoss {
  double value = 0.0;
  MlpGrads center;
  Matrix grad_a;
  double grad_p_raw = 0.0;
  std::size_t active_index = 0;
};
GlobalLoss global_loss(const CenterModel& center, const Matrix& a, double p_raw, const Matrix& x,
                       const Matrix& y, double alpha, bool with_grads = true);

/// The fitted (unconformalized until q_hat is set) MVCS predictor. Either a
/// matrix network (locally adaptive) or a single global factor A is used.
class AdaptivePredictor final : public SetPredictor {
 public:
  CenterModel center;
  std::optional<MatrixModel> matrix;
  Matrix global_a;
  double p_raw = 2.0;
  /// Global multiplier on Lambda(x); conformal sets do not depend on it.
  double scale = 1.0;

  bool is_adaptive() const { return matrix.has_value(); }
  double p() const { return clamp_exponent(std::abs(p_raw)); }
  Matrix lambda(const Vector& x) const;
  std::vector<Matrix> lambdas(const Matrix& x) const;

  std::string method() const override { return is_adaptive() ? "mvcs_adaptive" : "mvcs_global"; }
  int response_dim() const override { return center.net.output_width(); }
  std::vector<double> scores(const Matrix& x, const Matrix& y) const override;
  std::vector<double> log_volumes(const Matrix& x, double q) const override;
};

struct StageReport {
  std::vector<double> train_loss;  // mean batch loss per epoch
  std::vector<double> val_loss;    // entry 0 is the starting point
  double best_val = 0.0;
  int best_epoch = 0;  // 0 = starting point kept
};

/// Minibatch Adam on the MSE; returns the weights with the best validation MSE.
CenterModel mse_pretrain(CenterModel center, const Dataset& train, const Dataset& val, const TrainConfig& cfg,
                         StageReport* report = nullptr);

/// Matrix net with A(x) ~ c I, c the inverse RMS residual norm of `center` on `train`.
MatrixModel init_matrix_model(const CenterModel& center, const Dataset& train, const TrainConfig& cfg);

/// Full adaptive loss of a predictor on a whole split (r = batch_rank(n, alpha)).
double validation_loss(const AdaptivePredictor& pred, const Dataset& data, double alpha);

struct MatrixStageResult {
  MatrixModel matrix;
  double p_raw = 2.0;
  StageReport report;
};
/// Center frozen; Adam over the matrix net and p.
MatrixStageResult train_matrix_stage(const CenterModel& center, MatrixModel matrix, double p_raw,
                                     const Dataset& train, const Dataset& val, const TrainConfig& cfg);

/// Adam over center, matrix net and p with per-group learning rates.
AdaptivePredictor train_joint_stage(CenterModel center, MatrixModel matrix, double p_raw, const Dataset& train,
                                    const Dataset& val, const TrainConfig& cfg, StageReport* report = nullptr);

struct GlobalStageResult {
  Matrix a;
  double p_raw = 2.0;
  StageReport report;
};
GlobalStageResult train_global_matrix_stage(const CenterModel& center, Matrix a, double p_raw,
                                            const Dataset& train, const Dataset& val, const TrainConfig& cfg);
AdaptivePredictor train_global_joint_stage(CenterModel center, Matrix a, double p_raw, const Dataset& train,
                                           const Dataset& val, const TrainConfig& cfg,
                                           StageReport* report = nullptr);

struct MvcsTraining {
  CenterModel pretrained;  // center after the MSE stage, before the joint stage
  AdaptivePredictor predictor;
  StageReport warm, matrix, joint;
};
/// Pretrain, matrix stage, joint stage. `pretrained` skips the MSE stage when given.
MvcsTraining train_mvcs(const Dataset& train, const Dataset& val, const TrainConfig& cfg, bool adaptive,
                        const CenterModel* pretrained = nullptr);

}  // namespace mvcs
