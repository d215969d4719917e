#pragma once

#include <vector>

#include "mvcs/numkernel/mlp.hpp"
#include "mvcs/types.hpp"

namespace mvcs {

/// Adam moments for one parameter tensor.
struct AdamState {
  Matrix first_moment;
  Matrix second_moment;
  long step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  AdamState(Eigen::Index rows, Eigen::Index cols)
      : first_moment(Matrix::Zero(rows, cols)), second_moment(Matrix::Zero(rows, cols)) {}
};

/// One bias-corrected Adam update. Returns false and leaves both the parameter
/// and the state untouched when the gradient has non-finite entries.
bool adam_step(Eigen::Ref<Matrix> params, const Eigen::Ref<const Matrix>& grads, AdamState& state,
               double lr);

/// base_lr * (1 + cos(pi * epoch / total_epochs)) / 2
double cosine_annealing_lr(double base_lr, int epoch, int total_epochs);

/// Adam states for every tensor of an Mlp.
class MlpAdam {
 public:
  explicit MlpAdam(const Mlp& net);
  /// Returns false (no update applied) on a non-finite gradient.
  bool step(Mlp& net, const MlpGrads& grads, double lr);

 private:
  std::vector<AdamState> weights_;
  std::vector<AdamState> biases_;
};

}  // namespace mvcs
