#include "mvcs/numkernel/optim.hpp"

#include <cmath>
#include <numbers>

namespace mvcs {

bool adam_step(Eigen::Ref<Matrix> params, const Eigen::Ref<const Matrix>& grads, AdamState& state,
               double lr) {
  if (params.rows() != grads.rows() || params.cols() != grads.cols()) {
    throw std::invalid_argument("adam_step: parameter/gradient shape mismatch");
  }
  if (state.first_moment.size() == 0) {
    state.first_moment = Matrix::Zero(params.rows(), params.cols());
    state.second_moment = Matrix::Zero(params.rows(), params.cols());
  }
  if (state.first_moment.rows() != params.rows() || state.first_moment.cols() != params.cols()) {
    throw std::invalid_argument("adam_step: state shape mismatch");
  }
  if (!grads.allFinite()) return false;

  state.step_count += 1;
  state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads;
  state.second_moment =
      state.beta2 * state.second_moment + (1.0 - state.beta2) * grads.cwiseProduct(grads);
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  params.array() -= lr * (state.first_moment.array() / c1) /
                    ((state.second_moment.array() / c2).sqrt() + state.eps);
  return true;
}

double cosine_annealing_lr(double base_lr, int epoch, int total_epochs) {
  if (total_epochs <= 0) throw std::invalid_argument("cosine_annealing_lr: total_epochs must be positive");
  if (epoch < 0 || epoch > total_epochs) {
    throw std::invalid_argument("cosine_annealing_lr: epoch outside [0, total_epochs]");
  }
  return base_lr * (1.0 + std::cos(std::numbers::pi * epoch / total_epochs)) / 2.0;
}

MlpAdam::MlpAdam(const Mlp& net) {
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    weights_.emplace_back(net.weights[l].rows(), net.weights[l].cols());
    biases_.emplace_back(net.biases[l].size(), 1);
  }
}

bool MlpAdam::step(Mlp& net, const MlpGrads& grads, double lr) {
  if (!grads.all_finite()) return false;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    adam_step(net.weights[l], grads.weights[l], weights_[l], lr);
    adam_step(net.biases[l], grads.biases[l], biases_[l], lr);
  }
  return true;
}

}  // namespace mvcs
