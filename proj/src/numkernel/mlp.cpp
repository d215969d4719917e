#include "mvcs/numkernel/mlp.hpp"

#include <cmath>
#include <random>
#include <string>

namespace mvcs {

Mlp Mlp::random(std::vector<int> widths, std::uint64_t seed) {
  Mlp net = zeros(std::move(widths));
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(net.widths[l]));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index j = 0; j < net.weights[l].cols(); ++j)
      for (Eigen::Index i = 0; i < net.weights[l].rows(); ++i) net.weights[l](i, j) = u(rng);
    for (Eigen::Index i = 0; i < net.biases[l].size(); ++i) net.biases[l](i) = u(rng);
  }
  return net;
}

Mlp Mlp::zeros(std::vector<int> widths) {
  if (widths.size() < 2) throw std::invalid_argument("Mlp: need at least input and output widths");
  for (int w : widths)
    if (w <= 0) throw std::invalid_argument("Mlp: widths must be positive");
  Mlp net;
  net.widths = std::move(widths);
  for (std::size_t l = 0; l + 1 < net.widths.size(); ++l) {
    net.weights.push_back(Matrix::Zero(net.widths[l + 1], net.widths[l]));
    net.biases.push_back(Vector::Zero(net.widths[l + 1]));
  }
  return net;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

void Mlp::validate() const {
  if (widths.size() < 2 || weights.size() + 1 != widths.size() || biases.size() != weights.size()) {
    throw std::invalid_argument("Mlp: inconsistent layer count");
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != widths[l + 1] || weights[l].cols() != widths[l] ||
        biases[l].size() != widths[l + 1]) {
      throw std::invalid_argument("Mlp: layer " + std::to_string(l) + " has incompatible shape");
    }
  }
}

MlpGrads MlpGrads::zeros_like(const Mlp& net) {
  MlpGrads g;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    g.weights.push_back(Matrix::Zero(net.weights[l].rows(), net.weights[l].cols()));
    g.biases.push_back(Vector::Zero(net.biases[l].size()));
  }
  return g;
}

MlpGrads& MlpGrads::operator+=(const MlpGrads& other) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] += other.weights[l];
    biases[l] += other.biases[l];
  }
  return *this;
}

MlpGrads& MlpGrads::operator*=(double s) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] *= s;
    biases[l] *= s;
  }
  return *this;
}

bool MlpGrads::all_finite() const {
  for (std::size_t l = 0; l < weights.size(); ++l)
    if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
  return true;
}

Vector mlp_forward(const Mlp& net, const Vector& x) {
  Matrix out = mlp_forward(net, Matrix(x), nullptr);
  return out.col(0);
}

Matrix mlp_forward(const Mlp& net, const Matrix& x, MlpTape* tape) {
  if (x.rows() != net.input_width()) {
    throw std::invalid_argument("mlp_forward: input has " + std::to_string(x.rows()) +
                                " rows, network expects " + std::to_string(net.input_width()));
  }
  if (tape) {
    tape->inputs.clear();
    tape->pre.clear();
  }
  Matrix h = x;
  const std::size_t layers = net.weights.size();
  for (std::size_t l = 0; l < layers; ++l) {
    Matrix z = net.weights[l] * h;
    z.colwise() += net.biases[l];
    if (tape) {
      tape->inputs.push_back(std::move(h));
      tape->pre.push_back(z);
    }
    if (l + 1 < layers) {
      h = z.cwiseMax(0.0);
    } else {
      h = std::move(z);
    }
  }
  return h;
}

MlpGrads mlp_gradients(const Mlp& net, const MlpTape& tape, const Matrix& upstream) {
  const std::size_t layers = net.weights.size();
  if (tape.inputs.size() != layers || tape.pre.size() != layers) {
    throw std::logic_error("mlp_gradients: no recorded forward pass for this network");
  }
  if (upstream.rows() != net.output_width() || upstream.cols() != tape.pre.back().cols()) {
    throw std::invalid_argument("mlp_gradients: upstream gradient shape mismatch");
  }
  MlpGrads g;
  g.weights.resize(layers);
  g.biases.resize(layers);
  Matrix delta = upstream;
  for (std::size_t l = layers; l-- > 0;) {
    if (l + 1 < layers) {
      delta = delta.cwiseProduct((tape.pre[l].array() > 0.0).cast<double>().matrix());
    }
    g.weights[l] = delta * tape.inputs[l].transpose();
    g.biases[l] = delta.rowwise().sum();
    delta = net.weights[l].transpose() * delta;
  }
  g.input = std::move(delta);
  return g;
}

}  // namespace mvcs
