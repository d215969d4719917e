#pragma once

#include <cstdint>
#include <vector>

#include "mvcs/types.hpp"

namespace mvcs {

enum class Activation { relu };

/// Feed-forward network: affine layers with ReLU between them and a linear
/// output layer. Batched calls take one sample per column.
struct Mlp {
  std::vector<int> widths;  // input, hidden..., output
  std::vector<Matrix> weights;  // weights[l] is widths[l+1] x widths[l]
  std::vector<Vector> biases;
  Activation activation = Activation::relu;

  /// Weights uniform in +-1/sqrt(fan_in), biases likewise.
  static Mlp random(std::vector<int> widths, std::uint64_t seed);
  static Mlp zeros(std::vector<int> widths);

  int input_width() const { return widths.front(); }
  int output_width() const { return widths.back(); }
  std::size_t layer_count() const { return weights.size(); }
  std::size_t parameter_count() const;

  void validate() const;
};

/// Activations recorded by a forward pass, consumed by mlp_gradients.
struct MlpTape {
  std::vector<Matrix> inputs;  // input to each layer (post-activation of the previous one)
  std::vector<Matrix> pre;     // pre-activation of each layer
};

struct MlpGrads {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  Matrix input;  // d(loss)/d(input), one column per sample

  static MlpGrads zeros_like(const Mlp& net);
  MlpGrads& operator+=(const MlpGrads& other);
  MlpGrads& operator*=(double s);
  bool all_finite() const;
};

Vector mlp_forward(const Mlp& net, const Vector& x);
Matrix mlp_forward(const Mlp& net, const Matrix& x, MlpTape* tape = nullptr);

/// Reverse pass. `upstream` holds d(loss)/d(output) for each recorded sample.
MlpGrads mlp_gradients(const Mlp& net, const MlpTape& tape, const Matrix& upstream);

}  // namespace mvcs
