#pragma once

#include "mvcs/types.hpp"

namespace mvcs {

/// Natural log of det(m) for a symmetric positive definite matrix, computed as
/// twice the sum of the log Cholesky pivots. Throws SingularMatrixError when m
/// is not positive definite and std::invalid_argument on non-finite input.
double log_det(const Matrix& m);

struct SymEig {
  Vector values;   // ascending
  Matrix vectors;  // columns are eigenvectors
};

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix.
SymEig sym_eig(const Matrix& m);

/// Symmetric function of a symmetric matrix: V f(diag) V^T.
template <typename F>
Matrix sym_apply(const SymEig& eig, F&& f) {
  Vector mapped = eig.values.unaryExpr(f);
  return eig.vectors * mapped.asDiagonal() * eig.vectors.transpose();
}

/// (m + ridge I)^{-1/2} for symmetric PSD m.
Matrix inverse_sqrt_spd(const Matrix& m, double ridge = 0.0);

/// Orthogonal QR factor of q_raw (unique version with positive diagonal in the
/// triangular factor), with the first row negated when needed so the result has
/// determinant +1. Throws SingularMatrixError for rank-deficient input.
Matrix qr_rotation(const Matrix& q_raw);

/// Vector-Jacobian product of qr_rotation: given dL/dR at R = qr_rotation(q_raw),
/// returns dL/dq_raw.
Matrix qr_rotation_backward(const Matrix& q_raw, const Matrix& grad_rotation);

/// Matrix exponential by scaling and squaring with a truncated Taylor series.
Matrix expm(const Matrix& m);

/// Principal logarithm of a rotation matrix (result is skew-symmetric).
/// Requires all rotation angles strictly below pi.
Matrix logm_rotation(const Matrix& rotation);

}  // namespace mvcs
