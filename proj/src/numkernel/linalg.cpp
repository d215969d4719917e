#include "mvcs/numkernel/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

namespace mvcs {

namespace {

void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw std::invalid_argument(std::string(what) + ": expected a non-empty square matrix");
  }
  if (!m.allFinite()) {
    throw std::invalid_argument(std::string(what) + ": non-finite entries");
  }
}

}  // namespace

double log_det(const Matrix& m) {
  require_square(m, "log_det");
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) {
    throw SingularMatrixError("log_det: matrix is not positive definite");
  }
  const auto diag = llt.matrixLLT().diagonal();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < diag.size(); ++i) {
    if (!(diag(i) > 0.0)) throw SingularMatrixError("log_det: zero pivot");
    acc += std::log(diag(i));
  }
  return 2.0 * acc;
}

SymEig sym_eig(const Matrix& m) {
  require_square(m, "sym_eig");
  const Eigen::Index n = m.rows();
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw std::invalid_argument("sym_eig: matrix is not symmetric");
  }

  Matrix a = 0.5 * (m + m.transpose());
  Matrix v = Matrix::Identity(n, n);
  const double total = a.squaredNorm();

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off <= 1e-32 * total || off == 0.0) break;

    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index i, Eigen::Index j) { return a(i, i) < a(j, j); });
  SymEig out{Vector(n), Matrix(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    out.values(i) = a(order[i], order[i]);
    out.vectors.col(i) = v.col(order[i]);
  }
  return out;
}

Matrix inverse_sqrt_spd(const Matrix& m, double ridge) {
  const SymEig eig = sym_eig(m);
  if (eig.values.minCoeff() + ridge <= 0.0) {
    throw SingularMatrixError("inverse_sqrt_spd: matrix is not positive definite");
  }
  return sym_apply(eig, [ridge](double x) { return 1.0 / std::sqrt(x + ridge); });
}

namespace {

struct PositiveQr {
  Matrix q;
  Matrix r;
  bool flipped = false;
};

PositiveQr positive_qr(const Matrix& q_raw) {
  require_square(q_raw, "qr_rotation");
  Eigen::HouseholderQR<Matrix> qr(q_raw);
  PositiveQr out;
  out.q = qr.householderQ();
  out.r = qr.matrixQR().triangularView<Eigen::Upper>();
  const Eigen::Index n = q_raw.rows();
  const double max_diag = out.r.diagonal().cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(std::abs(out.r(i, i)) > 1e-12 * std::max(max_diag, 1e-300))) {
      throw SingularMatrixError("qr_rotation: input is rank deficient");
    }
    if (out.r(i, i) < 0.0) {
      out.q.col(i) *= -1.0;
      out.r.row(i) *= -1.0;
    }
  }
  if (out.q.determinant() < 0.0) out.flipped = true;
  return out;
}

}  // namespace

Matrix qr_rotation(const Matrix& q_raw) {
  PositiveQr f = positive_qr(q_raw);
  if (f.flipped) f.q.row(0) *= -1.0;
  return f.q;
}

Matrix qr_rotation_backward(const Matrix& q_raw, const Matrix& grad_rotation) {
  const PositiveQr f = positive_qr(q_raw);
  Matrix grad_q = grad_rotation;
  if (f.flipped) grad_q.row(0) *= -1.0;
  // dQ = Q * Omega with Omega skew; only the strictly lower part of Q^T dA R^{-1} survives.
  const Matrix b = f.q.transpose() * grad_q;
  Matrix c = (b - b.transpose()).triangularView<Eigen::StrictlyLower>();
  // result = Q c R^{-T}
  const Matrix qc = f.q * c;
  return f.r.triangularView<Eigen::Upper>().solve(qc.transpose()).transpose();
}

Matrix expm(const Matrix& m) {
  require_square(m, "expm");
  const Eigen::Index n = m.rows();
  const double norm = m.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  const Matrix a = m / std::ldexp(1.0, squarings);

  Matrix result = Matrix::Identity(n, n);
  Matrix term = Matrix::Identity(n, n);
  for (int j = 1; j <= 30; ++j) {
    term = term * a / static_cast<double>(j);
    result += term;
    if (term.cwiseAbs().maxCoeff() < 1e-18) break;
  }
  for (int s = 0; s < squarings; ++s) result = result * result;
  return result;
}

Matrix logm_rotation(const Matrix& rotation) {
  require_square(rotation, "logm_rotation");
  const Eigen::Index n = rotation.rows();
  Eigen::RealSchur<Matrix> schur(rotation);
  const Matrix& t = schur.matrixT();
  const Matrix& u = schur.matrixU();

  Matrix log_t = Matrix::Zero(n, n);
  Eigen::Index i = 0;
  while (i < n) {
    const bool block = i + 1 < n && std::abs(t(i + 1, i)) > 1e-14;
    if (block) {
      const double c = 0.5 * (t(i, i) + t(i + 1, i + 1));
      const double s = 0.5 * (t(i + 1, i) - t(i, i + 1));
      const double theta = std::atan2(s, c);
      if (std::abs(theta) > M_PI - 1e-9) {
        throw std::domain_error("logm_rotation: rotation angle at pi has no principal logarithm");
      }
      log_t(i, i + 1) = -theta;
      log_t(i + 1, i) = theta;
      i += 2;
    } else {
      if (t(i, i) < 0.0) {
        throw std::domain_error("logm_rotation: eigenvalue -1 has no principal logarithm");
      }
      i += 1;
    }
  }
  const Matrix out = u * log_t * u.transpose();
  return 0.5 * (out - out.transpose());
}

}  // namespace mvcs
