#pragma once

#include <limits>

#include <Eigen/Dense>

#include "advsearch/errors.hpp"

namespace advsearch {

struct LsqResult {
  Eigen::VectorXd x;
  Eigen::Index rank = 0;
  bool rank_deficient = false;
};

// Minimum-norm least-squares solution via complete orthogonal decomposition.
inline LsqResult solve_least_squares(const Eigen::MatrixXd& a, const Eigen::VectorXd& y) {
  if (a.rows() < a.cols()) throw ParameterError("solve_least_squares: requires rows >= cols");
  if (a.rows() != y.size()) throw ParameterError("solve_least_squares: dimension mismatch");
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
  LsqResult out;
  out.x = cod.solve(y);
  out.rank = cod.rank();
  out.rank_deficient = out.rank < a.cols();
  return out;
}

struct PseudoInverse {
  Eigen::MatrixXd pinv;
  Eigen::Index rank = 0;
};

// Moore-Penrose inverse of a tall matrix. Full column rank takes the thin-QR
// route R^-1 Q^T in O(rows * cols^2); otherwise falls back to the complete
// orthogonal decomposition.
inline PseudoInverse pseudo_inverse(const Eigen::MatrixXd& a) {
  if (a.rows() < a.cols()) throw ParameterError("pseudo_inverse: requires rows >= cols");
  const Eigen::Index d = a.cols();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  const Eigen::MatrixXd& f = qr.matrixQR();
  const Eigen::VectorXd diag = f.diagonal().cwiseAbs();
  const double tol = (d ? diag.maxCoeff() : 0.0) * static_cast<double>(a.rows()) *
                     std::numeric_limits<double>::epsilon();
  PseudoInverse out;
  if (d > 0 && diag.minCoeff() > tol) {
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(a.rows(), d);
    out.pinv = f.topRows(d).triangularView<Eigen::Upper>().solve(q.transpose());
    out.rank = d;
    return out;
  }
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
  out.pinv = cod.pseudoInverse();
  out.rank = cod.rank();
  return out;
}

inline double residual_norm(const Eigen::MatrixXd& a, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  return (a * x - y).norm();
}

// sigma_max / sigma_min.
inline double condition_number(const Eigen::MatrixXd& a) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(a);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return 1.0;
  return s(0) / s(s.size() - 1);
}

}  // namespace advsearch
