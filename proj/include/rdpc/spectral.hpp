#pragma once

// Symmetric spectral algebra for the rank-deficient covariances that appear
// after decoding. Everything here works on small dense matrices (n up to a
// few hundred) and is pure.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

#include "rdpc/errors.hpp"

namespace rdpc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Relative threshold below which an eigenvalue is treated as zero:
/// lambda_i counts as positive iff lambda_i > kRankTol * max(lambda_max, 1).
inline constexpr double kRankTol = 1e-10;

/// a = q * Diag(lambda) * q^T, eigenvalues in descending order.
struct SpectralDecomp {
  Matrix q;
  Vector lambda;

  Eigen::Index size() const { return lambda.size(); }
  Matrix reconstruct() const { return q * lambda.asDiagonal() * q.transpose(); }
};

namespace detail {

inline bool all_finite(const Matrix& a) { return a.allFinite(); }

inline double rank_cutoff(const Vector& lambda, double tol) {
  const double top = lambda.size() > 0 ? lambda.maxCoeff() : 0.0;
  return tol * std::max(top, 1.0);
}

}  // namespace detail

inline SpectralDecomp eig_sym(const Matrix& a) {
  detail::require(a.rows() == a.cols(), "eig_sym: matrix must be square");
  detail::require(detail::all_finite(a), "eig_sym: non-finite entry");
  if (a.size() > 0) {
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
    detail::require(asym <= 1e-10 * scale,
                    "eig_sym: matrix is not symmetric (max |a - a^T| = " +
                        std::to_string(asym) + ")");
  }

  const Matrix sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success) throw PreconditionError("eig_sym: eigensolver failed");

  // Eigen returns ascending order.
  const Eigen::Index n = a.rows();
  SpectralDecomp d{Matrix(n, n), Vector(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    d.lambda(i) = solver.eigenvalues()(n - 1 - i);
    d.q.col(i) = solver.eigenvectors().col(n - 1 - i);
  }
  return d;
}

/// Number of eigenvalues above the rank cutoff.
inline Eigen::Index numerical_rank(const SpectralDecomp& d, double tol = kRankTol) {
  const double cut = detail::rank_cutoff(d.lambda, tol);
  return (d.lambda.array() > cut).count();
}

/// Generalized (Moore-Penrose) inverse: 1/lambda_i on the positive part of
/// the spectrum, 0 elsewhere. The zero matrix maps to the zero matrix.
inline Matrix gen_inverse(const SpectralDecomp& d, double tol = kRankTol) {
  const double cut = detail::rank_cutoff(d.lambda, tol);
  Vector inv = Vector::Zero(d.size());
  for (Eigen::Index i = 0; i < d.size(); ++i)
    if (d.lambda(i) > cut) inv(i) = 1.0 / d.lambda(i);
  return d.q * inv.asDiagonal() * d.q.transpose();
}

/// Generalized inverse square root, q * Diag(lambda_i^{-1/2} or 0) * q^T.
inline Matrix gen_inverse_sqrt(const SpectralDecomp& d, double tol = kRankTol) {
  const double cut = detail::rank_cutoff(d.lambda, tol);
  Vector inv = Vector::Zero(d.size());
  for (Eigen::Index i = 0; i < d.size(); ++i)
    if (d.lambda(i) > cut) inv(i) = 1.0 / std::sqrt(d.lambda(i));
  return d.q * inv.asDiagonal() * d.q.transpose();
}

/// Log of the generalized determinant (sum of logs of the positive part).
inline double gen_log_det(const SpectralDecomp& d, double tol = kRankTol) {
  const double cut = detail::rank_cutoff(d.lambda, tol);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < d.size(); ++i)
    if (d.lambda(i) > cut) acc += std::log(d.lambda(i));
  return acc;
}

/// Product of the positive eigenvalues; 1 for the zero matrix.
inline double gen_det(const SpectralDecomp& d, double tol = kRankTol) {
  return std::exp(gen_log_det(d, tol));
}

/// PSD square root. Eigenvalues within the rank cutoff of zero (either sign)
/// map to 0, so the root has the same numerical rank as the input.
inline Matrix sqrt_psd(const SpectralDecomp& d) {
  const double cut = detail::rank_cutoff(d.lambda, kRankTol);
  Vector root(d.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (d.lambda(i) < -cut)
      throw PreconditionError("sqrt_psd: matrix is not PSD (eigenvalue " +
                              std::to_string(d.lambda(i)) + ")");
    root(i) = d.lambda(i) > cut ? std::sqrt(d.lambda(i)) : 0.0;
  }
  Matrix s = d.q * root.asDiagonal() * d.q.transpose();
  return 0.5 * (s + s.transpose());
}

inline Matrix sqrt_psd(const Matrix& a) { return sqrt_psd(eig_sym(a)); }

/// Modified Gram-Schmidt with one re-orthogonalization pass. Column 0 of the
/// output is column 0 of the input scaled to unit length; the span of every
/// leading block of columns is preserved.
inline Matrix gram_schmidt(const Matrix& m) {
  detail::require(m.rows() == m.cols(), "gram_schmidt: matrix must be square");
  detail::require(detail::all_finite(m), "gram_schmidt: non-finite entry");
  const Eigen::Index n = m.cols();
  Matrix q(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    Vector v = m.col(j);
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index i = 0; i < j; ++i) v -= q.col(i).dot(v) * q.col(i);
    const double pivot = v.norm();
    if (!(pivot > 1e-10 * std::max(1.0, m.col(j).norm())))
      throw RankDeficientError("gram_schmidt: column " + std::to_string(j) +
                               " is linearly dependent on the previous ones; "
                               "redraw the random block");
    q.col(j) = v / pivot;
  }
  return q;
}

}  // namespace rdpc
