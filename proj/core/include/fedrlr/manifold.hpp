#pragma once

// Fixed-rank matrix manifold M_R = { X in R^{M x N} : rank(X) = R }.
//
// Points are stored as a compact SVD X = U diag(sigma) V^T. Tangent vectors
// and Euclidean gradients are plain dense matrices.

#include <Eigen/Dense>

#include <cstdint>

namespace fedrlr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

namespace manifold {

/// sigma_R must exceed kRankTol * sigma_1 for a matrix to count as rank R.
inline constexpr double kRankTol = 1e-9;

struct ManifoldDims {
  Index rows = 0;
  Index cols = 0;
  Index rank = 0;
};

/// (M + N - R) R. Throws DimensionMismatch for invalid dims.
std::int64_t manifold_dim(const ManifoldDims& dims);

class RankRPoint {
 public:
  /// Validates shapes, orthonormality of U and V (1e-10 Frobenius), and that
  /// sigma is positive, non-increasing and numerically rank R.
  RankRPoint(Matrix u, Vector sigma, Matrix v);

  const Matrix& U() const { return u_; }
  const Vector& sigma() const { return sigma_; }
  const Matrix& V() const { return v_; }
  Index rows() const { return u_.rows(); }
  Index cols() const { return v_.rows(); }
  Index rank() const { return sigma_.size(); }
  ManifoldDims dims() const { return {rows(), cols(), rank()}; }

  /// Dense U diag(sigma) V^T.
  Matrix ambient() const;

  /// U sqrt(Sigma) and V sqrt(Sigma), so that ambient() = left * right^T.
  Matrix balanced_left() const;
  Matrix balanced_right() const;

  /// X * B computed as U (Sigma (V^T B)); O(R (M + N)) per column.
  Matrix apply(const Matrix& b) const;
  /// X^T * B computed as V (Sigma (U^T B)).
  Matrix apply_transpose(const Matrix& b) const;

  /// Largest deviation from the invariants; 0 for a perfect point.
  double invariant_violation() const;

 private:
  Matrix u_;
  Vector sigma_;
  Matrix v_;
};

/// Best rank-R approximation of `a` (Eckart-Young), from a full dense SVD.
/// Throws RankDeficient when sigma_R(a) <= kRankTol * sigma_1(a).
RankRPoint svd_truncate(const Matrix& a, Index rank);

/// Best rank-R approximation of left * right^T without forming the product.
/// Exact: uses thin QR of both factors and an SVD of the small core.
RankRPoint svd_truncate_factored(const Matrix& left, const Matrix& right, Index rank);

/// Orthogonal projection onto the tangent space at x:
/// P(D) = U U^T D + D V V^T - U U^T D V V^T.
Matrix tangent_project(const RankRPoint& x, const Matrix& delta);

/// Riemannian gradient under the embedded metric: the tangent projection of
/// the Euclidean gradient.
Matrix riemannian_gradient(const RankRPoint& x, const Matrix& euclid_grad);

/// Projective retraction: svd_truncate(X - eta * g, R).
///
/// When g is tangent at x (the normal case), X - eta g has rank <= 2R and is
/// truncated through its factored form; otherwise falls back to a dense SVD.
/// Both give the same point up to floating-point rounding.
RankRPoint retract(const RankRPoint& x, const Matrix& g, double eta);

/// Ambient matrix rank at relative tolerance `tol` (via SVD).
Index numerical_rank(const Matrix& a, double tol = kRankTol);

/// Frobenius inner product.
inline double inner(const Matrix& a, const Matrix& b) { return a.cwiseProduct(b).sum(); }

}  // namespace manifold
}  // namespace fedrlr
