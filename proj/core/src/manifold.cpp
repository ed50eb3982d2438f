#include "fedrlr/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fedrlr/errors.hpp"

namespace fedrlr::manifold {
namespace {

constexpr double kOrthoTol = 1e-10;

// Squared normal-space residual below this fraction of ||g||^2 counts as
// tangent. The residual is computed by cancellation, so it carries absolute
// error of a few ulps of ||g||^2.
constexpr double kTangentTol2 = 1e-13;

std::string shape(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

void require_same_shape(const RankRPoint& x, const Matrix& d, const char* what) {
  if (d.rows() != x.rows() || d.cols() != x.cols()) {
    throw DimensionMismatch(std::string(what) + ": expected " + std::to_string(x.rows()) +
                            "x" + std::to_string(x.cols()) + ", got " + shape(d));
  }
}

// Flip each singular pair so the largest-magnitude entry of the U column is
// positive.
void fix_signs(Matrix& u, Matrix& v) {
  for (Index j = 0; j < u.cols(); ++j) {
    Index arg = 0;
    u.col(j).cwiseAbs().maxCoeff(&arg);
    if (u(arg, j) < 0.0) {
      u.col(j) = -u.col(j);
      v.col(j) = -v.col(j);
    }
  }
}

void check_rank(const Vector& s, Index rank, const char* where) {
  if (rank < 1 || s.size() < rank) {
    throw RankDeficient(std::string(where) + ": fewer than " + std::to_string(rank) +
                            " singular values available",
                        0.0, s.size() > 0 ? s(0) : 0.0);
  }
  const double s1 = s(0);
  const double sr = s(rank - 1);
  if (!(s1 > 0.0) || !(sr > kRankTol * s1)) {
    std::ostringstream os;
    os << where << ": sigma_" << rank << " = " << sr << " <= " << kRankTol << " * sigma_1 ("
       << s1 << ")";
    throw RankDeficient(os.str(), sr, s1);
  }
}

RankRPoint from_svd(const Matrix& u_full, const Vector& s, const Matrix& v_full, Index rank,
                    const char* where) {
  check_rank(s, rank, where);
  Matrix u = u_full.leftCols(rank);
  Matrix v = v_full.leftCols(rank);
  fix_signs(u, v);
  return RankRPoint(std::move(u), s.head(rank), std::move(v));
}

Matrix thin_q(const Eigen::HouseholderQR<Matrix>& qr, Index cols) {
  return qr.householderQ() * Matrix::Identity(qr.rows(), cols);
}

}  // namespace

std::int64_t manifold_dim(const ManifoldDims& dims) {
  if (dims.rows < 1 || dims.cols < 1 || dims.rank < 1 ||
      dims.rank > std::min(dims.rows, dims.cols)) {
    throw DimensionMismatch("manifold_dim: need 1 <= R <= min(M, N)");
  }
  return static_cast<std::int64_t>(dims.rows + dims.cols - dims.rank) * dims.rank;
}

RankRPoint::RankRPoint(Matrix u, Vector sigma, Matrix v)
    : u_(std::move(u)), sigma_(std::move(sigma)), v_(std::move(v)) {
  const Index r = sigma_.size();
  if (r < 1 || u_.cols() != r || v_.cols() != r || u_.rows() < r || v_.rows() < r) {
    throw DimensionMismatch("RankRPoint: U is " + shape(u_) + ", V is " + shape(v_) +
                            ", sigma has " + std::to_string(r) + " entries");
  }
  if (!u_.allFinite() || !v_.allFinite() || !sigma_.allFinite()) {
    throw NumericalOverflow("RankRPoint: non-finite factor entries");
  }
  for (Index i = 1; i < r; ++i) {
    if (sigma_(i) > sigma_(i - 1)) {
      throw Error("RankRPoint: singular values must be non-increasing");
    }
  }
  check_rank(sigma_, r, "RankRPoint");
  const Matrix eye = Matrix::Identity(r, r);
  const double ortho =
      std::max((u_.transpose() * u_ - eye).norm(), (v_.transpose() * v_ - eye).norm());
  if (ortho > kOrthoTol) {
    std::ostringstream os;
    os << "RankRPoint: factors not orthonormal (deviation " << ortho << ")";
    throw Error(os.str());
  }
}

Matrix RankRPoint::ambient() const { return u_ * sigma_.asDiagonal() * v_.transpose(); }

Matrix RankRPoint::balanced_left() const {
  return u_ * sigma_.cwiseSqrt().asDiagonal();
}

Matrix RankRPoint::balanced_right() const {
  return v_ * sigma_.cwiseSqrt().asDiagonal();
}

Matrix RankRPoint::apply(const Matrix& b) const {
  if (b.rows() != cols()) {
    throw DimensionMismatch("RankRPoint::apply: operand has " + std::to_string(b.rows()) +
                            " rows, expected " + std::to_string(cols()));
  }
  return u_ * (sigma_.asDiagonal() * (v_.transpose() * b));
}

Matrix RankRPoint::apply_transpose(const Matrix& b) const {
  if (b.rows() != rows()) {
    throw DimensionMismatch("RankRPoint::apply_transpose: operand has " +
                            std::to_string(b.rows()) + " rows, expected " +
                            std::to_string(rows()));
  }
  return v_ * (sigma_.asDiagonal() * (u_.transpose() * b));
}

double RankRPoint::invariant_violation() const {
  const Index r = rank();
  const Matrix eye = Matrix::Identity(r, r);
  double worst =
      std::max((u_.transpose() * u_ - eye).norm(), (v_.transpose() * v_ - eye).norm());
  for (Index i = 1; i < r; ++i) worst = std::max(worst, sigma_(i) - sigma_(i - 1));
  if (!(sigma_(r - 1) > kRankTol * sigma_(0))) worst = std::max(worst, 1.0);
  return worst;
}

RankRPoint svd_truncate(const Matrix& a, Index rank) {
  if (rank < 1 || rank > std::min(a.rows(), a.cols())) {
    throw DimensionMismatch("svd_truncate: rank " + std::to_string(rank) +
                            " invalid for a " + shape(a) + " matrix");
  }
  if (!a.allFinite()) throw NumericalOverflow("svd_truncate: non-finite input");
  Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return from_svd(svd.matrixU(), svd.singularValues(), svd.matrixV(), rank, "svd_truncate");
}

RankRPoint svd_truncate_factored(const Matrix& left, const Matrix& right, Index rank) {
  if (left.cols() != right.cols()) {
    throw DimensionMismatch("svd_truncate_factored: inner dimensions " + shape(left) +
                            " vs " + shape(right) + "^T");
  }
  if (rank < 1 || rank > std::min(left.rows(), right.rows())) {
    throw DimensionMismatch("svd_truncate_factored: rank " + std::to_string(rank) +
                            " invalid");
  }
  if (!left.allFinite() || !right.allFinite()) {
    throw NumericalOverflow("svd_truncate_factored: non-finite input");
  }
  const Index p = left.cols();
  const Index pl = std::min(left.rows(), p);
  const Index pr = std::min(right.rows(), p);

  Eigen::HouseholderQR<Matrix> qr_l(left);
  Eigen::HouseholderQR<Matrix> qr_r(right);
  const Matrix r_l = qr_l.matrixQR().topRows(pl).triangularView<Eigen::Upper>();
  const Matrix r_r = qr_r.matrixQR().topRows(pr).triangularView<Eigen::Upper>();
  const Matrix core = r_l * r_r.transpose();

  Eigen::JacobiSVD<Matrix> svd(core, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  check_rank(s, rank, "svd_truncate_factored");

  Matrix u = thin_q(qr_l, pl) * svd.matrixU().leftCols(rank);
  Matrix v = thin_q(qr_r, pr) * svd.matrixV().leftCols(rank);
  fix_signs(u, v);
  return RankRPoint(std::move(u), s.head(rank), std::move(v));
}

Matrix tangent_project(const RankRPoint& x, const Matrix& delta) {
  require_same_shape(x, delta, "tangent_project");
  const Matrix& u = x.U();
  const Matrix& v = x.V();
  const Matrix ut_d = u.transpose() * delta;  // R x N
  const Matrix d_v = delta * v;               // M x R
  const Matrix core = ut_d * v;               // R x R
  return u * ut_d + (d_v - u * core) * v.transpose();
}

Matrix riemannian_gradient(const RankRPoint& x, const Matrix& euclid_grad) {
  return tangent_project(x, euclid_grad);
}

RankRPoint retract(const RankRPoint& x, const Matrix& g, double eta) {
  require_same_shape(x, g, "retract");
  if (!g.allFinite() || !std::isfinite(eta)) {
    throw NumericalOverflow("retract: non-finite step");
  }
  const Index r = x.rank();
  const Matrix& u = x.U();
  const Matrix& v = x.V();

  const Matrix ut_g = u.transpose() * g;  // R x N
  const Matrix g_v = g * v;               // M x R
  const Matrix core = ut_g * v;           // R x R

  const double g2 = g.squaredNorm();
  const double normal2 = g2 - ut_g.squaredNorm() - g_v.squaredNorm() + core.squaredNorm();
  if (normal2 > kTangentTol2 * g2) {
    return svd_truncate(x.ambient() - eta * g, r);
  }

  // g = U core V^T + U_p V^T + U V_p^T with U_p = (I - UU^T) g V and
  // V_p = (I - VV^T) g^T U, so X - eta g = [U U_p] C [V V_p]^T with
  // C = [[Sigma - eta core, -eta I], [-eta I, 0]].
  const Matrix u_p = g_v - u * core;
  const Matrix v_p = ut_g.transpose() - v * core.transpose();

  Matrix left(x.rows(), 2 * r);
  left.leftCols(r) = u * (Matrix(x.sigma().asDiagonal()) - eta * core) - eta * u_p;
  left.rightCols(r) = -eta * u;
  Matrix right(x.cols(), 2 * r);
  right.leftCols(r) = v;
  right.rightCols(r) = v_p;
  RankRPoint out = svd_truncate_factored(left, right, r);
  // Cancellation leaves rounding noise that is rank R relative to itself;
  // judge sigma_R against the size of the inputs instead.
  const double scale = x.sigma()(0) + std::abs(eta) * std::sqrt(g2);
  const double sr = out.sigma()(r - 1);
  if (!(sr > kRankTol * scale)) {
    std::ostringstream os;
    os << "retract: sigma_" << r << " = " << sr << " <= " << kRankTol << " * " << scale;
    throw RankDeficient(os.str(), sr, out.sigma()(0));
  }
  return out;
}

Index numerical_rank(const Matrix& a, double tol) {
  if (a.size() == 0) return 0;
  Eigen::BDCSVD<Matrix> svd(a);
  const Vector& s = svd.singularValues();
  if (!(s(0) > 0.0)) return 0;
  return static_cast<Index>((s.array() > tol * s(0)).count());
}

}  // namespace fedrlr::manifold
