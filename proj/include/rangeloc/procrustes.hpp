#pragma once

#include <Eigen/SVD>

#include <cmath>

#include "rangeloc/errors.hpp"
#include "rangeloc/geometry.hpp"

namespace rangeloc {

struct ProcrustesResult {
  Rotation rotation;
  /// det(Sigma - I) of the input's singular values; 0 for an exact rotation.
  double orth_error = 0.0;
  /// det(U V^T) was -1 and the last singular direction was flipped.
  bool flipped = false;
  /// The flip hit a tie between the two smallest singular values, so other
  /// rotations are equally close.
  bool ambiguous = false;
};

/// Nearest rotation to M in Frobenius norm: U V^T, or U J V^T with
/// J = diag(1, 1, -1) when det(U V^T) = -1.
inline ProcrustesResult nearest_rotation(const Matrix3& m,
                                         double eps_rank = 1e-10) {
  if (!m.allFinite()) {
    throw Error(ErrorKind::kInvalidArgument, "matrix has non-finite entries");
  }
  Eigen::JacobiSVD<Matrix3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d sv = svd.singularValues();
  if (!(sv[1] > eps_rank * std::max(1.0, sv[0]))) {
    throw Error(ErrorKind::kRankDeficient,
                "second singular value vanishes; projection is not unique");
  }
  const Matrix3& u = svd.matrixU();
  const Matrix3& v = svd.matrixV();
  ProcrustesResult out;
  Matrix3 r = u * v.transpose();
  if (r.determinant() < 0) {
    Eigen::Vector3d j(1.0, 1.0, -1.0);
    r = u * j.asDiagonal() * v.transpose();
    out.flipped = true;
    out.ambiguous = (sv[1] - sv[2]) <= eps_rank * std::max(1.0, sv[0]);
  }
  out.rotation = Rotation::from_matrix(r);
  out.orth_error = (sv[0] - 1.0) * (sv[1] - 1.0) * (sv[2] - 1.0);
  return out;
}

}  // namespace rangeloc
