#pragma once

// Core 3D types shared by every stage: rotations, rigid transforms, range
// measurements and the 16-entry lifted parameter vector.

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <sstream>

#include "rangeloc/errors.hpp"

namespace rangeloc {

using Point3 = Eigen::Vector3d;
using Matrix3 = Eigen::Matrix3d;
using Vector16 = Eigen::Matrix<double, 16, 1>;

inline constexpr double kDefaultOrthTolerance = 1e-9;
inline constexpr double kDefaultPackTolerance = 1e-12;

/// A validated element of SO(3). Raw 3x3 matrices produced by intermediate
/// stages stay `Matrix3` until they pass through `Rotation::from_matrix` or
/// the Procrustes projection.
class Rotation {
 public:
  Rotation() : m_(Matrix3::Identity()) {}

  static Rotation identity() { return Rotation(); }

  /// Throws kInvalidRotation unless ||M M^T - I||_F <= tol and |det M - 1| <= tol.
  static Rotation from_matrix(const Matrix3& m,
                              double tol = kDefaultOrthTolerance) {
    if (!m.allFinite()) {
      throw Error(ErrorKind::kInvalidRotation, "non-finite entries");
    }
    const double orth = (m * m.transpose() - Matrix3::Identity()).norm();
    const double det = m.determinant();
    if (orth > tol || std::abs(det - 1.0) > tol) {
      std::ostringstream os;
      os << "orthogonality error " << orth << ", det " << det;
      throw Error(ErrorKind::kInvalidRotation, os.str());
    }
    return Rotation(m);
  }

  static Rotation about_axis(const Point3& axis, double angle_rad) {
    return Rotation(
        Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix());
  }

  static Rotation from_quaternion(const Eigen::Quaterniond& q) {
    return Rotation(q.normalized().toRotationMatrix());
  }

  const Matrix3& matrix() const { return m_; }
  double operator()(int i, int j) const { return m_(i, j); }

  Rotation operator*(const Rotation& other) const {
    return Rotation(m_ * other.m_);
  }
  Point3 operator*(const Point3& p) const { return m_ * p; }
  Rotation transpose() const { return Rotation(m_.transpose()); }

  bool operator==(const Rotation& other) const { return m_ == other.m_; }

 private:
  explicit Rotation(const Matrix3& m) : m_(m) {}

  Matrix3 m_;
};

struct RigidTransform {
  Rotation rotation;
  Point3 translation = Point3::Zero();

  Point3 apply(const Point3& p) const {
    return rotation.matrix() * p + translation;
  }

  bool operator==(const RigidTransform& other) const {
    return rotation == other.rotation && translation == other.translation;
  }
};

/// One synchronized sample: the reference agent's global position, the
/// GPS-denied agent's INS position and the measured inter-agent range.
struct Measurement {
  double time = 0.0;
  Point3 p_ref = Point3::Zero();
  Point3 p_local = Point3::Zero();
  double distance = 0.0;

  bool operator==(const Measurement& other) const = default;
};

/// Lifted unknowns, 0-based:
///   [0..8]   r11 r12 r13 r21 r22 r23 r31 r32 r33 (row-major R)
///   [9..11]  t1 t2 t3
///   [12..14] (R^T T)_j = sum_i r_ij t_i, j = 1..3
///   [15]     |T|^2
struct ThetaVector {
  Vector16 values = Vector16::Zero();

  double operator[](int i) const { return values[i]; }
  double& operator[](int i) { return values[i]; }
};

inline Point3 transform_point(const RigidTransform& t, const Point3& p) {
  return t.apply(p);
}

inline double predict_distance(const RigidTransform& t, const Point3& p_ref,
                               const Point3& p_local) {
  return (t.apply(p_local) - p_ref).norm();
}

inline ThetaVector pack_theta(const RigidTransform& t) {
  const Matrix3& r = t.rotation.matrix();
  const Point3& tr = t.translation;
  ThetaVector theta;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) theta[3 * i + j] = r(i, j);
  }
  theta.values.segment<3>(9) = tr;
  theta.values.segment<3>(12) = r.transpose() * tr;
  theta[15] = tr.squaredNorm();
  return theta;
}

/// Returns the rotation block verbatim (no projection) and the translation.
inline std::pair<Matrix3, Point3> unpack_theta(const ThetaVector& theta) {
  Matrix3 m;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) m(i, j) = theta[3 * i + j];
  }
  return {m, theta.values.segment<3>(9)};
}

inline constexpr int kNumConstraints = 14;
inline constexpr int kNumIndependentConstraints = 10;

/// C1..C14 of the lifted parameterization, evaluated as polynomials.
/// C1..C10 are independent; C11..C14 follow from them on rank-1 lifts.
inline std::array<double, kNumConstraints> constraint_residuals(
    const ThetaVector& theta) {
  const auto& t = theta.values;
  auto sq = [](double v) { return v * v; };
  return {
      sq(t[0]) + sq(t[1]) + sq(t[2]) - 1.0,
      sq(t[3]) + sq(t[4]) + sq(t[5]) - 1.0,
      sq(t[6]) + sq(t[7]) + sq(t[8]) - 1.0,
      sq(t[0]) + sq(t[3]) + sq(t[6]) - 1.0,
      sq(t[1]) + sq(t[4]) + sq(t[7]) - 1.0,
      t[0] * t[1] + t[3] * t[4] + t[6] * t[7],
      t[0] * t[9] + t[3] * t[10] + t[6] * t[11] - t[12],
      t[1] * t[9] + t[4] * t[10] + t[7] * t[11] - t[13],
      sq(t[9]) + sq(t[10]) + sq(t[11]) - t[15],
      sq(t[12]) + sq(t[13]) + sq(t[14]) - t[15],
      sq(t[2]) + sq(t[5]) + sq(t[8]) - 1.0,
      t[0] * t[2] + t[3] * t[5] + t[6] * t[8],
      t[1] * t[2] + t[4] * t[5] + t[7] * t[8],
      t[2] * t[9] + t[5] * t[10] + t[8] * t[11] - t[14],
  };
}

}  // namespace rangeloc
