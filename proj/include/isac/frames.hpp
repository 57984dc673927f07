#pragma once

#include <algorithm>
#include <cmath>

#include "isac/types.hpp"

namespace isac {

/// Z-Y-X Euler composition R = Rz(gamma) * Ry(beta) * Rx(alpha); euler = (alpha, beta, gamma).
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> rotation_zyx(const Eigen::Matrix<Scalar, 3, 1>& euler) {
  using std::cos;
  using std::sin;
  const Scalar a = euler.x(), b = euler.y(), g = euler.z();
  Eigen::Matrix<Scalar, 3, 3> rz, ry, rx;
  rz << cos(g), -sin(g), 0, sin(g), cos(g), 0, 0, 0, 1;
  ry << cos(b), 0, sin(b), 0, 1, 0, -sin(b), 0, cos(b);
  rx << 1, 0, 0, 0, cos(a), -sin(a), 0, sin(a), cos(a);
  return rz * ry * rx;
}

/// Inverse of rotation_zyx for a proper rotation matrix.
inline Vec3 euler_zyx_from_rotation(const Mat3& r) {
  const double beta = -std::asin(std::clamp(r(2, 0), -1.0, 1.0));
  const double alpha = std::atan2(r(2, 1), r(2, 2));
  const double gamma = std::atan2(r(1, 0), r(0, 0));
  return {alpha, beta, gamma};
}

/// Arrival angles in the array frame (x = row axis p, y = column axis q,
/// z = array normal). The element-phase model only depends on
/// (|cos t| cos f, sin t |cos f|), so t and 180deg - t are indistinguishable;
/// the canonical domain is t in (0, 90], f in (0, 180), which covers the
/// sector y > 0, z > 0 exactly once.
struct ArrayAngles {
  double theta = 0.0;  ///< radians
  double phi = 0.0;    ///< radians
};

/// Unit direction (array frame) of canonical angles.
inline Vec3 direction_from_angles(const ArrayAngles& a) {
  const double cf = std::cos(a.phi);
  return {std::cos(a.theta) * cf, std::sin(a.theta) * std::abs(cf), std::sin(a.phi)};
}

/// Canonical angles of an array-frame direction; the direction need not be
/// normalized. Directions with y < 0 or z <= 0 fold onto the canonical sector
/// and should be rejected by the caller (see in_sector).
inline ArrayAngles angles_from_direction(const Vec3& dir) {
  const Vec3 u = dir.normalized();
  const double inplane = std::hypot(u.x(), u.y());
  const double signed_cos_phi = u.x() < 0.0 ? -inplane : inplane;
  ArrayAngles out;
  out.phi = std::atan2(u.z(), signed_cos_phi);
  out.theta = std::atan2(std::abs(u.y()), std::abs(u.x()));
  return out;
}

/// True when the direction lies inside the canonical sector with the given
/// angular margin (radians) from the domain edges.
inline bool in_sector(const Vec3& dir, double margin) {
  const Vec3 u = dir.normalized();
  if (u.y() <= 0.0 || u.z() <= 0.0) return false;
  const ArrayAngles a = angles_from_direction(u);
  return a.theta >= margin && a.theta <= deg2rad(90.0) - 1e-12 &&
         a.phi >= margin && a.phi <= kPi - margin;
}

}  // namespace isac
