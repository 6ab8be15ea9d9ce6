//==============================================================================
// Copyright 2026 The reloc authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//==============================================================================

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <numbers>

namespace reloc
{

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = std::numbers::pi;

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

inline Mat3 skew(const Vec3& v)
{
  Mat3 s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return s;
}

/// Rodrigues exponential of a rotation vector.
inline Mat3 so3_exp(const Vec3& w)
{
  const double theta = w.norm();
  if (theta < 1e-12)
    return Mat3::Identity() + skew(w);
  return Eigen::AngleAxisd(theta, w / theta).toRotationMatrix();
}

/// Rotation angle in radians, in [0, pi]. atan2 of sine and cosine stays accurate
/// near identity, where acos of the trace alone loses half the digits.
inline double rotation_angle(const Mat3& r)
{
  const double c = (r.trace() - 1.0) * 0.5;
  const double s = 0.5 * Vec3(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1)).norm();
  return std::atan2(s, c);
}

//-----------------------------------------------------------------------------
/// Rigid transform x -> R x + t.
///
/// Trajectory and projecting poses map the sensor frame into the world frame.
/// Sensor frames follow the optical convention: +z forward, +x right, +y down.
struct Pose
{
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Pose() = default;
  Pose(const Mat3& r, const Vec3& t) : rotation(r), translation(t) {}

  static Pose from_quaternion(double qx, double qy, double qz, double qw, const Vec3& t)
  {
    Eigen::Quaterniond q(qw, qx, qy, qz);
    q.normalize();
    return {q.toRotationMatrix(), t};
  }

  Eigen::Quaterniond quaternion() const
  {
    Eigen::Quaterniond q(rotation);
    q.normalize();
    // Canonical sign keeps text output stable.
    if (q.w() < 0.0)
      q.coeffs() *= -1.0;
    return q;
  }

  Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }

  Pose operator*(const Pose& o) const
  {
    return {rotation * o.rotation, rotation * o.translation + translation};
  }

  Pose inverse() const
  {
    const Mat3 rt = rotation.transpose();
    return {rt, -(rt * translation)};
  }

  bool is_valid(double tol = 1e-9) const
  {
    if (!rotation.allFinite() || !translation.allFinite())
      return false;
    const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
    return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
  }

  bool operator==(const Pose& o) const
  {
    return rotation == o.rotation && translation == o.translation;
  }
};

/// Sensor orientation looking along a horizontal heading in a z-up world.
/// The optical axis points along `heading`, image-down maps to world -z.
inline Mat3 look_along(const Vec3& heading)
{
  const Vec3 forward = Vec3(heading.x(), heading.y(), 0.0).normalized();
  const Vec3 down(0.0, 0.0, -1.0);
  const Vec3 right = down.cross(forward);
  Mat3 r;
  r.col(0) = right;
  r.col(1) = down;
  r.col(2) = forward;
  return r;
}

} // namespace reloc
