#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace labtwin {

// World frame: right-handed, Z up, meters. Yaw is measured clockwise from
// +Y ("north") when seen from above, so yaw 90 faces +X.
template <typename Scalar> using Vec2T = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar> using Vec3T = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar> using AabbT = Eigen::AlignedBox<Scalar, 3>;

using Vec2 = Vec2T<double>;
using Vec3 = Vec3T<double>;
using Vec3f = Vec3T<float>;
// Default-constructed boxes are empty (min > max); that is the
// "undefined" flag for bounds of an empty cloud.
using Aabb = AabbT<double>;

using Rgb = std::array<std::uint8_t, 3>;

struct ColorPoint {
  Vec3 position = Vec3::Zero();
  Rgb rgb{0, 0, 0};

  friend bool operator==(const ColorPoint &a, const ColorPoint &b) {
    return a.position == b.position && a.rgb == b.rgb;
  }
};

template <typename Scalar> constexpr Scalar deg2rad(Scalar deg) {
  return deg * std::numbers::pi_v<Scalar> / Scalar(180);
}

template <typename Scalar> constexpr Scalar rad2deg(Scalar rad) {
  return rad * Scalar(180) / std::numbers::pi_v<Scalar>;
}

// [0, 360)
template <typename Scalar> Scalar wrap_degrees_360(Scalar deg) {
  Scalar r = std::fmod(deg, Scalar(360));
  if (r < 0)
    r += Scalar(360);
  if (r >= Scalar(360))
    r -= Scalar(360);
  return r;
}

// (-180, 180]
template <typename Scalar> Scalar wrap_degrees_180(Scalar deg) {
  Scalar r = wrap_degrees_360(deg);
  if (r > Scalar(180))
    r -= Scalar(360);
  return r;
}

template <typename Derived> bool all_finite(const Eigen::MatrixBase<Derived> &v) {
  return v.array().isFinite().all();
}

// Expand to the smallest cube sharing the box centre.
template <typename Scalar> AabbT<Scalar> cubify(const AabbT<Scalar> &box) {
  const Vec3T<Scalar> center = box.center();
  const Scalar half = box.sizes().maxCoeff() / Scalar(2);
  return AabbT<Scalar>(center.array() - half, center.array() + half);
}

// Euclidean distance from a point to a box; zero when inside.
template <typename Scalar>
Scalar distance_to_box(const AabbT<Scalar> &box, const Vec3T<Scalar> &p) {
  const Vec3T<Scalar> d =
      (box.min() - p).cwiseMax(p - box.max()).cwiseMax(Vec3T<Scalar>::Zero());
  return d.norm();
}

} // namespace labtwin

namespace labtwin {

inline bool operator==(const Aabb &a, const Aabb &b) {
  return a.min() == b.min() && a.max() == b.max();
}

} // namespace labtwin
