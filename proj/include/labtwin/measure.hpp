#pragma once

#include "labtwin/error.hpp"
#include "labtwin/geometry.hpp"

#include <Eigen/Eigenvalues>

#include <span>
#include <string>

namespace labtwin {

template <typename Scalar>
Scalar measure_distance(const Vec3T<Scalar> &a, const Vec3T<Scalar> &b) {
  return (a - b).norm();
}

// Least-squares plane through the polygon vertices: centroid and unit normal
// (eigenvector of the smallest scatter eigenvalue). Throws ValidationError
// when fewer than 3 points are given or all points are collinear.
template <typename Scalar> struct BestFitPlane {
  Vec3T<Scalar> centroid;
  Vec3T<Scalar> normal;
};

template <typename Scalar>
BestFitPlane<Scalar> best_fit_plane(std::span<const Vec3T<Scalar>> points) {
  if (points.size() < 3)
    throw ValidationError("area: polygon needs at least 3 points");
  Vec3T<Scalar> centroid = Vec3T<Scalar>::Zero();
  for (const auto &p : points) {
    if (!all_finite(p))
      throw ValidationError("area: non-finite vertex");
    centroid += p;
  }
  centroid /= static_cast<Scalar>(points.size());
  Eigen::Matrix<Scalar, 3, 3> scatter = Eigen::Matrix<Scalar, 3, 3>::Zero();
  for (const auto &p : points) {
    const Vec3T<Scalar> d = p - centroid;
    scatter.noalias() += d * d.transpose();
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix<Scalar, 3, 3>> eig(scatter);
  const auto &lambda = eig.eigenvalues(); // ascending
  const Scalar eps = std::numeric_limits<Scalar>::epsilon() * 64;
  if (!(lambda[2] > 0) || lambda[1] <= eps * lambda[2])
    throw ValidationError("area: polygon is degenerate (collinear or coincident points)");
  return {centroid, eig.eigenvectors().col(0).normalized()};
}

// Area of the polygon projected orthogonally onto its best-fit plane
// (shoelace in the plane, via the vector area).
template <typename Scalar> Scalar measure_area(std::span<const Vec3T<Scalar>> polygon) {
  const BestFitPlane<Scalar> plane = best_fit_plane(polygon);
  Vec3T<Scalar> vector_area = Vec3T<Scalar>::Zero();
  for (std::size_t i = 0; i < polygon.size(); ++i) {
    const Vec3T<Scalar> a = polygon[i] - plane.centroid;
    const Vec3T<Scalar> b = polygon[(i + 1) % polygon.size()] - plane.centroid;
    vector_area += a.cross(b);
  }
  return std::abs(plane.normal.dot(vector_area)) / Scalar(2);
}

struct CoordinateReadout {
  Vec3 position;
  int decimals = 3;
  std::string text; // "x, y, z" at `decimals` places
};

CoordinateReadout query_coordinate(const Vec3 &picked, int decimals = 3);

} // namespace labtwin
