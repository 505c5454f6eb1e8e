#pragma once

#include "labtwin/octree.hpp"

#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace labtwin {

struct CameraView {
  Vec3 position = Vec3::Zero();
  Vec3 forward = Vec3::UnitY();
  Vec3 up = Vec3::UnitZ();
  double vertical_fov_deg = 60.0;
  double aspect = 16.0 / 9.0;
  double viewport_height = 1080.0; // pixels
  double near_plane = 0.1;
  double far_plane = 1000.0;

  // Normalises forward and makes up orthogonal to it. Throws
  // ValidationError when the view is degenerate or out of range.
  void orthonormalize();
  Vec3 right() const { return forward.cross(up); }
};

// Eye camera for a yaw/pitch pose (degrees; yaw clockwise from +Y, pitch up).
CameraView camera_from_pose(const Vec3 &position, double yaw_deg, double pitch_deg,
                            CameraView base = {});

class Frustum {
public:
  explicit Frustum(const CameraView &view);

  // Conservative box test: false only when the box lies entirely on the
  // outer side of one of the six planes.
  bool intersects(const Aabb &box) const;

private:
  std::array<Eigen::Hyperplane<double, 3>, 6> planes_; // normals point inward
};

// viewport_height * node_radius / (distance_to_bounds * tan(fov/2)); +inf
// when the camera is inside the box.
double projected_extent(const Aabb &bounds, const CameraView &view);

// Node size in pixels before clamping: a point covers about its node
// spacing on screen at the distance to the node centre.
double raw_point_size(const OctreeNode &node, const CameraView &view);
inline constexpr double kMinPointSize = 1.0;
inline constexpr double kMaxPointSize = 16.0;
double adaptive_point_size(const OctreeNode &node, const CameraView &view);

// Name-sorted nodes with child links, immutable after construction and safe
// to share across threads.
class LodHierarchy {
public:
  explicit LodHierarchy(std::vector<OctreeNode> nodes);

  const std::vector<OctreeNode> &nodes() const { return nodes_; }
  const std::array<std::int32_t, 8> &children(std::size_t i) const { return children_[i]; }
  std::int32_t parent(std::size_t i) const { return parents_[i]; }
  std::size_t size() const { return nodes_.size(); }

private:
  std::vector<OctreeNode> nodes_;
  std::vector<std::array<std::int32_t, 8>> children_;
  std::vector<std::int32_t> parents_;
};

struct LodSelection {
  std::vector<std::size_t> indices; // admission order, root first
  std::vector<std::string> names;   // same order
  std::uint64_t total_points = 0;
  std::uint64_t bytes = 0;
};

// Candidates are nodes whose bounds meet the frustum and whose projected
// extent is at least min_pixels (the root always qualifies). They are ranked
// by descending extent, ties by name, and admitted in rank order until the
// next one would overflow the point budget. A child only becomes a candidate
// once its parent is admitted, so the result is a rooted subtree and a
// larger budget always yields a superset.
LodSelection select_nodes(const LodHierarchy &hierarchy, const CameraView &view,
                          std::uint64_t point_budget, double min_pixels);

} // namespace labtwin
