#include "labtwin/selection.hpp"

#include "labtwin/error.hpp"

#include <absl/container/flat_hash_map.h>
#include <fmt/format.h>

#include <limits>
#include <queue>

namespace labtwin {

void CameraView::orthonormalize() {
  if (!all_finite(position) || !all_finite(forward) || !all_finite(up))
    throw ValidationError("camera: non-finite vector");
  if (forward.norm() == 0)
    throw ValidationError("camera: zero forward vector");
  forward.normalize();
  up -= up.dot(forward) * forward;
  if (up.norm() < 1e-12)
    throw ValidationError("camera: up is parallel to forward");
  up.normalize();
  if (!(vertical_fov_deg > 0 && vertical_fov_deg < 180))
    throw ValidationError(fmt::format("camera: fov {} outside (0, 180)", vertical_fov_deg));
  if (!(near_plane > 0 && near_plane < far_plane))
    throw ValidationError("camera: need 0 < near < far");
  if (!(aspect > 0) || !(viewport_height > 0))
    throw ValidationError("camera: aspect and viewport height must be positive");
}

CameraView camera_from_pose(const Vec3 &position, double yaw_deg, double pitch_deg,
                            CameraView base) {
  const double yaw = deg2rad(yaw_deg);
  const double pitch = deg2rad(pitch_deg);
  base.position = position;
  base.forward = Vec3(std::sin(yaw) * std::cos(pitch), std::cos(yaw) * std::cos(pitch),
                      std::sin(pitch));
  base.up = Vec3::UnitZ();
  base.orthonormalize();
  return base;
}

Frustum::Frustum(const CameraView &view) {
  const Vec3 f = view.forward;
  const Vec3 u = view.up;
  const Vec3 r = view.right();
  const double tv = std::tan(deg2rad(view.vertical_fov_deg) / 2);
  const double th = tv * view.aspect;
  using Plane = Eigen::Hyperplane<double, 3>;
  planes_ = {Plane(f, view.position + view.near_plane * f),
             Plane(-f, view.position + view.far_plane * f),
             Plane((th * f + r).normalized(), view.position),
             Plane((th * f - r).normalized(), view.position),
             Plane((tv * f + u).normalized(), view.position),
             Plane((tv * f - u).normalized(), view.position)};
}

bool Frustum::intersects(const Aabb &box) const {
  for (const auto &plane : planes_) {
    const Vec3 &n = plane.normal();
    const Vec3 p((n.x() >= 0 ? box.max() : box.min()).x(), (n.y() >= 0 ? box.max() : box.min()).y(),
                 (n.z() >= 0 ? box.max() : box.min()).z());
    if (plane.signedDistance(p) < 0)
      return false;
  }
  return true;
}

double projected_extent(const Aabb &bounds, const CameraView &view) {
  const double distance = distance_to_box(bounds, view.position);
  if (distance <= 0)
    return std::numeric_limits<double>::infinity();
  const double radius = bounds.diagonal().norm() / 2;
  return view.viewport_height * radius /
         (distance * std::tan(deg2rad(view.vertical_fov_deg) / 2));
}

double raw_point_size(const OctreeNode &node, const CameraView &view) {
  const double distance = (node.bounds.center() - view.position).norm();
  if (distance <= 0)
    return std::numeric_limits<double>::infinity();
  return view.viewport_height * node.spacing /
         (distance * 2 * std::tan(deg2rad(view.vertical_fov_deg) / 2));
}

double adaptive_point_size(const OctreeNode &node, const CameraView &view) {
  return std::clamp(raw_point_size(node, view), kMinPointSize, kMaxPointSize);
}

LodHierarchy::LodHierarchy(std::vector<OctreeNode> nodes)
    : nodes_(std::move(nodes)), children_(nodes_.size()), parents_(nodes_.size(), -1) {
  absl::flat_hash_map<std::string_view, std::int32_t> index;
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    index[nodes_[i].name] = static_cast<std::int32_t>(i);
  if (nodes_.empty() || nodes_.front().name != "r")
    throw ValidationError("hierarchy: missing root node");
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    children_[i].fill(-1);
    if (i > 0 && !(nodes_[i - 1].name < nodes_[i].name))
      throw ValidationError("hierarchy: nodes not sorted by name");
  }
  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    const auto it = index.find(parent_name(nodes_[i].name));
    if (it == index.end())
      throw ValidationError(fmt::format("hierarchy: node {} has no parent", nodes_[i].name));
    parents_[i] = it->second;
    children_[static_cast<std::size_t>(it->second)]
             [static_cast<std::size_t>(nodes_[i].name.back() - '0')] = static_cast<std::int32_t>(i);
  }
}

LodSelection select_nodes(const LodHierarchy &hierarchy, const CameraView &view,
                          std::uint64_t point_budget, double min_pixels) {
  if (point_budget == 0)
    throw ValidationError("select_nodes: point budget must be > 0");
  const auto &nodes = hierarchy.nodes();
  if (nodes.front().num_points > point_budget)
    throw ValidationError(fmt::format("budget below root size ({} < {})", point_budget,
                                      nodes.front().num_points));
  const Frustum frustum(view);

  struct Candidate {
    double extent;
    std::size_t index;
  };
  // Highest extent first; equal extents by ascending name.
  auto lower_priority = [&](const Candidate &a, const Candidate &b) {
    if (a.extent != b.extent)
      return a.extent < b.extent;
    return nodes[a.index].name > nodes[b.index].name;
  };
  std::priority_queue<Candidate, std::vector<Candidate>, decltype(lower_priority)> queue(
      lower_priority);
  queue.push({projected_extent(nodes.front().bounds, view), 0});

  LodSelection sel;
  std::uint64_t remaining = point_budget;
  while (!queue.empty()) {
    const Candidate c = queue.top();
    queue.pop();
    const OctreeNode &node = nodes[c.index];
    if (node.num_points > remaining)
      break;
    remaining -= node.num_points;
    sel.indices.push_back(c.index);
    sel.names.push_back(node.name);
    sel.total_points += node.num_points;
    sel.bytes += node.byte_size;
    for (const std::int32_t child : hierarchy.children(c.index)) {
      if (child < 0)
        continue;
      const Aabb &b = nodes[static_cast<std::size_t>(child)].bounds;
      if (!frustum.intersects(b))
        continue;
      const double extent = projected_extent(b, view);
      if (extent >= min_pixels)
        queue.push({extent, static_cast<std::size_t>(child)});
    }
  }
  return sel;
}

} // namespace labtwin
