#include "labtwin/octree.hpp"

#include "labtwin/error.hpp"

#include <fmt/format.h>

namespace labtwin {

void BuildConfig::validate() const {
  if (root_spacing && (!(*root_spacing > 0) || !std::isfinite(*root_spacing)))
    throw ValidationError(fmt::format("root_spacing must be > 0, got {}", *root_spacing));
  if (max_level < 0 || max_level > kMaxSupportedLevel)
    throw ValidationError(
        fmt::format("max_level must be in [0, {}], got {}", kMaxSupportedLevel, max_level));
  if (leaf_capacity < 1)
    throw ValidationError("leaf_capacity must be >= 1");
  if (memory_budget < kMinMemoryBudget)
    throw ResourceError(fmt::format("memory_budget {} below the {} byte minimum", memory_budget,
                                    kMinMemoryBudget));
}

std::string child_name(std::string_view parent, int octant) {
  std::string out(parent);
  out.push_back(static_cast<char>('0' + octant));
  return out;
}

std::string_view parent_name(std::string_view name) {
  return name.size() <= 1 ? std::string_view{} : name.substr(0, name.size() - 1);
}

bool is_valid_node_name(std::string_view name) {
  if (name.empty() || name.front() != 'r' || name.size() > 1 + kMaxSupportedLevel)
    return false;
  for (char c : name.substr(1))
    if (c < '0' || c > '7')
      return false;
  return true;
}

Aabb node_bounds(const Aabb &root_cube, std::string_view name) {
  Vec3 lo = root_cube.min();
  double edge = root_cube.sizes().x();
  for (char c : name.substr(1)) {
    const int octant = c - '0';
    edge *= 0.5;
    if (octant & 4)
      lo.x() += edge;
    if (octant & 2)
      lo.y() += edge;
    if (octant & 1)
      lo.z() += edge;
  }
  return Aabb(lo, (lo.array() + edge).matrix());
}

double node_spacing(double root_spacing, int level) { return std::ldexp(root_spacing, -level); }

Aabb root_cube_for(const Aabb &tight_bounds) {
  constexpr double kMinEdge = 1e-3;
  Aabb cube = cubify(tight_bounds);
  if (cube.sizes().x() < kMinEdge) {
    const Vec3 c = tight_bounds.center();
    cube = Aabb((c.array() - kMinEdge / 2).matrix(), (c.array() + kMinEdge / 2).matrix());
  }
  return cube;
}

double auto_root_spacing(const Aabb &root_cube) {
  return root_cube.diagonal().norm() / kAutoSpacingDivisor;
}

PackedPoint pack_point(const ColorPoint &p, const Vec3 &origin) {
  const Vec3 rel = p.position - origin;
  return {static_cast<float>(rel.x()), static_cast<float>(rel.y()), static_cast<float>(rel.z()),
          p.rgb[0],                    p.rgb[1],                    p.rgb[2],
          0};
}

ColorPoint unpack_point(const PackedPoint &p, const Vec3 &origin) {
  ColorPoint out;
  out.position = origin + Vec3(p.x, p.y, p.z);
  out.rgb = {p.r, p.g, p.b};
  return out;
}

} // namespace labtwin
