#pragma once

#include "labtwin/geometry.hpp"
#include "labtwin/point_stream.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace labtwin {

// On-disk point record: position relative to the manifest bounds minimum as
// three f32, then RGB and one pad byte. 16 bytes, little-endian.
struct PackedPoint {
  float x = 0, y = 0, z = 0;
  std::uint8_t r = 0, g = 0, b = 0, pad = 0;
};
static_assert(sizeof(PackedPoint) == 16);

inline constexpr std::size_t kRecordBytes = sizeof(PackedPoint);
inline constexpr std::string_view kRecordLayout = "f32x3_rel+u8rgb+pad";
inline constexpr int kLodFormatVersion = 1;
// Routing uses integer cell coordinates with max_level bits per axis.
inline constexpr int kMaxSupportedLevel = 20;

struct OctreeNode {
  std::string name; // "r" followed by octant digits 0-7
  int level = 0;
  Aabb bounds;    // cubic
  double spacing = 0; // minimum distance between points stored here
  std::uint64_t num_points = 0;
  std::uint64_t byte_offset = 0;
  std::uint64_t byte_size = 0;
  std::uint8_t child_mask = 0; // bit i set when child octant i exists

  friend bool operator==(const OctreeNode &, const OctreeNode &) = default;
};

struct LodManifest {
  int version = kLodFormatVersion;
  Aabb bounds; // cubified root
  double root_spacing = 0;
  std::uint64_t total_points = 0;
  std::string record{kRecordLayout};
  std::string hierarchy_digest; // "sha256:<hex>"
  int max_level = 0;
  // Nodes at max_level that had to take points violating spacing or capacity.
  std::vector<std::string> overflow_nodes;

  friend bool operator==(const LodManifest &, const LodManifest &) = default;
};

struct BuildConfig {
  std::optional<double> root_spacing; // nullopt: root cube diagonal / 250
  int max_level = 12;
  std::uint32_t leaf_capacity = 20000;
  std::uint64_t memory_budget = std::uint64_t{1} << 30;
  unsigned threads = 0; // 0: hardware concurrency

  void validate() const;
};

inline constexpr double kAutoSpacingDivisor = 250.0;
inline constexpr std::uint64_t kMinMemoryBudget = std::uint64_t{1} << 20;

struct BuildResult {
  LodManifest manifest;
  std::vector<OctreeNode> nodes; // sorted by name
  std::size_t chunk_count = 0;   // chunks processed; 1 when the build runs in memory
};

// Node octant path helpers. Octant digit = (x_hi << 2) | (y_hi << 1) | z_hi.
std::string child_name(std::string_view parent, int octant);
std::string_view parent_name(std::string_view name); // empty for the root
bool is_valid_node_name(std::string_view name);
Aabb node_bounds(const Aabb &root_cube, std::string_view name);
double node_spacing(double root_spacing, int level);

// Root cube for a cloud: cubified tight bounds, with a 1 mm floor on the
// edge so degenerate clouds still get a proper cube.
Aabb root_cube_for(const Aabb &tight_bounds);
double auto_root_spacing(const Aabb &root_cube);

PackedPoint pack_point(const ColorPoint &p, const Vec3 &origin);
ColorPoint unpack_point(const PackedPoint &p, const Vec3 &origin);

// Builds the LOD dataset into out_dir (manifest.json, hierarchy.json,
// octree.bin). `bounds` may be omitted, in which case an extra pass over
// the input computes it. Every input point lands in exactly one node.
//
// Placement rule: points are offered in input order starting at the root.
// A node below max_level accepts a point when it holds fewer than
// leaf_capacity points and no stored point is closer than its spacing;
// otherwise the point moves to the child octant containing it. Nodes at
// max_level accept everything and are flagged as overflow when that breaks
// the spacing or capacity rule.
BuildResult build_octree(PointStream &input, const std::optional<Aabb> &bounds,
                         const BuildConfig &cfg, const std::filesystem::path &out_dir);

} // namespace labtwin
