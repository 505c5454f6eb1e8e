#pragma once

#include "labtwin/octree.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace labtwin {

inline constexpr std::string_view kManifestFile = "manifest.json";
inline constexpr std::string_view kHierarchyFile = "hierarchy.json";
inline constexpr std::string_view kOctreeFile = "octree.bin";

// A built dataset: manifest plus the name-sorted node list.
struct LodDataset {
  std::filesystem::path dir;
  LodManifest manifest;
  std::vector<OctreeNode> nodes;

  const OctreeNode *find(std::string_view name) const;
  std::filesystem::path octree_path() const { return dir / kOctreeFile; }
};

std::string manifest_to_json(const LodManifest &manifest);
std::string hierarchy_to_json(std::span<const OctreeNode> nodes);

// Reads and checks manifest.json, hierarchy.json and the octree.bin size.
// Throws ValidationError on version skew or digest mismatch and FormatError
// on malformed or truncated files.
LodDataset load_hierarchy(const std::filesystem::path &dir);

std::string read_node_blob(const LodDataset &dataset, const OctreeNode &node);
std::vector<ColorPoint> decode_node_blob(std::string_view blob, const Vec3 &origin);
std::vector<ColorPoint> read_node_points(const LodDataset &dataset, std::string_view name);
std::vector<ColorPoint> read_node_points(const std::filesystem::path &dir, std::string_view name);

} // namespace labtwin
