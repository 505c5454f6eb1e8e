#pragma once

#include "labtwin/lod_format.hpp"
#include "labtwin/point_stream.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace labtwin {

// Order-independent multiset summary of quantized points: count plus
// integer sums of the f32 bit patterns per axis and of each colour channel.
struct PointFingerprint {
  std::uint64_t count = 0;
  std::array<std::uint64_t, 3> position_bits{};
  std::array<std::uint64_t, 3> color_sum{};

  void add(const PackedPoint &p);
  friend bool operator==(const PointFingerprint &, const PointFingerprint &) = default;
};

// Fingerprint of a source cloud quantized the way the builder stores it.
PointFingerprint fingerprint_source(PointStream &input, const Vec3 &origin);

struct AuditOptions {
  // Exhaustive minimum-distance check inside every node (overflow nodes
  // are reported but not counted as failures).
  bool poisson = false;
  std::optional<PointFingerprint> source;
};

struct AuditReport {
  std::vector<std::string> failures; // each names the offending node
  std::vector<std::string> notes;
  std::uint64_t nodes_checked = 0;
  std::uint64_t points_checked = 0;
  std::uint64_t poisson_nodes_checked = 0;
  PointFingerprint fingerprint;
  bool ok() const { return failures.empty(); }
};

// Structural and payload audit of a loaded dataset: level and spacing
// chain, child masks, every point inside its node cube, pad bytes zero,
// and optionally the Poisson property and a source fingerprint match.
AuditReport audit_dataset(const LodDataset &dataset, const AuditOptions &options = {});

// Smallest pairwise distance among points in adjacent grid cells of edge
// `cell`: exact whenever the true minimum is below `cell`, otherwise some
// value >= cell (+inf when no two points share a neighbourhood).
double min_pairwise_distance(const std::vector<Vec3> &points, double cell);

} // namespace labtwin
