#pragma once

#include "labtwin/geometry.hpp"

#include <absl/container/flat_hash_map.h>

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace labtwin {

inline constexpr double kDefaultSubsampleSpacing = 0.005;

struct SubsampleConfig {
  double spacing = kDefaultSubsampleSpacing; // meters, > 0
  // Maximum number of occupied grid cells held in memory.
  std::size_t cell_hash_budget = std::size_t{1} << 26;

  void validate() const;
};

struct SubsampleStats {
  std::uint64_t kept = 0;
  std::uint64_t dropped = 0;
};

// First-come minimum-distance filter. A point is kept iff no previously
// kept point lies closer than `spacing`. Kept points are hashed into cells
// of edge `spacing`, so any conflicting point sits in the 3x3x3 block
// around the candidate's cell.
class Subsampler {
public:
  explicit Subsampler(const SubsampleConfig &cfg);

  // Returns true when the point is kept. Throws ResourceError when keeping it
  // would exceed the cell budget.
  bool offer(const Vec3 &p);

  const SubsampleStats &stats() const { return stats_; }
  std::size_t occupied_cells() const { return cells_.size(); }

private:
  using CellKey = std::array<std::int64_t, 3>;
  static constexpr std::uint32_t kNone = 0xFFFFFFFFu;

  CellKey cell_of(const Vec3 &p) const;

  SubsampleConfig cfg_;
  double inv_spacing_;
  double spacing_sq_;
  absl::flat_hash_map<CellKey, std::uint32_t> cells_; // head of per-cell chain
  std::vector<Vec3> kept_;
  std::vector<std::uint32_t> next_;
  SubsampleStats stats_;
};

// Streaming form: pulls from `source` until it returns false, pushing kept
// points to `sink` in input order.
SubsampleStats subsample(const std::function<bool(ColorPoint &)> &source,
                         const std::function<void(const ColorPoint &)> &sink,
                         const SubsampleConfig &cfg);

std::vector<ColorPoint> subsample(std::span<const ColorPoint> input, const SubsampleConfig &cfg,
                                  SubsampleStats *stats = nullptr);

} // namespace labtwin
