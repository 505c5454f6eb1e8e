#include "labtwin/subsample.hpp"

#include "labtwin/error.hpp"

#include <fmt/format.h>

namespace labtwin {

void SubsampleConfig::validate() const {
  if (!(spacing > 0) || !std::isfinite(spacing))
    throw ValidationError(fmt::format("spacing must be > 0, got {}", spacing));
  if (cell_hash_budget == 0)
    throw ValidationError("cell_hash_budget must be > 0");
}

Subsampler::Subsampler(const SubsampleConfig &cfg)
    : cfg_(cfg), inv_spacing_(1.0 / cfg.spacing), spacing_sq_(cfg.spacing * cfg.spacing) {
  cfg_.validate();
}

Subsampler::CellKey Subsampler::cell_of(const Vec3 &p) const {
  return {static_cast<std::int64_t>(std::floor(p.x() * inv_spacing_)),
          static_cast<std::int64_t>(std::floor(p.y() * inv_spacing_)),
          static_cast<std::int64_t>(std::floor(p.z() * inv_spacing_))};
}

bool Subsampler::offer(const Vec3 &p) {
  if (!all_finite(p))
    throw ValidationError(fmt::format("point index {}: non-finite coordinate",
                                      stats_.kept + stats_.dropped));
  const CellKey key = cell_of(p);
  for (std::int64_t dx = -1; dx <= 1; ++dx) {
    for (std::int64_t dy = -1; dy <= 1; ++dy) {
      for (std::int64_t dz = -1; dz <= 1; ++dz) {
        const auto it = cells_.find(CellKey{key[0] + dx, key[1] + dy, key[2] + dz});
        if (it == cells_.end())
          continue;
        for (std::uint32_t i = it->second; i != kNone; i = next_[i]) {
          if ((kept_[i] - p).squaredNorm() < spacing_sq_) {
            ++stats_.dropped;
            return false;
          }
        }
      }
    }
  }
  if (kept_.size() >= kNone)
    throw ResourceError("subsample: more than 2^32-1 kept points");
  auto [it, inserted] = cells_.try_emplace(key, kNone);
  if (inserted && cells_.size() > cfg_.cell_hash_budget) {
    cells_.erase(it);
    throw ResourceError(fmt::format(
        "subsample: occupied cells exceed cell_hash_budget ({}) after {} points", cfg_.cell_hash_budget,
        stats_.kept + stats_.dropped));
  }
  const auto index = static_cast<std::uint32_t>(kept_.size());
  kept_.push_back(p);
  next_.push_back(it->second);
  it->second = index;
  ++stats_.kept;
  return true;
}

SubsampleStats subsample(const std::function<bool(ColorPoint &)> &source,
                         const std::function<void(const ColorPoint &)> &sink,
                         const SubsampleConfig &cfg) {
  Subsampler filter(cfg);
  ColorPoint p;
  while (source(p)) {
    if (filter.offer(p.position))
      sink(p);
  }
  return filter.stats();
}

std::vector<ColorPoint> subsample(std::span<const ColorPoint> input, const SubsampleConfig &cfg,
                                  SubsampleStats *stats) {
  std::vector<ColorPoint> out;
  Subsampler filter(cfg);
  for (const auto &p : input) {
    if (filter.offer(p.position))
      out.push_back(p);
  }
  if (stats)
    *stats = filter.stats();
  return out;
}

} // namespace labtwin
