#include "labtwin/measure.hpp"

#include <fmt/format.h>

namespace labtwin {

CoordinateReadout query_coordinate(const Vec3 &picked, int decimals) {
  if (!all_finite(picked))
    throw ValidationError("coordinate query: non-finite point");
  if (decimals < 0 || decimals > 12)
    throw ValidationError("coordinate query: decimals must be in [0, 12]");
  return {picked, decimals,
          fmt::format("{:.{}f}, {:.{}f}, {:.{}f}", picked.x(), decimals, picked.y(), decimals,
                      picked.z(), decimals)};
}

} // namespace labtwin
