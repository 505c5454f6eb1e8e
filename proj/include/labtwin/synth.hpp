#pragma once

#include "labtwin/cloud_io.hpp"

#include <cstdint>
#include <random>

namespace labtwin {

enum class SynthShape { Box, RoomWithAisles };

SynthShape parse_synth_shape(std::string_view name);

struct SynthSpec {
  SynthShape shape = SynthShape::Box;
  std::uint64_t count = 0;
  std::uint64_t seed = 0;
  // Edge length of the box shape, meters. Ignored for the room.
  double box_size = 1.0;
};

// Declared envelope of the room fixture: x in [0,40], y in [0,100], z in [0,6].
inline const Aabb kRoomEnvelope{Vec3(0, 0, 0), Vec3(40, 100, 6)};

// Deterministic point generator. Restarting with the same spec replays the
// identical sequence on any platform (no std distributions involved).
class SynthSource {
public:
  explicit SynthSource(const SynthSpec &spec);

  bool next(ColorPoint &out);
  void rewind();
  const SynthSpec &spec() const { return spec_; }

private:
  double uniform(); // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint8_t jitter(int base, int amount);
  ColorPoint room_point();

  SynthSpec spec_;
  std::mt19937_64 rng_;
  std::uint64_t emitted_ = 0;
};

PointCloud synth_cloud(const SynthSpec &spec);

} // namespace labtwin
