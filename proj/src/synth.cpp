#include "labtwin/synth.hpp"

#include "labtwin/error.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace labtwin {

namespace {

// Equipment blocks: three columns along x, rows along y separated by 4 m aisles.
struct Block {
  Aabb box;
  Rgb color;
};

const std::vector<Block> &room_blocks() {
  static const std::vector<Block> blocks = [] {
    std::vector<Block> out;
    const double xs[3][2] = {{3, 11}, {16, 24}, {29, 37}};
    int index = 0;
    for (int row = 0; row < 8; ++row) {
      const double y0 = 4 + 12.0 * row;
      for (const auto &x : xs) {
        const double height = 1.0 + 0.8 * (index % 3);
        const Rgb color{static_cast<std::uint8_t>(60 + 40 * (index % 4)),
                        static_cast<std::uint8_t>(90 + 30 * (index % 3)),
                        static_cast<std::uint8_t>(150 - 20 * (index % 5))};
        out.push_back({Aabb(Vec3(x[0], y0, 0), Vec3(x[1], y0 + 8, height)), color});
        ++index;
      }
    }
    return out;
  }();
  return blocks;
}

} // namespace

SynthShape parse_synth_shape(std::string_view name) {
  if (name == "box")
    return SynthShape::Box;
  if (name == "room" || name == "room-with-aisles")
    return SynthShape::RoomWithAisles;
  throw ValidationError(fmt::format("unknown synth shape '{}'", name));
}

SynthSource::SynthSource(const SynthSpec &spec) : spec_(spec), rng_(spec.seed) {
  if (!(spec.box_size > 0) || !std::isfinite(spec.box_size))
    throw ValidationError("synth box_size must be a positive finite length");
}

void SynthSource::rewind() {
  rng_.seed(spec_.seed);
  emitted_ = 0;
}

double SynthSource::uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

std::uint8_t SynthSource::jitter(int base, int amount) {
  const int v = base + static_cast<int>(rng_() % static_cast<std::uint64_t>(2 * amount + 1)) - amount;
  return static_cast<std::uint8_t>(std::clamp(v, 0, 255));
}

bool SynthSource::next(ColorPoint &out) {
  if (emitted_ == spec_.count)
    return false;
  ++emitted_;
  if (spec_.shape == SynthShape::Box) {
    for (int i = 0; i < 3; ++i)
      out.position[i] = spec_.box_size * uniform();
    for (auto &c : out.rgb)
      c = static_cast<std::uint8_t>(rng_() & 0xFF);
  } else {
    out = room_point();
  }
  return true;
}

ColorPoint SynthSource::room_point() {
  const Vec3 lo = kRoomEnvelope.min();
  const Vec3 hi = kRoomEnvelope.max();
  ColorPoint p;
  const double pick = uniform();
  if (pick < 0.45) { // floor
    p.position = Vec3(uniform(lo.x(), hi.x()), uniform(lo.y(), hi.y()), 0.0);
    p.rgb = {jitter(128, 12), jitter(128, 12), jitter(120, 12)};
  } else if (pick < 0.65) { // walls
    const double z = uniform(lo.z(), hi.z());
    const double t = uniform(0, 2 * (hi.x() + hi.y()));
    if (t < hi.x())
      p.position = Vec3(t, lo.y(), z);
    else if (t < 2 * hi.x())
      p.position = Vec3(t - hi.x(), hi.y(), z);
    else if (t < 2 * hi.x() + hi.y())
      p.position = Vec3(lo.x(), t - 2 * hi.x(), z);
    else
      p.position = Vec3(hi.x(), t - 2 * hi.x() - hi.y(), z);
    p.rgb = {jitter(220, 10), jitter(215, 10), jitter(200, 10)};
  } else if (pick < 0.75) { // ceiling
    p.position = Vec3(uniform(lo.x(), hi.x()), uniform(lo.y(), hi.y()), hi.z());
    p.rgb = {jitter(240, 8), jitter(240, 8), jitter(240, 8)};
  } else { // equipment block surfaces: top plus four sides
    const auto &blocks = room_blocks();
    const auto &block = blocks[static_cast<std::size_t>(rng_() % blocks.size())];
    const Vec3 bl = block.box.min();
    const Vec3 bh = block.box.max();
    const double face = uniform();
    if (face < 0.4) {
      p.position = Vec3(uniform(bl.x(), bh.x()), uniform(bl.y(), bh.y()), bh.z());
    } else {
      const double z = uniform(bl.z(), bh.z());
      const double u = uniform();
      if (face < 0.55)
        p.position = Vec3(bl.x(), bl.y() + u * (bh.y() - bl.y()), z);
      else if (face < 0.7)
        p.position = Vec3(bh.x(), bl.y() + u * (bh.y() - bl.y()), z);
      else if (face < 0.85)
        p.position = Vec3(bl.x() + u * (bh.x() - bl.x()), bl.y(), z);
      else
        p.position = Vec3(bl.x() + u * (bh.x() - bl.x()), bh.y(), z);
    }
    p.rgb = {jitter(block.color[0], 15), jitter(block.color[1], 15), jitter(block.color[2], 15)};
  }
  return p;
}

PointCloud synth_cloud(const SynthSpec &spec) {
  PointCloud cloud;
  cloud.points.reserve(static_cast<std::size_t>(spec.count));
  SynthSource source(spec);
  ColorPoint p;
  while (source.next(p))
    cloud.push_back(p);
  return cloud;
}

} // namespace labtwin
