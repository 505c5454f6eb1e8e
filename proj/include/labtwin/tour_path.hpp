#pragma once

#include "labtwin/scene.hpp"

#include <span>
#include <vector>

namespace labtwin {

struct TourSample {
  Vec3 position = Vec3::Zero();
  double yaw_deg = 0;
  double pitch_deg = 0;
};

// Centripetal Catmull-Rom path through the tour waypoints, indexed by arc
// length. End segments use reflected phantom controls (2*P0 - P1), so two
// waypoints give the straight segment between them.
class TourPath {
public:
  // Resolves the scene's tour; throws ValidationError for fewer than two
  // resolvable waypoints or coincident consecutive waypoints.
  static TourPath from_scene(const SceneDefinition &scene);
  explicit TourPath(std::vector<Waypoint> controls);

  double length() const { return arc_.back(); }
  std::size_t segment_count() const { return segments_.size(); }
  // Arc length at each control waypoint (first is 0, last is length()).
  std::span<const double> control_arc() const { return arc_; }
  const std::vector<Waypoint> &controls() const { return controls_; }

  // Pose at arc length s, clamped to [0, length()].
  TourSample at(double s) const;

  // Raw spline evaluation on segment i at parameter u in [0, 1].
  Vec3 evaluate(std::size_t segment, double u) const;
  Vec3 derivative(std::size_t segment, double u) const;

private:
  struct Segment {
    Vec3 p1, p2, m1, m2; // Hermite form
    std::vector<double> table_s; // arc length at u = k / (N - 1), relative to segment start
  };

  double segment_arc(std::size_t i, double u0, double u1) const;
  double invert(std::size_t i, double local_s) const;

  std::vector<Waypoint> controls_;
  std::vector<Segment> segments_;
  std::vector<double> arc_;
};

} // namespace labtwin
