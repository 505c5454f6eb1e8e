#pragma once

#include "labtwin/scene.hpp"
#include "labtwin/tour_path.hpp"

#include <Eigen/Geometry>

#include <optional>
#include <set>
#include <string>
#include <string_view>

namespace labtwin {

struct KinematicsConfig {
  double eye_height = 1.70;         // meters above floor_z
  double walk_speed = 1.60;         // m/s
  double rotate_sensitivity = 0.15; // degrees per look unit
  bool gravity_enabled = true;      // flat floor: z pinned to floor_z + eye_height
  double floor_z = 0.0;

  void validate() const;
};

struct CameraPose {
  Vec3 position = Vec3::Zero();
  double yaw_deg = 0;   // [0, 360), clockwise from +Y
  double pitch_deg = 0; // [-89, 89]

  // Wraps yaw and clamps pitch.
  CameraPose normalized() const;
  friend bool operator==(const CameraPose &, const CameraPose &) = default;
};

enum class SessionMode { Free, Tour, Escape };
std::string_view to_string(SessionMode mode);

inline constexpr double kArrivalThresholdM = 1.0;

struct GuidanceState {
  std::string exit_id;
  double bearing_deg = 0;          // horizontal direction to the exit, [0, 360)
  double relative_bearing_deg = 0; // bearing minus camera yaw, (-180, 180]
  double distance_m = 0;           // 3D Euclidean
  bool arrived = false;            // distance_m <= kArrivalThresholdM
  friend bool operator==(const GuidanceState &, const GuidanceState &) = default;
};

struct SessionState {
  CameraPose pose;
  SessionMode mode = SessionMode::Free;
  double tour_progress = 0; // arc length along the tour path
  bool tour_paused = false;
  std::set<std::string> viewed; // hotspot ids
  std::optional<GuidanceState> guidance; // present iff mode == Escape
  std::optional<std::string> last_arrival; // exit reached by the last escape episode
  double clock = 0;

  friend bool operator==(const SessionState &, const SessionState &) = default;
};

SessionState initial_state(const SceneDefinition &scene);

struct MotionInput {
  Vec2 move = Vec2::Zero(); // x strafe right, y forward; each clamped to [-1, 1]
  Vec2 look = Vec2::Zero(); // x turns right, y pitches up; in look units
};

// First-person step. Allowed in free and escape mode (walking toward an
// exit); throws ValidationError in tour mode or for dt <= 0.
SessionState step_free(const SessionState &state, const MotionInput &input, double dt,
                       const KinematicsConfig &cfg);

// Pose becomes the waypoint pose exactly and the mode returns to free.
SessionState teleport(const SessionState &state, const Waypoint &waypoint);
SessionState teleport(const SessionState &state, const SceneDefinition &scene,
                      std::string_view waypoint_id);

SessionState start_tour(const SessionState &state, const TourPath &path);
// Advances along the path at speed_mps while unpaused; ends in free mode at
// the end of the path.
SessionState step_tour(const SessionState &state, double dt, const TourPath &path,
                       double speed_mps);

using Ray = Eigen::ParametrizedLine<double, 3>;

// Distance along the ray to the first point inside the sphere (0 when the
// origin is already inside), or nullopt on a miss.
std::optional<double> ray_sphere_entry(const Ray &ray, const Vec3 &center, double radius);

// Nearest hotspot whose trigger sphere the ray enters within max_range;
// equal entry distances go to the smaller id.
std::optional<std::string> pick_hotspot(const SceneDefinition &scene, const Ray &ray,
                                        double max_range);

struct CategoryProgress {
  HotspotCategory category = HotspotCategory::Info;
  std::size_t viewed = 0;
  std::size_t total = 0;
  friend bool operator==(const CategoryProgress &, const CategoryProgress &) = default;
};

CategoryProgress category_progress(const SessionState &state, const SceneDefinition &scene,
                                   HotspotCategory category);

struct MarkViewedResult {
  SessionState state;
  CategoryProgress progress;
};

MarkViewedResult mark_viewed(const SessionState &state, const SceneDefinition &scene,
                             std::string_view hotspot_id);

// Exit nearest to `position` by 3D distance; ties go to the smaller id.
const ExitPoint &nearest_exit(const SceneDefinition &scene, const Vec3 &position);
GuidanceState compute_guidance(const CameraPose &pose, const ExitPoint &exit);

// Targets the nearest exit for the whole episode.
SessionState start_escape(const SessionState &state, const SceneDefinition &scene);

struct GuidanceUpdate {
  SessionState state;
  GuidanceState guidance;
  bool completed = false; // arrival this update; state is back in free mode
};

GuidanceUpdate update_guidance(const SessionState &state, const SceneDefinition &scene);

// SHA-256 over a fixed little-endian serialisation of every state field.
std::string state_hash(const SessionState &state);

} // namespace labtwin
