#include "labtwin/engine.hpp"

#include "labtwin/digest.hpp"
#include "labtwin/error.hpp"

#include <fmt/format.h>

#include <limits>

namespace labtwin {

void KinematicsConfig::validate() const {
  if (!(eye_height > 0) || !(walk_speed > 0) || !(rotate_sensitivity > 0))
    throw ValidationError("kinematics: eye_height, walk_speed and rotate_sensitivity must be > 0");
  if (!std::isfinite(eye_height) || !std::isfinite(walk_speed) ||
      !std::isfinite(rotate_sensitivity) || !std::isfinite(floor_z))
    throw ValidationError("kinematics: non-finite parameter");
}

CameraPose CameraPose::normalized() const {
  return {position, wrap_degrees_360(yaw_deg), std::clamp(pitch_deg, -kMaxPitchDeg, kMaxPitchDeg)};
}

std::string_view to_string(SessionMode mode) {
  switch (mode) {
  case SessionMode::Free: return "free";
  case SessionMode::Tour: return "tour";
  case SessionMode::Escape: return "escape";
  }
  return "?";
}

SessionState initial_state(const SceneDefinition &scene) {
  SessionState s;
  if (!scene.waypoints.empty()) {
    const Waypoint &w = scene.waypoints.front();
    s.pose = CameraPose{w.position, w.yaw_deg, w.pitch_deg}.normalized();
  }
  return s;
}

SessionState step_free(const SessionState &state, const MotionInput &input, double dt,
                       const KinematicsConfig &cfg) {
  if (state.mode == SessionMode::Tour)
    throw ValidationError("step_free: not available in tour mode");
  if (!(dt > 0) || !std::isfinite(dt))
    throw ValidationError(fmt::format("step_free: dt must be > 0, got {}", dt));
  SessionState next = state;
  CameraPose pose = state.pose;
  pose.yaw_deg += input.look.x() * cfg.rotate_sensitivity;
  pose.pitch_deg += input.look.y() * cfg.rotate_sensitivity;
  pose = pose.normalized();

  const Vec2 move = input.move.cwiseMax(Vec2(-1, -1)).cwiseMin(Vec2(1, 1));
  const double yaw = deg2rad(pose.yaw_deg);
  const Vec2 forward(std::sin(yaw), std::cos(yaw));
  const Vec2 right(std::cos(yaw), -std::sin(yaw));
  const Vec2 step = cfg.walk_speed * dt * (move.y() * forward + move.x() * right);
  pose.position.x() += step.x();
  pose.position.y() += step.y();
  if (cfg.gravity_enabled)
    pose.position.z() = cfg.floor_z + cfg.eye_height;

  next.pose = pose;
  next.clock += dt;
  return next;
}

SessionState teleport(const SessionState &state, const Waypoint &waypoint) {
  SessionState next = state;
  next.pose = CameraPose{waypoint.position, waypoint.yaw_deg, waypoint.pitch_deg}.normalized();
  next.mode = SessionMode::Free;
  next.guidance.reset();
  next.tour_paused = false;
  return next;
}

SessionState teleport(const SessionState &state, const SceneDefinition &scene,
                      std::string_view waypoint_id) {
  const Waypoint *w = scene.find_waypoint(waypoint_id);
  if (!w)
    throw ValidationError(fmt::format("teleport: unknown waypoint '{}'", waypoint_id));
  return teleport(state, *w);
}

namespace {

void apply_tour_pose(SessionState &s, const TourPath &path) {
  const TourSample sample = path.at(s.tour_progress);
  s.pose = CameraPose{sample.position, sample.yaw_deg, sample.pitch_deg}.normalized();
}

} // namespace

SessionState start_tour(const SessionState &state, const TourPath &path) {
  SessionState next = state;
  next.mode = SessionMode::Tour;
  next.guidance.reset();
  next.tour_progress = 0;
  next.tour_paused = false;
  apply_tour_pose(next, path);
  return next;
}

SessionState step_tour(const SessionState &state, double dt, const TourPath &path,
                       double speed_mps) {
  if (state.mode != SessionMode::Tour)
    throw ValidationError("step_tour: session is not in tour mode");
  if (!(dt > 0) || !std::isfinite(dt))
    throw ValidationError(fmt::format("step_tour: dt must be > 0, got {}", dt));
  SessionState next = state;
  next.clock += dt;
  if (state.tour_paused)
    return next;
  next.tour_progress = std::min(state.tour_progress + speed_mps * dt, path.length());
  apply_tour_pose(next, path);
  if (next.tour_progress >= path.length()) {
    next.mode = SessionMode::Free;
    next.tour_paused = false;
  }
  return next;
}

std::optional<double> ray_sphere_entry(const Ray &ray, const Vec3 &center, double radius) {
  const Vec3 &d = ray.direction();
  const Vec3 oc = ray.origin() - center;
  const double a = d.squaredNorm();
  const double b = oc.dot(d);
  const double c = oc.squaredNorm() - radius * radius;
  if (c <= 0)
    return 0.0; // origin inside or on the sphere
  const double disc = b * b - a * c;
  if (disc < 0 || b > 0)
    return std::nullopt; // misses, or sphere entirely behind the origin
  return (-b - std::sqrt(disc)) / a;
}

std::optional<std::string> pick_hotspot(const SceneDefinition &scene, const Ray &ray,
                                        double max_range) {
  if (!(max_range > 0))
    throw ValidationError("pick_hotspot: max_range must be > 0");
  if (!all_finite(ray.origin()) || !all_finite(ray.direction()) || ray.direction().norm() == 0)
    throw ValidationError("pick_hotspot: invalid ray");
  const Ray unit(ray.origin(), ray.direction().normalized());
  const Hotspot *best = nullptr;
  double best_t = std::numeric_limits<double>::infinity();
  for (const auto &h : scene.hotspots) {
    const auto t = ray_sphere_entry(unit, h.position, h.trigger_radius);
    if (!t || *t > max_range)
      continue;
    if (!best || *t < best_t || (*t == best_t && h.id < best->id)) {
      best = &h;
      best_t = *t;
    }
  }
  return best ? std::optional<std::string>(best->id) : std::nullopt;
}

CategoryProgress category_progress(const SessionState &state, const SceneDefinition &scene,
                                   HotspotCategory category) {
  CategoryProgress p{category, 0, 0};
  for (const auto &h : scene.hotspots) {
    if (h.category != category)
      continue;
    ++p.total;
    if (state.viewed.count(h.id))
      ++p.viewed;
  }
  return p;
}

MarkViewedResult mark_viewed(const SessionState &state, const SceneDefinition &scene,
                             std::string_view hotspot_id) {
  const Hotspot *h = scene.find_hotspot(hotspot_id);
  if (!h)
    throw ValidationError(fmt::format("mark_viewed: unknown hotspot '{}'", hotspot_id));
  MarkViewedResult out{state, {}};
  out.state.viewed.insert(h->id);
  out.progress = category_progress(out.state, scene, h->category);
  return out;
}

const ExitPoint &nearest_exit(const SceneDefinition &scene, const Vec3 &position) {
  if (scene.exits.empty())
    throw ValidationError("escape: scene defines no exits");
  const ExitPoint *best = nullptr;
  double best_d = 0;
  for (const auto &e : scene.exits) {
    const double d = (e.position - position).norm();
    if (!best || d < best_d || (d == best_d && e.id < best->id)) {
      best = &e;
      best_d = d;
    }
  }
  return *best;
}

GuidanceState compute_guidance(const CameraPose &pose, const ExitPoint &exit) {
  const Vec3 delta = exit.position - pose.position;
  GuidanceState g;
  g.exit_id = exit.id;
  g.distance_m = delta.norm();
  g.bearing_deg = wrap_degrees_360(rad2deg(std::atan2(delta.x(), delta.y())));
  g.relative_bearing_deg = wrap_degrees_180(g.bearing_deg - pose.yaw_deg);
  g.arrived = g.distance_m <= kArrivalThresholdM;
  return g;
}

SessionState start_escape(const SessionState &state, const SceneDefinition &scene) {
  const ExitPoint &target = nearest_exit(scene, state.pose.position);
  SessionState next = state;
  next.mode = SessionMode::Escape;
  next.tour_paused = false;
  next.guidance = compute_guidance(state.pose, target);
  return next;
}

GuidanceUpdate update_guidance(const SessionState &state, const SceneDefinition &scene) {
  if (state.mode != SessionMode::Escape || !state.guidance)
    throw ValidationError("update_guidance: session is not in escape mode");
  const ExitPoint *target = scene.find_exit(state.guidance->exit_id);
  if (!target)
    throw ValidationError(
        fmt::format("update_guidance: exit '{}' not in scene", state.guidance->exit_id));
  GuidanceUpdate out{state, compute_guidance(state.pose, *target), false};
  if (out.guidance.arrived) {
    out.state.mode = SessionMode::Free;
    out.state.guidance.reset();
    out.state.last_arrival = target->id;
    out.completed = true;
  } else {
    out.state.guidance = out.guidance;
  }
  return out;
}

namespace {

void hash_string(Sha256 &h, const std::string &s) {
  h.update_value(static_cast<std::uint64_t>(s.size()));
  h.update(s);
}

} // namespace

std::string state_hash(const SessionState &s) {
  Sha256 h;
  h.update("labtwin-session-state-v1");
  for (int i = 0; i < 3; ++i)
    h.update_value(s.pose.position[i]);
  h.update_value(s.pose.yaw_deg);
  h.update_value(s.pose.pitch_deg);
  h.update_value(static_cast<std::uint8_t>(s.mode));
  h.update_value(s.tour_progress);
  h.update_value(static_cast<std::uint8_t>(s.tour_paused));
  h.update_value(static_cast<std::uint64_t>(s.viewed.size()));
  for (const auto &id : s.viewed)
    hash_string(h, id);
  h.update_value(static_cast<std::uint8_t>(s.guidance.has_value()));
  if (s.guidance) {
    hash_string(h, s.guidance->exit_id);
    h.update_value(s.guidance->bearing_deg);
    h.update_value(s.guidance->relative_bearing_deg);
    h.update_value(s.guidance->distance_m);
    h.update_value(static_cast<std::uint8_t>(s.guidance->arrived));
  }
  h.update_value(static_cast<std::uint8_t>(s.last_arrival.has_value()));
  if (s.last_arrival)
    hash_string(h, *s.last_arrival);
  h.update_value(s.clock);
  return h.hex_digest();
}

} // namespace labtwin
