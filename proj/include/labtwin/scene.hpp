#pragma once

#include "labtwin/geometry.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace labtwin {

enum class HotspotCategory { Info, FireExtinguisher, FirstAid, HsNotice };

inline constexpr std::array<HotspotCategory, 4> kHotspotCategories = {
    HotspotCategory::Info, HotspotCategory::FireExtinguisher, HotspotCategory::FirstAid,
    HotspotCategory::HsNotice};

std::string_view to_string(HotspotCategory c);
std::optional<HotspotCategory> parse_hotspot_category(std::string_view name);

inline constexpr double kDefaultTriggerRadius = 0.75;
inline constexpr double kMaxPitchDeg = 89.0;
inline constexpr double kMaxTourLegM = 50.0;
inline constexpr double kDefaultTourSpeed = 1.4;

struct Waypoint {
  std::string id;
  std::string name;
  Vec3 position = Vec3::Zero();
  double yaw_deg = 0;
  double pitch_deg = 0;
  int sequence = 0;
  friend bool operator==(const Waypoint &, const Waypoint &) = default;
};

struct Hotspot {
  std::string id;
  HotspotCategory category = HotspotCategory::Info;
  Vec3 position = Vec3::Zero();
  double trigger_radius = kDefaultTriggerRadius;
  std::string title;
  std::string body;
  std::optional<std::string> image_ref;
  friend bool operator==(const Hotspot &, const Hotspot &) = default;
};

struct ExitPoint {
  std::string id;
  std::string name;
  Vec3 position = Vec3::Zero();
  friend bool operator==(const ExitPoint &, const ExitPoint &) = default;
};

struct TourSpec {
  std::vector<std::string> waypoint_ids; // empty: no tour
  double speed_mps = kDefaultTourSpeed;
  friend bool operator==(const TourSpec &, const TourSpec &) = default;
};

struct SceneDefinition {
  int version = 1;
  std::vector<Waypoint> waypoints;
  TourSpec tour;
  std::vector<Hotspot> hotspots;
  std::vector<ExitPoint> exits;

  const Waypoint *find_waypoint(std::string_view id) const;
  const Hotspot *find_hotspot(std::string_view id) const;
  const ExitPoint *find_exit(std::string_view id) const;
  std::size_t count_in_category(HotspotCategory c) const;

  friend bool operator==(const SceneDefinition &, const SceneDefinition &) = default;
};

struct ValidationReport {
  std::vector<std::string> errors;
  std::vector<std::string> warnings;
  bool ok() const { return errors.empty(); }
};

// Never throws. Errors are invariant violations; warnings flag positions
// outside `dataset_bounds` (when given), overlapping trigger spheres and tour
// legs longer than kMaxTourLegM.
ValidationReport validate_scene(const SceneDefinition &scene,
                                const std::optional<Aabb> &dataset_bounds = std::nullopt);

// Parses and validates; throws FormatError for malformed JSON or schema
// violations and ValidationError for invariant violations.
SceneDefinition parse_scene(std::string_view json_text);
SceneDefinition load_scene(const std::filesystem::path &path);

// Canonical form: schema key order, two-space indent, trailing newline.
std::string scene_to_json(const SceneDefinition &scene);
void save_scene(const SceneDefinition &scene, const std::filesystem::path &path);

// The bundled laboratory scene laid out over the synthetic room: 22
// waypoints forming the tour, 51 info hotspots, fire extinguisher, first-aid
// and notice hotspots, and three exits.
SceneDefinition demo_scene();

} // namespace labtwin
