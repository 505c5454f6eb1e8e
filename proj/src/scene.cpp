#include "labtwin/scene.hpp"

#include "labtwin/error.hpp"

#include <absl/container/flat_hash_map.h>
#include <absl/container/flat_hash_set.h>
#include <fmt/format.h>
#include <json.hpp>

#include <fstream>
#include <sstream>

namespace labtwin {

using ojson = nlohmann::ordered_json;

std::string_view to_string(HotspotCategory c) {
  switch (c) {
  case HotspotCategory::Info: return "info";
  case HotspotCategory::FireExtinguisher: return "fire_extinguisher";
  case HotspotCategory::FirstAid: return "first_aid";
  case HotspotCategory::HsNotice: return "hs_notice";
  }
  return "?";
}

std::optional<HotspotCategory> parse_hotspot_category(std::string_view name) {
  for (const auto c : kHotspotCategories)
    if (to_string(c) == name)
      return c;
  return std::nullopt;
}

namespace {

template <typename T> const T *find_by_id(const std::vector<T> &items, std::string_view id) {
  for (const auto &item : items)
    if (item.id == id)
      return &item;
  return nullptr;
}

std::string fmt_vec(const Vec3 &v) { return fmt::format("({}, {}, {})", v.x(), v.y(), v.z()); }

} // namespace

const Waypoint *SceneDefinition::find_waypoint(std::string_view id) const {
  return find_by_id(waypoints, id);
}
const Hotspot *SceneDefinition::find_hotspot(std::string_view id) const {
  return find_by_id(hotspots, id);
}
const ExitPoint *SceneDefinition::find_exit(std::string_view id) const {
  return find_by_id(exits, id);
}

std::size_t SceneDefinition::count_in_category(HotspotCategory c) const {
  return static_cast<std::size_t>(
      std::count_if(hotspots.begin(), hotspots.end(), [c](const Hotspot &h) { return h.category == c; }));
}

ValidationReport validate_scene(const SceneDefinition &scene,
                                const std::optional<Aabb> &dataset_bounds) {
  ValidationReport report;
  auto error = [&](std::string msg) { report.errors.push_back(std::move(msg)); };
  auto warn = [&](std::string msg) { report.warnings.push_back(std::move(msg)); };
  auto check_position = [&](std::string_view kind, const std::string &id, const Vec3 &p) {
    if (!all_finite(p)) {
      error(fmt::format("{} '{}': non-finite coordinate", kind, id));
      return;
    }
    if (dataset_bounds && !dataset_bounds->isEmpty() && !dataset_bounds->contains(p))
      warn(fmt::format("{} '{}': position {} outside dataset bounds", kind, id, fmt_vec(p)));
  };
  auto check_ids = [&](std::string_view kind, const auto &items) {
    absl::flat_hash_set<std::string> seen;
    for (const auto &item : items) {
      if (item.id.empty())
        error(fmt::format("{} with empty id", kind));
      else if (!seen.insert(item.id).second)
        error(fmt::format("duplicate {} id '{}'", kind, item.id));
    }
  };

  if (scene.version != 1)
    error(fmt::format("unsupported scene version {}", scene.version));

  check_ids("waypoint", scene.waypoints);
  for (const auto &w : scene.waypoints) {
    check_position("waypoint", w.id, w.position);
    if (!std::isfinite(w.yaw_deg) || !std::isfinite(w.pitch_deg))
      error(fmt::format("waypoint '{}': non-finite orientation", w.id));
    else if (w.pitch_deg < -kMaxPitchDeg || w.pitch_deg > kMaxPitchDeg)
      error(fmt::format("waypoint '{}': pitch_deg {} outside [-89, 89]", w.id, w.pitch_deg));
    if (w.sequence < 0)
      error(fmt::format("waypoint '{}': negative sequence {}", w.id, w.sequence));
  }

  check_ids("hotspot", scene.hotspots);
  for (const auto &h : scene.hotspots) {
    check_position("hotspot", h.id, h.position);
    if (!(h.trigger_radius > 0) || !std::isfinite(h.trigger_radius))
      error(fmt::format("hotspot '{}': trigger_radius must be > 0", h.id));
  }
  for (std::size_t i = 0; i < scene.hotspots.size(); ++i)
    for (std::size_t j = i + 1; j < scene.hotspots.size(); ++j) {
      const auto &a = scene.hotspots[i];
      const auto &b = scene.hotspots[j];
      if ((a.position - b.position).norm() < a.trigger_radius + b.trigger_radius)
        warn(fmt::format("hotspots '{}' and '{}': trigger spheres overlap", a.id, b.id));
    }

  check_ids("exit", scene.exits);
  for (const auto &e : scene.exits)
    check_position("exit", e.id, e.position);
  if (scene.exits.empty())
    warn("no exits defined: escape mode unavailable");

  const TourSpec &tour = scene.tour;
  if (!tour.waypoint_ids.empty()) {
    if (!(tour.speed_mps > 0) || !std::isfinite(tour.speed_mps))
      error(fmt::format("tour: speed_mps must be > 0, got {}", tour.speed_mps));
    absl::flat_hash_set<std::string> seen;
    const Waypoint *prev = nullptr;
    for (const auto &id : tour.waypoint_ids) {
      const Waypoint *w = scene.find_waypoint(id);
      if (!w) {
        error(fmt::format("tour references unknown waypoint '{}'", id));
        prev = nullptr;
        continue;
      }
      if (!seen.insert(id).second)
        error(fmt::format("tour lists waypoint '{}' twice", id));
      if (prev) {
        if (w->sequence <= prev->sequence)
          error(fmt::format("tour order: waypoint '{}' (sequence {}) follows '{}' (sequence {})",
                            id, w->sequence, prev->id, prev->sequence));
        const double leg = (w->position - prev->position).norm();
        if (leg > kMaxTourLegM)
          warn(fmt::format("tour leg '{}' -> '{}' is {:.1f} m (> {} m)", prev->id, id, leg,
                           kMaxTourLegM));
      }
      prev = w;
    }
    if (tour.waypoint_ids.size() < 2)
      warn("tour has fewer than 2 waypoints and cannot run");
  }
  return report;
}

// ---------------------------------------------------------------- JSON

namespace {

struct Reader {
  std::string context;

  const ojson &key(const ojson &obj, std::string_view k) const {
    if (!obj.is_object())
      throw FormatError(fmt::format("scene: {}: expected an object", context));
    const auto it = obj.find(std::string(k));
    if (it == obj.end())
      throw FormatError(fmt::format("scene: {}: missing key '{}'", context, k));
    return *it;
  }
  double number(const ojson &obj, std::string_view k) const {
    const ojson &v = key(obj, k);
    if (!v.is_number())
      throw FormatError(fmt::format("scene: {}: '{}' must be a number", context, k));
    const double d = v.get<double>();
    if (!std::isfinite(d))
      throw ValidationError(fmt::format("scene: {}: '{}' is not finite", context, k));
    return d;
  }
  int integer(const ojson &obj, std::string_view k) const {
    const ojson &v = key(obj, k);
    if (!v.is_number_integer())
      throw FormatError(fmt::format("scene: {}: '{}' must be an integer", context, k));
    return v.get<int>();
  }
  std::string string(const ojson &obj, std::string_view k) const {
    const ojson &v = key(obj, k);
    if (!v.is_string())
      throw FormatError(fmt::format("scene: {}: '{}' must be a string", context, k));
    return v.get<std::string>();
  }
  Vec3 position(const ojson &obj) const {
    const ojson &v = key(obj, "position");
    if (!v.is_array() || v.size() != 3)
      throw FormatError(fmt::format("scene: {}: 'position' must be an array of 3 numbers", context));
    Vec3 p;
    for (std::size_t i = 0; i < 3; ++i) {
      if (!v[i].is_number())
        throw FormatError(fmt::format("scene: {}: 'position' must be an array of 3 numbers", context));
      p[static_cast<Eigen::Index>(i)] = v[i].get<double>();
    }
    if (!all_finite(p))
      throw ValidationError(fmt::format("scene: {}: non-finite coordinate", context));
    return p;
  }
  const ojson &array(const ojson &obj, std::string_view k) const {
    const ojson &v = key(obj, k);
    if (!v.is_array())
      throw FormatError(fmt::format("scene: {}: '{}' must be an array", context, k));
    return v;
  }
};

std::string item_context(std::string_view list, std::size_t i, const ojson &item) {
  if (item.is_object() && item.contains("id") && item["id"].is_string())
    return fmt::format("{}[{}] (id '{}')", list, i, item["id"].get<std::string>());
  return fmt::format("{}[{}]", list, i);
}

ojson vec_json(const Vec3 &v) { return ojson::array({v.x(), v.y(), v.z()}); }

} // namespace

SceneDefinition parse_scene(std::string_view json_text) {
  ojson root;
  try {
    root = ojson::parse(json_text);
  } catch (const nlohmann::json::parse_error &e) {
    throw FormatError(fmt::format("scene: invalid JSON: {}", e.what()));
  }
  SceneDefinition scene;
  Reader top{"root"};
  scene.version = top.integer(root, "version");

  const ojson &waypoints = top.array(root, "waypoints");
  for (std::size_t i = 0; i < waypoints.size(); ++i) {
    const ojson &w = waypoints[i];
    Reader r{item_context("waypoints", i, w)};
    scene.waypoints.push_back({r.string(w, "id"), r.string(w, "name"), r.position(w),
                               r.number(w, "yaw_deg"), r.number(w, "pitch_deg"),
                               r.integer(w, "sequence")});
  }

  if (root.contains("tour")) {
    const ojson &t = root["tour"];
    Reader r{"tour"};
    for (const auto &id : r.array(t, "waypoint_ids")) {
      if (!id.is_string())
        throw FormatError("scene: tour: waypoint_ids must be strings");
      scene.tour.waypoint_ids.push_back(id.get<std::string>());
    }
    scene.tour.speed_mps = r.number(t, "speed_mps");
  }

  const ojson &hotspots = top.array(root, "hotspots");
  for (std::size_t i = 0; i < hotspots.size(); ++i) {
    const ojson &h = hotspots[i];
    Reader r{item_context("hotspots", i, h)};
    Hotspot hs;
    hs.id = r.string(h, "id");
    const std::string category = r.string(h, "category");
    const auto parsed = parse_hotspot_category(category);
    if (!parsed)
      throw ValidationError(
          fmt::format("scene: hotspot '{}': unknown category '{}'", hs.id, category));
    hs.category = *parsed;
    hs.position = r.position(h);
    hs.trigger_radius = r.number(h, "trigger_radius");
    hs.title = r.string(h, "title");
    hs.body = r.string(h, "body");
    if (h.contains("image_ref") && !h["image_ref"].is_null())
      hs.image_ref = r.string(h, "image_ref");
    scene.hotspots.push_back(std::move(hs));
  }

  const ojson &exits = top.array(root, "exits");
  for (std::size_t i = 0; i < exits.size(); ++i) {
    const ojson &e = exits[i];
    Reader r{item_context("exits", i, e)};
    scene.exits.push_back({r.string(e, "id"), r.string(e, "name"), r.position(e)});
  }

  const ValidationReport report = validate_scene(scene);
  if (!report.ok()) {
    std::string msg = "scene: " + report.errors.front();
    for (std::size_t i = 1; i < report.errors.size(); ++i)
      msg += "; " + report.errors[i];
    throw ValidationError(msg);
  }
  return scene;
}

SceneDefinition load_scene(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError(fmt::format("cannot open scene {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_scene(ss.str());
  } catch (const FormatError &e) {
    throw FormatError(fmt::format("{}: {}", path.string(), e.what()));
  } catch (const ValidationError &e) {
    throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

std::string scene_to_json(const SceneDefinition &scene) {
  ojson root;
  root["version"] = scene.version;
  root["waypoints"] = ojson::array();
  for (const auto &w : scene.waypoints) {
    ojson j;
    j["id"] = w.id;
    j["name"] = w.name;
    j["position"] = vec_json(w.position);
    j["yaw_deg"] = w.yaw_deg;
    j["pitch_deg"] = w.pitch_deg;
    j["sequence"] = w.sequence;
    root["waypoints"].push_back(std::move(j));
  }
  root["tour"] = {{"waypoint_ids", scene.tour.waypoint_ids}, {"speed_mps", scene.tour.speed_mps}};
  root["hotspots"] = ojson::array();
  for (const auto &h : scene.hotspots) {
    ojson j;
    j["id"] = h.id;
    j["category"] = to_string(h.category);
    j["position"] = vec_json(h.position);
    j["trigger_radius"] = h.trigger_radius;
    j["title"] = h.title;
    j["body"] = h.body;
    if (h.image_ref)
      j["image_ref"] = *h.image_ref;
    root["hotspots"].push_back(std::move(j));
  }
  root["exits"] = ojson::array();
  for (const auto &e : scene.exits)
    root["exits"].push_back({{"id", e.id}, {"name", e.name}, {"position", vec_json(e.position)}});
  return root.dump(2) + "\n";
}

void save_scene(const SceneDefinition &scene, const std::filesystem::path &path) {
  const std::string text = scene_to_json(scene);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !out.write(text.data(), static_cast<std::streamsize>(text.size())) || !out.flush())
    throw IoError(fmt::format("cannot write scene {}", path.string()));
}

// ---------------------------------------------------------------- demo

SceneDefinition demo_scene() {
  constexpr double kEye = 1.70;
  SceneDefinition s;

  // Serpentine walk: entrance, up the west aisle, across, down the east
  // aisle, then over to the east wall.
  std::vector<Vec2> stops{{20, 2}};
  for (int k = 0; k < 9; ++k)
    stops.emplace_back(13.5, 2 + 12.0 * k);
  stops.emplace_back(20, 98);
  for (int k = 8; k >= 0; --k)
    stops.emplace_back(26.5, 2 + 12.0 * k);
  stops.emplace_back(33, 2);
  stops.emplace_back(38.5, 8);
  for (std::size_t i = 0; i < stops.size(); ++i) {
    const Vec2 here = stops[i];
    const Vec2 ahead = i + 1 < stops.size() ? stops[i + 1] : Vec2(38.5, 20);
    const Vec2 d = ahead - here;
    Waypoint w;
    w.id = fmt::format("wp{}", i + 1);
    w.name = fmt::format("Station {}", i + 1);
    w.position = Vec3(here.x(), here.y(), kEye);
    w.yaw_deg = wrap_degrees_360(rad2deg(std::atan2(d.x(), d.y())));
    w.pitch_deg = -5.0;
    w.sequence = static_cast<int>(i);
    s.waypoints.push_back(w);
    s.tour.waypoint_ids.push_back(w.id);
  }
  s.tour.speed_mps = kDefaultTourSpeed;

  // Two info points on the aisle-facing side of each of the 24 equipment
  // blocks, plus three wall-mounted panels.
  const double column_edge[3] = {11.3, 24.3, 37.3};
  int info = 0;
  for (int row = 0; row < 8; ++row)
    for (const double x : column_edge)
      for (const double dy : {2.5, 5.5}) {
        ++info;
        Hotspot h;
        h.id = fmt::format("info-{:02}", info);
        h.category = HotspotCategory::Info;
        h.position = Vec3(x, 4 + 12.0 * row + dy, 1.2);
        h.title = fmt::format("Equipment {:02}", info);
        h.body = fmt::format("Operating notes and safety checks for equipment {:02}.", info);
        if (info == 1)
          h.image_ref = "eq/press500t.jpg";
        s.hotspots.push_back(std::move(h));
      }
  for (const double y : {30.0, 60.0, 90.0}) {
    ++info;
    s.hotspots.push_back({fmt::format("info-{:02}", info), HotspotCategory::Info,
                          Vec3(0.3, y, 1.5), kDefaultTriggerRadius,
                          fmt::format("Equipment {:02}", info),
                          fmt::format("Wall-mounted instrument panel {:02}.", info), std::nullopt});
  }

  const Vec3 extinguishers[] = {{0.3, 10, 0.8},  {0.3, 22, 0.8},  {0.3, 42, 0.8},
                                {0.3, 54, 0.8},  {0.3, 70, 0.8},  {0.3, 82, 0.8},
                                {39.7, 50, 0.8}, {39.7, 95, 0.8}};
  int n = 0;
  for (const auto &p : extinguishers) {
    ++n;
    s.hotspots.push_back({fmt::format("fire-{}", n), HotspotCategory::FireExtinguisher, p,
                          kDefaultTriggerRadius, fmt::format("Fire extinguisher {}", n),
                          "CO2 extinguisher. Pull pin, aim at base of fire, squeeze, sweep.",
                          std::nullopt});
  }
  const Vec3 first_aid[] = {{20, 0.5, 1.3}, {20, 99.5, 1.3}, {39.7, 30, 1.3}};
  n = 0;
  for (const auto &p : first_aid) {
    ++n;
    s.hotspots.push_back({fmt::format("aid-{}", n), HotspotCategory::FirstAid, p,
                          kDefaultTriggerRadius, fmt::format("First-aid station {}", n),
                          "First-aid kit and eye-wash station.", std::nullopt});
  }
  const Vec3 notices[] = {{13.5, 8, 2.5},  {13.5, 32, 2.5}, {13.5, 56, 2.5},
                          {13.5, 80, 2.5}, {26.5, 20, 2.5}, {26.5, 68, 2.5}};
  n = 0;
  for (const auto &p : notices) {
    ++n;
    s.hotspots.push_back({fmt::format("notice-{}", n), HotspotCategory::HsNotice, p,
                          kDefaultTriggerRadius, fmt::format("Safety notice {}", n),
                          "Wear safety glasses and protective footwear beyond this point.",
                          std::nullopt});
  }

  s.exits = {{"e1", "Main entrance", Vec3(20, 0.5, kEye)},
             {"e2", "North exit", Vec3(20, 99.5, kEye)},
             {"e3", "West fire door", Vec3(0.5, 50, kEye)}};
  return s;
}

} // namespace labtwin
