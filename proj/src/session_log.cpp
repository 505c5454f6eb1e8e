#include "labtwin/session_log.hpp"

#include "labtwin/error.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <fstream>
#include <sstream>

namespace labtwin {

namespace {

using ojson = nlohmann::ordered_json;

[[noreturn]] void fail(std::size_t line, std::string_view what) {
  throw FormatError(fmt::format("session log line {}: {}", line, what));
}

double number_at(const ojson &obj, const char *key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_number())
    fail(line, fmt::format("'{}' must be a number", key));
  const double v = it->get<double>();
  if (!std::isfinite(v))
    fail(line, fmt::format("'{}' must be finite", key));
  return v;
}

template <int N>
Eigen::Matrix<double, N, 1> vector_at(const ojson &obj, const char *key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_array() || it->size() != N)
    fail(line, fmt::format("'{}' must be an array of {} numbers", key, N));
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) {
    const ojson &e = (*it)[i];
    if (!e.is_number() || !std::isfinite(e.get<double>()))
      fail(line, fmt::format("'{}' must be an array of {} finite numbers", key, N));
    v[i] = e.get<double>();
  }
  return v;
}

template <class Derived> ojson vec_json(const Eigen::MatrixBase<Derived> &v) {
  ojson a = ojson::array();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    a.push_back(v[i]);
  return a;
}

InputEvent parse_event(const ojson &j, std::size_t line) {
  if (!j.is_object())
    fail(line, "event must be an object");
  InputEvent e;
  e.t = number_at(j, "t", line);
  e.dt = number_at(j, "dt", line);
  if (!(e.dt > 0))
    fail(line, "'dt' must be > 0");
  if (auto it = j.find("mode_cmd"); it != j.end() && !it->is_null()) {
    if (!it->is_string())
      fail(line, "'mode_cmd' must be a string");
    e.mode_cmd = it->get<std::string>();
  }
  e.move = vector_at<2>(j, "move", line);
  e.look = vector_at<2>(j, "look", line);
  if (auto it = j.find("interact"); it != j.end() && !it->is_null()) {
    if (!it->is_object())
      fail(line, "'interact' must be an object");
    const Vec3 origin = vector_at<3>(*it, "origin", line);
    const Vec3 direction = vector_at<3>(*it, "direction", line);
    if (direction.norm() == 0)
      fail(line, "'interact.direction' must be non-zero");
    e.interact = Ray(origin, direction);
  }
  return e;
}

} // namespace

SessionLog parse_session_log(std::string_view text) {
  SessionLog log;
  std::istringstream in{std::string(text)};
  std::string line_text;
  std::size_t line = 0;
  bool have_header = false;
  while (std::getline(in, line_text)) {
    ++line;
    if (line_text.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    ojson j;
    try {
      j = ojson::parse(line_text);
    } catch (const nlohmann::json::parse_error &e) {
      fail(line, e.what());
    }
    if (!have_header) {
      have_header = true;
      if (!j.is_object() || !j.contains("labtwin_session"))
        fail(line, "missing header object with 'labtwin_session'");
      if (j["labtwin_session"] != kSessionLogVersion)
        throw ValidationError(fmt::format("session log: unsupported version {}",
                                          j["labtwin_session"].dump()));
      const auto start = j.find("start");
      if (start == j.end())
        fail(line, "header needs 'start'");
      if (start->is_string()) {
        log.start = start->get<std::string>();
      } else if (start->is_object()) {
        log.start = CameraPose{vector_at<3>(*start, "position", line),
                               number_at(*start, "yaw_deg", line),
                               number_at(*start, "pitch_deg", line)};
      } else {
        fail(line, "'start' must be a waypoint id or a pose object");
      }
      if (auto k = j.find("kinematics"); k != j.end()) {
        if (!k->is_object())
          fail(line, "'kinematics' must be an object");
        log.kinematics.eye_height = number_at(*k, "eye_height", line);
        log.kinematics.walk_speed = number_at(*k, "walk_speed", line);
        log.kinematics.rotate_sensitivity = number_at(*k, "rotate_sensitivity", line);
        log.kinematics.floor_z = number_at(*k, "floor_z", line);
        const auto g = k->find("gravity_enabled");
        if (g == k->end() || !g->is_boolean())
          fail(line, "'gravity_enabled' must be a boolean");
        log.kinematics.gravity_enabled = g->get<bool>();
        log.kinematics.validate();
      }
      if (auto h = j.find("final_state_hash"); h != j.end() && !h->is_null()) {
        if (!h->is_string())
          fail(line, "'final_state_hash' must be a string");
        log.final_state_hash = h->get<std::string>();
      }
      continue;
    }
    log.events.push_back(parse_event(j, line));
  }
  if (!have_header)
    throw FormatError("session log: empty");
  return log;
}

SessionLog load_session_log(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError(fmt::format("cannot open {}", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_session_log(buf.str());
  } catch (const FormatError &e) {
    throw FormatError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

std::string session_log_to_jsonl(const SessionLog &log) {
  ojson header;
  header["labtwin_session"] = kSessionLogVersion;
  if (const auto *id = std::get_if<std::string>(&log.start)) {
    header["start"] = *id;
  } else {
    const auto &pose = std::get<CameraPose>(log.start);
    header["start"] = {{"position", vec_json(pose.position)},
                       {"yaw_deg", pose.yaw_deg},
                       {"pitch_deg", pose.pitch_deg}};
  }
  header["kinematics"] = {{"eye_height", log.kinematics.eye_height},
                          {"walk_speed", log.kinematics.walk_speed},
                          {"rotate_sensitivity", log.kinematics.rotate_sensitivity},
                          {"gravity_enabled", log.kinematics.gravity_enabled},
                          {"floor_z", log.kinematics.floor_z}};
  header["final_state_hash"] =
      log.final_state_hash ? ojson(*log.final_state_hash) : ojson(nullptr);
  std::string out = header.dump() + "\n";
  for (const auto &e : log.events) {
    ojson j;
    j["t"] = e.t;
    if (e.mode_cmd)
      j["mode_cmd"] = *e.mode_cmd;
    j["move"] = vec_json(e.move);
    j["look"] = vec_json(e.look);
    if (e.interact)
      j["interact"] = {{"origin", vec_json(e.interact->origin())},
                       {"direction", vec_json(e.interact->direction())}};
    j["dt"] = e.dt;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void save_session_log(const SessionLog &log, const std::filesystem::path &path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw IoError(fmt::format("cannot write {}", path.string()));
  out << session_log_to_jsonl(log);
  if (!out)
    throw IoError(fmt::format("write failed: {}", path.string()));
}

SessionDriver::SessionDriver(const SceneDefinition &scene, KinematicsConfig cfg,
                             SessionState initial)
    : scene_(scene), cfg_(cfg), state_(std::move(initial)) {
  cfg_.validate();
}

const TourPath &SessionDriver::tour_path() {
  if (!path_)
    path_ = TourPath::from_scene(scene_);
  return *path_;
}

ReplayStep SessionDriver::apply(const InputEvent &event) {
  ReplayStep step;
  step.t = event.t;
  if (event.mode_cmd) {
    const std::string &cmd = *event.mode_cmd;
    if (cmd == "free") {
      state_.mode = SessionMode::Free;
      state_.guidance.reset();
      state_.tour_paused = false;
    } else if (cmd == "tour") {
      state_ = start_tour(state_, tour_path());
    } else if (cmd == "escape") {
      state_ = start_escape(state_, scene_);
    } else if (cmd == "pause" || cmd == "resume") {
      if (state_.mode != SessionMode::Tour)
        throw ValidationError(fmt::format("t={}: '{}' outside tour mode", event.t, cmd));
      state_.tour_paused = cmd == "pause";
    } else if (cmd.starts_with("teleport:")) {
      state_ = teleport(state_, scene_, std::string_view(cmd).substr(9));
    } else {
      throw ValidationError(fmt::format("t={}: unknown mode_cmd '{}'", event.t, cmd));
    }
  }
  if (event.interact) {
    step.picked = pick_hotspot(scene_, *event.interact, kInteractRangeM);
    if (step.picked)
      state_ = mark_viewed(state_, scene_, *step.picked).state;
  }
  if (state_.mode == SessionMode::Tour)
    state_ = step_tour(state_, event.dt, tour_path(), scene_.tour.speed_mps);
  else
    state_ = step_free(state_, MotionInput{event.move, event.look}, event.dt, cfg_);
  if (state_.mode == SessionMode::Escape) {
    GuidanceUpdate g = update_guidance(state_, scene_);
    state_ = std::move(g.state);
    step.guidance = g.guidance;
    step.escape_completed = g.completed;
  }
  step.state = state_;
  return step;
}

SessionState session_start_state(const SessionLog &log, const SceneDefinition &scene) {
  SessionState s;
  if (const auto *id = std::get_if<std::string>(&log.start)) {
    s = teleport(s, scene, *id);
  } else {
    s.pose = std::get<CameraPose>(log.start).normalized();
  }
  return s;
}

ReplayResult replay_session(const SessionLog &log, const SceneDefinition &scene,
                            bool keep_steps) {
  SessionDriver driver(scene, log.kinematics, session_start_state(log, scene));
  ReplayResult result;
  for (const auto &e : log.events) {
    ReplayStep step = driver.apply(e);
    if (step.escape_completed)
      result.arrivals.push_back(step.guidance->exit_id);
    if (keep_steps)
      result.steps.push_back(std::move(step));
  }
  result.final_state = driver.state();
  result.final_hash = state_hash(result.final_state);
  return result;
}

namespace {

constexpr std::size_t kMaxScriptEvents = 1'000'000;

} // namespace

SessionLog script_escape_session(const SceneDefinition &scene, std::string_view start_waypoint,
                                 const KinematicsConfig &cfg, double dt) {
  SessionLog log;
  log.start = std::string(start_waypoint);
  log.kinematics = cfg;
  SessionDriver driver(scene, cfg, session_start_state(log, scene));
  InputEvent e;
  e.mode_cmd = "escape";
  e.dt = dt;
  ReplayStep step = driver.apply(e);
  log.events.push_back(e);
  double t = dt;
  while (!step.escape_completed) {
    if (log.events.size() >= kMaxScriptEvents)
      throw ValidationError("escape script did not reach an exit");
    InputEvent walk;
    walk.t = t;
    walk.dt = dt;
    walk.look = Vec2(step.guidance->relative_bearing_deg / cfg.rotate_sensitivity, 0);
    walk.move = Vec2(0, 1);
    step = driver.apply(walk);
    log.events.push_back(walk);
    t += dt;
  }
  log.final_state_hash = state_hash(driver.state());
  return log;
}

SessionLog script_tour_session(const SceneDefinition &scene, double dt) {
  SessionLog log;
  const TourPath path = TourPath::from_scene(scene);
  log.start = path.controls().front().id;
  SessionDriver driver(scene, log.kinematics, session_start_state(log, scene));
  InputEvent e;
  e.mode_cmd = "tour";
  e.dt = dt;
  double t = 0;
  do {
    if (log.events.size() >= kMaxScriptEvents)
      throw ValidationError("tour script did not finish");
    e.t = t;
    driver.apply(e);
    log.events.push_back(e);
    e.mode_cmd.reset();
    t += dt;
  } while (driver.state().mode == SessionMode::Tour);
  log.final_state_hash = state_hash(driver.state());
  return log;
}

} // namespace labtwin
