#pragma once

#include "labtwin/engine.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace labtwin {

inline constexpr int kSessionLogVersion = 1;
inline constexpr double kInteractRangeM = 20.0;

struct InputEvent {
  double t = 0;
  // "free", "tour", "escape", "pause", "resume" or "teleport:<waypoint id>".
  std::optional<std::string> mode_cmd;
  Vec2 move = Vec2::Zero();
  Vec2 look = Vec2::Zero();
  std::optional<Ray> interact;
  double dt = 0;
};

// Start from a named waypoint or from an explicit pose.
using SessionStart = std::variant<std::string, CameraPose>;

struct SessionLog {
  SessionStart start = std::string();
  KinematicsConfig kinematics;
  std::optional<std::string> final_state_hash;
  std::vector<InputEvent> events;
};

// JSON lines: a header object {"labtwin_session": 1, "start": ...,
// "kinematics": {...}, "final_state_hash": ...} followed by one event per line.
SessionLog parse_session_log(std::string_view text);
SessionLog load_session_log(const std::filesystem::path &path);
std::string session_log_to_jsonl(const SessionLog &log);
void save_session_log(const SessionLog &log, const std::filesystem::path &path);

struct ReplayStep {
  double t = 0;
  SessionState state;
  std::optional<std::string> picked;
  std::optional<GuidanceState> guidance;
  bool escape_completed = false;
};

struct ReplayResult {
  SessionState final_state;
  std::string final_hash;
  std::vector<ReplayStep> steps;
  std::vector<std::string> arrivals; // exit ids, in order
};

// Applies one event: mode command, then interaction (pick within
// kInteractRangeM, mark viewed), then the time step (tour playback in tour
// mode, first-person motion otherwise), then guidance in escape mode.
class SessionDriver {
public:
  SessionDriver(const SceneDefinition &scene, KinematicsConfig cfg, SessionState initial);

  ReplayStep apply(const InputEvent &event);
  const SessionState &state() const { return state_; }

private:
  const TourPath &tour_path();

  const SceneDefinition &scene_;
  KinematicsConfig cfg_;
  SessionState state_;
  std::optional<TourPath> path_;
};

SessionState session_start_state(const SessionLog &log, const SceneDefinition &scene);
ReplayResult replay_session(const SessionLog &log, const SceneDefinition &scene,
                            bool keep_steps = false);

// Scripted sessions used for fixtures and demos. The escape bot starts at a
// waypoint, enters escape mode, then each step turns to face the target
// exit and walks forward until arrival. The tour bot plays the whole tour.
SessionLog script_escape_session(const SceneDefinition &scene, std::string_view start_waypoint,
                                 const KinematicsConfig &cfg = {}, double dt = 0.1);
SessionLog script_tour_session(const SceneDefinition &scene, double dt = 0.1);

} // namespace labtwin
