// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 when any
// criterion fails. Every tolerance and size used below is pinned here.
#include "labtwin/audit.hpp"
#include "labtwin/digest.hpp"
#include "labtwin/engine.hpp"
#include "labtwin/lod_format.hpp"
#include "labtwin/measure.hpp"
#include "labtwin/octree.hpp"
#include "labtwin/point_stream.hpp"
#include "labtwin/selection.hpp"
#include "labtwin/server.hpp"
#include "labtwin/session_log.hpp"
#include "labtwin/subsample.hpp"
#include "labtwin/synth.hpp"
#include "labtwin/tour_path.hpp"

#include "oracles/oracles.hpp"
#include "process.hpp"
#include "support.hpp"

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <atomic>
#include <chrono>
#include <cstring>
#include <functional>
#include <set>
#include <thread>

#include <malloc.h>
#include <sys/resource.h>

#ifndef LABTWIN_CLI_PATH
#error "LABTWIN_CLI_PATH must name the labtwin executable"
#endif
#ifndef LABTWIN_FIXTURE_DIR
#error "LABTWIN_FIXTURE_DIR must name the fixture directory"
#endif

using namespace labtwin;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Subsample
constexpr int kSubsampleClouds = 50;
constexpr double kSubsampleMinPoints = 1e3, kSubsampleMaxPoints = 1e5;
constexpr std::size_t kBruteForceLimit = 20000;
constexpr std::uint64_t kSubsampleTimedPoints = 1000000;
constexpr double kSubsampleTimeLimitS = 10.0;
// Octree
constexpr std::uint64_t kLargeBuildPoints = 10000000;
constexpr double kLargeBuildTimeLimitS = 120.0;
constexpr std::uint64_t kLargeBuildBudget = std::uint64_t{1} << 30;
constexpr std::uint64_t kPoissonAuditMaxPoints = 10000;
// Selection
constexpr int kSelectionPoses = 500;
constexpr std::uint64_t kDemoPoints = 1000000;
constexpr std::size_t kLatencyMinNodes = 10000;
constexpr double kLatencyLimitMs = 10.0;
constexpr std::uint64_t kLatencyBudget = 500000;
// Evacuation
constexpr int kEscapePoses = 1000;
constexpr int kApproachRuns = 100;
constexpr double kApproachStepM = 0.5;
constexpr int kGuidanceQueries = 100;
// Tour
constexpr double kControlTolM = 1e-6;
constexpr double kSpeedRelTol = 0.01;
constexpr double kCornerClearanceM = 1.0;
constexpr double kTourDt = 0.1;
constexpr std::uint64_t kTourBudget = 500000;
// Measurement
constexpr double kDistanceTol = 1e-12;
constexpr double kAreaTol = 1e-9;
constexpr double kAreaRelTol = 1e-9;
constexpr int kRigidMotions = 100;
// Serving
constexpr int kConcurrentClients = 16;
constexpr int kFetchesPerClient = 200;

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Collects failed checks; the first few are reported.
struct Checks {
  std::vector<std::string> failures;
  void expect(bool ok, const std::string &what) {
    if (!ok)
      failures.push_back(what);
  }
  Outcome outcome(const std::string &summary) const {
    if (failures.empty())
      return {true, summary};
    std::string d = fmt::format("{} failed check(s): ", failures.size());
    for (std::size_t i = 0; i < std::min<std::size_t>(failures.size(), 3); ++i)
      d += (i ? "; " : "") + failures[i];
    return {false, d + " | " + summary};
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

testing::RunResult cli(const std::vector<std::string> &args) {
  return testing::run(LABTWIN_CLI_PATH, args);
}

// Shared artifacts produced by earlier criteria.
struct Workspace {
  testing::TempDir dir{"labtwin-accept"};
  fs::path demo_dir, demo_dataset, scene_path;
  std::optional<LodDataset> large;
  std::string large_error;
};

Workspace &ws() {
  static Workspace w;
  return w;
}

void prepare_demo() {
  Workspace &w = ws();
  w.demo_dir = w.dir / "demo";
  const auto d = cli({"demo", "--out", w.demo_dir.string(), "--points",
                      std::to_string(kDemoPoints)});
  if (d.code != 0)
    throw std::runtime_error("demo generation failed: " + d.output);
  w.demo_dataset = w.demo_dir / "dataset";
  const auto b = cli({"build", "--in", (w.demo_dir / "room.ltpc").string(), "--out",
                      w.demo_dataset.string()});
  if (b.code != 0)
    throw std::runtime_error("demo build failed: " + b.output);
  w.scene_path = w.demo_dir / "scene.json";
}

// ------------------------------------------------------------------ subsample

Outcome subsample_contract() {
  Checks c;
  std::mt19937_64 rng(101);
  std::size_t brute = 0, swept = 0;
  double worst_ratio = std::numeric_limits<double>::infinity();
  for (int k = 0; k < kSubsampleClouds; ++k) {
    const auto n = static_cast<std::size_t>(std::exp(
        testing::uniform(rng, std::log(kSubsampleMinPoints), std::log(kSubsampleMaxPoints))));
    const double spacing = std::exp(testing::uniform(rng, std::log(0.002), std::log(0.05)));
    const double edge = spacing * std::cbrt(double(n)) * testing::uniform(rng, 0.3, 2.0);
    std::vector<ColorPoint> cloud(n);
    std::vector<Vec3> positions(n);
    for (std::size_t i = 0; i < n; ++i) {
      cloud[i].position = testing::uniform_in(rng, Aabb(Vec3::Zero(), Vec3::Constant(edge)));
      if (i > 0 && rng() % 10 == 0)
        cloud[i].position = cloud[rng() % i].position; // duplicates
      positions[i] = cloud[i].position;
    }
    SubsampleConfig cfg;
    cfg.spacing = spacing;
    const auto out = subsample(cloud, cfg);
    std::vector<Vec3> kept;
    for (const auto &p : out)
      kept.push_back(p.position);
    double d;
    if (kept.size() <= kBruteForceLimit) {
      d = oracle::min_distance_brute(kept);
      ++brute;
    } else {
      d = oracle::min_distance_sweep(kept);
      ++swept;
    }
    c.expect(d >= spacing, fmt::format("cloud {}: min distance {} < spacing {}", k, d, spacing));
    worst_ratio = std::min(worst_ratio, d / spacing);

    const auto keep = oracle::subsample_keep(positions, spacing);
    bool same = keep.size() == out.size();
    for (std::size_t i = 0; same && i < keep.size(); ++i)
      same = cloud[keep[i]] == out[i];
    c.expect(same, fmt::format("cloud {}: differs from first-come oracle", k));
    c.expect(subsample(out, cfg) == out, fmt::format("cloud {}: not idempotent", k));
  }
  c.expect(SubsampleConfig{}.spacing == 0.005, "default spacing is not 0.005 m");

  const auto big = synth_cloud(SynthSpec{SynthShape::RoomWithAisles, kSubsampleTimedPoints, 5});
  const auto t0 = Clock::now();
  SubsampleStats stats;
  subsample(big.points, SubsampleConfig{}, &stats);
  const double secs = seconds_since(t0);
  c.expect(secs < kSubsampleTimeLimitS, fmt::format("1e6 points took {:.2f} s", secs));
  return c.outcome(fmt::format(
      "{} clouds ({} brute-force, {} sweep), min distance / spacing >= {:.3f}, default 0.005 m, "
      "1e6 points in {:.2f} s (limit {} s, kept {})",
      kSubsampleClouds, brute, swept, worst_ratio, secs, kSubsampleTimeLimitS, stats.kept));
}

// -------------------------------------------------------------------- octree

bool record_less(const PackedPoint &a, const PackedPoint &b) {
  return std::memcmp(&a, &b, sizeof(PackedPoint)) < 0;
}

struct AuditTotals {
  std::size_t builds = 0, nodes = 0, poisson_nodes = 0, points = 0;
};

void audit_build(Checks &c, AuditTotals &totals, const std::string &label,
                 const std::vector<ColorPoint> &source, const BuildConfig &cfg) {
  Workspace &w = ws();
  const fs::path a = w.dir / ("audit-" + label + "-a");
  const fs::path b = w.dir / ("audit-" + label + "-b");
  SpanStream s1(source), s2(source);
  build_octree(s1, std::nullopt, cfg, a);
  BuildConfig cfg2 = cfg;
  cfg2.threads = cfg.threads == 1 ? 2 : 1;
  build_octree(s2, std::nullopt, cfg2, b);
  const LodDataset ds = load_hierarchy(a);
  const LodDataset ds2 = load_hierarchy(b);
  ++totals.builds;

  c.expect(ds.manifest.hierarchy_digest == ds2.manifest.hierarchy_digest &&
               testing::read_file(ds.octree_path()) == testing::read_file(ds2.octree_path()),
           label + ": rebuild not digest-identical");

  // Multiset equality against the f32-quantized source.
  const Vec3 origin = ds.manifest.bounds.min();
  std::vector<PackedPoint> expected, got;
  for (const auto &p : source)
    expected.push_back(oracle::quantize(p, origin));
  const std::string bin = testing::read_file(ds.octree_path());
  got.resize(bin.size() / sizeof(PackedPoint));
  std::memcpy(got.data(), bin.data(), got.size() * sizeof(PackedPoint));
  std::sort(expected.begin(), expected.end(), record_less);
  std::sort(got.begin(), got.end(), record_less);
  c.expect(expected.size() == got.size() &&
               std::equal(expected.begin(), expected.end(), got.begin(), oracle::same_record),
           label + ": node payload union differs from input multiset");
  totals.points += source.size();

  const std::set<std::string> overflow(ds.manifest.overflow_nodes.begin(),
                                       ds.manifest.overflow_nodes.end());
  for (const auto &n : ds.nodes) {
    ++totals.nodes;
    c.expect(n.spacing == ds.manifest.root_spacing / std::ldexp(1.0, n.level),
             fmt::format("{} node {}: spacing not root / 2^level", label, n.name));
    if (n.level > 0) {
      const OctreeNode *p = ds.find(parent_name(n.name));
      c.expect(p && p->spacing == 2 * n.spacing,
               fmt::format("{} node {}: spacing does not halve", label, n.name));
    }
    if (n.num_points >= kPoissonAuditMaxPoints || overflow.count(n.name))
      continue;
    std::vector<Vec3> rel;
    const std::string_view blob(bin.data() + n.byte_offset, n.byte_size);
    for (std::size_t i = 0; i < n.num_points; ++i) {
      PackedPoint q;
      std::memcpy(&q, blob.data() + i * sizeof(PackedPoint), sizeof q);
      rel.emplace_back(q.x, q.y, q.z);
    }
    const double d = rel.size() <= 2000 ? oracle::min_distance_brute(rel)
                                        : oracle::min_distance_sweep(rel);
    c.expect(d >= n.spacing, fmt::format("{} node {}: min distance {} < spacing {}", label,
                                         n.name, d, n.spacing));
    ++totals.poisson_nodes;
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

struct LargeBuild {
  bool ok = false;
  double seconds = 0;
  long max_rss_kib = 0;
  std::string error;
};

// Runs the 10^7 build in a child process so its peak RSS is measured alone.
LargeBuild large_build(const fs::path &out) {
  int fds[2];
  if (::pipe(fds) != 0)
    throw std::runtime_error("pipe failed");
  const auto t0 = Clock::now();
  const pid_t pid = ::fork();
  if (pid < 0)
    throw std::runtime_error("fork failed");
  if (pid == 0) {
    ::close(fds[0]);
    std::string msg;
    int code = 0;
    try {
      SynthStream s(SynthSpec{SynthShape::RoomWithAisles, kLargeBuildPoints, 1});
      BuildConfig cfg;
      cfg.memory_budget = kLargeBuildBudget;
      build_octree(s, std::nullopt, cfg, out);
    } catch (const std::exception &e) {
      msg = e.what();
      code = 1;
    }
    rusage ru{};
    ::getrusage(RUSAGE_SELF, &ru);
    msg = fmt::format("{} {}", ru.ru_maxrss, msg);
    [[maybe_unused]] auto n = ::write(fds[1], msg.data(), msg.size());
    ::_exit(code);
  }
  ::close(fds[1]);
  std::string reply;
  char buf[512];
  for (ssize_t n; (n = ::read(fds[0], buf, sizeof buf)) > 0;)
    reply.append(buf, static_cast<std::size_t>(n));
  ::close(fds[0]);
  int status = 0;
  ::waitpid(pid, &status, 0);
  LargeBuild r;
  r.seconds = seconds_since(t0);
  r.ok = WIFEXITED(status) && WEXITSTATUS(status) == 0;
  const auto space = reply.find(' ');
  if (space != std::string::npos) {
    r.max_rss_kib = std::stol(reply.substr(0, space));
    r.error = reply.substr(space + 1);
  } else {
    r.error = "build process died";
  }
  return r;
}

Outcome octree_audit() {
  Checks c;
  AuditTotals totals;
  ::malloc_trim(0);
  Workspace &w = ws();
  const fs::path large_dir = w.dir / "large";
  const LargeBuild lb = large_build(large_dir);
  c.expect(lb.ok, "10^7 build failed: " + lb.error);
  c.expect(lb.seconds < kLargeBuildTimeLimitS,
           fmt::format("10^7 build took {:.1f} s", lb.seconds));
  const double rss_mib = double(lb.max_rss_kib) / 1024;
  c.expect(std::uint64_t(lb.max_rss_kib) * 1024 <= kLargeBuildBudget,
           fmt::format("10^7 build peak RSS {:.0f} MiB", rss_mib));
  std::size_t large_nodes = 0;
  if (lb.ok) {
    w.large = load_hierarchy(large_dir);
    large_nodes = w.large->nodes.size();
    c.expect(w.large->manifest.total_points == kLargeBuildPoints, "10^7 build lost points");
    const AuditReport rep = audit_dataset(*w.large);
    c.expect(rep.ok(), "10^7 structural audit failed");
    fs::remove(w.large->octree_path());
  } else {
    w.large_error = lb.error;
  }
  {
    BuildConfig cfg;
    cfg.threads = 1;
    audit_build(c, totals, "room1e6",
                synth_cloud(SynthSpec{SynthShape::RoomWithAisles, 1000000, 11}).points, cfg);
  }
  {
    BuildConfig cfg;
    cfg.leaf_capacity = 2000;
    cfg.memory_budget = kMinMemoryBudget;
    cfg.threads = 2;
    audit_build(c, totals, "box2e5-chunked",
                synth_cloud(SynthSpec{SynthShape::Box, 200000, 12, 3.0}).points, cfg);
  }
  {
    BuildConfig cfg;
    cfg.leaf_capacity = 500;
    cfg.max_level = 6;
    audit_build(c, totals, "room3e5-shallow",
                synth_cloud(SynthSpec{SynthShape::RoomWithAisles, 300000, 13}).points, cfg);
  }

  return c.outcome(fmt::format(
      "{} builds, {} nodes, {} points: multiset equal, spacing halves, rebuild identical; "
      "Poisson verified on {} nodes < {} points; 10^7 build {:.1f} s (limit {} s), "
      "peak RSS {:.0f} MiB (budget 1024 MiB), {} nodes",
      totals.builds, totals.nodes, totals.points, totals.poisson_nodes, kPoissonAuditMaxPoints,
      lb.seconds, kLargeBuildTimeLimitS, rss_mib, large_nodes));
}

// ----------------------------------------------------------------- selection

CameraView random_view(std::mt19937_64 &rng) {
  const Vec3 pos = testing::uniform_in(rng, Aabb(Vec3(-10, -10, 0.5), Vec3(50, 110, 8)));
  return camera_from_pose(pos, testing::uniform(rng, 0, 360), testing::uniform(rng, -60, 60));
}

Outcome lod_selection() {
  Checks c;
  Workspace &w = ws();
  const LodDataset ds = load_hierarchy(w.demo_dataset);
  const LodHierarchy h(ds.nodes);
  std::mt19937_64 rng(303);
  std::size_t min_px_poses = 0;
  for (int i = 0; i < kSelectionPoses; ++i) {
    const CameraView v = random_view(rng);
    const std::uint64_t budget = 20000 + rng() % 480000;
    const double min_px = i % 5 == 4 ? testing::uniform(rng, 1, 200) : 0.0;
    min_px_poses += min_px > 0;
    const LodSelection sel = select_nodes(h, v, budget, min_px);
    c.expect(sel.total_points <= budget, fmt::format("pose {}: over budget", i));
    const std::set<std::string> names(sel.names.begin(), sel.names.end());
    for (const auto &n : sel.names)
      c.expect(n == "r" || names.count(std::string(parent_name(n))),
               fmt::format("pose {}: {} selected without its parent", i, n));
    c.expect(sel.names == oracle::select(ds.nodes, v, budget, min_px),
             fmt::format("pose {}: differs from ranking oracle", i));
    if (min_px == 0) {
      const LodSelection larger = select_nodes(h, v, budget * 2, 0);
      const std::set<std::string> big(larger.names.begin(), larger.names.end());
      c.expect(std::includes(big.begin(), big.end(), names.begin(), names.end()),
               fmt::format("pose {}: not monotone in budget", i));
    }
  }

  double worst_ms = 0, total_ms = 0;
  std::size_t nodes = 0;
  if (!w.large) {
    c.expect(false, "no 10^4-node hierarchy: " + w.large_error);
  } else {
    const LodHierarchy big(w.large->nodes);
    nodes = big.size();
    c.expect(nodes >= kLatencyMinNodes, fmt::format("hierarchy has only {} nodes", nodes));
    std::mt19937_64 r2(304);
    select_nodes(big, random_view(r2), kLatencyBudget, 0);
    for (int i = 0; i < kSelectionPoses; ++i) {
      const CameraView v = random_view(r2);
      const auto t0 = Clock::now();
      const LodSelection sel = select_nodes(big, v, kLatencyBudget, 0);
      const double ms = seconds_since(t0) * 1e3;
      worst_ms = std::max(worst_ms, ms);
      total_ms += ms;
      c.expect(sel.total_points <= kLatencyBudget, "latency pose over budget");
    }
    c.expect(worst_ms < kLatencyLimitMs, fmt::format("worst latency {:.3f} ms", worst_ms));
  }
  return c.outcome(fmt::format(
      "{} poses on the demo dataset ({} nodes, {} with min_pixels > 0): subtree-closed, within "
      "budget, monotone, equal to oracle; latency on {} nodes: mean {:.3f} ms, worst {:.3f} ms "
      "(limit {} ms)",
      kSelectionPoses, ds.nodes.size(), min_px_poses, nodes, total_ms / kSelectionPoses,
      worst_ms, kLatencyLimitMs));
}

// ---------------------------------------------------------------- evacuation

Outcome evacuation() {
  Checks c;
  const SceneDefinition scene = load_scene(ws().scene_path);
  std::mt19937_64 rng(404);
  int matched = 0;
  for (int i = 0; i < kEscapePoses; ++i) {
    SessionState s;
    s.pose.position = testing::uniform_in(rng, kRoomEnvelope);
    s.pose.yaw_deg = testing::uniform(rng, 0, 360);
    const SessionState e = start_escape(s, scene);
    const bool ok = e.mode == SessionMode::Escape && e.guidance &&
                    e.guidance->exit_id == oracle::nearest_exit(scene.exits, s.pose.position);
    matched += ok;
    c.expect(ok, fmt::format("pose {}: wrong target", i));
  }
  // Equidistant from the first two exits (with the rest removed): smaller id wins.
  {
    SceneDefinition two = scene;
    two.exits.resize(2);
    SessionState s;
    s.pose.position = (two.exits[0].position + two.exits[1].position) / 2;
    const std::string want = std::min(two.exits[0].id, two.exits[1].id);
    c.expect(start_escape(s, two).guidance->exit_id == want &&
                 oracle::nearest_exit(two.exits, s.pose.position) == want,
             "tie not broken by id");
  }

  int arrivals = 0;
  std::size_t steps = 0;
  double worst_arrival = 0;
  for (int run = 0; run < kApproachRuns; ++run) {
    SessionState s;
    s.pose.position = testing::uniform_in(rng, kRoomEnvelope);
    s = start_escape(s, scene);
    const ExitPoint *target = scene.find_exit(s.guidance->exit_id);
    double prev = s.guidance->distance_m;
    bool arrived = s.guidance->arrived;
    for (int k = 0; k < 10000 && !arrived; ++k) {
      const Vec3 to = target->position - s.pose.position;
      s.pose.position += std::min(kApproachStepM, to.norm()) * to.normalized();
      const GuidanceUpdate u = update_guidance(s, scene);
      ++steps;
      c.expect(u.guidance.distance_m < prev,
               fmt::format("run {}: distance did not decrease", run));
      c.expect(u.guidance.arrived == (u.guidance.distance_m <= kArrivalThresholdM),
               fmt::format("run {}: arrival flag inconsistent", run));
      c.expect(u.completed == u.guidance.arrived, fmt::format("run {}: completion mismatch", run));
      prev = u.guidance.distance_m;
      arrived = u.completed;
      if (arrived) {
        ++arrivals;
        worst_arrival = std::max(worst_arrival, u.guidance.distance_m);
        c.expect(u.state.mode == SessionMode::Free && u.state.last_arrival == target->id,
                 fmt::format("run {}: completion did not return to free mode", run));
      }
      s = u.state;
    }
  }
  c.expect(arrivals == kApproachRuns, fmt::format("{} of {} approaches arrived", arrivals,
                                                  kApproachRuns));

  // Server answers against the in-process engine.
  ServerConfig cfg;
  cfg.port = 0;
  cfg.dataset_dir = ws().demo_dataset;
  cfg.scene_path = ws().scene_path;
  DatasetServer server(cfg);
  server.start();
  httplib::Client client("127.0.0.1", server.port());
  int equal = 0;
  auto query = [&](const Vec3 &p) {
    const auto r =
        client.Get(fmt::format("/api/guidance?x={}&y={}&z={}", p.x(), p.y(), p.z()));
    SessionState s;
    s.pose.position = p;
    const GuidanceState g = update_guidance(start_escape(s, scene), scene).guidance;
    if (!r || r->status != 200)
      return false;
    const auto j = nlohmann::json::parse(r->body);
    return j.size() == 4 && j["exit_id"] == g.exit_id &&
           j["bearing_deg"].get<double>() == g.bearing_deg &&
           j["distance_m"].get<double>() == g.distance_m && j["arrived"].get<bool>() == g.arrived;
  };
  for (int i = 0; i < kGuidanceQueries; ++i)
    equal += query(testing::uniform_in(rng, kRoomEnvelope));
  c.expect(equal == kGuidanceQueries,
           fmt::format("{} of {} guidance responses equal", equal, kGuidanceQueries));
  c.expect(query(scene.exits[0].position), "guidance at an exit differs");
  server.stop();

  return c.outcome(fmt::format(
      "{}/{} targets equal brute-force argmin; {} straight approaches ({} steps) strictly "
      "decreasing, all arrived at <= {:.3f} m (threshold {} m); {}/{} /api/guidance responses "
      "equal field for field",
      matched, kEscapePoses, kApproachRuns, steps, worst_arrival, kArrivalThresholdM, equal,
      kGuidanceQueries));
}

// ---------------------------------------------------------------------- tour

Outcome tour_fidelity() {
  Checks c;
  const SceneDefinition scene = load_scene(ws().scene_path);
  const TourPath path = TourPath::from_scene(scene);
  double worst_control = 0;
  for (std::size_t i = 0; i < path.controls().size(); ++i) {
    const Vec3 &want = path.controls()[i].position;
    worst_control = std::max(worst_control, (path.at(path.control_arc()[i]).position - want).norm());
    if (i < path.segment_count())
      worst_control = std::max(worst_control, (path.evaluate(i, 0) - want).norm());
    if (i > 0)
      worst_control = std::max(worst_control, (path.evaluate(i - 1, 1) - want).norm());
  }
  c.expect(worst_control <= kControlTolM,
           fmt::format("control waypoint miss {:.3e} m", worst_control));

  const double speed = scene.tour.speed_mps;
  SessionState s = start_tour(initial_state(scene), path);
  double worst_speed = 0;
  std::size_t measured = 0;
  while (s.mode == SessionMode::Tour) {
    const SessionState n = step_tour(s, kTourDt, path, speed);
    double clearance = std::numeric_limits<double>::infinity();
    for (const auto &w : path.controls())
      clearance = std::min({clearance, (w.position - s.pose.position).norm(),
                            (w.position - n.pose.position).norm()});
    if (clearance > kCornerClearanceM && n.mode == SessionMode::Tour) {
      const double v = (n.pose.position - s.pose.position).norm() / kTourDt;
      worst_speed = std::max(worst_speed, std::abs(v - speed) / speed);
      ++measured;
    }
    s = n;
  }
  c.expect(worst_speed <= kSpeedRelTol, fmt::format("speed error {:.4f}", worst_speed));
  c.expect(measured > 100, "too few speed samples");

  const fs::path csv = ws().dir / "tour.csv";
  const auto r = cli({"tour", "--dataset", ws().demo_dataset.string(), "--scene",
                      ws().scene_path.string(), "--budget", std::to_string(kTourBudget),
                      "--report", csv.string()});
  c.expect(r.code == 0, "tour command failed: " + r.output);
  std::istringstream in(testing::read_file(csv));
  std::string line;
  std::getline(in, line);
  c.expect(line == "t,x,y,z,yaw,pitch,nodes_selected,points_selected,new_bytes",
           "unexpected CSV header");
  std::size_t rows = 0;
  std::uint64_t max_points = 0, new_bytes = 0;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');)
      cells.push_back(cell);
    if (cells.size() != 9) {
      c.expect(false, "malformed CSV row");
      break;
    }
    const std::uint64_t pts = std::stoull(cells[7]);
    max_points = std::max(max_points, pts);
    new_bytes += std::stoull(cells[8]);
    c.expect(pts <= kTourBudget, fmt::format("row {} over budget", rows));
    ++rows;
  }
  c.expect(rows > 0, "empty tour report");
  c.expect(new_bytes <= fs::file_size(ws().demo_dataset / "octree.bin"),
           "cumulative new_bytes exceed octree.bin");
  return c.outcome(fmt::format(
      "control miss {:.2e} m (tol {:.0e}); speed error {:.2e} over {} samples >= {} m from "
      "corners (tol {}); CSV {} rows, max points {} <= budget {}",
      worst_control, kControlTolM, worst_speed, measured, kCornerClearanceM, kSpeedRelTol, rows,
      max_points, kTourBudget));
}

// --------------------------------------------------------------- measurement

Outcome measurement() {
  Checks c;
  const double d = measure_distance<double>(Vec3(0, 0, 0), Vec3(3, 4, 0));
  c.expect(std::abs(d - 5) <= kDistanceTol, fmt::format("3-4-5 distance {}", d));
  const std::vector<Vec3> square = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(1, 1, 0), Vec3(0, 1, 0)};
  const double a = measure_area<double>(square);
  c.expect(std::abs(a - 1) <= kAreaTol, fmt::format("unit square area {}", a));

  std::mt19937_64 rng(505);
  double worst = 0;
  for (int i = 0; i < kRigidMotions; ++i) {
    std::vector<Vec2> poly2;
    const int n = 3 + int(rng() % 8);
    for (int k = 0; k < n; ++k) {
      const double ang = 2 * std::numbers::pi * (k + testing::uniform(rng, 0.1, 0.9)) / n;
      const double rad = testing::uniform(rng, 0.5, 5);
      poly2.emplace_back(rad * std::cos(ang), rad * std::sin(ang));
    }
    std::vector<Vec3> flat;
    for (const auto &p : poly2)
      flat.emplace_back(p.x(), p.y(), 0);
    const double ref = std::abs(oracle::shoelace(poly2));
    const Eigen::Matrix3d rot = testing::random_rotation(rng);
    const Vec3 shift = testing::uniform_in(rng, Aabb(Vec3::Constant(-100), Vec3::Constant(100)));
    std::vector<Vec3> moved;
    for (const auto &p : flat)
      moved.push_back(rot * p + shift);
    const double rel = std::abs(measure_area<double>(moved) - ref) / ref;
    worst = std::max(worst, rel);
  }
  c.expect(worst <= kAreaRelTol, fmt::format("rotation invariance error {:.2e}", worst));
  return c.outcome(fmt::format("3-4-5 distance error {:.1e}; unit square {:.15f}; {} rigid "
                               "motions, worst relative area error {:.2e} (tol {:.0e})",
                               std::abs(d - 5), a, kRigidMotions, worst, kAreaRelTol));
}

// -------------------------------------------------------------------- replay

Outcome replay_determinism() {
  Checks c;
  const SceneDefinition scene = load_scene(ws().scene_path);
  const fs::path fixtures = LABTWIN_FIXTURE_DIR;
  std::vector<std::string> logs = {"escape_wp12.jsonl", "tour.jsonl", "free_roam.jsonl"};
  for (const auto &name : logs) {
    const SessionLog log = load_session_log(fixtures / name);
    const ReplayResult a = replay_session(log, scene);
    const ReplayResult b = replay_session(log, scene);
    c.expect(a.final_hash == b.final_hash, name + ": two in-process runs differ");
    c.expect(log.final_state_hash && *log.final_state_hash == a.final_hash,
             name + ": hash differs from the recorded one");
    const auto r1 = cli({"replay", "--scene", ws().scene_path.string(), "--log",
                         (fixtures / name).string(), "--verify"});
    const auto r2 = cli({"replay", "--scene", ws().scene_path.string(), "--log",
                         (fixtures / name).string(), "--verify"});
    c.expect(r1.code == 0 && r1.output == r2.output &&
                 r1.output.find("final_state_hash: " + a.final_hash) != std::string::npos,
             name + ": CLI replay differs");
  }
  // The escape fixture ends arrived at a real exit.
  {
    const ReplayResult r =
        replay_session(load_session_log(fixtures / "escape_wp12.jsonl"), scene, true);
    c.expect(r.arrivals.size() == 1 && scene.find_exit(r.arrivals[0]) &&
                 r.steps.back().guidance && r.steps.back().guidance->arrived,
             "escape fixture does not end arrived at an exit");
  }
  // Tampering with one dt is detected.
  SessionLog tampered = load_session_log(fixtures / "free_roam.jsonl");
  tampered.events[tampered.events.size() / 2].dt *= 1.0 + 1e-12;
  const fs::path tp = ws().dir / "tampered.jsonl";
  save_session_log(tampered, tp);
  const auto t = cli({"replay", "--scene", ws().scene_path.string(), "--log", tp.string(),
                      "--verify"});
  c.expect(t.code == 1 && t.output.find("hash mismatch") != std::string::npos,
           "tampered log not reported");
  return c.outcome(fmt::format("{} recorded logs replay to their recorded hash twice in-process "
                               "and twice via the CLI; tampered dt reported as mismatch",
                               logs.size()));
}

// ------------------------------------------------------------------- serving

Outcome serving() {
  Checks c;
  ServerConfig cfg;
  cfg.port = 0;
  cfg.dataset_dir = ws().demo_dataset;
  cfg.scene_path = ws().scene_path;
  DatasetServer server(cfg);
  server.start();
  httplib::Client client("127.0.0.1", server.port());
  const auto manifest = client.Get("/api/manifest");
  const auto hierarchy = client.Get("/api/hierarchy");
  c.expect(manifest && manifest->status == 200, "manifest fetch failed");
  c.expect(hierarchy && hierarchy->status == 200, "hierarchy fetch failed");
  const std::string bin = testing::read_file(ws().demo_dataset / "octree.bin");
  std::vector<std::string> names;
  std::vector<std::string> digests;
  std::string joined;
  if (manifest && hierarchy) {
    const auto m = nlohmann::json::parse(manifest->body);
    c.expect(m.contains("hierarchy_digest"), "manifest lacks digest");
    for (const auto &n : nlohmann::json::parse(hierarchy->body)) {
      names.push_back(n["name"].get<std::string>());
      const auto r = client.Get("/api/nodes/" + names.back());
      if (!r || r->status != 200) {
        c.expect(false, "node fetch failed: " + names.back());
        continue;
      }
      c.expect(r->body.size() == n["num_points"].get<std::uint64_t>() * kRecordBytes,
               "node size mismatch: " + names.back());
      joined += r->body;
      digests.push_back(sha256_hex(r->body));
    }
  }
  c.expect(joined == bin, "reassembled bytes differ from octree.bin");

  std::atomic<int> mismatches{0}, fetches{0};
  if (!names.empty() && digests.size() == names.size()) {
    std::vector<std::thread> threads;
    for (int t = 0; t < kConcurrentClients; ++t)
      threads.emplace_back([&, t] {
        httplib::Client cl("127.0.0.1", server.port());
        cl.set_read_timeout(60);
        std::mt19937_64 rng(static_cast<std::uint64_t>(600 + t));
        for (int i = 0; i < kFetchesPerClient; ++i) {
          // Overlapping sets: half the draws come from the 32 shallowest nodes.
          const std::size_t k = (i % 2) ? rng() % std::min<std::size_t>(32, names.size())
                                        : rng() % names.size();
          const auto r = cl.Get("/api/nodes/" + names[k]);
          if (!r || r->status != 200 || sha256_hex(r->body) != digests[k])
            ++mismatches;
          ++fetches;
        }
      });
    for (auto &th : threads)
      th.join();
  }
  c.expect(fetches == kConcurrentClients * kFetchesPerClient, "not all concurrent fetches ran");
  c.expect(mismatches == 0, fmt::format("{} checksum mismatches", mismatches.load()));
  server.stop();
  return c.outcome(fmt::format(
      "{} nodes reassemble {} bytes of octree.bin bit-exactly; {} clients x {} fetches, {} "
      "checksum mismatches; no viewer involved",
      names.size(), bin.size(), kConcurrentClients, kFetchesPerClient, mismatches.load()));
}

} // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"subsample-contract", subsample_contract},
      {"octree-partition-audit", octree_audit},
      {"lod-selection", lod_selection},
      {"evacuation-oracle", evacuation},
      {"tour-fidelity", tour_fidelity},
      {"measurement", measurement},
      {"replay-determinism", replay_determinism},
      {"serving", serving},
  };
  int failed = 0;
  bool demo_ready = false;
  std::string demo_error;
  for (const auto &[name, fn] : criteria) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      // The demo dataset is built after the large build so that the
      // large build's process starts from a small parent.
      if (name == "lod-selection" && !demo_ready) {
        prepare_demo();
        demo_ready = true;
      }
      o = fn();
    } catch (const std::exception &e) {
      o = {false, fmt::format("exception: {}", e.what())};
    }
    failed += !o.pass;
    fmt::print("{} {}: {} [{:.1f} s]\n", o.pass ? "PASS" : "FAIL", name, o.detail,
               seconds_since(t0));
    std::fflush(stdout);
  }
  fmt::print("{} of {} criteria passed\n", criteria.size() - static_cast<std::size_t>(failed),
             criteria.size());
  return failed == 0 ? 0 : 1;
}
