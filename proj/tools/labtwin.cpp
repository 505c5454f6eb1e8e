// labtwin: operator CLI for the point-cloud virtual laboratory toolchain.

#include "labtwin/audit.hpp"
#include "labtwin/cloud_io.hpp"
#include "labtwin/engine.hpp"
#include "labtwin/error.hpp"
#include "labtwin/log.hpp"
#include "labtwin/lod_format.hpp"
#include "labtwin/octree.hpp"
#include "labtwin/scene.hpp"
#include "labtwin/selection.hpp"
#include "labtwin/server.hpp"
#include "labtwin/session_log.hpp"
#include "labtwin/subsample.hpp"
#include "labtwin/synth.hpp"
#include "labtwin/tour_path.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/os.h>
#include <spdlog/spdlog.h>

#include <csignal>
#include <charconv>
#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace labtwin;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitResource = 2;

std::string format_bounds(const Aabb &b) {
  if (b.isEmpty())
    return "(empty)";
  return fmt::format("[{:.6f}, {:.6f}, {:.6f}] - [{:.6f}, {:.6f}, {:.6f}]", b.min().x(),
                     b.min().y(), b.min().z(), b.max().x(), b.max().y(), b.max().z());
}

CloudFormat resolve_format(const std::string &flag, const fs::path &path) {
  return flag.empty() ? cloud_format_from_extension(path) : parse_cloud_format(flag);
}

// "1GiB", "512MiB", "64KiB" or a plain byte count.
std::uint64_t parse_byte_size(const std::string &text) {
  std::uint64_t value = 0;
  const char *end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr == text.data())
    throw ValidationError(fmt::format("invalid byte size '{}'", text));
  const std::string_view suffix(ptr, static_cast<std::size_t>(end - ptr));
  int shift = 0;
  if (suffix.empty() || suffix == "B")
    shift = 0;
  else if (suffix == "KiB")
    shift = 10;
  else if (suffix == "MiB")
    shift = 20;
  else if (suffix == "GiB")
    shift = 30;
  else
    throw ValidationError(fmt::format("invalid byte size suffix in '{}' (use KiB, MiB, GiB)", text));
  if (value > (std::numeric_limits<std::uint64_t>::max() >> shift))
    throw ValidationError(fmt::format("byte size '{}' overflows", text));
  return value << shift;
}

std::optional<double> parse_root_spacing(const std::string &text) {
  if (text == "auto")
    return std::nullopt;
  double v = 0;
  const char *end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || !(v > 0) || !std::isfinite(v))
    throw ValidationError(fmt::format("--root-spacing must be 'auto' or a positive number, got '{}'",
                                      text));
  return v;
}

// ------------------------------------------------------------------ convert

struct ConvertArgs {
  fs::path in, out;
  std::string in_format, out_format;
};

int run_convert(const ConvertArgs &a) {
  auto reader = CloudReader::open(a.in, resolve_format(a.in_format, a.in));
  auto writer = CloudWriter::open(a.out, resolve_format(a.out_format, a.out));
  ColorPoint p;
  while (reader->next(p))
    writer->write(p);
  const std::uint64_t n = writer->close();
  fmt::print("points: {}\nbounds: {}\n", n, format_bounds(reader->bounds()));
  return kExitOk;
}

// ---------------------------------------------------------------- subsample

struct SubsampleArgs {
  fs::path in, out;
  std::string in_format, out_format;
  double spacing = kDefaultSubsampleSpacing;
  std::uint64_t cell_budget = SubsampleConfig{}.cell_hash_budget;
};

int run_subsample(const SubsampleArgs &a) {
  SubsampleConfig cfg;
  cfg.spacing = a.spacing;
  cfg.cell_hash_budget = a.cell_budget;
  cfg.validate();
  auto reader = CloudReader::open(a.in, resolve_format(a.in_format, a.in));
  auto writer = CloudWriter::open(a.out, resolve_format(a.out_format, a.out));
  const SubsampleStats stats = subsample([&](ColorPoint &p) { return reader->next(p); },
                                         [&](const ColorPoint &p) { writer->write(p); }, cfg);
  writer->close();
  fmt::print("spacing: {}\nkept: {}\ndropped: {}\n", cfg.spacing, stats.kept, stats.dropped);
  return kExitOk;
}

// -------------------------------------------------------------------- build

struct BuildArgs {
  fs::path in, out;
  std::string in_format;
  std::string root_spacing = "auto";
  std::uint32_t leaf_capacity = BuildConfig{}.leaf_capacity;
  int max_level = BuildConfig{}.max_level;
  std::string memory_budget = "1GiB";
  unsigned threads = 0;
};

int run_build(const BuildArgs &a) {
  BuildConfig cfg;
  cfg.root_spacing = parse_root_spacing(a.root_spacing);
  cfg.leaf_capacity = a.leaf_capacity;
  cfg.max_level = a.max_level;
  cfg.memory_budget = parse_byte_size(a.memory_budget);
  cfg.threads = a.threads;
  cfg.validate();
  FileStream input(a.in, resolve_format(a.in_format, a.in));
  const BuildResult r = build_octree(input, std::nullopt, cfg, a.out);
  int depth = 0;
  for (const auto &n : r.nodes)
    depth = std::max(depth, n.level);
  fmt::print("nodes: {}\ndepth: {}\ntotal_points: {}\nroot_spacing: {}\nbounds: {}\n"
             "overflow_nodes: {}\ndigest: {}\n",
             r.nodes.size(), depth, r.manifest.total_points, r.manifest.root_spacing,
             format_bounds(r.manifest.bounds), r.manifest.overflow_nodes.size(),
             r.manifest.hierarchy_digest);
  return kExitOk;
}

// ----------------------------------------------------------------- validate

struct ValidateArgs {
  fs::path dataset, scene, source;
  std::string source_format;
  bool audit_poisson = false;
};

int run_validate(const ValidateArgs &a) {
  bool ok = true;
  std::optional<LodDataset> ds;
  if (!a.dataset.empty()) {
    try {
      ds = load_hierarchy(a.dataset);
      fmt::print("PASS digest: {} ({} nodes, {} points)\n", ds->manifest.hierarchy_digest,
                 ds->nodes.size(), ds->manifest.total_points);
    } catch (const Error &e) {
      fmt::print("FAIL digest: {}\n", e.what());
      return kExitValidation;
    }
    AuditOptions opt;
    opt.poisson = a.audit_poisson;
    if (!a.source.empty()) {
      FileStream src(a.source, resolve_format(a.source_format, a.source));
      opt.source = fingerprint_source(src, ds->manifest.bounds.min());
    }
    const AuditReport report = audit_dataset(*ds, opt);
    for (const auto &f : report.failures)
      fmt::print("FAIL {}\n", f);
    for (const auto &n : report.notes)
      fmt::print("note {}\n", n);
    fmt::print("{} audit: {} nodes, {} points{}{}\n", report.ok() ? "PASS" : "FAIL",
               report.nodes_checked, report.points_checked,
               a.audit_poisson ? fmt::format(", poisson on {} nodes", report.poisson_nodes_checked)
                               : std::string(),
               opt.source ? ", partition vs source" : "");
    ok = ok && report.ok();
  }
  if (!a.scene.empty()) {
    try {
      const SceneDefinition scene = load_scene(a.scene);
      const ValidationReport report =
          validate_scene(scene, ds ? std::optional<Aabb>(ds->manifest.bounds) : std::nullopt);
      for (const auto &w : report.warnings)
        fmt::print("warning scene: {}\n", w);
      fmt::print("PASS scene: {} waypoints, {} hotspots, {} exits\n", scene.waypoints.size(),
                 scene.hotspots.size(), scene.exits.size());
    } catch (const ValidationError &e) {
      fmt::print("FAIL scene: {}\n", e.what());
      ok = false;
    } catch (const FormatError &e) {
      fmt::print("FAIL scene: {}\n", e.what());
      ok = false;
    }
  }
  return ok ? kExitOk : kExitValidation;
}

// --------------------------------------------------------------------- tour

struct TourArgs {
  fs::path dataset, scene, report;
  double dt = 0.1;
  std::uint64_t budget = 500000;
  double min_pixels = 0;
};

int run_tour(const TourArgs &a) {
  if (!(a.dt > 0))
    throw ValidationError("--dt must be > 0");
  const LodDataset ds = load_hierarchy(a.dataset);
  const SceneDefinition scene = load_scene(a.scene);
  const TourPath path = TourPath::from_scene(scene);
  const LodHierarchy hierarchy(ds.nodes);
  std::vector<bool> touched(hierarchy.size(), false);

  auto out = fmt::output_file(a.report.string());
  out.print("t,x,y,z,yaw,pitch,nodes_selected,points_selected,new_bytes\n");
  SessionState state = start_tour(initial_state(scene), path);
  std::uint64_t rows = 0, max_points = 0, total_new = 0;
  for (;;) {
    const CameraView view =
        camera_from_pose(state.pose.position, state.pose.yaw_deg, state.pose.pitch_deg);
    const LodSelection sel = select_nodes(hierarchy, view, a.budget, a.min_pixels);
    std::uint64_t new_bytes = 0;
    for (std::size_t i : sel.indices)
      if (!touched[i]) {
        touched[i] = true;
        new_bytes += hierarchy.nodes()[i].byte_size;
      }
    out.print("{:.3f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{},{},{}\n", state.clock,
              state.pose.position.x(), state.pose.position.y(), state.pose.position.z(),
              state.pose.yaw_deg, state.pose.pitch_deg, sel.indices.size(), sel.total_points,
              new_bytes);
    ++rows;
    max_points = std::max(max_points, sel.total_points);
    total_new += new_bytes;
    if (state.mode != SessionMode::Tour)
      break;
    state = step_tour(state, a.dt, path, scene.tour.speed_mps);
  }
  out.close();
  fmt::print("rows: {}\ntour_length_m: {:.3f}\nmax_points_selected: {}\nbudget: {}\n"
             "total_new_bytes: {}\n",
             rows, path.length(), max_points, a.budget, total_new);
  return kExitOk;
}

// ------------------------------------------------------------------- replay

struct ReplayArgs {
  fs::path dataset, scene, log, trace;
  bool verify = false;
  bool stamp = false;
};

int run_replay(const ReplayArgs &a) {
  if (!a.dataset.empty())
    load_hierarchy(a.dataset);
  const SceneDefinition scene = load_scene(a.scene);
  SessionLog log = load_session_log(a.log);
  const ReplayResult r = replay_session(log, scene, !a.trace.empty());
  if (!a.trace.empty()) {
    auto out = fmt::output_file(a.trace.string());
    out.print("t,x,y,z,yaw,pitch,mode,viewed,exit_id,distance_m,arrived\n");
    for (const auto &s : r.steps)
      out.print("{:.3f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{},{},{},{},{}\n", s.state.clock,
                s.state.pose.position.x(), s.state.pose.position.y(),
                s.state.pose.position.z(), s.state.pose.yaw_deg, s.state.pose.pitch_deg,
                to_string(s.state.mode), s.state.viewed.size(),
                s.guidance ? s.guidance->exit_id : "",
                s.guidance ? fmt::format("{:.6f}", s.guidance->distance_m) : "",
                s.guidance ? (s.guidance->arrived ? "true" : "false") : "");
  }
  const SessionState &f = r.final_state;
  fmt::print("events: {}\nfinal_mode: {}\nfinal_position: [{:.6f}, {:.6f}, {:.6f}]\n"
             "viewed: {}\nclock: {:.6f}\n",
             log.events.size(), to_string(f.mode), f.pose.position.x(), f.pose.position.y(),
             f.pose.position.z(), f.viewed.size(), f.clock);
  for (const auto &exit_id : r.arrivals)
    fmt::print("arrived: {}\n", exit_id);
  fmt::print("final_state_hash: {}\n", r.final_hash);
  if (a.stamp) {
    log.final_state_hash = r.final_hash;
    save_session_log(log, a.log);
    fmt::print("stamped: {}\n", a.log.string());
  }
  if (a.verify) {
    if (!log.final_state_hash) {
      fmt::print("FAIL verify: log header has no final_state_hash\n");
      return kExitValidation;
    }
    if (*log.final_state_hash != r.final_hash) {
      fmt::print("FAIL verify: hash mismatch (log {}, replay {})\n", *log.final_state_hash,
                 r.final_hash);
      return kExitValidation;
    }
    fmt::print("PASS verify\n");
  }
  return kExitOk;
}

// -------------------------------------------------------------------- serve

struct ServeArgs {
  ServerConfig cfg;
  bool no_cors = false;
};

int run_serve(ServeArgs a) {
  a.cfg.cors = !a.no_cors;
  if (a.cfg.asset_dir.empty() && !a.cfg.static_dir.empty())
    a.cfg.asset_dir = a.cfg.static_dir;
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);
  DatasetServer server(a.cfg);
  server.start();
  fmt::print("serving {}\n", server.url());
  std::fflush(stdout);
  int sig = 0;
  sigwait(&signals, &sig);
  spdlog::info("signal {}, shutting down", sig);
  server.stop();
  return kExitOk;
}

// -------------------------------------------------------------- synth, demo

struct SynthArgs {
  std::string shape = "room";
  std::uint64_t count = 1000000;
  std::uint64_t seed = 1;
  double box_size = 1.0;
  fs::path out;
  std::string out_format;
};

int run_synth(const SynthArgs &a) {
  SynthSpec spec;
  spec.shape = parse_synth_shape(a.shape);
  spec.count = a.count;
  spec.seed = a.seed;
  spec.box_size = a.box_size;
  SynthSource source(spec);
  auto writer = CloudWriter::open(a.out, resolve_format(a.out_format, a.out));
  ColorPoint p;
  Aabb bounds;
  while (source.next(p)) {
    writer->write(p);
    bounds.extend(p.position);
  }
  fmt::print("points: {}\nbounds: {}\n", writer->close(), format_bounds(bounds));
  return kExitOk;
}

struct DemoArgs {
  fs::path out = "data";
  std::uint64_t points = 1000000;
  std::uint64_t seed = 1;
};

int run_demo(const DemoArgs &a) {
  fs::create_directories(a.out);
  const SceneDefinition scene = demo_scene();
  save_scene(scene, a.out / "scene.json");
  SynthSpec spec{SynthShape::RoomWithAisles, a.points, a.seed, 1.0};
  const std::uint64_t n = write_cloud(synth_cloud(spec).points, a.out / "room.ltpc",
                                      CloudFormat::InternalBinary);
  save_session_log(script_escape_session(scene, scene.waypoints.at(scene.waypoints.size() / 2).id),
                   a.out / "escape.jsonl");
  save_session_log(script_tour_session(scene), a.out / "tour.jsonl");
  fmt::print("wrote {}: scene.json ({} waypoints, {} hotspots, {} exits), room.ltpc ({} points), "
             "escape.jsonl, tour.jsonl\n",
             a.out.string(), scene.waypoints.size(), scene.hotspots.size(), scene.exits.size(), n);
  return kExitOk;
}

} // namespace

int main(int argc, char **argv) {
  init_logging_from_env();
  CLI::App app{"labtwin: point-cloud virtual laboratory toolchain.\n"
               "Environment: LABTWIN_LOG=error|info|debug sets log verbosity."};
  app.require_subcommand(1);
  int rc = kExitOk;
  std::function<int()> action;

  ConvertArgs convert;
  auto *c = app.add_subcommand("convert", "Convert a point cloud between formats (streaming)");
  c->add_option("--in", convert.in, "Input cloud")->required();
  c->add_option("--in-format", convert.in_format, "xyzrgb | las | internal-binary (default: by extension)");
  c->add_option("--out", convert.out, "Output cloud")->required();
  c->add_option("--out-format", convert.out_format, "xyzrgb | las | internal-binary (default: by extension)");
  c->callback([&] { action = [&] { return run_convert(convert); }; });

  SubsampleArgs sub;
  auto *s = app.add_subcommand("subsample", "Minimum-spacing subsample (first point wins)");
  s->add_option("--in", sub.in, "Input cloud")->required();
  s->add_option("--in-format", sub.in_format, "Input format (default: by extension)");
  s->add_option("--out", sub.out, "Output cloud")->required();
  s->add_option("--out-format", sub.out_format, "Output format (default: by extension)");
  s->add_option("--spacing", sub.spacing, "Minimum point spacing in meters")->capture_default_str();
  s->add_option("--cell-budget", sub.cell_budget, "Maximum occupied grid cells held in memory")
      ->capture_default_str();
  s->callback([&] { action = [&] { return run_subsample(sub); }; });

  BuildArgs build;
  auto *b = app.add_subcommand("build", "Build the LOD octree dataset");
  b->add_option("--in", build.in, "Input cloud")->required();
  b->add_option("--in-format", build.in_format, "Input format (default: by extension)");
  b->add_option("--out", build.out, "Output dataset directory")->required();
  b->add_option("--root-spacing", build.root_spacing, "Root node spacing in meters, or 'auto'")
      ->capture_default_str();
  b->add_option("--leaf-capacity", build.leaf_capacity, "Maximum points stored per node")
      ->capture_default_str();
  b->add_option("--max-level", build.max_level, "Deepest octree level")->capture_default_str();
  b->add_option("--memory-budget", build.memory_budget, "Chunking memory budget (bytes, KiB, MiB, GiB)")
      ->capture_default_str();
  b->add_option("--threads", build.threads, "Worker threads (0: hardware concurrency)")
      ->capture_default_str();
  b->callback([&] { action = [&] { return run_build(build); }; });

  ValidateArgs val;
  auto *v = app.add_subcommand("validate", "Check a dataset and/or scene");
  v->add_option("--dataset", val.dataset, "Dataset directory");
  v->add_option("--scene", val.scene, "Scene file");
  v->add_flag("--audit-poisson", val.audit_poisson, "Exhaustive per-node minimum-distance audit");
  v->add_option("--source", val.source, "Source cloud for the partition fingerprint check");
  v->add_option("--source-format", val.source_format, "Source format (default: by extension)");
  v->callback([&] {
    if (val.dataset.empty() && val.scene.empty())
      throw CLI::ValidationError("validate", "give --dataset and/or --scene");
    action = [&] { return run_validate(val); };
  });

  TourArgs tour;
  auto *t = app.add_subcommand("tour", "Headless auto-tour with LOD selection report");
  t->add_option("--dataset", tour.dataset, "Dataset directory")->required();
  t->add_option("--scene", tour.scene, "Scene file")->required();
  t->add_option("--dt", tour.dt, "Time step in seconds")->capture_default_str();
  t->add_option("--budget", tour.budget, "Point budget per frame")->capture_default_str();
  t->add_option("--min-pixels", tour.min_pixels, "Minimum projected node extent")->capture_default_str();
  t->add_option("--report", tour.report, "CSV report path")->required();
  t->callback([&] { action = [&] { return run_tour(tour); }; });

  ReplayArgs rep;
  auto *r = app.add_subcommand("replay", "Replay a session input log");
  r->add_option("--dataset", rep.dataset, "Dataset directory (checked when given)");
  r->add_option("--scene", rep.scene, "Scene file")->required();
  r->add_option("--log", rep.log, "Session log (JSON lines)")->required();
  r->add_flag("--verify", rep.verify, "Compare the final state hash with the log header");
  r->add_flag("--stamp", rep.stamp, "Write the final state hash into the log header");
  r->add_option("--trace", rep.trace, "Per-event CSV trace path");
  r->callback([&] { action = [&] { return run_replay(rep); }; });

  ServeArgs serve;
  auto *sv = app.add_subcommand("serve", "Serve the dataset, scene and guidance API over HTTP");
  sv->add_option("--dataset", serve.cfg.dataset_dir, "Dataset directory")->required();
  sv->add_option("--scene", serve.cfg.scene_path, "Scene file");
  sv->add_option("--static", serve.cfg.static_dir, "Static directory mounted at /");
  sv->add_option("--assets", serve.cfg.asset_dir, "Asset root for /api/assets (default: --static)");
  sv->add_option("--host", serve.cfg.host, "Bind address")->capture_default_str();
  sv->add_option("--port", serve.cfg.port, "Port (0: ephemeral)")->capture_default_str();
  sv->add_flag("--no-cors", serve.no_cors, "Disable the permissive CORS headers");
  sv->add_flag("--allow-degraded", serve.cfg.allow_degraded,
               "Start with 503 responses instead of refusing an invalid dataset or scene");
  sv->callback([&] { action = [&] { return run_serve(serve); }; });

  SynthArgs syn;
  auto *sy = app.add_subcommand("synth", "Write a deterministic synthetic cloud");
  sy->add_option("--shape", syn.shape, "box | room")->capture_default_str();
  sy->add_option("--count", syn.count, "Number of points")->capture_default_str();
  sy->add_option("--seed", syn.seed, "Random seed")->capture_default_str();
  sy->add_option("--box-size", syn.box_size, "Box edge in meters (box shape)")->capture_default_str();
  sy->add_option("--out", syn.out, "Output cloud")->required();
  sy->add_option("--out-format", syn.out_format, "Output format (default: by extension)");
  sy->callback([&] { action = [&] { return run_synth(syn); }; });

  DemoArgs demo;
  auto *d = app.add_subcommand("demo", "Write the demo scene, room cloud and sample session logs");
  d->add_option("--out", demo.out, "Output directory")->capture_default_str();
  d->add_option("--points", demo.points, "Room cloud size")->capture_default_str();
  d->add_option("--seed", demo.seed, "Random seed")->capture_default_str();
  d->callback([&] { action = [&] { return run_demo(demo); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }
  try {
    rc = action();
  } catch (const ResourceError &e) {
    fmt::print(stderr, "error: {}\n", e.what());
    rc = kExitResource;
  } catch (const IoError &e) {
    fmt::print(stderr, "error: {}\n", e.what());
    rc = kExitResource;
  } catch (const Error &e) {
    fmt::print(stderr, "error: {}\n", e.what());
    rc = kExitValidation;
  } catch (const std::bad_alloc &) {
    fmt::print(stderr, "error: out of memory\n");
    rc = kExitResource;
  } catch (const std::filesystem::filesystem_error &e) {
    fmt::print(stderr, "error: {}\n", e.what());
    rc = kExitResource;
  }
  return rc;
}
