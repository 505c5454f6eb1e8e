#include "labtwin/digest.hpp"
#include "labtwin/engine.hpp"
#include "labtwin/error.hpp"
#include "labtwin/octree.hpp"
#include "labtwin/point_stream.hpp"
#include "labtwin/server.hpp"
#include "labtwin/synth.hpp"

#include "support.hpp"

#include <doctest.h>
#include <httplib.h>
#include <json.hpp>

#include <fmt/format.h>

#include <atomic>
#include <thread>

using namespace labtwin;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  testing::TempDir dir{"labtwin-srv"};
  fs::path dataset, scene_path, assets;

  Fixture() {
    dataset = dir / "ds";
    SynthStream s(SynthSpec{SynthShape::RoomWithAisles, 60000, 5});
    BuildConfig cfg;
    cfg.leaf_capacity = 1500;
    build_octree(s, kRoomEnvelope, cfg, dataset);
    scene_path = dir / "scene.json";
    save_scene(demo_scene(), scene_path);
    assets = dir / "assets";
    fs::create_directories(assets / "eq");
    testing::write_file(assets / "eq" / "press500t.jpg", "\xff\xd8\xff\xe0jpegdata");
    testing::write_file(dir / "secret.txt", "secret");
  }
};

Fixture &fixture() {
  static Fixture f;
  return f;
}

ServerConfig config() {
  ServerConfig c;
  c.port = 0;
  c.dataset_dir = fixture().dataset;
  c.scene_path = fixture().scene_path;
  c.asset_dir = fixture().assets;
  c.worker_threads = 8;
  return c;
}

struct Running {
  DatasetServer server;
  explicit Running(ServerConfig c) : server(std::move(c)) { server.start(); }
  ~Running() { server.stop(); }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", server.port());
    c.set_read_timeout(30);
    return c;
  }
};

} // namespace

TEST_SUITE("server") {
  TEST_CASE("node blobs reassemble octree.bin bit-exactly") {
    Running run(config());
    auto cli = run.client();
    const auto manifest = cli.Get("/api/manifest");
    REQUIRE(manifest);
    CHECK(manifest->status == 200);
    CHECK(manifest->body == testing::read_file(fixture().dataset / "manifest.json"));
    const auto hier = cli.Get("/api/hierarchy");
    REQUIRE(hier);
    CHECK(hier->body == testing::read_file(fixture().dataset / "hierarchy.json"));

    const LodDataset ds = load_hierarchy(fixture().dataset);
    REQUIRE(ds.nodes.size() > 20);
    std::string joined;
    for (const auto &n : ds.nodes) {
      const auto r = cli.Get("/api/nodes/" + n.name);
      REQUIRE(r);
      REQUIRE(r->status == 200);
      CHECK(r->get_header_value("Content-Type") == "application/octet-stream");
      CHECK(r->body.size() == n.num_points * kRecordBytes);
      joined += r->body;
    }
    CHECK(joined == testing::read_file(fixture().dataset / "octree.bin"));
  }

  TEST_CASE("16 concurrent clients receive byte-correct payloads") {
    Running run(config());
    const LodDataset ds = load_hierarchy(fixture().dataset);
    std::vector<std::string> expected;
    for (const auto &n : ds.nodes)
      expected.push_back(sha256_hex(read_node_blob(ds, n)));
    std::atomic<int> mismatches{0}, fetched{0};
    std::vector<std::thread> threads;
    for (int t = 0; t < 16; ++t)
      threads.emplace_back([&, t] {
        auto cli = run.client();
        std::mt19937_64 rng(static_cast<std::uint64_t>(t));
        for (int i = 0; i < 150; ++i) {
          const std::size_t k = rng() % ds.nodes.size();
          const auto r = cli.Get("/api/nodes/" + ds.nodes[k].name);
          if (!r || r->status != 200 || sha256_hex(r->body) != expected[k])
            ++mismatches;
          ++fetched;
        }
      });
    for (auto &th : threads)
      th.join();
    CHECK(fetched == 16 * 150);
    CHECK(mismatches == 0);
  }

  TEST_CASE("status codes") {
    Running run(config());
    auto cli = run.client();
    auto status = [&](const std::string &path) {
      const auto r = cli.Get(path);
      return r ? r->status : -1;
    };
    CHECK(status("/api/nodes/zzz") == 404);
    CHECK(status("/api/nodes/r7777777777") == 404);
    CHECK(status("/api/assets/../../etc/x") == 403);
    CHECK(status("/api/assets/eq/../../secret.txt") == 403);
    CHECK(status("/api/assets/%2e%2e/secret.txt") == 403);
    CHECK(status("/api/assets/eq/missing.jpg") == 404);
    CHECK(status("/api/guidance?x=1&y=2") == 400);
    CHECK(status("/api/guidance?x=1&y=2&z=nan") == 400);
    CHECK(status("/api/guidance?x=1&y=abc&z=0") == 400);
    CHECK(status("/api/nope") == 404);
    const auto err = cli.Get("/api/nodes/zzz");
    REQUIRE(err);
    CHECK(nlohmann::json::parse(err->body).contains("error"));
  }

  TEST_CASE("assets are served with their content type") {
    Running run(config());
    auto cli = run.client();
    const auto r = cli.Get("/api/assets/eq/press500t.jpg");
    REQUIRE(r);
    CHECK(r->status == 200);
    CHECK(r->get_header_value("Content-Type") == "image/jpeg");
    CHECK(r->body == testing::read_file(fixture().assets / "eq" / "press500t.jpg"));
  }

  TEST_CASE("scene is served verbatim") {
    Running run(config());
    auto cli = run.client();
    const auto r = cli.Get("/api/scene");
    REQUIRE(r);
    CHECK(r->status == 200);
    CHECK(r->body == testing::read_file(fixture().scene_path));
  }

  TEST_CASE("etags, conditional requests and ranges") {
    Running run(config());
    auto cli = run.client();
    const auto a = cli.Get("/api/nodes/r");
    const auto b = cli.Get("/api/nodes/r");
    REQUIRE(a);
    REQUIRE(b);
    const std::string etag = a->get_header_value("ETag");
    CHECK(etag == b->get_header_value("ETag"));
    CHECK(a->body == b->body);
    CHECK(etag.find(run.server.dataset()->manifest.hierarchy_digest) != std::string::npos);
    CHECK(etag != cli.Get("/api/nodes/r0")->get_header_value("ETag"));

    const auto cond = cli.Get("/api/nodes/r", {{"If-None-Match", etag}});
    REQUIRE(cond);
    CHECK(cond->status == 304);
    CHECK(cond->body.empty());

    const auto part = cli.Get("/api/nodes/r", {{"Range", "bytes=16-47"}});
    REQUIRE(part);
    CHECK(part->status == 206);
    CHECK(part->body == a->body.substr(16, 32));

    const auto m = cli.Get("/api/manifest");
    const auto m304 = cli.Get("/api/manifest", {{"If-None-Match", m->get_header_value("ETag")}});
    CHECK(m304->status == 304);
  }

  TEST_CASE("guidance matches the engine field for field") {
    Running run(config());
    auto cli = run.client();
    const SceneDefinition scene = demo_scene();
    std::mt19937_64 rng(17);
    for (int i = 0; i < 100; ++i) {
      const Vec3 p = testing::uniform_in(rng, kRoomEnvelope);
      const auto r = cli.Get(fmt::format("/api/guidance?x={}&y={}&z={}", p.x(), p.y(), p.z()));
      REQUIRE(r);
      REQUIRE(r->status == 200);
      SessionState s;
      s.pose.position = p;
      const GuidanceState g = update_guidance(start_escape(s, scene), scene).guidance;
      const auto j = nlohmann::json::parse(r->body);
      CHECK(j.size() == 4);
      CHECK(j["exit_id"] == g.exit_id);
      CHECK(j["bearing_deg"].get<double>() == g.bearing_deg);
      CHECK(j["distance_m"].get<double>() == g.distance_m);
      CHECK(j["arrived"].get<bool>() == g.arrived);
    }
    const ExitPoint &e = scene.exits[0];
    const auto at = cli.Get(fmt::format("/api/guidance?x={}&y={}&z={}", e.position.x(),
                                        e.position.y(), e.position.z()));
    const auto j = nlohmann::json::parse(at->body);
    CHECK(j["distance_m"].get<double>() == 0);
    CHECK(j["arrived"].get<bool>());
    CHECK(j["exit_id"] == e.id);
  }

  TEST_CASE("scene without exits yields 409") {
    SceneDefinition s = demo_scene();
    s.exits.clear();
    const fs::path p = fixture().dir / "noexit.json";
    save_scene(s, p);
    ServerConfig c = config();
    c.scene_path = p;
    Running run(c);
    auto cli = run.client();
    CHECK(cli.Get("/api/guidance?x=1&y=2&z=3")->status == 409);
  }

  TEST_CASE("invalid dataset refuses to start unless degraded") {
    const fs::path bad = fixture().dir / "bad";
    fs::create_directories(bad);
    testing::write_file(bad / "manifest.json", "{");
    ServerConfig c = config();
    c.dataset_dir = bad;
    CHECK_THROWS_AS(DatasetServer{c}, Error);
    c.allow_degraded = true;
    Running run(c);
    CHECK_FALSE(run.server.dataset_ok());
    auto cli = run.client();
    CHECK(cli.Get("/api/manifest")->status == 503);
    CHECK(cli.Get("/api/nodes/r")->status == 503);
    CHECK(cli.Get("/api/scene")->status == 200);
  }

  TEST_CASE("cors headers") {
    {
      Running run(config());
      auto cli = run.client();
      CHECK(cli.Get("/api/manifest")->get_header_value("Access-Control-Allow-Origin") == "*");
    }
    ServerConfig c = config();
    c.cors = false;
    Running run(c);
    auto cli = run.client();
    CHECK_FALSE(cli.Get("/api/manifest")->has_header("Access-Control-Allow-Origin"));
  }

  TEST_CASE("json is gzip-compressed on request, node blobs never") {
    Running run(config());
    auto cli = run.client();
    const auto j = cli.Get("/api/hierarchy", {{"Accept-Encoding", "gzip"}});
    REQUIRE(j);
    CHECK(j->get_header_value("Content-Encoding") == "gzip");
    const auto n = cli.Get("/api/nodes/r", {{"Accept-Encoding", "gzip"}});
    REQUIRE(n);
    CHECK_FALSE(n->has_header("Content-Encoding"));
  }

  TEST_CASE("content types") {
    CHECK(content_type_for("a.json") == "application/json");
    CHECK(content_type_for("a.PNG") == "image/png");
    CHECK(content_type_for("a.html") == "text/html");
    CHECK(content_type_for("a.unknownext") == "application/octet-stream");
  }
}
