#include "labtwin/server.hpp"

#include "labtwin/digest.hpp"
#include "labtwin/engine.hpp"
#include "labtwin/error.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <charconv>
#include <fstream>
#include <sstream>
#include <thread>

namespace labtwin {

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError(fmt::format("cannot open {}", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void send_error(httplib::Response &res, int status, std::string_view message) {
  res.status = status;
  res.set_content(nlohmann::json{{"error", message}}.dump(), "application/json");
}

std::optional<double> parse_finite(const std::string &text) {
  double v = 0;
  const char *end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v))
    return std::nullopt;
  return v;
}

bool etag_matches(const httplib::Request &req, const std::string &etag) {
  const std::string header = req.get_header_value("If-None-Match");
  if (header.empty())
    return false;
  if (header == "*")
    return true;
  std::string_view rest = header;
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    std::string_view tok = rest.substr(0, comma);
    while (!tok.empty() && tok.front() == ' ')
      tok.remove_prefix(1);
    while (!tok.empty() && tok.back() == ' ')
      tok.remove_suffix(1);
    if (tok.starts_with("W/"))
      tok.remove_prefix(2);
    if (tok == etag)
      return true;
    if (comma == std::string_view::npos)
      break;
    rest.remove_prefix(comma + 1);
  }
  return false;
}

// Sends `body` with a strong ETag, answering conditional requests with 304.
void send_tagged(const httplib::Request &req, httplib::Response &res, std::string etag,
                 std::string body, const char *content_type) {
  etag = '"' + etag + '"';
  res.set_header("ETag", etag);
  res.set_header("Cache-Control", "no-cache");
  if (etag_matches(req, etag)) {
    res.status = 304;
    return;
  }
  res.set_content(std::move(body), content_type);
}

} // namespace

std::string content_type_for(const fs::path &path) {
  std::string ext = path.extension().string();
  for (auto &c : ext)
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  static const std::pair<std::string_view, std::string_view> kTypes[] = {
      {".jpg", "image/jpeg"},       {".jpeg", "image/jpeg"},
      {".png", "image/png"},        {".gif", "image/gif"},
      {".webp", "image/webp"},      {".svg", "image/svg+xml"},
      {".html", "text/html"},       {".htm", "text/html"},
      {".css", "text/css"},         {".js", "application/javascript"},
      {".mjs", "application/javascript"},
      {".json", "application/json"}, {".txt", "text/plain"},
      {".wasm", "application/wasm"}, {".bin", "application/octet-stream"},
  };
  for (const auto &[e, type] : kTypes)
    if (ext == e)
      return std::string(type);
  return "application/octet-stream";
}

struct DatasetServer::Impl {
  httplib::Server http;
  std::thread thread;
};

DatasetServer::DatasetServer(ServerConfig config)
    : config_(std::move(config)), impl_(std::make_unique<Impl>()) {
  try {
    LodDataset ds = load_hierarchy(config_.dataset_dir);
    manifest_bytes_ = slurp(config_.dataset_dir / kManifestFile);
    hierarchy_bytes_ = slurp(config_.dataset_dir / kHierarchyFile);
    octree_fd_ = ::open(ds.octree_path().c_str(), O_RDONLY | O_CLOEXEC);
    if (octree_fd_ < 0)
      throw IoError(fmt::format("cannot open {}", ds.octree_path().string()));
    dataset_ = std::move(ds);
  } catch (const Error &e) {
    if (!config_.allow_degraded)
      throw;
    dataset_error_ = e.what();
    spdlog::error("dataset unavailable: {}", dataset_error_);
  }
  if (!config_.scene_path.empty()) {
    try {
      scene_bytes_ = slurp(config_.scene_path);
      try {
        scene_ = parse_scene(scene_bytes_);
        scene_digest_ = sha256_hex(scene_bytes_);
      } catch (const Error &e) {
        throw ValidationError(fmt::format("{}: {}", config_.scene_path.string(), e.what()));
      }
    } catch (const Error &e) {
      if (!config_.allow_degraded)
        throw;
      scene_error_ = e.what();
      spdlog::error("scene unavailable: {}", scene_error_);
    }
  }
  if (!config_.asset_dir.empty()) {
    std::error_code ec;
    asset_root_ = fs::canonical(config_.asset_dir, ec);
    if (ec)
      throw IoError(fmt::format("asset directory {}: {}", config_.asset_dir.string(),
                                ec.message()));
  }
  install_routes();
}

DatasetServer::~DatasetServer() {
  stop();
  if (octree_fd_ >= 0)
    ::close(octree_fd_);
}

void DatasetServer::install_routes() {
  auto &http = impl_->http;
  const int threads = config_.worker_threads;
  http.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };

  if (config_.cors) {
    http.set_post_routing_handler([](const httplib::Request &, httplib::Response &res) {
      res.set_header("Access-Control-Allow-Origin", "*");
      res.set_header("Access-Control-Expose-Headers", "ETag, Content-Range, Content-Length");
    });
    http.Options(R"(/api/.*)", [](const httplib::Request &, httplib::Response &res) {
      res.set_header("Access-Control-Allow-Methods", "GET, HEAD, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Range, If-None-Match");
      res.status = 204;
    });
  }

  const auto need_dataset = [this](httplib::Response &res) {
    if (dataset_)
      return true;
    send_error(res, 503, fmt::format("dataset failed validation: {}", dataset_error_));
    return false;
  };
  const auto need_scene = [this](httplib::Response &res) {
    if (scene_)
      return true;
    send_error(res, 503, scene_error_.empty() ? std::string("no scene configured")
                                              : "scene failed validation: " + scene_error_);
    return false;
  };

  http.Get("/api/manifest", [this, need_dataset](const httplib::Request &req,
                                                 httplib::Response &res) {
    if (need_dataset(res))
      send_tagged(req, res, dataset_->manifest.hierarchy_digest + "-manifest", manifest_bytes_,
                  "application/json");
  });
  http.Get("/api/hierarchy", [this, need_dataset](const httplib::Request &req,
                                                  httplib::Response &res) {
    if (need_dataset(res))
      send_tagged(req, res, dataset_->manifest.hierarchy_digest + "-hierarchy",
                  hierarchy_bytes_, "application/json");
  });
  http.Get(R"(/api/nodes/([^/]+))", [this, need_dataset](const httplib::Request &req,
                                                         httplib::Response &res) {
    if (!need_dataset(res))
      return;
    const std::string name = req.matches[1];
    const OctreeNode *node = dataset_->find(name);
    if (!node)
      return send_error(res, 404, fmt::format("unknown node '{}'", name));
    std::string etag = '"' + dataset_->manifest.hierarchy_digest + '-' + name + '"';
    res.set_header("ETag", etag);
    res.set_header("Cache-Control", "no-cache");
    res.set_header("Accept-Ranges", "bytes");
    if (etag_matches(req, etag)) {
      res.status = 304;
      return;
    }
    std::string blob(node->byte_size, '\0');
    std::size_t done = 0;
    while (done < blob.size()) {
      const ssize_t n = ::pread(octree_fd_, blob.data() + done, blob.size() - done,
                                static_cast<off_t>(node->byte_offset + done));
      if (n <= 0)
        return send_error(res, 500, fmt::format("read failed for node '{}'", name));
      done += static_cast<std::size_t>(n);
    }
    res.set_content(std::move(blob), "application/octet-stream");
  });
  http.Get("/api/scene", [this, need_scene](const httplib::Request &req,
                                            httplib::Response &res) {
    if (need_scene(res))
      send_tagged(req, res, "scene-" + scene_digest_,
                  scene_bytes_, "application/json");
  });
  http.Get(R"(/api/assets/(.*))", [this](const httplib::Request &req,
                                         httplib::Response &res) {
    const std::string rel = req.matches[1];
    if (rel.empty() || rel.front() == '/' || rel.find('\\') != std::string::npos ||
        rel.find('\0') != std::string::npos)
      return send_error(res, 403, "forbidden asset path");
    for (const auto &part : fs::path(rel))
      if (part == "..")
        return send_error(res, 403, "forbidden asset path");
    if (asset_root_.empty())
      return send_error(res, 404, "no asset directory configured");
    std::error_code ec;
    const fs::path target = fs::weakly_canonical(asset_root_ / rel, ec);
    if (ec)
      return send_error(res, 404, "asset not found");
    const auto [root_end, _] =
        std::mismatch(asset_root_.begin(), asset_root_.end(), target.begin(), target.end());
    if (root_end != asset_root_.end())
      return send_error(res, 403, "forbidden asset path");
    if (!fs::is_regular_file(target, ec))
      return send_error(res, 404, "asset not found");
    try {
      res.set_content(slurp(target), content_type_for(target));
    } catch (const Error &) {
      send_error(res, 404, "asset not found");
    }
  });
  http.Get("/api/guidance", [this, need_scene](const httplib::Request &req,
                                               httplib::Response &res) {
    Vec3 p;
    const char *keys[] = {"x", "y", "z"};
    for (int i = 0; i < 3; ++i) {
      if (!req.has_param(keys[i]))
        return send_error(res, 400, fmt::format("missing parameter '{}'", keys[i]));
      const auto v = parse_finite(req.get_param_value(keys[i]));
      if (!v)
        return send_error(res, 400, fmt::format("parameter '{}' must be a finite number",
                                                keys[i]));
      p[i] = *v;
    }
    if (!need_scene(res))
      return;
    if (scene_->exits.empty())
      return send_error(res, 409, "scene defines no exits");
    SessionState s;
    s.pose.position = p;
    const GuidanceState g = update_guidance(start_escape(s, *scene_), *scene_).guidance;
    nlohmann::ordered_json body;
    body["exit_id"] = g.exit_id;
    body["bearing_deg"] = g.bearing_deg;
    body["distance_m"] = g.distance_m;
    body["arrived"] = g.arrived;
    res.set_content(body.dump(), "application/json");
  });

  if (!config_.static_dir.empty() && !http.set_mount_point("/", config_.static_dir.string()))
    throw IoError(fmt::format("static directory {} not found", config_.static_dir.string()));

  http.set_error_handler([](const httplib::Request &, httplib::Response &res) {
    if (res.body.empty())
      send_error(res, res.status, httplib::status_message(res.status));
  });
  http.set_exception_handler(
      [](const httplib::Request &, httplib::Response &res, std::exception_ptr ep) {
        try {
          std::rethrow_exception(ep);
        } catch (const std::exception &e) {
          send_error(res, 500, e.what());
        }
      });
  http.set_logger([](const httplib::Request &req, const httplib::Response &res) {
    spdlog::debug("{} {} -> {}", req.method, req.path, res.status);
  });
}

int DatasetServer::bind() {
  if (port_ >= 0)
    return port_;
  auto &http = impl_->http;
  if (config_.port == 0) {
    port_ = http.bind_to_any_port(config_.host);
  } else if (http.bind_to_port(config_.host, config_.port)) {
    port_ = config_.port;
  }
  if (port_ < 0)
    throw IoError(fmt::format("cannot bind {}:{}", config_.host, config_.port));
  return port_;
}

void DatasetServer::run() {
  bind();
  impl_->http.listen_after_bind();
}

void DatasetServer::start() {
  bind();
  impl_->thread = std::thread([this] { impl_->http.listen_after_bind(); });
  impl_->http.wait_until_ready();
}

void DatasetServer::stop() {
  impl_->http.stop();
  if (impl_->thread.joinable())
    impl_->thread.join();
}

std::string DatasetServer::url() const {
  return fmt::format("http://{}:{}", config_.host, port_);
}

} // namespace labtwin
