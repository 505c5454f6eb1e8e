#pragma once

#include "labtwin/lod_format.hpp"
#include "labtwin/scene.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace labtwin {

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080; // 0 binds an ephemeral port
  std::filesystem::path dataset_dir;
  std::filesystem::path scene_path;  // optional
  std::filesystem::path asset_dir;   // root of /api/assets; optional
  std::filesystem::path static_dir;  // mounted at "/"; optional
  bool cors = true;
  // Serve 503 from the affected endpoints instead of refusing to start when
  // the dataset or scene fails validation.
  bool allow_degraded = false;
  int worker_threads = 32;
};

std::string content_type_for(const std::filesystem::path &path);

// Read-only HTTP API over one dataset and scene. Every handler reads
// immutable state, so requests may run concurrently.
class DatasetServer {
public:
  explicit DatasetServer(ServerConfig config);
  ~DatasetServer();
  DatasetServer(const DatasetServer &) = delete;
  DatasetServer &operator=(const DatasetServer &) = delete;

  // Binds the listening socket; returns the bound port.
  int bind();
  // Serves until stop(); binds first if needed.
  void run();
  // run() on a background thread.
  void start();
  void stop();

  int port() const { return port_; }
  std::string url() const;
  bool dataset_ok() const { return dataset_.has_value(); }
  bool scene_ok() const { return scene_.has_value(); }
  const std::optional<LodDataset> &dataset() const { return dataset_; }

private:
  struct Impl;

  void install_routes();

  ServerConfig config_;
  std::optional<LodDataset> dataset_;
  std::string dataset_error_;
  std::string manifest_bytes_;
  std::string hierarchy_bytes_;
  std::optional<SceneDefinition> scene_;
  std::string scene_bytes_;
  std::string scene_digest_;
  std::string scene_error_;
  std::filesystem::path asset_root_;
  int octree_fd_ = -1;
  int port_ = -1;
  std::unique_ptr<Impl> impl_;
};

} // namespace labtwin
