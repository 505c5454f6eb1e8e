#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>

namespace labtwin {

// Incremental SHA-256 (OpenSSL EVP underneath).
class Sha256 {
public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256 &) = delete;
  Sha256 &operator=(const Sha256 &) = delete;

  Sha256 &update(const void *data, std::size_t size);
  Sha256 &update(std::string_view bytes) { return update(bytes.data(), bytes.size()); }
  template <typename T> Sha256 &update_value(const T &v) { return update(&v, sizeof(T)); }

  std::string hex_digest(); // finalises; the object must not be reused

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::string sha256_hex(std::string_view bytes);
std::string sha256_file_hex(const std::filesystem::path &path);

} // namespace labtwin
