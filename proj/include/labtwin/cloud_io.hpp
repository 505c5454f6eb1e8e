#pragma once

#include "labtwin/geometry.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace labtwin {

enum class CloudFormat { XyzrgbText, Las, InternalBinary };

// Accepts "xyzrgb", "las", "internal-binary" (alias "bin").
CloudFormat parse_cloud_format(std::string_view name);
std::string_view to_string(CloudFormat format);
// .txt/.xyz/.xyzrgb -> text, .las -> LAS, .ltpc/.bin -> internal binary.
CloudFormat cloud_format_from_extension(const std::filesystem::path &path);

struct PointCloud {
  std::vector<ColorPoint> points;
  Aabb bounds; // empty when there are no points

  std::size_t count() const { return points.size(); }
  void push_back(const ColorPoint &p) {
    points.push_back(p);
    bounds.extend(p.position);
  }
};

// Streaming reader with a fixed-size I/O buffer. Records are yielded in file
// order; bounds() and count() cover everything yielded so far and are tight
// once next() has returned false.
class CloudReader {
public:
  static constexpr std::size_t kDefaultBufferBytes = 1u << 20;

  static std::unique_ptr<CloudReader> open(const std::filesystem::path &path, CloudFormat format,
                                           std::size_t buffer_bytes = kDefaultBufferBytes);
  virtual ~CloudReader();

  CloudReader(const CloudReader &) = delete;
  CloudReader &operator=(const CloudReader &) = delete;

  bool next(ColorPoint &out);
  std::size_t read(std::span<ColorPoint> out);

  const Aabb &bounds() const { return bounds_; }
  std::uint64_t count() const { return count_; }
  // Record count announced by the file header, when the format has one.
  virtual std::optional<std::uint64_t> declared_count() const { return std::nullopt; }

protected:
  explicit CloudReader(std::FILE *file, std::filesystem::path path, std::size_t buffer_bytes);

  virtual bool read_record(ColorPoint &out) = 0;

  // Buffered byte access shared by the format readers.
  std::size_t fill(); // returns bytes available
  bool read_exact(void *dst, std::size_t n);
  std::uint64_t offset() const { return consumed_; }

  std::FILE *file_;
  std::filesystem::path path_;
  std::vector<char> buffer_;
  std::size_t begin_ = 0;
  std::size_t end_ = 0;
  std::uint64_t consumed_ = 0;
  bool eof_ = false;

private:
  Aabb bounds_;
  std::uint64_t count_ = 0;
};

class CloudWriter {
public:
  static std::unique_ptr<CloudWriter> open(const std::filesystem::path &path, CloudFormat format);
  virtual ~CloudWriter();

  CloudWriter(const CloudWriter &) = delete;
  CloudWriter &operator=(const CloudWriter &) = delete;

  // Throws ValidationError naming the point index for non-finite input.
  void write(const ColorPoint &p);
  // Flushes and finalises headers. Returns the number of records written.
  std::uint64_t close();

  std::uint64_t count() const { return count_; }

protected:
  CloudWriter(std::FILE *file, std::filesystem::path path);

  virtual void write_record(const ColorPoint &p) = 0;
  virtual void finish() {}

  void put(const void *src, std::size_t n);

  std::FILE *file_;
  std::filesystem::path path_;
  std::uint64_t count_ = 0;
  Aabb bounds_;
  bool closed_ = false;
};

struct CloudSummary {
  Aabb bounds;
  std::uint64_t count = 0;
};

CloudSummary read_cloud(const std::filesystem::path &path, CloudFormat format,
                        const std::function<void(const ColorPoint &)> &sink);
PointCloud read_cloud(const std::filesystem::path &path, CloudFormat format);

std::uint64_t write_cloud(std::span<const ColorPoint> points, const std::filesystem::path &path,
                          CloudFormat format);

// Coordinate resolution used by the LAS writer.
inline constexpr double kLasScale = 0.001;

} // namespace labtwin
