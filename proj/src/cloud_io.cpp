#include "labtwin/cloud_io.hpp"

#include "labtwin/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <limits>

namespace labtwin {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian and written with memcpy");

namespace {

constexpr char kBinaryMagic[4] = {'L', 'T', 'P', 'C'};
constexpr std::uint32_t kBinaryVersion = 1;
constexpr std::size_t kBinaryHeaderBytes = 16;
constexpr std::size_t kBinaryRecordBytes = 28;

constexpr std::size_t kLasHeaderBytes = 227;
constexpr std::uint8_t kLasPointFormat = 2;
constexpr std::size_t kLasRecordBytes = 26;

template <typename T> T load(const char *src) {
  T v;
  std::memcpy(&v, src, sizeof(T));
  return v;
}

template <typename T> void store(char *dst, T v) { std::memcpy(dst, &v, sizeof(T)); }

std::FILE *open_file(const std::filesystem::path &path, const char *mode) {
  std::FILE *f = std::fopen(path.c_str(), mode);
  if (!f)
    throw IoError(fmt::format("cannot open {}: {}", path.string(), std::strerror(errno)));
  return f;
}

// ---------------------------------------------------------------- text

class TextReader final : public CloudReader {
public:
  TextReader(std::FILE *f, std::filesystem::path path, std::size_t buffer_bytes)
      : CloudReader(f, std::move(path), buffer_bytes) {}

protected:
  bool read_record(ColorPoint &out) override {
    std::string_view line;
    while (next_line(line)) {
      ++line_no_;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string_view::npos || line[first] == '#')
        continue;
      parse(line.substr(first), out);
      return true;
    }
    return false;
  }

private:
  bool next_line(std::string_view &line) {
    for (;;) {
      const char *b = buffer_.data() + begin_;
      const char *e = buffer_.data() + end_;
      if (const char *nl = std::find(b, e, '\n'); nl != e) {
        line = std::string_view(b, static_cast<std::size_t>(nl - b));
        begin_ += line.size() + 1;
        consumed_ += line.size() + 1;
        return true;
      }
      if (eof_) {
        if (b == e)
          return false;
        line = std::string_view(b, static_cast<std::size_t>(e - b));
        consumed_ += line.size();
        begin_ = end_;
        return true;
      }
      const std::size_t before = end_ - begin_;
      if (fill() == before && before == buffer_.size())
        throw FormatError(fmt::format("{}: line {}: longer than the {}-byte read buffer",
                                      path_.string(), line_no_ + 1, buffer_.size()));
    }
  }

  void parse(std::string_view line, ColorPoint &out) {
    const char *p = line.data();
    const char *end = line.data() + line.size();
    auto skip = [&] {
      while (p < end && (*p == ' ' || *p == '\t' || *p == '\r'))
        ++p;
    };
    auto fail = [&](std::string_view what) {
      throw FormatError(fmt::format("{}: line {}: {}", path_.string(), line_no_, what));
    };
    for (int i = 0; i < 3; ++i) {
      skip();
      double v = 0;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc() || !std::isfinite(v))
        fail("expected a finite coordinate");
      out.position[i] = v;
      p = next;
    }
    for (int i = 0; i < 3; ++i) {
      skip();
      int v = -1;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc() || v < 0 || v > 255)
        fail("expected a color channel in 0..255");
      out.rgb[i] = static_cast<std::uint8_t>(v);
      p = next;
    }
    skip();
    if (p != end)
      fail("trailing characters");
  }

  std::uint64_t line_no_ = 0;
};

class TextWriter final : public CloudWriter {
public:
  TextWriter(std::FILE *f, std::filesystem::path path) : CloudWriter(f, std::move(path)) {}

protected:
  void write_record(const ColorPoint &pt) override {
    char buf[160];
    char *p = buf;
    char *end = buf + sizeof(buf);
    const auto emit = [&](auto value, char sep) {
      const auto r = std::to_chars(p, end - 1, value);
      if (r.ec != std::errc())
        throw FormatError("xyzrgb: value does not fit the record buffer");
      p = r.ptr;
      *p++ = sep;
    };
    for (int i = 0; i < 3; ++i)
      emit(pt.position[i], ' ');
    for (int i = 0; i < 3; ++i)
      emit(static_cast<int>(pt.rgb[i]), i == 2 ? '\n' : ' ');
    put(buf, static_cast<std::size_t>(p - buf));
  }
};

// ---------------------------------------------------------------- binary

class BinaryReader final : public CloudReader {
public:
  BinaryReader(std::FILE *f, std::filesystem::path path, std::size_t buffer_bytes)
      : CloudReader(f, std::move(path), buffer_bytes) {
    char header[kBinaryHeaderBytes];
    if (fill() == 0) {
      declared_ = 0; // zero-byte file is an empty cloud
      return;
    }
    if (!read_exact(header, sizeof(header)))
      throw FormatError(fmt::format("{}: truncated header", path_.string()));
    if (std::memcmp(header, kBinaryMagic, 4) != 0)
      throw FormatError(fmt::format("{}: bad magic, expected LTPC", path_.string()));
    if (const auto version = load<std::uint32_t>(header + 4); version != kBinaryVersion)
      throw FormatError(fmt::format("{}: unsupported version {}", path_.string(), version));
    declared_ = load<std::uint64_t>(header + 8);
  }

  std::optional<std::uint64_t> declared_count() const override { return declared_; }

protected:
  bool read_record(ColorPoint &out) override {
    if (read_ == declared_)
      return false;
    char rec[kBinaryRecordBytes];
    const std::uint64_t at = offset();
    if (!read_exact(rec, sizeof(rec)))
      throw FormatError(fmt::format("{}: record {} at offset {}: truncated", path_.string(),
                                    read_, at));
    for (int i = 0; i < 3; ++i)
      out.position[i] = load<double>(rec + 8 * i);
    if (!all_finite(out.position))
      throw FormatError(fmt::format("{}: record {} at offset {}: non-finite coordinate",
                                    path_.string(), read_, at));
    std::memcpy(out.rgb.data(), rec + 24, 3);
    ++read_;
    return true;
  }

private:
  std::uint64_t declared_ = 0;
  std::uint64_t read_ = 0;
};

class BinaryWriter final : public CloudWriter {
public:
  BinaryWriter(std::FILE *f, std::filesystem::path path) : CloudWriter(f, std::move(path)) {
    char header[kBinaryHeaderBytes] = {};
    std::memcpy(header, kBinaryMagic, 4);
    store(header + 4, kBinaryVersion);
    put(header, sizeof(header));
  }

protected:
  void write_record(const ColorPoint &p) override {
    char rec[kBinaryRecordBytes] = {};
    for (int i = 0; i < 3; ++i)
      store(rec + 8 * i, p.position[i]);
    std::memcpy(rec + 24, p.rgb.data(), 3);
    put(rec, sizeof(rec));
  }

  void finish() override {
    if (std::fseek(file_, 8, SEEK_SET) != 0)
      throw IoError(fmt::format("{}: seek failed", path_.string()));
    put(&count_, sizeof(count_));
  }
};

// ---------------------------------------------------------------- LAS

class LasReader final : public CloudReader {
public:
  LasReader(std::FILE *f, std::filesystem::path path, std::size_t buffer_bytes)
      : CloudReader(f, std::move(path), buffer_bytes) {
    if (fill() == 0)
      return; // zero-byte file is an empty cloud
    char h[375] = {};
    if (!read_exact(h, kLasHeaderBytes) || std::memcmp(h, "LASF", 4) != 0)
      throw FormatError(fmt::format("{}: not a LAS file", path_.string()));
    const auto header_size = load<std::uint16_t>(h + 94);
    const auto data_offset = load<std::uint32_t>(h + 96);
    const auto raw_format = static_cast<std::uint8_t>(h[104]);
    record_bytes_ = load<std::uint16_t>(h + 105);
    declared_ = load<std::uint32_t>(h + 107);
    if (raw_format & 0xC0)
      throw FormatError(fmt::format("{}: compressed (LAZ) point data is not supported",
                                    path_.string()));
    format_ = raw_format & 0x3F;
    switch (format_) {
    case 2: rgb_offset_ = 20; break;
    case 3: rgb_offset_ = 28; break;
    default:
      throw FormatError(fmt::format("{}: unsupported LAS point format {} (need 2 or 3)",
                                    path_.string(), format_));
    }
    if (record_bytes_ < rgb_offset_ + 6)
      throw FormatError(fmt::format("{}: point record length {} too short for format {}",
                                    path_.string(), record_bytes_, format_));
    for (int i = 0; i < 3; ++i) {
      scale_[i] = load<double>(h + 131 + 8 * i);
      offset_[i] = load<double>(h + 155 + 8 * i);
    }
    if (header_size >= 375 && data_offset >= 375) {
      if (!read_exact(h + kLasHeaderBytes, 375 - kLasHeaderBytes))
        throw FormatError(fmt::format("{}: truncated LAS 1.4 header", path_.string()));
      if (declared_ == 0)
        declared_ = load<std::uint64_t>(h + 247);
    }
    if (data_offset < offset())
      throw FormatError(fmt::format("{}: point data offset {} inside header", path_.string(),
                                    data_offset));
    skip(data_offset - offset());
    record_.resize(record_bytes_);
  }

  std::optional<std::uint64_t> declared_count() const override { return declared_; }

protected:
  bool read_record(ColorPoint &out) override {
    if (read_ == declared_)
      return false;
    const std::uint64_t at = offset();
    if (!read_exact(record_.data(), record_bytes_))
      throw FormatError(fmt::format("{}: point {} at offset {}: truncated", path_.string(),
                                    read_, at));
    for (int i = 0; i < 3; ++i)
      out.position[i] = load<std::int32_t>(record_.data() + 4 * i) * scale_[i] + offset_[i];
    for (int i = 0; i < 3; ++i)
      out.rgb[i] = static_cast<std::uint8_t>(
          load<std::uint16_t>(record_.data() + rgb_offset_ + 2 * i) >> 8);
    ++read_;
    return true;
  }

private:
  void skip(std::uint64_t n) {
    char tmp[256];
    while (n > 0) {
      const auto chunk = static_cast<std::size_t>(std::min<std::uint64_t>(n, sizeof(tmp)));
      if (!read_exact(tmp, chunk))
        throw FormatError(fmt::format("{}: truncated before point data", path_.string()));
      n -= chunk;
    }
  }

  std::uint8_t format_ = 0;
  std::uint16_t record_bytes_ = 0;
  std::size_t rgb_offset_ = 0;
  std::uint64_t declared_ = 0;
  std::uint64_t read_ = 0;
  double scale_[3] = {1, 1, 1};
  double offset_[3] = {0, 0, 0};
  std::vector<char> record_;
};

// Writes LAS 1.2, point format 2. The offset is fixed from the first point
// (floored to whole meters); scale is kLasScale on every axis.
class LasWriter final : public CloudWriter {
public:
  LasWriter(std::FILE *f, std::filesystem::path path) : CloudWriter(f, std::move(path)) {
    char header[kLasHeaderBytes] = {};
    put(header, sizeof(header));
  }

protected:
  void write_record(const ColorPoint &p) override {
    if (count_ == 0)
      offset_ = p.position.array().floor();
    char rec[kLasRecordBytes] = {};
    for (int i = 0; i < 3; ++i) {
      const double q = std::round((p.position[i] - offset_[i]) / kLasScale);
      if (q < std::numeric_limits<std::int32_t>::min() ||
          q > std::numeric_limits<std::int32_t>::max())
        throw ValidationError(fmt::format(
            "point index {}: coordinate {} out of LAS range for offset {}", count_,
            p.position[i], offset_[i]));
      store(rec + 4 * i, static_cast<std::int32_t>(q));
    }
    for (int i = 0; i < 3; ++i)
      store(rec + 20 + 2 * i, static_cast<std::uint16_t>(p.rgb[i] * 257));
    put(rec, sizeof(rec));
  }

  void finish() override {
    char h[kLasHeaderBytes] = {};
    std::memcpy(h, "LASF", 4);
    h[24] = 1;
    h[25] = 2;
    std::snprintf(h + 26, 32, "labtwin");
    std::snprintf(h + 58, 32, "labtwin");
    store<std::uint16_t>(h + 94, kLasHeaderBytes);
    store<std::uint32_t>(h + 96, kLasHeaderBytes);
    store<std::uint32_t>(h + 100, 0);
    h[104] = static_cast<char>(kLasPointFormat);
    store<std::uint16_t>(h + 105, kLasRecordBytes);
    if (count_ > std::numeric_limits<std::uint32_t>::max())
      throw ValidationError(fmt::format("{}: LAS 1.2 cannot hold {} points", path_.string(),
                                        count_));
    store<std::uint32_t>(h + 107, static_cast<std::uint32_t>(count_));
    store<std::uint32_t>(h + 111, static_cast<std::uint32_t>(count_));
    for (int i = 0; i < 3; ++i) {
      store(h + 131 + 8 * i, kLasScale);
      store(h + 155 + 8 * i, offset_[i]);
    }
    const Vec3 lo = bounds_.isEmpty() ? Vec3::Zero() : Vec3(bounds_.min());
    const Vec3 hi = bounds_.isEmpty() ? Vec3::Zero() : Vec3(bounds_.max());
    for (int i = 0; i < 3; ++i) {
      store(h + 179 + 16 * i, hi[i]);
      store(h + 187 + 16 * i, lo[i]);
    }
    if (std::fseek(file_, 0, SEEK_SET) != 0)
      throw IoError(fmt::format("{}: seek failed", path_.string()));
    put(h, sizeof(h));
  }

private:
  Vec3 offset_ = Vec3::Zero();
};

} // namespace

CloudFormat parse_cloud_format(std::string_view name) {
  if (name == "xyzrgb" || name == "xyzrgb-text" || name == "text")
    return CloudFormat::XyzrgbText;
  if (name == "las")
    return CloudFormat::Las;
  if (name == "internal-binary" || name == "bin")
    return CloudFormat::InternalBinary;
  throw ValidationError(fmt::format("unknown cloud format '{}'", name));
}

std::string_view to_string(CloudFormat format) {
  switch (format) {
  case CloudFormat::XyzrgbText: return "xyzrgb";
  case CloudFormat::Las: return "las";
  case CloudFormat::InternalBinary: return "internal-binary";
  }
  return "?";
}

CloudFormat cloud_format_from_extension(const std::filesystem::path &path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".las")
    return CloudFormat::Las;
  if (ext == ".ltpc" || ext == ".bin")
    return CloudFormat::InternalBinary;
  if (ext == ".txt" || ext == ".xyz" || ext == ".xyzrgb")
    return CloudFormat::XyzrgbText;
  throw ValidationError(
      fmt::format("cannot infer cloud format from '{}'; pass the format explicitly", path.string()));
}

// ---------------------------------------------------------------- reader base

CloudReader::CloudReader(std::FILE *file, std::filesystem::path path, std::size_t buffer_bytes)
    : file_(file), path_(std::move(path)), buffer_(std::max<std::size_t>(buffer_bytes, 512)) {}

CloudReader::~CloudReader() {
  if (file_)
    std::fclose(file_);
}

std::unique_ptr<CloudReader> CloudReader::open(const std::filesystem::path &path,
                                               CloudFormat format, std::size_t buffer_bytes) {
  // Once the base is constructed it owns f, including when a derived
  // constructor throws on a bad header.
  std::FILE *f = open_file(path, "rb");
  switch (format) {
  case CloudFormat::XyzrgbText: return std::make_unique<TextReader>(f, path, buffer_bytes);
  case CloudFormat::Las: return std::make_unique<LasReader>(f, path, buffer_bytes);
  case CloudFormat::InternalBinary: return std::make_unique<BinaryReader>(f, path, buffer_bytes);
  }
  std::fclose(f);
  throw ValidationError("unknown cloud format");
}

std::size_t CloudReader::fill() {
  if (begin_ > 0) {
    std::memmove(buffer_.data(), buffer_.data() + begin_, end_ - begin_);
    end_ -= begin_;
    begin_ = 0;
  }
  while (!eof_ && end_ < buffer_.size()) {
    const std::size_t got = std::fread(buffer_.data() + end_, 1, buffer_.size() - end_, file_);
    if (got == 0) {
      if (std::ferror(file_))
        throw IoError(fmt::format("{}: read error", path_.string()));
      eof_ = true;
    }
    end_ += got;
  }
  return end_ - begin_;
}

bool CloudReader::read_exact(void *dst, std::size_t n) {
  auto *out = static_cast<char *>(dst);
  while (n > 0) {
    if (begin_ == end_ && fill() == 0)
      return false;
    const std::size_t take = std::min(n, end_ - begin_);
    std::memcpy(out, buffer_.data() + begin_, take);
    begin_ += take;
    consumed_ += take;
    out += take;
    n -= take;
  }
  return true;
}

bool CloudReader::next(ColorPoint &out) {
  if (!read_record(out))
    return false;
  bounds_.extend(out.position);
  ++count_;
  return true;
}

std::size_t CloudReader::read(std::span<ColorPoint> out) {
  std::size_t n = 0;
  while (n < out.size() && next(out[n]))
    ++n;
  return n;
}

// ---------------------------------------------------------------- writer base

CloudWriter::CloudWriter(std::FILE *file, std::filesystem::path path)
    : file_(file), path_(std::move(path)) {}

CloudWriter::~CloudWriter() {
  if (!closed_ && file_) {
    try {
      close();
    } catch (...) {
    }
  }
}

std::unique_ptr<CloudWriter> CloudWriter::open(const std::filesystem::path &path,
                                               CloudFormat format) {
  std::FILE *f = open_file(path, "wb");
  switch (format) {
  case CloudFormat::XyzrgbText: return std::make_unique<TextWriter>(f, path);
  case CloudFormat::Las: return std::make_unique<LasWriter>(f, path);
  case CloudFormat::InternalBinary: return std::make_unique<BinaryWriter>(f, path);
  }
  std::fclose(f);
  throw ValidationError("unknown cloud format");
}

void CloudWriter::put(const void *src, std::size_t n) {
  if (std::fwrite(src, 1, n, file_) != n)
    throw IoError(fmt::format("{}: write failed: {}", path_.string(), std::strerror(errno)));
}

void CloudWriter::write(const ColorPoint &p) {
  if (!all_finite(p.position))
    throw ValidationError(fmt::format("point index {}: non-finite coordinate", count_));
  write_record(p);
  bounds_.extend(p.position);
  ++count_;
}

std::uint64_t CloudWriter::close() {
  if (closed_)
    return count_;
  closed_ = true;
  struct Closer {
    std::FILE *&f;
    ~Closer() {
      std::fclose(f);
      f = nullptr;
    }
  } guard{file_};
  finish();
  if (std::fflush(file_) != 0)
    throw IoError(fmt::format("{}: flush failed", path_.string()));
  return count_;
}

// ---------------------------------------------------------------- helpers

CloudSummary read_cloud(const std::filesystem::path &path, CloudFormat format,
                        const std::function<void(const ColorPoint &)> &sink) {
  auto reader = CloudReader::open(path, format);
  ColorPoint p;
  while (reader->next(p))
    sink(p);
  return {reader->bounds(), reader->count()};
}

PointCloud read_cloud(const std::filesystem::path &path, CloudFormat format) {
  PointCloud cloud;
  auto reader = CloudReader::open(path, format);
  if (auto n = reader->declared_count())
    cloud.points.reserve(static_cast<std::size_t>(*n));
  ColorPoint p;
  while (reader->next(p))
    cloud.points.push_back(p);
  cloud.bounds = reader->bounds();
  return cloud;
}

std::uint64_t write_cloud(std::span<const ColorPoint> points, const std::filesystem::path &path,
                          CloudFormat format) {
  auto writer = CloudWriter::open(path, format);
  for (const auto &p : points)
    writer->write(p);
  return writer->close();
}

} // namespace labtwin
