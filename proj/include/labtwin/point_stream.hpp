#pragma once

#include "labtwin/cloud_io.hpp"
#include "labtwin/synth.hpp"

#include <memory>
#include <span>

namespace labtwin {

// A point sequence that can be replayed from the start. The octree builder
// makes several passes over its input without holding it in memory.
class PointStream {
public:
  virtual ~PointStream() = default;
  virtual bool next(ColorPoint &out) = 0;
  virtual void rewind() = 0;
};

class SpanStream final : public PointStream {
public:
  explicit SpanStream(std::span<const ColorPoint> points) : points_(points) {}
  bool next(ColorPoint &out) override {
    if (pos_ == points_.size())
      return false;
    out = points_[pos_++];
    return true;
  }
  void rewind() override { pos_ = 0; }

private:
  std::span<const ColorPoint> points_;
  std::size_t pos_ = 0;
};

class FileStream final : public PointStream {
public:
  FileStream(std::filesystem::path path, CloudFormat format)
      : path_(std::move(path)), format_(format), reader_(CloudReader::open(path_, format_)) {}
  bool next(ColorPoint &out) override { return reader_->next(out); }
  void rewind() override { reader_ = CloudReader::open(path_, format_); }

private:
  std::filesystem::path path_;
  CloudFormat format_;
  std::unique_ptr<CloudReader> reader_;
};

class SynthStream final : public PointStream {
public:
  explicit SynthStream(const SynthSpec &spec) : source_(spec) {}
  bool next(ColorPoint &out) override { return source_.next(out); }
  void rewind() override { source_.rewind(); }

private:
  SynthSource source_;
};

} // namespace labtwin
