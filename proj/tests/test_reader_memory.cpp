// Standalone binary: global operator new is replaced to track live heap
// bytes, so streaming readers can be checked for O(buffer) memory.
#include "labtwin/cloud_io.hpp"
#include "labtwin/synth.hpp"

#include "support.hpp"

#include <fmt/format.h>

#include <atomic>
#include <cstdlib>
#include <malloc.h>
#include <new>

namespace {

std::atomic<std::int64_t> g_live{0};
std::atomic<std::int64_t> g_peak{0};

void note_alloc(void *p) {
  const auto now = g_live.fetch_add(static_cast<std::int64_t>(malloc_usable_size(p))) +
                   static_cast<std::int64_t>(malloc_usable_size(p));
  std::int64_t peak = g_peak.load();
  while (now > peak && !g_peak.compare_exchange_weak(peak, now)) {
  }
}

} // namespace

void *operator new(std::size_t n) {
  void *p = std::malloc(n ? n : 1);
  if (!p)
    throw std::bad_alloc();
  note_alloc(p);
  return p;
}
void *operator new[](std::size_t n) { return operator new(n); }
void operator delete(void *p) noexcept {
  if (!p)
    return;
  g_live -= static_cast<std::int64_t>(malloc_usable_size(p));
  std::free(p);
}
void operator delete[](void *p) noexcept { operator delete(p); }
void operator delete(void *p, std::size_t) noexcept { operator delete(p); }
void operator delete[](void *p, std::size_t) noexcept { operator delete(p); }

using namespace labtwin;

namespace {

// Peak live heap growth while streaming every record of `path`.
std::int64_t stream_peak(const std::filesystem::path &path, CloudFormat format,
                         std::uint64_t expected) {
  const std::int64_t base = g_live.load();
  g_peak = base;
  std::uint64_t n = 0;
  {
    auto reader = CloudReader::open(path, format);
    ColorPoint p;
    while (reader->next(p))
      ++n;
  }
  if (n != expected)
    throw std::runtime_error(fmt::format("read {} of {} records", n, expected));
  return g_peak.load() - base;
}

void write_cloud(const std::filesystem::path &path, CloudFormat format, std::uint64_t count) {
  SynthSource src(SynthSpec{SynthShape::RoomWithAisles, count, 1});
  auto w = CloudWriter::open(path, format);
  ColorPoint p;
  while (src.next(p))
    w->write(p);
  w->close();
}

} // namespace

int main() {
  // Reader state is bounded by the I/O buffer plus small fixed overhead.
  constexpr std::int64_t kLimit = CloudReader::kDefaultBufferBytes + (512 << 10);
  testing::TempDir dir{"labtwin-mem"};
  int failures = 0;
  for (const auto &[format, ext] : {std::pair{CloudFormat::XyzrgbText, ".xyz"},
                                    std::pair{CloudFormat::Las, ".las"},
                                    std::pair{CloudFormat::InternalBinary, ".ltpc"}}) {
    std::int64_t peaks[2];
    const std::uint64_t counts[2] = {100000, 1000000};
    for (int i = 0; i < 2; ++i) {
      const auto path = dir / fmt::format("c{}{}", i, ext);
      write_cloud(path, format, counts[i]);
      peaks[i] = stream_peak(path, format, counts[i]);
    }
    const bool ok = peaks[1] <= kLimit && peaks[1] <= peaks[0] + (64 << 10);
    fmt::print("{} reader {}: peak heap {} B at 1e5 points, {} B at 1e6 points (limit {})\n",
               ok ? "PASS" : "FAIL", ext, peaks[0], peaks[1], kLimit);
    failures += !ok;
  }
  return failures == 0 ? 0 : 1;
}
