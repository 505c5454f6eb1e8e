#include "labtwin/digest.hpp"
#include "labtwin/error.hpp"
#include "labtwin/lod_format.hpp"
#include "labtwin/octree.hpp"

#include <absl/container/flat_hash_map.h>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstring>
#include <deque>
#include <exception>
#include <mutex>
#include <thread>

namespace labtwin {

namespace {

// Rough per-point cost of building a chunk in memory: the spilled record,
// the stored record, the spacing-grid link and hash slot.
constexpr std::uint64_t kChunkBytesPerPoint = 64;
// Points buffered per chunk before appending to its spill file.
constexpr std::size_t kSpillBufferRecords = 4096;
// Bias applied to per-node grid coordinates so neighbour lookups of points
// sitting on a node face never go negative.
constexpr std::int64_t kGridBias = 4;
constexpr int kGridBits = 21;

using Cell = std::array<std::uint32_t, 3>;

struct Frame {
  Vec3 origin;       // root cube minimum; records are relative to it
  double edge = 0;   // root cube edge
  double root_spacing = 0;
  int max_level = 0;
  std::uint32_t leaf_capacity = 1;
  double cell_scale = 0; // 2^max_level / edge

  Vec3 position(const PackedPoint &p) const { return Vec3(p.x, p.y, p.z); }

  // Integer routing cell at max_level resolution.
  Cell cell(const Vec3 &q) const {
    const auto top = static_cast<double>((std::uint64_t{1} << max_level) - 1);
    Cell c{};
    for (int i = 0; i < 3; ++i)
      c[static_cast<std::size_t>(i)] =
          static_cast<std::uint32_t>(std::clamp(std::floor(q[i] * cell_scale), 0.0, top));
    return c;
  }

  // Octant taken when leaving `level` toward level + 1.
  int octant(const Cell &c, int level) const {
    const int shift = max_level - 1 - level;
    return static_cast<int>((((c[0] >> shift) & 1u) << 2) | (((c[1] >> shift) & 1u) << 1) |
                            ((c[2] >> shift) & 1u));
  }
};

// Points held by one node plus a hash grid of cell edge = spacing for
// minimum-distance queries.
class NodeStore {
public:
  NodeStore(const Vec3 &min, double spacing)
      : min_(min), inv_spacing_(1.0 / spacing), spacing_sq_(spacing * spacing) {}

  std::size_t size() const { return points_.size(); }
  const std::vector<PackedPoint> &points() const { return points_; }

  bool conflicts(const Vec3 &q) const {
    const auto c = grid_cell(q);
    for (std::int64_t dx = -1; dx <= 1; ++dx)
      for (std::int64_t dy = -1; dy <= 1; ++dy)
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          const auto it = heads_.find(pack(c[0] + dx, c[1] + dy, c[2] + dz));
          if (it == heads_.end())
            continue;
          for (std::uint32_t i = it->second; i != kNone; i = next_[i]) {
            const PackedPoint &p = points_[i];
            if ((Vec3(p.x, p.y, p.z) - q).squaredNorm() < spacing_sq_)
              return true;
          }
        }
    return false;
  }

  void add(const Vec3 &q, const PackedPoint &rec, bool index) {
    const auto i = static_cast<std::uint32_t>(points_.size());
    points_.push_back(rec);
    if (!index)
      return;
    const auto c = grid_cell(q);
    auto [it, inserted] = heads_.try_emplace(pack(c[0], c[1], c[2]), kNone);
    next_.resize(points_.size(), kNone);
    next_[i] = it->second;
    it->second = i;
  }

private:
  static constexpr std::uint32_t kNone = 0xFFFFFFFFu;

  std::array<std::int64_t, 3> grid_cell(const Vec3 &q) const {
    return {static_cast<std::int64_t>(std::floor((q.x() - min_.x()) * inv_spacing_)) + kGridBias,
            static_cast<std::int64_t>(std::floor((q.y() - min_.y()) * inv_spacing_)) + kGridBias,
            static_cast<std::int64_t>(std::floor((q.z() - min_.z()) * inv_spacing_)) + kGridBias};
  }

  static std::uint64_t pack(std::int64_t x, std::int64_t y, std::int64_t z) {
    constexpr std::int64_t mask = (std::int64_t{1} << kGridBits) - 1;
    return (static_cast<std::uint64_t>(x & mask) << (2 * kGridBits)) |
           (static_cast<std::uint64_t>(y & mask) << kGridBits) |
           static_cast<std::uint64_t>(z & mask);
  }

  Vec3 min_;
  double inv_spacing_;
  double spacing_sq_;
  std::vector<PackedPoint> points_;
  std::vector<std::uint32_t> next_;
  absl::flat_hash_map<std::uint64_t, std::uint32_t> heads_;
};

struct TreeNode {
  std::string name;
  int level = 0;
  Cell prefix{}; // integer coordinates of the node at its own level
  NodeStore store;
  std::array<std::int32_t, 8> child{-1, -1, -1, -1, -1, -1, -1, -1};
  std::int32_t chunk = -1; // >= 0: points arriving here go to that spill chunk
  bool overflow = false;
};

// Top-down placement tree rooted at an arbitrary node.
class PlacementTree {
public:
  PlacementTree(const Frame &frame, std::string root_name, int root_level, Cell root_prefix)
      : frame_(frame) {
    make_node(std::move(root_name), root_level, root_prefix);
  }

  std::deque<TreeNode> &nodes() { return nodes_; }

  std::int32_t add_child(std::int32_t parent, int octant) {
    const TreeNode &p = nodes_[static_cast<std::size_t>(parent)];
    const Cell prefix{(p.prefix[0] << 1) | static_cast<std::uint32_t>((octant >> 2) & 1),
                      (p.prefix[1] << 1) | static_cast<std::uint32_t>((octant >> 1) & 1),
                      (p.prefix[2] << 1) | static_cast<std::uint32_t>(octant & 1)};
    const auto idx = make_node(child_name(p.name, octant), p.level + 1, prefix);
    nodes_[static_cast<std::size_t>(parent)].child[static_cast<std::size_t>(octant)] = idx;
    return idx;
  }

  // Places one point. Returns the spill chunk id when the point descended
  // into a chunk placeholder, otherwise -1.
  std::int32_t insert(const PackedPoint &rec) {
    const Vec3 q = frame_.position(rec);
    const Cell cell = frame_.cell(q);
    std::int32_t idx = 0;
    for (;;) {
      TreeNode &node = nodes_[static_cast<std::size_t>(idx)];
      if (node.chunk >= 0)
        return node.chunk;
      if (node.level == frame_.max_level) {
        if (!node.overflow &&
            (node.store.size() >= frame_.leaf_capacity || node.store.conflicts(q)))
          node.overflow = true;
        node.store.add(q, rec, !node.overflow);
        return -1;
      }
      if (node.store.size() < frame_.leaf_capacity && !node.store.conflicts(q)) {
        node.store.add(q, rec, true);
        return -1;
      }
      const int octant = frame_.octant(cell, node.level);
      std::int32_t next = node.child[static_cast<std::size_t>(octant)];
      if (next < 0)
        next = add_child(idx, octant);
      idx = next;
    }
  }

private:
  std::int32_t make_node(std::string name, int level, Cell prefix) {
    const double edge = std::ldexp(frame_.edge, -level);
    const Vec3 min(prefix[0] * edge, prefix[1] * edge, prefix[2] * edge);
    nodes_.push_back(TreeNode{std::move(name), level, prefix,
                              NodeStore(min, node_spacing(frame_.root_spacing, level)),
                              {-1, -1, -1, -1, -1, -1, -1, -1}, -1, false});
    return static_cast<std::int32_t>(nodes_.size() - 1);
  }

  const Frame &frame_;
  std::deque<TreeNode> nodes_;
};

// Output description of one non-empty node before offsets are assigned.
struct NodeOut {
  std::string name;
  int level = 0;
  std::uint64_t num_points = 0;
  bool overflow = false;
  // Either points held in memory, or a [offset, offset+size) range in a
  // chunk result file.
  const std::vector<PackedPoint> *memory = nullptr;
  std::int32_t chunk = -1;
};

struct ChunkPlan {
  std::string name;
  int level = 0;
  Cell prefix{};
  std::uint64_t estimated_points = 0;
};

struct ChunkResult {
  std::vector<NodeOut> nodes; // name order
};

class FileHandle {
public:
  FileHandle(const std::filesystem::path &path, const char *mode)
      : f_(std::fopen(path.c_str(), mode)), path_(path) {
    if (!f_)
      throw IoError(fmt::format("cannot open {}: {}", path.string(), std::strerror(errno)));
  }
  ~FileHandle() {
    if (f_)
      std::fclose(f_);
  }
  FileHandle(const FileHandle &) = delete;
  FileHandle &operator=(const FileHandle &) = delete;

  void write(const void *data, std::size_t n) {
    if (n && std::fwrite(data, 1, n, f_) != n)
      throw IoError(fmt::format("{}: write failed", path_.string()));
  }
  void read(void *data, std::size_t n) {
    if (n && std::fread(data, 1, n, f_) != n)
      throw IoError(fmt::format("{}: short read", path_.string()));
  }
  void close() {
    if (f_ && std::fclose(f_) != 0) {
      f_ = nullptr;
      throw IoError(fmt::format("{}: close failed", path_.string()));
    }
    f_ = nullptr;
  }

private:
  std::FILE *f_;
  std::filesystem::path path_;
};

std::vector<NodeOut> collect_nodes(std::deque<TreeNode> &nodes) {
  std::vector<NodeOut> out;
  for (auto &n : nodes) {
    if (n.chunk >= 0 || n.store.size() == 0)
      continue;
    out.push_back({n.name, n.level, n.store.size(), n.overflow, &n.store.points(), -1});
  }
  std::sort(out.begin(), out.end(),
            [](const NodeOut &a, const NodeOut &b) { return a.name < b.name; });
  return out;
}

// Splits the root cube into chunk subtrees whose point counts fit the
// per-chunk capacity. Nodes above the chunk roots form the in-memory top tree.
class ChunkPlanner {
public:
  ChunkPlanner(const Frame &frame, int count_level, std::uint64_t capacity)
      : frame_(frame), count_level_(count_level), capacity_(capacity) {}

  void count(const Cell &c) {
    const int shift = frame_.max_level - count_level_;
    ++counts_[morton(c[0] >> shift, c[1] >> shift, c[2] >> shift)];
  }

  std::uint64_t total() const { return total_; }

  void finish_counting() {
    keys_.reserve(counts_.size());
    for (const auto &[k, v] : counts_)
      keys_.emplace_back(k, v);
    counts_ = {};
    std::sort(keys_.begin(), keys_.end());
    prefix_.resize(keys_.size() + 1, 0);
    for (std::size_t i = 0; i < keys_.size(); ++i)
      prefix_[i + 1] = prefix_[i] + keys_[i].second;
    total_ = prefix_.back();
  }

  // Fills `top` with names of nodes that stay in the top tree and `chunks`
  // with chunk roots, both in name order.
  void plan(std::vector<ChunkPlan> &top, std::vector<ChunkPlan> &chunks) const {
    recurse("r", 0, Cell{0, 0, 0}, 0, top, chunks);
  }

private:
  static std::uint64_t spread(std::uint32_t v) {
    std::uint64_t x = v & 0x1FFFFF;
    x = (x | x << 32) & 0x1F00000000FFFFULL;
    x = (x | x << 16) & 0x1F0000FF0000FFULL;
    x = (x | x << 8) & 0x100F00F00F00F00FULL;
    x = (x | x << 4) & 0x10C30C30C30C30C3ULL;
    x = (x | x << 2) & 0x1249249249249249ULL;
    return x;
  }
  // Octant digits (x<<2 | y<<1 | z) from the most significant level down.
  static std::uint64_t morton(std::uint32_t x, std::uint32_t y, std::uint32_t z) {
    return (spread(x) << 2) | (spread(y) << 1) | spread(z);
  }

  std::uint64_t range_count(std::uint64_t lo, std::uint64_t hi) const {
    const auto first = std::lower_bound(keys_.begin(), keys_.end(),
                                        std::pair<std::uint64_t, std::uint64_t>{lo, 0});
    const auto last = std::lower_bound(keys_.begin(), keys_.end(),
                                       std::pair<std::uint64_t, std::uint64_t>{hi, 0});
    return prefix_[static_cast<std::size_t>(last - keys_.begin())] -
           prefix_[static_cast<std::size_t>(first - keys_.begin())];
  }

  void recurse(const std::string &name, int level, Cell prefix, std::uint64_t key_prefix,
               std::vector<ChunkPlan> &top, std::vector<ChunkPlan> &chunks) const {
    const int remaining = 3 * (count_level_ - level);
    const std::uint64_t lo = key_prefix << remaining;
    const std::uint64_t hi = (key_prefix + 1) << remaining;
    const std::uint64_t n = range_count(lo, hi);
    if (n == 0)
      return;
    if (n <= capacity_) {
      chunks.push_back({name, level, prefix, n});
      return;
    }
    if (level == count_level_)
      throw ResourceError(fmt::format(
          "memory_budget too small for the chunking stage: node {} holds {} points, chunk "
          "capacity is {}",
          name, n, capacity_));
    top.push_back({name, level, prefix, n});
    for (int octant = 0; octant < 8; ++octant) {
      const Cell child{(prefix[0] << 1) | static_cast<std::uint32_t>((octant >> 2) & 1),
                       (prefix[1] << 1) | static_cast<std::uint32_t>((octant >> 1) & 1),
                       (prefix[2] << 1) | static_cast<std::uint32_t>(octant & 1)};
      recurse(child_name(name, octant), level + 1, child,
              (key_prefix << 3) | static_cast<std::uint64_t>(octant), top, chunks);
    }
  }

  const Frame &frame_;
  int count_level_;
  std::uint64_t capacity_;
  absl::flat_hash_map<std::uint64_t, std::uint64_t> counts_;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> keys_;
  std::vector<std::uint64_t> prefix_;
  std::uint64_t total_ = 0;
};

class SpillWriter {
public:
  SpillWriter(std::filesystem::path path) : path_(std::move(path)) {
    buffer_.reserve(kSpillBufferRecords);
    FileHandle(path_, "wb").close(); // truncate
  }
  void append(const PackedPoint &p) {
    buffer_.push_back(p);
    ++count_;
    if (buffer_.size() == kSpillBufferRecords)
      flush();
  }
  void flush() {
    if (buffer_.empty())
      return;
    FileHandle f(path_, "ab");
    f.write(buffer_.data(), buffer_.size() * sizeof(PackedPoint));
    f.close();
    buffer_.clear();
  }
  std::uint64_t count() const { return count_; }
  const std::filesystem::path &path() const { return path_; }

private:
  std::filesystem::path path_;
  std::vector<PackedPoint> buffer_;
  std::uint64_t count_ = 0;
};

// Builds one chunk subtree from its spill file and writes its node blobs, in
// name order, to a result file.
ChunkResult build_chunk(const Frame &frame, const ChunkPlan &plan, const SpillWriter &spill,
                        const std::filesystem::path &result_path, std::int32_t chunk_id) {
  std::vector<PackedPoint> points(static_cast<std::size_t>(spill.count()));
  {
    FileHandle f(spill.path(), "rb");
    f.read(points.data(), points.size() * sizeof(PackedPoint));
  }
  std::filesystem::remove(spill.path());
  PlacementTree tree(frame, plan.name, plan.level, plan.prefix);
  for (const auto &p : points)
    tree.insert(p);
  std::vector<PackedPoint>().swap(points);

  ChunkResult result;
  result.nodes = collect_nodes(tree.nodes());
  FileHandle out(result_path, "wb");
  for (auto &n : result.nodes) {
    out.write(n.memory->data(), n.memory->size() * sizeof(PackedPoint));
    n.memory = nullptr;
    n.chunk = chunk_id;
  }
  out.close();
  return result;
}

Aabb scan_bounds(PointStream &input) {
  Aabb bounds;
  ColorPoint p;
  input.rewind();
  while (input.next(p))
    bounds.extend(p.position);
  return bounds;
}

void write_text_file(const std::filesystem::path &path, std::string_view text) {
  FileHandle f(path, "wb");
  f.write(text.data(), text.size());
  f.close();
}

} // namespace

BuildResult build_octree(PointStream &input, const std::optional<Aabb> &bounds,
                         const BuildConfig &cfg, const std::filesystem::path &out_dir) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);

  const Aabb tight = bounds ? *bounds : scan_bounds(input);
  if (tight.isEmpty())
    throw ValidationError("build_octree: input is empty");
  if (!all_finite(tight.min()) || !all_finite(tight.max()))
    throw ValidationError("build_octree: non-finite bounds");

  const Aabb cube = root_cube_for(tight);
  Frame frame;
  frame.origin = cube.min();
  frame.edge = cube.sizes().x();
  frame.root_spacing = cfg.root_spacing ? *cfg.root_spacing : auto_root_spacing(cube);
  frame.max_level = cfg.max_level;
  frame.leaf_capacity = cfg.leaf_capacity;
  frame.cell_scale = std::ldexp(1.0, cfg.max_level) / frame.edge;
  if (frame.edge / frame.root_spacing > std::ldexp(1.0, kGridBits - 3))
    throw ValidationError(fmt::format("root_spacing {} too small for a {} m root cube",
                                      frame.root_spacing, frame.edge));

  const unsigned threads =
      cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  const std::uint64_t chunk_capacity =
      std::max<std::uint64_t>(1, cfg.memory_budget / (kChunkBytesPerPoint * (threads + 1)));
  const int count_level = std::min(cfg.max_level, 10);

  // Pass 1: count points per Morton cell and plan chunks.
  ChunkPlanner planner(frame, count_level, chunk_capacity);
  {
    input.rewind();
    ColorPoint p;
    std::uint64_t index = 0;
    while (input.next(p)) {
      if (!tight.contains(p.position))
        throw ValidationError(
            fmt::format("build_octree: point index {} lies outside the declared bounds", index));
      planner.count(frame.cell(frame.position(pack_point(p, frame.origin))));
      ++index;
    }
    planner.finish_counting();
  }
  std::vector<ChunkPlan> top_plan;
  std::vector<ChunkPlan> chunk_plan;
  planner.plan(top_plan, chunk_plan);
  spdlog::info("build: {} points, root cube edge {:.3f} m, root spacing {:.4f} m, {} top nodes, {} "
           "chunks (capacity {})",
           planner.total(), frame.edge, frame.root_spacing, top_plan.size(), chunk_plan.size(),
           chunk_capacity);

  BuildResult result;
  std::vector<NodeOut> all_nodes;
  PlacementTree top(frame, "r", 0, Cell{0, 0, 0});
  const std::filesystem::path tmp_dir = out_dir / ".build-tmp";
  std::vector<ChunkResult> chunk_results;

  const bool in_memory = top_plan.empty();
  if (in_memory) {
    // Whole cloud fits one chunk: place straight from the input.
    input.rewind();
    ColorPoint p;
    while (input.next(p))
      top.insert(pack_point(p, frame.origin));
    all_nodes = collect_nodes(top.nodes());
  } else {
    std::filesystem::create_directories(tmp_dir);
    // Materialise the top tree and chunk placeholders.
    absl::flat_hash_map<std::string, std::int32_t> index_of{{"r", 0}};
    std::vector<std::string> names;
    for (const auto &t : top_plan)
      names.push_back(t.name);
    for (const auto &c : chunk_plan)
      names.push_back(c.name);
    std::sort(names.begin(), names.end());
    for (const auto &name : names) {
      if (name == "r")
        continue;
      const auto parent = index_of.at(std::string(parent_name(name)));
      index_of[name] = top.add_child(parent, name.back() - '0');
    }
    std::vector<SpillWriter> spills;
    spills.reserve(chunk_plan.size());
    for (std::size_t i = 0; i < chunk_plan.size(); ++i) {
      top.nodes()[static_cast<std::size_t>(index_of.at(chunk_plan[i].name))].chunk =
          static_cast<std::int32_t>(i);
      spills.emplace_back(tmp_dir / fmt::format("spill-{}.bin", i));
    }

    // Pass 2: top-down placement through the top tree, spilling the rest.
    input.rewind();
    ColorPoint p;
    while (input.next(p)) {
      const PackedPoint rec = pack_point(p, frame.origin);
      const std::int32_t chunk = top.insert(rec);
      if (chunk >= 0)
        spills[static_cast<std::size_t>(chunk)].append(rec);
    }
    for (auto &s : spills)
      s.flush();

    // Pass 3: chunk subtrees, possibly in parallel. Results are keyed by
    // chunk id, so scheduling order does not affect the output.
    chunk_results.resize(chunk_plan.size());
    std::atomic<std::size_t> next_chunk{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
      for (;;) {
        const std::size_t i = next_chunk.fetch_add(1);
        if (i >= chunk_plan.size())
          return;
        try {
          if (spills[i].count() > 0)
            chunk_results[i] = build_chunk(frame, chunk_plan[i], spills[i],
                                           tmp_dir / fmt::format("chunk-{}.bin", i),
                                           static_cast<std::int32_t>(i));
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure)
            failure = std::current_exception();
          next_chunk = chunk_plan.size();
          return;
        }
      }
    };
    {
      std::vector<std::jthread> pool;
      for (unsigned t = 1; t < std::min<std::size_t>(threads, chunk_plan.size()); ++t)
        pool.emplace_back(worker);
      worker();
    }
    if (failure)
      std::rethrow_exception(failure);

    all_nodes = collect_nodes(top.nodes());
    for (auto &r : chunk_results)
      for (auto &n : r.nodes)
        all_nodes.push_back(std::move(n));
    std::sort(all_nodes.begin(), all_nodes.end(),
              [](const NodeOut &a, const NodeOut &b) { return a.name < b.name; });
  }
  result.chunk_count = chunk_plan.size();

  // Hierarchy records.
  absl::flat_hash_map<std::string_view, std::size_t> position;
  for (std::size_t i = 0; i < all_nodes.size(); ++i)
    position[all_nodes[i].name] = i;
  result.nodes.resize(all_nodes.size());
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < all_nodes.size(); ++i) {
    const NodeOut &n = all_nodes[i];
    OctreeNode &out = result.nodes[i];
    out.name = n.name;
    out.level = n.level;
    out.bounds = node_bounds(cube, n.name);
    out.spacing = node_spacing(frame.root_spacing, n.level);
    out.num_points = n.num_points;
    out.byte_offset = offset;
    out.byte_size = n.num_points * kRecordBytes;
    offset += out.byte_size;
    if (n.level > 0) {
      const auto parent = position.find(parent_name(n.name));
      if (parent == position.end())
        throw Error(fmt::format("build_octree: node {} has no parent", n.name));
      result.nodes[parent->second].child_mask |=
          static_cast<std::uint8_t>(1u << (n.name.back() - '0'));
    }
    result.manifest.total_points += n.num_points;
    if (n.overflow)
      result.manifest.overflow_nodes.push_back(n.name);
  }

  // octree.bin in hierarchy order.
  {
    FileHandle bin(out_dir / kOctreeFile, "wb");
    std::vector<char> copy_buf(1 << 20);
    std::int32_t open_chunk = -1;
    std::unique_ptr<FileHandle> chunk_file;
    for (const NodeOut &n : all_nodes) {
      if (n.memory) {
        bin.write(n.memory->data(), n.memory->size() * sizeof(PackedPoint));
        continue;
      }
      if (n.chunk != open_chunk) {
        chunk_file = std::make_unique<FileHandle>(tmp_dir / fmt::format("chunk-{}.bin", n.chunk),
                                                  "rb");
        open_chunk = n.chunk;
      }
      std::uint64_t left = n.num_points * kRecordBytes;
      while (left > 0) {
        const auto step = static_cast<std::size_t>(std::min<std::uint64_t>(left, copy_buf.size()));
        chunk_file->read(copy_buf.data(), step);
        bin.write(copy_buf.data(), step);
        left -= step;
      }
    }
    chunk_file.reset();
    bin.close();
  }
  if (!in_memory)
    std::filesystem::remove_all(tmp_dir);

  const std::string hierarchy = hierarchy_to_json(result.nodes);
  write_text_file(out_dir / kHierarchyFile, hierarchy);

  LodManifest &m = result.manifest;
  m.version = kLodFormatVersion;
  m.bounds = cube;
  m.root_spacing = frame.root_spacing;
  m.record = std::string(kRecordLayout);
  m.hierarchy_digest = "sha256:" + sha256_hex(hierarchy);
  m.max_level = cfg.max_level;
  write_text_file(out_dir / kManifestFile, manifest_to_json(m));
  return result;
}

} // namespace labtwin
