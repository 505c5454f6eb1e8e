#include "labtwin/audit.hpp"

#include "labtwin/error.hpp"

#include <absl/container/flat_hash_map.h>
#include <fmt/format.h>

#include <bit>
#include <cstring>
#include <limits>

namespace labtwin {

void PointFingerprint::add(const PackedPoint &p) {
  ++count;
  position_bits[0] += std::bit_cast<std::uint32_t>(p.x);
  position_bits[1] += std::bit_cast<std::uint32_t>(p.y);
  position_bits[2] += std::bit_cast<std::uint32_t>(p.z);
  color_sum[0] += p.r;
  color_sum[1] += p.g;
  color_sum[2] += p.b;
}

PointFingerprint fingerprint_source(PointStream &input, const Vec3 &origin) {
  PointFingerprint fp;
  input.rewind();
  ColorPoint p;
  while (input.next(p))
    fp.add(pack_point(p, origin));
  return fp;
}

double min_pairwise_distance(const std::vector<Vec3> &points, double cell) {
  if (!(cell > 0))
    throw ValidationError("min_pairwise_distance: cell must be > 0");
  using Key = std::array<std::int64_t, 3>;
  absl::flat_hash_map<Key, std::vector<std::uint32_t>> grid;
  grid.reserve(points.size());
  const auto key_of = [cell](const Vec3 &p) {
    return Key{static_cast<std::int64_t>(std::floor(p.x() / cell)),
               static_cast<std::int64_t>(std::floor(p.y() / cell)),
               static_cast<std::int64_t>(std::floor(p.z() / cell))};
  };
  double best_sq = std::numeric_limits<double>::infinity();
  for (std::uint32_t i = 0; i < points.size(); ++i) {
    const Key k = key_of(points[i]);
    for (std::int64_t dx = -1; dx <= 1; ++dx)
      for (std::int64_t dy = -1; dy <= 1; ++dy)
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          auto it = grid.find(Key{k[0] + dx, k[1] + dy, k[2] + dz});
          if (it == grid.end())
            continue;
          for (std::uint32_t j : it->second)
            best_sq = std::min(best_sq, (points[i] - points[j]).squaredNorm());
        }
    grid[k].push_back(i);
  }
  return std::sqrt(best_sq);
}

AuditReport audit_dataset(const LodDataset &ds, const AuditOptions &options) {
  AuditReport report;
  const Aabb &root = ds.manifest.bounds;
  const double edge = root.sizes().maxCoeff();
  const double tol = edge * std::ldexp(1.0, -22);
  absl::flat_hash_map<std::string, const OctreeNode *> by_name;
  for (const auto &n : ds.nodes)
    by_name.emplace(n.name, &n);
  const auto is_overflow = [&](const std::string &name) {
    const auto &o = ds.manifest.overflow_nodes;
    return std::find(o.begin(), o.end(), name) != o.end();
  };

  for (const auto &node : ds.nodes) {
    ++report.nodes_checked;
    const auto fail = [&](std::string what) {
      report.failures.push_back(fmt::format("node {}: {}", node.name, what));
    };
    if (!is_valid_node_name(node.name) ||
        node.level != static_cast<int>(node.name.size()) - 1) {
      fail("name and level disagree");
      continue;
    }
    if (node.spacing != node_spacing(ds.manifest.root_spacing, node.level))
      fail(fmt::format("spacing {} is not root_spacing / 2^{}", node.spacing, node.level));
    if (node.level > 0) {
      const auto parent = by_name.find(std::string(parent_name(node.name)));
      if (parent == by_name.end())
        fail("parent missing");
      else if (!(parent->second->child_mask & (1u << (node.name.back() - '0'))))
        fail("parent child_mask does not list this node");
    }
    for (int o = 0; o < 8; ++o)
      if ((node.child_mask & (1u << o)) && !by_name.contains(child_name(node.name, o)))
        fail(fmt::format("child_mask lists missing child {}", o));

    const std::string blob = read_node_blob(ds, node);
    const Aabb cube = node_bounds(root, node.name);
    const Vec3 lo = cube.min() - root.min();
    const Vec3 hi = cube.max() - root.min();
    std::vector<Vec3> rel;
    rel.reserve(node.num_points);
    std::size_t outside = 0;
    std::size_t bad_pad = 0;
    for (std::size_t i = 0; i < node.num_points; ++i) {
      PackedPoint p;
      std::memcpy(&p, blob.data() + i * kRecordBytes, kRecordBytes);
      report.fingerprint.add(p);
      const Vec3 q(p.x, p.y, p.z);
      if (!all_finite(q) || (q.array() < lo.array() - tol).any() ||
          (q.array() > hi.array() + tol).any())
        ++outside;
      if (p.pad != 0)
        ++bad_pad;
      rel.push_back(q);
    }
    report.points_checked += node.num_points;
    if (outside)
      fail(fmt::format("{} of {} points outside the node cube", outside, node.num_points));
    if (bad_pad)
      fail(fmt::format("{} records with a non-zero pad byte", bad_pad));

    if (options.poisson && !outside && rel.size() > 1) {
      ++report.poisson_nodes_checked;
      const double d = min_pairwise_distance(rel, node.spacing);
      if (d < node.spacing) {
        const std::string msg =
            fmt::format("min distance {:.9g} below spacing {:.9g}", d, node.spacing);
        if (is_overflow(node.name))
          report.notes.push_back(fmt::format("node {} (overflow): {}", node.name, msg));
        else
          fail(msg);
      }
    }
  }
  if (options.source) {
    const PointFingerprint &src = *options.source;
    if (src.count != report.fingerprint.count)
      report.failures.push_back(fmt::format("partition: dataset holds {} points, source has {}",
                                            report.fingerprint.count, src.count));
    else if (!(src == report.fingerprint))
      report.failures.push_back("partition: point multiset differs from the source");
  }
  return report;
}

} // namespace labtwin
