#include "labtwin/lod_format.hpp"

#include "labtwin/digest.hpp"
#include "labtwin/error.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace labtwin {

using ojson = nlohmann::ordered_json;

namespace {

std::string slurp(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError(fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

ojson vec_json(const Vec3 &v) { return ojson::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const ojson &j, std::string_view what) {
  if (!j.is_array() || j.size() != 3)
    throw FormatError(fmt::format("{}: expected an array of 3 numbers", what));
  Vec3 v;
  for (int i = 0; i < 3; ++i)
    v[i] = j.at(static_cast<std::size_t>(i)).get<double>();
  return v;
}

} // namespace

const OctreeNode *LodDataset::find(std::string_view name) const {
  const auto it = std::lower_bound(nodes.begin(), nodes.end(), name,
                                   [](const OctreeNode &n, std::string_view v) { return n.name < v; });
  return it != nodes.end() && it->name == name ? &*it : nullptr;
}

std::string manifest_to_json(const LodManifest &m) {
  ojson j;
  j["version"] = m.version;
  j["bounds"] = {{"min", vec_json(m.bounds.min())}, {"max", vec_json(m.bounds.max())}};
  j["root_spacing"] = m.root_spacing;
  j["total_points"] = m.total_points;
  j["record"] = m.record;
  j["hierarchy_digest"] = m.hierarchy_digest;
  j["max_level"] = m.max_level;
  j["overflow_nodes"] = m.overflow_nodes;
  return j.dump(2) + "\n";
}

std::string hierarchy_to_json(std::span<const OctreeNode> nodes) {
  std::string out = "[";
  bool first = true;
  for (const auto &n : nodes) {
    ojson j;
    j["name"] = n.name;
    j["level"] = n.level;
    j["num_points"] = n.num_points;
    j["byte_offset"] = n.byte_offset;
    j["byte_size"] = n.byte_size;
    j["child_mask"] = n.child_mask;
    out += first ? "\n" : ",\n";
    out += j.dump();
    first = false;
  }
  out += "\n]\n";
  return out;
}

LodDataset load_hierarchy(const std::filesystem::path &dir) {
  LodDataset ds;
  ds.dir = dir;
  const std::filesystem::path manifest_path = dir / kManifestFile;
  const std::filesystem::path hierarchy_path = dir / kHierarchyFile;

  ojson mj;
  try {
    mj = ojson::parse(slurp(manifest_path));
    LodManifest &m = ds.manifest;
    m.version = mj.at("version").get<int>();
    if (m.version != kLodFormatVersion)
      throw ValidationError(fmt::format("{}: format version {} (this build reads {})",
                                        manifest_path.string(), m.version, kLodFormatVersion));
    m.bounds = Aabb(vec_from(mj.at("bounds").at("min"), "bounds.min"),
                    vec_from(mj.at("bounds").at("max"), "bounds.max"));
    m.root_spacing = mj.at("root_spacing").get<double>();
    m.total_points = mj.at("total_points").get<std::uint64_t>();
    m.record = mj.at("record").get<std::string>();
    m.hierarchy_digest = mj.at("hierarchy_digest").get<std::string>();
    m.max_level = mj.value("max_level", 0);
    if (mj.contains("overflow_nodes"))
      m.overflow_nodes = mj.at("overflow_nodes").get<std::vector<std::string>>();
    if (m.record != kRecordLayout)
      throw ValidationError(fmt::format("{}: unsupported record layout '{}'",
                                        manifest_path.string(), m.record));
  } catch (const nlohmann::json::exception &e) {
    throw FormatError(fmt::format("{}: {}", manifest_path.string(), e.what()));
  }

  const std::string hierarchy = slurp(hierarchy_path);
  const std::string digest = "sha256:" + sha256_hex(hierarchy);
  if (digest != ds.manifest.hierarchy_digest)
    throw ValidationError(fmt::format("{}: digest mismatch (manifest {}, file {})",
                                      hierarchy_path.string(), ds.manifest.hierarchy_digest,
                                      digest));

  const Aabb &cube = ds.manifest.bounds;
  std::uint64_t expected_offset = 0;
  std::uint64_t total = 0;
  try {
    const auto hj = ojson::parse(hierarchy);
    if (!hj.is_array())
      throw FormatError(fmt::format("{}: expected an array", hierarchy_path.string()));
    ds.nodes.reserve(hj.size());
    for (const auto &e : hj) {
      OctreeNode n;
      n.name = e.at("name").get<std::string>();
      if (!is_valid_node_name(n.name))
        throw FormatError(fmt::format("{}: bad node name '{}'", hierarchy_path.string(), n.name));
      n.level = e.at("level").get<int>();
      n.num_points = e.at("num_points").get<std::uint64_t>();
      n.byte_offset = e.at("byte_offset").get<std::uint64_t>();
      n.byte_size = e.at("byte_size").get<std::uint64_t>();
      n.child_mask = e.at("child_mask").get<std::uint8_t>();
      if (n.level != static_cast<int>(n.name.size()) - 1 ||
          n.byte_size != n.num_points * kRecordBytes || n.byte_offset != expected_offset)
        throw FormatError(fmt::format("{}: node {} has inconsistent level/size/offset",
                                      hierarchy_path.string(), n.name));
      if (!ds.nodes.empty() && !(ds.nodes.back().name < n.name))
        throw FormatError(
            fmt::format("{}: nodes not sorted at {}", hierarchy_path.string(), n.name));
      n.bounds = node_bounds(cube, n.name);
      n.spacing = node_spacing(ds.manifest.root_spacing, n.level);
      expected_offset += n.byte_size;
      total += n.num_points;
      ds.nodes.push_back(std::move(n));
    }
  } catch (const nlohmann::json::exception &e) {
    throw FormatError(fmt::format("{}: {}", hierarchy_path.string(), e.what()));
  }
  if (total != ds.manifest.total_points)
    throw ValidationError(fmt::format("{}: total_points {} but nodes sum to {}",
                                      manifest_path.string(), ds.manifest.total_points, total));

  std::error_code ec;
  const auto bin_size = std::filesystem::file_size(ds.octree_path(), ec);
  if (ec)
    throw IoError(fmt::format("{}: {}", ds.octree_path().string(), ec.message()));
  if (bin_size != expected_offset)
    throw FormatError(fmt::format("{}: size {} bytes, hierarchy expects {}",
                                  ds.octree_path().string(), bin_size, expected_offset));
  return ds;
}

std::string read_node_blob(const LodDataset &dataset, const OctreeNode &node) {
  std::string blob(static_cast<std::size_t>(node.byte_size), '\0');
  std::FILE *f = std::fopen(dataset.octree_path().c_str(), "rb");
  if (!f)
    throw IoError(fmt::format("cannot open {}", dataset.octree_path().string()));
  const bool ok = std::fseek(f, static_cast<long>(node.byte_offset), SEEK_SET) == 0 &&
                  std::fread(blob.data(), 1, blob.size(), f) == blob.size();
  std::fclose(f);
  if (!ok)
    throw FormatError(fmt::format("{}: short read for node {}", dataset.octree_path().string(),
                                  node.name));
  return blob;
}

std::vector<ColorPoint> decode_node_blob(std::string_view blob, const Vec3 &origin) {
  if (blob.size() % kRecordBytes != 0)
    throw FormatError(fmt::format("node blob of {} bytes is not a multiple of {}", blob.size(),
                                  kRecordBytes));
  std::vector<ColorPoint> out(blob.size() / kRecordBytes);
  for (std::size_t i = 0; i < out.size(); ++i) {
    PackedPoint p;
    std::memcpy(&p, blob.data() + i * kRecordBytes, kRecordBytes);
    out[i] = unpack_point(p, origin);
  }
  return out;
}

std::vector<ColorPoint> read_node_points(const LodDataset &dataset, std::string_view name) {
  const OctreeNode *node = dataset.find(name);
  if (!node)
    throw ValidationError(fmt::format("unknown node '{}'", name));
  return decode_node_blob(read_node_blob(dataset, *node), dataset.manifest.bounds.min());
}

std::vector<ColorPoint> read_node_points(const std::filesystem::path &dir, std::string_view name) {
  return read_node_points(load_hierarchy(dir), name);
}

} // namespace labtwin
