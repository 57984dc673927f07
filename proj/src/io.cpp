#include "isac/io.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace isac {

void write_file_atomic(const std::string& path, const std::string& bytes) {
  const fs::path target(path);
  std::error_code ec;
  if (target.has_parent_path()) {
    fs::create_directories(target.parent_path(), ec);
    if (ec) throw Error("cannot create directory " + target.parent_path().string() + ": " + ec.message());
  }
  const fs::path tmp = target.string() + ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error("cannot move " + tmp.string() + " to " + path + ": " + ec.message());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 json_vec(const json& j, const char* key) {
  const json& a = j.at(key);
  require(a.is_array() && a.size() == 3, std::string("field '") + key + "' must be a 3-vector");
  return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

BoxKind box_kind(const std::string& s) {
  if (s == "building") return BoxKind::Building;
  if (s == "vehicle") return BoxKind::Vehicle;
  throw Error("unknown box kind '" + s + "'");
}

NodeKind node_kind(const std::string& s) {
  if (s == "bs") return NodeKind::BS;
  if (s == "ue") return NodeKind::UE;
  if (s == "uav") return NodeKind::UAV;
  throw Error("unknown node kind '" + s + "'");
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

std::string scene_to_json(const Scene& scene) {
  json j;
  j["world"] = vec_json(scene.world);
  j["seed"] = scene.seed;
  j["boxes"] = json::array();
  for (const auto& b : scene.boxes)
    j["boxes"].push_back({{"kind", to_string(b.kind)},
                          {"min_corner", vec_json(b.min_corner)},
                          {"size", vec_json(b.size)},
                          {"velocity", vec_json(b.velocity)}});
  j["nodes"] = json::array();
  for (const auto& n : scene.nodes)
    j["nodes"].push_back({{"id", n.id},
                          {"kind", to_string(n.kind)},
                          {"position", vec_json(n.position)},
                          {"orientation", vec_json(n.orientation)}});
  return j.dump(2) + "\n";
}

Scene scene_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    Scene s;
    s.world = json_vec(j, "world");
    s.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& b : j.at("boxes")) {
      WorldBox box;
      box.kind = box_kind(b.at("kind").get<std::string>());
      box.min_corner = json_vec(b, "min_corner");
      box.size = json_vec(b, "size");
      box.velocity = json_vec(b, "velocity");
      require((box.size.array() > 0.0).all(), "box size must be positive");
      s.boxes.push_back(box);
    }
    for (const auto& n : j.at("nodes")) {
      SensingNode node;
      node.id = n.at("id").get<int>();
      node.kind = node_kind(n.at("kind").get<std::string>());
      node.position = json_vec(n, "position");
      node.orientation = json_vec(n, "orientation");
      s.nodes.push_back(node);
    }
    return s;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed scene document: ") + e.what());
  }
}

void save_scene(const std::string& path, const Scene& scene) { write_file_atomic(path, scene_to_json(scene)); }

Scene load_scene(const std::string& path) {
  try {
    return scene_from_json(read_file(path));
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

std::string format_pc4d(const PointCloud4D& cloud) {
  std::string out = "# isac-pc4d v1 count=" + std::to_string(cloud.size()) + "\n";
  for (const auto& p : cloud.points)
    out += num(p.position.x()) + ' ' + num(p.position.y()) + ' ' + num(p.position.z()) + ' ' + num(p.velocity) +
           ' ' + std::to_string(p.node_id) + '\n';
  return out;
}

PointCloud4D parse_pc4d(const std::string& text) {
  std::istringstream in(text);
  std::string header;
  std::getline(in, header);
  std::size_t count = 0;
  require(std::sscanf(header.c_str(), "# isac-pc4d v1 count=%zu", &count) == 1, "missing isac-pc4d header");
  PointCloud4D cloud;
  cloud.points.reserve(count);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    double x, y, z, v;
    int id;
    require(static_cast<bool>(ls >> x >> y >> z >> v >> id), "malformed point line: " + line);
    cloud.add({x, y, z}, v, id);
  }
  require(cloud.size() == count, "point count does not match the header");
  return cloud;
}

void save_pc4d(const std::string& path, const PointCloud4D& cloud) { write_file_atomic(path, format_pc4d(cloud)); }

PointCloud4D load_pc4d(const std::string& path) {
  try {
    return parse_pc4d(read_file(path));
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

std::string format_ply(const PointCloud4D& cloud) {
  std::string out = "ply\nformat ascii 1.0\nelement vertex " + std::to_string(cloud.size()) +
                    "\nproperty float x\nproperty float y\nproperty float z\nproperty float velocity\n"
                    "property int node_id\nend_header\n";
  for (const auto& p : cloud.points)
    out += num(p.position.x()) + ' ' + num(p.position.y()) + ' ' + num(p.position.z()) + ' ' + num(p.velocity) +
           ' ' + std::to_string(p.node_id) + '\n';
  return out;
}

void save_grid(const std::string& path, const Grid3D& grid) {
  const std::int32_t n = grid.n;
  std::string bytes(sizeof n + sizeof(float) * grid.values.size(), '\0');
  std::memcpy(bytes.data(), &n, sizeof n);
  auto* out = reinterpret_cast<float*>(bytes.data() + sizeof n);
  for (double v : grid.values) *out++ = static_cast<float>(v);
  write_file_atomic(path, bytes);
}

Grid3D load_grid(const std::string& path) {
  const std::string bytes = read_file(path);
  std::int32_t n = 0;
  require(bytes.size() >= sizeof n, "truncated grid dump: " + path);
  std::memcpy(&n, bytes.data(), sizeof n);
  Grid3D g(n);
  require(bytes.size() == sizeof n + sizeof(float) * g.values.size(), "grid dump size mismatch: " + path);
  const auto* in = reinterpret_cast<const float*>(bytes.data() + sizeof n);
  for (auto& v : g.values) v = *in++;
  return g;
}

void save_matrix_f32(const std::string& path, const Eigen::MatrixXd& m) {
  const std::int32_t dims[2] = {static_cast<std::int32_t>(m.rows()), static_cast<std::int32_t>(m.cols())};
  std::string bytes(sizeof dims + sizeof(float) * static_cast<std::size_t>(m.size()), '\0');
  std::memcpy(bytes.data(), dims, sizeof dims);
  auto* out = reinterpret_cast<float*>(bytes.data() + sizeof dims);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) *out++ = static_cast<float>(m(i, j));
  write_file_atomic(path, bytes);
}

Points positions_of(const PointCloud4D& cloud) {
  Points pts;
  pts.reserve(cloud.size());
  for (const auto& p : cloud.points) pts.push_back(p.position);
  return pts;
}

PointCloud4D cloud_from_positions(const Points& pts, int node_id) {
  PointCloud4D c;
  for (const auto& p : pts) c.add(p, 0.0, node_id);
  return c;
}

}  // namespace isac
