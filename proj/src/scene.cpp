#include "isac/scene.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace isac {

const char* to_string(BoxKind k) { return k == BoxKind::Building ? "building" : "vehicle"; }

const char* to_string(NodeKind k) {
  switch (k) {
    case NodeKind::BS: return "bs";
    case NodeKind::UE: return "ue";
    case NodeKind::UAV: return "uav";
  }
  return "?";
}

bool WorldBox::contains(const Vec3& p, double pad) const {
  const Vec3 hi = max_corner();
  for (int a = 0; a < 3; ++a) {
    if (p[a] < min_corner[a] - pad || p[a] > hi[a] + pad) return false;
  }
  return true;
}

bool WorldBox::overlaps(const WorldBox& other, double clearance) const {
  const Vec3 a_hi = max_corner();
  const Vec3 b_hi = other.max_corner();
  for (int a = 0; a < 3; ++a) {
    if (!(min_corner[a] < b_hi[a] + clearance && other.min_corner[a] < a_hi[a] + clearance)) return false;
  }
  return true;
}

const SensingNode& Scene::node(int id) const {
  for (const auto& n : nodes)
    if (n.id == id) return n;
  throw Error("scene has no node with id " + std::to_string(id));
}

bool Scene::operator==(const Scene& o) const {
  if (seed != o.seed || world != o.world || boxes.size() != o.boxes.size() || nodes.size() != o.nodes.size())
    return false;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto &a = boxes[i], &b = o.boxes[i];
    if (a.min_corner != b.min_corner || a.size != b.size || a.velocity != b.velocity || a.kind != b.kind)
      return false;
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto &a = nodes[i], &b = o.nodes[i];
    if (a.id != b.id || a.kind != b.kind || a.position != b.position || a.orientation != b.orientation)
      return false;
  }
  return true;
}

Vec3 bs_orientation_for_yaw(double yaw) {
  Mat3 r;
  r.col(0) = Vec3(std::sin(yaw), -std::cos(yaw), 0.0);
  r.col(1) = Vec3(0.0, 0.0, -1.0);
  r.col(2) = Vec3(std::cos(yaw), std::sin(yaw), 0.0);
  return euler_zyx_from_rotation(r);
}

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double uniform(std::mt19937_64& rng, const Range& r) {
  return r.hi > r.lo ? uniform(rng, r.lo, r.hi) : r.lo;
}

[[noreturn]] void placement_failure(const char* what, int index, int retries) {
  std::ostringstream os;
  os << "scene placement failure: could not place " << what << " #" << index << " after " << retries
     << " attempts (world too crowded)";
  throw Error(os.str());
}

bool free_of_boxes(const std::vector<WorldBox>& boxes, const WorldBox& candidate, double clearance) {
  for (const auto& b : boxes)
    if (b.overlaps(candidate, clearance)) return false;
  return true;
}

}  // namespace

Scene generate_scene(const SceneConfig& cfg, std::uint64_t seed) {
  require((cfg.world.array() > 0.0).all(), "world volume must be positive");
  require(cfg.buildings_min >= 0 && cfg.buildings_max >= cfg.buildings_min, "invalid building count range");
  require(cfg.vehicles_min >= 0 && cfg.vehicles_max >= cfg.vehicles_min, "invalid vehicle count range");
  require(cfg.n_bs >= 0 && cfg.n_ue >= 0 && cfg.n_uav >= 0, "node counts must be non-negative");

  std::mt19937_64 rng(mix_seed(seed, 1));
  Scene scene;
  scene.world = cfg.world;
  scene.seed = seed;

  const int n_build = std::uniform_int_distribution<int>(cfg.buildings_min, cfg.buildings_max)(rng);
  const int n_veh = std::uniform_int_distribution<int>(cfg.vehicles_min, cfg.vehicles_max)(rng);

  for (int i = 0; i < n_build; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_retries && !placed; ++attempt) {
      WorldBox b;
      b.kind = BoxKind::Building;
      b.size = Vec3(uniform(rng, cfg.building_footprint), uniform(rng, cfg.building_footprint),
                    std::min(uniform(rng, cfg.building_height), cfg.world.z()));
      if (b.size.x() > cfg.world.x() || b.size.y() > cfg.world.y()) continue;
      b.min_corner = Vec3(uniform(rng, 0.0, cfg.world.x() - b.size.x()),
                          uniform(rng, 0.0, cfg.world.y() - b.size.y()), 0.0);
      if (free_of_boxes(scene.boxes, b, cfg.box_clearance)) {
        scene.boxes.push_back(b);
        placed = true;
      }
    }
    if (!placed) placement_failure("building", i, cfg.max_retries);
  }

  for (int i = 0; i < n_veh; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_retries && !placed; ++attempt) {
      WorldBox b;
      b.kind = BoxKind::Vehicle;
      const bool along_x = std::uniform_int_distribution<int>(0, 1)(rng) == 0;
      b.size = along_x ? cfg.vehicle_size : Vec3(cfg.vehicle_size.y(), cfg.vehicle_size.x(), cfg.vehicle_size.z());
      const double speed = uniform(rng, cfg.vehicle_speed);
      const double sign = std::uniform_int_distribution<int>(0, 1)(rng) == 0 ? 1.0 : -1.0;
      b.velocity = along_x ? Vec3(sign * speed, 0.0, 0.0) : Vec3(0.0, sign * speed, 0.0);
      if (b.size.x() > cfg.world.x() || b.size.y() > cfg.world.y()) continue;
      b.min_corner = Vec3(uniform(rng, 0.0, cfg.world.x() - b.size.x()),
                          uniform(rng, 0.0, cfg.world.y() - b.size.y()), 0.0);
      if (free_of_boxes(scene.boxes, b, cfg.box_clearance)) {
        scene.boxes.push_back(b);
        placed = true;
      }
    }
    if (!placed) placement_failure("vehicle", i, cfg.max_retries);
  }

  const Vec3 centre = 0.5 * cfg.world;
  int next_id = 0;
  auto place_node = [&](NodeKind kind, int index) {
    const double c = cfg.node_clearance;
    for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
      SensingNode n;
      n.kind = kind;
      double z = cfg.ue_height;
      if (kind == NodeKind::BS) z = uniform(rng, cfg.bs_height);
      if (kind == NodeKind::UAV) z = uniform(rng, cfg.uav_height);
      z = std::min(z, cfg.world.z() - 1e-6);
      n.position = Vec3(uniform(rng, std::min(c, 0.5 * cfg.world.x()), std::max(cfg.world.x() - c, 0.5 * cfg.world.x())),
                        uniform(rng, std::min(c, 0.5 * cfg.world.y()), std::max(cfg.world.y() - c, 0.5 * cfg.world.y())), z);
      if (kind == NodeKind::BS) {
        const double bearing = std::atan2(centre.y() - n.position.y(), centre.x() - n.position.x());
        const double jitter = deg2rad(uniform(rng, -cfg.bs_yaw_jitter_deg, cfg.bs_yaw_jitter_deg));
        n.orientation = bs_orientation_for_yaw(bearing + jitter);
      }
      bool free = true;
      for (const auto& b : scene.boxes)
        if (b.contains(n.position, c)) free = false;
      if (free) {
        n.id = next_id++;
        scene.nodes.push_back(n);
        return;
      }
    }
    placement_failure(to_string(kind), index, cfg.max_retries);
  };
  for (int i = 0; i < cfg.n_bs; ++i) place_node(NodeKind::BS, i);
  for (int i = 0; i < cfg.n_ue; ++i) place_node(NodeKind::UE, i);
  for (int i = 0; i < cfg.n_uav; ++i) place_node(NodeKind::UAV, i);
  return scene;
}

Vec3 Scatterer::normal() const {
  Vec3 n = Vec3::Zero();
  if (host_face >= 0) n[host_face / 2] = (host_face % 2 == 0) ? -1.0 : 1.0;
  return n;
}

ScattererSet sample_scatterers(const Scene& scene, double surface_density, double reflect_var) {
  require(surface_density > 0.0, "surface density must be positive");
  require(reflect_var > 0.0, "reflectivity variance must be positive");
  const double spacing = 1.0 / std::sqrt(surface_density);
  ScattererSet out;
  for (std::size_t bi = 0; bi < scene.boxes.size(); ++bi) {
    const WorldBox& box = scene.boxes[bi];
    for (int face = 0; face < 6; ++face) {
      const int axis = face / 2;
      const bool max_side = face % 2 == 1;
      if (axis == 2 && !max_side && box.min_corner.z() <= 1e-9) continue;  // on the ground
      const int u = (axis + 1) % 3;
      const int v = (axis + 2) % 3;
      // Cell-centred lattice, so neighbouring scatterers stay about one spacing apart.
      const long nu = std::max(1L, std::lround(box.size[u] / spacing));
      const long nv = std::max(1L, std::lround(box.size[v] / spacing));
      for (long i = 0; i < nu; ++i)
        for (long j = 0; j < nv; ++j) {
          Scatterer s;
          s.position[axis] = box.min_corner[axis] + (max_side ? box.size[axis] : 0.0);
          s.position[u] = box.min_corner[u] + (i + 0.5) * box.size[u] / nu;
          s.position[v] = box.min_corner[v] + (j + 0.5) * box.size[v] / nv;
          s.velocity = box.velocity;
          s.reflect_var = reflect_var;
          s.host_box = static_cast<int>(bi);
          s.host_face = face;
          out.push_back(s);
        }
    }
  }
  return out;
}

bool segment_hits_box(const Vec3& a, const Vec3& b, const WorldBox& box, double eps) {
  const Vec3 d = b - a;
  const Vec3 lo = box.min_corner;
  const Vec3 hi = box.max_corner();
  double t0 = eps;
  double t1 = 1.0 - eps;
  for (int ax = 0; ax < 3; ++ax) {
    if (std::abs(d[ax]) < 1e-15) {
      if (a[ax] <= lo[ax] || a[ax] >= hi[ax]) return false;
      continue;
    }
    double ta = (lo[ax] - a[ax]) / d[ax];
    double tb = (hi[ax] - a[ax]) / d[ax];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 >= t1) return false;
  }
  return true;
}

bool segment_clear(const Scene& scene, const Vec3& a, const Vec3& b, int skip_box) {
  for (std::size_t i = 0; i < scene.boxes.size(); ++i) {
    if (static_cast<int>(i) == skip_box) continue;
    if (segment_hits_box(a, b, scene.boxes[i])) return false;
  }
  return true;
}

namespace {

bool faces_towards(const Scatterer& s, const Vec3& x) { return (x - s.position).dot(s.normal()) > 0.0; }

}  // namespace

std::vector<VisibilityRecord> visible_scatterers(const Scene& scene, const ScattererSet& scatterers,
                                                 const SensingNode& tx, const SensingNode& rx, Period period,
                                                 const VisibilityOptions& opts) {
  const double margin = deg2rad(opts.sector_margin_deg);
  auto arrival_ok = [&](const Vec3& from) {
    const Vec3 dir = rx.to_array_frame(from - rx.position);
    return in_sector(dir, margin);
  };
  std::vector<VisibilityRecord> out;

  if (period == Period::DL) {
    require(tx.id == rx.id && tx.kind == NodeKind::BS, "DL sensing requires a BS acting as both Tx and Rx");
    for (std::size_t i = 0; i < scatterers.size(); ++i) {
      const Scatterer& s = scatterers[i];
      const double r = (s.position - rx.position).norm();
      if (r < opts.min_range || !faces_towards(s, rx.position)) continue;
      if (!arrival_ok(s.position)) continue;
      if (!segment_clear(scene, s.position, rx.position, s.host_box)) continue;
      VisibilityRecord rec;
      rec.scatterer_index = static_cast<int>(i);
      rec.tx_id = tx.id;
      rec.rx_id = rx.id;
      rec.kind = PathKind::LoS;
      rec.r1 = r;
      out.push_back(rec);
    }
    return out;
  }

  require(tx.kind != NodeKind::BS && rx.kind == NodeKind::BS,
          "UL sensing requires a UE/UAV transmitter and a BS receiver");
  const double direct = (tx.position - rx.position).norm();
  if (direct >= opts.min_range && arrival_ok(tx.position) && segment_clear(scene, tx.position, rx.position)) {
    VisibilityRecord rec;
    rec.tx_id = tx.id;
    rec.rx_id = rx.id;
    rec.kind = PathKind::LoS;
    rec.r1 = direct;
    out.push_back(rec);
  }
  for (std::size_t i = 0; i < scatterers.size(); ++i) {
    const Scatterer& s = scatterers[i];
    const double r1 = (tx.position - s.position).norm();
    const double r2 = (s.position - rx.position).norm();
    if (r1 < opts.min_range || r2 < opts.min_range) continue;
    if (!faces_towards(s, tx.position) || !faces_towards(s, rx.position)) continue;
    if (!arrival_ok(s.position)) continue;
    if (!segment_clear(scene, tx.position, s.position, s.host_box)) continue;
    if (!segment_clear(scene, s.position, rx.position, s.host_box)) continue;
    VisibilityRecord rec;
    rec.scatterer_index = static_cast<int>(i);
    rec.tx_id = tx.id;
    rec.rx_id = rx.id;
    rec.kind = PathKind::NLoS;
    rec.r1 = r1;
    rec.r2 = r2;
    rec.plane_point = s.position;
    rec.plane_normal = s.normal();
    out.push_back(rec);
  }
  return out;
}

}  // namespace isac
