#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "isac/frames.hpp"
#include "isac/types.hpp"

namespace isac {

enum class BoxKind { Building, Vehicle };
enum class NodeKind { BS, UE, UAV };

const char* to_string(BoxKind k);
const char* to_string(NodeKind k);

/// Axis-aligned box. Buildings have zero velocity.
struct WorldBox {
  Vec3 min_corner = Vec3::Zero();
  Vec3 size = Vec3::Ones();
  Vec3 velocity = Vec3::Zero();
  BoxKind kind = BoxKind::Building;

  Vec3 max_corner() const { return min_corner + size; }
  double surface_area() const {
    return 2.0 * (size.x() * size.y() + size.y() * size.z() + size.x() * size.z());
  }
  bool contains(const Vec3& p, double pad = 0.0) const;
  bool overlaps(const WorldBox& other, double clearance = 0.0) const;
};

struct SensingNode {
  int id = 0;
  NodeKind kind = NodeKind::BS;
  Vec3 position = Vec3::Zero();
  /// Euler (alpha, beta, gamma) of the node frame; node x/y are the array
  /// row/column axes and node z is the array normal.
  Vec3 orientation = Vec3::Zero();

  Mat3 rotation() const { return rotation_zyx<double>(orientation); }
  /// World direction -> array frame.
  Vec3 to_array_frame(const Vec3& world_dir) const { return rotation().transpose() * world_dir; }
};

struct Scene {
  Vec3 world = Vec3(100.0, 100.0, 30.0);
  std::vector<WorldBox> boxes;
  std::vector<SensingNode> nodes;
  std::uint64_t seed = 0;

  const SensingNode& node(int id) const;
  bool operator==(const Scene& other) const;
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct SceneConfig {
  Vec3 world = Vec3(100.0, 100.0, 30.0);
  int buildings_min = 5;
  int buildings_max = 10;
  int vehicles_min = 2;
  int vehicles_max = 5;
  Range building_footprint{8.0, 20.0};
  Range building_height{5.0, 20.0};
  Vec3 vehicle_size = Vec3(4.5, 2.0, 1.6);
  Range vehicle_speed{0.0, 15.0};
  double box_clearance = 1.0;
  int n_bs = 1;
  int n_ue = 2;
  int n_uav = 0;
  Range bs_height{20.0, 28.0};
  double ue_height = 1.5;
  Range uav_height{10.0, 25.0};
  /// Yaw jitter (deg) of the BS boresight around the world-centre bearing.
  double bs_yaw_jitter_deg = 30.0;
  double node_clearance = 1.0;
  int max_retries = 1000;
  double surface_density = 1.0;
  double reflect_var = 1.0;
};

/// Scene generation. Throws Error when a box or node cannot be placed
/// within config.max_retries attempts.
Scene generate_scene(const SceneConfig& config, std::uint64_t seed);

/// Orientation giving a BS a horizontal boresight at the given yaw with the
/// array column axis pointing down.
Vec3 bs_orientation_for_yaw(double yaw);

struct Scatterer {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  double reflect_var = 1.0;
  int host_box = -1;
  int host_face = -1;  ///< axis * 2 + (0: min side, 1: max side)

  Vec3 normal() const;
};

using ScattererSet = std::vector<Scatterer>;

/// Regular per-face sampling at spacing 1/sqrt(density): each exposed face
/// of extent (a, b) receives round(a/s) x round(b/s) cell-centred points,
/// at least one per side. Faces resting on the ground plane are not exposed.
ScattererSet sample_scatterers(const Scene& scene, double surface_density, double reflect_var = 1.0);

enum class PathKind { LoS, NLoS };

/// One propagation path. DL echoes and the UL direct path are LoS records
/// (single range); UL single-bounce paths carry both legs and the host face
/// plane of the reflecting scatterer.
struct VisibilityRecord {
  int scatterer_index = -1;  ///< -1 for the UL direct path
  int tx_id = 0;
  int rx_id = 0;
  PathKind kind = PathKind::LoS;
  double r1 = 0.0;
  std::optional<double> r2;
  Vec3 plane_point = Vec3::Zero();
  Vec3 plane_normal = Vec3::Zero();
};

struct VisibilityOptions {
  /// Minimum angular distance (deg) of an accepted arrival from the edges of
  /// the receive array's canonical angle domain.
  double sector_margin_deg = 3.0;
  double min_range = 1.0;
};

/// Ray-box slab test on the open segment a->b; returns true when the segment
/// passes through the interior of the box for parameters in (eps, 1 - eps).
bool segment_hits_box(const Vec3& a, const Vec3& b, const WorldBox& box, double eps = 1e-9);

/// True when no box other than `skip_box` blocks the segment.
bool segment_clear(const Scene& scene, const Vec3& a, const Vec3& b, int skip_box = -1);

std::vector<VisibilityRecord> visible_scatterers(const Scene& scene, const ScattererSet& scatterers,
                                                 const SensingNode& tx, const SensingNode& rx,
                                                 Period period, const VisibilityOptions& opts = {});

}  // namespace isac
