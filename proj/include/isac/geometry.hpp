#pragma once

#include <cstdint>
#include <vector>

#include "isac/doa.hpp"
#include "isac/frames.hpp"
#include "isac/types.hpp"

namespace isac {

/// Rigid transform world = R(euler) * local + offset.
struct Pose {
  Vec3 offset = Vec3::Zero();
  Vec3 euler = Vec3::Zero();  ///< (alpha, beta, gamma), Z-Y-X composition

  Mat3 rotation() const { return rotation_zyx<double>(euler); }
  Vec3 apply(const Vec3& p) const { return rotation() * p + offset; }
};

Pose inverse(const Pose& pose);

struct CloudPoint {
  Vec3 position = Vec3::Zero();
  double velocity = 0.0;
  int node_id = 0;
  std::vector<int> provenance;  ///< contributing node ids, ascending
};

struct PointCloud4D {
  std::vector<CloudPoint> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  void add(const Vec3& p, double v, int node) { points.push_back({p, v, node, {node}}); }
  Eigen::Matrix3Xd positions() const;
};

PointCloud4D to_world(const PointCloud4D& cloud, const Pose& pose);

/// Apparent source of a detection: the DoA ray from the receiving array,
/// scaled by the estimated (total) range.
Vec3 vue_position(const Detection4D& det, const Pose& rx_pose);

struct MirrorProblem {
  Vec3 bs = Vec3::Zero();   ///< x_0
  Vec3 ue = Vec3::Zero();   ///< x_1
  Vec3 vue = Vec3::Zero();  ///< x_vl
};

/// Intersection of line (bs, vue) with the perpendicular bisector plane of
/// segment (ue, vue).
Vec3 resolve_mirror(const MirrorProblem& problem);

/// Reflection of a point across the plane (point, unit normal).
Vec3 mirror_point(const Vec3& p, const Vec3& plane_point, const Vec3& plane_normal);

double growth_rate(double count_before, double count_after);

struct FusionRadiusOptions {
  int probes = 10;
  double r_max = 10.0;
  double dr = 0.1;
  double eps_h = 0.05;
  int run = 3;
  std::uint64_t seed = 0;
};

/// Thrown when no plateau is found; carries the mean growth curve.
class PlateauError : public Error {
 public:
  PlateauError(const std::string& what, std::vector<double> curve) : Error(what), curve_(std::move(curve)) {}
  const std::vector<double>& curve() const { return curve_; }

 private:
  std::vector<double> curve_;
};

struct FusionRadius {
  double radius = 0.0;
  std::vector<double> mean_growth;  ///< h at r = dr, 2 dr, ...
};

/// Mean growth of neighbour counts around random probe points; the radius is
/// the first step of the first run of `run` consecutive steps with mean growth
/// below eps_h after growth has started.
FusionRadius select_fusion_radius(const PointCloud4D& cloud, const FusionRadiusOptions& opts = {});

/// Single-linkage clustering at distance < radius; each cluster becomes its
/// centroid carrying the mean velocity and the union of provenance. Clusters
/// whose centroid lies farther than radius from a member are split by greedy
/// leader clustering at radius / 2.
PointCloud4D fuse_data_level(const std::vector<PointCloud4D>& clouds, double radius);

}  // namespace isac
