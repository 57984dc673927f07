#include "isac/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

namespace isac {

Pose inverse(const Pose& pose) {
  const Mat3 rt = pose.rotation().transpose();
  return {-(rt * pose.offset), euler_zyx_from_rotation(rt)};
}

Eigen::Matrix3Xd PointCloud4D::positions() const {
  Eigen::Matrix3Xd m(3, static_cast<Eigen::Index>(points.size()));
  for (std::size_t i = 0; i < points.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = points[i].position;
  return m;
}

PointCloud4D to_world(const PointCloud4D& cloud, const Pose& pose) {
  const Mat3 r = pose.rotation();
  PointCloud4D out = cloud;
  for (auto& p : out.points) p.position = r * p.position + pose.offset;
  return out;
}

Vec3 vue_position(const Detection4D& det, const Pose& rx_pose) {
  require(det.range_m > 0.0, "detection range must be positive");
  return rx_pose.apply(det.direction.normalized() * det.range_m);
}

Vec3 resolve_mirror(const MirrorProblem& pb) {
  const Vec3 chord = pb.vue - pb.ue;
  const Vec3 ray = pb.vue - pb.bs;
  require(chord.norm() > 1e-12, "virtual source coincides with the transmitter");
  require(ray.norm() > 1e-12, "virtual source coincides with the receiver");
  const Vec3 u1 = chord.normalized();
  const Vec3 u0 = ray.normalized();
  const double denom = u1.dot(u0);
  require(std::abs(denom) > 1e-12, "receive ray is parallel to the mirror plane");
  const Vec3 mid = 0.5 * (pb.ue + pb.vue);
  return pb.bs + (u1.dot(mid - pb.bs) / denom) * u0;
}

Vec3 mirror_point(const Vec3& p, const Vec3& plane_point, const Vec3& plane_normal) {
  const Vec3 n = plane_normal.normalized();
  return p - 2.0 * n.dot(p - plane_point) * n;
}

double growth_rate(double count_before, double count_after) {
  require(count_before > 0.0, "growth rate needs a positive base count");
  return (count_after - count_before) / count_before;
}

FusionRadius select_fusion_radius(const PointCloud4D& cloud, const FusionRadiusOptions& opts) {
  require(!cloud.empty(), "fusion radius selection needs a nonempty cloud");
  require(opts.probes >= 1 && opts.run >= 1, "probe and run counts must be positive");
  require(opts.dr > 0.0 && opts.r_max >= opts.dr, "invalid radius scan");
  const int steps = static_cast<int>(std::floor(opts.r_max / opts.dr + 1e-9));
  const int n = static_cast<int>(cloud.size());

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix_seed(opts.seed, 0xF05E));
  std::shuffle(order.begin(), order.end(), rng);
  const int probes = std::min(opts.probes, n);

  FusionRadius out;
  out.mean_growth.assign(static_cast<std::size_t>(steps), 0.0);
  std::vector<double> dist(static_cast<std::size_t>(n));
  for (int s = 0; s < probes; ++s) {
    const Vec3 c = cloud.points[static_cast<std::size_t>(order[static_cast<std::size_t>(s)])].position;
    for (int i = 0; i < n; ++i) dist[static_cast<std::size_t>(i)] = (cloud.points[static_cast<std::size_t>(i)].position - c).norm();
    std::sort(dist.begin(), dist.end());
    double before = 1.0;
    for (int k = 0; k < steps; ++k) {
      const double r = (k + 1) * opts.dr;
      const double after = static_cast<double>(std::upper_bound(dist.begin(), dist.end(), r) - dist.begin());
      out.mean_growth[static_cast<std::size_t>(k)] += growth_rate(before, after) / probes;
      before = after;
    }
  }

  const auto& h = out.mean_growth;
  const auto onset = std::find_if(h.begin(), h.end(), [&](double v) { return v >= opts.eps_h; });
  if (onset == h.end()) {
    out.radius = opts.dr;
    return out;
  }
  int quiet = 0;
  for (int k = static_cast<int>(onset - h.begin()) + 1; k < steps; ++k) {
    quiet = h[static_cast<std::size_t>(k)] < opts.eps_h ? quiet + 1 : 0;
    if (quiet == opts.run) {
      out.radius = (k - opts.run + 2) * opts.dr;
      return out;
    }
  }
  std::ostringstream msg;
  msg << "no fusion-radius plateau up to " << opts.r_max << " m; mean growth:";
  for (double v : h) msg << ' ' << v;
  throw PlateauError(msg.str(), h);
}

namespace {

struct DisjointSet {
  std::vector<int> parent;
  explicit DisjointSet(int n) : parent(static_cast<std::size_t>(n)) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
  }
};

std::int64_t cell_key(std::int64_t x, std::int64_t y, std::int64_t z) {
  return (x * 73856093) ^ (y * 19349663) ^ (z * 83492791);
}

CloudPoint merge(const std::vector<const CloudPoint*>& members) {
  CloudPoint out;
  out.position.setZero();
  for (const CloudPoint* m : members) {
    out.position += m->position;
    out.velocity += m->velocity;
    out.provenance.insert(out.provenance.end(), m->provenance.begin(), m->provenance.end());
  }
  out.position /= static_cast<double>(members.size());
  out.velocity /= static_cast<double>(members.size());
  std::sort(out.provenance.begin(), out.provenance.end());
  out.provenance.erase(std::unique(out.provenance.begin(), out.provenance.end()), out.provenance.end());
  out.node_id = out.provenance.empty() ? members.front()->node_id : out.provenance.front();
  return out;
}

}  // namespace

PointCloud4D fuse_data_level(const std::vector<PointCloud4D>& clouds, double radius) {
  std::vector<const CloudPoint*> pts;
  for (const auto& c : clouds)
    for (const auto& p : c.points) pts.push_back(&p);
  PointCloud4D out;
  if (radius <= 0.0) {
    for (const CloudPoint* p : pts) out.points.push_back(*p);
    return out;
  }

  const int n = static_cast<int>(pts.size());
  DisjointSet ds(n);
  std::unordered_map<std::int64_t, std::vector<int>> buckets;
  std::vector<Eigen::Array3i> cells(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const Eigen::Array3i c = (pts[static_cast<std::size_t>(i)]->position.array() / radius).floor().cast<int>();
    cells[static_cast<std::size_t>(i)] = c;
    buckets[cell_key(c.x(), c.y(), c.z())].push_back(i);
  }
  for (int i = 0; i < n; ++i) {
    const Eigen::Array3i c = cells[static_cast<std::size_t>(i)];
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz) {
          const auto it = buckets.find(cell_key(c.x() + dx, c.y() + dy, c.z() + dz));
          if (it == buckets.end()) continue;
          for (int j : it->second)
            if (j > i && (pts[static_cast<std::size_t>(i)]->position - pts[static_cast<std::size_t>(j)]->position).norm() < radius)
              ds.unite(i, j);
        }
  }

  std::vector<std::vector<int>> clusters;
  std::unordered_map<int, std::size_t> slot;
  for (int i = 0; i < n; ++i) {
    const int root = ds.find(i);
    auto [it, fresh] = slot.emplace(root, clusters.size());
    if (fresh) clusters.emplace_back();
    clusters[it->second].push_back(i);
  }

  for (const auto& members : clusters) {
    std::vector<const CloudPoint*> group;
    for (int i : members) group.push_back(pts[static_cast<std::size_t>(i)]);
    CloudPoint fused = merge(group);
    bool compact = true;
    for (const CloudPoint* m : group) compact = compact && (m->position - fused.position).norm() <= radius;
    if (compact) {
      out.points.push_back(std::move(fused));
      continue;
    }
    std::vector<const CloudPoint*> leaders;
    std::vector<std::vector<const CloudPoint*>> parts;
    for (const CloudPoint* m : group) {
      std::size_t k = 0;
      while (k < leaders.size() && (m->position - leaders[k]->position).norm() > 0.5 * radius) ++k;
      if (k == leaders.size()) {
        leaders.push_back(m);
        parts.emplace_back();
      }
      parts[k].push_back(m);
    }
    for (const auto& part : parts) out.points.push_back(merge(part));
  }
  return out;
}

}  // namespace isac
