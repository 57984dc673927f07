#include "isac/pointcloud.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace isac {

Grid3D::Grid3D(int resolution) : n(resolution) {
  require(resolution >= 2 && resolution % 2 == 0, "grid resolution must be even and at least 2");
  values.assign(static_cast<std::size_t>(n) * n * n, 0.0);
}

std::size_t Grid3D::index(int x, int y, int z) const {
  const int h = n / 2;
  return (static_cast<std::size_t>(x + h) * n + static_cast<std::size_t>(y + h)) * n + static_cast<std::size_t>(z + h);
}

Points GridFrame::to_grid(const Points& pts) const {
  Points out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(to_grid(p));
  return out;
}

GridFrame fit_frame(const Points& cloud, int n) {
  require(n >= 6 && n % 2 == 0, "grid resolution must be even and at least 6");
  GridFrame f;
  if (cloud.empty()) return f;
  f.center.setZero();
  for (const auto& p : cloud) f.center += p;
  f.center /= static_cast<double>(cloud.size());
  double extent = 0.0;
  for (const auto& p : cloud) extent = std::max(extent, (p - f.center).cwiseAbs().maxCoeff());
  f.scale = extent > 0.0 ? 0.95 * (n / 2 - 2) / extent : 1.0;
  return f;
}

namespace {

// Vertices within the open unit neighbourhood of a point: per axis the floor
// and, unless the coordinate is integral, the next lattice value.
struct Stencil {
  std::array<int, 3> base{};
  std::array<int, 3> span{};     // 1 or 2 vertices per axis
  std::array<double, 3> frac{};  // p - base
};

Stencil stencil_for(const Vec3& p, int n, std::size_t idx) {
  const double lo = -n / 2, hi = n / 2 - 1;
  for (int a = 0; a < 3; ++a)
    require(std::isfinite(p(a)) && p(a) > lo && p(a) < hi,
            "point " + std::to_string(idx) + " lies outside the grid");
  Stencil s;
  for (int a = 0; a < 3; ++a) {
    const double f = std::floor(p(a));
    s.base[static_cast<std::size_t>(a)] = static_cast<int>(f);
    s.frac[static_cast<std::size_t>(a)] = p(a) - f;
    s.span[static_cast<std::size_t>(a)] = p(a) == f ? 1 : 2;
  }
  return s;
}

double axis_weight(const Stencil& s, int a, int d) {
  const double g = s.frac[static_cast<std::size_t>(a)];
  return d == 0 ? 1.0 - g : g;
}

}  // namespace

Grid3D gridding(const Points& pts, int n) {
  Grid3D grid(n);
  std::vector<int> count(grid.values.size(), 0);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Stencil s = stencil_for(pts[i], n, i);
    for (int dx = 0; dx < s.span[0]; ++dx)
      for (int dy = 0; dy < s.span[1]; ++dy)
        for (int dz = 0; dz < s.span[2]; ++dz) {
          const std::size_t v = grid.index(s.base[0] + dx, s.base[1] + dy, s.base[2] + dz);
          grid.values[v] += axis_weight(s, 0, dx) * axis_weight(s, 1, dy) * axis_weight(s, 2, dz);
          ++count[v];
        }
  }
  for (std::size_t v = 0; v < grid.values.size(); ++v)
    if (count[v] > 0) grid.values[v] /= count[v];
  return grid;
}

Points gridding_gradient(const Points& pts, int n, const Grid3D& upstream) {
  require(upstream.n == n, "upstream gradient resolution mismatch");
  std::vector<int> count(upstream.values.size(), 0);
  std::vector<Stencil> stencils;
  stencils.reserve(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    stencils.push_back(stencil_for(pts[i], n, i));
    const Stencil& s = stencils.back();
    for (int dx = 0; dx < s.span[0]; ++dx)
      for (int dy = 0; dy < s.span[1]; ++dy)
        for (int dz = 0; dz < s.span[2]; ++dz) ++count[upstream.index(s.base[0] + dx, s.base[1] + dy, s.base[2] + dz)];
  }
  Points grad(pts.size(), Vec3::Zero());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Stencil& s = stencils[i];
    for (int dx = 0; dx < s.span[0]; ++dx)
      for (int dy = 0; dy < s.span[1]; ++dy)
        for (int dz = 0; dz < s.span[2]; ++dz) {
          const std::size_t v = upstream.index(s.base[0] + dx, s.base[1] + dy, s.base[2] + dz);
          const double g = upstream.values[v] / count[v];
          const double wx = axis_weight(s, 0, dx), wy = axis_weight(s, 1, dy), wz = axis_weight(s, 2, dz);
          // d(1 - |v - p|)/dp = +1 on the far vertex side, -1 on the near side
          const double sx = dx == 0 ? -1.0 : 1.0, sy = dy == 0 ? -1.0 : 1.0, sz = dz == 0 ? -1.0 : 1.0;
          grad[i] += g * Vec3(sx * wy * wz, sy * wx * wz, sz * wx * wy);
        }
  }
  return grad;
}

Points gridding_reverse(const Grid3D& grid) {
  const int h = grid.n / 2;
  Points out;
  for (int x = -h; x < h - 1; ++x)
    for (int y = -h; y < h - 1; ++y)
      for (int z = -h; z < h - 1; ++z) {
        double total = 0.0;
        Vec3 acc = Vec3::Zero();
        for (int dx = 0; dx < 2; ++dx)
          for (int dy = 0; dy < 2; ++dy)
            for (int dz = 0; dz < 2; ++dz) {
              const double w = grid.at(x + dx, y + dy, z + dz);
              total += w;
              acc += w * Vec3(x + dx, y + dy, z + dz);
            }
        if (total != 0.0) out.push_back(acc / total);
      }
  return out;
}

FeatureGrid::FeatureGrid(int resolution, int channel_count) : n(resolution), channels(channel_count) {
  require(resolution >= 2 && resolution % 2 == 0, "grid resolution must be even and at least 2");
  require(channel_count >= 1, "feature grid needs at least one channel");
  values.assign(static_cast<std::size_t>(n) * n * n * channels, 0.0);
}

const double* FeatureGrid::at(int x, int y, int z) const {
  const int h = n / 2;
  const std::size_t v = (static_cast<std::size_t>(x + h) * n + static_cast<std::size_t>(y + h)) * n + static_cast<std::size_t>(z + h);
  return values.data() + v * static_cast<std::size_t>(channels);
}

double* FeatureGrid::at(int x, int y, int z) {
  return const_cast<double*>(static_cast<const FeatureGrid&>(*this).at(x, y, z));
}

namespace {

void sample_cell(const FeatureGrid& f, const std::array<int, 3>& base, double* out) {
  int k = 0;
  for (int dx = 0; dx < 2; ++dx)
    for (int dy = 0; dy < 2; ++dy)
      for (int dz = 0; dz < 2; ++dz, ++k)
        std::copy_n(f.at(base[0] + dx, base[1] + dy, base[2] + dz), f.channels, out + k * f.channels);
}

}  // namespace

Eigen::MatrixXd cubic_feature_sampling(const FeatureGrid& f, const Points& pts) {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out(static_cast<Eigen::Index>(pts.size()),
                                                                            8 * f.channels);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Stencil s = stencil_for(pts[i], f.n, i);
    sample_cell(f, s.base, out.row(static_cast<Eigen::Index>(i)).data());
  }
  return out;
}

Eigen::MatrixXd cubic_feature_sampling(const std::vector<FeatureGrid>& grids, const Points& pts, int base_n) {
  require(!grids.empty(), "no feature grids");
  int width = 0;
  for (const auto& g : grids) width += 8 * g.channels;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out(static_cast<Eigen::Index>(pts.size()),
                                                                            width);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    stencil_for(pts[i], base_n, i);
    int offset = 0;
    for (const auto& g : grids) {
      const double ratio = static_cast<double>(g.n) / base_n;
      std::array<int, 3> base{};
      for (int a = 0; a < 3; ++a)
        base[static_cast<std::size_t>(a)] =
            std::clamp(static_cast<int>(std::floor(pts[i](a) * ratio)), -g.n / 2, g.n / 2 - 2);
      sample_cell(g, base, out.row(static_cast<Eigen::Index>(i)).data() + offset);
      offset += 8 * g.channels;
    }
  }
  return out;
}

double gridding_loss(const Points& pred, const Points& gt, int n) {
  const Grid3D a = gridding(pred, n), b = gridding(gt, n);
  double acc = 0.0;
  for (std::size_t v = 0; v < a.values.size(); ++v) acc += std::abs(a.values[v] - b.values[v]);
  return acc / static_cast<double>(a.values.size());
}

KdTree::KdTree(const Points& pts) : pts_(pts) {
  std::vector<int> idx(pts.size());
  std::iota(idx.begin(), idx.end(), 0);
  nodes_.reserve(pts.size());
  root_ = build(idx, 0, static_cast<int>(idx.size()), 0);
}

int KdTree::build(std::vector<int>& idx, int lo, int hi, int depth) {
  if (lo >= hi) return -1;
  const int axis = depth % 3;
  const int mid = lo + (hi - lo) / 2;
  std::nth_element(idx.begin() + lo, idx.begin() + mid, idx.begin() + hi,
                   [&](int a, int b) { return pts_[static_cast<std::size_t>(a)](axis) < pts_[static_cast<std::size_t>(b)](axis); });
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({idx[static_cast<std::size_t>(mid)], axis, -1, -1});
  const int left = build(idx, lo, mid, depth + 1);
  const int right = build(idx, mid + 1, hi, depth + 1);
  nodes_[static_cast<std::size_t>(id)].left = left;
  nodes_[static_cast<std::size_t>(id)].right = right;
  return id;
}

void KdTree::search(int id, const Vec3& q, double& best) const {
  if (id < 0) return;
  const Node& nd = nodes_[static_cast<std::size_t>(id)];
  const Vec3& p = pts_[static_cast<std::size_t>(nd.point)];
  best = std::min(best, (q - p).squaredNorm());
  const double diff = q(nd.axis) - p(nd.axis);
  const int near = diff < 0.0 ? nd.left : nd.right;
  const int far = diff < 0.0 ? nd.right : nd.left;
  search(near, q, best);
  if (diff * diff <= best) search(far, q, best);
}

double KdTree::nearest_sq(const Vec3& q) const {
  double best = std::numeric_limits<double>::infinity();
  search(root_, q, best);
  return best;
}

namespace {

double brute_nearest_sq(const Points& pts, const Vec3& q) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : pts) best = std::min(best, (q - p).squaredNorm());
  return best;
}

template <typename Nearest>
double mean_nearest(const Points& from, Nearest&& nearest) {
  double acc = 0.0;
  for (const auto& p : from) acc += nearest(p);
  return acc / static_cast<double>(from.size());
}

template <typename Nearest>
double fraction_within(const Points& from, double d, Nearest&& nearest) {
  std::size_t hits = 0;
  for (const auto& p : from) hits += nearest(p) < d * d ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(from.size());
}

double harmonic(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

void require_clouds(const Points& t, const Points& r) {
  require(!t.empty() && !r.empty(), "metric needs two nonempty clouds");
}

}  // namespace

double chamfer_distance(const Points& t, const Points& r) {
  require_clouds(t, r);
  const KdTree tt(t), rt(r);
  return mean_nearest(t, [&](const Vec3& p) { return rt.nearest_sq(p); }) +
         mean_nearest(r, [&](const Vec3& p) { return tt.nearest_sq(p); });
}

double chamfer_distance_brute(const Points& t, const Points& r) {
  require_clouds(t, r);
  return mean_nearest(t, [&](const Vec3& p) { return brute_nearest_sq(r, p); }) +
         mean_nearest(r, [&](const Vec3& p) { return brute_nearest_sq(t, p); });
}

double f_score(const Points& t, const Points& r, double d) {
  require_clouds(t, r);
  require(d > 0.0, "F-score threshold must be positive");
  const KdTree tt(t), rt(r);
  const double precision = fraction_within(r, d, [&](const Vec3& p) { return tt.nearest_sq(p); });
  const double recall = fraction_within(t, d, [&](const Vec3& p) { return rt.nearest_sq(p); });
  return harmonic(precision, recall);
}

double f_score_brute(const Points& t, const Points& r, double d) {
  require_clouds(t, r);
  require(d > 0.0, "F-score threshold must be positive");
  const double precision = fraction_within(r, d, [&](const Vec3& p) { return brute_nearest_sq(t, p); });
  const double recall = fraction_within(t, d, [&](const Vec3& p) { return brute_nearest_sq(r, p); });
  return harmonic(precision, recall);
}

double bbox_diagonal(const Points& pts) {
  require(!pts.empty(), "bounding box of an empty cloud");
  Vec3 lo = pts.front(), hi = pts.front();
  for (const auto& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return (hi - lo).norm();
}

MetricReport evaluate(const Points& pred, const Points& gt, double d_frac) {
  require(d_frac > 0.0, "threshold fraction must be positive");
  MetricReport m;
  m.threshold = d_frac * bbox_diagonal(gt);
  require(m.threshold > 0.0, "ground-truth cloud has a degenerate bounding box");
  m.chamfer = chamfer_distance(gt, pred);
  m.f_score = f_score(gt, pred, m.threshold);
  return m;
}

}  // namespace isac
