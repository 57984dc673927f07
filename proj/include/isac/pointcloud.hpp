#pragma once

#include <vector>

#include "isac/types.hpp"

namespace isac {

using Points = std::vector<Vec3>;

/// Scalar values on the lattice {-N/2, ..., N/2-1}^3; storage index
/// ((ix * N + iy) * N + iz) with ix = x + N/2.
struct Grid3D {
  int n = 0;
  std::vector<double> values;

  Grid3D() = default;
  explicit Grid3D(int resolution);

  std::size_t index(int x, int y, int z) const;  ///< lattice coordinates
  double at(int x, int y, int z) const { return values[index(x, y, z)]; }
  double& at(int x, int y, int z) { return values[index(x, y, z)]; }
};

/// Centroid-centred isotropic map from world metres to grid coordinates.
struct GridFrame {
  Vec3 center = Vec3::Zero();
  double scale = 1.0;

  Vec3 to_grid(const Vec3& p) const { return (p - center) * scale; }
  Vec3 to_world(const Vec3& g) const { return g / scale + center; }
  Points to_grid(const Points& pts) const;
};

/// Frame fitting the cloud into [-N/2+1, N/2-2] with a 5% margin.
GridFrame fit_frame(const Points& cloud, int n);

/// Trilinear gridding; each vertex averages the weights of the points in its
/// open unit neighbourhood. Points must lie in (-N/2, N/2-1).
Grid3D gridding(const Points& grid_points, int n);

/// Gradient of sum_v upstream[v] * K[v] with respect to every point.
Points gridding_gradient(const Points& grid_points, int n, const Grid3D& upstream);

/// Weighted vertex mean per cell; cells with zero total weight emit nothing.
Points gridding_reverse(const Grid3D& grid);

/// Per-vertex feature vectors of `channels` values.
struct FeatureGrid {
  int n = 0;
  int channels = 0;
  std::vector<double> values;  ///< Grid3D index * channels + channel

  FeatureGrid() = default;
  FeatureGrid(int resolution, int channel_count);
  const double* at(int x, int y, int z) const;
  double* at(int x, int y, int z);
};

/// Concatenated features of the 8 enclosing-cell vertices, vertex order
/// lexicographic with z fastest; one row of width 8 * channels per point.
Eigen::MatrixXd cubic_feature_sampling(const FeatureGrid& features, const Points& grid_points);

/// Multi-scale variant: points are given in the coordinates of a grid of
/// resolution `base_n` and rescaled to each feature grid; cells are clamped
/// to the lattice of coarser grids.
Eigen::MatrixXd cubic_feature_sampling(const std::vector<FeatureGrid>& features, const Points& grid_points,
                                       int base_n);

/// Mean absolute difference of the gridded values.
double gridding_loss(const Points& pred, const Points& gt, int n);

/// Exact nearest-neighbour search.
class KdTree {
 public:
  explicit KdTree(const Points& pts);
  /// Squared distance to the nearest stored point.
  double nearest_sq(const Vec3& q) const;

 private:
  struct Node {
    int point = -1;
    int axis = 0;
    int left = -1;
    int right = -1;
  };
  int build(std::vector<int>& idx, int lo, int hi, int depth);
  void search(int node, const Vec3& q, double& best) const;

  const Points& pts_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

double chamfer_distance(const Points& t, const Points& r);
double chamfer_distance_brute(const Points& t, const Points& r);

double f_score(const Points& t, const Points& r, double d);
double f_score_brute(const Points& t, const Points& r, double d);

double bbox_diagonal(const Points& pts);

struct MetricReport {
  double chamfer = 0.0;
  double f_score = 0.0;
  double threshold = 0.0;
};

/// CD and F-Score with d = d_frac times the ground-truth bounding-box diagonal.
MetricReport evaluate(const Points& pred, const Points& gt, double d_frac = 0.01);

}  // namespace isac
