#include <doctest.h>

#include <random>

#include <Eigen/Geometry>
#include <Eigen/LU>

#include "isac/geometry.hpp"
#include "isac/io.hpp"
#include "isac/pointcloud.hpp"

using namespace isac;

namespace {

Vec3 random_vec(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  return {u(rng), u(rng), u(rng)};
}

Pose random_pose(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> a(-kPi, kPi), b(-1.4, 1.4);
  return {random_vec(rng, -50, 50), Vec3(a(rng), b(rng), a(rng))};
}

// Forward trace: the reflection point is where the segment from the receiver
// to the image of the transmitter crosses the wall plane.
Vec3 traced_reflection(const Vec3& bs, const Vec3& ue, const Vec3& wall_point, const Vec3& n) {
  const Vec3 image = mirror_point(ue, wall_point, n);
  const double t = n.dot(wall_point - bs) / n.dot(image - bs);
  return bs + t * (image - bs);
}

PointCloud4D cloud_of(const Points& pts, int node = 0) {
  PointCloud4D c;
  for (const auto& p : pts) c.add(p, 0.0, node);
  return c;
}

}  // namespace

TEST_CASE("apparent source along the arrival ray") {
  Detection4D d;
  d.range_m = 20.0;
  d.direction = Vec3::UnitZ();
  CHECK(vue_position(d, Pose{}).isApprox(Vec3(0, 0, 20)));
  d.range_m = 0.0;
  CHECK_THROWS_AS(vue_position(d, Pose{}), Error);

  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    const Vec3 n = random_vec(rng, -1, 1).normalized();
    const Vec3 wall = random_vec(rng, -5, 5);
    const Vec3 bs = wall + n * 10 + random_vec(rng, -8, 8).cross(n);
    const Vec3 ue = wall + n * 4 + random_vec(rng, -8, 8).cross(n);
    const Vec3 image = mirror_point(ue, wall, n);
    const Pose pose = random_pose(rng);
    const Pose at_bs{bs, pose.euler};
    const Vec3 scatterer = traced_reflection(bs, ue, wall, n);
    Detection4D det;
    det.range_m = (scatterer - bs).norm() + (ue - scatterer).norm();
    det.direction = at_bs.rotation().transpose() * (scatterer - bs).normalized();
    CHECK((vue_position(det, at_bs) - image).norm() < 1e-9);

    const Pose back = inverse(pose);
    const Vec3 p = random_vec(rng, -10, 10);
    CHECK((back.apply(pose.apply(p)) - p).norm() < 1e-12 * 50);
  }
}

TEST_CASE("mirror resolution") {
  CHECK((resolve_mirror({Vec3(10, 0, 0), Vec3(0, 0, 0), Vec3(0, 10, 0)}) - Vec3(5, 5, 0)).norm() < 1e-12);
  CHECK(traced_reflection(Vec3(10, 0, 0), Vec3(0, 0, 0), Vec3(0, 5, 0), Vec3::UnitY()).isApprox(Vec3(5, 5, 0)));

  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    const Vec3 n = random_vec(rng, -1, 1).normalized();
    const Vec3 wall = random_vec(rng, -20, 20);
    const Vec3 bs = wall + n * 12 + random_vec(rng, -10, 10).cross(n);
    const Vec3 ue = wall + n * 3 + random_vec(rng, -10, 10).cross(n);
    const MirrorProblem pb{bs, ue, mirror_point(ue, wall, n)};
    const Vec3 x = resolve_mirror(pb);
    CHECK((x - traced_reflection(bs, ue, wall, n)).norm() < 1e-8);

    const Vec3 u1 = (pb.vue - pb.ue).normalized();
    const Vec3 mid = 0.5 * (pb.ue + pb.vue);
    CHECK(std::abs(u1.dot(x - mid)) < 1e-10);
    const Vec3 u0 = (pb.vue - pb.bs).normalized();
    CHECK((x - pb.bs).cross(u0).norm() < 1e-10 * std::max(1.0, (x - pb.bs).norm()));

    const Vec3 w = random_vec(rng, -100, 100);
    CHECK((resolve_mirror({bs + w, ue + w, pb.vue + w}) - (x + w)).norm() < 1e-9);
  }

  CHECK_THROWS_AS(resolve_mirror({Vec3(0, 0, 0), Vec3(1, 1, 1), Vec3(1, 1, 1)}), Error);
  CHECK_THROWS_AS(resolve_mirror({Vec3(1, 1, 1), Vec3(0, 0, 0), Vec3(1, 1, 1)}), Error);
  // receive ray inside the bisector plane
  CHECK_THROWS_AS(resolve_mirror({Vec3(5, 10, 2), Vec3(0, 0, 0), Vec3(0, 10, 0)}), Error);
}

TEST_CASE("world transform") {
  PointCloud4D c;
  c.add(Vec3(1, 0, 0), 2.0, 4);
  CHECK(to_world(c, Pose{}).points[0].position == Vec3(1, 0, 0));
  const PointCloud4D w = to_world(c, Pose{Vec3(3, 4, 5), Vec3(0, 0, deg2rad(90))});
  CHECK((w.points[0].position - Vec3(3, 5, 5)).norm() < 1e-12);
  CHECK(w.points[0].velocity == 2.0);
  CHECK(w.points[0].node_id == 4);

  std::mt19937_64 rng(3);
  Points pts;
  for (int i = 0; i < 40; ++i) pts.push_back(random_vec(rng, -30, 30));
  const PointCloud4D src = cloud_of(pts);
  for (int k = 0; k < 20; ++k) {
    const Pose pose = random_pose(rng);
    const Mat3 r = pose.rotation();
    CHECK((r.transpose() * r - Mat3::Identity()).norm() < 1e-12);
    CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-12));
    const PointCloud4D out = to_world(src, pose);
    const PointCloud4D round = to_world(out, inverse(pose));
    for (int i = 0; i < 40; ++i) {
      CHECK((round.points[static_cast<std::size_t>(i)].position - pts[static_cast<std::size_t>(i)]).norm() < 1e-12 * 100);
      const int j = (i + 7) % 40;
      const double d0 = (pts[static_cast<std::size_t>(i)] - pts[static_cast<std::size_t>(j)]).norm();
      const double d1 = (out.points[static_cast<std::size_t>(i)].position - out.points[static_cast<std::size_t>(j)].position).norm();
      CHECK(std::abs(d1 - d0) <= 1e-12 * d0 * 10);
    }
  }
}

TEST_CASE("growth rate") {
  CHECK(growth_rate(10, 12) == doctest::Approx(0.2));
  CHECK(growth_rate(7, 7) == 0.0);
  CHECK(growth_rate(4, 2) == doctest::Approx(-0.5));
  CHECK_THROWS_AS(growth_rate(0, 3), Error);
}

TEST_CASE("fusion radius selection") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  Points pts;
  for (int k = 0; k < 2; ++k)
    for (int i = 0; i < 300; ++i) {
      Vec3 d(g(rng), g(rng), g(rng));
      d = d.normalized() * 0.3 * std::cbrt(std::uniform_real_distribution<double>(0, 1)(rng));
      pts.push_back(Vec3(5.0 * k, 0, 0) + d);
    }
  const FusionRadius r = select_fusion_radius(cloud_of(pts));
  CHECK(r.radius >= 0.3);
  CHECK(r.radius < 5.0);
  CHECK(r.mean_growth.size() == 100);

  // Dense uniform cloud: relative shell growth decays like 3 dr / r and stays
  // above eps_h over a short scan.
  Points uniform;
  for (int i = 0; i < 30000; ++i) uniform.push_back(random_vec(rng, 0, 10));
  FusionRadiusOptions short_scan;
  short_scan.r_max = 2.0;
  CHECK_THROWS_AS(select_fusion_radius(cloud_of(uniform), short_scan), PlateauError);
  try {
    select_fusion_radius(cloud_of(uniform), short_scan);
  } catch (const PlateauError& e) {
    CHECK(e.curve().size() == 20);
  }

  const FusionRadius one = select_fusion_radius(cloud_of({Vec3(1, 2, 3)}));
  CHECK(one.radius == doctest::Approx(0.1));
  for (double h : one.mean_growth) CHECK(h == 0.0);
  CHECK_THROWS_AS(select_fusion_radius(PointCloud4D{}), Error);
}

TEST_CASE("data-level fusion") {
  PointCloud4D a;
  a.add(Vec3(0, 0, 0), 1.0, 0);
  PointCloud4D b;
  b.add(Vec3(0.1, 0, 0), 3.0, 2);
  const PointCloud4D f = fuse_data_level({a, b}, 0.5);
  REQUIRE(f.size() == 1);
  CHECK((f.points[0].position - Vec3(0.05, 0, 0)).norm() < 1e-15);
  CHECK(f.points[0].velocity == 2.0);
  CHECK(f.points[0].provenance == std::vector<int>{0, 2});

  PointCloud4D sparse = cloud_of({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(3, 3, 3)});
  const PointCloud4D same = fuse_data_level({sparse}, 0.5);
  REQUIRE(same.size() == sparse.size());
  for (std::size_t i = 0; i < same.size(); ++i) CHECK(same.points[i].position == sparse.points[i].position);
}

TEST_CASE("fusion properties on random clouds") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> jitter(0.0, 0.05);
  for (int trial = 0; trial < 20; ++trial) {
    Points truth;
    for (int i = 0; i < 150; ++i) truth.push_back(random_vec(rng, 0, 30));
    const PointCloud4D base = cloud_of(truth, 0);
    for (double r : {0.2, 0.5, 1.5}) {
      const PointCloud4D once = fuse_data_level({base}, r);
      const PointCloud4D twice = fuse_data_level({base, base}, r);
      auto sorted = [](const PointCloud4D& c) {
        Points p = positions_of(c);
        std::sort(p.begin(), p.end(), [](const Vec3& x, const Vec3& y) {
          return std::lexicographical_compare(x.data(), x.data() + 3, y.data(), y.data() + 3);
        });
        return p;
      };
      const Points p1 = sorted(once), p2 = sorted(twice);
      REQUIRE(p1.size() == p2.size());
      for (std::size_t i = 0; i < p1.size(); ++i) CHECK((p1[i] - p2[i]).norm() < 1e-12);
    }

    std::vector<PointCloud4D> views;
    for (int node = 0; node < 3; ++node) {
      PointCloud4D v;
      for (const auto& p : truth) v.add(p + Vec3(jitter(rng), jitter(rng), jitter(rng)), 0.0, node);
      views.push_back(v);
    }
    PointCloud4D all;
    for (const auto& v : views) all.points.insert(all.points.end(), v.points.begin(), v.points.end());
    const PointCloud4D fused = fuse_data_level(views, 0.5);
    CHECK(fused.size() <= all.size());
    CHECK(chamfer_distance(truth, positions_of(fused)) <= chamfer_distance(truth, positions_of(all)));

    // every fused point lies within the radius of a member of the union
    for (const auto& p : fused.points) {
      double best = 1e300;
      for (const auto& q : all.points) best = std::min(best, (p.position - q.position).norm());
      CHECK(best <= 0.5);
    }
  }
}

TEST_CASE("chained clusters are split so centroids stay close to members") {
  Points chain;
  for (int i = 0; i < 30; ++i) chain.push_back(Vec3(0.2 * i, 0, 0));
  const PointCloud4D fused = fuse_data_level({cloud_of(chain)}, 0.5);
  CHECK(fused.size() > 1);
  CHECK(fused.size() < chain.size());
  for (const auto& p : chain) {
    double best = 1e300;
    for (const auto& q : fused.points) best = std::min(best, (p - q.position).norm());
    CHECK(best <= 0.5);
  }
}
