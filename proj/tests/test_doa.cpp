#include <doctest.h>

#include <random>

#include <Eigen/SVD>

#include "isac/doa.hpp"

using namespace isac;

namespace {

constexpr double kLambda = 3e8 / 70e9;

ArraySpec square(int n) { return {n, n, kLambda / 2, ArrayRole::VirtualRx}; }

double angle_between_deg(const ArrayAngles& a, const ArrayAngles& b) {
  const double c = direction_from_angles(a).dot(direction_from_angles(b));
  return rad2deg(std::acos(std::clamp(c, -1.0, 1.0)));
}

int numeric_rank(const MatrixXcd& m, double rel = 1e-8) {
  const Eigen::JacobiSVD<MatrixXcd> svd(m);
  const auto& s = svd.singularValues();
  return static_cast<int>((s.array() > rel * s(0)).count());
}

CellManifolds cell_of(const std::vector<std::pair<ArrayAngles, cdouble>>& sources, const ArraySpec& a, int slots = 1,
                      double noise = 0.0, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, std::sqrt(noise / 2));
  CellManifolds c;
  for (int s = 0; s < slots; ++s) {
    MatrixXcd m = MatrixXcd::Zero(a.rows, a.cols);
    for (const auto& [ang, gain] : sources) m += gain * steering_matrix(a, kLambda, ang.theta, ang.phi);
    if (noise > 0.0)
      for (Eigen::Index i = 0; i < m.size(); ++i) m(i) += cdouble(g(rng), g(rng));
    c.slots.push_back(m);
  }
  return c;
}

ArrayAngles deg(double t, double p) { return {deg2rad(t), deg2rad(p)}; }

}  // namespace

TEST_CASE("spatial smoothing shape and structure") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  VectorXcd x(16);
  for (auto& v : x) v = cdouble(g(rng), g(rng));
  const SmoothedCovariance c = smooth_covariance(x, 8);
  CHECK(c.subarray_len == 8);
  CHECK(c.snapshots == 9);
  CHECK(c.matrix.rows() == 8);
  CHECK((c.matrix - c.matrix.adjoint()).norm() < 1e-12);
  // persymmetric with forward-backward averaging
  CHECK((c.matrix - MatrixXcd(c.matrix.conjugate().reverse())).norm() < 1e-12);

  MatrixXcd direct = MatrixXcd::Zero(8, 8);
  for (int l = 0; l < 9; ++l) direct += x.segment(l, 8) * x.segment(l, 8).adjoint();
  direct /= 9.0;
  CHECK((smooth_covariance(x, 8, false).matrix - direct).norm() < 1e-12);

  CHECK(smooth_covariance(VectorXcd::Zero(16), 8).matrix.norm() == 0.0);
  CHECK_THROWS_AS(smooth_covariance(x, 17), Error);
  CHECK_THROWS_AS(smooth_covariance(std::vector<VectorXcd>{}, 4), Error);
}

TEST_CASE("smoothing restores the rank of coherent sources") {
  const VectorXcd x = line_steering(16, 0.5, 0.3) + cdouble(0.8, 0.4) * line_steering(16, 0.5, -0.45);
  CHECK(numeric_rank(smooth_covariance(x, 16, false).matrix) == 1);
  CHECK(numeric_rank(smooth_covariance(x, 8, false).matrix) == 2);
  CHECK(numeric_rank(smooth_covariance(x, 8, true).matrix) == 2);
  const VectorXcd y = x + cdouble(0.5, 0.0) * line_steering(16, 0.5, 0.8);
  CHECK(numeric_rank(smooth_covariance(y, 16, true).matrix) <= 2);
  CHECK(numeric_rank(smooth_covariance(y, 8, true).matrix) == 3);
}

TEST_CASE("source count from the eigenvalue test") {
  Eigen::VectorXd one(6);
  one << 1.0, 1.1, 0.9, 1.05, 0.95, 200.0;
  std::sort(one.data(), one.data() + one.size());
  CHECK(count_sources(one, 1e-3) == 1);
  Eigen::VectorXd two(6);
  two << 1.0, 0.9, 1.1, 1.0, 150.0, 300.0;
  std::sort(two.data(), two.data() + two.size());
  CHECK(count_sources(two, 1e-3) == 2);
  CHECK(count_sources(Eigen::VectorXd::Ones(6), 1e-3) == 0);
  CHECK(count_sources(Eigen::VectorXd::Zero(6), 1e-3) == 0);
  Eigen::VectorXd exact(4);
  exact << 0.0, 0.0, 0.0, 5.0;
  CHECK(count_sources(exact, 1e-3) == 1);
}

TEST_CASE("noise subspace is orthogonal to the true steering line") {
  const double u1 = 0.25, u2 = -0.6;
  const VectorXcd x = line_steering(16, 0.5, u1) + cdouble(0.3, -0.9) * line_steering(16, 0.5, u2);
  const Eigenbasis b = eigen_decompose(smooth_covariance(x, 8).matrix, 1e-3);
  CHECK(b.source_count == 2);
  const MatrixXcd un = b.noise_basis();
  CHECK(un.cols() == 6);
  for (double u : {u1, u2}) {
    const VectorXcd a = line_steering(8, 0.5, u);
    CHECK((un.adjoint() * a).norm() / a.norm() < 1e-6);
    CHECK(MusicLine(un, 0.5).residual(u) < 1e-6);
  }
  CHECK(MusicLine(un, 0.5).residual(0.9) > 1e-3);
}

TEST_CASE("line pseudo-spectrum peaks at the source and scales with spacing") {
  const double u0 = 0.35;
  const Eigenbasis b = eigen_decompose(smooth_covariance(line_steering(16, 0.5, u0), 8).matrix, 1e-3);
  const MusicLine line(b.noise_basis(), 0.5);
  double best = -1.0, best_u = 0.0;
  for (double u = -1.0; u <= 1.0; u += 1e-4) {
    const double v = line(u);
    CHECK(v > 0.0);
    if (v > best) best = v, best_u = u;
  }
  CHECK(best_u == doctest::Approx(u0).epsilon(1e-3));
  // the same noise basis read at half the spacing sees the source at 2u
  CHECK(MusicLine(b.noise_basis(), 0.25).residual(2 * u0) < 1e-6);
}

TEST_CASE("2D spectra combine elementwise on matching grids") {
  const AngleGrid g = AngleGrid::canonical(1.0);
  CHECK(g.theta_deg.size() == 90);
  CHECK(g.phi_deg.size() == 179);
  CHECK(g.theta_deg(89) == 90.0);
  const ArraySpec a = square(8);
  const ArrayAngles truth = deg(40, 70);
  const MatrixXcd m = steering_matrix(a, kLambda, truth.theta, truth.phi);
  auto spectrum = [&](LineAxis axis) {
    const VectorXcd line = axis == LineAxis::AlongP ? VectorXcd(m.col(0)) : VectorXcd(m.row(0).transpose());
    const Eigenbasis b = eigen_decompose(smooth_covariance(line, 4).matrix, 1e-3);
    return music_spectrum_1d(b.noise_basis(), 0.5, axis, g);
  };
  const PseudoSpectrum2D p = spectrum(LineAxis::AlongP), q = spectrum(LineAxis::AlongQ);
  const PseudoSpectrum2D prod = combine_spectra(q, p);
  CHECK(prod.values.isApprox(p.values.cwiseProduct(q.values)));
  Eigen::Index i = 0, j = 0;
  prod.values.maxCoeff(&i, &j);
  CHECK(g.theta_deg(i) == doctest::Approx(40.0));
  CHECK(g.phi_deg(j) == doctest::Approx(70.0));

  const PseudoSpectrum2D other = music_spectrum_1d(MatrixXcd::Identity(4, 3), 0.5, LineAxis::AlongP,
                                                   AngleGrid::canonical(2.0));
  CHECK_THROWS_AS(combine_spectra(p, other), Error);
}

TEST_CASE("spectrum CFAR") {
  PseudoSpectrum2D flat{AngleGrid::canonical(2.0), {}};
  flat.values = Eigen::MatrixXd::Ones(flat.grid.theta_deg.size(), flat.grid.phi_deg.size());
  const CfarConfig cfg = DoaConfig{}.spectrum_cfar;
  CHECK(spectrum_cfar(flat, cfg).empty());
  flat.values(20, 30) = 1000.0;
  const auto d = spectrum_cfar(flat, cfg);
  REQUIRE(d.size() == 1);
  CHECK(rad2deg(d[0].angles.theta) == doctest::Approx(flat.grid.theta_deg(20)));
  CHECK(rad2deg(d[0].angles.phi) == doctest::Approx(flat.grid.phi_deg(30)));
}

TEST_CASE("validation rejects directions with no support in the manifold") {
  const ArraySpec a = square(8);
  const CellManifolds c = cell_of({{deg(30, 60), 1.0}}, a);
  const std::vector<AngleDetection> cands{{deg(70, 120), 5.0}, {deg(30, 60), 1.0}, {deg(30.5, 60), 0.5}};
  const auto v = validate_candidates(c.slots[0], a, kLambda, cands, 0.7, 3);
  REQUIRE(v.size() == 1);
  CHECK(angle_between_deg(v[0].angles, deg(30, 60)) < 1e-9);
  CHECK(validate_candidates(MatrixXcd::Zero(8, 8), a, kLambda, cands, 0.7, 3).empty());
  CHECK_THROWS_AS(validate_candidates(MatrixXcd::Zero(4, 8), a, kLambda, cands, 0.7, 3), Error);
}

TEST_CASE("single scatterer in one cell") {
  const ArraySpec a = square(16);
  CellManifolds c = cell_of({{deg(70, 100), cdouble(0.3, 0.4)}}, a, 2, 1e-3);
  c.cell.range_m = 50.0;
  c.cell.velocity_mps = 0.0;
  const auto d = estimate_4d({c}, a, kLambda, DoaConfig{});
  REQUIRE(d.size() == 1);
  CHECK(d[0].range_m == 50.0);
  CHECK(d[0].velocity_mps == 0.0);
  CHECK(std::abs(rad2deg(d[0].aoa.theta) - 70.0) <= 0.5);
  CHECK(std::abs(rad2deg(d[0].aoa.phi) - 100.0) <= 0.5);
  CHECK(d[0].direction.isApprox(direction_from_angles(d[0].aoa)));
  CHECK(estimate_4d({}, a, kLambda, DoaConfig{}).empty());
}

TEST_CASE("two coherent scatterers in one cell are resolved") {
  const ArraySpec a = square(16);
  const CellManifolds c = cell_of({{deg(35, 60), 1.0}, {deg(65, 115), cdouble(0.0, 0.8)}}, a, 2, 1e-4);
  const auto d = estimate_angles(c, a, kLambda, DoaConfig{});
  REQUIRE(d.size() >= 2);
  int found = 0;
  for (const auto& truth : {deg(35, 60), deg(65, 115)}) {
    bool hit = false;
    for (const auto& x : d) hit = hit || angle_between_deg(x.angles, truth) < 1.0;
    found += hit;
  }
  CHECK(found == 2);
}

TEST_CASE("separated scatterers across cells") {
  const ArraySpec a = square(16);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> th(10, 85), ph(15, 165);
  std::vector<CellManifolds> cells;
  std::vector<ArrayAngles> truth;
  for (int i = 0; i < 10; ++i) {
    truth.push_back(deg(th(rng), ph(rng)));
    cells.push_back(cell_of({{truth.back(), 1.0}}, a, 2, 1e-3, 100 + i));
    cells.back().cell.range_m = 10.0 * (i + 1);
  }
  const auto d = estimate_4d(cells, a, kLambda, DoaConfig{});
  int matched = 0;
  for (int i = 0; i < 10; ++i) {
    bool hit = false;
    for (const auto& x : d)
      hit = hit || (x.range_m == cells[static_cast<std::size_t>(i)].cell.range_m &&
                    angle_between_deg(x.aoa, truth[static_cast<std::size_t>(i)]) < 1.0);
    matched += hit;
  }
  CHECK(matched >= 9);
}
