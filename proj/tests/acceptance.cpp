#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <Eigen/Geometry>

#include "isac/dataset.hpp"
#include "isac/io.hpp"
#include "isac/pointcloud.hpp"

using namespace isac;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  return Vec3(g(rng), g(rng), g(rng)).normalized();
}

// Rotates a unit vector by `angle` about a random axis perpendicular to it.
Vec3 tilt(const Vec3& u, double angle, std::mt19937_64& rng) {
  Vec3 axis = u.cross(random_unit(rng));
  while (axis.norm() < 1e-6) axis = u.cross(random_unit(rng));
  return Eigen::AngleAxisd(angle, axis.normalized()) * u;
}

double angle_deg(const Vec3& a, const Vec3& b) {
  return rad2deg(std::acos(std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0)));
}

// ---------------------------------------------------------------- range/Doppler

struct SingleTarget {
  OfdmParams params;
  ArraySpec array;
  CfarConfig cfar;
  SensingNode bs;
  Vec3 look;  // world direction from the BS to the scatterer

  SingleTarget() {
    OfdmConfig c = default_ofdm_config(Period::DL);
    c.n_slots = 1;
    params = build_params(c, Period::DL);
    array = {1, 1, params.wavelength_m() / 2, ArrayRole::VirtualRx};
    bs.position = Vec3(0, 0, 25);
    bs.orientation = bs_orientation_for_yaw(0.0);
    look = bs.rotation() * direction_from_angles({deg2rad(60), deg2rad(80)});
  }

  // Strongest detected cell for one scatterer at `range` closing at `speed`.
  std::optional<RdCell> run(double range, double speed, std::uint64_t seed) const {
    Scene s;
    s.seed = seed;
    s.nodes = {bs};
    Scatterer sc;
    sc.position = bs.position + range * look;
    sc.velocity = -speed * look;
    VisibilityRecord rec;
    rec.scatterer_index = 0;
    rec.r1 = range;
    const auto paths = path_params(s, {sc}, {rec}, bs, params);
    const double noise = noise_var_for_snr(paths, 10.0);
    const RdProcessing rd = process_paths(paths, params, array, cfar, noise, seed, 1);
    if (rd.cells.empty()) return std::nullopt;
    return rd.cells.front().cell;
  }
};

Outcome range_accuracy() {
  const auto t0 = std::chrono::steady_clock::now();
  const SingleTarget t;
  const double bin = range_bin_m(t.params);
  int pass = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    bool ok = true;
    for (double r : {25.0, 100.0, 300.0}) {
      const auto cell = t.run(r, 0.0, seed);
      const double err = cell ? std::abs(cell->range_m - r) : 1e9;
      worst = std::max(worst, err);
      ok = ok && err <= bin;
    }
    pass += ok;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {pass >= 98 && secs < 60.0,
          fmt("%d/100 seeds within +-%.4f m at 25/100/300 m, worst error %.4f m, %.1f s", pass, bin, worst, secs)};
}

Outcome velocity_accuracy() {
  const SingleTarget t;
  const double bin = velocity_bin_mps(t.params);
  int pass = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    bool ok = true;
    for (double v : {-20.0, 0.0, 20.0}) {
      const auto cell = t.run(100.0, v, 1000 + seed);
      const double err = cell ? std::abs(cell->velocity_mps - v) : 1e9;
      worst = std::max(worst, err);
      ok = ok && err <= bin;
    }
    pass += ok;
  }
  return {pass >= 98, fmt("%d/100 seeds within +-%.3f m/s at -20/0/+20 m/s, worst error %.3f m/s", pass, bin, worst)};
}

// ---------------------------------------------------------------------- DoA

ArraySpec table_dl_array() {
  const RunConfig c = default_run_config();
  return sensing_array(c.dl, build_params(c.dl.ofdm, Period::DL).wavelength_m(), Period::DL);
}

double table_wavelength() { return build_params(default_ofdm_config(Period::DL), Period::DL).wavelength_m(); }

Outcome doa_accuracy() {
  const ArraySpec a = table_dl_array();
  const double lambda = table_wavelength();
  const DoaConfig cfg;
  const AngleGrid grid = AngleGrid::canonical(cfg.grid_step_deg);
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> th(5, 85), ph(5, 175);
  int pass = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const ArrayAngles truth{deg2rad(th(rng)), deg2rad(ph(rng))};
    const MatrixXcd m = steering_matrix(a, lambda, truth.theta, truth.phi);
    auto line = [&](LineAxis axis) {
      const VectorXcd x = axis == LineAxis::AlongP ? VectorXcd(m.col(0)) : VectorXcd(m.row(0).transpose());
      Eigenbasis eb = eigen_decompose(smooth_covariance(x, cfg.subarray_len).matrix, cfg.eig_p_fa);
      eb.source_count = std::clamp(eb.source_count, 1, eb.dim() - 1);
      return MusicLine(eb.noise_basis(), a.spacing_m / lambda);
    };
    const MusicLine col = line(LineAxis::AlongP), row = line(LineAxis::AlongQ);
    const PseudoSpectrum2D prod =
        combine_spectra(music_spectrum_1d(row, LineAxis::AlongQ, grid), music_spectrum_1d(col, LineAxis::AlongP, grid));
    Eigen::Index i = 0, j = 0;
    prod.values.maxCoeff(&i, &j);
    const ArrayAngles est = refine_peak(col, row, {deg2rad(grid.theta_deg(i)), deg2rad(grid.phi_deg(j))});
    const double err = angle_deg(direction_from_angles(est), direction_from_angles(truth));
    worst = std::max(worst, err);
    pass += err <= 1.0;
  }
  return {pass == 10, fmt("%d/10 trials within 1 deg on a %dx%d array, worst %.3f deg", pass, a.rows, a.cols, worst)};
}

Outcome coherent_resolution() {
  const ArraySpec a = table_dl_array();
  const double lambda = table_wavelength();
  DoaConfig smoothed;
  smoothed.subarray_len = 8;
  smoothed.forward_backward = true;
  DoaConfig plain = smoothed;
  plain.subarray_len = a.rows;
  plain.forward_backward = false;
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> phase(0, 2 * kPi);
  int resolved_plain = 0, resolved_fb = 0;
  for (int seed = 0; seed < 20; ++seed) {
    Vec3 d1, d2;
    do {
      d1 = random_unit(rng);
      d2 = tilt(d1, deg2rad(15), rng);
    } while (!in_sector(d1, deg2rad(5)) || !in_sector(d2, deg2rad(5)));
    const ArrayAngles t1 = angles_from_direction(d1), t2 = angles_from_direction(d2);
    CellManifolds cell;
    cell.slots = {steering_matrix(a, lambda, t1.theta, t1.phi) +
                  std::polar(1.0, phase(rng)) * steering_matrix(a, lambda, t2.theta, t2.phi)};
    auto resolved = [&](const DoaConfig& cfg) {
      const auto det = estimate_angles(cell, a, lambda, cfg);
      auto found = [&](const Vec3& d) {
        return std::any_of(det.begin(), det.end(),
                           [&](const AngleDetection& x) { return angle_deg(direction_from_angles(x.angles), d) <= 1.0; });
      };
      return found(d1) && found(d2);
    };
    resolved_plain += resolved(plain);
    resolved_fb += resolved(smoothed);
  }
  return {resolved_plain == 0 && resolved_fb == 20,
          fmt("resolved without smoothing %d/20, with forward-backward smoothing (subarray 8) %d/20", resolved_plain,
              resolved_fb)};
}

// --------------------------------------------------------------------- CFAR

Outcome cfar_calibration() {
  const OfdmParams p = build_params(default_ofdm_config(Period::DL), Period::DL);
  std::vector<Eigen::MatrixXd> maps;
  long cuts = 0;
  while (cuts < 1000000) {
    MatrixXcf slice = MatrixXcf::Zero(p.num_subcarriers, p.num_symbols);
    add_element_noise(slice, 1.0, 4242, 0, static_cast<int>(maps.size()));
    maps.push_back(compute_rdm(slice, p).power.cast<double>());
    cuts += maps.back().size();
  }
  bool ok = true;
  std::string detail = fmt("%ld CUTs;", cuts);
  for (double pfa : {1e-4, 1e-3}) {
    for (auto variant : {CfarVariant::OSCA2D, CfarVariant::CA2D}) {
      CfarConfig cfg;
      cfg.p_fa = pfa;
      cfg.variant = variant;
      long hits = 0;
      for (const auto& m : maps)
        hits += (variant == CfarVariant::OSCA2D ? osca_cfar_2d(m, cfg) : ca_cfar_2d(m, cfg)).hits.count();
      const double rate = static_cast<double>(hits) / static_cast<double>(cuts);
      ok = ok && rate >= pfa / 3 && rate <= pfa * 3;
      detail += fmt(" %s p_fa=%.0e -> %.3g;", variant == CfarVariant::OSCA2D ? "OSCA" : "CA", pfa, rate);
    }
  }
  detail.pop_back();
  return {ok, detail};
}

// ------------------------------------------------------------------- mirror

struct Bounce {
  Vec3 bs, ue, scatterer, image;
};

Bounce random_bounce(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  for (;;) {
    const double a = 2 * kPi * u(rng);
    const Vec3 n(std::cos(a), std::sin(a), 0.0);
    const Vec3 t(-n.y(), n.x(), 0.0);
    const Vec3 wall(100 * u(rng), 100 * u(rng), 0.0);
    Bounce b;
    b.bs = wall + (5 + 45 * u(rng)) * n + (-40 + 80 * u(rng)) * t + Vec3(0, 0, 20 + 8 * u(rng));
    b.ue = wall + (2 + 38 * u(rng)) * n + (-40 + 80 * u(rng)) * t + Vec3(0, 0, 1.5);
    b.image = mirror_point(b.ue, wall, n);
    const double s = n.dot(wall - b.bs) / n.dot(b.image - b.bs);
    b.scatterer = b.bs + s * (b.image - b.bs);
    if (b.scatterer.z() > 0.5 && b.scatterer.z() < 30.0) return b;
  }
}

Outcome mirror_geometry() {
  std::mt19937_64 rng(2024);
  const double bin = range_bin_m(build_params(default_ofdm_config(Period::DL), Period::DL));
  double worst_clean = 0.0;
  int within = 0;
  std::vector<double> errs;
  for (int i = 0; i < 1000; ++i) {
    const Bounce b = random_bounce(rng);
    Detection4D d;
    d.direction = (b.scatterer - b.bs).normalized();
    d.range_m = (b.scatterer - b.bs).norm() + (b.ue - b.scatterer).norm();
    const Vec3 clean = resolve_mirror({b.bs, b.ue, vue_position(d, Pose{b.bs, Vec3::Zero()})});
    worst_clean = std::max(worst_clean, (clean - b.scatterer).norm());

    Detection4D noisy = d;
    noisy.direction = tilt(d.direction, deg2rad(0.5), rng);
    noisy.range_m += (rng() & 1 ? 1.0 : -1.0) * bin;
    const double err = (resolve_mirror({b.bs, b.ue, vue_position(noisy, Pose{b.bs, Vec3::Zero()})}) - b.scatterer).norm();
    errs.push_back(err);
    within += err <= 0.5;
  }
  std::nth_element(errs.begin(), errs.begin() + 899, errs.end());
  return {worst_clean <= 1e-8 && within >= 900,
          fmt("noiseless worst %.2e m; with 0.5 deg + %.3f m path error %d/1000 within 0.5 m (90th pct %.3f m)",
              worst_clean, bin, within, errs[899])};
}

// ------------------------------------------------------------------- fusion

Outcome fusion_property() {
  std::normal_distribution<double> jitter(0.0, 0.05);
  int better = 0, scenes = 0;
  SceneConfig sc;
  for (std::uint64_t seed = 0; scenes < 100; ++seed) {
    const Scene s = generate_scene(sc, 500 + seed);
    const ScattererSet truth = sample_scatterers(s, sc.surface_density, 1.0);
    if (truth.empty()) continue;
    std::mt19937_64 rng(mix_seed(seed, 9));
    std::vector<PointCloud4D> views;
    // Every node reports the whole scene with independent jitter.
    for (const auto& node : s.nodes) {
      PointCloud4D v;
      for (const auto& t : truth) v.add(t.position + Vec3(jitter(rng), jitter(rng), jitter(rng)), t.velocity.norm(), node.id);
      views.push_back(v);
    }
    PointCloud4D all;
    for (const auto& v : views) all.points.insert(all.points.end(), v.points.begin(), v.points.end());
    if (all.empty()) continue;
    const Points gt = positions_of(ground_truth_cloud(truth));
    const double fused = chamfer_distance(gt, positions_of(fuse_data_level(views, 0.5)));
    const double raw = chamfer_distance(gt, positions_of(all));
    better += fused <= raw;
    ++scenes;
  }

  int in_interval = 0;
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    const Vec3 c0(100 * u(rng), 100 * u(rng), 30 * u(rng));
    const Vec3 c1 = c0 + 5.0 * random_unit(rng);
    PointCloud4D cloud;
    for (const Vec3& c : {c0, c1})
      for (int i = 0; i < 200; ++i) cloud.add(c + 0.3 * std::cbrt(u(rng)) * random_unit(rng), 0.0, 0);
    FusionRadiusOptions opts;
    opts.seed = static_cast<std::uint64_t>(trial);
    const double r = select_fusion_radius(cloud, opts).radius;
    in_interval += r >= 0.3 && r < 5.0;
  }
  return {better >= 95 && in_interval == 100,
          fmt("fused CD <= unfused CD in %d/100 scenes (R_c 0.5 m, 0.05 m jitter); two-cluster radius in [0.3, 5) "
              "%d/100",
              better, in_interval)};
}

// ------------------------------------------------------------------ kernels

Outcome kernel_oracles() {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-5, 5);
  auto cloud = [&](int n) {
    Points p;
    for (int i = 0; i < n; ++i) p.push_back({u(rng), u(rng), u(rng)});
    return p;
  };
  int metric_equal = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const Points t = cloud(200), r = cloud(200);
    metric_equal += chamfer_distance(t, r) == chamfer_distance_brute(t, r) && f_score(t, r, 0.8) == f_score_brute(t, r, 0.8);
  }

  double worst_sum = 0.0;
  for (const auto& p : cloud(1000)) {
    const Grid3D g = gridding({p}, 16);
    double s = 0.0;
    for (double v : g.values) s += v;
    worst_sum = std::max(worst_sum, std::abs(s - 1.0));
  }

  const int n = 16;
  Grid3D up(n);
  for (auto& v : up.values) v = u(rng);
  Points pts = cloud(100);
  for (auto& p : pts)
    for (int a = 0; a < 3; ++a)
      if (std::abs(p(a) - std::round(p(a))) < 0.01) p(a) += 0.05;
  auto objective = [&](const Points& q) {
    const Grid3D k = gridding(q, n);
    double s = 0.0;
    for (std::size_t v = 0; v < k.values.size(); ++v) s += up.values[v] * k.values[v];
    return s;
  };
  const Points grad = gridding_gradient(pts, n, up);
  double worst_grad = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (int a = 0; a < 3; ++a) {
      Points hi = pts, lo = pts;
      hi[i](a) += 1e-5;
      lo[i](a) -= 1e-5;
      const double fd = (objective(hi) - objective(lo)) / 2e-5;
      worst_grad = std::max(worst_grad, std::abs(fd - grad[i](a)) / std::max(std::abs(fd), 1e-3));
    }

  const Points same = cloud(300);
  const double loss = gridding_loss(same, same, 16);
  return {metric_equal == 20 && worst_sum < 1e-12 && worst_grad < 1e-4 && loss == 0.0,
          fmt("metrics equal brute force %d/20; weight-sum error %.1e; gradient rel. error %.1e; identical loss %g",
              metric_equal, worst_sum, worst_grad, loss)};
}

// --------------------------------------------------------------- end to end

Scene three_box_scene() {
  Scene s;
  s.world = Vec3(60, 60, 20);
  s.seed = 3;
  auto box = [](Vec3 lo, Vec3 size) {
    WorldBox b;
    b.min_corner = lo;
    b.size = size;
    return b;
  };
  s.boxes = {box({28, 6, 0}, {10, 12, 9}), box({34, 25, 0}, {8, 10, 6}), box({26, 42, 0}, {12, 10, 10})};
  SensingNode bs;
  bs.id = 0;
  bs.position = Vec3(4, 30, 14);
  bs.orientation = bs_orientation_for_yaw(0.0);
  SensingNode ue1;
  ue1.id = 1;
  ue1.kind = NodeKind::UE;
  ue1.position = Vec3(20, 20, 1.5);
  SensingNode ue2 = ue1;
  ue2.id = 2;
  ue2.position = Vec3(19, 39, 1.5);
  s.nodes = {bs, ue1, ue2};
  return s;
}

double scene_f_score(const Scene& s, const RunConfig& cfg, std::size_t* points = nullptr) {
  const SceneReconstruction r = reconstruct_scene(s, cfg);
  if (points) *points = r.fused.size();
  const Points gt = positions_of(ground_truth_cloud(r.scatterers));
  if (r.fused.empty() || gt.empty()) return 0.0;
  return evaluate(positions_of(r.fused), gt, 0.01).f_score;
}

Outcome end_to_end() {
  const RunConfig cfg = load_run_config(ISAC_CONFIG_DIR "/e2e.json");
  std::size_t points = 0;
  const double fixed = scene_f_score(three_box_scene(), cfg, &points);
  std::vector<double> f;
  for (std::uint64_t seed = 0; seed < 10; ++seed) f.push_back(scene_f_score(generate_scene(cfg.scene, 100 + seed), cfg));
  std::sort(f.begin(), f.end());
  const double median = 0.5 * (f[4] + f[5]);
  return {fixed >= 0.3 && median >= 0.3,
          fmt("3-box scene F-Score@1%% %.3f (%zu fused points); random scenes median %.3f (min %.3f, max %.3f)", fixed,
              points, median, f.front(), f.back())};
}

// -------------------------------------------------------------- determinism

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "isac_acceptance_determinism";
  fs::remove_all(root);
  for (const char* run : {"a", "b"}) {
    const std::string cmd = std::string("\"") + ISAC_CLI + "\" --config \"" + ISAC_CONFIG_DIR +
                            "/desk.json\" generate --scenes 5 --seed 1 --out \"" + (root / run).string() +
                            "\" > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    if (rc != 0 && !(WIFEXITED(rc) && WEXITSTATUS(rc) == 2)) return {false, fmt("generate exited with status %d", rc)};
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root / "a"))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), root / "a"));
  int same = 0;
  for (const auto& f : files) same += fs::exists(root / "b" / f) && slurp(root / "a" / f) == slurp(root / "b" / f);
  int in_b = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "b")) in_b += e.is_regular_file();
  fs::remove_all(root);
  return {!files.empty() && same == static_cast<int>(files.size()) && in_b == static_cast<int>(files.size()),
          fmt("%d/%zu files byte-identical across two runs", same, files.size())};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"range-accuracy", range_accuracy},
      {"velocity-accuracy", velocity_accuracy},
      {"doa-accuracy", doa_accuracy},
      {"coherent-resolution", coherent_resolution},
      {"cfar-calibration", cfar_calibration},
      {"mirror-geometry", mirror_geometry},
      {"fusion-property", fusion_property},
      {"kernel-oracles", kernel_oracles},
      {"end-to-end", end_to_end},
      {"determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    if (argc > 1 && std::none_of(argv + 1, argv + argc, [&](const char* a) { return name == a; })) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %-20s %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
