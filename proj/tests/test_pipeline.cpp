#include <doctest.h>

#include <filesystem>

#include <json.hpp>

#include "isac/dataset.hpp"
#include "isac/io.hpp"

using namespace isac;
namespace fs = std::filesystem;

namespace {

RunConfig desk() { return load_run_config(ISAC_CONFIG_DIR "/desk.json"); }

Scene street() {
  Scene s;
  s.world = Vec3(60, 60, 20);
  s.seed = 9;
  WorldBox a;
  a.min_corner = Vec3(30, 8, 0);
  a.size = Vec3(8, 12, 8);
  WorldBox b;
  b.min_corner = Vec3(30, 34, 0);
  b.size = Vec3(10, 10, 6);
  s.boxes = {a, b};
  SensingNode bs;
  bs.id = 0;
  bs.position = Vec3(6, 27, 14);
  bs.orientation = bs_orientation_for_yaw(0.0);
  SensingNode ue;
  ue.id = 1;
  ue.kind = NodeKind::UE;
  ue.position = Vec3(22, 24, 1.5);
  SensingNode uav;
  uav.id = 2;
  uav.kind = NodeKind::UAV;
  uav.position = Vec3(20, 40, 15);
  s.nodes = {bs, ue, uav};
  return s;
}

double fraction_near(const PointCloud4D& cloud, const ScattererSet& truth, double tol) {
  if (cloud.empty()) return 0.0;
  int near = 0;
  for (const auto& p : cloud.points) {
    double best = 1e300;
    for (const auto& s : truth) best = std::min(best, (p.position - s.position).norm());
    near += best <= tol;
  }
  return static_cast<double>(near) / static_cast<double>(cloud.size());
}

}  // namespace

TEST_CASE("split counts") {
  const SplitConfig paper;
  CHECK(split_counts(10200, paper) == std::array<int, 3>{10000, 100, 100});
  CHECK(split_counts(10, {8, 1, 1}) == std::array<int, 3>{8, 1, 1});
  CHECK(split_counts(5, {8, 1, 1}) == std::array<int, 3>{4, 1, 0});
  CHECK(split_counts(0, paper) == std::array<int, 3>{0, 0, 0});
  for (int n = 0; n < 300; n += 7) {
    const auto c = split_counts(n, {3, 2, 1});
    CHECK(c[0] + c[1] + c[2] == n);
  }
  CHECK_THROWS_AS(split_counts(3, {0, 0, 0}), Error);
  CHECK(std::string(split_name(2)) == "test");
}

TEST_CASE("sensing arrays per period") {
  const RunConfig c = desk();
  const double lambda = 3e8 / 70e9;
  const ArraySpec dl = sensing_array(c.dl, lambda, Period::DL);
  CHECK(dl.rows == 16);
  CHECK(dl.cols == 16);
  CHECK(dl.spacing_m == doctest::Approx(lambda / 2));
  const ArraySpec ul = sensing_array(c.ul, lambda, Period::UL);
  CHECK(ul.rows == 8);
  CHECK(ul.cols == 8);
}

TEST_CASE("explicit paths through range-Doppler processing") {
  const RunConfig c = desk();
  const OfdmParams p = build_params(c.dl.ofdm, Period::DL);
  const ArraySpec a = sensing_array(c.dl, p.wavelength_m(), Period::DL);
  PathParams path;
  path.delay_s = 2 * 40.0 / kSpeedOfLight;
  path.doppler_hz = 2 * 5.0 / p.wavelength_m();
  path.aoa = {deg2rad(50), deg2rad(75)};
  path.attenuation = 1.0;
  const RdProcessing r = process_paths({path}, p, a, c.dl.rdm_cfar, 0.1, 3, 16);
  REQUIRE(!r.cells.empty());
  const RdCell& best = r.cells.front().cell;
  CHECK(std::abs(best.range_m - 40.0) <= range_bin_m(p));
  CHECK(std::abs(best.velocity_mps - 5.0) <= velocity_bin_mps(p));
  CHECK(r.cells.front().slots.size() == static_cast<std::size_t>(c.dl.ofdm.n_slots));
  CHECK(r.power.rows() == c.dl.ofdm.n_subcarriers);
  CHECK(r.threshold.cols() == c.dl.ofdm.n_symbols);
}

TEST_CASE("downlink and uplink sensing on a fixed street") {
  const RunConfig c = desk();
  const Scene s = street();
  const ScattererSet truth = sample_scatterers(s, 0.2, 1.0);
  REQUIRE(truth.size() > 20);

  const SenseResult dl = sense(s, truth, c, 0, Period::DL);
  CHECK(dl.paths > 0);
  CHECK(dl.cloud.size() > 5);
  CHECK(fraction_near(dl.cloud, truth, 1.0) >= 0.6);
  for (const auto& p : dl.cloud.points) CHECK(p.node_id == 0);

  const SenseResult ul = sense(s, truth, c, 1, Period::UL);
  CHECK(ul.rx_id == 0);
  CHECK(ul.tx_id == 1);
  REQUIRE(ul.ue_estimate);
  CHECK((*ul.ue_estimate - s.node(1).position).norm() < 2.0);
  for (const auto& p : ul.cloud.points) CHECK(p.node_id == 1);

  CHECK_THROWS_AS(sense(s, truth, c, 2, Period::DL), Error);
  CHECK_THROWS_AS(sense(s, truth, c, 1, Period::DL), Error);
  CHECK_THROWS_AS(sense(s, truth, c, 7, Period::DL), Error);
}

TEST_CASE("sensing is deterministic") {
  const RunConfig c = desk();
  const Scene s = street();
  const ScattererSet truth = sample_scatterers(s, 0.2, 1.0);
  CHECK(format_pc4d(sense(s, truth, c, 0, Period::DL).cloud) == format_pc4d(sense(s, truth, c, 0, Period::DL).cloud));
}

TEST_CASE("dataset layout") {
  RunConfig c = desk();
  c.dl.ofdm.n_subcarriers = 256;
  c.ul.ofdm.n_subcarriers = 256;
  c.scene.n_ue = 1;
  const fs::path out = fs::temp_directory_path() / "isac_test_dataset";
  fs::remove_all(out);
  const DatasetSummary sum = generate_dataset(c, 3, 5, out.string());
  CHECK(sum.scenes == 3);
  CHECK(sum.splits[0] + sum.splits[1] + sum.splits[2] == 3);

  const auto m = nlohmann::json::parse(read_file((out / "manifest.json").string()));
  CHECK(m.at("format") == "isac-recon-dataset v1");
  REQUIRE(m.at("entries").size() == 3);
  for (int i = 0; i < 3; ++i) {
    const auto& e = m.at("entries")[static_cast<std::size_t>(i)];
    CHECK(e.at("seed") == 5 + i);
    CHECK(fs::exists(out / e.at("scene_file").get<std::string>()));
    const PointCloud4D partial = load_pc4d((out / e.at("partial").get<std::string>()).string());
    const PointCloud4D complete = load_pc4d((out / e.at("complete").get<std::string>()).string());
    CHECK(partial.size() == e.at("partial_count").get<std::size_t>());
    CHECK(complete.size() == e.at("complete_count").get<std::size_t>());
    for (const auto& v : e.at("views")) CHECK(fs::exists(out / v.at("path").get<std::string>()));
    const Scene s = load_scene((out / e.at("scene_file").get<std::string>()).string());
    CHECK(s == generate_scene(c.scene, 5 + static_cast<std::uint64_t>(i)));
  }
  CHECK(parse_run_config(m.at("config").dump()).dl.ofdm.n_subcarriers == 256);
  fs::remove_all(out);
}
