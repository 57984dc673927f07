#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "isac/dataset.hpp"
#include "isac/io.hpp"
#include "isac/pipeline.hpp"
#include "isac/pointcloud.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace isac;

namespace {

constexpr int kOk = 0;
constexpr int kError = 1;
constexpr int kWarning = 2;

RunConfig config_from(const std::string& path) { return path.empty() ? default_run_config() : load_run_config(path); }

Period parse_period(const std::string& s) {
  if (s == "dl") return Period::DL;
  if (s == "ul") return Period::UL;
  throw Error("period must be dl or ul, got '" + s + "'");
}

std::vector<fs::path> clouds_in(const std::string& dir) {
  require(fs::is_directory(dir), "not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".pc4d") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

int run_generate(const std::string& config, int scenes, std::uint64_t seed, const std::string& out) {
  const RunConfig cfg = config_from(config);
  const DatasetSummary s = generate_dataset(cfg, scenes, seed, out);
  std::printf("scenes=%d train=%d val=%d test=%d warnings=%d\n", s.scenes, s.splits[0], s.splits[1], s.splits[2],
              s.warnings);
  for (const auto& m : s.messages) std::fprintf(stderr, "warning: %s\n", m.c_str());
  return s.warnings > 0 ? kWarning : kOk;
}

int run_sense(const std::string& config, const std::string& scene_path, int node, const std::string& period,
              const std::string& out, const std::string& dump_dir) {
  const RunConfig cfg = config_from(config);
  const Scene scene = load_scene(scene_path);
  const ScattererSet scatterers = sample_scatterers(scene, cfg.scene.surface_density, cfg.scene.reflect_var);
  const SenseResult r = sense(scene, scatterers, cfg, node, parse_period(period));
  save_pc4d(out, r.cloud);
  if (!dump_dir.empty()) {
    const fs::path dir(dump_dir);
    save_matrix_f32((dir / "power.f32").string(), r.power);
    save_matrix_f32((dir / "threshold.f32").string(), r.threshold);
    const PeriodConfig& pc = r.period == Period::DL ? cfg.dl : cfg.ul;
    json cells = json::array();
    for (std::size_t k = 0; k < r.cells.size(); ++k) {
      const RdCell& c = r.cells[k];
      json entry = {{"alpha", c.alpha}, {"beta", c.beta}, {"range_m", c.range_m}, {"velocity_mps", c.velocity_mps}};
      if (r.array.size() > 1) {
        const PseudoSpectrum2D sp = angle_spectrum(r.manifolds[k], r.array, r.wavelength, pc.doa);
        const std::string file = "spectrum-" + std::to_string(k) + ".f32";
        save_matrix_f32((dir / file).string(), sp.values);
        entry["spectrum"] = file;
      }
      cells.push_back(entry);
    }
    json dets = json::array();
    for (const auto& d : r.detections)
      dets.push_back({{"range_m", d.range_m},
                      {"velocity_mps", d.velocity_mps},
                      {"theta_deg", rad2deg(d.aoa.theta)},
                      {"phi_deg", rad2deg(d.aoa.phi)},
                      {"power", d.power}});
    json manifest = {{"period", period},
                     {"rx", r.rx_id},
                     {"tx", r.tx_id},
                     {"paths", r.paths},
                     {"noise_var", r.noise_var},
                     {"power", "power.f32"},
                     {"threshold", "threshold.f32"},
                     {"spectrum_grid_deg", {{"theta", {pc.doa.grid_step_deg, 90.0}}, {"phi", {pc.doa.grid_step_deg, 180.0 - pc.doa.grid_step_deg}}, {"step", pc.doa.grid_step_deg}}},
                     {"cells", cells},
                     {"detections", dets}};
    if (r.ue_estimate) manifest["ue_estimate"] = {r.ue_estimate->x(), r.ue_estimate->y(), r.ue_estimate->z()};
    write_file_atomic((dir / "plots.json").string(), manifest.dump(2) + "\n");
  }
  std::printf("paths=%zu cells=%zu detections=%zu points=%zu\n", r.paths, r.cells.size(), r.detections.size(),
              r.cloud.size());
  return r.cloud.empty() ? kWarning : kOk;
}

int run_fuse(const std::string& config, const std::string& in, const std::string& radius, const std::string& out) {
  std::vector<PointCloud4D> clouds;
  for (const auto& f : clouds_in(in)) clouds.push_back(load_pc4d(f.string()));
  require(!clouds.empty(), "no .pc4d files in " + in);
  RunConfig cfg = config_from(config);
  double r = 0.0;
  if (radius == "auto") {
    PointCloud4D all;
    for (const auto& c : clouds) all.points.insert(all.points.end(), c.points.begin(), c.points.end());
    try {
      r = select_fusion_radius(all, cfg.fusion.auto_opts).radius;
    } catch (const PlateauError& e) {
      std::fprintf(stderr, "error: %s\nh:", e.what());
      for (double h : e.curve()) std::fprintf(stderr, " %.6g", h);
      std::fprintf(stderr, "\n");
      return kError;
    }
  } else {
    try {
      std::size_t used = 0;
      r = std::stod(radius, &used);
      require(used == radius.size(), "");
    } catch (...) {
      throw Error("radius must be 'auto' or a number, got '" + radius + "'");
    }
  }
  std::size_t total = 0;
  for (const auto& c : clouds) total += c.size();
  const PointCloud4D fused = fuse_data_level(clouds, r);
  save_pc4d(out, fused);
  std::printf("inputs=%zu points_in=%zu points_out=%zu radius=%.9g\n", clouds.size(), total, fused.size(), r);
  return kOk;
}

int run_metrics(const std::string& pred_path, const std::string& gt_path, double d_frac, bool brute) {
  const Points pred = positions_of(load_pc4d(pred_path));
  const Points gt = positions_of(load_pc4d(gt_path));
  require(!pred.empty() && !gt.empty(), "metrics need two non-empty clouds");
  const MetricReport m = evaluate(pred, gt, d_frac);
  std::printf("chamfer=%.9g\nf_score=%.9g\nthreshold=%.9g\n", m.chamfer, m.f_score, m.threshold);
  if (brute) {
    const double cd = chamfer_distance_brute(gt, pred);
    const double f = f_score_brute(gt, pred, m.threshold);
    const bool same = cd == m.chamfer && f == m.f_score;
    std::printf("brute_chamfer=%.9g\nbrute_f_score=%.9g\nbrute_check=%s\n", cd, f, same ? "equal" : "MISMATCH");
    if (!same) return kError;
  }
  return kOk;
}

int run_export(const std::string& dataset, const std::string& format, int grid_n, const std::string& out) {
  require(format == "ply" || format == "grid", "format must be ply or grid");
  const json manifest = json::parse(read_file((fs::path(dataset) / "manifest.json").string()));
  int exported = 0;
  for (const auto& e : manifest.at("entries")) {
    const std::string split = e.at("split").get<std::string>();
    const std::string name = e.at("scene").get<std::string>();
    const PointCloud4D partial = load_pc4d((fs::path(dataset) / e.at("partial").get<std::string>()).string());
    const PointCloud4D complete = load_pc4d((fs::path(dataset) / e.at("complete").get<std::string>()).string());
    const fs::path base = fs::path(out) / split;
    if (format == "ply") {
      write_file_atomic((base / "partial" / (name + ".ply")).string(), format_ply(partial));
      write_file_atomic((base / "complete" / (name + ".ply")).string(), format_ply(complete));
    } else {
      if (complete.empty()) continue;
      const GridFrame frame = fit_frame(positions_of(complete), grid_n);
      auto inside = [&](const Points& pts) {
        Points kept;
        const double lo = -grid_n / 2.0, hi = grid_n / 2.0 - 1.0;
        for (const auto& p : frame.to_grid(pts))
          if ((p.array() > lo).all() && (p.array() < hi).all()) kept.push_back(p);
        return kept;
      };
      save_grid((base / "partial" / (name + ".grid")).string(), gridding(inside(positions_of(partial)), grid_n));
      save_grid((base / "complete" / (name + ".grid")).string(), gridding(inside(positions_of(complete)), grid_n));
    }
    ++exported;
  }
  std::printf("exported=%d format=%s\n", exported, format.c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-node ISAC 4D environment reconstruction"};
  app.require_subcommand(1);
  std::string config;
  app.add_option("--config", config, "Run configuration (JSON)")->check(CLI::ExistingFile);

  int scenes = 1;
  std::uint64_t seed = 1;
  std::string out;
  auto* gen = app.add_subcommand("generate", "Generate scenes, per-node clouds and the fused dataset");
  gen->add_option("--scenes", scenes, "Number of scenes")->check(CLI::NonNegativeNumber);
  gen->add_option("--seed", seed, "Base seed; scene i uses seed + i");
  gen->add_option("--out", out, "Output directory")->required();

  std::string scene_path, period = "dl", dump_dir;
  int node = 0;
  auto* sen = app.add_subcommand("sense", "Sense one node and write its world-frame cloud");
  sen->add_option("--scene", scene_path, "Scene file")->required()->check(CLI::ExistingFile);
  sen->add_option("--node", node, "Node id")->required();
  sen->add_option("--period", period, "dl or ul")->check(CLI::IsMember({"dl", "ul"}));
  sen->add_option("--out", out, "Output .pc4d")->required();
  sen->add_option("--dump-dir", dump_dir, "Write RDM power, threshold and detections for plotting");

  std::string in, radius = "auto";
  auto* fus = app.add_subcommand("fuse", "Fuse every .pc4d cloud in a directory");
  fus->add_option("--in", in, "Directory of world-frame clouds")->required();
  fus->add_option("--radius", radius, "auto or a radius in metres");
  fus->add_option("--out", out, "Output .pc4d")->required();

  std::string pred, gt;
  double d_frac = 0.01;
  bool brute = false;
  auto* met = app.add_subcommand("metrics", "Chamfer distance and F-score of a prediction");
  met->add_option("--pred", pred, "Predicted cloud")->required()->check(CLI::ExistingFile);
  met->add_option("--gt", gt, "Ground-truth cloud")->required()->check(CLI::ExistingFile);
  met->add_option("--d-frac", d_frac, "F-score threshold as a fraction of the ground-truth bbox diagonal");
  met->add_flag("--brute-check", brute, "Recompute by exhaustive search and compare");

  std::string dataset, format = "ply";
  int grid_n = 64;
  auto* exp = app.add_subcommand("export", "Convert a generated dataset to PLY clouds or gridded volumes");
  exp->add_option("--dataset", dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  exp->add_option("--format", format, "ply or grid")->check(CLI::IsMember({"ply", "grid"}));
  exp->add_option("--grid-size", grid_n, "Grid resolution N")->check(CLI::Range(4, 512));
  exp->add_option("--out", out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return run_generate(config, scenes, seed, out);
    if (*sen) return run_sense(config, scene_path, node, period, out, dump_dir);
    if (*fus) return run_fuse(config, in, radius, out);
    if (*met) return run_metrics(pred, gt, d_frac, brute);
    if (*exp) return run_export(dataset, format, grid_n, out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kError;
  }
  return kError;
}
