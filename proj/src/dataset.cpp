#include "isac/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include <json.hpp>

#include "isac/io.hpp"
#include "isac/parallel.hpp"

using nlohmann::json;

namespace isac {

const char* split_name(int split) {
  static const char* names[] = {"train", "val", "test"};
  require(split >= 0 && split < 3, "split index out of range");
  return names[split];
}

std::array<int, 3> split_counts(int total, const SplitConfig& w) {
  require(total >= 0, "scene count must be non-negative");
  const std::array<double, 3> weights{w.train, w.val, w.test};
  const double sum = weights[0] + weights[1] + weights[2];
  require(sum > 0.0, "split weights must have a positive sum");
  std::array<int, 3> counts{};
  std::array<double, 3> rem{};
  int assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = total * weights[static_cast<std::size_t>(i)] / sum;
    counts[static_cast<std::size_t>(i)] = static_cast<int>(std::floor(exact));
    rem[static_cast<std::size_t>(i)] = exact - counts[static_cast<std::size_t>(i)];
    assigned += counts[static_cast<std::size_t>(i)];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rem[static_cast<std::size_t>(a)] > rem[static_cast<std::size_t>(b)]; });
  for (int k = 0; assigned < total; ++k, ++assigned) ++counts[static_cast<std::size_t>(order[static_cast<std::size_t>(k % 3)])];
  return counts;
}

PointCloud4D ground_truth_cloud(const ScattererSet& scatterers) {
  PointCloud4D c;
  for (const auto& s : scatterers) c.add(s.position, s.velocity.norm(), -1);
  return c;
}

double choose_fusion_radius(const std::vector<PointCloud4D>& clouds, const RunConfig& cfg, bool* fallback) {
  if (fallback) *fallback = false;
  if (cfg.fusion.radius) return *cfg.fusion.radius;
  PointCloud4D all;
  for (const auto& c : clouds) all.points.insert(all.points.end(), c.points.begin(), c.points.end());
  if (all.empty()) return cfg.fusion.auto_opts.dr;
  try {
    return select_fusion_radius(all, cfg.fusion.auto_opts).radius;
  } catch (const PlateauError&) {
    if (fallback) *fallback = true;
    return range_bin_m(build_params(cfg.dl.ofdm, Period::DL));
  }
}

SceneReconstruction reconstruct_scene(const Scene& scene, const RunConfig& cfg) {
  SceneReconstruction r;
  r.scatterers = sample_scatterers(scene, cfg.scene.surface_density, cfg.scene.reflect_var);
  const bool has_bs = std::any_of(scene.nodes.begin(), scene.nodes.end(),
                                  [](const SensingNode& n) { return n.kind == NodeKind::BS; });
  for (const auto& n : scene.nodes) {
    if (n.kind == NodeKind::BS) {
      r.views.push_back({n.id, Period::DL, sense(scene, r.scatterers, cfg, n.id, Period::DL).cloud});
    } else if (has_bs) {
      r.views.push_back({n.id, Period::UL, sense(scene, r.scatterers, cfg, n.id, Period::UL).cloud});
    }
  }
  std::vector<PointCloud4D> clouds;
  for (const auto& v : r.views) clouds.push_back(v.cloud);
  r.fusion_radius = choose_fusion_radius(clouds, cfg, &r.radius_fallback);
  r.fused = fuse_data_level(clouds, r.fusion_radius);
  return r;
}

namespace {

std::string scene_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%05d", index);
  return buf;
}

}  // namespace

DatasetSummary generate_dataset(const RunConfig& cfg, int n_scenes, std::uint64_t seed, const std::string& out_dir) {
  require(n_scenes >= 0, "scene count must be non-negative");
  cfg.validate();
  DatasetSummary summary;
  summary.scenes = n_scenes;
  summary.splits = split_counts(n_scenes, cfg.splits);

  std::vector<int> split_of(static_cast<std::size_t>(n_scenes));
  for (int i = 0, s = 0, used = 0; i < n_scenes; ++i) {
    while (used >= summary.splits[static_cast<std::size_t>(s)]) {
      ++s;
      used = 0;
    }
    split_of[static_cast<std::size_t>(i)] = s;
    ++used;
  }

  std::vector<json> entries(static_cast<std::size_t>(n_scenes));
  std::vector<std::string> issues(static_cast<std::size_t>(n_scenes));
  const std::filesystem::path root(out_dir);
  parallel_for(n_scenes, [&](int i) {
    const std::string name = scene_name(i);
    const std::string split = split_name(split_of[static_cast<std::size_t>(i)]);
    const std::uint64_t scene_seed = seed + static_cast<std::uint64_t>(i);
    const Scene scene = generate_scene(cfg.scene, scene_seed);
    const SceneReconstruction rec = reconstruct_scene(scene, cfg);
    const PointCloud4D complete = ground_truth_cloud(rec.scatterers);

    const std::string scene_rel = split + "/scenes/" + name + ".json";
    const std::string partial_rel = split + "/partial/" + name + "/cloud.pc4d";
    const std::string complete_rel = split + "/complete/" + name + "/cloud.pc4d";
    save_scene((root / scene_rel).string(), scene);
    save_pc4d((root / partial_rel).string(), rec.fused);
    save_pc4d((root / complete_rel).string(), complete);
    json views = json::array();
    for (const auto& v : rec.views) {
      const std::string rel =
          split + "/views/" + name + "/" + std::to_string(v.node_id) + "-" + to_string(v.period) + ".pc4d";
      save_pc4d((root / rel).string(), v.cloud);
      views.push_back({{"node", v.node_id}, {"period", to_string(v.period)}, {"path", rel}, {"count", v.cloud.size()}});
    }
    entries[static_cast<std::size_t>(i)] = {{"scene", name},
                                            {"seed", scene_seed},
                                            {"split", split},
                                            {"scene_file", scene_rel},
                                            {"partial", partial_rel},
                                            {"complete", complete_rel},
                                            {"views", views},
                                            {"fusion_radius", rec.fusion_radius},
                                            {"partial_count", rec.fused.size()},
                                            {"complete_count", complete.size()}};
    std::string issue;
    if (complete.empty()) issue += " empty ground truth;";
    if (rec.fused.empty()) issue += " empty partial cloud;";
    if (rec.radius_fallback) issue += " no fusion-radius plateau, used the range bin;";
    if (!issue.empty()) issues[static_cast<std::size_t>(i)] = name + ":" + issue;
  });

  for (const auto& m : issues)
    if (!m.empty()) {
      ++summary.warnings;
      summary.messages.push_back(m);
    }
  json manifest = {{"format", "isac-recon-dataset v1"},
                   {"seed", seed},
                   {"scenes", n_scenes},
                   {"splits", {{"train", summary.splits[0]}, {"val", summary.splits[1]}, {"test", summary.splits[2]}}},
                   {"config", json::parse(run_config_to_json(cfg))},
                   {"entries", entries}};
  write_file_atomic((root / "manifest.json").string(), manifest.dump(2) + "\n");
  return summary;
}

}  // namespace isac
