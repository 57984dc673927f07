#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "isac/geometry.hpp"
#include "isac/pipeline.hpp"
#include "isac/scene.hpp"

namespace isac {

/// Scene counts per split (train, val, test) by largest remainder.
std::array<int, 3> split_counts(int total, const SplitConfig& weights);

/// Ground-truth scatterers as a cloud; velocity is the speed, node id -1.
PointCloud4D ground_truth_cloud(const ScattererSet& scatterers);

struct NodeView {
  int node_id = 0;
  Period period = Period::DL;
  PointCloud4D cloud;
};

struct SceneReconstruction {
  ScattererSet scatterers;
  std::vector<NodeView> views;
  PointCloud4D fused;
  double fusion_radius = 0.0;
  bool radius_fallback = false;  ///< automatic selection found no plateau
};

/// DL sensing at every BS, UL sensing for every UE/UAV, then data-level
/// fusion of all views.
SceneReconstruction reconstruct_scene(const Scene& scene, const RunConfig& cfg);

/// Fusion radius from the config, or the automatic choice over the union of
/// the views. Without a plateau the DL range bin is used and `fallback` set.
double choose_fusion_radius(const std::vector<PointCloud4D>& clouds, const RunConfig& cfg, bool* fallback);

struct DatasetSummary {
  int scenes = 0;
  std::array<int, 3> splits{};
  int warnings = 0;  ///< scenes with an empty partial or complete cloud, or a radius fallback
  std::vector<std::string> messages;
};

/// Writes scenes, views, fused partial clouds, ground truth and manifest.json
/// under out_dir. Scene i uses seed + i.
DatasetSummary generate_dataset(const RunConfig& cfg, int n_scenes, std::uint64_t seed, const std::string& out_dir);

const char* split_name(int split);

}  // namespace isac
